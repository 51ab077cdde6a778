//! Measure, extrapolate and rank the electricity cost of machine-learning
//! training runs.
//!
//! Runs are compared with the sustainable-accuracy score
//! `beta * accuracy^alpha / log10(kWh)` (alpha = beta = 5 by default).
//! Energy comes from integrating sampled power traces, and short probe runs
//! are scaled linearly to full-run cost before scoring.

pub mod cli;
pub mod energy;
pub mod format;
pub mod metric;
pub mod pipeline;
pub mod report;
pub mod scaling;
pub mod store;
pub mod telemetry;

pub use energy::{integrate_trace, to_kwh, validate_trace, EnergyKwh, EnergyTrace, PowerSample};
pub use metric::{rank, sam, sam_sweep, SamParams, SamScore};
pub use store::RunRecord;

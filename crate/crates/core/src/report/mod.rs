//! Leaderboards, Pareto frontiers, appliance equivalences and plot-ready
//! series built from scored runs.

mod appliance;
mod pareto;
mod render;

use thiserror::Error;

use crate::metric::MetricError;

pub use appliance::{appliance_equiv, load_appliances, read_appliances, ApplianceProfile, Equivalence};
pub use pareto::{frontier_indices, pareto_frontier, ParetoPoint};
pub use render::{build_report, render_report, EntryDoc, GroupDoc, ReportDoc, ReportFormat};
pub(crate) use render::text_table;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("run `{0}` needs train energy > 0 kWh for the Pareto plane")]
    NonPositiveEnergy(String),
    #[error("run `{0}` has accuracy outside [0, 1]")]
    BadAccuracy(String),
    #[error("appliance profiles: {0}")]
    Appliance(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

//! Probe run to full-run score: integrate the probe trace, scale it to the
//! target data fraction and epochs, then score the extrapolated energy.

use serde::Serialize;
use thiserror::Error;

use crate::energy::{integrate_trace, EnergyError, EnergyTrace};
use crate::metric::{sam, MetricError, SamParams, SamScore};
use crate::scaling::{proportional_scale, ScaleRequest, ScalingError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("probe trace integrates to 0 kWh; nothing to scale")]
    EmptyProbe,
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error("{source} (probe {probe_kwh} kWh, extrapolated {extrapolated_kwh} kWh)")]
    Metric {
        probe_kwh: f64,
        extrapolated_kwh: f64,
        #[source]
        source: MetricError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineOutcome {
    pub probe_kwh: f64,
    pub extrapolated_kwh: f64,
    pub score: SamScore,
}

pub fn pipeline_probe_to_sam(
    trace: &EnergyTrace,
    baseline_w: Option<f64>,
    scale: &ScaleRequest,
    accuracy: f64,
    params: SamParams,
    run_id: &str,
) -> Result<PipelineOutcome, PipelineError> {
    let probe = integrate_trace(trace, baseline_w)?;
    if probe.value() <= 0.0 {
        return Err(PipelineError::EmptyProbe);
    }
    let full = proportional_scale(probe, scale)?;
    let value = sam(accuracy, full, params).map_err(|source| PipelineError::Metric {
        probe_kwh: probe.value(),
        extrapolated_kwh: full.value(),
        source,
    })?;
    Ok(PipelineOutcome {
        probe_kwh: probe.value(),
        extrapolated_kwh: full.value(),
        score: SamScore {
            run_id: run_id.to_string(),
            value,
            params,
            electricity_used_kwh: full.value(),
        },
    })
}

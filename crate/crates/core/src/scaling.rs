//! Linear energy scaling: fit probe runs, extrapolate to full runs, and
//! share pretraining cost across downstream tasks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::EnergyKwh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalingError {
    #[error("insufficient probes: {0} given, at least 2 are required")]
    InsufficientProbes(usize),
    #[error("degenerate abscissae: every probe has the same x")]
    DegenerateAbscissae,
    #[error("invalid probe at index {index}: x = {x}, energy = {energy} (need x > 0, energy >= 0)")]
    InvalidProbe { index: usize, x: f64, energy: f64 },
    #[error("`{name}` must be {requirement}, got {value}")]
    InvalidArgument {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Epochs,
    DataFraction,
}

impl FromStr for FitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "epochs" => Ok(FitKind::Epochs),
            "fraction" | "data_fraction" | "data-fraction" => Ok(FitKind::DataFraction),
            other => Err(format!("unknown fit kind `{other}` (expected epochs|fraction)")),
        }
    }
}

impl fmt::Display for FitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitKind::Epochs => "epochs",
            FitKind::DataFraction => "fraction",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub x: f64,
    pub energy_kwh: f64,
}

impl ProbePoint {
    pub fn new(x: f64, energy_kwh: f64) -> Self {
        ProbePoint { x, energy_kwh }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub kind: FitKind,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    /// Smallest and largest fitted x; absent for hand-entered coefficients.
    pub x_range: Option<(f64, f64)>,
}

impl LinearFit {
    pub fn from_coefficients(kind: FitKind, slope: f64, intercept: f64) -> Self {
        LinearFit {
            kind,
            slope,
            intercept,
            r_squared: 1.0,
            n_points: 2,
            x_range: None,
        }
    }
}

/// Ordinary least squares on centered data.
///
/// When every energy is identical the fit is a perfect constant and
/// `r_squared` is 1.
pub fn fit_linear(points: &[ProbePoint], kind: FitKind) -> Result<LinearFit, ScalingError> {
    if points.len() < 2 {
        return Err(ScalingError::InsufficientProbes(points.len()));
    }
    for (index, p) in points.iter().enumerate() {
        let ok = p.x.is_finite() && p.x > 0.0 && p.energy_kwh.is_finite() && p.energy_kwh >= 0.0;
        if !ok {
            return Err(ScalingError::InvalidProbe {
                index,
                x: p.x,
                energy: p.energy_kwh,
            });
        }
    }

    let n = points.len() as f64;
    let x_mean = points.iter().map(|p| p.x).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.energy_kwh).sum::<f64>() / n;

    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p.x - x_mean;
        let dy = p.energy_kwh - y_mean;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let x_min = points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let x_max = points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    if x_min == x_max || sxx == 0.0 {
        return Err(ScalingError::DegenerateAbscissae);
    }

    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let r = p.energy_kwh - (slope * p.x + intercept);
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };

    Ok(LinearFit {
        kind,
        slope,
        intercept,
        r_squared,
        n_points: points.len(),
        x_range: Some((x_min, x_max)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub energy: EnergyKwh,
    /// Raw `slope * x + intercept` before clamping at zero.
    pub raw_kwh: f64,
    pub extrapolated: bool,
    pub warning: Option<String>,
}

pub fn predict(fit: &LinearFit, x: f64) -> Result<Prediction, ScalingError> {
    if !(x.is_finite() && x > 0.0) {
        return Err(ScalingError::InvalidArgument {
            name: "x",
            requirement: "finite and > 0",
            value: x,
        });
    }
    let raw = fit.slope * x + fit.intercept;
    if !raw.is_finite() {
        return Err(ScalingError::InvalidArgument {
            name: "prediction",
            requirement: "finite",
            value: raw,
        });
    }
    let extrapolated = fit.x_range.is_some_and(|(lo, hi)| x < lo || x > hi);
    let warning = (raw < 0.0).then(|| {
        format!("negative prediction {raw} kWh clamped to 0; the fit is unreliable at x = {x}")
    });
    Ok(Prediction {
        energy: EnergyKwh::new(raw.max(0.0)).expect("clamped value is non-negative"),
        raw_kwh: raw,
        extrapolated,
        warning,
    })
}

/// Probe-to-target scaling: energy is assumed linear in both data fraction
/// and epochs, and the two factors multiply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRequest {
    pub probe_fraction: f64,
    pub probe_epochs: f64,
    pub target_fraction: f64,
    pub target_epochs: f64,
}

fn check_fraction(name: &'static str, v: f64) -> Result<(), ScalingError> {
    if v.is_finite() && v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(ScalingError::InvalidArgument {
            name,
            requirement: "in (0, 1]",
            value: v,
        })
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<(), ScalingError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ScalingError::InvalidArgument {
            name,
            requirement: "finite and > 0",
            value: v,
        })
    }
}

impl ScaleRequest {
    pub fn validate(&self) -> Result<(), ScalingError> {
        check_fraction("probe_fraction", self.probe_fraction)?;
        check_positive("probe_epochs", self.probe_epochs)?;
        check_fraction("target_fraction", self.target_fraction)?;
        check_positive("target_epochs", self.target_epochs)
    }
}

pub fn proportional_scale(probe_kwh: EnergyKwh, req: &ScaleRequest) -> Result<EnergyKwh, ScalingError> {
    req.validate()?;
    if probe_kwh.value() <= 0.0 {
        return Err(ScalingError::InvalidArgument {
            name: "probe_kwh",
            requirement: "> 0",
            value: probe_kwh.value(),
        });
    }
    let scaled = probe_kwh.value()
        * (req.target_fraction / req.probe_fraction)
        * (req.target_epochs / req.probe_epochs);
    EnergyKwh::new(scaled).map_err(|_| ScalingError::InvalidArgument {
        name: "scaled energy",
        requirement: "finite",
        value: scaled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmortizedCost {
    pub pretrain_share_kwh: f64,
    pub finetune_kwh: f64,
    pub inference_kwh: f64,
    pub total_kwh: f64,
}

pub fn amortize(
    pretrain: EnergyKwh,
    n_downstream_tasks: u32,
    finetune: EnergyKwh,
    inference: EnergyKwh,
) -> Result<AmortizedCost, ScalingError> {
    if n_downstream_tasks == 0 {
        return Err(ScalingError::InvalidArgument {
            name: "n_downstream_tasks",
            requirement: ">= 1",
            value: 0.0,
        });
    }
    let share = pretrain.value() / f64::from(n_downstream_tasks);
    Ok(AmortizedCost {
        pretrain_share_kwh: share,
        finetune_kwh: finetune.value(),
        inference_kwh: inference.value(),
        total_kwh: share + finetune.value() + inference.value(),
    })
}

//! The sustainable-accuracy score and the rankings built on it.
//!
//! `SAM = beta * accuracy^alpha / log10(kWh)`. Higher is better. The score
//! is only defined above 1 kWh, where the logarithm is positive.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::EnergyKwh;
use crate::store::RunRecord;

/// Electricity must exceed `1 + DOMAIN_EPSILON` kWh for the score to exist.
pub const DOMAIN_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric undefined below 1 kWh (got {0} kWh); extrapolate the probe to the full run first")]
    Undefined(f64),
    #[error("accuracy must be a fraction in [0, 1], got {0}")]
    AccuracyOutOfRange(f64),
    #[error("alpha and beta must be finite and > 0 (alpha = {alpha}, beta = {beta})")]
    InvalidParams { alpha: f64, beta: f64 },
    #[error("incomparable runs: {task}/{dataset} mixes batch sizes {batch_sizes:?}; pass force to rank anyway")]
    IncomparableRuns {
        task: String,
        dataset: String,
        batch_sizes: Vec<u32>,
    },
    #[error("run `{run_id}`: {source}")]
    Run {
        run_id: String,
        #[source]
        source: Box<MetricError>,
    },
    #[error("alpha sweep needs at least one alpha value")]
    EmptySweep,
}

impl MetricError {
    /// True when the root cause is the sub-1-kWh domain guard.
    pub fn is_undefined(&self) -> bool {
        match self {
            MetricError::Undefined(_) => true,
            MetricError::Run { source, .. } => source.is_undefined(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for SamParams {
    fn default() -> Self {
        SamParams {
            alpha: 5.0,
            beta: 5.0,
        }
    }
}

impl SamParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, MetricError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(alpha) && ok(beta) {
            Ok(SamParams { alpha, beta })
        } else {
            Err(MetricError::InvalidParams { alpha, beta })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamScore {
    pub run_id: String,
    pub value: f64,
    pub params: SamParams,
    pub electricity_used_kwh: f64,
}

pub fn sam(accuracy: f64, electricity: EnergyKwh, params: SamParams) -> Result<f64, MetricError> {
    let params = SamParams::new(params.alpha, params.beta)?;
    if !(accuracy.is_finite() && (0.0..=1.0).contains(&accuracy)) {
        return Err(MetricError::AccuracyOutOfRange(accuracy));
    }
    let kwh = electricity.value();
    if kwh <= 1.0 + DOMAIN_EPSILON {
        return Err(MetricError::Undefined(kwh));
    }
    Ok(params.beta * accuracy.powf(params.alpha) / kwh.log10())
}

/// Scores a run from its train electricity. Test and pretraining energy do
/// not enter the score.
pub fn score_run(run: &RunRecord, params: SamParams) -> Result<SamScore, MetricError> {
    let wrap = |e: MetricError| MetricError::Run {
        run_id: run.run_id.clone(),
        source: Box::new(e),
    };
    let energy = EnergyKwh::new(run.train_energy_kwh)
        .map_err(|_| wrap(MetricError::Undefined(run.train_energy_kwh)))?;
    let value = sam(run.accuracy, energy, params).map_err(wrap)?;
    Ok(SamScore {
        run_id: run.run_id.clone(),
        value,
        params,
        electricity_used_kwh: energy.value(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ComparabilityKey {
    pub task: String,
    pub dataset: String,
    pub batch_size: u32,
}

impl ComparabilityKey {
    pub fn of(run: &RunRecord) -> Self {
        ComparabilityKey {
            task: run.task.clone(),
            dataset: run.dataset.clone(),
            batch_size: run.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedRun {
    pub record: RunRecord,
    pub score: SamScore,
}

/// Runs sharing a task and dataset, best score first.
///
/// Without `force` a group always has exactly one batch size. With `force`,
/// mixed batch sizes are ranked together and `flagged` is set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedGroup {
    pub task: String,
    pub dataset: String,
    pub batch_sizes: Vec<u32>,
    pub flagged: bool,
    pub warnings: Vec<String>,
    pub entries: Vec<RankedRun>,
}

impl RankedGroup {
    pub fn key(&self) -> Option<ComparabilityKey> {
        match self.batch_sizes.as_slice() {
            [b] => Some(ComparabilityKey {
                task: self.task.clone(),
                dataset: self.dataset.clone(),
                batch_size: *b,
            }),
            _ => None,
        }
    }

    pub fn run_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.record.run_id.as_str()).collect()
    }
}

fn compare_ranked(a: &RankedRun, b: &RankedRun) -> Ordering {
    b.score
        .value
        .total_cmp(&a.score.value)
        .then(a.score.electricity_used_kwh.total_cmp(&b.score.electricity_used_kwh))
        .then_with(|| a.record.run_id.cmp(&b.record.run_id))
}

fn distinct<'a, I: Iterator<Item = &'a str>>(it: I) -> Vec<&'a str> {
    it.collect::<BTreeSet<_>>().into_iter().collect()
}

pub fn rank(runs: &[RunRecord], params: SamParams, force: bool) -> Result<Vec<RankedGroup>, MetricError> {
    let params = SamParams::new(params.alpha, params.beta)?;
    let mut groups: BTreeMap<(&str, &str), Vec<&RunRecord>> = BTreeMap::new();
    for run in runs {
        groups
            .entry((run.task.as_str(), run.dataset.as_str()))
            .or_default()
            .push(run);
    }

    let mut out = Vec::with_capacity(groups.len());
    for ((task, dataset), members) in groups {
        let batch_sizes: Vec<u32> = members
            .iter()
            .map(|r| r.batch_size)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let flagged = batch_sizes.len() > 1;
        if flagged && !force {
            return Err(MetricError::IncomparableRuns {
                task: task.to_string(),
                dataset: dataset.to_string(),
                batch_sizes,
            });
        }

        let mut warnings = Vec::new();
        if flagged {
            warnings.push(format!("mixed batch sizes {batch_sizes:?} ranked together (forced)"));
        }
        let hardware = distinct(members.iter().map(|r| r.hardware.as_str()));
        if hardware.len() > 1 {
            warnings.push(format!("mixed hardware: {}", hardware.join("; ")));
        }
        let gpus: BTreeSet<u32> = members.iter().map(|r| r.gpu_count).collect();
        if gpus.len() > 1 {
            warnings.push(format!("mixed gpu counts: {gpus:?}"));
        }

        let mut entries = members
            .into_iter()
            .map(|r| {
                Ok(RankedRun {
                    score: score_run(r, params)?,
                    record: r.clone(),
                })
            })
            .collect::<Result<Vec<_>, MetricError>>()?;
        entries.sort_by(compare_ranked);

        out.push(RankedGroup {
            task: task.to_string(),
            dataset: dataset.to_string(),
            batch_sizes,
            flagged,
            warnings,
            entries,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub groups: Vec<RankedGroup>,
}

impl SweepRow {
    pub fn orders(&self) -> Vec<Vec<&str>> {
        self.groups.iter().map(RankedGroup::run_ids).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub beta: f64,
    pub rows: Vec<SweepRow>,
    /// Adjacent `(alpha_lo, alpha_hi)` pairs between which some order changed.
    pub crossovers: Vec<(f64, f64)>,
}

/// Ranks `runs` at every alpha (ascending) and reports where the order
/// flips.
pub fn sam_sweep(runs: &[RunRecord], alpha_values: &[f64], beta: f64) -> Result<SweepTable, MetricError> {
    if alpha_values.is_empty() {
        return Err(MetricError::EmptySweep);
    }
    let mut alphas = alpha_values.to_vec();
    for &a in &alphas {
        SamParams::new(a, beta)?;
    }
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();

    let rows = alphas
        .iter()
        .map(|&alpha| {
            Ok(SweepRow {
                alpha,
                groups: rank(runs, SamParams { alpha, beta }, false)?,
            })
        })
        .collect::<Result<Vec<_>, MetricError>>()?;

    let crossovers = rows
        .windows(2)
        .filter(|w| w[0].orders() != w[1].orders())
        .map(|w| (w[0].alpha, w[1].alpha))
        .collect();

    Ok(SweepTable { beta, rows, crossovers })
}

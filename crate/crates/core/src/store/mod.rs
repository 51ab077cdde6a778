//! Run records and their persistence: an append-only JSON-lines store plus
//! CSV import and export.

mod csv_io;
mod log;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{export_csv, import_csv, CSV_HEADER};
pub use log::{append_run, append_runs, load_runs, AppendAck, LoadOptions, LoadReport};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid record `{run_id}`: field `{field}` {reason}")]
    Invalid {
        run_id: String,
        field: &'static str,
        reason: String,
    },
    #[error("duplicate run_id `{0}`")]
    Duplicate(String),
    #[error("store not found: {0}")]
    NotFound(String),
    #[error("store is busy: another writer holds {0}")]
    Busy(String),
    #[error("malformed record on line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("csv schema error: {0}")]
    Schema(String),
    #[error("csv row {row}, column `{column}`: {message}")]
    CsvField {
        row: usize,
        column: String,
        message: String,
    },
    #[error(transparent)]
    Csv(#[from] ::csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl StoreError {
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            StoreError::Invalid { .. }
                | StoreError::Duplicate(_)
                | StoreError::Malformed { .. }
                | StoreError::Schema(_)
                | StoreError::CsvField { .. }
                | StoreError::Csv(_)
        )
    }
}

/// One training run. Optional energies distinguish "not measured" (`None`)
/// from a measured zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub run_id: String,
    pub model: String,
    pub task: String,
    pub dataset: String,
    pub hardware: String,
    pub gpu_count: u32,
    pub batch_size: u32,
    pub epochs: f64,
    pub data_fraction: f64,
    pub accuracy: f64,
    pub train_energy_kwh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_energy_kwh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain_energy_kwh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gflops: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters_millions: Option<f64>,
    #[serde(default)]
    pub notes: String,
}

impl RunRecord {
    pub fn validate(&self) -> Result<(), StoreError> {
        let fail = |field: &'static str, reason: &str| StoreError::Invalid {
            run_id: self.run_id.clone(),
            field,
            reason: reason.to_string(),
        };
        let non_neg = |v: f64| v.is_finite() && v >= 0.0;

        if self.run_id.trim().is_empty() {
            return Err(fail("run_id", "must not be empty"));
        }
        if self.run_id.contains(['\n', '\r']) {
            return Err(fail("run_id", "must be a single line"));
        }
        if self.gpu_count < 1 {
            return Err(fail("gpu_count", "must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(fail("batch_size", "must be > 0"));
        }
        if !(self.epochs.is_finite() && self.epochs > 0.0) {
            return Err(fail("epochs", "must be > 0"));
        }
        if !(self.data_fraction.is_finite() && self.data_fraction > 0.0 && self.data_fraction <= 1.0) {
            return Err(fail("data_fraction", "must be in (0, 1]"));
        }
        if !(self.accuracy.is_finite() && (0.0..=1.0).contains(&self.accuracy)) {
            return Err(fail("accuracy", "must be a fraction in [0, 1]"));
        }
        if !non_neg(self.train_energy_kwh) {
            return Err(fail("train_energy_kwh", "must be >= 0"));
        }
        let optional = [
            ("test_energy_kwh", self.test_energy_kwh),
            ("pretrain_energy_kwh", self.pretrain_energy_kwh),
            ("gflops", self.gflops),
            ("parameters_millions", self.parameters_millions),
        ];
        for (field, value) in optional {
            if value.is_some_and(|v| !non_neg(v)) {
                return Err(fail(field, "must be >= 0 when present"));
            }
        }
        Ok(())
    }
}

/// The parts of a [`RunRecord`] known before a run finishes, typically
/// captured from command-line flags when tracking a training command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDraft {
    pub run_id: Option<String>,
    pub model: Option<String>,
    pub task: Option<String>,
    pub dataset: Option<String>,
    pub hardware: Option<String>,
    pub gpu_count: Option<u32>,
    pub batch_size: Option<u32>,
    pub epochs: Option<f64>,
    pub data_fraction: Option<f64>,
    pub accuracy: Option<f64>,
    pub notes: Option<String>,
}

impl RunDraft {
    /// Completes the draft with the measured train energy. `model`, `task`,
    /// `dataset`, `batch_size` and `accuracy` are required; the rest fall
    /// back to one GPU, one epoch and the full dataset.
    pub fn complete(&self, train_energy_kwh: f64, default_run_id: &str) -> Result<RunRecord, StoreError> {
        let run_id = self.run_id.clone().unwrap_or_else(|| default_run_id.to_string());
        let missing = |field: &'static str| StoreError::Invalid {
            run_id: run_id.clone(),
            field,
            reason: "is required to record the run".to_string(),
        };
        let record = RunRecord {
            model: self.model.clone().ok_or_else(|| missing("model"))?,
            task: self.task.clone().ok_or_else(|| missing("task"))?,
            dataset: self.dataset.clone().ok_or_else(|| missing("dataset"))?,
            batch_size: self.batch_size.ok_or_else(|| missing("batch_size"))?,
            accuracy: self.accuracy.ok_or_else(|| missing("accuracy"))?,
            hardware: self.hardware.clone().unwrap_or_default(),
            gpu_count: self.gpu_count.unwrap_or(1),
            epochs: self.epochs.unwrap_or(1.0),
            data_fraction: self.data_fraction.unwrap_or(1.0),
            train_energy_kwh,
            test_energy_kwh: None,
            pretrain_energy_kwh: None,
            gflops: None,
            parameters_millions: None,
            notes: self.notes.clone().unwrap_or_default(),
            run_id,
        };
        record.validate()?;
        Ok(record)
    }
}

/// Exact-match filter on task, dataset and model.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunFilter {
    pub task: Option<String>,
    pub dataset: Option<String>,
    pub model: Option<String>,
}

impl RunFilter {
    pub fn matches(&self, r: &RunRecord) -> bool {
        let ok = |want: &Option<String>, have: &str| want.as_deref().is_none_or(|w| w == have);
        ok(&self.task, &r.task) && ok(&self.dataset, &r.dataset) && ok(&self.model, &r.model)
    }

    pub fn is_empty(&self) -> bool {
        self.task.is_none() && self.dataset.is_none() && self.model.is_none()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum AccuracyUnit {
    #[default]
    Fraction,
    Percent,
}

impl std::str::FromStr for AccuracyUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fraction" => Ok(AccuracyUnit::Fraction),
            "percent" => Ok(AccuracyUnit::Percent),
            other => Err(format!("unknown accuracy unit `{other}` (expected fraction|percent)")),
        }
    }
}

impl AccuracyUnit {
    /// Percent values above 1.5 are divided by 100. Fractions pass through
    /// untouched; range checks happen in validation.
    pub fn normalize(self, value: f64) -> f64 {
        match self {
            AccuracyUnit::Percent if value > 1.5 => value / 100.0,
            _ => value,
        }
    }
}

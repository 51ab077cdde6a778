//! Acquiring power traces: replaying recorded CSV files, or sampling a
//! [`PowerProvider`] while a child process runs.

mod live;
mod provider;
mod trace_csv;
mod track;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

pub use live::{parse_nvidia_smi, NvidiaSmiProvider, RaplProvider};
pub use provider::{
    open_provider, DeviceReading, PowerProvider, ReplayProvider, SyntheticProvider,
};
pub use trace_csv::{read_trace_csv, replay, write_trace_csv, Replay, TRACE_HEADER};
pub use track::{track, track_with, TrackOutcome};

pub const DEFAULT_INTERVAL_MS: u64 = 100;
pub const MIN_LIVE_INTERVAL_MS: u64 = 10;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("trace file not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed trace row {row}: {message}")]
    MalformedRow { row: u64, message: String },
    #[error("trace header must be `timestamp_ms,device_id,power_w`, got `{0}`")]
    BadHeader(String),
    #[error("invalid provider `{0}` (expected replay:<file>, synthetic:<watts>[,<watts>...] or live:<selector>)")]
    InvalidDescriptor(String),
    #[error("polling interval must be >= {min} ms for this provider, got {got}")]
    Interval { min: u64, got: u64 },
    #[error("usage: {0}")]
    Usage(String),
    #[error("provider initialization failed: {0}")]
    ProviderInit(String),
    #[error("provider poll failed: {0}")]
    Poll(String),
    #[error("failed to spawn `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProviderKind {
    /// Replays a recorded trace file against elapsed time.
    Replay,
    /// Constant wattage, or a script of wattages cycled once per poll.
    Synthetic(Vec<f64>),
    /// Hardware telemetry (`nvidia-smi[:ids]` or `rapl`).
    Live,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderDescriptor {
    pub kind: ProviderKind,
    pub source: String,
    pub interval_ms: u64,
}

impl ProviderDescriptor {
    pub fn synthetic(watts: f64, interval_ms: u64) -> Self {
        ProviderDescriptor {
            kind: ProviderKind::Synthetic(vec![watts]),
            source: watts.to_string(),
            interval_ms,
        }
    }

    pub fn with_interval(mut self, interval_ms: u64) -> Self {
        self.interval_ms = interval_ms;
        self
    }

    pub fn validate(&self) -> Result<(), TelemetryError> {
        let min = match self.kind {
            ProviderKind::Live => MIN_LIVE_INTERVAL_MS,
            _ => 1,
        };
        if self.interval_ms < min {
            return Err(TelemetryError::Interval {
                min,
                got: self.interval_ms,
            });
        }
        if let ProviderKind::Synthetic(w) = &self.kind {
            if w.is_empty() || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(TelemetryError::InvalidDescriptor(format!("synthetic:{}", self.source)));
            }
        }
        Ok(())
    }
}

impl FromStr for ProviderDescriptor {
    type Err = TelemetryError;

    /// Parses `replay:<file>`, `synthetic:<watts>[,<watts>...]` or
    /// `live:<selector>` with the default interval.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TelemetryError::InvalidDescriptor(s.to_string());
        let (kind, source) = s.split_once(':').ok_or_else(bad)?;
        if source.is_empty() {
            return Err(bad());
        }
        let kind = match kind {
            "replay" => ProviderKind::Replay,
            "live" => ProviderKind::Live,
            "synthetic" => ProviderKind::Synthetic(
                source
                    .split(',')
                    .map(|w| w.trim().parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<_, _>>()?,
            ),
            _ => return Err(bad()),
        };
        let desc = ProviderDescriptor {
            kind,
            source: source.to_string(),
            interval_ms: DEFAULT_INTERVAL_MS,
        };
        desc.validate()?;
        Ok(desc)
    }
}

impl fmt::Display for ProviderDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ProviderKind::Replay => "replay",
            ProviderKind::Synthetic(_) => "synthetic",
            ProviderKind::Live => "live",
        };
        write!(f, "{kind}:{} @ {} ms", self.source, self.interval_ms)
    }
}

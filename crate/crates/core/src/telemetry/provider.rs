use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use super::live::{NvidiaSmiProvider, RaplProvider};
use super::{replay, ProviderDescriptor, ProviderKind, TelemetryError};
use crate::energy::EnergyTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceReading {
    pub device_id: String,
    pub power_w: f64,
}

/// Anything that can answer "how many watts is each device drawing now".
///
/// `elapsed` is the time since sampling started; hardware providers ignore
/// it, replay uses it to pick the recorded value.
pub trait PowerProvider: Send {
    fn poll(&mut self, elapsed: Duration) -> Result<Vec<DeviceReading>, TelemetryError>;
}

pub struct SyntheticProvider {
    device_id: String,
    script: Vec<f64>,
    next: usize,
}

impl SyntheticProvider {
    pub fn constant(watts: f64) -> Self {
        Self::scripted(vec![watts])
    }

    /// Emits `script[0]`, `script[1]`, ... on successive polls, wrapping
    /// around at the end.
    pub fn scripted(script: Vec<f64>) -> Self {
        assert!(!script.is_empty(), "synthetic script must not be empty");
        SyntheticProvider {
            device_id: "synthetic0".to_string(),
            script,
            next: 0,
        }
    }
}

impl PowerProvider for SyntheticProvider {
    fn poll(&mut self, _elapsed: Duration) -> Result<Vec<DeviceReading>, TelemetryError> {
        let power_w = self.script[self.next % self.script.len()];
        self.next += 1;
        Ok(vec![DeviceReading {
            device_id: self.device_id.clone(),
            power_w,
        }])
    }
}

/// Plays a recorded trace back in real time, interpolating linearly between
/// recorded samples and holding the last value once the recording ends.
pub struct ReplayProvider {
    /// Per device: (offset from the trace's first timestamp in ms, watts).
    devices: BTreeMap<String, Vec<(u64, f64)>>,
}

impl ReplayProvider {
    pub fn new(trace: &EnergyTrace) -> Result<Self, TelemetryError> {
        let start = trace
            .samples
            .iter()
            .map(|s| s.timestamp_ms)
            .min()
            .ok_or_else(|| TelemetryError::ProviderInit("replay trace has no samples".into()))?;
        let mut devices: BTreeMap<String, Vec<(u64, f64)>> = BTreeMap::new();
        for s in &trace.samples {
            devices
                .entry(s.device_id.clone())
                .or_default()
                .push((s.timestamp_ms - start, s.power_w));
        }
        for points in devices.values_mut() {
            points.sort_by_key(|p| p.0);
        }
        Ok(ReplayProvider { devices })
    }

    pub fn from_path(path: &Path) -> Result<Self, TelemetryError> {
        let r = replay(path).map_err(|e| TelemetryError::ProviderInit(e.to_string()))?;
        Self::new(&r.trace)
    }

    fn value_at(points: &[(u64, f64)], t_ms: f64) -> f64 {
        let idx = points.partition_point(|p| (p.0 as f64) <= t_ms);
        if idx == 0 {
            return points[0].1;
        }
        if idx == points.len() {
            return points[idx - 1].1;
        }
        let (t0, p0) = points[idx - 1];
        let (t1, p1) = points[idx];
        let w = (t_ms - t0 as f64) / (t1 - t0) as f64;
        p0 + w * (p1 - p0)
    }
}

impl PowerProvider for ReplayProvider {
    fn poll(&mut self, elapsed: Duration) -> Result<Vec<DeviceReading>, TelemetryError> {
        let t_ms = elapsed.as_secs_f64() * 1000.0;
        Ok(self
            .devices
            .iter()
            .map(|(device_id, points)| DeviceReading {
                device_id: device_id.clone(),
                power_w: Self::value_at(points, t_ms),
            })
            .collect())
    }
}

/// Builds the provider a descriptor names. Failures here are always
/// [`TelemetryError::ProviderInit`], so a missing telemetry interface is
/// distinguishable from a failing child process.
pub fn open_provider(desc: &ProviderDescriptor) -> Result<Box<dyn PowerProvider>, TelemetryError> {
    desc.validate()?;
    match &desc.kind {
        ProviderKind::Synthetic(script) => Ok(Box::new(SyntheticProvider::scripted(script.clone()))),
        ProviderKind::Replay => Ok(Box::new(ReplayProvider::from_path(Path::new(&desc.source))?)),
        ProviderKind::Live => {
            let (name, arg) = match desc.source.split_once(':') {
                Some((n, a)) => (n, Some(a)),
                None => (desc.source.as_str(), None),
            };
            match name {
                "nvidia-smi" | "nvml" | "gpu" => Ok(Box::new(NvidiaSmiProvider::open(arg)?)),
                "rapl" | "cpu" => Ok(Box::new(RaplProvider::open(arg)?)),
                other => Err(TelemetryError::ProviderInit(format!(
                    "unknown live selector `{other}` (expected nvidia-smi[:ids] or rapl[:root])"
                ))),
            }
        }
    }
}

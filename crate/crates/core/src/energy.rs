//! Unit-safe energy arithmetic and trapezoidal integration of power traces.
//!
//! A trace is a flat list of [`PowerSample`]s that may interleave several
//! devices. Samples are grouped per device, each device is integrated on its
//! own timeline, and the per-device totals are summed.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const JOULES_PER_KWH: f64 = 3_600_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("energy must be a finite non-negative value, got {0}")]
    Negative(f64),
    #[error("baseline power must be a finite non-negative value, got {0}")]
    InvalidBaseline(f64),
    #[error("insufficient samples: device `{device}` has {count}, at least 2 are required")]
    InsufficientSamples { device: String, count: usize },
    #[error("insufficient samples: trace is empty")]
    EmptyTrace,
    #[error("unordered trace: device `{device}` timestamp does not increase at sample {index}")]
    UnorderedTrace { device: String, index: usize },
    #[error("negative power at sample {index} on device `{device}`")]
    NegativePower { device: String, index: usize },
}

/// Electricity in kilowatt-hours. Always finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct EnergyKwh(f64);

impl EnergyKwh {
    pub const ZERO: EnergyKwh = EnergyKwh(0.0);

    pub fn new(value: f64) -> Result<Self, EnergyError> {
        if value.is_finite() && value >= 0.0 {
            // normalizes -0.0
            Ok(EnergyKwh(value + 0.0))
        } else {
            Err(EnergyError::Negative(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for EnergyKwh {
    type Error = EnergyError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        EnergyKwh::new(value)
    }
}

impl From<EnergyKwh> for f64 {
    fn from(e: EnergyKwh) -> f64 {
        e.0
    }
}

impl fmt::Display for EnergyKwh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} kWh", self.0)
    }
}

pub fn to_kwh(joules: f64) -> Result<EnergyKwh, EnergyError> {
    if !(joules.is_finite() && joules >= 0.0) {
        return Err(EnergyError::Negative(joules));
    }
    EnergyKwh::new(joules / JOULES_PER_KWH)
}

/// One instantaneous power reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub timestamp_ms: u64,
    pub device_id: String,
    pub power_w: f64,
}

impl PowerSample {
    pub fn new(timestamp_ms: u64, device_id: impl Into<String>, power_w: f64) -> Self {
        PowerSample {
            timestamp_ms,
            device_id: device_id.into(),
            power_w,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub samples: Vec<PowerSample>,
}

impl EnergyTrace {
    pub fn new(samples: Vec<PowerSample>) -> Self {
        EnergyTrace { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, sample: PowerSample) {
        self.samples.push(sample);
    }

    /// Sample indices per device, in trace order. Devices are keyed in
    /// lexicographic order so summation order is fixed.
    pub fn by_device(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            map.entry(s.device_id.as_str()).or_default().push(i);
        }
        map
    }

    pub fn device_ids(&self) -> Vec<String> {
        self.by_device().keys().map(|d| d.to_string()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationRule {
    UnorderedTrace,
    NegativePower,
    NonFinitePower,
    InsufficientSamples,
}

impl fmt::Display for ViolationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationRule::UnorderedTrace => "unordered trace",
            ViolationRule::NegativePower => "negative power",
            ViolationRule::NonFinitePower => "non-finite power",
            ViolationRule::InsufficientSamples => "insufficient samples",
        };
        f.write_str(s)
    }
}

/// A broken trace invariant. `device_id` and `index` are absent for
/// trace-wide problems such as an empty trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub device_id: Option<String>,
    pub index: Option<usize>,
    pub rule: ViolationRule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rule)?;
        if let Some(d) = &self.device_id {
            write!(f, " on device `{d}`")?;
        }
        if let Some(i) = self.index {
            write!(f, " at sample {i}")?;
        }
        Ok(())
    }
}

pub fn validate_trace(trace: &EnergyTrace) -> Vec<Violation> {
    let mut out = Vec::new();
    if trace.is_empty() {
        out.push(Violation {
            device_id: None,
            index: None,
            rule: ViolationRule::InsufficientSamples,
        });
        return out;
    }
    for (device, indices) in trace.by_device() {
        let mut prev: Option<u64> = None;
        for &i in &indices {
            let s = &trace.samples[i];
            if !s.power_w.is_finite() {
                out.push(Violation {
                    device_id: Some(device.to_string()),
                    index: Some(i),
                    rule: ViolationRule::NonFinitePower,
                });
            } else if s.power_w < 0.0 {
                out.push(Violation {
                    device_id: Some(device.to_string()),
                    index: Some(i),
                    rule: ViolationRule::NegativePower,
                });
            }
            if let Some(p) = prev {
                if s.timestamp_ms <= p {
                    out.push(Violation {
                        device_id: Some(device.to_string()),
                        index: Some(i),
                        rule: ViolationRule::UnorderedTrace,
                    });
                }
            }
            prev = Some(s.timestamp_ms);
        }
        if indices.len() < 2 {
            out.push(Violation {
                device_id: Some(device.to_string()),
                index: None,
                rule: ViolationRule::InsufficientSamples,
            });
        }
    }
    out.sort_by_key(|v| v.index.unwrap_or(usize::MAX));
    out
}

/// Trapezoidal integral of `max(power - baseline, 0)` per device, summed
/// over devices.
pub fn integrate_trace(
    trace: &EnergyTrace,
    baseline_w: Option<f64>,
) -> Result<EnergyKwh, EnergyError> {
    let baseline = baseline_w.unwrap_or(0.0);
    if !(baseline.is_finite() && baseline >= 0.0) {
        return Err(EnergyError::InvalidBaseline(baseline));
    }
    if trace.is_empty() {
        return Err(EnergyError::EmptyTrace);
    }

    let mut joules = 0.0;
    for (device, indices) in trace.by_device() {
        if indices.len() < 2 {
            return Err(EnergyError::InsufficientSamples {
                device: device.to_string(),
                count: indices.len(),
            });
        }
        for &i in &indices {
            let p = trace.samples[i].power_w;
            if !(p.is_finite() && p >= 0.0) {
                return Err(EnergyError::NegativePower {
                    device: device.to_string(),
                    index: i,
                });
            }
        }
        let mut device_joules = 0.0;
        for pair in indices.windows(2) {
            let (a, b) = (&trace.samples[pair[0]], &trace.samples[pair[1]]);
            if b.timestamp_ms <= a.timestamp_ms {
                return Err(EnergyError::UnorderedTrace {
                    device: device.to_string(),
                    index: pair[1],
                });
            }
            let dt_s = (b.timestamp_ms - a.timestamp_ms) as f64 / 1000.0;
            let pa = (a.power_w - baseline).max(0.0);
            let pb = (b.power_w - baseline).max(0.0);
            device_joules += 0.5 * (pa + pb) * dt_s;
        }
        joules += device_joules;
    }
    to_kwh(joules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(device: &str, points: &[(u64, f64)]) -> EnergyTrace {
        EnergyTrace::new(
            points
                .iter()
                .map(|&(t, p)| PowerSample::new(t, device, p))
                .collect(),
        )
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        if a == b {
            return true;
        }
        (a - b).abs() <= tol * a.abs().max(b.abs())
    }

    #[test]
    fn kwh_conversion() {
        assert_eq!(to_kwh(3_600_000.0).unwrap().value(), 1.0);
        assert_eq!(to_kwh(0.0).unwrap().value(), 0.0);
        assert_eq!(to_kwh(360_000.0).unwrap().value(), 0.1);
        assert!(matches!(to_kwh(-1.0), Err(EnergyError::Negative(_))));
        assert!(to_kwh(f64::NAN).is_err());
    }

    #[test]
    fn constant_ramp_and_two_devices() {
        let constant = single("gpu0", &[(0, 100.0), (3_600_000, 100.0)]);
        assert!(rel_close(integrate_trace(&constant, None).unwrap().value(), 0.1, 1e-12));

        let ramp = single("gpu0", &[(0, 0.0), (3_600_000, 100.0)]);
        assert!(rel_close(integrate_trace(&ramp, None).unwrap().value(), 0.05, 1e-12));

        let mut two = single("gpu0", &[(0, 50.0), (3_600_000, 50.0)]);
        two.samples.extend(single("gpu1", &[(0, 50.0), (3_600_000, 50.0)]).samples);
        assert!(rel_close(integrate_trace(&two, None).unwrap().value(), 0.1, 1e-12));
    }

    #[test]
    fn interleaved_devices_are_integrated_separately() {
        let trace = EnergyTrace::new(vec![
            PowerSample::new(0, "a", 10.0),
            PowerSample::new(0, "b", 20.0),
            PowerSample::new(1000, "a", 10.0),
            PowerSample::new(1000, "b", 20.0),
        ]);
        let kwh = integrate_trace(&trace, None).unwrap().value();
        assert!(rel_close(kwh, 30.0 / JOULES_PER_KWH, 1e-12));
    }

    #[test]
    fn integration_errors() {
        let one = single("gpu0", &[(0, 10.0)]);
        assert!(matches!(
            integrate_trace(&one, None),
            Err(EnergyError::InsufficientSamples { count: 1, .. })
        ));
        let dup = single("gpu0", &[(0, 10.0), (0, 10.0)]);
        assert!(matches!(
            integrate_trace(&dup, None),
            Err(EnergyError::UnorderedTrace { index: 1, .. })
        ));
        assert!(matches!(
            integrate_trace(&EnergyTrace::default(), None),
            Err(EnergyError::EmptyTrace)
        ));
        let ok = single("gpu0", &[(0, 10.0), (10, 10.0)]);
        assert!(integrate_trace(&ok, Some(-1.0)).is_err());
    }

    #[test]
    fn validation_examples() {
        assert!(validate_trace(&single("g", &[(0, 1.0), (5, 1.0)])).is_empty());

        let dup = validate_trace(&single("g", &[(0, 1.0), (0, 1.0)]));
        assert_eq!(dup.len(), 1);
        assert_eq!(dup[0].rule, ViolationRule::UnorderedTrace);
        assert_eq!(dup[0].device_id.as_deref(), Some("g"));
        assert_eq!(dup[0].index, Some(1));

        let neg = validate_trace(&single("g", &[(0, 1.0), (5, -1.0)]));
        assert_eq!(neg.len(), 1);
        assert_eq!(neg[0].rule, ViolationRule::NegativePower);
        assert_eq!(neg[0].to_string(), "negative power on device `g` at sample 1");

        let empty = validate_trace(&EnergyTrace::default());
        assert_eq!(empty[0].rule, ViolationRule::InsufficientSamples);
    }

    #[test]
    fn baseline_above_everything_is_zero() {
        let t = single("g", &[(0, 40.0), (1000, 80.0), (2500, 10.0)]);
        assert_eq!(integrate_trace(&t, Some(80.0)).unwrap().value(), 0.0);
        assert_eq!(integrate_trace(&t, Some(1e6)).unwrap().value(), 0.0);
    }

    fn arb_trace() -> impl Strategy<Value = Vec<(u64, f64)>> {
        prop::collection::vec((1u64..100_000, 0.0f64..1000.0), 3..60).prop_map(|steps| {
            let mut t = 0;
            steps
                .into_iter()
                .map(|(dt, p)| {
                    t += dt;
                    (t, p)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn split_additivity(points in arb_trace(), cut in 0.0f64..1.0) {
            // Interior cut so both halves keep at least two samples.
            let k = 1 + ((points.len() - 3) as f64 * cut) as usize;
            let whole = integrate_trace(&single("g", &points), None).unwrap().value();
            let left = integrate_trace(&single("g", &points[..=k]), None).unwrap().value();
            let right = integrate_trace(&single("g", &points[k..]), None).unwrap().value();
            prop_assert!(rel_close(whole, left + right, 1e-12));
        }

        #[test]
        fn constant_power_closed_form(p in 0.0f64..5000.0, t_ms in 1u64..1_000_000_000) {
            let kwh = integrate_trace(&single("g", &[(0, p), (t_ms, p)]), None).unwrap().value();
            let expected = p * (t_ms as f64 / 1000.0) / 3.6e6;
            prop_assert!(rel_close(kwh, expected, 1e-12));
        }

        #[test]
        fn baseline_never_increases_energy(points in arb_trace(), b1 in 0.0f64..1000.0, b2 in 0.0f64..1000.0) {
            let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
            let t = single("g", &points);
            let e_lo = integrate_trace(&t, Some(lo)).unwrap().value();
            let e_hi = integrate_trace(&t, Some(hi)).unwrap().value();
            prop_assert!(e_hi <= e_lo);
        }
    }
}

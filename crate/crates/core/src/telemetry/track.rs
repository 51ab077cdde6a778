use std::collections::HashMap;
use std::process::{Command, ExitStatus};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use super::{open_provider, PowerProvider, ProviderDescriptor, TelemetryError};
use crate::energy::{EnergyTrace, PowerSample};
use crate::store::RunDraft;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutcome {
    pub trace: EnergyTrace,
    pub child_exit_code: i32,
    pub wall_seconds: f64,
    pub run_skeleton: RunDraft,
    /// Milliseconds since the epoch, on the same clock as the trace.
    pub spawn_ms: u64,
    pub exit_ms: u64,
    /// Polls that failed mid-run and were skipped.
    pub poll_failures: usize,
}

/// Wall-clock milliseconds derived from a monotonic origin, so timestamps
/// never go backwards during a run.
#[derive(Clone, Copy)]
struct Clock {
    origin: Instant,
    origin_ms: u64,
}

impl Clock {
    fn start() -> Self {
        let origin_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Clock {
            origin: Instant::now(),
            origin_ms,
        }
    }

    fn now_ms(&self) -> u64 {
        self.origin_ms + self.origin.elapsed().as_millis() as u64
    }
}

struct Sampler {
    provider: Box<dyn PowerProvider>,
    clock: Clock,
    trace: EnergyTrace,
    last_ts: HashMap<String, u64>,
    failures: usize,
}

impl Sampler {
    fn sample(&mut self) -> Result<(), TelemetryError> {
        self.sample_merging(0)
    }

    /// Like `sample`, but a reading landing within `merge_ms` of the
    /// device's previous sample replaces it instead of adding a new one.
    fn sample_merging(&mut self, merge_ms: u64) -> Result<(), TelemetryError> {
        let readings = self.provider.poll(self.clock.origin.elapsed())?;
        let ts = self.clock.now_ms();
        for r in readings {
            let last = self.last_ts.get(&r.device_id).copied();
            // Two polls inside the same millisecond would break strict ordering.
            if last.is_some_and(|last| ts <= last) {
                continue;
            }
            if last.is_some_and(|last| ts - last < merge_ms) && self.replace_last(&r.device_id, ts, r.power_w) {
                self.last_ts.insert(r.device_id, ts);
                continue;
            }
            self.last_ts.insert(r.device_id.clone(), ts);
            self.trace.push(PowerSample::new(ts, r.device_id, r.power_w));
        }
        Ok(())
    }

    fn replace_last(&mut self, device: &str, ts: u64, power_w: f64) -> bool {
        let samples = &mut self.trace.samples;
        let idx = samples.iter().rposition(|s| s.device_id == device);
        // Only an interior sample may move; the first one anchors the trace.
        match idx {
            Some(i) if samples[..i].iter().any(|s| s.device_id == device) => {
                samples[i] = PowerSample::new(ts, device, power_w);
                true
            }
            _ => false,
        }
    }

    /// Polls on a fixed grid until told to stop, then takes one last sample.
    /// Late polls keep their real timestamp and the grid skips ahead. The
    /// closing sample absorbs a grid sample less than half an interval old,
    /// so a run of length T yields about T / interval + 1 samples.
    fn run(mut self, interval: Duration, stop: mpsc::Receiver<()>) -> (EnergyTrace, usize) {
        let start = self.clock.origin;
        let mut tick: u32 = 1;
        loop {
            let due = start + interval * tick;
            let wait = due.saturating_duration_since(Instant::now());
            let stopping = !matches!(stop.recv_timeout(wait), Err(RecvTimeoutError::Timeout));
            let merge_ms = if stopping { (interval.as_millis() / 2) as u64 } else { 0 };
            if self.sample_merging(merge_ms).is_err() {
                self.failures += 1;
            }
            if stopping {
                break;
            }
            let elapsed = start.elapsed().as_secs_f64();
            let next = (elapsed / interval.as_secs_f64()).floor() as u32 + 1;
            tick = next.max(tick + 1);
        }
        (self.trace, self.failures)
    }
}

fn exit_code(status: ExitStatus) -> i32 {
    if let Some(code) = status.code() {
        return code;
    }
    #[cfg(unix)]
    {
        use std::os::unix::process::ExitStatusExt;
        if let Some(sig) = status.signal() {
            return 128 + sig;
        }
    }
    -1
}

/// Runs `command` while polling the provider a descriptor names.
pub fn track(
    command: &[String],
    provider: &ProviderDescriptor,
    metadata: RunDraft,
) -> Result<TrackOutcome, TelemetryError> {
    if command.is_empty() {
        return Err(TelemetryError::Usage("track needs a command after `--`".into()));
    }
    provider.validate()?;
    let p = open_provider(provider)?;
    track_with(command, p, Duration::from_millis(provider.interval_ms), metadata)
}

/// Runs `command` with inherited standard streams while a sampling thread
/// polls `provider` every `interval`. The first sample is taken before the
/// child is spawned and the last one after it exits.
pub fn track_with(
    command: &[String],
    provider: Box<dyn PowerProvider>,
    interval: Duration,
    metadata: RunDraft,
) -> Result<TrackOutcome, TelemetryError> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| TelemetryError::Usage("track needs a command after `--`".into()))?;
    if interval.is_zero() {
        return Err(TelemetryError::Interval { min: 1, got: 0 });
    }

    let clock = Clock::start();
    let mut sampler = Sampler {
        provider,
        clock,
        trace: EnergyTrace::default(),
        last_ts: HashMap::new(),
        failures: 0,
    };
    // A provider that cannot answer its first poll is an init failure.
    sampler
        .sample()
        .map_err(|e| TelemetryError::ProviderInit(e.to_string()))?;

    let (stop_tx, stop_rx) = mpsc::channel();
    let agent = thread::spawn(move || sampler.run(interval, stop_rx));

    let spawn_ms = clock.now_ms();
    let started = Instant::now();
    let child = Command::new(program).args(args).spawn();
    let status = match child {
        Ok(mut child) => child.wait(),
        Err(source) => {
            let _ = stop_tx.send(());
            let _ = agent.join();
            return Err(TelemetryError::Spawn {
                command: program.clone(),
                source,
            });
        }
    };
    let wall_seconds = started.elapsed().as_secs_f64();
    let exit_ms = clock.now_ms();
    let _ = stop_tx.send(());
    let (trace, poll_failures) = agent.join().expect("sampling thread panicked");
    let status = status?;

    Ok(TrackOutcome {
        trace,
        child_exit_code: exit_code(status),
        wall_seconds,
        run_skeleton: metadata,
        spawn_ms,
        exit_ms,
        poll_failures,
    })
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use crate::energy::{integrate_trace, validate_trace};
    use crate::telemetry::SyntheticProvider;

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    #[test]
    fn exit_code_passthrough() {
        let out = track_with(
            &sh("exit 3"),
            Box::new(SyntheticProvider::constant(50.0)),
            Duration::from_millis(20),
            RunDraft::default(),
        )
        .unwrap();
        assert_eq!(out.child_exit_code, 3);
        assert!(!out.trace.is_empty());
    }

    #[test]
    fn samples_bracket_child_lifetime() {
        let out = track_with(
            &sh("sleep 0.3"),
            Box::new(SyntheticProvider::constant(50.0)),
            Duration::from_millis(25),
            RunDraft::default(),
        )
        .unwrap();
        assert!(validate_trace(&out.trace).is_empty());
        let first = out.trace.samples.first().unwrap().timestamp_ms;
        let last = out.trace.samples.last().unwrap().timestamp_ms;
        assert!(first <= out.spawn_ms);
        assert!(last + 25 >= out.exit_ms);
        assert!(integrate_trace(&out.trace, None).unwrap().value() > 0.0);
    }

    #[test]
    fn usage_and_spawn_errors() {
        let err = track(&[], &ProviderDescriptor::synthetic(1.0, 100), RunDraft::default()).unwrap_err();
        assert!(matches!(err, TelemetryError::Usage(_)));

        let err = track(
            &["/definitely/not/a/binary".to_string()],
            &ProviderDescriptor::synthetic(1.0, 100),
            RunDraft::default(),
        )
        .unwrap_err();
        assert!(matches!(err, TelemetryError::Spawn { .. }));
    }

    #[test]
    fn failing_provider_is_init_error() {
        struct Broken;
        impl PowerProvider for Broken {
            fn poll(&mut self, _: Duration) -> Result<Vec<super::super::DeviceReading>, TelemetryError> {
                Err(TelemetryError::Poll("no device".into()))
            }
        }
        let err = track_with(&sh("true"), Box::new(Broken), Duration::from_millis(10), RunDraft::default())
            .unwrap_err();
        assert!(matches!(err, TelemetryError::ProviderInit(_)));
    }
}

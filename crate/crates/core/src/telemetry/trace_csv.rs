use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::TelemetryError;
use crate::energy::{validate_trace, EnergyTrace, PowerSample, Violation};

pub const TRACE_HEADER: [&str; 3] = ["timestamp_ms", "device_id", "power_w"];

/// A replayed trace with any invariant violations found in it. Violations
/// are advisory; the trace is returned as written.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub trace: EnergyTrace,
    pub violations: Vec<Violation>,
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<EnergyTrace, TelemetryError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let headers = rdr.headers().map_err(|e| TelemetryError::MalformedRow {
        row: 1,
        message: e.to_string(),
    })?;
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names != TRACE_HEADER {
        return Err(TelemetryError::BadHeader(headers.iter().collect::<Vec<_>>().join(",")));
    }

    let mut trace = EnergyTrace::default();
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| TelemetryError::MalformedRow {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let row = record.position().map_or(0, |p| p.line());
        let malformed = |message: String| TelemetryError::MalformedRow { row, message };
        if record.len() != 3 {
            return Err(malformed(format!("expected 3 fields, found {}", record.len())));
        }
        let timestamp_ms: u64 = record[0]
            .trim()
            .parse()
            .map_err(|_| malformed(format!("timestamp_ms `{}` is not a non-negative integer", &record[0])))?;
        let device_id = record[1].trim();
        if device_id.is_empty() {
            return Err(malformed("device_id is empty".into()));
        }
        let power_w: f64 = record[2]
            .trim()
            .parse()
            .map_err(|_| malformed(format!("power_w `{}` is not a number", &record[2])))?;
        trace.push(PowerSample::new(timestamp_ms, device_id, power_w));
    }
    Ok(trace)
}

pub fn replay(path: &Path) -> Result<Replay, TelemetryError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => TelemetryError::MissingFile(path.to_path_buf()),
        _ => TelemetryError::Io(e),
    })?;
    let trace = read_trace_csv(file)?;
    let violations = validate_trace(&trace);
    Ok(Replay { trace, violations })
}

pub fn write_trace_csv<W: Write>(trace: &EnergyTrace, out: W) -> Result<(), TelemetryError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| TelemetryError::Io(e.into());
    w.write_record(TRACE_HEADER).map_err(io)?;
    for s in &trace.samples {
        w.write_record([s.timestamp_ms.to_string(), s.device_id.clone(), s.power_w.to_string()])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{integrate_trace, ViolationRule};

    #[test]
    fn two_rows() {
        let t = read_trace_csv("timestamp_ms,device_id,power_w\n0,gpu0,50\n1000,gpu0,50\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.samples[1], PowerSample::new(1000, "gpu0", 50.0));
    }

    #[test]
    fn header_only_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "timestamp_ms,device_id,power_w\n").unwrap();
        let r = replay(&path).unwrap();
        assert!(r.trace.is_empty());
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].rule, ViolationRule::InsufficientSamples);
    }

    #[test]
    fn bad_watts_names_row() {
        let err = read_trace_csv("timestamp_ms,device_id,power_w\n0,g,1\n5,g,lots\n".as_bytes()).unwrap_err();
        match err {
            TelemetryError::MalformedRow { row, message } => {
                assert_eq!(row, 3);
                assert!(message.contains("lots"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = read_trace_csv("timestamp_ms,device_id,power_w\n0,g\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TelemetryError::MalformedRow { row: 2, .. }));
        let err = read_trace_csv("t,d,p\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TelemetryError::BadHeader(_)));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            replay(Path::new("/no/such/trace.csv")),
            Err(TelemetryError::MissingFile(_))
        ));
    }

    #[test]
    fn write_then_replay_is_bitwise_stable() {
        let trace = EnergyTrace::new(vec![
            PowerSample::new(0, "a", 12.345678901234),
            PowerSample::new(10, "b", 1.0 / 3.0),
            PowerSample::new(333, "a", 99.9),
            PowerSample::new(400, "b", 0.1),
        ]);
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let back = read_trace_csv(buf.as_slice()).unwrap();
        assert_eq!(back, trace);
        let a = integrate_trace(&back, None).unwrap().value();
        let b = integrate_trace(&read_trace_csv(buf.as_slice()).unwrap(), None).unwrap().value();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

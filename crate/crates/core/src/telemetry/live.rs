//! Hardware power sources. Neither is needed for tests; both fail at open
//! time with [`TelemetryError::ProviderInit`] when the interface is absent.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use super::{DeviceReading, PowerProvider, TelemetryError};

/// Parses `nvidia-smi --query-gpu=index,power.draw --format=csv,noheader,nounits`.
pub fn parse_nvidia_smi(output: &str) -> Result<Vec<DeviceReading>, String> {
    output
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let (index, watts) = line
                .split_once(',')
                .ok_or_else(|| format!("unexpected nvidia-smi line `{line}`"))?;
            let power_w: f64 = watts
                .trim()
                .parse()
                .map_err(|_| format!("gpu {} reports no power reading (`{}`)", index.trim(), watts.trim()))?;
            Ok(DeviceReading {
                device_id: format!("gpu{}", index.trim()),
                power_w,
            })
        })
        .collect()
}

pub struct NvidiaSmiProvider {
    ids: Option<String>,
}

impl NvidiaSmiProvider {
    pub fn open(ids: Option<&str>) -> Result<Self, TelemetryError> {
        let p = NvidiaSmiProvider {
            ids: ids.map(str::to_string),
        };
        match p.query() {
            Ok(r) if !r.is_empty() => Ok(p),
            Ok(_) => Err(TelemetryError::ProviderInit("nvidia-smi reported no GPUs".into())),
            Err(e) => Err(TelemetryError::ProviderInit(e)),
        }
    }

    fn query(&self) -> Result<Vec<DeviceReading>, String> {
        let mut cmd = Command::new("nvidia-smi");
        cmd.args(["--query-gpu=index,power.draw", "--format=csv,noheader,nounits"]);
        if let Some(ids) = &self.ids {
            cmd.args(["-i", ids]);
        }
        let out = cmd.output().map_err(|e| format!("cannot run nvidia-smi: {e}"))?;
        if !out.status.success() {
            return Err(format!(
                "nvidia-smi exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            ));
        }
        parse_nvidia_smi(&String::from_utf8_lossy(&out.stdout))
    }
}

impl PowerProvider for NvidiaSmiProvider {
    fn poll(&mut self, _elapsed: Duration) -> Result<Vec<DeviceReading>, TelemetryError> {
        self.query().map_err(TelemetryError::Poll)
    }
}

struct RaplZone {
    device_id: String,
    energy_file: PathBuf,
    max_uj: u64,
    last_uj: u64,
    last_w: f64,
}

/// Average watts between two readings of a wrapping microjoule counter.
pub(crate) fn rapl_watts(prev_uj: u64, now_uj: u64, max_uj: u64, dt: Duration) -> Option<f64> {
    let secs = dt.as_secs_f64();
    if secs <= 0.0 {
        return None;
    }
    let delta = if now_uj >= prev_uj {
        now_uj - prev_uj
    } else {
        max_uj.saturating_sub(prev_uj) + now_uj
    };
    Some(delta as f64 / 1e6 / secs)
}

fn read_u64(path: &Path) -> Result<u64, String> {
    let s = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    s.trim()
        .parse()
        .map_err(|e| format!("{}: {e}", path.display()))
}

/// Intel RAPL package counters from the powercap sysfs tree.
pub struct RaplProvider {
    zones: Vec<RaplZone>,
    last: Instant,
}

impl RaplProvider {
    pub fn open(root: Option<&str>) -> Result<Self, TelemetryError> {
        let root = PathBuf::from(root.unwrap_or("/sys/class/powercap"));
        let init = |m: String| TelemetryError::ProviderInit(m);
        let entries = fs::read_dir(&root).map_err(|e| init(format!("{}: {e}", root.display())))?;

        let mut dirs: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("intel-rapl:") && n.matches(':').count() == 1)
            })
            .collect();
        dirs.sort();

        let mut zones = Vec::new();
        for dir in dirs {
            let energy_file = dir.join("energy_uj");
            let last_uj = read_u64(&energy_file).map_err(init)?;
            let max_uj = read_u64(&dir.join("max_energy_range_uj")).unwrap_or(u64::MAX);
            let name = fs::read_to_string(dir.join("name"))
                .map(|s| s.trim().to_string())
                .unwrap_or_else(|_| dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
            zones.push(RaplZone {
                device_id: format!("rapl:{name}"),
                energy_file,
                max_uj,
                last_uj,
                last_w: 0.0,
            });
        }
        if zones.is_empty() {
            return Err(init(format!("no intel-rapl zones under {}", root.display())));
        }
        Ok(RaplProvider {
            zones,
            last: Instant::now(),
        })
    }
}

impl PowerProvider for RaplProvider {
    fn poll(&mut self, _elapsed: Duration) -> Result<Vec<DeviceReading>, TelemetryError> {
        let now = Instant::now();
        let dt = now.duration_since(self.last);
        self.last = now;
        let mut out = Vec::with_capacity(self.zones.len());
        for z in &mut self.zones {
            let uj = read_u64(&z.energy_file).map_err(TelemetryError::Poll)?;
            if let Some(w) = rapl_watts(z.last_uj, uj, z.max_uj, dt) {
                z.last_w = w;
            }
            z.last_uj = uj;
            out.push(DeviceReading {
                device_id: z.device_id.clone(),
                power_w: z.last_w,
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nvidia_smi_output() {
        let r = parse_nvidia_smi("0, 45.23\n1, 300.00\n").unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[1].device_id, "gpu1");
        assert_eq!(r[1].power_w, 300.0);
        assert!(parse_nvidia_smi("0, [N/A]\n").is_err());
        assert!(parse_nvidia_smi("garbage\n").is_err());
    }

    #[test]
    fn rapl_counter_wrap() {
        let s = Duration::from_secs(1);
        assert_eq!(rapl_watts(1_000_000, 51_000_000, u64::MAX, s), Some(50.0));
        assert_eq!(rapl_watts(90_000_000, 40_000_000, 100_000_000, s), Some(50.0));
        assert_eq!(rapl_watts(0, 10, 100, Duration::ZERO), None);
    }

    #[test]
    fn rapl_sysfs_tree() {
        let dir = tempfile::tempdir().unwrap();
        let zone = dir.path().join("intel-rapl:0");
        fs::create_dir(&zone).unwrap();
        fs::create_dir(dir.path().join("intel-rapl:0:0")).unwrap();
        fs::write(zone.join("energy_uj"), "1000\n").unwrap();
        fs::write(zone.join("max_energy_range_uj"), "262143328850\n").unwrap();
        fs::write(zone.join("name"), "package-0\n").unwrap();

        let mut p = RaplProvider::open(dir.path().to_str()).unwrap();
        fs::write(zone.join("energy_uj"), "5000000\n").unwrap();
        std::thread::sleep(Duration::from_millis(20));
        let r = p.poll(Duration::ZERO).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].device_id, "rapl:package-0");
        assert!(r[0].power_w > 0.0);

        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(
            RaplProvider::open(empty.path().to_str()),
            Err(TelemetryError::ProviderInit(_))
        ));
    }
}

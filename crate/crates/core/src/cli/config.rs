//! Global configuration. Precedence: command-line flag, then `WATTRANK_*`
//! environment variable, then config file, then built-in default.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::CliError;
use crate::metric::SamParams;

pub const DEFAULT_STORE: &str = "runs.jsonl";
pub const DEFAULT_CONFIG_FILE: &str = "wattrank.toml";

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub store: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub appliances: Option<PathBuf>,
    pub lenient: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }
}

/// Values given on the command line; `None` means "not given".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFlags {
    pub store: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub appliances: Option<PathBuf>,
    pub lenient: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Flag,
    Env,
    File,
    Default,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Flag => "flag",
            Source::Env => "env",
            Source::File => "config file",
            Source::Default => "default",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalConfig {
    pub store_path: PathBuf,
    pub alpha: f64,
    pub beta: f64,
    pub appliance_file: Option<PathBuf>,
    pub lenient: bool,
    /// (setting, value, where it came from), for `--show-config`.
    pub provenance: Vec<(&'static str, String, Source)>,
}

impl GlobalConfig {
    pub fn params(&self) -> SamParams {
        SamParams {
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn describe(&self) -> String {
        self.provenance
            .iter()
            .map(|(k, v, s)| format!("{k} = {v} ({s})\n"))
            .collect()
    }
}

fn pick<T>(
    flag: Option<T>,
    env: Option<Result<T, CliError>>,
    file: Option<T>,
    default: Option<T>,
) -> Result<(Option<T>, Source), CliError> {
    if let Some(v) = flag {
        return Ok((Some(v), Source::Flag));
    }
    if let Some(v) = env {
        return Ok((Some(v?), Source::Env));
    }
    if let Some(v) = file {
        return Ok((Some(v), Source::File));
    }
    Ok((default, Source::Default))
}

fn env_f64(env: &dyn Fn(&str) -> Option<String>, key: &str) -> Option<Result<f64, CliError>> {
    env(key).map(|v| {
        v.trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{key}=`{v}` is not a number")))
    })
}

fn env_bool(env: &dyn Fn(&str) -> Option<String>, key: &str) -> Option<Result<bool, CliError>> {
    env(key).map(|v| match v.trim() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" | "" => Ok(false),
        other => Err(CliError::Usage(format!("{key}=`{other}` is not a boolean"))),
    })
}

pub fn resolve_config(
    flags: &ConfigFlags,
    env: &dyn Fn(&str) -> Option<String>,
    file: Option<&ConfigFile>,
) -> Result<GlobalConfig, CliError> {
    let file = file.cloned().unwrap_or_default();
    let mut provenance = Vec::new();

    let (store, s) = pick(
        flags.store.clone(),
        env("WATTRANK_STORE").map(|v| Ok(PathBuf::from(v))),
        file.store,
        Some(PathBuf::from(DEFAULT_STORE)),
    )?;
    let store_path = store.expect("store has a default");
    provenance.push(("store", store_path.display().to_string(), s));

    let (alpha, s) = pick(flags.alpha, env_f64(env, "WATTRANK_ALPHA"), file.alpha, Some(5.0))?;
    let alpha = alpha.expect("alpha has a default");
    provenance.push(("alpha", alpha.to_string(), s));

    let (beta, s) = pick(flags.beta, env_f64(env, "WATTRANK_BETA"), file.beta, Some(5.0))?;
    let beta = beta.expect("beta has a default");
    provenance.push(("beta", beta.to_string(), s));

    let (appliance_file, s) = pick(
        flags.appliances.clone(),
        env("WATTRANK_APPLIANCES").map(|v| Ok(PathBuf::from(v))),
        file.appliances,
        None,
    )?;
    provenance.push((
        "appliances",
        appliance_file
            .as_ref()
            .map_or_else(|| "(none)".to_string(), |p| p.display().to_string()),
        s,
    ));

    let (lenient, s) = pick(
        flags.lenient.then_some(true),
        env_bool(env, "WATTRANK_LENIENT"),
        file.lenient,
        Some(false),
    )?;
    let lenient = lenient.unwrap_or(false);
    provenance.push(("lenient", lenient.to_string(), s));

    SamParams::new(alpha, beta).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(GlobalConfig {
        store_path,
        alpha,
        beta,
        appliance_file,
        lenient,
        provenance,
    })
}

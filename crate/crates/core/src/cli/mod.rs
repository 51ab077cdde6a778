//! The `wattrank` command line.
//!
//! Exit codes: 0 ok, 1 usage, 2 validation, 3 metric undefined (below
//! 1 kWh), 4 provider or spawn failure. `track` exits with the child's code
//! once tracking itself succeeded.

mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{resolve_config, ConfigFile, ConfigFlags, GlobalConfig, Source, DEFAULT_CONFIG_FILE};

use crate::energy::{integrate_trace, EnergyError, EnergyKwh};
use crate::format::sig6;
use crate::metric::{rank, sam, sam_sweep, MetricError};
use crate::pipeline::{pipeline_probe_to_sam, PipelineError};
use crate::report::{
    appliance_equiv, build_report, load_appliances, pareto_frontier, render_report, ReportError,
    ReportFormat,
};
use crate::scaling::{
    amortize, fit_linear, predict, proportional_scale, FitKind, LinearFit, ProbePoint, ScaleRequest,
    ScalingError,
};
use crate::store::{
    append_runs, export_csv, import_csv, load_runs, AccuracyUnit, LoadOptions, RunDraft, RunFilter,
    RunRecord, StoreError,
};
use crate::telemetry::{replay, track, write_trace_csv, ProviderDescriptor, TelemetryError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_UNDEFINED: i32 = 3;
pub const EXIT_PROVIDER: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Undefined(String),
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Undefined(_) => EXIT_UNDEFINED,
            CliError::Provider(_) => EXIT_PROVIDER,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<EnergyError> for CliError {
    fn from(e: EnergyError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        if e.is_undefined() {
            CliError::Undefined(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<ScalingError> for CliError {
    fn from(e: ScalingError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Metric(m) => m.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<TelemetryError> for CliError {
    fn from(e: TelemetryError) -> Self {
        match e {
            TelemetryError::Usage(_) | TelemetryError::InvalidDescriptor(_) | TelemetryError::Interval { .. } => {
                CliError::Usage(e.to_string())
            }
            TelemetryError::ProviderInit(_) | TelemetryError::Poll(_) | TelemetryError::Spawn { .. } => {
                CliError::Provider(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match &e {
            PipelineError::Metric { source, .. } if source.is_undefined() => CliError::Undefined(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "wattrank", version, about = "Measure, extrapolate and rank the electricity cost of training runs")]
pub struct Cli {
    /// Run store (line-delimited records). Env: WATTRANK_STORE.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Accuracy exponent. Env: WATTRANK_ALPHA.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Score scale. Env: WATTRANK_BETA.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Appliance profile file (`name,kwh_per_month`). Env: WATTRANK_APPLIANCES.
    #[arg(long, global = true)]
    appliances: Option<PathBuf>,
    /// Skip malformed store lines and unknown CSV columns.
    #[arg(long, global = true)]
    lenient: bool,
    /// Config file (TOML). Env: WATTRANK_CONFIG; default ./wattrank.toml if present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the resolved configuration to stderr before running.
    #[arg(long, global = true)]
    show_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default, Clone)]
struct FilterArgs {
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    model: Option<String>,
}

impl From<FilterArgs> for RunFilter {
    fn from(f: FilterArgs) -> Self {
        RunFilter {
            task: f.task,
            dataset: f.dataset,
            model: f.model,
        }
    }
}

#[derive(Debug, Args, Clone, Copy)]
struct ScaleArgs {
    #[arg(long)]
    probe_fraction: f64,
    #[arg(long)]
    probe_epochs: f64,
    #[arg(long)]
    target_fraction: f64,
    #[arg(long)]
    target_epochs: f64,
}

impl From<ScaleArgs> for ScaleRequest {
    fn from(a: ScaleArgs) -> Self {
        ScaleRequest {
            probe_fraction: a.probe_fraction,
            probe_epochs: a.probe_epochs,
            target_fraction: a.target_fraction,
            target_epochs: a.target_epochs,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a command while sampling power; write the trace and optionally record the run.
    Track(Box<TrackArgs>),
    /// Integrate a trace CSV into kWh.
    Integrate {
        trace: PathBuf,
        #[arg(long)]
        baseline_w: Option<f64>,
    },
    /// Score one (accuracy, kWh) pair.
    Sam {
        #[arg(long, allow_negative_numbers = true)]
        accuracy: f64,
        #[arg(long, allow_negative_numbers = true)]
        kwh: f64,
        /// Accuracy is given in percent.
        #[arg(long)]
        percent: bool,
    },
    /// Rank stored runs per comparability group.
    Rank {
        #[command(flatten)]
        filter: FilterArgs,
        /// Rank mixed batch sizes together (flagged).
        #[arg(long)]
        force: bool,
    },
    /// Rank stored runs at several alphas and report order changes.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        #[command(flatten)]
        filter: FilterArgs,
    },
    /// Accuracy/energy Pareto frontier of stored runs.
    Pareto {
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long, default_value = "table-text")]
        format: ReportFormat,
    },
    /// Least-squares line through probe energies (CSV `x,energy_kwh`).
    Fit {
        #[arg(long = "x")]
        kind: FitKind,
        probes: PathBuf,
    },
    /// Evaluate a linear energy model.
    Predict {
        #[arg(long, allow_negative_numbers = true)]
        slope: f64,
        #[arg(long, allow_negative_numbers = true)]
        intercept: f64,
        #[arg(long, allow_negative_numbers = true)]
        at: f64,
        /// Fitted x range, to flag extrapolation.
        #[arg(long, requires = "x_max")]
        x_min: Option<f64>,
        #[arg(long, requires = "x_min")]
        x_max: Option<f64>,
    },
    /// Scale probe energy to a target data fraction and epoch count.
    Scale {
        #[arg(long, allow_negative_numbers = true)]
        probe_kwh: f64,
        #[command(flatten)]
        scale: ScaleArgs,
    },
    /// Share a pretraining bill across downstream tasks.
    Amortize {
        #[arg(long)]
        pretrain_kwh: f64,
        #[arg(long)]
        tasks: u32,
        #[arg(long, default_value_t = 0.0)]
        finetune_kwh: f64,
        #[arg(long, default_value_t = 0.0)]
        inference_kwh: f64,
    },
    /// Express energy as months of appliance consumption.
    Equiv {
        #[arg(long)]
        kwh: f64,
    },
    /// Append records from a CSV file to the store.
    Import {
        csv: PathBuf,
        #[arg(long, default_value = "fraction")]
        accuracy_unit: AccuracyUnit,
    },
    /// Write stored records as CSV.
    Export {
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List stored records.
    Ls {
        #[command(flatten)]
        filter: FilterArgs,
    },
    /// Leaderboard with Pareto flags and plot series.
    Report {
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long, default_value = "table-text")]
        format: ReportFormat,
        #[arg(long)]
        force: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probe trace -> proportional scaling -> score.
    Pipeline {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        baseline_w: Option<f64>,
        #[command(flatten)]
        scale: ScaleArgs,
        #[arg(long)]
        accuracy: f64,
        #[arg(long)]
        percent: bool,
        #[arg(long, default_value = "probe")]
        run_id: String,
    },
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[arg(long, default_value_t = crate::telemetry::DEFAULT_INTERVAL_MS)]
    interval_ms: u64,
    /// replay:<file> | synthetic:<watts>[,<watts>...] | live:<selector>
    #[arg(long, default_value = "live:nvidia-smi")]
    provider: String,
    #[arg(long)]
    baseline_w: Option<f64>,
    /// Trace CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append the completed run to this store.
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    hardware: Option<String>,
    #[arg(long)]
    gpu_count: Option<u32>,
    #[arg(long)]
    batch_size: Option<u32>,
    #[arg(long)]
    epochs: Option<f64>,
    #[arg(long)]
    data_fraction: Option<f64>,
    #[arg(long)]
    accuracy: Option<f64>,
    #[arg(long, default_value = "fraction")]
    accuracy_unit: AccuracyUnit,
    #[arg(long)]
    notes: Option<String>,
    #[arg(last = true, required = true)]
    command: Vec<String>,
}

/// Everything a command needs from the outside world.
pub struct Io<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
    pub env: &'a dyn Fn(&str) -> Option<String>,
}

/// Parses `args` and runs the command against the real process environment.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    let env = |k: &str| std::env::var(k).ok();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    run_with(
        args,
        Io {
            out: &mut out,
            err: &mut err,
            env: &env,
        },
    )
}

pub fn run_with<I, T>(args: I, io: Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = io.err.write_all(rendered.as_bytes());
            } else {
                let _ = io.out.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    match execute(cli, io.out, io.err, io.env) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli, env: &dyn Fn(&str) -> Option<String>) -> Result<GlobalConfig, CliError> {
    let file_path = cli
        .config
        .clone()
        .or_else(|| env("WATTRANK_CONFIG").map(PathBuf::from))
        .or_else(|| {
            let p = PathBuf::from(DEFAULT_CONFIG_FILE);
            p.exists().then_some(p)
        });
    let file = file_path.as_deref().map(ConfigFile::load).transpose()?;
    let flags = ConfigFlags {
        store: cli.store.clone(),
        alpha: cli.alpha,
        beta: cli.beta,
        appliances: cli.appliances.clone(),
        lenient: cli.lenient,
    };
    resolve_config(&flags, env, file.as_ref())
}

fn load_store(cfg: &GlobalConfig, filter: FilterArgs, err: &mut dyn Write) -> Result<Vec<RunRecord>, CliError> {
    let report = load_runs(
        &cfg.store_path,
        &filter.into(),
        LoadOptions {
            lenient: cfg.lenient,
            create: false,
        },
    )?;
    if report.skipped > 0 {
        writeln!(err, "warning: skipped {} malformed line(s)", report.skipped)?;
    }
    if report.partial_tail {
        writeln!(err, "warning: ignoring an incomplete last line (quarantined on next append)")?;
    }
    Ok(report.records)
}

fn create_output(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn read_probes(path: &Path) -> Result<Vec<ProbePoint>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| CliError::Validation(e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != ["x", "energy_kwh"] {
        return Err(CliError::Validation(format!(
            "probe file header must be `x,energy_kwh`, got `{}`",
            names.join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Validation(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| CliError::Validation(format!("probe row {line}: expected two numbers")))
        };
        out.push(ProbePoint::new(num(0)?, num(1)?));
    }
    Ok(out)
}

fn accuracy_from(value: f64, percent: bool) -> f64 {
    if percent {
        AccuracyUnit::Percent.normalize(value)
    } else {
        value
    }
}

fn execute(
    cli: Cli,
    out: &mut dyn Write,
    err: &mut dyn Write,
    env: &dyn Fn(&str) -> Option<String>,
) -> Result<i32, CliError> {
    let cfg = load_config(&cli, env)?;
    if cli.show_config {
        err.write_all(cfg.describe().as_bytes())?;
    }
    let params = cfg.params();

    match cli.command {
        Command::Track(args) => return cmd_track(*args, out, err),
        Command::Integrate { trace, baseline_w } => {
            let r = replay(&trace)?;
            if !r.violations.is_empty() {
                for v in &r.violations {
                    writeln!(err, "violation: {v}")?;
                }
            }
            let kwh = integrate_trace(&r.trace, baseline_w)?;
            writeln!(out, "{}", sig6(kwh.value()))?;
        }
        Command::Sam { accuracy, kwh, percent } => {
            let energy = EnergyKwh::new(kwh).map_err(|e| CliError::Validation(e.to_string()))?;
            let v = sam(accuracy_from(accuracy, percent), energy, params)?;
            writeln!(out, "{}", sig6(v))?;
        }
        Command::Rank { filter, force } => {
            let runs = load_store(&cfg, filter, err)?;
            for g in rank(&runs, params, force)? {
                writeln!(
                    out,
                    "== {} / {} (batch size {}){}",
                    g.task,
                    g.dataset,
                    g.batch_sizes.iter().map(u32::to_string).collect::<Vec<_>>().join(";"),
                    if g.flagged { " [FORCED: not comparable]" } else { "" }
                )?;
                for w in &g.warnings {
                    writeln!(err, "warning: {}/{}: {w}", g.task, g.dataset)?;
                }
                let rows: Vec<Vec<String>> = g
                    .entries
                    .iter()
                    .enumerate()
                    .map(|(i, e)| {
                        vec![
                            (i + 1).to_string(),
                            e.record.run_id.clone(),
                            e.record.model.clone(),
                            sig6(e.record.accuracy),
                            sig6(e.score.electricity_used_kwh),
                            sig6(e.score.value),
                        ]
                    })
                    .collect();
                out.write_all(
                    crate::report::text_table(
                        &["rank", "run_id", "model", "accuracy", "train_kwh", "sam"],
                        &rows,
                    )
                    .as_bytes(),
                )?;
            }
        }
        Command::Sweep { alphas, filter } => {
            let runs = load_store(&cfg, filter, err)?;
            let table = sam_sweep(&runs, &alphas, cfg.beta)?;
            for row in &table.rows {
                let orders: Vec<String> = row.orders().iter().map(|o| o.join(" > ")).collect();
                writeln!(out, "alpha {}: {}", sig6(row.alpha), orders.join(" | "))?;
            }
            if table.crossovers.is_empty() {
                writeln!(out, "no rank changes")?;
            }
            for (lo, hi) in &table.crossovers {
                writeln!(out, "rank change between alpha {} and {}", sig6(*lo), sig6(*hi))?;
            }
        }
        Command::Pareto { filter, format } => {
            let runs = load_store(&cfg, filter, err)?;
            let frontier = pareto_frontier(&runs)?;
            match format {
                ReportFormat::Json => {
                    let pts: Vec<_> = frontier.iter().map(|r| crate::report::ParetoPoint::of(r)).collect();
                    serde_json::to_writer_pretty(&mut *out, &pts).map_err(|e| CliError::Validation(e.to_string()))?;
                    writeln!(out)?;
                }
                ReportFormat::Csv => {
                    let owned: Vec<RunRecord> = frontier.into_iter().cloned().collect();
                    export_csv(&owned, &mut *out)?;
                }
                ReportFormat::TableText => {
                    let rows: Vec<Vec<String>> = frontier
                        .iter()
                        .map(|r| {
                            vec![
                                r.run_id.clone(),
                                r.model.clone(),
                                sig6(r.accuracy),
                                sig6(r.train_energy_kwh),
                            ]
                        })
                        .collect();
                    out.write_all(
                        crate::report::text_table(&["run_id", "model", "accuracy", "train_kwh"], &rows)
                            .as_bytes(),
                    )?;
                }
            }
        }
        Command::Fit { kind, probes } => {
            let fit = fit_linear(&read_probes(&probes)?, kind)?;
            writeln!(out, "slope {}", sig6(fit.slope))?;
            writeln!(out, "intercept {}", sig6(fit.intercept))?;
            writeln!(out, "r_squared {}", sig6(fit.r_squared))?;
        }
        Command::Predict {
            slope,
            intercept,
            at,
            x_min,
            x_max,
        } => {
            let mut fit = LinearFit::from_coefficients(FitKind::Epochs, slope, intercept);
            fit.x_range = x_min.zip(x_max);
            let p = predict(&fit, at)?;
            if let Some(w) = &p.warning {
                writeln!(err, "warning: {w}")?;
            }
            if p.extrapolated {
                writeln!(err, "note: x = {at} is outside the fitted range")?;
            }
            writeln!(out, "{}", sig6(p.energy.value()))?;
        }
        Command::Scale { probe_kwh, scale } => {
            let probe = EnergyKwh::new(probe_kwh).map_err(|e| CliError::Validation(e.to_string()))?;
            let e = proportional_scale(probe, &scale.into())?;
            writeln!(out, "{}", sig6(e.value()))?;
        }
        Command::Amortize {
            pretrain_kwh,
            tasks,
            finetune_kwh,
            inference_kwh,
        } => {
            let k = |v: f64| EnergyKwh::new(v).map_err(|e| CliError::Validation(e.to_string()));
            let a = amortize(k(pretrain_kwh)?, tasks, k(finetune_kwh)?, k(inference_kwh)?)?;
            writeln!(out, "pretrain_share_kwh {}", sig6(a.pretrain_share_kwh))?;
            writeln!(out, "finetune_kwh {}", sig6(a.finetune_kwh))?;
            writeln!(out, "inference_kwh {}", sig6(a.inference_kwh))?;
            writeln!(out, "total_kwh {}", sig6(a.total_kwh))?;
        }
        Command::Equiv { kwh } => {
            let path = cfg
                .appliance_file
                .as_deref()
                .ok_or_else(|| CliError::Usage("equiv needs --appliances <file>".into()))?;
            let profiles = load_appliances(path)?;
            let energy = EnergyKwh::new(kwh).map_err(|e| CliError::Validation(e.to_string()))?;
            for e in appliance_equiv(energy, &profiles)? {
                writeln!(out, "{}: {} months", e.name, sig6(e.months))?;
            }
        }
        Command::Import { csv, accuracy_unit } => {
            let file = File::open(&csv).map_err(|e| CliError::Validation(format!("{}: {e}", csv.display())))?;
            let records = import_csv(file, cfg.lenient, accuracy_unit)?;
            let ack = append_runs(&cfg.store_path, &records)?;
            if ack.quarantined_bytes > 0 {
                writeln!(err, "warning: quarantined {} bytes of an incomplete last line", ack.quarantined_bytes)?;
            }
            writeln!(out, "imported {} record(s); store now holds {}", ack.appended, ack.total)?;
        }
        Command::Export { filter, out: path } => {
            let runs = load_store(&cfg, filter, err)?;
            match path {
                Some(p) => export_csv(&runs, create_output(&p)?)?,
                None => export_csv(&runs, &mut *out)?,
            }
        }
        Command::Ls { filter } => {
            let runs = load_store(&cfg, filter, err)?;
            let rows: Vec<Vec<String>> = runs
                .iter()
                .map(|r| {
                    vec![
                        r.run_id.clone(),
                        r.model.clone(),
                        r.task.clone(),
                        r.dataset.clone(),
                        r.batch_size.to_string(),
                        sig6(r.accuracy),
                        sig6(r.train_energy_kwh),
                    ]
                })
                .collect();
            out.write_all(
                crate::report::text_table(
                    &["run_id", "model", "task", "dataset", "batch", "accuracy", "train_kwh"],
                    &rows,
                )
                .as_bytes(),
            )?;
        }
        Command::Report {
            filter,
            format,
            force,
            out: path,
        } => {
            let runs = load_store(&cfg, filter, err)?;
            let doc = render_report(&runs, params, format, force)?;
            for g in build_report(&runs, params, force)?.groups {
                for w in g.warnings {
                    writeln!(err, "warning: {}/{}: {w}", g.task, g.dataset)?;
                }
            }
            match path {
                Some(p) => create_output(&p)?.write_all(doc.as_bytes())?,
                None => out.write_all(doc.as_bytes())?,
            }
        }
        Command::Pipeline {
            trace,
            baseline_w,
            scale,
            accuracy,
            percent,
            run_id,
        } => {
            let r = replay(&trace)?;
            let result = pipeline_probe_to_sam(
                &r.trace,
                baseline_w,
                &scale.into(),
                accuracy_from(accuracy, percent),
                params,
                &run_id,
            );
            match result {
                Ok(o) => {
                    writeln!(out, "probe_kwh {}", sig6(o.probe_kwh))?;
                    writeln!(out, "extrapolated_kwh {}", sig6(o.extrapolated_kwh))?;
                    writeln!(out, "sam {}", sig6(o.score.value))?;
                }
                Err(PipelineError::Metric {
                    probe_kwh,
                    extrapolated_kwh,
                    source,
                }) => {
                    writeln!(out, "probe_kwh {}", sig6(probe_kwh))?;
                    writeln!(out, "extrapolated_kwh {}", sig6(extrapolated_kwh))?;
                    return Err(PipelineError::Metric {
                        probe_kwh,
                        extrapolated_kwh,
                        source,
                    }
                    .into());
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(EXIT_OK)
}

fn cmd_track(args: TrackArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let provider: ProviderDescriptor = args.provider.parse()?;
    let provider = provider.with_interval(args.interval_ms);
    let draft = RunDraft {
        run_id: args.run_id,
        model: args.model,
        task: args.task,
        dataset: args.dataset,
        hardware: args.hardware,
        gpu_count: args.gpu_count,
        batch_size: args.batch_size,
        epochs: args.epochs,
        data_fraction: args.data_fraction,
        accuracy: args.accuracy.map(|a| args.accuracy_unit.normalize(a)),
        notes: args.notes,
    };
    let outcome = track(&args.command, &provider, draft)?;

    if let Some(path) = &args.out {
        write_trace_csv(&outcome.trace, create_output(path)?)?;
    }
    let kwh = integrate_trace(&outcome.trace, args.baseline_w);
    writeln!(
        err,
        "tracked `{}`: exit {}, {:.3} s, {} samples, {}",
        args.command.join(" "),
        outcome.child_exit_code,
        outcome.wall_seconds,
        outcome.trace.len(),
        match &kwh {
            Ok(k) => format!("{} kWh", sig6(k.value())),
            Err(e) => format!("energy unavailable ({e})"),
        }
    )?;
    if outcome.poll_failures > 0 {
        writeln!(err, "warning: {} provider poll(s) failed and were skipped", outcome.poll_failures)?;
    }

    if let Some(store) = &args.record {
        let kwh = kwh?;
        let model = outcome.run_skeleton.model.clone().unwrap_or_default();
        let default_id = format!("{model}-{}", outcome.spawn_ms);
        let record = outcome.run_skeleton.complete(kwh.value(), &default_id)?;
        append_runs(store, std::slice::from_ref(&record))?;
        writeln!(err, "recorded run `{}` in {}", record.run_id, store.display())?;
    }
    out.flush()?;
    Ok(outcome.child_exit_code)
}

//! Command-line front end and the JSON report schema.
//!
//! Reports carry `schema_version`, `command`, the fully resolved `config`
//! (including the seed, so every report can be re-run), `results` and
//! `timing`. Wall-clock time goes to stderr only, which keeps reports
//! byte-identical across re-runs.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    run_experiment, run_teleport_batch, scaling_sweep, Experiment, RunReport, SweepRow,
    TeleportReport,
};
use crate::error::Error;
use crate::protocol::{ProtocolConfig, ResourceMode, TeleportConfig};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INSUFFICIENT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "wclass-sim",
    version,
    about = "Heralded W-state preparation and W-based teleportation with atomic ensembles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Heralded EPR link between ensembles 1 and 2.
    Epr(RunArgs),
    /// Full n-party W-state preparation.
    WState(RunArgs),
    /// Teleport α s_L + β s_R to two receivers over two W₃ states.
    Teleport(TeleportArgs),
    /// W-state preparation for every n in a range.
    ScalingSweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// JSON file shaped like a report's `config` object; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "pe")]
    pub p_e: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub trials: Option<u64>,
    /// Integer seed, or `auto` to draw one and record it.
    #[arg(long)]
    pub seed: Option<SeedArg>,
    #[arg(long)]
    pub t0: Option<f64>,
    /// Comma-separated channel phases φ₁₁,…,φ₁ₙ in radians.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub phases: Option<Vec<f64>>,
    /// Atoms per ensemble; omit for the bosonic limit.
    #[arg(long = "n-a")]
    pub n_a: Option<u64>,
    #[arg(long)]
    pub cap: Option<u32>,
    #[arg(long)]
    pub max_attempts: Option<u64>,
    /// Drop the double-pair term of the pump expansion.
    #[arg(long)]
    pub no_double_pair: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, env = "WCLASS_SIM_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone)]
pub struct TeleportArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_re: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_im: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta_re: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta_im: Option<f64>,
    #[arg(long, value_enum)]
    pub resources: Option<ResourceArg>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[arg(long)]
    pub n_min: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    CsvSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ResourceArg {
    Prepared,
    Ideal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedArg {
    Auto,
    Fixed(u64),
}

impl std::str::FromStr for SeedArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "auto" {
            Ok(SeedArg::Auto)
        } else {
            s.parse()
                .map(SeedArg::Fixed)
                .map_err(|_| format!("`{s}` is neither an unsigned integer nor `auto`"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Epr,
    WState,
    Teleport,
    ScalingSweep,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Epr => "epr",
            CommandKind::WState => "w-state",
            CommandKind::Teleport => "teleport",
            CommandKind::ScalingSweep => "scaling-sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeleportSettings {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub resources: ResourceMode,
}

impl Default for TeleportSettings {
    fn default() -> Self {
        Self {
            alpha: [1.0, 0.0],
            beta: [0.0, 0.0],
            resources: ResourceMode::Prepared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub n_min: usize,
    pub n_max: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { n_min: 3, n_max: 5 }
    }
}

/// The resolved experiment, echoed verbatim in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trials: u64,
    pub protocol: ProtocolConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teleport: Option<TeleportSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSettings>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            protocol: ProtocolConfig::default(),
            teleport: None,
            sweep: None,
        }
    }
}

/// A parsed and validated command line.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub command: CommandKind,
    pub config: ExperimentConfig,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub workers: Option<usize>,
    /// The seed was drawn by `--seed auto`.
    pub seed_drawn: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Results {
    Sweep { rows: Vec<SweepRow> },
    Run(RunReport),
    Teleport(TeleportReport),
}

/// Simulated time only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub t0_s: f64,
    /// One entry per batch (several for a sweep).
    pub mean_attempts: Vec<f64>,
    pub mean_simulated_time_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub config: ExperimentConfig,
    pub results: Results,
    pub timing: Timing,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// True when some batch produced no heralded outcome.
    pub fn insufficient(&self) -> bool {
        match &self.results {
            Results::Run(r) => r.successes == 0,
            Results::Teleport(r) => r.successes == 0,
            Results::Sweep { rows } => rows.iter().any(|r| r.report.successes == 0),
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Parse failures and `--help`/`--version`, printed by clap.
    Clap(clap::Error),
    Usage(String),
    InsufficientData(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Clap(e) => e.exit_code(),
            CliError::Usage(_) => EXIT_USAGE,
            CliError::InsufficientData(_) => EXIT_INSUFFICIENT_DATA,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InsufficientData(_) | Error::AttemptsExhausted { .. } => {
                CliError::InsufficientData(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `argv` (including the program name) into a validated spec.
pub fn parse_args<I, T>(argv: I) -> Result<ExperimentSpec, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(CliError::Clap)?;
    let (command, common, n, extra) = match cli.command {
        Command::Epr(a) => (CommandKind::Epr, a.common, a.n, Extra::None),
        Command::WState(a) => (CommandKind::WState, a.common, a.n, Extra::None),
        Command::Teleport(a) => {
            let t = a.clone();
            (CommandKind::Teleport, a.common, None, Extra::Teleport(t))
        }
        Command::ScalingSweep(a) => {
            let s = a.clone();
            (CommandKind::ScalingSweep, a.common, None, Extra::Sweep(s))
        }
    };
    resolve(command, common, n, extra)
}

enum Extra {
    None,
    Teleport(TeleportArgs),
    Sweep(SweepArgs),
}

fn resolve(
    command: CommandKind,
    common: CommonArgs,
    n: Option<usize>,
    extra: Extra,
) -> Result<ExperimentSpec, CliError> {
    let (mut config, file_seed) = match &common.config {
        None => (ExperimentConfig::default(), false),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| usage(format!("config file {}: {e}", path.display())))?;
            let has_seed = value.get("protocol").and_then(|p| p.get("seed")).is_some();
            let config = serde_json::from_value(value)
                .map_err(|e| usage(format!("config file {}: {e}", path.display())))?;
            (config, has_seed)
        }
    };

    let p = &mut config.protocol;
    let mut seed_drawn = false;
    match common.seed {
        Some(SeedArg::Fixed(s)) => p.seed = s,
        Some(SeedArg::Auto) => {
            p.seed = rand::random();
            seed_drawn = true;
        }
        None if file_seed => {}
        None => return Err(usage("--seed is required (an integer or `auto`)")),
    }
    if let Some(v) = common.p_e {
        p.p_e = v;
    }
    if let Some(v) = common.eta {
        p.eta = v;
    }
    if let Some(v) = common.t0 {
        p.t0 = v;
    }
    if let Some(v) = common.n_a {
        p.n_a = Some(v);
    }
    if let Some(v) = common.cap {
        p.truncation_cap = v;
    }
    if let Some(v) = common.max_attempts {
        p.max_attempts = v;
    }
    if common.no_double_pair {
        p.double_pair = false;
    }
    if let Some(v) = common.trials {
        config.trials = v;
    }
    if config.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if common.workers == Some(0) {
        return Err(usage("--workers must be at least 1"));
    }

    let target_n = match (&extra, command) {
        (Extra::Sweep(s), _) => {
            let mut sweep = config.sweep.take().unwrap_or_default();
            if let Some(v) = s.n_min {
                sweep.n_min = v;
            }
            if let Some(v) = s.n_max {
                sweep.n_max = v;
            }
            if sweep.n_min < 3 || sweep.n_max < sweep.n_min {
                return Err(usage(format!(
                    "sweep range {}..={} must satisfy 3 ≤ n-min ≤ n-max",
                    sweep.n_min, sweep.n_max
                )));
            }
            let n_min = sweep.n_min;
            config.sweep = Some(sweep);
            n_min
        }
        (Extra::Teleport(_), _) => 3,
        _ => n.unwrap_or(config.protocol.n),
    };
    set_parties(&mut config.protocol, target_n, common.phases)?;

    if let Extra::Teleport(t) = &extra {
        let mut tele = config.teleport.take().unwrap_or_default();
        if let Some(v) = t.alpha_re {
            tele.alpha[0] = v;
        }
        if let Some(v) = t.alpha_im {
            tele.alpha[1] = v;
        }
        if let Some(v) = t.beta_re {
            tele.beta[0] = v;
        }
        if let Some(v) = t.beta_im {
            tele.beta[1] = v;
        }
        if let Some(r) = t.resources {
            tele.resources = match r {
                ResourceArg::Prepared => ResourceMode::Prepared,
                ResourceArg::Ideal => ResourceMode::Ideal,
            };
        }
        teleport_config(&config.protocol, &tele).validate()?;
        config.teleport = Some(tele);
    } else {
        config.teleport = None;
    }
    if !matches!(extra, Extra::Sweep(_)) {
        config.sweep = None;
    }

    match command {
        CommandKind::Epr => config.protocol.validate()?,
        CommandKind::WState | CommandKind::ScalingSweep => config.protocol.validate_w()?,
        CommandKind::Teleport => {}
    }
    if common.format == Format::CsvSummary && command != CommandKind::ScalingSweep {
        return Err(usage(
            "--format csv-summary is only available for scaling-sweep",
        ));
    }

    Ok(ExperimentSpec {
        command,
        config,
        output: common.output,
        format: common.format,
        workers: common.workers,
        seed_drawn,
    })
}

fn set_parties(p: &mut ProtocolConfig, n: usize, phases: Option<Vec<f64>>) -> Result<(), CliError> {
    p.n = n;
    match phases {
        Some(v) => p.phases = v,
        None if p.phases.len() != n => {
            if p.phases.iter().any(|&x| x != 0.0) {
                return Err(usage(format!(
                    "configured phases have length {} but n = {n}",
                    p.phases.len()
                )));
            }
            p.phases = vec![0.0; n];
        }
        None => {}
    }
    Ok(())
}

fn teleport_config(p: &ProtocolConfig, t: &TeleportSettings) -> TeleportConfig {
    TeleportConfig {
        alpha: t.alpha,
        beta: t.beta,
        base: p.clone(),
        resources: t.resources,
    }
}

/// Runs the experiment a spec describes.
pub fn execute(spec: &ExperimentSpec) -> Result<Report, CliError> {
    let cfg = &spec.config;
    let p = &cfg.protocol;
    let (results, attempts, times) = match spec.command {
        CommandKind::Epr | CommandKind::WState => {
            let exp = if spec.command == CommandKind::Epr {
                Experiment::Epr
            } else {
                Experiment::WState
            };
            let r = run_experiment(p, exp, cfg.trials, spec.workers)?;
            let (a, t) = (r.mean_attempts, r.mean_time_s);
            (Results::Run(r), vec![a], vec![t])
        }
        CommandKind::Teleport => {
            let tele = cfg.teleport.as_ref().expect("resolved teleport settings");
            let r = run_teleport_batch(&teleport_config(p, tele), cfg.trials, spec.workers)?;
            let (a, t) = (r.mean_attempts, r.mean_time_s);
            (Results::Teleport(r), vec![a], vec![t])
        }
        CommandKind::ScalingSweep => {
            let sweep = cfg.sweep.as_ref().expect("resolved sweep settings");
            let rows = scaling_sweep(p, sweep.n_min, sweep.n_max, cfg.trials, spec.workers)?;
            let a = rows.iter().map(|r| r.report.mean_attempts).collect();
            let t = rows.iter().map(|r| r.report.mean_time_s).collect();
            (Results::Sweep { rows }, a, t)
        }
    };
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        command: spec.command.name().to_string(),
        config: cfg.clone(),
        results,
        timing: Timing {
            t0_s: p.t0,
            mean_attempts: attempts,
            mean_simulated_time_s: times,
        },
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `n, p_c_hat, mean_time_s, predicted_time_s, ratio_to_prev, c_n_hat, fidelity_mean`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "n",
        "p_c_hat",
        "mean_time_s",
        "predicted_time_s",
        "ratio_to_prev",
        "c_n_hat",
        "fidelity_mean",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.report.p_c_hat.to_string(),
            r.report.mean_time_s.to_string(),
            opt(r.report.predicted_time_s),
            opt(r.ratio_to_prev),
            opt(r.report.c_n_hat),
            opt(r.report.fidelity_mean),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn summary(report: &Report) -> Vec<String> {
    let fmt_opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
    match &report.results {
        Results::Run(r) => vec![format!(
            "{}: {}/{} heralded, p_c_hat {:.4e}, mean time {:.4e} s (predicted {}), fidelity {}, c_n {}",
            report.command,
            r.successes,
            r.trials,
            r.p_c_hat,
            r.mean_time_s,
            r.predicted_time_s.map_or("n/a".into(), |t| format!("{t:.4e} s")),
            fmt_opt(r.fidelity_mean),
            fmt_opt(r.c_n_hat),
        )],
        Results::Teleport(r) => vec![format!(
            "teleport: {}/{} heralded, vacuum fraction {}, Carol holds {}, holder fidelity {}",
            r.successes,
            r.trials,
            fmt_opt(r.vacuum_fraction),
            fmt_opt(r.carol_fraction),
            fmt_opt(r.holder_fidelity_mean),
        )],
        Results::Sweep { rows } => rows
            .iter()
            .map(|r| {
                format!(
                    "n={}: mean time {:.4e} s, ratio {}, law ratio {}",
                    r.n,
                    r.report.mean_time_s,
                    fmt_opt(r.ratio_to_prev),
                    fmt_opt(r.law_ratio),
                )
            })
            .collect(),
    }
}

fn write_output(spec: &ExperimentSpec, body: &str) -> Result<(), CliError> {
    match &spec.output {
        Some(path) => fs::write(path, body)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(body.as_bytes())
            .map_err(|e| CliError::Io(format!("cannot write to stdout: {e}"))),
    }
}

/// Executes `spec`, writes the report and returns the exit code.
pub fn run(spec: &ExperimentSpec) -> i32 {
    if spec.seed_drawn {
        eprintln!("seed: {}", spec.config.protocol.seed);
    }
    let start = Instant::now();
    let report = match execute(spec) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let body = match (spec.format, &report.results) {
        (Format::CsvSummary, Results::Sweep { rows }) => sweep_csv(rows),
        _ => report.to_json(),
    };
    if let Err(e) = write_output(spec, &body) {
        return fail(e);
    }
    for line in summary(&report) {
        eprintln!("{line}");
    }
    eprintln!("wall-clock: {:.3} s", start.elapsed().as_secs_f64());
    if report.insufficient() {
        eprintln!("error: insufficient data: a batch produced no heralded outcome");
        return EXIT_INSUFFICIENT_DATA;
    }
    EXIT_OK
}

fn fail(e: CliError) -> i32 {
    match &e {
        CliError::Clap(err) => {
            let _ = err.print();
        }
        CliError::Usage(m) => eprintln!("error: {m}"),
        CliError::InsufficientData(m) => eprintln!("error: insufficient data: {m}"),
        CliError::Io(m) => eprintln!("error: {m}"),
    }
    e.exit_code()
}

/// Entry point of the binary: parse, run, and return the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match parse_args(argv) {
        Ok(spec) => run(&spec),
        Err(e) => fail(e),
    }
}

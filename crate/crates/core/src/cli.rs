//! Command-line interface: nominal propagation, gain design and Monte Carlo
//! runs. Every command writes its outputs and a JSON run manifest into the
//! output directory.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gains::design::{
    design_apollo, design_stochastic, design_zero, predict, Design, DesignContext, TriggerKind,
};
use crate::gains::schedule::GainSchedule;
use crate::gains::synthesis::SynthesisOptions;
use crate::guidance::correction_bound;
use crate::linalg::{IDX_GAMMA, IDX_R, IDX_RANGE, IDX_V};
use crate::montecarlo::{run_ensemble, write_overlay_csv, write_summary_csv, write_trials_csv, EnsembleStats, TrialSetup};
use crate::scenario::Scenario;
use crate::triggers::TriggerSpec;

/// Environment variable overriding the default Monte Carlo worker count.
pub const WORKERS_ENV: &str = "ENTRY_GUIDANCE_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_DEGRADED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "entry-guidance", version, about = "Entry guidance gain design and Monte Carlo evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Propagate the reference trajectory.
    Nominal(NominalArgs),
    /// Design a gain schedule and its covariance prediction.
    Gains(GainsArgs),
    /// Run Monte Carlo ensembles for one or more gain schedules.
    Montecarlo(MonteCarloArgs),
}

#[derive(Debug, Args)]
pub struct NominalArgs {
    /// Scenario TOML file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Apollo,
    Stochastic,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Trigger {
    Time,
    Velocity,
}

impl From<Trigger> for TriggerKind {
    fn from(t: Trigger) -> Self {
        match t {
            Trigger::Time => TriggerKind::Time,
            Trigger::Velocity => TriggerKind::Velocity,
        }
    }
}

#[derive(Debug, Args)]
pub struct GainsArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long, value_enum)]
    pub trigger: Trigger,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Gain schedule CSV; repeat for several. Without any, the Apollo and
    /// stochastic schedules for both triggers are designed first.
    #[arg(long = "schedule")]
    pub schedules: Vec<PathBuf>,
    /// Trials per schedule; defaults to the scenario value.
    #[arg(short = 'n', long)]
    pub trials: Option<usize>,
    /// Master seed; defaults to the scenario value.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; overrides the environment and the core count.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<OutputFile>,
    /// Wall-clock duration; the only field that varies between reruns.
    pub duration_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Io { .. } | Error::Csv(_) | Error::Json(_) => EXIT_CONFIG,
        Error::Infeasible(_) | Error::Synthesis(_) => EXIT_INFEASIBLE,
        _ => EXIT_FAILURE,
    }
}

/// Worker count: the flag, then the environment variable, then the number
/// of available cores.
pub fn resolve_workers(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return if n > 0 { Ok(n) } else { Err(Error::Config("--workers must be positive".into())) };
    }
    if let Ok(text) = std::env::var(WORKERS_ENV) {
        return match text.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{WORKERS_ENV}=`{text}` is not a positive integer"))),
        };
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Collects output files and writes the manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn finish(self, name: &str, command: String, config: &Path, config_bytes: &[u8], seed: Option<u64>, started: Instant) -> Result<()> {
        let manifest = RunManifest {
            command,
            config_path: config.display().to_string(),
            config_sha256: sha256_hex(config_bytes),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self.files,
            duration_s: started.elapsed().as_secs_f64(),
        };
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Parses `args` and runs the command, returning the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a parsed command. Returns the exit code for runs that complete with
/// a degraded ensemble.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Nominal(a) => cmd_nominal(&a).map(|_| EXIT_OK),
        Command::Gains(a) => cmd_gains(&a).map(|_| EXIT_OK),
        Command::Montecarlo(a) => cmd_montecarlo(&a),
    }
}

pub fn synthesis_options(scenario: &Scenario) -> SynthesisOptions {
    SynthesisOptions {
        control_segments: scenario.synthesis.control_segments,
        ..SynthesisOptions::default()
    }
}

pub fn cmd_nominal(args: &NominalArgs) -> Result<()> {
    let started = Instant::now();
    let (scenario, bytes) = Scenario::load(&args.config)?;
    let ctx = DesignContext::new(&scenario)?;
    let mut out = Outputs::new(&args.out)?;
    out.write_with("reference.csv", |b| ctx.reference.write_csv(b))?;
    out.write_with("events.csv", |b| write_events(b, &ctx))?;
    out.finish(
        "nominal_manifest.json",
        "nominal".into(),
        &args.config,
        &bytes,
        None,
        started,
    )
}

/// Bank reversals and guidance mode changes along the reference.
fn write_events(out: &mut Vec<u8>, ctx: &DesignContext) -> Result<()> {
    use std::io::Write;
    let io = |e| Error::io("events", e);
    writeln!(out, "t_s,event,V_mps,dynamic_pressure_pa,bank_dir,mode").map_err(io)?;
    for w in ctx.reference.nodes.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let event = if a.mode != b.mode {
            "mode_change"
        } else if a.b_dir != b.b_dir {
            "reversal"
        } else {
            continue;
        };
        let v = b.state.v;
        writeln!(
            out,
            "{:?},{event},{v:?},{:?},{:?},{}",
            b.t,
            0.5 * b.x[4] * v * v,
            b.b_dir,
            b.mode.as_str()
        )
        .map_err(io)?;
    }
    Ok(())
}

fn design(ctx: &DesignContext, scenario: &Scenario, method: Method, kind: TriggerKind) -> Result<Design> {
    match method {
        Method::Apollo => design_apollo(ctx, scenario, kind),
        Method::Stochastic => design_stochastic(ctx, scenario, kind, &synthesis_options(scenario)),
        Method::Zero => design_zero(ctx, scenario, kind),
    }
}

#[derive(Serialize)]
struct GainsReport<'a> {
    method: &'static str,
    trigger: &'static str,
    schedule_rows: usize,
    /// Predicted 3-sigma errors at the trigger.
    altitude_3sigma_m: f64,
    velocity_3sigma_mps: f64,
    flight_path_3sigma_deg: f64,
    range_3sigma_m: f64,
    /// At the nominal final time.
    range_velocity_correlation: f64,
    synthesis: Option<&'a crate::gains::synthesis::SynthesisReport>,
}

pub fn cmd_gains(args: &GainsArgs) -> Result<()> {
    let started = Instant::now();
    let (scenario, bytes) = Scenario::load(&args.config)?;
    let ctx = DesignContext::new(&scenario)?;
    let kind: TriggerKind = args.trigger.into();
    let d = design(&ctx, &scenario, args.method, kind)?;
    let label = format!("{}_{}", d.schedule.method.as_str(), kind.as_str());
    let report = GainsReport {
        method: d.schedule.method.as_str(),
        trigger: kind.as_str(),
        schedule_rows: d.schedule.len(),
        altitude_3sigma_m: 3.0 * d.terminal_sigma(IDX_R),
        velocity_3sigma_mps: 3.0 * d.terminal_sigma(IDX_V),
        flight_path_3sigma_deg: 3.0 * d.terminal_sigma(IDX_GAMMA).to_degrees(),
        range_3sigma_m: 3.0 * d.terminal_sigma(IDX_RANGE),
        range_velocity_correlation: d.final_correlation(IDX_RANGE, IDX_V),
        synthesis: d.report.as_ref(),
    };
    let mut out = Outputs::new(&args.out)?;
    out.write_with(&format!("{label}_gains.csv"), |b| d.schedule.write_csv(b))?;
    out.write_with(&format!("{label}_prediction.csv"), |b| write_prediction(b, &ctx, &scenario, &d))?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    out.write(&format!("{label}_report.json"), json.as_bytes())?;
    out.finish(
        &format!("{label}_manifest.json"),
        format!("gains --method {} --trigger {}", report.method, report.trigger),
        &args.config,
        &bytes,
        None,
        started,
    )
}

/// Predicted state and control standard deviations on the partition.
fn write_prediction(out: &mut Vec<u8>, ctx: &DesignContext, scenario: &Scenario, d: &Design) -> Result<()> {
    use std::io::Write;
    let io = |e| Error::io("prediction", e);
    writeln!(
        out,
        "t_s,sd_r_m,sd_V_mps,sd_gamma_rad,sd_R_m,sd_rho_kgpm3,sd_u,u_bound"
    )
    .map_err(io)?;
    let steps = ctx.partition.steps();
    for (k, (t, p)) in ctx.partition.times.iter().zip(&d.covariance.p).enumerate() {
        let sd: Vec<String> = (0..5).map(|i| format!("{:?}", p[(i, i)].max(0.0).sqrt())).collect();
        let (sd_u, bound) = if k < steps {
            (
                d.covariance.control_variance[k].max(0.0).sqrt(),
                correction_bound(scenario.lateral.correction_limit, ctx.reference.cos_at(*t)),
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        writeln!(out, "{t:?},{},{sd_u:?},{bound:?}", sd.join(",")).map_err(io)?;
    }
    Ok(())
}

fn trigger_kind(trigger: &TriggerSpec) -> TriggerKind {
    match trigger {
        TriggerSpec::Fixed { .. } => TriggerKind::Time,
        TriggerSpec::Hyperplane { .. } => TriggerKind::Velocity,
    }
}

fn schedule_label(path: &Path) -> String {
    let stem = path.file_stem().map_or("schedule".into(), |s| s.to_string_lossy().into_owned());
    stem.strip_suffix("_gains").map(str::to_string).unwrap_or(stem)
}

pub fn cmd_montecarlo(args: &MonteCarloArgs) -> Result<i32> {
    let started = Instant::now();
    let (scenario, bytes) = Scenario::load(&args.config)?;
    let trials = args.trials.unwrap_or(scenario.trials);
    if trials == 0 {
        return Err(Error::Config("trial count must be at least 1".into()));
    }
    let seed = args.seed.unwrap_or(scenario.seed);
    let workers = resolve_workers(args.workers)?;
    let ctx = DesignContext::new(&scenario)?;

    let mut runs: Vec<(String, TriggerKind, GainSchedule)> = Vec::new();
    if args.schedules.is_empty() {
        for method in [Method::Apollo, Method::Stochastic] {
            for kind in [TriggerKind::Time, TriggerKind::Velocity] {
                let d = design(&ctx, &scenario, method, kind)?;
                let label = format!("{}_{}", d.schedule.method.as_str(), kind.as_str());
                runs.push((label, kind, d.schedule));
            }
        }
    } else {
        for path in &args.schedules {
            let schedule = GainSchedule::load(path)?;
            let mut label = schedule_label(path);
            if runs.iter().any(|(l, _, _)| *l == label) {
                label = format!("{label}_{}", runs.len() + 1);
            }
            runs.push((label, trigger_kind(&schedule.trigger), schedule));
        }
    }

    let setup = TrialSetup {
        scenario: &scenario,
        reference: &ctx.reference,
        dispersions: &scenario.dispersions,
        seed,
        record_times: &ctx.partition.times,
    };
    let mut out = Outputs::new(&args.out)?;
    let mut summaries: Vec<(String, EnsembleStats)> = Vec::new();
    for (label, kind, schedule) in runs {
        let ensemble = run_ensemble(&setup, &schedule, trials, workers)?;
        for w in &ensemble.stats.warnings {
            eprintln!("warning: {label}: {w}");
        }
        let lc = predict(&ctx, &scenario, kind, schedule)?;
        out.write_with(&format!("{label}_trials.csv"), |b| write_trials_csv(b, &ensemble.trials))?;
        out.write_with(&format!("{label}_overlay.csv"), |b| {
            write_overlay_csv(b, &ensemble.stats, &lc.covariance)
        })?;
        summaries.push((label, ensemble.stats));
    }
    let columns: Vec<(&str, &EnsembleStats)> = summaries.iter().map(|(l, s)| (l.as_str(), s)).collect();
    out.write_with("summary.csv", |b| write_summary_csv(b, &columns))?;
    out.finish(
        "montecarlo_manifest.json",
        format!("montecarlo -n {trials}"),
        &args.config,
        &bytes,
        Some(seed),
        started,
    )?;
    Ok(if summaries.iter().any(|(_, s)| s.degraded()) {
        EXIT_DEGRADED
    } else {
        EXIT_OK
    })
}

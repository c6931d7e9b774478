//! Command-line interface.
//!
//! Exit codes: 0 success, 1 engine error (or validation violations), 2
//! usage or configuration error. Human-readable text goes to stdout; all
//! machine artifacts go to the output directory.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{emit_report, format_sig, stats, ReportFormat, StudyReport};
use crate::config::{ExecutorConfig, Policy, StudyConfig};
use crate::events::{read_log, EventLog};
use crate::executor::ShellExecutor;
use crate::orchestrator::{
    replay_log, run_simulated, run_study, simulated_executor, ExecutionEnv, ReplayOptions,
    StudyError, WorkspaceEnv,
};
use crate::workspace::{SnapshotStore, WorkspaceManager};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ENGINE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ablate", version, about = "Budgeted, bandit-guided ablation studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one study and archive it under <out>/runs/<run_id>/.
    Run(RunArgs),
    /// Compare selection policies over many seeded simulated studies.
    Simulate(SimulateArgs),
    /// Print a stored report.
    Report(ReportArgs),
    /// Rebuild a report from a run log and compare it with the stored one.
    Replay(ReplayArgs),
    /// Check a config for schema and invariant violations.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory.
    #[arg(long, env = "ABLATE_OUT_DIR", default_value = "ablate-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub max_parallel: Option<usize>,
    #[arg(long)]
    pub policy: Option<Policy>,
    #[command(flatten)]
    pub out: OutArg,
    /// Format of the report printed to stdout.
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated subset of ucb, random, heuristic.
    #[arg(long, value_delimiter = ',', default_value = "ucb,random,heuristic")]
    pub policies: Vec<Policy>,
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    /// First seed; trial i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub budget: Option<u64>,
    #[command(flatten)]
    pub out: OutArg,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory, or a run id under <out>/runs/.
    #[arg(long)]
    pub run: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
    /// Recompute rewards with a different cost weight.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn engine(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_ENGINE,
            message: message.into(),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Config(_) | StudyError::Enumeration(_) => Self::usage(e.to_string()),
            other => Self::engine(other.to_string()),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                let _ = write!(stdout, "{e}");
            } else {
                let _ = write!(stderr, "{e}");
            }
            return code;
        }
    };
    let res = match cli.command {
        Command::Run(a) => cmd_run(&a, stdout),
        Command::Simulate(a) => cmd_simulate(&a, stdout),
        Command::Report(a) => cmd_report(&a, stdout),
        Command::Replay(a) => cmd_replay(&a, stdout),
        Command::Validate(a) => cmd_validate(&a, stdout),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn load_config(path: &Path) -> Result<StudyConfig, CliError> {
    StudyConfig::load(path).map_err(|e| CliError::usage(e.to_string()))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::engine(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, content).map_err(io_err(path))
}

/// Deterministic run id; a numeric suffix avoids clobbering earlier runs.
fn fresh_run_dir(out: &Path, config: &StudyConfig) -> PathBuf {
    let base = format!(
        "{}-s{}-{}",
        config.run.policy,
        config.run.seed,
        &config.digest()[..12]
    );
    let runs = out.join("runs");
    let mut dir = runs.join(&base);
    let mut n = 2;
    while dir.exists() {
        dir = runs.join(format!("{base}-{n}"));
        n += 1;
    }
    dir
}

fn print_report(report: &StudyReport, format: Format, stdout: &mut dyn Write) {
    let text = match format {
        Format::Json => emit_report(report, ReportFormat::Json),
        Format::Text | Format::Csv => emit_report(report, ReportFormat::Text),
    };
    let _ = write!(stdout, "{text}");
}

fn cmd_run(a: &RunArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let mut config = load_config(&a.config)?;
    if let Some(s) = a.seed {
        config.run.seed = s;
    }
    if let Some(b) = a.budget {
        config.run.budget = b;
    }
    if let Some(p) = a.max_parallel {
        config.run.max_parallel = p;
    }
    if let Some(p) = a.policy {
        config.run.policy = p;
    }
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(StudyError::Config(problems).into());
    }

    let run_dir = fresh_run_dir(&a.out.out, &config);
    let mut log = EventLog::to_file(&run_dir.join("events.log"))
        .map_err(|e| CliError::engine(e.to_string()))?;
    let outcome = match &config.executor {
        ExecutorConfig::Simulated { .. } => {
            let exec = simulated_executor(&config).expect("simulated executor config");
            run_study(&config, &ExecutionEnv::direct(&exec), &mut log)?
        }
        ExecutorConfig::Shell {
            base_dir,
            command,
            timeout_seconds,
            artifacts,
        } => {
            let store = SnapshotStore::open(a.out.out.join("snapshots"))
                .map_err(|e| CliError::engine(e.to_string()))?;
            let snapshot = store
                .snapshot(base_dir)
                .map_err(|e| CliError::engine(e.to_string()))?;
            let manager = WorkspaceManager::new(store, run_dir.join("work"))
                .map_err(|e| CliError::engine(e.to_string()))?;
            let exec = ShellExecutor::new(command.clone(), Duration::from_secs_f64(*timeout_seconds));
            let env = ExecutionEnv {
                executor: &exec,
                workspaces: Some(WorkspaceEnv {
                    manager: &manager,
                    snapshot: &snapshot,
                    archive_root: run_dir.join("candidates"),
                    artifacts: artifacts.clone(),
                }),
            };
            let out = run_study(&config, &env, &mut log)?;
            let _ = std::fs::remove_dir(run_dir.join("work"));
            out
        }
    };
    write_file(
        &run_dir.join("report.json"),
        &emit_report(&outcome.report, ReportFormat::Json),
    )?;
    write_file(
        &run_dir.join("report.txt"),
        &emit_report(&outcome.report, ReportFormat::Text),
    )?;
    let _ = writeln!(stdout, "run archived at {}", run_dir.display());
    print_report(&outcome.report, a.format, stdout);
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySummary {
    pub policy: Policy,
    pub trials: u64,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub mean_regret: Option<f64>,
    pub mean_exec_rate: f64,
    pub mean_attempts: f64,
}

/// Runs `trials` simulated studies per policy with seeds `seed..seed+trials`.
pub fn simulate_policies(
    config: &StudyConfig,
    policies: &[Policy],
    trials: u64,
    seed: u64,
) -> Result<Vec<PolicySummary>, StudyError> {
    let mut out = Vec::new();
    for &policy in policies {
        let mut hits = Vec::new();
        let mut regrets = Vec::new();
        let mut exec = Vec::new();
        let mut attempts = Vec::new();
        for i in 0..trials {
            let mut c = config.clone();
            c.run.policy = policy;
            c.run.seed = seed.wrapping_add(i);
            let (o, _) = run_simulated(&c)?;
            let acc = o.report.acc_at_k().ok_or_else(|| {
                StudyError::Config(vec!["ground truth does not yield Acc@k".into()])
            })?;
            hits.push(acc);
            if let Some(r) = o.report.simple_regret() {
                regrets.push(r);
            }
            exec.push(o.report.statistics.exec_rate.unwrap_or(0.0));
            attempts.push(o.report.statistics.attempts as f64);
        }
        out.push(PolicySummary {
            policy,
            trials,
            mean_acc: stats::mean(&hits).unwrap_or(0.0),
            std_acc: stats::sample_std(&hits).unwrap_or(0.0),
            mean_regret: (regrets.len() as u64 == trials)
                .then(|| stats::mean(&regrets))
                .flatten(),
            mean_exec_rate: stats::mean(&exec).unwrap_or(0.0),
            mean_attempts: stats::mean(&attempts).unwrap_or(0.0),
        });
    }
    Ok(out)
}

pub fn summaries_csv(rows: &[PolicySummary]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "policy",
        "trials",
        "mean_acc_at_k",
        "std_acc_at_k",
        "mean_simple_regret",
        "mean_exec_rate",
        "mean_attempts",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.policy.to_string(),
            r.trials.to_string(),
            format_sig(r.mean_acc, 6),
            format_sig(r.std_acc, 6),
            r.mean_regret.map(|x| format_sig(x, 6)).unwrap_or_default(),
            format_sig(r.mean_exec_rate, 6),
            format_sig(r.mean_attempts, 6),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn summaries_text(rows: &[PolicySummary], k: usize) -> String {
    let mut s = String::new();
    let acc = format!("acc@{k}");
    let _ = writeln!(
        s,
        "{:<10} {:>7} {:>10} {:>10} {:>12} {:>10}",
        "policy", "trials", acc, "std", "regret", "exec rate"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<10} {:>7} {:>10} {:>10} {:>12} {:>10}",
            r.policy.to_string(),
            r.trials,
            format_sig(r.mean_acc, 4),
            format_sig(r.std_acc, 4),
            r.mean_regret.map(|x| format_sig(x, 4)).unwrap_or_else(|| "n/a".into()),
            format_sig(r.mean_exec_rate, 4)
        );
    }
    s
}

fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    if a.trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    if a.policies.is_empty() {
        return Err(CliError::usage("--policies must name at least one policy"));
    }
    let mut config = load_config(&a.config)?;
    if let Some(b) = a.budget {
        config.run.budget = b;
    }
    if !matches!(config.executor, ExecutorConfig::Simulated { .. }) {
        return Err(CliError::usage("simulate needs a simulated executor"));
    }
    if config.resolved_ground_truth().is_none() {
        return Err(CliError::usage("simulate needs ground truth in the config"));
    }
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(StudyError::Config(problems).into());
    }
    let rows = simulate_policies(&config, &a.policies, a.trials, a.seed)?;
    let dir = a.out.out.join("simulate");
    let csv = summaries_csv(&rows);
    let text = summaries_text(&rows, config.run.top_k);
    write_file(&dir.join("summary.csv"), &csv)?;
    write_file(&dir.join("summary.txt"), &text)?;
    let _ = write!(stdout, "{}", if a.format == Format::Csv { &csv } else { &text });
    Ok(EXIT_OK)
}

fn resolve_run_dir(run: &Path, out: &Path) -> PathBuf {
    if run.is_dir() {
        run.to_path_buf()
    } else {
        out.join("runs").join(run)
    }
}

fn cmd_report(a: &ReportArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let dir = resolve_run_dir(&a.run, &a.out.out);
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if a.format == Format::Json {
        let _ = write!(stdout, "{text}");
        return Ok(EXIT_OK);
    }
    let report: StudyReport = serde_json::from_str(&text)
        .map_err(|e| CliError::engine(format!("{}: {e}", path.display())))?;
    print_report(&report, a.format, stdout);
    Ok(EXIT_OK)
}

fn cmd_replay(a: &ReplayArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let dir = resolve_run_dir(&a.run, &a.out.out);
    let lines = read_log(&dir.join("events.log")).map_err(|e| CliError::engine(e.to_string()))?;
    let report = replay_log(&lines, &ReplayOptions { lambda: a.lambda })
        .map_err(|e| CliError::engine(e.to_string()))?;
    let json = emit_report(&report, ReportFormat::Json);
    if a.lambda.is_some() && report.provenance == "recomputed" {
        let path = dir.join("report.recomputed.json");
        write_file(&path, &json)?;
        let _ = writeln!(stdout, "recomputed report (not original) written to {}", path.display());
        return Ok(EXIT_OK);
    }
    let stored = std::fs::read_to_string(dir.join("report.json")).unwrap_or_default();
    if stored == json {
        let _ = writeln!(stdout, "replay reproduces report.json byte-for-byte");
        Ok(EXIT_OK)
    } else {
        let path = dir.join("report.replayed.json");
        write_file(&path, &json)?;
        Err(CliError::engine(format!(
            "replayed report differs from report.json; written to {}",
            path.display()
        )))
    }
}

fn cmd_validate(a: &ValidateArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let config = match StudyConfig::load(&a.config) {
        Ok(c) => c,
        // a parseable-but-wrong document is a violation; an unreadable one is usage
        Err(crate::config::ConfigError::Parse { path, source }) => {
            let _ = writeln!(stdout, "violation: {}: {source}", path.display());
            return Ok(EXIT_ENGINE);
        }
        Err(e) => return Err(CliError::usage(e.to_string())),
    };
    let problems = config.validate();
    if problems.is_empty() {
        let _ = writeln!(stdout, "config is valid");
        return Ok(EXIT_OK);
    }
    for p in &problems {
        let _ = writeln!(stdout, "violation: {p}");
    }
    Ok(EXIT_ENGINE)
}

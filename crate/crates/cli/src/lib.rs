//! Command handlers for the `girl` binary.
//!
//! Exit codes: 0 ok, 2 usage, 3 config validation, 4 data, 5 internal.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use girl_core::config::{EvalFile, RunConfig};
use girl_core::eval_protocol::{compare_methods, evaluate, EvalConfig};
use girl_core::metagame::{
    restricted_exploitability, restricted_value, rprd_solve, PayoffTable, RestrictedSimplex,
    SolverConfig,
};
use girl_core::psro_loop::{PsroSession, RunManifest, DIAGNOSTICS_FILE};
use girl_core::GirlError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

/// A failure with the exit code it maps to.
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
}

impl From<GirlError> for CliError {
    fn from(e: GirlError) -> Self {
        let code = match &e {
            GirlError::InvalidArgument(_) => EXIT_USAGE,
            GirlError::Validation(_) => EXIT_CONFIG,
            GirlError::Data { .. } | GirlError::Io { .. } => EXIT_DATA,
            GirlError::Internal(_) | GirlError::Unimplemented(_) => EXIT_INTERNAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_INTERNAL,
            message: format!("output error: {e}"),
        }
    }
}

type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(name = "girl", version, about = "Adversarial meta-RL via PSRO with a MAML oracle")]
pub struct Cli {
    /// Worker threads for rollouts (default: available cores). Results do
    /// not depend on this value.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run PSRO and write a run directory.
    Train(TrainArgs),
    /// K-shot adversarial evaluation of a finished run.
    Eval(EvalArgs),
    /// Solve a payoff matrix with restricted replicator dynamics.
    Solve(SolveArgs),
    /// Train and evaluate every method over the comparison grid.
    Compare(CompareArgs),
    /// Summarize a run directory.
    Inspect(InspectArgs),
    /// Print the default configuration.
    DefaultConfig,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Continue an interrupted run in `run_dir` instead of starting fresh.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    /// File with an `[eval]` section; defaults to the run's own settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report directory (default: `<run_dir>/eval`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Payoff CSV: header `policy,task_...`, one row per policy.
    #[arg(long)]
    pub payoff: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub lower: f64,
    #[arg(long, default_value_t = 1.0)]
    pub upper: f64,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub explore_eps: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub average_window: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            let _ = writeln!(err, "error: --jobs must be >= 1");
            return EXIT_USAGE;
        }
        builder = builder.num_threads(jobs);
    }
    let pool = match builder.build() {
        Ok(pool) => pool,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker pool: {e}");
            return EXIT_INTERNAL;
        }
    };
    match pool.install(|| dispatch(&cli.command, out, err)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: &Command, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> CliResult {
    match command {
        Command::Train(a) => cmd_train(&a.config, &a.run_dir, a.resume, out),
        Command::Eval(a) => cmd_eval(&a.run_dir, a.config.as_deref(), a.out.as_deref(), out),
        Command::Solve(a) => cmd_solve(a, out),
        Command::Compare(a) => cmd_compare(&a.config, &a.out, out, err),
        Command::Inspect(a) => cmd_inspect(&a.run_dir, out),
        Command::DefaultConfig => {
            write!(out, "{}", RunConfig::default().to_toml_string()?)?;
            Ok(())
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    if !path.is_file() {
        return Err(CliError::usage(format!("config file {} not found", path.display())));
    }
    let cfg = RunConfig::load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    std::fs::write(path, contents).map_err(|e| CliError {
        code: EXIT_INTERNAL,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

pub fn cmd_train(config: &Path, run_dir: &Path, resume: bool, out: &mut (dyn Write + Send)) -> CliResult {
    let mut session = if resume {
        PsroSession::resume(run_dir)?
    } else {
        let cfg = load_config(config)?;
        if run_dir.join(girl_core::psro_loop::MANIFEST_FILE).exists() {
            return Err(CliError::usage(format!(
                "{} already holds a run; pass --resume or pick a fresh directory",
                run_dir.display()
            )));
        }
        PsroSession::create(&cfg, Some(run_dir))?
    };
    while !session.is_complete() {
        session.run_loop()?;
        if let Some(d) = session.artifacts().diagnostics.last() {
            writeln!(
                out,
                "loop {}: policies={} game_value={:.4} exploitability={:.4} post_return={:.3} ({:.1}s)",
                d.loop_index, d.policies, d.game_value, d.exploitability, d.post_return, d.wall_time_secs
            )?;
        }
    }
    writeln!(out, "run complete: {}", run_dir.display())?;
    Ok(())
}

/// Loads a finished run for evaluation.
fn load_complete_run(run_dir: &Path) -> Result<PsroSession, CliError> {
    let session = PsroSession::resume(run_dir)?;
    if !session.is_complete() {
        return Err(GirlError::Data {
            path: run_dir.to_path_buf(),
            message: format!(
                "run is incomplete ({} of {} loops)",
                session.artifacts().loops_completed(),
                session.config().psro.max_loops
            ),
        }
        .into());
    }
    Ok(session)
}

pub fn cmd_eval(run_dir: &Path, eval_config: Option<&Path>, out_dir: Option<&Path>, out: &mut (dyn Write + Send)) -> CliResult {
    let session = load_complete_run(run_dir)?;
    let mut cfg = session.config().clone();
    if let Some(path) = eval_config {
        if !path.is_file() {
            return Err(CliError::usage(format!("eval config {} not found", path.display())));
        }
        cfg.eval = EvalFile::load(path)?.eval;
        cfg.validate()?;
    }
    let eval = EvalConfig::from_run_config(&cfg)?;
    let art = session.artifacts();
    let pi = &art
        .final_strategy()
        .ok_or_else(|| CliError::from(GirlError::Internal("run has no strategy".into())))?
        .pi;
    let report = evaluate(&art.policies, pi, session.tasks(), &cfg.env, &cfg.pg, &eval)?;

    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| run_dir.join("eval"));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::from(GirlError::Io { path: dir.clone(), source: e }))?;
    write_file(&dir.join("eval_summary.csv"), &report.summary_csv_string(&eval))?;
    write_file(&dir.join("eval_matrix.csv"), &report.matrix_csv_string())?;
    write_file(&dir.join("eval_tasks.csv"), &report.tasks_csv_string())?;
    writeln!(
        out,
        "K={} test_box=[{}, {}] beta={} value={:.4} seed_mean={:.4} seed_std={:.4}",
        eval.shots,
        eval.test_simplex.lower(),
        eval.test_simplex.upper(),
        eval.beta,
        report.value,
        report.seed_mean,
        report.seed_std
    )?;
    writeln!(out, "worst p1: {}", fmt_vec(&report.worst_p1))?;
    Ok(())
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.9}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn cmd_solve(args: &SolveArgs, out: &mut (dyn Write + Send)) -> CliResult {
    let table = PayoffTable::load_csv(&args.payoff)?;
    let matrix = table.matrix()?;
    let n = table.num_tasks();
    if let Some(problem) = RestrictedSimplex::feasibility_problem(n, args.lower, args.upper) {
        return Err(GirlError::Validation(vec![format!("task bounds: {problem}")]).into());
    }
    let simplex = RestrictedSimplex::new(n, args.lower, args.upper)?;
    let defaults = SolverConfig::default();
    let cfg = SolverConfig {
        eta: args.eta.unwrap_or(defaults.eta),
        explore_eps: args.explore_eps.unwrap_or(defaults.explore_eps),
        max_iters: args.max_iters.unwrap_or(defaults.max_iters),
        tol: args.tol.unwrap_or(defaults.tol),
        average_window: args.average_window.unwrap_or(defaults.average_window),
    };
    let mut problems = Vec::new();
    cfg.validate("solver", &mut problems);
    if !problems.is_empty() {
        return Err(GirlError::Validation(problems).into());
    }
    let solved = rprd_solve(&matrix, &simplex, &cfg, None)?;
    let pair = &solved.pair;
    let full = RestrictedSimplex::unrestricted(pair.pi.len())?;
    if !full.contains(&pair.pi) || !simplex.contains(&pair.p1) {
        return Err(GirlError::Internal("solver output is infeasible".into()).into());
    }
    let expl = restricted_exploitability(pair, &matrix, &simplex)?;
    let value = restricted_value(&pair.pi, &matrix, &simplex)?;
    writeln!(out, "pi: {}", fmt_vec(&pair.pi))?;
    writeln!(out, "p1: {}", fmt_vec(&pair.p1))?;
    writeln!(out, "exploitability: {expl:.9}")?;
    writeln!(out, "game_value: {value:.9}")?;
    writeln!(out, "iterations: {} converged: {}", solved.iterations, solved.converged)?;
    Ok(())
}

pub fn cmd_compare(config: &Path, out_dir: &Path, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> CliResult {
    let cfg = load_config(config)?;
    let table = compare_methods(&cfg, &mut |line| {
        let _ = writeln!(err, "{line}");
    })?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::from(GirlError::Io { path: out_dir.to_path_buf(), source: e }))?;
    write_file(&out_dir.join("comparison.csv"), &table.to_csv_string())?;
    write_file(&out_dir.join("comparison_long.csv"), &table.to_long_csv_string())?;
    let text = table.to_text_table();
    write_file(&out_dir.join("comparison.txt"), &text)?;
    write!(out, "{text}")?;
    Ok(())
}

pub fn cmd_inspect(run_dir: &Path, out: &mut (dyn Write + Send)) -> CliResult {
    let manifest = RunManifest::load(run_dir)?;
    let session = PsroSession::resume(run_dir)?;
    let art = session.artifacts();
    let cfg = session.config();
    writeln!(out, "run: {}", run_dir.display())?;
    writeln!(out, "tool version: {}", manifest.tool_version)?;
    writeln!(
        out,
        "tasks: {} x {:?}; mode: {}; seed: {}",
        cfg.tasks.num_tasks,
        cfg.tasks.family,
        cfg.psro.mode.label(),
        cfg.seed
    )?;
    writeln!(
        out,
        "loops: {} of {} ({})",
        manifest.loops_completed,
        cfg.psro.max_loops,
        if manifest.complete { "complete" } else { "incomplete" }
    )?;
    writeln!(out, "{:>4} {:>12} {:>14} {:>12}", "loop", "game_value", "exploitability", "post_return")?;
    for d in &art.diagnostics {
        writeln!(
            out,
            "{:>4} {:>12.4} {:>14.4} {:>12.3}",
            d.loop_index, d.game_value, d.exploitability, d.post_return
        )?;
    }
    if let Some(pair) = art.final_strategy() {
        writeln!(out, "pi: {}", fmt_vec(&pair.pi))?;
        writeln!(out, "p1: {}", fmt_vec(&pair.p1))?;
    }
    writeln!(out, "diagnostics: {}", run_dir.join(DIAGNOSTICS_FILE).display())?;
    Ok(())
}

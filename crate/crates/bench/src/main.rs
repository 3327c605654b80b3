use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rscpi::evaluation::{evaluate_exact, evaluate_risk, rollout_monte_carlo};
use rscpi::model::{DecPomdpModel, InitialObservation};
use rscpi::policy::{dump_policy, JointPolicy};
use rscpi::{EvalError, SolverError};
use rscpi_bench::fixtures::{load_model, ModelSource};
use rscpi_bench::grid::{AgentStates, Job, RunConfigFile};
use rscpi_bench::record::{read_runs, write_runs};
use rscpi_bench::{render_report, run_grid, Ablation};
use serde_json::{json, Map, Value};

const INPUT_ERROR: u8 = 2;
const NUMERIC_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "rscpi", version, about = "Risk-seeking conservative policy iteration for Dec-POMDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one model and write policy.json, policy.txt and a runs.csv row.
    Solve(SolveArgs),
    /// Run a hyperparameter grid from a JSON config file.
    Sweep(SweepArgs),
    /// Evaluate a policy exactly, optionally with a risk value and Monte Carlo.
    Eval(EvalArgs),
    /// Summarize a runs.csv as Markdown tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// `.dpomdp` file or `matrix-game`.
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    /// `|Z^i|`, one shared value or a comma list per agent.
    #[arg(long, default_value = "1")]
    agent_states: String,
    #[arg(long, default_value = "dummy")]
    init_obs: InitialObservation,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1.0)]
    lambda0: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    anneal_sweeps: usize,
    #[arg(long, default_value_t = 1000)]
    max_sweeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long)]
    no_rs: bool,
    #[arg(long)]
    no_cpi: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON config file.
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Policy JSON; the uniform policy when omitted.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    risk_lambda: Option<f64>,
    /// Monte Carlo episodes.
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// runs.csv to summarize.
    runs: PathBuf,
    /// Also write report.md into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

fn input(message: impl Into<String>) -> Failure {
    Failure {
        code: INPUT_ERROR,
        message: message.into(),
    }
}

fn numeric(message: impl Into<String>) -> Failure {
    Failure {
        code: NUMERIC_ERROR,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    input(format!("{}: {e}", path.display()))
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Config(_) | SolverError::Policy(_) => input(e.to_string()),
            _ => numeric(e.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Policy(_) | EvalError::NegativeRisk(_) | EvalError::NoEpisodes | EvalError::Risk(_) => {
                input(e.to_string())
            }
            _ => numeric(e.to_string()),
        }
    }
}

fn open_model(args: &ModelArgs) -> Result<(ModelSource, DecPomdpModel, Vec<usize>), Failure> {
    if args.horizon == 0 {
        return Err(input("horizon must be positive"));
    }
    let source = ModelSource::parse(&args.model);
    let loaded = load_model(&source, args.horizon, args.init_obs).map_err(|e| input(e.render(&source.display())))?;
    for w in &loaded.warnings {
        eprintln!("{}", w.render(&source.display()));
    }
    let sizes = AgentStates::parse(&args.agent_states)
        .and_then(|z| z.resolve(loaded.model.agent_count()))
        .map_err(input)?;
    if sizes.contains(&0) {
        return Err(input("agent-state sizes must be positive"));
    }
    Ok((source, loaded.model, sizes))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn solve(args: SolveArgs) -> Result<(), Failure> {
    let (source, model, sizes) = open_model(&args.model)?;
    let ablation = Ablation::from_flags(args.no_rs, args.no_cpi);
    let job = Job::new(
        args.model.horizon,
        sizes,
        ablation,
        args.lambda0,
        args.alpha,
        args.anneal_sweeps,
        args.seed,
    );
    let mut config = job.solver_config(args.max_sweeps);
    config.restarts = args.restarts;
    let result = rscpi_solve(&model, &config)?;
    let mut job = job;
    job.seed = result.seed;
    let record = job.record(&source.env_name(), args.model.init_obs, &result);
    ensure_dir(&args.out)?;
    write_file(&args.out.join("policy.json"), &result.policy.to_json())?;
    write_file(&args.out.join("policy.txt"), &dump_policy(&result.policy, &model))?;
    let runs = args.out.join("runs.csv");
    write_runs(&runs, &[record]).map_err(|e| io_failure(&runs, e))?;
    println!(
        "{}",
        json!({
            "J_exact": result.j_exact,
            "J_risk_final": result.j_risk_final,
            "sweeps": result.sweeps,
            "seed": result.seed,
            "peak_floats": result.peak_floats,
        })
    );
    Ok(())
}

fn rscpi_solve(model: &DecPomdpModel, config: &rscpi::SolverConfig) -> Result<rscpi::SolveResult, Failure> {
    rscpi::rscpi(model, config).map_err(Failure::from)
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| io_failure(&args.config, e))?;
    let config = RunConfigFile::from_json(&text).map_err(input)?;
    let grid = config.validate().map_err(input)?;
    let out = args.out.or(config.out).unwrap_or_else(|| PathBuf::from("."));
    let outcome = run_grid(&grid).map_err(input)?;
    ensure_dir(&out)?;
    let runs = out.join("runs.csv");
    if runs.exists() {
        std::fs::remove_file(&runs).map_err(|e| io_failure(&runs, e))?;
    }
    write_runs(&runs, &outcome.records).map_err(|e| io_failure(&runs, e))?;
    let failures_path = out.join("failures.txt");
    if outcome.failures.is_empty() {
        let _ = std::fs::remove_file(&failures_path);
    } else {
        let mut text = String::new();
        for f in &outcome.failures {
            let line = format!(
                "T={} z={:?} ablation={} lambda0={} alpha={} anneal_sweeps={} seed={}: {}",
                f.job.horizon,
                f.job.memory_sizes,
                f.job.ablation.label(),
                f.job.lambda0,
                f.job.alpha,
                f.job.anneal_sweeps,
                f.job.seed,
                f.message
            );
            eprintln!("{line}");
            text.push_str(&line);
            text.push('\n');
        }
        write_file(&failures_path, &text)?;
    }
    if let Some(report) = render_report(&outcome.records) {
        write_file(&out.join("report.md"), &report)?;
        print!("{report}");
    }
    eprintln!(
        "{} runs, {} failed, {:.1} s",
        outcome.records.len() + outcome.failures.len(),
        outcome.failures.len(),
        outcome.elapsed_ms / 1e3
    );
    if outcome.records.is_empty() {
        return Err(numeric("every run failed"));
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let (_, model, sizes) = open_model(&args.model)?;
    let policy = match &args.policy {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            JointPolicy::from_json(&text).map_err(|e| input(format!("{}: {e}", path.display())))?
        }
        None => JointPolicy::uniform(&model, &sizes),
    };
    policy
        .check_against(&model)
        .map_err(|e| input(format!("policy does not fit the model: {e}")))?;
    let mut out = Map::new();
    out.insert("J_exact".into(), Value::from(evaluate_exact(&model, &policy)?));
    if let Some(lambda) = args.risk_lambda {
        out.insert("J_risk".into(), Value::from(evaluate_risk(&model, &policy, lambda)?));
    }
    if let Some(episodes) = args.mc {
        let mc = rollout_monte_carlo(&model, &policy, episodes, args.seed)?;
        out.insert("mc_mean".into(), Value::from(mc.mean));
        out.insert("mc_stderr".into(), Value::from(mc.std_error));
    }
    println!("{}", Value::Object(out));
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    let records = read_runs(&args.runs).map_err(|e| io_failure(&args.runs, e))?;
    let text = render_report(&records).ok_or_else(|| input(format!("{}: no runs", args.runs.display())))?;
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        write_file(&dir.join("report.md"), &text)?;
    }
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

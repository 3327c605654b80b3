//! Hyperparameter grids over horizons, agent-state sizes and ablations.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use rscpi::model::{DecPomdpModel, InitialObservation};
use rscpi::solver::{rscpi, LambdaSchedule, SolveResult, SolverConfig};
use rscpi::SolverError;
use serde::Deserialize;

use crate::fixtures::{load_model, ModelSource};
use crate::record::{z_sizes_label, RunRecord};

pub const DEFAULT_LAMBDA0: [f64; 5] = [0.0, 0.1, 0.5, 1.0, 2.0];
pub const DEFAULT_ALPHA: [f64; 4] = [0.1, 0.3, 0.5, 1.0];
pub const DEFAULT_ANNEAL: [usize; 2] = [10, 50];
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
pub const DEFAULT_MAX_SWEEPS: usize = 1000;

/// Which parts of the method are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
pub enum Ablation {
    #[serde(rename = "cpi-only", alias = "no-rs")]
    CpiOnly,
    #[serde(rename = "rs-only", alias = "no-cpi")]
    RsOnly,
    #[serde(rename = "none", alias = "neither")]
    Neither,
    #[serde(rename = "rs-cpi", alias = "full")]
    RsCpi,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::CpiOnly, Ablation::RsOnly, Ablation::Neither, Ablation::RsCpi];

    pub fn from_flags(no_rs: bool, no_cpi: bool) -> Self {
        match (no_rs, no_cpi) {
            (false, false) => Ablation::RsCpi,
            (true, false) => Ablation::CpiOnly,
            (false, true) => Ablation::RsOnly,
            (true, true) => Ablation::Neither,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Ablation::CpiOnly => "cpi-only",
            Ablation::RsOnly => "rs-only",
            Ablation::Neither => "none",
            Ablation::RsCpi => "rs-cpi",
        }
    }

    /// Column heading in reports.
    pub fn heading(self) -> &'static str {
        match self {
            Ablation::CpiOnly => "CPI-only",
            Ablation::RsOnly => "RS-only",
            Ablation::Neither => "No CPI + No RS",
            Ablation::RsCpi => "RS-CPI",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.label() == s)
    }

    pub fn disables_rs(self) -> bool {
        matches!(self, Ablation::CpiOnly | Ablation::Neither)
    }

    pub fn disables_cpi(self) -> bool {
        matches!(self, Ablation::RsOnly | Ablation::Neither)
    }
}

/// `|Z^i|` given once for all agents or per agent.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum AgentStates {
    Shared(usize),
    PerAgent(Vec<usize>),
}

impl AgentStates {
    pub fn resolve(&self, agents: usize) -> Result<Vec<usize>, String> {
        match self {
            AgentStates::Shared(z) => Ok(vec![*z; agents]),
            AgentStates::PerAgent(zs) if zs.len() == agents => Ok(zs.clone()),
            AgentStates::PerAgent(zs) => Err(format!("{} agent-state sizes for {agents} agents", zs.len())),
        }
    }

    /// Parses `2` or `2,3`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let parts: Vec<usize> = text
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad agent-state size `{p}`")))
            .collect::<Result<_, _>>()?;
        Ok(match parts.as_slice() {
            [z] => AgentStates::Shared(*z),
            _ => AgentStates::PerAgent(parts),
        })
    }
}

/// JSON sweep configuration. Omitted grids fall back to the defaults; lists
/// that are present must be nonempty.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub model: String,
    #[serde(default)]
    pub env: Option<String>,
    pub horizons: Vec<usize>,
    #[serde(default)]
    pub agent_states: Option<Vec<AgentStates>>,
    #[serde(default)]
    pub lambda0: Option<Vec<f64>>,
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default)]
    pub anneal_sweeps: Option<Vec<usize>>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub ablations: Option<Vec<Ablation>>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub init_obs: Option<InitialObservation>,
    #[serde(default)]
    pub max_sweeps: Option<usize>,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn nonempty<T: Clone>(name: &str, list: &Option<Vec<T>>, default: &[T]) -> Result<Vec<T>, String> {
    match list {
        None => Ok(default.to_vec()),
        Some(v) if v.is_empty() => Err(format!("`{name}` must not be empty")),
        Some(v) => Ok(v.clone()),
    }
}

/// A config file with every default filled in and every list checked.
#[derive(Debug, Clone)]
pub struct Grid {
    pub source: ModelSource,
    pub env: String,
    pub horizons: Vec<usize>,
    pub agent_states: Vec<AgentStates>,
    pub lambda0: Vec<f64>,
    pub alpha: Vec<f64>,
    pub anneal_sweeps: Vec<usize>,
    pub seeds: Vec<u64>,
    pub ablations: Vec<Ablation>,
    pub init_obs: InitialObservation,
    pub max_sweeps: usize,
    pub workers: usize,
}

impl RunConfigFile {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("invalid config: {e}"))
    }

    pub fn validate(&self) -> Result<Grid, String> {
        if self.horizons.is_empty() {
            return Err("`horizons` must not be empty".into());
        }
        if self.horizons.contains(&0) {
            return Err("horizons must be positive".into());
        }
        let lambda0 = nonempty("lambda0", &self.lambda0, &DEFAULT_LAMBDA0)?;
        if lambda0.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err("`lambda0` values must be finite and nonnegative".into());
        }
        let alpha = nonempty("alpha", &self.alpha, &DEFAULT_ALPHA)?;
        if alpha.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err("`alpha` values must lie in (0, 1]".into());
        }
        let anneal_sweeps = nonempty("anneal_sweeps", &self.anneal_sweeps, &DEFAULT_ANNEAL)?;
        let max_sweeps = self.max_sweeps.unwrap_or(DEFAULT_MAX_SWEEPS);
        if max_sweeps == 0 || anneal_sweeps.iter().any(|&k| k > max_sweeps) {
            return Err(format!("`max_sweeps` {max_sweeps} must be positive and cover every anneal length"));
        }
        let source = ModelSource::parse(&self.model);
        Ok(Grid {
            env: self.env.clone().unwrap_or_else(|| source.env_name()),
            source,
            horizons: self.horizons.clone(),
            agent_states: nonempty("agent_states", &self.agent_states, &[AgentStates::Shared(1)])?,
            lambda0,
            alpha,
            anneal_sweeps,
            seeds: nonempty("seeds", &self.seeds, &DEFAULT_SEEDS)?,
            ablations: nonempty("ablations", &self.ablations, &[Ablation::RsCpi])?,
            init_obs: self.init_obs.unwrap_or_default(),
            max_sweeps,
            workers: self.workers.unwrap_or(0),
        })
    }
}

/// One solve of the grid, with hyperparameters already reduced to what the
/// ablation actually uses.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub horizon: usize,
    pub memory_sizes: Vec<usize>,
    pub ablation: Ablation,
    pub lambda0: f64,
    pub alpha: f64,
    pub anneal_sweeps: usize,
    pub seed: u64,
}

impl Job {
    pub fn new(
        horizon: usize,
        memory_sizes: Vec<usize>,
        ablation: Ablation,
        lambda0: f64,
        alpha: f64,
        anneal_sweeps: usize,
        seed: u64,
    ) -> Self {
        let (lambda0, anneal_sweeps) = if ablation.disables_rs() || lambda0 == 0.0 {
            (0.0, 0)
        } else {
            (lambda0, anneal_sweeps)
        };
        let alpha = if ablation.disables_cpi() { 1.0 } else { alpha };
        Self {
            horizon,
            memory_sizes,
            ablation,
            lambda0,
            alpha,
            anneal_sweeps,
            seed,
        }
    }

    pub fn solver_config(&self, max_sweeps: usize) -> SolverConfig {
        let mut config = SolverConfig::new(self.memory_sizes.clone());
        config.schedule = LambdaSchedule::Linear {
            lambda0: self.lambda0,
            anneal_sweeps: self.anneal_sweeps,
        };
        config.alpha = self.alpha;
        config.max_sweeps = max_sweeps;
        config.seed = self.seed;
        config.disable_rs = self.ablation.disables_rs();
        config.disable_cpi = self.ablation.disables_cpi();
        config
    }

    fn key(&self) -> (usize, Vec<usize>, Ablation, u64, u64, usize, u64) {
        (
            self.horizon,
            self.memory_sizes.clone(),
            self.ablation,
            self.lambda0.to_bits(),
            self.alpha.to_bits(),
            self.anneal_sweeps,
            self.seed,
        )
    }

    pub fn record(&self, env: &str, mode: InitialObservation, result: &SolveResult) -> RunRecord {
        RunRecord {
            env: env.to_string(),
            horizon: self.horizon,
            z_sizes: z_sizes_label(&self.memory_sizes),
            lambda0: self.lambda0,
            alpha: self.alpha,
            anneal_sweeps: self.anneal_sweeps,
            seed: self.seed,
            ablation: self.ablation.label().to_string(),
            sweeps: result.sweeps,
            j_exact: result.j_exact,
            j_risk_final: result.j_risk_final,
            wall_time_ms: result.wall_time.as_secs_f64() * 1e3,
            peak_floats: result.peak_floats,
            init_obs_mode: mode.label().to_string(),
        }
    }
}

/// Expands the grid in a fixed order. Configurations that coincide once the
/// ablation is applied are run once.
pub fn expand_jobs(grid: &Grid, agents: usize) -> Result<Vec<Job>, String> {
    let mut seen = BTreeSet::new();
    let mut jobs = Vec::new();
    for &horizon in &grid.horizons {
        for zs in &grid.agent_states {
            let sizes = zs.resolve(agents)?;
            if sizes.contains(&0) {
                return Err("agent-state sizes must be positive".into());
            }
            for &ablation in &grid.ablations {
                for &l in &grid.lambda0 {
                    for &a in &grid.alpha {
                        for &k in &grid.anneal_sweeps {
                            for &seed in &grid.seeds {
                                let job = Job::new(horizon, sizes.clone(), ablation, l, a, k, seed);
                                if seen.insert(job.key()) {
                                    jobs.push(job);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(jobs)
}

#[derive(Debug, Clone)]
pub struct JobFailure {
    pub job: Job,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct GridOutcome {
    /// Successful runs in job order.
    pub records: Vec<RunRecord>,
    pub failures: Vec<JobFailure>,
    pub elapsed_ms: f64,
}

pub fn run_job(model: &DecPomdpModel, job: &Job, max_sweeps: usize) -> Result<SolveResult, SolverError> {
    rscpi(&model.with_horizon(job.horizon), &job.solver_config(max_sweeps))
}

/// Runs every job of `grid` on a worker pool. Results come back in job order
/// whatever the number of workers.
pub fn run_grid(grid: &Grid) -> Result<GridOutcome, String> {
    let started = Instant::now();
    let first = *grid.horizons.first().expect("validated");
    let base = load_model(&grid.source, first, grid.init_obs)
        .map_err(|e| e.render(&grid.source.display()))?
        .model;
    let jobs = expand_jobs(grid, base.agent_count())?;
    let mut models: Vec<(usize, DecPomdpModel)> = Vec::new();
    for &h in &grid.horizons {
        if !models.iter().any(|(t, _)| *t == h) {
            models.push((h, base.with_horizon(h)));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(grid.workers)
        .build()
        .map_err(|e| e.to_string())?;
    let failures = Mutex::new(Vec::new());
    let results: Vec<Option<RunRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let model = &models.iter().find(|(t, _)| *t == job.horizon).expect("model per horizon").1;
                match rscpi(model, &job.solver_config(grid.max_sweeps)) {
                    Ok(res) => Some(job.record(&grid.env, grid.init_obs, &res)),
                    Err(e) => {
                        failures.lock().expect("failure list").push(JobFailure {
                            job: job.clone(),
                            message: e.to_string(),
                        });
                        None
                    }
                }
            })
            .collect()
    });
    let mut failures = failures.into_inner().expect("failure list");
    failures.sort_by_key(|f| jobs.iter().position(|j| j == &f.job));
    Ok(GridOutcome {
        records: results.into_iter().flatten().collect(),
        failures,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

//! Risk-seeking conservative policy iteration.
//!
//! A sweep walks `t = T, …, 1`. At each step the centralized Q slice is built
//! from the value tensor at `t + 1`, every agent in turn replaces its rule by a
//! conservative mix of the old rule and its greedy best response against the
//! averaged local Q, and the value tensor at `t` is folded from the fully
//! updated rule. Marginals come from one forward pass before the sweep; they
//! stay valid because `ζ_t` only depends on rules before `t`.

mod backup;
mod local_q;

use std::time::{Duration, Instant};

use crate::error::{EvalError, PolicyError, SolverError};
use crate::evaluation::{evaluate_exact, forward_into};
use crate::layout::Layout;
use crate::model::DecPomdpModel;
use crate::policy::{mix_policies, random_policy, JointPolicy};
use crate::risk::{LogSumExp, RiskParameter};

pub use backup::{QSlice, TiltedValueTensor};
pub use local_q::{averaged_local_q, greedy_agent_update, AveragedLocalQ};

use backup::{fill_q_slice, fold_policy, BackupKernels};

/// Order in which agents are updated within a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AgentOrdering {
    /// At each step, agents `1..N` in turn.
    #[default]
    PerStep,
    /// One full backward pass per agent, marginals refreshed between agents.
    PerAgent,
}

/// Temperature sequence `λ^(k)` over sweeps `k = 1, 2, …`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSchedule {
    /// `λ0·max(0, 1 − (k−1)/K1)`, then exactly zero.
    Linear { lambda0: f64, anneal_sweeps: usize },
    Constant(f64),
}

impl LambdaSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            LambdaSchedule::Constant(l) => l,
            LambdaSchedule::Linear { lambda0, anneal_sweeps } => {
                if anneal_sweeps == 0 {
                    return 0.0;
                }
                let frac = (k.saturating_sub(1)) as f64 / anneal_sweeps as f64;
                let l = lambda0 * (1.0 - frac).max(0.0);
                if l > 0.0 {
                    l
                } else {
                    0.0
                }
            }
        }
    }

    /// True once `λ^(k)` no longer changes.
    pub fn settled(&self, k: usize) -> bool {
        match *self {
            LambdaSchedule::Constant(_) => true,
            LambdaSchedule::Linear { lambda0, anneal_sweeps } => {
                lambda0 == 0.0 || k > anneal_sweeps
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// `|Z^i|` per agent.
    pub memory_sizes: Vec<usize>,
    pub schedule: LambdaSchedule,
    /// Constant forgetting rate `α`.
    pub alpha: f64,
    pub max_sweeps: usize,
    /// Stop once `J^risk` improves by less than this over a sweep at the final `λ`.
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
    pub ordering: AgentOrdering,
    /// Forces `λ ≡ 0`.
    pub disable_rs: bool,
    /// Forces `α ≡ 1`.
    pub disable_cpi: bool,
    /// Uniform instead of point-mass initial agent states.
    pub uniform_initial_state: bool,
}

impl SolverConfig {
    pub fn new(memory_sizes: Vec<usize>) -> Self {
        Self {
            memory_sizes,
            schedule: LambdaSchedule::Linear {
                lambda0: 1.0,
                anneal_sweeps: 10,
            },
            alpha: 0.5,
            max_sweeps: 1000,
            tolerance: 1e-9,
            restarts: 1,
            seed: 0,
            ordering: AgentOrdering::PerStep,
            disable_rs: false,
            disable_cpi: false,
            uniform_initial_state: false,
        }
    }

    pub fn effective_alpha(&self) -> f64 {
        if self.disable_cpi {
            1.0
        } else {
            self.alpha
        }
    }

    pub fn lambda_at(&self, k: usize) -> f64 {
        if self.disable_rs {
            0.0
        } else {
            self.schedule.at(k)
        }
    }

    fn settled(&self, k: usize) -> bool {
        self.disable_rs || self.schedule.settled(k)
    }

    pub fn validate(&self, model: &DecPomdpModel) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::Config(m));
        if self.memory_sizes.len() != model.agent_count() {
            return bad(format!(
                "{} agent-state sizes for {} agents",
                self.memory_sizes.len(),
                model.agent_count()
            ));
        }
        if self.memory_sizes.contains(&0) {
            return bad("agent-state sizes must be positive".into());
        }
        match self.schedule {
            LambdaSchedule::Constant(l) if !(l >= 0.0 && l.is_finite()) => {
                return bad(format!("temperature {l} must be finite and nonnegative"))
            }
            LambdaSchedule::Linear { lambda0, anneal_sweeps } => {
                if !(lambda0 >= 0.0 && lambda0.is_finite()) {
                    return bad(format!("initial temperature {lambda0} must be finite and nonnegative"));
                }
                if self.max_sweeps < anneal_sweeps {
                    return bad(format!(
                        "max sweeps {} below anneal sweeps {anneal_sweeps}",
                        self.max_sweeps
                    ));
                }
            }
            _ => {}
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("forgetting rate {} outside (0, 1]", self.alpha));
        }
        if self.max_sweeps == 0 || self.restarts == 0 {
            return bad("max sweeps and restarts must be positive".into());
        }
        Ok(())
    }
}

/// One entry of the per-sweep trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub lambda: f64,
    pub alpha: f64,
    pub j_risk: f64,
    /// Risk-neutral value after the sweep.
    pub j: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub policy: JointPolicy,
    /// Risk-neutral value of `policy`.
    pub j_exact: f64,
    pub j_risk_final: f64,
    pub trace: Vec<SweepRecord>,
    pub sweeps: usize,
    pub wall_time: Duration,
    pub peak_floats: usize,
    /// Seed of the restart that produced `policy`.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOutcome {
    /// `J^risk_{1:T}` of the updated policy at the sweep's `λ`.
    pub j_risk: f64,
    pub changed: bool,
}

/// Counts tensor elements held by the sweep working set.
#[derive(Debug, Default, Clone, Copy)]
struct FloatCounter {
    live: usize,
    peak: usize,
}

impl FloatCounter {
    fn alloc(&mut self, n: usize) -> Vec<f64> {
        self.live += n;
        self.peak = self.peak.max(self.live);
        vec![0.0; n]
    }
}

/// Reusable buffers for sweeps on one model with fixed agent-state sizes.
///
/// The working set is the `T` marginal tensors, a pair of value tensors and a
/// single transient Q slice; [`SweepEngine::peak_floats`] reports its size.
pub struct SweepEngine<'m> {
    model: &'m DecPomdpModel,
    layout: Layout,
    kernels: BackupKernels,
    marginals: Vec<Vec<f64>>,
    current: Vec<f64>,
    next: Vec<f64>,
    q: Vec<f64>,
    counter: FloatCounter,
}

impl<'m> SweepEngine<'m> {
    pub fn new(model: &'m DecPomdpModel, memory_sizes: &[usize]) -> Self {
        let layout = Layout::new(model, memory_sizes);
        let mut counter = FloatCounter::default();
        let cells = layout.cells();
        let marginals = (0..model.horizon()).map(|_| counter.alloc(cells)).collect();
        let current = counter.alloc(cells);
        let next = counter.alloc(cells);
        let q = counter.alloc(cells * layout.columns());
        Self {
            model,
            kernels: BackupKernels::new(model),
            layout,
            marginals,
            current,
            next,
            q,
            counter,
        }
    }

    pub fn peak_floats(&self) -> usize {
        self.counter.peak
    }

    /// One backward sweep, updating `policy` in place.
    pub fn sweep(
        &mut self,
        policy: &mut JointPolicy,
        risk: RiskParameter,
        alpha: f64,
        ordering: AgentOrdering,
    ) -> Result<SweepOutcome, SolverError> {
        policy.check_against(self.model)?;
        if risk.lambda() < 0.0 && !risk.is_neutral() {
            return Err(SolverError::Config(format!(
                "temperature {} is negative",
                risk.lambda()
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(PolicyError::MixingRate(alpha).into());
        }
        let before = policy.clone();
        match ordering {
            AgentOrdering::PerStep => {
                forward_into(self.model, &self.layout, policy, &mut self.marginals)?;
                let agents: Vec<usize> = (0..policy.agent_count()).collect();
                self.backward(policy, risk, alpha, &agents)?;
            }
            AgentOrdering::PerAgent => {
                for i in 0..policy.agent_count() {
                    forward_into(self.model, &self.layout, policy, &mut self.marginals)?;
                    self.backward(policy, risk, alpha, &[i])?;
                }
            }
        }
        let j_risk = self.aggregate(policy, risk);
        Ok(SweepOutcome {
            j_risk,
            changed: *policy != before,
        })
    }

    fn backward(
        &mut self,
        policy: &mut JointPolicy,
        risk: RiskParameter,
        alpha: f64,
        agents: &[usize],
    ) -> Result<(), SolverError> {
        self.next.iter_mut().for_each(|v| *v = 0.0);
        for t in (0..self.model.horizon()).rev() {
            fill_q_slice(self.model, &self.kernels, &self.layout, &self.next, risk, &mut self.q);
            let slice = QSlice {
                t,
                risk,
                values: std::mem::take(&mut self.q),
            };
            for &i in agents {
                let others = self.layout.joint_rule(policy, t, Some(i));
                let local = local_q::average_with(
                    &self.layout,
                    &self.marginals[t],
                    &others,
                    &slice,
                    i,
                    policy.agent(i),
                );
                let greedy = greedy_agent_update(&local, policy.agent(i));
                let mixed = mix_policies(policy.agent(i).rule(t), &greedy, alpha)?;
                policy.agent_mut(i).set_rule(t, mixed)?;
            }
            let rule = self.layout.joint_rule(policy, t, None);
            fold_policy(&self.layout, &slice.values, &rule, risk, t + 1, &mut self.current)?;
            self.q = slice.values;
            std::mem::swap(&mut self.current, &mut self.next);
        }
        Ok(())
    }

    /// `J^risk_{1:T}` from the value tensor at `t = 1` left in `next`.
    fn aggregate(&self, policy: &JointPolicy, risk: RiskParameter) -> f64 {
        aggregate_initial(self.model, &self.layout, policy, &self.next, risk)
    }
}

/// `(1/λ)·log Σ ζ1(s,y)·φ(z0)·exp(L_1)`, or the plain expectation when neutral.
pub(crate) fn aggregate_initial(
    model: &DecPomdpModel,
    layout: &Layout,
    policy: &JointPolicy,
    first: &[f64],
    risk: RiskParameter,
) -> f64 {
    let phi = layout.initial_memory(policy);
    let nz = layout.memories;
    let neutral = risk.is_neutral();
    let mut plain = 0.0;
    let mut acc = LogSumExp::new();
    for (sy, &p) in model.initial().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (z, &f) in phi.iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            let v = first[sy * nz + z];
            if neutral {
                plain += p * f * v;
            } else {
                acc.push((p * f).ln() + v);
            }
        }
    }
    if neutral {
        plain
    } else {
        acc.value() / risk.lambda()
    }
}

/// One RS-CPI sweep on `policy`. Returns `J^risk_{1:T}` of the updated policy.
pub fn sweep(
    model: &DecPomdpModel,
    policy: &mut JointPolicy,
    risk: RiskParameter,
    alpha: f64,
    ordering: AgentOrdering,
) -> Result<SweepOutcome, SolverError> {
    SweepEngine::new(model, &policy.memory_sizes()).sweep(policy, risk, alpha, ordering)
}

/// Value tensors of `policy` for `t = T+1, T, …, 1` (element 0 is the
/// terminal zero tensor).
pub fn backward_tilted_values(
    model: &DecPomdpModel,
    policy: &JointPolicy,
    risk: RiskParameter,
) -> Result<Vec<TiltedValueTensor>, EvalError> {
    policy.check_against(model)?;
    let layout = Layout::new(model, &policy.memory_sizes());
    let kernels = BackupKernels::new(model);
    let horizon = model.horizon();
    let mut out = vec![TiltedValueTensor::terminal(horizon + 1, risk, layout.cells())];
    let mut q = vec![0.0; layout.cells() * layout.columns()];
    for t in (0..horizon).rev() {
        let next = &out.last().expect("terminal tensor").values;
        fill_q_slice(model, &kernels, &layout, next, risk, &mut q);
        let rule = layout.joint_rule(policy, t, None);
        let mut values = vec![0.0; layout.cells()];
        fold_policy(&layout, &q, &rule, risk, t + 1, &mut values)?;
        out.push(TiltedValueTensor {
            t: t + 1,
            risk,
            values,
        });
    }
    Ok(out)
}

/// Centralized Q slice of step `t` (0-based) from the value tensor at `t + 1`.
pub fn q_slice(
    model: &DecPomdpModel,
    memory_sizes: &[usize],
    next: &TiltedValueTensor,
    t: usize,
) -> QSlice {
    let layout = Layout::new(model, memory_sizes);
    let kernels = BackupKernels::new(model);
    let mut values = vec![0.0; layout.cells() * layout.columns()];
    fill_q_slice(model, &kernels, &layout, &next.values, next.risk, &mut values);
    QSlice {
        t,
        risk: next.risk,
        values,
    }
}

/// Runs RS-CPI from `config.restarts` random initial policies and keeps the
/// one with the highest risk-neutral value (lowest seed on ties).
pub fn rscpi(model: &DecPomdpModel, config: &SolverConfig) -> Result<SolveResult, SolverError> {
    config.validate(model)?;
    let started = Instant::now();
    let mut engine = SweepEngine::new(model, &config.memory_sizes);
    let mut best: Option<SolveResult> = None;
    for r in 0..config.restarts {
        let seed = config.seed.wrapping_add(r as u64);
        let mut policy = random_policy(model, &config.memory_sizes, seed);
        if config.uniform_initial_state {
            policy = policy.with_uniform_initial_states();
        }
        let run = run_from(&mut engine, model, config, policy, seed)?;
        if best.as_ref().is_none_or(|b| run.j_exact > b.j_exact) {
            best = Some(run);
        }
    }
    let mut result = best.expect("at least one restart");
    result.wall_time = started.elapsed();
    result.peak_floats = engine.peak_floats();
    Ok(result)
}

/// RS-CPI sweeps from a given initial policy.
pub fn rscpi_from(
    model: &DecPomdpModel,
    config: &SolverConfig,
    policy: JointPolicy,
) -> Result<SolveResult, SolverError> {
    config.validate(model)?;
    let started = Instant::now();
    let mut engine = SweepEngine::new(model, &config.memory_sizes);
    let mut result = run_from(&mut engine, model, config, policy, config.seed)?;
    result.wall_time = started.elapsed();
    result.peak_floats = engine.peak_floats();
    Ok(result)
}

fn run_from(
    engine: &mut SweepEngine<'_>,
    model: &DecPomdpModel,
    config: &SolverConfig,
    mut policy: JointPolicy,
    seed: u64,
) -> Result<SolveResult, SolverError> {
    let alpha = config.effective_alpha();
    let mut trace: Vec<SweepRecord> = Vec::new();
    for k in 1..=config.max_sweeps {
        let lambda = config.lambda_at(k);
        let risk = RiskParameter::new(lambda).map_err(|e| SolverError::Config(e.to_string()))?;
        let outcome = engine.sweep(&mut policy, risk, alpha, config.ordering)?;
        let j = if risk.is_neutral() {
            outcome.j_risk
        } else {
            evaluate_exact(model, &policy)?
        };
        let previous = trace.last().copied();
        trace.push(SweepRecord {
            lambda,
            alpha,
            j_risk: outcome.j_risk,
            j,
        });
        if config.settled(k) {
            let stalled = previous
                .is_some_and(|p| p.lambda == lambda && outcome.j_risk - p.j_risk < config.tolerance);
            if stalled || !outcome.changed {
                break;
            }
        }
    }
    let last = *trace.last().expect("at least one sweep");
    Ok(SolveResult {
        j_exact: last.j,
        j_risk_final: last.j_risk,
        sweeps: trace.len(),
        trace,
        policy,
        wall_time: Duration::ZERO,
        peak_floats: engine.peak_floats(),
        seed,
    })
}

//! Entropic risk kernel and finite-horizon risk-aware MDP recursions.
//!
//! The kernel computes the certainty equivalent `(1/λ)·log E[exp(λ·X)]`
//! with a max shift so that large `λ·X` never overflows. For `|λ|` below the
//! zero threshold the exact risk-neutral limit (the mean) is returned.

use crate::error::RiskError;

/// Default magnitude below which `λ` is treated as exactly zero.
pub const DEFAULT_ZERO_THRESHOLD: f64 = 1e-9;

/// Risk sensitivity `λ` of the entropic map.
///
/// Positive values are risk seeking, negative values risk averse. The solver
/// only accepts `λ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskParameter {
    lambda: f64,
    zero_threshold: f64,
}

impl RiskParameter {
    pub fn new(lambda: f64) -> Result<Self, RiskError> {
        Self::with_threshold(lambda, DEFAULT_ZERO_THRESHOLD)
    }

    pub fn with_threshold(lambda: f64, zero_threshold: f64) -> Result<Self, RiskError> {
        if !lambda.is_finite() || !zero_threshold.is_finite() {
            return Err(RiskError::NonFinite);
        }
        Ok(Self {
            lambda,
            zero_threshold: zero_threshold.abs(),
        })
    }

    pub fn neutral() -> Self {
        Self {
            lambda: 0.0,
            zero_threshold: DEFAULT_ZERO_THRESHOLD,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_neutral(&self) -> bool {
        self.lambda.abs() < self.zero_threshold
    }
}

/// Streaming `log Σ exp(x_k)` with a running maximum.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub const fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.scaled += (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        if self.scaled == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// `log Σ_k exp(x_k)`; `-∞` for an empty input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = LogSumExp::new();
    for x in xs {
        acc.push(x);
    }
    acc.value()
}

/// `(1/λ)·log Σ_k (w_k/w)·exp(λ·v_k)` with `w = Σ_k w_k`.
pub fn weighted_logmeanexp(
    weights: &[f64],
    values: &[f64],
    risk: RiskParameter,
) -> Result<f64, RiskError> {
    if weights.len() != values.len() {
        return Err(RiskError::Length(weights.len(), values.len()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(RiskError::ZeroMass);
    }
    let support = || {
        weights
            .iter()
            .zip(values)
            .filter(|(w, _)| **w > 0.0)
    };
    if risk.is_neutral() {
        return Ok(support().map(|(w, v)| w / total * v).sum());
    }
    let lambda = risk.lambda();
    let shift = support()
        .map(|(_, v)| lambda * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = support()
        .map(|(w, v)| w / total * (lambda * v - shift).exp())
        .sum();
    Ok((shift + sum.ln()) / lambda)
}

/// Certainty equivalent `(1/λ)·log E[exp(λX)]` of a finite lottery.
pub fn certainty_equivalent(
    probabilities: &[f64],
    outcomes: &[f64],
    risk: RiskParameter,
) -> Result<f64, RiskError> {
    weighted_logmeanexp(probabilities, outcomes, risk)
}

/// Finite-horizon single-agent MDP.
#[derive(Debug, Clone)]
pub struct FiniteMdp {
    pub state_count: usize,
    pub action_count: usize,
    /// `P(s'|s,a)` laid out `[s][a][s']`.
    pub transition: Vec<f64>,
    /// `r(s,a)` laid out `[s][a]`.
    pub reward: Vec<f64>,
    pub initial: Vec<f64>,
    pub horizon: usize,
}

impl FiniteMdp {
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.state_count;
        let start = (s * self.action_count + a) * n;
        &self.transition[start..start + n]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.action_count + a]
    }
}

/// Time-indexed stochastic Markov policy `ψ_t(a|s)`, each table `[s][a]`.
pub type MdpPolicy = Vec<Vec<f64>>;

/// Optimal values of a risk-aware MDP. Index 0 of `values` is `t = 1`;
/// `values[T]` is the terminal zero vector.
#[derive(Debug, Clone)]
pub struct MdpSolution {
    pub values: Vec<Vec<f64>>,
    pub q_values: Vec<Vec<f64>>,
    pub policy: Vec<Vec<usize>>,
}

impl MdpSolution {
    /// Deterministic optimal policy as stochastic tables.
    pub fn policy_tables(&self, action_count: usize) -> MdpPolicy {
        self.policy
            .iter()
            .map(|choices| {
                let mut table = vec![0.0; choices.len() * action_count];
                for (s, &a) in choices.iter().enumerate() {
                    table[s * action_count + a] = 1.0;
                }
                table
            })
            .collect()
    }
}

fn continuation(mdp: &FiniteMdp, next: &[f64], s: usize, a: usize, risk: RiskParameter) -> f64 {
    weighted_logmeanexp(mdp.transition_row(s, a), next, risk)
        .expect("transition rows are normalized")
}

/// Backward induction for the entropic objective. Ties go to the smallest
/// action index.
pub fn risk_value_iteration(mdp: &FiniteMdp, risk: RiskParameter) -> MdpSolution {
    let (ns, na, horizon) = (mdp.state_count, mdp.action_count, mdp.horizon);
    let mut values = vec![vec![0.0; ns]; horizon + 1];
    let mut q_values = vec![vec![0.0; ns * na]; horizon];
    let mut policy = vec![vec![0; ns]; horizon];
    for t in (0..horizon).rev() {
        let (head, tail) = values.split_at_mut(t + 1);
        let next = &tail[0];
        for s in 0..ns {
            let mut best = (0, f64::NEG_INFINITY);
            for a in 0..na {
                let q = mdp.reward(s, a) + continuation(mdp, next, s, a, risk);
                q_values[t][s * na + a] = q;
                if q > best.1 {
                    best = (a, q);
                }
            }
            policy[t][s] = best.0;
            head[t][s] = best.1;
        }
    }
    MdpSolution {
        values,
        q_values,
        policy,
    }
}

/// Entropic value of a fixed policy. Returns `J^risk_{1:T}` and the value
/// vectors for `t = 1..=T+1`.
pub fn risk_policy_evaluation_mdp(
    mdp: &FiniteMdp,
    policy: &[Vec<f64>],
    risk: RiskParameter,
) -> (f64, Vec<Vec<f64>>) {
    let (ns, na, horizon) = (mdp.state_count, mdp.action_count, mdp.horizon);
    assert_eq!(policy.len(), horizon, "one policy table per step");
    let mut values = vec![vec![0.0; ns]; horizon + 1];
    for t in (0..horizon).rev() {
        let (head, tail) = values.split_at_mut(t + 1);
        let next = &tail[0];
        for s in 0..ns {
            let q: Vec<f64> = (0..na)
                .map(|a| mdp.reward(s, a) + continuation(mdp, next, s, a, risk))
                .collect();
            head[t][s] = weighted_logmeanexp(&policy[t][s * na..(s + 1) * na], &q, risk)
                .expect("policy rows are normalized");
        }
    }
    let j = weighted_logmeanexp(&mdp.initial, &values[0], risk).expect("initial distribution");
    (j, values)
}

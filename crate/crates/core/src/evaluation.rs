//! Exact and sampled policy evaluation.
//!
//! Under an agent-state policy the tuple `(s_t, y_t, z_{t-1})` is a
//! time-inhomogeneous Markov chain, so the risk-neutral value is a plain
//! backward recursion over that chain. [`evaluate_forward`] computes the same
//! number from the forward marginals and [`rollout_monte_carlo`] samples it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::EvalError;
use crate::layout::Layout;
use crate::model::DecPomdpModel;
use crate::policy::JointPolicy;
use crate::risk::{LogSumExp, RiskParameter};
use crate::solver::{aggregate_initial, backward_tilted_values};

const DRIFT_TOLERANCE: f64 = 1e-8;

/// `ζ_t(s, y, z_-)` for `t = 1..=T`, each laid out `[s][y][z_-]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTrajectory {
    pub states: usize,
    pub observations: usize,
    pub memories: usize,
    pub slices: Vec<Vec<f64>>,
}

impl MarginalTrajectory {
    pub fn horizon(&self) -> usize {
        self.slices.len()
    }

    /// Slice for step `t`, 1-based.
    pub fn at(&self, t: usize) -> &[f64] {
        &self.slices[t - 1]
    }

    pub fn index(&self, s: usize, y: usize, z_prev: usize) -> usize {
        (s * self.observations + y) * self.memories + z_prev
    }

    pub fn get(&self, t: usize, s: usize, y: usize, z_prev: usize) -> f64 {
        self.at(t)[self.index(s, y, z_prev)]
    }

    /// `ζ_t(y, z_-)`, laid out `[y][z_-]`.
    pub fn observation_marginal(&self, t: usize) -> Vec<f64> {
        let rows = self.observations * self.memories;
        let mut out = vec![0.0; rows];
        for chunk in self.at(t).chunks(rows) {
            for (o, v) in out.iter_mut().zip(chunk) {
                *o += v;
            }
        }
        out
    }

    /// `ζ_t(s | y, z_-)`; `None` when the conditioning row has zero mass.
    pub fn state_conditional(&self, t: usize, y: usize, z_prev: usize) -> Option<Vec<f64>> {
        let col: Vec<f64> = (0..self.states).map(|s| self.get(t, s, y, z_prev)).collect();
        let total: f64 = col.iter().sum();
        (total > 0.0).then(|| col.iter().map(|p| p / total).collect())
    }
}

pub fn forward_marginals(
    model: &DecPomdpModel,
    policy: &JointPolicy,
) -> Result<MarginalTrajectory, EvalError> {
    policy.check_against(model)?;
    let layout = Layout::new(model, &policy.memory_sizes());
    let mut slices = vec![vec![0.0; layout.cells()]; model.horizon()];
    forward_into(model, &layout, policy, &mut slices)?;
    Ok(MarginalTrajectory {
        states: layout.states,
        observations: layout.observations,
        memories: layout.memories,
        slices,
    })
}

/// Fills `out[t]` with `ζ_{t+1}` for every step, reusing the buffers.
pub(crate) fn forward_into(
    model: &DecPomdpModel,
    layout: &Layout,
    policy: &JointPolicy,
    out: &mut [Vec<f64>],
) -> Result<(), EvalError> {
    let (ns, ny, na, nz) = (layout.states, layout.observations, layout.actions, layout.memories);
    let rows = ny * nz;
    let width = layout.columns();
    let phi = layout.initial_memory(policy);
    {
        let first = &mut out[0];
        for (sy, &p) in model.initial().iter().enumerate() {
            for (z, &f) in phi.iter().enumerate() {
                first[sy * nz + z] = p * f;
            }
        }
    }
    // m(s, a, z): mass entering the transition with joint action a and new agent state z.
    let mut m = vec![0.0; ns * width];
    for t in 1..out.len() {
        let rule = layout.joint_rule(policy, t - 1, None);
        m.iter_mut().for_each(|v| *v = 0.0);
        let (done, rest) = out.split_at_mut(t);
        let prev = &done[t - 1];
        for s in 0..ns {
            let target = &mut m[s * width..(s + 1) * width];
            for row in 0..rows {
                let zeta = prev[s * rows + row];
                if zeta == 0.0 {
                    continue;
                }
                let prow = &rule[row * width..(row + 1) * width];
                for (c, &p) in prow.iter().enumerate() {
                    target[c] += zeta * p;
                }
            }
        }
        let next = &mut rest[0];
        next.iter_mut().for_each(|v| *v = 0.0);
        for s in 0..ns {
            for a in 0..na {
                let trow = model.transition_row(s, a);
                for z in 0..nz {
                    let w = m[s * width + a * nz + z];
                    if w == 0.0 {
                        continue;
                    }
                    for (sp, &pt) in trow.iter().enumerate() {
                        if pt == 0.0 {
                            continue;
                        }
                        let orow = model.observation_row(a, sp);
                        for (y, &po) in orow.iter().enumerate() {
                            next[(sp * ny + y) * nz + z] += w * pt * po;
                        }
                    }
                }
            }
        }
        let total: f64 = next.iter().sum();
        if (total - 1.0).abs() > DRIFT_TOLERANCE {
            return Err(EvalError::MarginalDrift { t: t + 1, sum: total });
        }
        if total != 1.0 {
            next.iter_mut().for_each(|v| *v /= total);
        }
    }
    Ok(())
}

/// Expected reward per `(s, y, z_-)` cell under step `t`'s rule, using the
/// product of per-agent action marginals.
fn expected_reward(model: &DecPomdpModel, layout: &Layout, policy: &JointPolicy, t: usize) -> Vec<f64> {
    let n = layout.agents;
    let rows = layout.observations * layout.memories;
    let row_parts = layout.row_parts();
    let mut out = vec![0.0; layout.states * rows];
    let mut action_marginal = vec![0.0; layout.actions];
    for row in 0..rows {
        // Π_i Σ_{z^i} π^i_t(a^i, z^i | y^i, z^i_-)
        let per_agent: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let agent = policy.agent(i);
                let nzi = agent.memory_size();
                let r = row_parts[row * n + i];
                let cols = agent.column_count();
                agent.rule(t)[r * cols..(r + 1) * cols]
                    .chunks(nzi)
                    .map(|c| c.iter().sum())
                    .collect()
            })
            .collect();
        for (a, slot) in action_marginal.iter_mut().enumerate() {
            *slot = (0..n)
                .map(|i| per_agent[i][layout.a_parts[a * n + i]])
                .product();
        }
        for s in 0..layout.states {
            out[s * rows + row] = action_marginal
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(a, p)| p * model.reward(s, a))
                .sum();
        }
    }
    out
}

/// Risk-neutral value `J(π)` by backward recursion over the induced chain.
pub fn evaluate_exact(model: &DecPomdpModel, policy: &JointPolicy) -> Result<f64, EvalError> {
    policy.check_against(model)?;
    let layout = Layout::new(model, &policy.memory_sizes());
    let (ns, ny, na, nz) = (layout.states, layout.observations, layout.actions, layout.memories);
    let rows = ny * nz;
    let width = layout.columns();
    let mut value = vec![0.0; layout.cells()];
    let mut expected_next = vec![0.0; ns * width];
    for t in (0..model.horizon()).rev() {
        // E(s, a, z) = Σ_{s', y'} P(s', y' | s, a) Ṽ_{t+1}(s', y', z)
        for s in 0..ns {
            for a in 0..na {
                let trow = model.transition_row(s, a);
                let out = &mut expected_next[s * width + a * nz..s * width + (a + 1) * nz];
                out.iter_mut().for_each(|v| *v = 0.0);
                if t + 1 == model.horizon() {
                    continue;
                }
                for (sp, &pt) in trow.iter().enumerate() {
                    if pt == 0.0 {
                        continue;
                    }
                    for (y, &po) in model.observation_row(a, sp).iter().enumerate() {
                        let w = pt * po;
                        if w == 0.0 {
                            continue;
                        }
                        let base = (sp * ny + y) * nz;
                        for z in 0..nz {
                            out[z] += w * value[base + z];
                        }
                    }
                }
            }
        }
        let reward = expected_reward(model, &layout, policy, t);
        let rule = layout.joint_rule(policy, t, None);
        for s in 0..ns {
            let e = &expected_next[s * width..(s + 1) * width];
            for row in 0..rows {
                let prow = &rule[row * width..(row + 1) * width];
                let cont: f64 = prow.iter().zip(e).map(|(p, v)| p * v).sum();
                value[s * rows + row] = reward[s * rows + row] + cont;
            }
        }
    }
    let phi = layout.initial_memory(policy);
    let mut j = 0.0;
    for (sy, &p) in model.initial().iter().enumerate() {
        for (z, &f) in phi.iter().enumerate() {
            j += p * f * value[sy * nz + z];
        }
    }
    Ok(j)
}

/// `Σ_t Σ ζ_t(s, y, z_-)·Σ_a π_t(a | y, z_-)·r(s, a)`.
pub fn evaluate_forward(model: &DecPomdpModel, policy: &JointPolicy) -> Result<f64, EvalError> {
    let marginals = forward_marginals(model, policy)?;
    let layout = Layout::new(model, &policy.memory_sizes());
    let mut j = 0.0;
    for t in 0..model.horizon() {
        let reward = expected_reward(model, &layout, policy, t);
        j += marginals.slices[t]
            .iter()
            .zip(&reward)
            .map(|(z, r)| z * r)
            .sum::<f64>();
    }
    Ok(j)
}

/// Risk-seeking value `J^risk_λ(π)`; the plain expectation when `λ` is zero.
pub fn evaluate_risk(model: &DecPomdpModel, policy: &JointPolicy, lambda: f64) -> Result<f64, EvalError> {
    if lambda < 0.0 {
        return Err(EvalError::NegativeRisk(lambda));
    }
    let risk = RiskParameter::new(lambda)?;
    let values = backward_tilted_values(model, policy, risk)?;
    let layout = Layout::new(model, &policy.memory_sizes());
    let first = &values.last().expect("at least the terminal tensor").values;
    Ok(aggregate_initial(model, &layout, policy, first, risk))
}

/// `J^risk_{t:T} = (1/λ)·log Σ ζ_t(s, y, z_-)·exp(λ·V_t(s, y, z_-))` for
/// `t` in `1..=T`.
pub fn partial_risk_value(
    model: &DecPomdpModel,
    policy: &JointPolicy,
    t: usize,
    lambda: f64,
) -> Result<f64, EvalError> {
    if lambda < 0.0 {
        return Err(EvalError::NegativeRisk(lambda));
    }
    assert!(t >= 1 && t <= model.horizon(), "step {t} outside 1..={}", model.horizon());
    let risk = RiskParameter::new(lambda)?;
    let values = backward_tilted_values(model, policy, risk)?;
    let marginals = forward_marginals(model, policy)?;
    // values[k] holds step T + 1 - k.
    let tensor = &values[model.horizon() + 1 - t].values;
    let zeta = marginals.at(t);
    if risk.is_neutral() {
        return Ok(zeta.iter().zip(tensor).map(|(p, v)| p * v).sum());
    }
    let mut acc = LogSumExp::new();
    for (p, v) in zeta.iter().zip(tensor) {
        if *p > 0.0 {
            acc.push(p.ln() + v);
        }
    }
    Ok(acc.value() / lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub episodes: usize,
}

fn sample(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

/// Simulates `episodes` independent runs of the policy and returns the sample
/// mean of the total reward with its standard error.
pub fn rollout_monte_carlo(
    model: &DecPomdpModel,
    policy: &JointPolicy,
    episodes: usize,
    seed: u64,
) -> Result<MonteCarloEstimate, EvalError> {
    if episodes == 0 {
        return Err(EvalError::NoEpisodes);
    }
    policy.check_against(model)?;
    let n = model.agent_count();
    let ny = model.joint_observations().size();
    let obs_index = model.joint_observations();
    let act_index = model.joint_actions();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y_parts = vec![0; n];
    let mut a_parts = vec![0; n];
    let mut z = vec![0; n];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..episodes {
        let sy = sample(&mut rng, model.initial());
        let (mut s, mut y) = (sy / ny, sy % ny);
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = sample(&mut rng, policy.agent(i).initial_state());
        }
        let mut total = 0.0;
        for t in 0..model.horizon() {
            for (i, yi) in y_parts.iter_mut().enumerate() {
                *yi = obs_index.component(y, i);
            }
            for i in 0..n {
                let agent = policy.agent(i);
                let nzi = agent.memory_size();
                let col = sample(&mut rng, agent.row(t, y_parts[i], z[i]));
                a_parts[i] = col / nzi;
                z[i] = col % nzi;
            }
            let a = act_index.encode(&a_parts);
            total += model.reward(s, a);
            if t + 1 < model.horizon() {
                let next = sample(&mut rng, model.transition_row(s, a));
                y = sample(&mut rng, model.observation_row(a, next));
                s = next;
            }
        }
        sum += total;
        sum_sq += total * total;
    }
    let k = episodes as f64;
    let mean = sum / k;
    let std_error = if episodes > 1 {
        let var = ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    Ok(MonteCarloEstimate {
        mean,
        std_error,
        episodes,
    })
}

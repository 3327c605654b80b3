#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rscpi::evaluation::forward_marginals;
use rscpi::model::{DecPomdpModel, InitialObservation};
use rscpi::policy::{mix_policies, JointPolicy};
use rscpi::risk::RiskParameter;
use rscpi::solver::{averaged_local_q, backward_tilted_values, greedy_agent_update, q_slice};

pub fn simplex(rng: &mut ChaCha8Rng, n: usize, sparse: bool) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    if sparse && n > 1 {
        for p in row.iter_mut() {
            if rng.random_bool(0.3) {
                *p = 0.0;
            }
        }
        if row.iter().all(|&p| p == 0.0) {
            row[rng.random_range(0..n)] = 1.0;
        }
    }
    let total: f64 = row.iter().sum();
    row.iter().map(|p| p / total).collect()
}

/// Dimensions of a random two-agent problem.
#[derive(Debug, Clone, Copy)]
pub struct Dims {
    pub states: usize,
    pub actions: [usize; 2],
    pub observations: [usize; 2],
    pub horizon: usize,
}

impl Dims {
    pub fn random(rng: &mut ChaCha8Rng, max_states: usize, max_horizon: usize) -> Self {
        Self {
            states: rng.random_range(1..=max_states),
            actions: [rng.random_range(1..=2), rng.random_range(2..=3)],
            observations: [rng.random_range(1..=2), rng.random_range(1..=2)],
            horizon: rng.random_range(1..=max_horizon),
        }
    }
}

/// Random model with rewards in `[-5, 5]`. With `sparse`, kernels have
/// zero entries, so some agent-state cells become unreachable.
pub fn random_model(rng: &mut ChaCha8Rng, dims: Dims, sparse: bool, mode: InitialObservation) -> DecPomdpModel {
    let ns = dims.states;
    let na = dims.actions[0] * dims.actions[1];
    let ny = dims.observations[0] * dims.observations[1];
    let transition: Vec<f64> = (0..ns * na).flat_map(|_| simplex(rng, ns, sparse)).collect();
    let observation: Vec<f64> = (0..na * ns).flat_map(|_| simplex(rng, ny, sparse)).collect();
    let reward: Vec<f64> = (0..ns * na).map(|_| rng.random_range(-5.0..5.0)).collect();
    let start = simplex(rng, ns, sparse);
    DecPomdpModel::from_kernels(
        dims.actions.to_vec(),
        dims.observations.to_vec(),
        transition,
        observation,
        reward,
        &start,
        mode,
        dims.horizon,
    )
    .expect("random model is valid")
}

pub fn random_mode(rng: &mut ChaCha8Rng) -> InitialObservation {
    if rng.random_bool(0.5) {
        InitialObservation::DummyObservation
    } else {
        InitialObservation::UniformObservation
    }
}

/// Conservative greedy update of agent `agent` at step `t` (1-based), with
/// every other decision rule held fixed.
pub fn local_update(
    model: &DecPomdpModel,
    policy: &JointPolicy,
    t: usize,
    agent: usize,
    lambda: f64,
    alpha: f64,
) -> JointPolicy {
    let risk = RiskParameter::new(lambda).unwrap();
    let values = backward_tilted_values(model, policy, risk).unwrap();
    let next = &values[model.horizon() - t];
    let q = q_slice(model, &policy.memory_sizes(), next, t - 1);
    let marginals = forward_marginals(model, policy).unwrap();
    let local = averaged_local_q(model, marginals.at(t), policy, &q, agent);
    let greedy = greedy_agent_update(&local, policy.agent(agent));
    let mixed = mix_policies(policy.agent(agent).rule(t - 1), &greedy, alpha).unwrap();
    let mut out = policy.clone();
    out.agent_mut(agent).set_rule(t - 1, mixed).unwrap();
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

use rscpi::model::JointIndexer;

/// Mass of agent `agent`'s row `(y^i, z^i_-)` under a `[s][y][z_-]` marginal.
pub fn agent_row_mass(model: &DecPomdpModel, policy: &JointPolicy, marginal: &[f64], agent: usize) -> Vec<f64> {
    let sizes = policy.memory_sizes();
    let zs = JointIndexer::new(&sizes);
    let ys = model.joint_observations();
    let nz = sizes[agent];
    let mut mass = vec![0.0; model.observation_counts()[agent] * nz];
    for s in 0..model.state_count() {
        for y in 0..ys.size() {
            for z in 0..zs.size() {
                let p = marginal[(s * ys.size() + y) * zs.size() + z];
                mass[ys.component(y, agent) * nz + zs.component(z, agent)] += p;
            }
        }
    }
    mass
}

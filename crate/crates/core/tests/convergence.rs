mod common;

use common::{agent_row_mass, random_mode, random_model, rng, Dims};
use rand::Rng;
use rscpi::evaluation::forward_marginals;
use rscpi::model::{DecPomdpModel, JointIndexer};
use rscpi::policy::{random_policy, JointPolicy};
use rscpi::risk::RiskParameter;
use rscpi::solver::{
    averaged_local_q, backward_tilted_values, greedy_agent_update, q_slice, sweep, AgentOrdering,
};

fn small_instance(seed: u64) -> (DecPomdpModel, Vec<usize>) {
    let mut r = rng(seed);
    let dims = Dims::random(&mut r, 3, 3);
    let sparse = r.random_bool(0.5);
    let mode = random_mode(&mut r);
    let model = random_model(&mut r, dims, sparse, mode);
    let mem = vec![r.random_range(1..=2), 1];
    (model, mem)
}

fn is_point_mass(row: &[f64]) -> bool {
    row.iter().filter(|&&p| p == 1.0).count() == 1 && row.iter().all(|&p| p == 0.0 || p == 1.0)
}

/// Reachable rows of every agent at every step, under `policy`'s marginals.
fn reachable_rows(model: &DecPomdpModel, policy: &JointPolicy) -> Vec<Vec<Vec<bool>>> {
    let marginals = forward_marginals(model, policy).unwrap();
    (0..policy.agent_count())
        .map(|i| {
            (1..=model.horizon())
                .map(|t| agent_row_mass(model, policy, marginals.at(t), i).iter().map(|&m| m > 0.0).collect())
                .collect()
        })
        .collect()
}

fn rows_of(policy: &JointPolicy, i: usize, t: usize) -> Vec<Vec<f64>> {
    let a = policy.agent(i);
    a.rule(t).chunks(a.column_count()).map(<[f64]>::to_vec).collect()
}

#[test]
fn alpha_one_reaches_locally_optimal_fixpoint() {
    for seed in 0..50 {
        let (model, mem) = small_instance(seed);
        for lambda in [0.0, 1.0] {
            let risk = RiskParameter::new(lambda).unwrap();
            let mut policy = random_policy(&model, &mem, seed);
            let reach = reachable_rows(&model, &policy);
            sweep(&model, &mut policy, risk, 1.0, AgentOrdering::PerStep).unwrap();
            for (i, per_t) in reach.iter().enumerate() {
                for (t, rows) in per_t.iter().enumerate() {
                    for (row, table) in rows_of(&policy, i, t).iter().enumerate() {
                        if rows[row] {
                            assert!(is_point_mass(table), "seed {seed}: agent {i} t={} row {row}", t + 1);
                        }
                    }
                }
            }
            let mut sweeps = 1;
            loop {
                let outcome = sweep(&model, &mut policy, risk, 1.0, AgentOrdering::PerStep).unwrap();
                sweeps += 1;
                if !outcome.changed {
                    break;
                }
                assert!(sweeps < 10_000, "seed {seed} λ={lambda}: no fixpoint");
            }
            assert_local_optimum(&model, &policy, risk, seed);
        }
    }
}

fn assert_local_optimum(model: &DecPomdpModel, policy: &JointPolicy, risk: RiskParameter, seed: u64) {
    let values = backward_tilted_values(model, policy, risk).unwrap();
    let marginals = forward_marginals(model, policy).unwrap();
    let horizon = model.horizon();
    for t in 1..=horizon {
        let q = q_slice(model, &policy.memory_sizes(), &values[horizon - t], t - 1);
        for i in 0..policy.agent_count() {
            let local = averaged_local_q(model, marginals.at(t), policy, &q, i);
            let greedy = greedy_agent_update(&local, policy.agent(i));
            let rows = rows_of(policy, i, t - 1);
            for (row, table) in rows.iter().enumerate() {
                if local.reachable(row) {
                    assert!(is_point_mass(table), "seed {seed}: agent {i} t={t} row {row} not deterministic");
                    assert_eq!(greedy.choices[row], policy.agent(i).argmax(t - 1, row), "seed {seed}: agent {i} t={t} row {row}");
                }
            }
        }
    }
}

/// `Q̄(row, col)` by direct conditioning: the other agents' actions and agent
/// states are summed out explicitly.
fn explicit_local_q(
    model: &DecPomdpModel,
    policy: &JointPolicy,
    t: usize,
    agent: usize,
    lambda: f64,
) -> Vec<Vec<Option<f64>>> {
    let risk = RiskParameter::new(lambda).unwrap();
    let values = backward_tilted_values(model, policy, risk).unwrap();
    let next = &values[model.horizon() - t];
    let sizes = policy.memory_sizes();
    let zs = JointIndexer::new(&sizes);
    let ys = model.joint_observations();
    let acts = model.joint_actions();
    let marginal = forward_marginals(model, policy).unwrap();
    let zeta = marginal.at(t);
    let n = policy.agent_count();
    let nz_i = sizes[agent];
    let rows = model.observation_counts()[agent] * nz_i;
    let cols = model.action_counts()[agent] * nz_i;
    let mut out = vec![vec![None; cols]; rows];
    for (row, out_row) in out.iter_mut().enumerate() {
        for (col, cell) in out_row.iter_mut().enumerate() {
            let mut mass = 0.0;
            let mut terms = Vec::new();
            for s in 0..model.state_count() {
                for y in 0..ys.size() {
                    for zp in 0..zs.size() {
                        let p = zeta[(s * ys.size() + y) * zs.size() + zp];
                        if ys.component(y, agent) * nz_i + zs.component(zp, agent) != row || p == 0.0 {
                            continue;
                        }
                        mass += p;
                        for a in 0..acts.size() {
                            for z in 0..zs.size() {
                                if acts.component(a, agent) * nz_i + zs.component(z, agent) != col {
                                    continue;
                                }
                                let mut w = p;
                                for j in (0..n).filter(|&j| j != agent) {
                                    let nzj = sizes[j];
                                    let c = acts.component(a, j) * nzj + zs.component(z, j);
                                    w *= policy.agent(j).row(t - 1, ys.component(y, j), zs.component(zp, j))[c];
                                }
                                if w == 0.0 {
                                    continue;
                                }
                                let mut g = 0.0;
                                for s2 in 0..model.state_count() {
                                    for y2 in 0..ys.size() {
                                        let pr = model.dynamics(s, a, s2, y2);
                                        if pr > 0.0 {
                                            let v = next.value((s2 * ys.size() + y2) * zs.size() + z);
                                            g += pr * if lambda == 0.0 { v } else { (lambda * v).exp() };
                                        }
                                    }
                                }
                                let q = if lambda == 0.0 {
                                    model.reward(s, a) + g
                                } else {
                                    model.reward(s, a) + g.ln() / lambda
                                };
                                terms.push((w, q));
                            }
                        }
                    }
                }
            }
            if mass > 0.0 {
                *cell = Some(if lambda == 0.0 {
                    terms.iter().map(|(w, q)| w * q).sum::<f64>() / mass
                } else {
                    (terms.iter().map(|(w, q)| w * (lambda * q).exp()).sum::<f64>() / mass).ln() / lambda
                });
            }
        }
    }
    out
}

#[test]
fn tilted_argmax_matches_explicit_log_form() {
    let mut checked = 0;
    for seed in 0..30 {
        let (model, mem) = small_instance(seed + 1000);
        let policy = random_policy(&model, &mem, seed);
        for lambda in [1e-6, 0.1, 1.0, 5.0] {
            let risk = RiskParameter::new(lambda).unwrap();
            let values = backward_tilted_values(&model, &policy, risk).unwrap();
            let marginals = forward_marginals(&model, &policy).unwrap();
            for t in 1..=model.horizon() {
                let q = q_slice(&model, &mem, &values[model.horizon() - t], t - 1);
                for i in 0..2 {
                    let local = averaged_local_q(&model, marginals.at(t), &policy, &q, i);
                    let greedy = greedy_agent_update(&local, policy.agent(i));
                    let explicit = explicit_local_q(&model, &policy, t, i, lambda);
                    for (row, qs) in explicit.iter().enumerate() {
                        assert_eq!(qs[0].is_some(), local.reachable(row));
                        if qs[0].is_none() {
                            continue;
                        }
                        let qs: Vec<f64> = qs.iter().map(|q| q.unwrap()).collect();
                        for (c, q) in qs.iter().enumerate() {
                            let ours = local.value(row, c).unwrap();
                            assert!((ours - q).abs() <= 1e-7 * (1.0 + q.abs()), "seed {seed} λ={lambda}: {ours} vs {q}");
                        }
                        let best = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let chosen = qs[greedy.choices[row]];
                        assert!(chosen >= best - 1e-9 * (1.0 + best.abs()));
                        checked += 1;
                    }
                }
            }
        }
    }
    assert!(checked > 100);
}

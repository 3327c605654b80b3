//! Averaged local Q functions and the greedy per-agent update.

use crate::layout::Layout;
use crate::policy::{AgentPolicy, DeterministicAgentSlice, JointPolicy};
use crate::risk::{LogSumExp, RiskParameter};

use super::backup::QSlice;

/// Averaged local Q of one agent at one step, over `(y^i, z^i_-, a^i, z^i)`.
///
/// `weights` holds `log Σ ζ_t(s, y, z_-)·π^{-i}_t(a^{-i}, z^{-i} | ·)·exp(Q_t)`
/// when risk seeking, and `Σ ζ_t·π^{-i}_t·Q_t` when neutral; the sum runs over
/// everything the agent does not see. `mass` is the marginal `ζ_t(y^i, z^i_-)`.
#[derive(Debug, Clone)]
pub struct AveragedLocalQ {
    pub agent: usize,
    /// Step, 0-based.
    pub t: usize,
    pub risk: RiskParameter,
    pub rows: usize,
    pub columns: usize,
    pub weights: Vec<f64>,
    pub mass: Vec<f64>,
}

impl AveragedLocalQ {
    pub fn reachable(&self, row: usize) -> bool {
        self.mass[row] > 0.0
    }

    /// `Q̄(y^i, z^i_-, a^i, z^i)`; `None` for unreachable rows.
    pub fn value(&self, row: usize, column: usize) -> Option<f64> {
        if !self.reachable(row) {
            return None;
        }
        let w = self.weights[row * self.columns + column];
        Some(if self.risk.is_neutral() {
            w / self.mass[row]
        } else {
            (w - self.mass[row].ln()) / self.risk.lambda()
        })
    }

    pub fn weight_row(&self, row: usize) -> &[f64] {
        &self.weights[row * self.columns..(row + 1) * self.columns]
    }
}

/// Averages the Q slice of step `t` over what agent `agent` cannot observe,
/// using the marginal `ζ_t` and the other agents' current rules at `t`.
pub fn averaged_local_q(
    layout_source: &crate::model::DecPomdpModel,
    marginal: &[f64],
    policy: &JointPolicy,
    q: &QSlice,
    agent: usize,
) -> AveragedLocalQ {
    let layout = Layout::new(layout_source, &policy.memory_sizes());
    let others = layout.joint_rule(policy, q.t, Some(agent));
    average_with(&layout, marginal, &others, q, agent, policy.agent(agent))
}

pub(crate) fn average_with(
    layout: &Layout,
    marginal: &[f64],
    others: &[f64],
    q: &QSlice,
    agent: usize,
    incumbent: &AgentPolicy,
) -> AveragedLocalQ {
    let rows = incumbent.row_count();
    let columns = incumbent.column_count();
    let width = layout.columns();
    let joint_rows = layout.observations * layout.memories;
    let row_parts = layout.row_parts();
    let col_parts = layout.column_parts();
    let n = layout.agents;
    let neutral = q.risk.is_neutral();
    let mut mass = vec![0.0; rows];
    let mut plain = vec![0.0; if neutral { rows * columns } else { 0 }];
    let mut tilted = vec![LogSumExp::new(); if neutral { 0 } else { rows * columns }];

    for s in 0..layout.states {
        for jr in 0..joint_rows {
            let cell = s * joint_rows + jr;
            let zeta = marginal[cell];
            if zeta <= 0.0 {
                continue;
            }
            let row_i = row_parts[jr * n + agent];
            mass[row_i] += zeta;
            let qrow = &q.values[cell * width..(cell + 1) * width];
            let orow = &others[jr * width..(jr + 1) * width];
            let target = row_i * columns;
            if neutral {
                for c in 0..width {
                    let w = orow[c];
                    if w > 0.0 {
                        plain[target + col_parts[c * n + agent]] += zeta * w * qrow[c];
                    }
                }
            } else {
                let log_zeta = zeta.ln();
                for c in 0..width {
                    let w = orow[c];
                    if w > 0.0 {
                        tilted[target + col_parts[c * n + agent]].push(log_zeta + w.ln() + qrow[c]);
                    }
                }
            }
        }
    }
    let weights = if neutral {
        plain
    } else {
        tilted.iter().map(LogSumExp::value).collect()
    };
    AveragedLocalQ {
        agent,
        t: q.t,
        risk: q.risk,
        rows,
        columns,
        weights,
        mass,
    }
}

/// Deterministic best response in every reachable row; ties go to the
/// smallest `(a, z)` column. Unreachable rows are frozen at the incumbent's
/// most probable column.
pub fn greedy_agent_update(q: &AveragedLocalQ, incumbent: &AgentPolicy) -> DeterministicAgentSlice {
    let mut choices = Vec::with_capacity(q.rows);
    let mut frozen = Vec::with_capacity(q.rows);
    for row in 0..q.rows {
        if q.reachable(row) {
            choices.push(crate::policy::argmax(q.weight_row(row)));
            frozen.push(false);
        } else {
            choices.push(incumbent.argmax(q.t, row));
            frozen.push(true);
        }
    }
    DeterministicAgentSlice {
        columns: q.columns,
        choices,
        frozen,
    }
}

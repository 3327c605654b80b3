//! Flattened joint spaces shared by evaluation and the solver.
//!
//! Tensors over `(s, y, z_-)` are laid out `[s][y][z_-]` and joint policy
//! rows over `(a, z)` are laid out `[a][z]`, with joint indices from
//! [`JointIndexer`] (agent 0 most significant).

use crate::model::{DecPomdpModel, JointIndexer};
use crate::policy::JointPolicy;

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub agents: usize,
    pub states: usize,
    pub observations: usize,
    pub actions: usize,
    pub memories: usize,
    pub memory_sizes: Vec<usize>,
    /// `[y * n + i]` → `y^i`.
    pub y_parts: Vec<usize>,
    pub a_parts: Vec<usize>,
    pub z_parts: Vec<usize>,
}

impl Layout {
    pub fn new(model: &DecPomdpModel, memory_sizes: &[usize]) -> Self {
        let memory_index = JointIndexer::new(memory_sizes);
        Self {
            agents: model.agent_count(),
            states: model.state_count(),
            observations: model.joint_observations().size(),
            actions: model.joint_actions().size(),
            memories: memory_index.size(),
            memory_sizes: memory_sizes.to_vec(),
            y_parts: model.joint_observations().component_table(),
            a_parts: model.joint_actions().component_table(),
            z_parts: memory_index.component_table(),
        }
    }

    /// Size of a tensor over `(s, y, z)`.
    pub fn cells(&self) -> usize {
        self.states * self.observations * self.memories
    }

    /// Size of a joint policy table over `(y, z_-, a, z)`.
    pub fn rule_len(&self) -> usize {
        self.observations * self.memories * self.actions * self.memories
    }

    /// Number of joint `(a, z)` columns.
    pub fn columns(&self) -> usize {
        self.actions * self.memories
    }

    /// Agent `i`'s row `(y^i, z^i_-)` for joint row `(y, z_-)`.
    #[inline]
    pub fn agent_row(&self, i: usize, y: usize, z_prev: usize) -> usize {
        self.y_parts[y * self.agents + i] * self.memory_sizes[i] + self.z_parts[z_prev * self.agents + i]
    }

    /// Agent `i`'s column `(a^i, z^i)` for joint column `(a, z)`.
    #[inline]
    pub fn agent_column(&self, i: usize, a: usize, z: usize) -> usize {
        self.a_parts[a * self.agents + i] * self.memory_sizes[i] + self.z_parts[z * self.agents + i]
    }

    /// Agent column indices for every joint `(a, z)` column, `[col * n + i]`.
    pub fn column_parts(&self) -> Vec<usize> {
        let mut parts = Vec::with_capacity(self.columns() * self.agents);
        for a in 0..self.actions {
            for z in 0..self.memories {
                for i in 0..self.agents {
                    parts.push(self.agent_column(i, a, z));
                }
            }
        }
        parts
    }

    /// Agent row indices for every joint `(y, z_-)` row, `[row * n + i]`.
    pub fn row_parts(&self) -> Vec<usize> {
        let mut parts = Vec::with_capacity(self.observations * self.memories * self.agents);
        for y in 0..self.observations {
            for z in 0..self.memories {
                for i in 0..self.agents {
                    parts.push(self.agent_row(i, y, z));
                }
            }
        }
        parts
    }

    /// `π_t(a, z | y, z_-) = Π_i π^i_t(a^i, z^i | y^i, z^i_-)`, laid out
    /// `[y][z_-][a][z]`; agents listed in `skip` contribute a factor of one.
    pub fn joint_rule(&self, policy: &JointPolicy, t: usize, skip: Option<usize>) -> Vec<f64> {
        let rows = self.row_parts();
        let cols = self.column_parts();
        let n = self.agents;
        let width = self.columns();
        let mut out = vec![0.0; self.rule_len()];
        for r in 0..self.observations * self.memories {
            for c in 0..width {
                let mut p = 1.0;
                for i in 0..n {
                    if Some(i) == skip {
                        continue;
                    }
                    let agent = policy.agent(i);
                    p *= agent.rule(t)[rows[r * n + i] * agent.column_count() + cols[c * n + i]];
                    if p == 0.0 {
                        break;
                    }
                }
                out[r * width + c] = p;
            }
        }
        out
    }

    /// `φ(z_0) = Π_i φ^i(z^i_0)` over joint agent states.
    pub fn initial_memory(&self, policy: &JointPolicy) -> Vec<f64> {
        (0..self.memories)
            .map(|z| {
                (0..self.agents)
                    .map(|i| policy.agent(i).initial_state()[self.z_parts[z * self.agents + i]])
                    .product()
            })
            .collect()
    }
}

//! Agent-state based stochastic policies.
//!
//! Agent `i` at step `t` maps its current observation `y` and previous agent
//! state `z_-` to a distribution over (action, next agent state). Each decision
//! rule is a row-major table with rows indexed `y·|Z| + z_-` and columns
//! indexed `a·|Z| + z`.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::PolicyError;
use crate::model::DecPomdpModel;

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentPolicy {
    observation_count: usize,
    memory_size: usize,
    action_count: usize,
    rules: Vec<Vec<f64>>,
    initial_state: Vec<f64>,
}

impl AgentPolicy {
    pub fn new(
        observation_count: usize,
        memory_size: usize,
        action_count: usize,
        rules: Vec<Vec<f64>>,
        initial_state: Vec<f64>,
    ) -> Result<Self, PolicyError> {
        if observation_count == 0 || memory_size == 0 || action_count == 0 || rules.is_empty() {
            return Err(PolicyError::Shape("empty policy dimension".into()));
        }
        let policy = Self {
            observation_count,
            memory_size,
            action_count,
            rules,
            initial_state,
        };
        policy.validate(0)?;
        Ok(policy)
    }

    fn validate(&self, agent: usize) -> Result<(), PolicyError> {
        let (rows, cols) = (self.row_count(), self.column_count());
        if self.initial_state.len() != self.memory_size {
            return Err(PolicyError::Shape(format!(
                "agent {agent}: initial agent-state distribution has {} entries, expected {}",
                self.initial_state.len(),
                self.memory_size
            )));
        }
        check_row(&self.initial_state).map_err(|sum| PolicyError::NotNormalized {
            agent,
            t: 0,
            row: 0,
            sum,
        })?;
        for (t, rule) in self.rules.iter().enumerate() {
            if rule.len() != rows * cols {
                return Err(PolicyError::Shape(format!(
                    "agent {agent}, t={}: rule has {} entries, expected {}",
                    t + 1,
                    rule.len(),
                    rows * cols
                )));
            }
            for (row, chunk) in rule.chunks(cols).enumerate() {
                check_row(chunk).map_err(|sum| PolicyError::NotNormalized {
                    agent,
                    t: t + 1,
                    row,
                    sum,
                })?;
            }
        }
        Ok(())
    }

    pub fn observation_count(&self) -> usize {
        self.observation_count
    }

    pub fn memory_size(&self) -> usize {
        self.memory_size
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn horizon(&self) -> usize {
        self.rules.len()
    }

    /// Number of `(y, z_-)` rows.
    pub fn row_count(&self) -> usize {
        self.observation_count * self.memory_size
    }

    /// Number of `(a, z)` columns.
    pub fn column_count(&self) -> usize {
        self.action_count * self.memory_size
    }

    /// Decision rule at step `t` (0-based).
    pub fn rule(&self, t: usize) -> &[f64] {
        &self.rules[t]
    }

    pub fn row(&self, t: usize, y: usize, z_prev: usize) -> &[f64] {
        let cols = self.column_count();
        let r = y * self.memory_size + z_prev;
        &self.rules[t][r * cols..(r + 1) * cols]
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }

    /// Replaces the rule at step `t`; the new table must be well formed.
    pub fn set_rule(&mut self, t: usize, rule: Vec<f64>) -> Result<(), PolicyError> {
        let old = std::mem::replace(&mut self.rules[t], rule);
        if let Err(e) = self.validate(0) {
            self.rules[t] = old;
            return Err(e);
        }
        Ok(())
    }

    /// Index of the most probable column of a row, smallest index on ties.
    pub fn argmax(&self, t: usize, row: usize) -> usize {
        let cols = self.column_count();
        argmax(&self.rules[t][row * cols..(row + 1) * cols])
    }
}

/// Policies of all agents over the full horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicy {
    agents: Vec<AgentPolicy>,
}

impl JointPolicy {
    pub fn new(agents: Vec<AgentPolicy>) -> Result<Self, PolicyError> {
        let horizon = agents.first().map(AgentPolicy::horizon).unwrap_or(0);
        if agents.is_empty() || agents.iter().any(|a| a.horizon() != horizon) {
            return Err(PolicyError::Shape("agents disagree on the horizon".into()));
        }
        for (i, a) in agents.iter().enumerate() {
            a.validate(i)?;
        }
        Ok(Self { agents })
    }

    /// Every row uniform over `(a, z)`; initial agent state 0.
    pub fn uniform(model: &DecPomdpModel, memory_sizes: &[usize]) -> Self {
        Self::from_fn(model, memory_sizes, |_, _, cols| vec![1.0 / cols as f64; cols])
    }

    fn from_fn(
        model: &DecPomdpModel,
        memory_sizes: &[usize],
        mut row: impl FnMut(usize, usize, usize) -> Vec<f64>,
    ) -> Self {
        assert_eq!(memory_sizes.len(), model.agent_count(), "one memory size per agent");
        let agents = (0..model.agent_count())
            .map(|i| {
                let (ny, nz, na) = (
                    model.observation_counts()[i],
                    memory_sizes[i],
                    model.action_counts()[i],
                );
                assert!(nz > 0, "agent-state spaces must be nonempty");
                let rules = (0..model.horizon())
                    .map(|t| {
                        (0..ny * nz)
                            .flat_map(|_| row(i, t, na * nz))
                            .collect::<Vec<_>>()
                    })
                    .collect();
                let mut phi = vec![0.0; nz];
                phi[0] = 1.0;
                AgentPolicy {
                    observation_count: ny,
                    memory_size: nz,
                    action_count: na,
                    rules,
                    initial_state: phi,
                }
            })
            .collect();
        Self { agents }
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn horizon(&self) -> usize {
        self.agents[0].horizon()
    }

    pub fn agent(&self, i: usize) -> &AgentPolicy {
        &self.agents[i]
    }

    pub fn agent_mut(&mut self, i: usize) -> &mut AgentPolicy {
        &mut self.agents[i]
    }

    pub fn agents(&self) -> &[AgentPolicy] {
        &self.agents
    }

    pub fn memory_sizes(&self) -> Vec<usize> {
        self.agents.iter().map(AgentPolicy::memory_size).collect()
    }

    /// Uses a uniform initial agent state for every agent.
    pub fn with_uniform_initial_states(mut self) -> Self {
        for a in &mut self.agents {
            a.initial_state = vec![1.0 / a.memory_size as f64; a.memory_size];
        }
        self
    }

    /// Checks that the policy is defined on the model's spaces and horizon.
    pub fn check_against(&self, model: &DecPomdpModel) -> Result<(), PolicyError> {
        if self.agent_count() != model.agent_count() {
            return Err(PolicyError::Shape(format!(
                "policy has {} agents, model has {}",
                self.agent_count(),
                model.agent_count()
            )));
        }
        if self.horizon() != model.horizon() {
            return Err(PolicyError::Shape(format!(
                "policy horizon {} differs from model horizon {}",
                self.horizon(),
                model.horizon()
            )));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.observation_count != model.observation_counts()[i]
                || a.action_count != model.action_counts()[i]
            {
                return Err(PolicyError::Shape(format!(
                    "agent {i}: policy is over {} observations / {} actions, model has {} / {}",
                    a.observation_count,
                    a.action_count,
                    model.observation_counts()[i],
                    model.action_counts()[i]
                )));
            }
        }
        Ok(())
    }

    /// True when every row listed by `reachable(agent, t, row)` is a point mass.
    pub fn is_deterministic_where(&self, mut reachable: impl FnMut(usize, usize, usize) -> bool) -> bool {
        self.agents.iter().enumerate().all(|(i, a)| {
            let cols = a.column_count();
            a.rules.iter().enumerate().all(|(t, rule)| {
                rule.chunks(cols)
                    .enumerate()
                    .all(|(row, r)| !reachable(i, t, row) || r.contains(&1.0))
            })
        })
    }
}

/// Policy with every row an independent flat-Dirichlet draw.
///
/// Draw order is agent, step, row, column so identical `(dims, seed)` pairs
/// give bitwise-identical tables.
pub fn random_policy(model: &DecPomdpModel, memory_sizes: &[usize], seed: u64) -> JointPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    JointPolicy::from_fn(model, memory_sizes, |_, _, cols| {
        let mut row: Vec<f64> = (0..cols)
            .map(|_| {
                let x: f64 = Exp1.sample(&mut rng);
                x.max(f64::MIN_POSITIVE)
            })
            .collect();
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
        row
    })
}

/// Deterministic decision rule of one agent at one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicAgentSlice {
    /// Number of `(a, z)` columns.
    pub columns: usize,
    /// Chosen column for every `(y, z_-)` row.
    pub choices: Vec<usize>,
    /// Rows whose incumbent distribution is kept as is when mixing.
    pub frozen: Vec<bool>,
}

impl DeterministicAgentSlice {
    pub fn new(columns: usize, choices: Vec<usize>) -> Self {
        let frozen = vec![false; choices.len()];
        Self {
            columns,
            choices,
            frozen,
        }
    }

    pub fn to_table(&self) -> Vec<f64> {
        let mut table = vec![0.0; self.choices.len() * self.columns];
        for (row, &c) in self.choices.iter().enumerate() {
            table[row * self.columns + c] = 1.0;
        }
        table
    }
}

/// Conservative update `(1-α)·old + α·new`, row by row.
///
/// Frozen rows are copied unchanged. Mixed rows are renormalized; `α = 0`
/// returns `old` bit for bit.
pub fn mix_policies(
    old: &[f64],
    new: &DeterministicAgentSlice,
    alpha: f64,
) -> Result<Vec<f64>, PolicyError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(PolicyError::MixingRate(alpha));
    }
    let cols = new.columns;
    if old.len() != new.choices.len() * cols {
        return Err(PolicyError::Shape(format!(
            "decision rule has {} entries, deterministic slice covers {}",
            old.len(),
            new.choices.len() * cols
        )));
    }
    if alpha == 0.0 {
        return Ok(old.to_vec());
    }
    let mut out = old.to_vec();
    for (row, chunk) in out.chunks_mut(cols).enumerate() {
        if new.frozen[row] {
            continue;
        }
        for (c, p) in chunk.iter_mut().enumerate() {
            let target = if c == new.choices[row] { 1.0 } else { 0.0 };
            *p = (1.0 - alpha) * *p + alpha * target;
        }
        let total: f64 = chunk.iter().sum();
        if total != 1.0 {
            chunk.iter_mut().for_each(|p| *p /= total);
        }
    }
    Ok(out)
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

fn check_row(row: &[f64]) -> Result<(), f64> {
    let sum: f64 = row.iter().sum();
    if row.iter().all(|p| *p >= 0.0) && (sum - 1.0).abs() <= ROW_TOLERANCE {
        Ok(())
    } else {
        Err(sum)
    }
}

/// JSON document for a joint policy.
///
/// `tables[i][t][y][z_-]` is the row over `(a, z)` flattened `a·|Z^i| + z`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PolicyDocument {
    pub horizon: usize,
    pub agent_state_sizes: Vec<usize>,
    pub action_counts: Vec<usize>,
    pub observation_counts: Vec<usize>,
    pub tables: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
    pub phi: Vec<Vec<f64>>,
}

impl From<&JointPolicy> for PolicyDocument {
    fn from(policy: &JointPolicy) -> Self {
        let tables = policy
            .agents
            .iter()
            .map(|a| {
                let cols = a.column_count();
                a.rules
                    .iter()
                    .map(|rule| {
                        rule.chunks(cols * a.memory_size)
                            .map(|per_y| per_y.chunks(cols).map(<[f64]>::to_vec).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            horizon: policy.horizon(),
            agent_state_sizes: policy.memory_sizes(),
            action_counts: policy.agents.iter().map(|a| a.action_count).collect(),
            observation_counts: policy.agents.iter().map(|a| a.observation_count).collect(),
            tables,
            phi: policy.agents.iter().map(|a| a.initial_state.clone()).collect(),
        }
    }
}

impl TryFrom<PolicyDocument> for JointPolicy {
    type Error = PolicyError;

    fn try_from(doc: PolicyDocument) -> Result<Self, Self::Error> {
        let n = doc.agent_state_sizes.len();
        if [doc.action_counts.len(), doc.observation_counts.len(), doc.tables.len(), doc.phi.len()]
            .iter()
            .any(|&k| k != n)
        {
            return Err(PolicyError::Document("per-agent arrays differ in length".into()));
        }
        let agents = (0..n)
            .map(|i| {
                let (nz, na, ny) = (
                    doc.agent_state_sizes[i],
                    doc.action_counts[i],
                    doc.observation_counts[i],
                );
                let steps = &doc.tables[i];
                if steps.len() != doc.horizon {
                    return Err(PolicyError::Document(format!(
                        "agent {i} has {} decision rules for horizon {}",
                        steps.len(),
                        doc.horizon
                    )));
                }
                let mut rules = Vec::with_capacity(steps.len());
                for (t, per_y) in steps.iter().enumerate() {
                    let shape_ok = per_y.len() == ny
                        && per_y
                            .iter()
                            .all(|zs| zs.len() == nz && zs.iter().all(|r| r.len() == na * nz));
                    if !shape_ok {
                        return Err(PolicyError::Document(format!(
                            "agent {i}, t={}: table is not {ny}×{nz}×{}",
                            t + 1,
                            na * nz
                        )));
                    }
                    rules.push(per_y.iter().flatten().flatten().copied().collect());
                }
                Ok(AgentPolicy {
                    observation_count: ny,
                    memory_size: nz,
                    action_count: na,
                    rules,
                    initial_state: doc.phi[i].clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        JointPolicy::new(agents)
    }
}

impl JointPolicy {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PolicyDocument::from(self)).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        let doc: PolicyDocument =
            serde_json::from_str(text).map_err(|e| PolicyError::Document(e.to_string()))?;
        Self::try_from(doc)
    }
}

fn symbol(names: Option<&Vec<String>>, k: usize, prefix: &str) -> String {
    names
        .and_then(|n| n.get(k).cloned())
        .unwrap_or_else(|| format!("{prefix}{k}"))
}

/// Human-readable dump of the most probable `(action, next agent state)`
/// in every row; probabilities below 0.999 are annotated.
///
/// Reactive policies (every `|Z^i| = 1`) get one table per agent with one
/// row per step and one column per observation. Otherwise there is one table
/// per step with one row per observation and one column per previous agent
/// state.
pub fn dump_policy(policy: &JointPolicy, model: &DecPomdpModel) -> String {
    let names = model.names();
    let obs_name = |i: usize, y: usize| -> String {
        let base = model.base_observation_counts()[i];
        if y >= base {
            "null".to_string()
        } else {
            symbol(names.and_then(|n| n.observations.get(i)), y, "y")
        }
    };
    let cell = |a: &AgentPolicy, i: usize, t: usize, row: usize| -> String {
        let col = a.argmax(t, row);
        let p = a.rule(t)[row * a.column_count() + col];
        let action = symbol(names.and_then(|n| n.actions.get(i)), col / a.memory_size, "a");
        let mut text = if a.memory_size == 1 {
            action
        } else {
            format!("{action}→{}", col % a.memory_size)
        };
        if p < 0.999 {
            let _ = write!(text, " ({p:.3})");
        }
        text
    };
    let mut out = String::new();
    let reactive = policy.agents.iter().all(|a| a.memory_size == 1);
    if reactive {
        for (i, a) in policy.agents.iter().enumerate() {
            let _ = writeln!(out, "agent {}", i + 1);
            let header: Vec<String> = (0..a.observation_count).map(|y| obs_name(i, y)).collect();
            let _ = writeln!(out, "| t | {} |", header.join(" | "));
            let _ = writeln!(out, "|---|{}", "---|".repeat(header.len()));
            for t in 0..a.horizon() {
                let cells: Vec<String> = (0..a.observation_count).map(|y| cell(a, i, t, y)).collect();
                let _ = writeln!(out, "| {} | {} |", t + 1, cells.join(" | "));
            }
            out.push('\n');
        }
        return out;
    }
    for t in 0..policy.horizon() {
        let _ = writeln!(out, "t = {}", t + 1);
        for (i, a) in policy.agents.iter().enumerate() {
            let _ = writeln!(out, "agent {}", i + 1);
            let header: Vec<String> = (0..a.memory_size).map(|z| format!("z={z}")).collect();
            let _ = writeln!(out, "| obs | {} |", header.join(" | "));
            let _ = writeln!(out, "|---|{}", "---|".repeat(header.len()));
            for y in 0..a.observation_count {
                let cells: Vec<String> = (0..a.memory_size)
                    .map(|z| cell(a, i, t, y * a.memory_size + z))
                    .collect();
                let _ = writeln!(out, "| {} | {} |", obs_name(i, y), cells.join(" | "));
            }
        }
        out.push('\n');
    }
    out
}

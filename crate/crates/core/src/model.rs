//! Dec-POMDP model, joint-space indexing and initial-condition construction.
//!
//! Dynamics are stored factored as a transition kernel `T(s'|s,a)` laid out
//! `[s][a][s']` and an observation kernel `O(y'|a,s')` laid out `[a][s'][y']`,
//! so that `P(s',y'|s,a) = T(s'|s,a)·O(y'|a,s')`. Joint actions and joint
//! observations are flattened with [`JointIndexer`] (agent 0 most significant).

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Tolerance used when validating normalized kernels.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Mixed-radix map between per-agent component tuples and flat indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointIndexer {
    radices: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl JointIndexer {
    pub fn new(radices: &[usize]) -> Self {
        let mut strides = vec![1; radices.len()];
        let mut size = 1usize;
        for i in (0..radices.len()).rev() {
            strides[i] = size;
            size = size
                .checked_mul(radices[i])
                .expect("joint space size overflows usize");
        }
        Self {
            radices: radices.to_vec(),
            strides,
            size,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn encode(&self, parts: &[usize]) -> usize {
        debug_assert_eq!(parts.len(), self.radices.len());
        parts
            .iter()
            .zip(&self.strides)
            .map(|(p, s)| p * s)
            .sum()
    }

    #[inline]
    pub fn component(&self, flat: usize, agent: usize) -> usize {
        (flat / self.strides[agent]) % self.radices[agent]
    }

    pub fn decode(&self, flat: usize) -> Vec<usize> {
        (0..self.radices.len())
            .map(|i| self.component(flat, i))
            .collect()
    }

    /// Flat table of components, `table[flat * n + agent]`.
    pub fn component_table(&self) -> Vec<usize> {
        let n = self.radices.len();
        let mut table = Vec::with_capacity(self.size * n);
        for flat in 0..self.size {
            for i in 0..n {
                table.push(self.component(flat, i));
            }
        }
        table
    }
}

/// How the joint distribution of the first state and observation is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialObservation {
    /// Every agent observes a distinguished null symbol at the first step.
    #[default]
    DummyObservation,
    /// The first joint observation is uniform and independent of the state.
    UniformObservation,
}

impl InitialObservation {
    pub fn label(self) -> &'static str {
        match self {
            InitialObservation::DummyObservation => "dummy",
            InitialObservation::UniformObservation => "uniform",
        }
    }
}

impl std::str::FromStr for InitialObservation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dummy" | "dummy_observation" => Ok(Self::DummyObservation),
            "uniform" | "uniform_observation" => Ok(Self::UniformObservation),
            other => Err(format!("unknown initial observation mode `{other}`")),
        }
    }
}

/// Initial joint distribution over `(s, y)` plus the observation alphabet
/// sizes it is defined on.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub distribution: Vec<f64>,
    pub observation_counts: Vec<usize>,
}

/// Builds `ζ1(s, y)` from a start distribution over states.
///
/// In dummy mode each agent's alphabet gains one trailing null symbol and the
/// whole start mass sits on the all-null joint observation.
pub fn make_initial_distribution(
    start: &[f64],
    observation_counts: &[usize],
    mode: InitialObservation,
) -> InitialCondition {
    match mode {
        InitialObservation::DummyObservation => {
            let counts: Vec<usize> = observation_counts.iter().map(|c| c + 1).collect();
            let indexer = JointIndexer::new(&counts);
            let null = indexer.encode(observation_counts);
            let y = indexer.size();
            let mut distribution = vec![0.0; start.len() * y];
            for (s, &p) in start.iter().enumerate() {
                distribution[s * y + null] = p;
            }
            InitialCondition {
                distribution,
                observation_counts: counts,
            }
        }
        InitialObservation::UniformObservation => {
            let y: usize = observation_counts.iter().product();
            let scale: f64 = observation_counts.iter().map(|&c| 1.0 / c as f64).product();
            let mut distribution = Vec::with_capacity(start.len() * y);
            for &p in start {
                distribution.extend(std::iter::repeat_n(p * scale, y));
            }
            InitialCondition {
                distribution,
                observation_counts: observation_counts.to_vec(),
            }
        }
    }
}

/// Human-readable symbols attached to a model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelNames {
    pub states: Vec<String>,
    pub actions: Vec<Vec<String>>,
    pub observations: Vec<Vec<String>>,
}

/// Raw tables used to assemble a [`DecPomdpModel`].
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub action_counts: Vec<usize>,
    pub observation_counts: Vec<usize>,
    pub state_count: usize,
    /// `T(s'|s,a)`, laid out `[s][a][s']` with joint `a`.
    pub transition: Vec<f64>,
    /// `O(y'|a,s')`, laid out `[a][s'][y']` with joint `a` and `y'`.
    pub observation: Vec<f64>,
    /// `r(s,a)`, laid out `[s][a]`.
    pub reward: Vec<f64>,
    /// `ζ1(s,y)`, laid out `[s][y]`.
    pub initial: Vec<f64>,
    pub horizon: usize,
}

/// Finite-horizon Dec-POMDP with agent-factored action and observation spaces.
#[derive(Debug, Clone)]
pub struct DecPomdpModel {
    state_count: usize,
    actions: JointIndexer,
    observations: JointIndexer,
    transition: Vec<f64>,
    observation: Vec<f64>,
    reward: Vec<f64>,
    initial: Vec<f64>,
    horizon: usize,
    initial_mode: Option<InitialObservation>,
    names: Option<ModelNames>,
}

impl DecPomdpModel {
    pub fn new(parts: ModelParts) -> Result<Self, ModelError> {
        let ModelParts {
            action_counts,
            observation_counts,
            state_count,
            transition,
            observation,
            reward,
            initial,
            horizon,
        } = parts;
        if action_counts.is_empty() || action_counts.len() != observation_counts.len() {
            return Err(ModelError::Dimension(format!(
                "{} action alphabets for {} observation alphabets",
                action_counts.len(),
                observation_counts.len()
            )));
        }
        if state_count == 0
            || action_counts.contains(&0)
            || observation_counts.contains(&0)
        {
            return Err(ModelError::Dimension("empty state, action or observation space".into()));
        }
        if horizon == 0 {
            return Err(ModelError::Dimension("horizon must be positive".into()));
        }
        let actions = JointIndexer::new(&action_counts);
        let observations = JointIndexer::new(&observation_counts);
        let (s, a, y) = (state_count, actions.size(), observations.size());
        check_len("transition", &transition, s * a * s)?;
        check_len("observation", &observation, a * s * y)?;
        check_len("reward", &reward, s * a)?;
        check_len("initial", &initial, s * y)?;

        for (row, chunk) in transition.chunks(s).enumerate() {
            check_distribution(chunk).map_err(|sum| ModelError::NotNormalized {
                what: format!("transition row (s={}, a={})", row / a, row % a),
                sum,
            })?;
        }
        for (row, chunk) in observation.chunks(y).enumerate() {
            check_distribution(chunk).map_err(|sum| ModelError::NotNormalized {
                what: format!("observation row (a={}, s'={})", row / s, row % s),
                sum,
            })?;
        }
        check_distribution(&initial).map_err(|sum| ModelError::NotNormalized {
            what: "initial distribution".into(),
            sum,
        })?;
        if let Some(bad) = reward.iter().position(|r| !r.is_finite()) {
            return Err(ModelError::NonFiniteReward {
                state: bad / a,
                action: bad % a,
            });
        }
        Ok(Self {
            state_count,
            actions,
            observations,
            transition,
            observation,
            reward,
            initial,
            horizon,
            initial_mode: None,
            names: None,
        })
    }

    /// Assembles a model from base kernels and a start distribution over
    /// states, augmenting observation alphabets when `mode` requires it.
    #[allow(clippy::too_many_arguments)]
    pub fn from_kernels(
        action_counts: Vec<usize>,
        observation_counts: Vec<usize>,
        transition: Vec<f64>,
        observation: Vec<f64>,
        reward: Vec<f64>,
        start: &[f64],
        mode: InitialObservation,
        horizon: usize,
    ) -> Result<Self, ModelError> {
        let state_count = start.len();
        let joint_actions: usize = action_counts.iter().product();
        let base = JointIndexer::new(&observation_counts);
        let init = make_initial_distribution(start, &observation_counts, mode);
        let observation = match mode {
            InitialObservation::UniformObservation => observation,
            InitialObservation::DummyObservation => {
                check_len(
                    "observation",
                    &observation,
                    joint_actions * state_count * base.size(),
                )?;
                let augmented = JointIndexer::new(&init.observation_counts);
                let y = augmented.size();
                let mut out = vec![0.0; joint_actions * state_count * y];
                for (row, chunk) in observation.chunks(base.size()).enumerate() {
                    for (yb, &p) in chunk.iter().enumerate() {
                        out[row * y + augmented.encode(&base.decode(yb))] = p;
                    }
                }
                out
            }
        };
        let mut model = Self::new(ModelParts {
            action_counts,
            observation_counts: init.observation_counts,
            state_count,
            transition,
            observation,
            reward,
            initial: init.distribution,
            horizon,
        })?;
        model.initial_mode = Some(mode);
        Ok(model)
    }

    pub fn with_names(mut self, names: ModelNames) -> Self {
        self.names = Some(names);
        self
    }

    /// Same model with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Self {
        assert!(horizon > 0, "horizon must be positive");
        let mut model = self.clone();
        model.horizon = horizon;
        model
    }

    pub fn agent_count(&self) -> usize {
        self.actions.radices().len()
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn action_counts(&self) -> &[usize] {
        self.actions.radices()
    }

    pub fn observation_counts(&self) -> &[usize] {
        self.observations.radices()
    }

    pub fn joint_actions(&self) -> &JointIndexer {
        &self.actions
    }

    pub fn joint_observations(&self) -> &JointIndexer {
        &self.observations
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_mode(&self) -> Option<InitialObservation> {
        self.initial_mode
    }

    pub fn names(&self) -> Option<&ModelNames> {
        self.names.as_ref()
    }

    /// `T(·|s,a)` over next states.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.state_count;
        let start = (s * self.actions.size() + a) * n;
        &self.transition[start..start + n]
    }

    /// `O(·|a,s')` over joint observations.
    pub fn observation_row(&self, a: usize, next: usize) -> &[f64] {
        let y = self.observations.size();
        let start = (a * self.state_count + next) * y;
        &self.observation[start..start + y]
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn observation(&self) -> &[f64] {
        &self.observation
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.actions.size() + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// `ζ1(s,y)` laid out `[s][y]`.
    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// `P(s',y'|s,a)`.
    pub fn dynamics(&self, s: usize, a: usize, next: usize, y: usize) -> f64 {
        self.transition_row(s, a)[next] * self.observation_row(a, next)[y]
    }

    /// Marginal of `ζ1` over states.
    pub fn start_distribution(&self) -> Vec<f64> {
        self.initial
            .chunks(self.observations.size())
            .map(|row| row.iter().sum())
            .collect()
    }

    /// Observation alphabet sizes before any null-symbol augmentation.
    pub fn base_observation_counts(&self) -> Vec<usize> {
        match self.initial_mode {
            Some(InitialObservation::DummyObservation) => {
                self.observation_counts().iter().map(|c| c - 1).collect()
            }
            _ => self.observation_counts().to_vec(),
        }
    }
}

/// Single-stage two-player game with a shared payoff table
/// `payoffs[a1][a2]`.
pub fn matrix_game_model(payoffs: &[Vec<f64>]) -> Result<DecPomdpModel, ModelError> {
    let rows = payoffs.len();
    let cols = payoffs.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || payoffs.iter().any(|r| r.len() != cols) {
        return Err(ModelError::Dimension("payoff table must be a nonempty rectangle".into()));
    }
    let joint = rows * cols;
    let names = ModelNames {
        states: vec!["s".into()],
        actions: vec![
            (0..rows).map(|k| action_letter(k, 1)).collect(),
            (0..cols).map(|k| action_letter(k, 2)).collect(),
        ],
        observations: vec![vec!["o".into()], vec!["o".into()]],
    };
    Ok(DecPomdpModel::new(ModelParts {
        action_counts: vec![rows, cols],
        observation_counts: vec![1, 1],
        state_count: 1,
        transition: vec![1.0; joint],
        observation: vec![1.0; joint],
        reward: payoffs.iter().flatten().copied().collect(),
        initial: vec![1.0],
        horizon: 1,
    })?
    .with_names(names))
}

fn action_letter(k: usize, agent: usize) -> String {
    match u8::try_from(k) {
        Ok(k) if k < 26 => format!("{}{}", (b'a' + k) as char, agent),
        _ => format!("act{k}_{agent}"),
    }
}

fn check_len(what: &str, data: &[f64], expected: usize) -> Result<(), ModelError> {
    if data.len() == expected {
        Ok(())
    } else {
        Err(ModelError::Dimension(format!(
            "{what} table has {} entries, expected {expected}",
            data.len()
        )))
    }
}

fn check_distribution(row: &[f64]) -> Result<(), f64> {
    let sum: f64 = row.iter().sum();
    if row.iter().all(|p| *p >= 0.0 && p.is_finite())
        && (sum - 1.0).abs() <= NORMALIZATION_TOLERANCE
    {
        Ok(())
    } else {
        Err(sum)
    }
}

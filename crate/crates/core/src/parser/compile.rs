//! Wildcard expansion into dense kernels.

use crate::model::{DecPomdpModel, InitialObservation, JointIndexer, ModelNames};

use super::{
    DpomdpError, JointPattern, KernelValues, ParseDiagnostic, Pattern, RawDpomdpFile, ValueKind,
};

/// Rows closer to one than this are kept as written.
const EXACT_TOLERANCE: f64 = 1e-9;
/// Rows off by more than this are renormalized with a warning.
const QUIET_TOLERANCE: f64 = 1e-6;
/// Rows off by more than this are rejected.
const REJECT_TOLERANCE: f64 = 1e-4;

/// `R(a, s, ·, ·)` for one `(s, a)` pair.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardCell {
    /// Same value for every `(s', y')`.
    Const(f64),
    /// Laid out `[s'][y']`.
    Dense(Vec<f64>),
}

/// Fully expanded tables of a `.dpomdp` file, in reward convention.
#[derive(Debug, Clone, PartialEq)]
pub struct DpomdpTables {
    pub agent_names: Vec<String>,
    pub discount: f64,
    pub state_names: Vec<String>,
    pub action_names: Vec<Vec<String>>,
    pub observation_names: Vec<Vec<String>>,
    pub start: Vec<f64>,
    /// `T(s'|s,a)`, `[s][a][s']`.
    pub transition: Vec<f64>,
    /// `O(y'|a,s')`, `[a][s'][y']`.
    pub observation: Vec<f64>,
    /// `[s][a]`.
    pub reward: Vec<RewardCell>,
}

impl DpomdpTables {
    pub fn state_count(&self) -> usize {
        self.state_names.len()
    }

    pub fn joint_actions(&self) -> JointIndexer {
        JointIndexer::new(&self.action_names.iter().map(Vec::len).collect::<Vec<_>>())
    }

    pub fn joint_observations(&self) -> JointIndexer {
        JointIndexer::new(&self.observation_names.iter().map(Vec::len).collect::<Vec<_>>())
    }

    /// `r(s,a) = Σ_{s'} T(s'|s,a) Σ_{y'} O(y'|a,s') R(a,s,s',y')`.
    pub fn expected_reward(&self) -> Vec<f64> {
        let ns = self.state_count();
        let na = self.joint_actions().size();
        let ny = self.joint_observations().size();
        let mut out = Vec::with_capacity(ns * na);
        for s in 0..ns {
            for a in 0..na {
                out.push(match &self.reward[s * na + a] {
                    RewardCell::Const(v) => *v,
                    RewardCell::Dense(table) => {
                        let trow = &self.transition[(s * na + a) * ns..(s * na + a + 1) * ns];
                        let mut r = 0.0;
                        for (sp, &pt) in trow.iter().enumerate() {
                            if pt == 0.0 {
                                continue;
                            }
                            let orow = &self.observation[(a * ns + sp) * ny..(a * ns + sp + 1) * ny];
                            let inner: f64 = orow
                                .iter()
                                .zip(&table[sp * ny..(sp + 1) * ny])
                                .map(|(o, v)| o * v)
                                .sum();
                            r += pt * inner;
                        }
                        r
                    }
                });
            }
        }
        out
    }
}

/// A compiled model together with the tables it came from and any warnings.
#[derive(Debug, Clone)]
pub struct CompiledDpomdp {
    pub model: DecPomdpModel,
    pub tables: DpomdpTables,
    pub warnings: Vec<ParseDiagnostic>,
}

fn joint_matches(indexer: &JointIndexer, pattern: &JointPattern) -> Vec<usize> {
    if pattern.iter().all(|p| *p == Pattern::Any) {
        return (0..indexer.size()).collect();
    }
    (0..indexer.size())
        .filter(|&k| pattern.iter().enumerate().all(|(i, p)| p.matches(indexer.component(k, i))))
        .collect()
}

fn normalize_rows(
    data: &mut [f64],
    width: usize,
    what: impl Fn(usize) -> String,
    line_of: impl Fn(usize) -> usize,
    warnings: &mut Vec<ParseDiagnostic>,
) -> Result<(), ParseDiagnostic> {
    for (k, row) in data.chunks_mut(width).enumerate() {
        let sum: f64 = row.iter().sum();
        let dev = (sum - 1.0).abs();
        if dev <= EXACT_TOLERANCE {
            continue;
        }
        if dev > REJECT_TOLERANCE {
            return Err(ParseDiagnostic::error(
                line_of(k),
                format!("{} sums to {sum}", what(k)),
            ));
        }
        if dev > QUIET_TOLERANCE {
            warnings.push(ParseDiagnostic::warning(
                line_of(k),
                format!("{} sums to {sum}, renormalized", what(k)),
            ));
        }
        row.iter_mut().for_each(|p| *p /= sum);
    }
    Ok(())
}

/// Expands the entries of `raw` in file order into dense tables and builds
/// the model for the given horizon and first-observation convention.
pub fn compile_model(
    raw: &RawDpomdpFile,
    horizon: usize,
    mode: InitialObservation,
) -> Result<CompiledDpomdp, DpomdpError> {
    let mut warnings = raw.diagnostics.clone();
    let fail = |d: ParseDiagnostic, warnings: &[ParseDiagnostic]| {
        let mut diagnostics = warnings.to_vec();
        diagnostics.push(d);
        DpomdpError { diagnostics }
    };
    if horizon == 0 {
        return Err(fail(ParseDiagnostic::error(0, "horizon must be positive"), &warnings));
    }
    let ns = raw.state_count();
    let acts = JointIndexer::new(&raw.action_counts());
    let obs = JointIndexer::new(&raw.observation_counts());
    let (na, ny) = (acts.size(), obs.size());

    // Last line to touch each row, for diagnostics.
    let mut t_line = vec![0; ns * na];
    let mut transition = vec![0.0; ns * na * ns];
    for e in &raw.transition_entries {
        for a in joint_matches(&acts, &e.action) {
            let froms: Vec<usize> = e.from.unwrap_or(Pattern::Any).indices(ns).collect();
            for s in froms {
                t_line[s * na + a] = e.line;
                let row = &mut transition[(s * na + a) * ns..(s * na + a + 1) * ns];
                match (&e.values, e.to) {
                    (KernelValues::Value(p), Some(to)) => to.indices(ns).for_each(|sp| row[sp] = *p),
                    (KernelValues::Row(v), None) if e.from.is_some() => row.copy_from_slice(v),
                    (KernelValues::Matrix(v), None) => row.copy_from_slice(&v[s * ns..(s + 1) * ns]),
                    (KernelValues::Uniform, None) => row.fill(1.0 / ns as f64),
                    (KernelValues::Identity, None) => {
                        row.fill(0.0);
                        row[s] = 1.0;
                    }
                    _ => unreachable!("entry shapes are fixed by the parser"),
                }
            }
        }
    }
    let mut o_line = vec![0; na * ns];
    let mut observation = vec![0.0; na * ns * ny];
    for e in &raw.observation_entries {
        let ys: Option<Vec<usize>> = e.observation.as_ref().map(|p| joint_matches(&obs, p));
        for a in joint_matches(&acts, &e.action) {
            for sp in e.next_state.unwrap_or(Pattern::Any).indices(ns) {
                o_line[a * ns + sp] = e.line;
                let row = &mut observation[(a * ns + sp) * ny..(a * ns + sp + 1) * ny];
                match (&e.values, &ys) {
                    (KernelValues::Value(p), Some(ys)) => ys.iter().for_each(|&y| row[y] = *p),
                    (KernelValues::Row(v), None) if e.next_state.is_some() => row.copy_from_slice(v),
                    (KernelValues::Matrix(v), None) => row.copy_from_slice(&v[sp * ny..(sp + 1) * ny]),
                    (KernelValues::Uniform, None) => row.fill(1.0 / ny as f64),
                    _ => unreachable!("entry shapes are fixed by the parser"),
                }
            }
        }
    }
    let sign = match raw.value_kind {
        ValueKind::Reward => 1.0,
        ValueKind::Cost => -1.0,
    };
    let mut reward = vec![RewardCell::Const(0.0); ns * na];
    for e in &raw.reward_entries {
        let v = sign * e.value;
        let everywhere = e.next_state == Pattern::Any && e.observation.iter().all(|p| *p == Pattern::Any);
        let ys = joint_matches(&obs, &e.observation);
        for a in joint_matches(&acts, &e.action) {
            for s in e.state.indices(ns) {
                let cell = &mut reward[s * na + a];
                if everywhere {
                    *cell = RewardCell::Const(v);
                    continue;
                }
                if let RewardCell::Const(c) = *cell {
                    *cell = RewardCell::Dense(vec![c; ns * ny]);
                }
                let RewardCell::Dense(table) = cell else { unreachable!() };
                for sp in e.next_state.indices(ns) {
                    for &y in &ys {
                        table[sp * ny + y] = v;
                    }
                }
            }
        }
    }

    let describe_t = |k: usize| format!("transition row (s={}, a={})", raw.state_names[k / na], k % na);
    normalize_rows(&mut transition, ns, describe_t, |k| t_line[k], &mut warnings)
        .map_err(|d| fail(d, &warnings))?;
    let describe_o = |k: usize| format!("observation row (a={}, s'={})", k / ns, raw.state_names[k % ns]);
    normalize_rows(&mut observation, ny, describe_o, |k| o_line[k], &mut warnings)
        .map_err(|d| fail(d, &warnings))?;
    let mut start = raw.start_distribution.clone();
    let total: f64 = start.iter().sum();
    if (total - 1.0).abs() > EXACT_TOLERANCE {
        start.iter_mut().for_each(|p| *p /= total);
    }
    if raw.discount != 1.0 {
        warnings.push(ParseDiagnostic::warning(
            0,
            format!("discount {} ignored, the objective is the undiscounted total", raw.discount),
        ));
    }

    let tables = DpomdpTables {
        agent_names: raw.agent_names.clone(),
        discount: raw.discount,
        state_names: raw.state_names.clone(),
        action_names: raw.action_names.clone(),
        observation_names: raw.observation_names.clone(),
        start,
        transition,
        observation,
        reward,
    };
    let model = DecPomdpModel::from_kernels(
        raw.action_counts(),
        raw.observation_counts(),
        tables.transition.clone(),
        tables.observation.clone(),
        tables.expected_reward(),
        &tables.start,
        mode,
        horizon,
    )
    .map_err(|e| fail(ParseDiagnostic::error(0, e.to_string()), &warnings))?
    .with_names(ModelNames {
        states: tables.state_names.clone(),
        actions: tables.action_names.clone(),
        observations: tables.observation_names.clone(),
    });
    Ok(CompiledDpomdp {
        model,
        tables,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::super::parse_dpomdp;
    use super::*;

    const HEADER: &str = "agents: 2\nstates: a b\nstart:\n0.5 0.5\nactions:\nx y\nx y\nobservations:\no p\no p\n";

    fn compile(body: &str) -> Result<CompiledDpomdp, DpomdpError> {
        compile_model(
            &parse_dpomdp(&format!("{HEADER}{body}")).unwrap(),
            1,
            InitialObservation::UniformObservation,
        )
    }

    #[test]
    fn identity_keyword() {
        let c = compile("T: * :\nidentity\nO: * :\nuniform\n").unwrap();
        for a in 0..4 {
            assert_eq!(c.model.transition_row(0, a), &[1.0, 0.0]);
            assert_eq!(c.model.transition_row(1, a), &[0.0, 1.0]);
        }
    }

    #[test]
    fn cost_values_are_negated() {
        let mut text = HEADER.replace("agents: 2\n", "agents: 2\nvalues: cost\n");
        text.push_str("T: * :\nuniform\nO: * :\nuniform\nR: * : * : * : * : 5\n");
        let c = compile_model(&parse_dpomdp(&text).unwrap(), 1, InitialObservation::UniformObservation)
            .unwrap();
        assert_eq!(c.model.reward(0, 0), -5.0);
    }

    #[test]
    fn last_write_wins() {
        let c = compile("T: * :\nuniform\nT: x x : a :\n0.25 0.75\nT: * :\nidentity\nT: x x : a : b : 1\nT: x x : a : a : 0\nO: * :\nuniform\n")
            .unwrap();
        assert_eq!(c.model.transition_row(0, 0), &[0.0, 1.0]);
        assert_eq!(c.model.transition_row(0, 1), &[1.0, 0.0]);
    }

    #[test]
    fn near_rows_renormalized_far_rows_rejected() {
        let c = compile("T: * :\nuniform\nT: x x : a :\n0.5 0.50005\nO: * :\nuniform\n").unwrap();
        assert!(c.warnings.iter().any(|w| w.message.contains("renormalized")));
        let row = c.model.transition_row(0, 0);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let err = compile("T: * :\nuniform\nT: x x : a :\n0.5 0.6\nO: * :\nuniform\n").unwrap_err();
        assert_eq!(err.first_error().unwrap().line, 13);
    }

    #[test]
    fn discount_warning() {
        let text = format!("discount: 0.9\n{HEADER}T: * :\nuniform\nO: * :\nuniform\n");
        let c = compile_model(&parse_dpomdp(&text).unwrap(), 1, InitialObservation::UniformObservation)
            .unwrap();
        assert!(c.warnings.iter().any(|w| w.message.contains("discount")));
    }
}

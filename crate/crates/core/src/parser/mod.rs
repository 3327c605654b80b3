//! Reader for the multi-agent `.dpomdp` text format.
//!
//! ```text
//! agents: 2
//! discount: 1
//! values: reward
//! states: tiger-left tiger-right
//! start:
//! 0.5 0.5
//! actions:
//! listen open-left open-right
//! listen open-left open-right
//! observations:
//! hear-left hear-right
//! hear-left hear-right
//! T: * :
//! uniform
//! O: listen listen : tiger-left : hear-left hear-left : 0.7225
//! R: listen listen : * : * : * * : -2
//! ```
//!
//! Parsing is a single pass in file order. [`parse_dpomdp`] tokenizes and
//! resolves names; [`compile_model`] expands wildcards into dense tables.

mod compile;
mod write;

use std::fmt;
use std::path::Path;

use crate::model::{DecPomdpModel, InitialObservation, JointIndexer};

pub use compile::{compile_model, CompiledDpomdp, DpomdpTables, RewardCell};
pub use write::write_dpomdp;

const START_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDiagnostic {
    /// 1-based; 0 when the diagnostic is not tied to a line.
    pub line: usize,
    pub severity: Severity,
    pub message: String,
}

impl ParseDiagnostic {
    fn error(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            severity: Severity::Error,
            message: message.into(),
        }
    }

    fn warning(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            severity: Severity::Warning,
            message: message.into(),
        }
    }

    /// `file:line: severity: message`.
    pub fn render(&self, file: &str) -> String {
        format!("{file}:{}: {}: {}", self.line, self.severity, self.message)
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}: {}", self.line, self.severity, self.message)
    }
}

/// Parsing or compilation stopped at an error; `diagnostics` ends with it.
#[derive(Debug, Clone, PartialEq)]
pub struct DpomdpError {
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl DpomdpError {
    fn single(d: ParseDiagnostic) -> Self {
        Self { diagnostics: vec![d] }
    }

    pub fn first_error(&self) -> Option<&ParseDiagnostic> {
        self.diagnostics.iter().find(|d| d.severity == Severity::Error)
    }

    pub fn render(&self, file: &str) -> String {
        self.diagnostics
            .iter()
            .map(|d| d.render(file))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl fmt::Display for DpomdpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.first_error() {
            Some(d) => write!(f, "{d}"),
            None => f.write_str("invalid .dpomdp input"),
        }
    }
}

impl std::error::Error for DpomdpError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueKind {
    #[default]
    Reward,
    Cost,
}

/// One pattern slot: a wildcard or a resolved index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    Any,
    Is(usize),
}

impl Pattern {
    pub fn matches(self, k: usize) -> bool {
        match self {
            Pattern::Any => true,
            Pattern::Is(j) => j == k,
        }
    }

    pub fn indices(self, count: usize) -> impl Iterator<Item = usize> {
        let (lo, hi) = match self {
            Pattern::Any => (0, count),
            Pattern::Is(j) => (j, j + 1),
        };
        lo..hi
    }
}

/// Per-agent patterns for a joint action or joint observation.
pub type JointPattern = Vec<Pattern>;

/// Data part of a `T:` or `O:` entry.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelValues {
    Value(f64),
    Row(Vec<f64>),
    Matrix(Vec<f64>),
    Uniform,
    Identity,
}

/// `T: a : s : s' : p`, `T: a : s :` + row, or `T: a :` + matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEntry {
    pub line: usize,
    pub action: JointPattern,
    pub from: Option<Pattern>,
    pub to: Option<Pattern>,
    pub values: KernelValues,
}

/// `O: a : s' : o : p`, `O: a : s' :` + row, or `O: a :` + matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationEntry {
    pub line: usize,
    pub action: JointPattern,
    pub next_state: Option<Pattern>,
    pub observation: Option<JointPattern>,
    pub values: KernelValues,
}

/// `R: a : s : s' : o : v`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardEntry {
    pub line: usize,
    pub action: JointPattern,
    pub state: Pattern,
    pub next_state: Pattern,
    pub observation: JointPattern,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawDpomdpFile {
    pub agent_count: usize,
    pub agent_names: Vec<String>,
    pub discount: f64,
    pub value_kind: ValueKind,
    pub state_names: Vec<String>,
    pub action_names: Vec<Vec<String>>,
    pub observation_names: Vec<Vec<String>>,
    pub start_distribution: Vec<f64>,
    pub transition_entries: Vec<TransitionEntry>,
    pub observation_entries: Vec<ObservationEntry>,
    pub reward_entries: Vec<RewardEntry>,
    /// Warnings raised while parsing.
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl RawDpomdpFile {
    pub fn state_count(&self) -> usize {
        self.state_names.len()
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.action_names.iter().map(Vec::len).collect()
    }

    pub fn observation_counts(&self) -> Vec<usize> {
        self.observation_names.iter().map(Vec::len).collect()
    }
}

struct Line<'a> {
    number: usize,
    text: &'a str,
}

fn logical_lines(text: &str) -> Vec<Line<'_>> {
    text.lines()
        .enumerate()
        .filter_map(|(k, raw)| {
            let text = raw.split('#').next().unwrap_or("").trim();
            (!text.is_empty()).then_some(Line { number: k + 1, text })
        })
        .collect()
}

const PREAMBLE: [&str; 7] = [
    "agents",
    "discount",
    "values",
    "states",
    "start",
    "actions",
    "observations",
];

struct Parser<'a> {
    lines: Vec<Line<'a>>,
    pos: usize,
    raw: RawDpomdpFile,
    seen: Vec<&'static str>,
}

type Step<T> = Result<T, ParseDiagnostic>;

fn is_keyword_line(text: &str) -> bool {
    text.contains(':')
}

fn generated_names(count: usize) -> Vec<String> {
    (0..count).map(|k| k.to_string()).collect()
}

fn parse_number(token: &str, line: usize) -> Step<f64> {
    token
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ParseDiagnostic::error(line, format!("malformed number `{token}`")))
}

fn parse_probability(token: &str, line: usize) -> Step<f64> {
    match token.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(ParseDiagnostic::error(line, format!("malformed probability `{token}`"))),
    }
}

/// Names from a declaration: a single positive integer means that many
/// anonymous symbols.
fn declare_names(tokens: &[&str], what: &str, line: usize) -> Step<Vec<String>> {
    if let [single] = tokens {
        if let Ok(n) = single.parse::<usize>() {
            if n == 0 {
                return Err(ParseDiagnostic::error(line, format!("{what} count must be positive")));
            }
            return Ok(generated_names(n));
        }
    }
    if tokens.is_empty() {
        return Err(ParseDiagnostic::error(line, format!("empty {what} list")));
    }
    let names: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
    for (k, n) in names.iter().enumerate() {
        if names[..k].contains(n) {
            return Err(ParseDiagnostic::error(line, format!("duplicate {what} name `{n}`")));
        }
    }
    Ok(names)
}

fn resolve(token: &str, names: &[String], what: &str, line: usize) -> Step<Pattern> {
    if token == "*" {
        return Ok(Pattern::Any);
    }
    if let Some(k) = names.iter().position(|n| n == token) {
        return Ok(Pattern::Is(k));
    }
    match token.parse::<usize>() {
        Ok(k) if k < names.len() => Ok(Pattern::Is(k)),
        _ => Err(ParseDiagnostic::error(line, format!("undeclared {what} `{token}`"))),
    }
}

/// A joint pattern is one token per agent, a single `*`, or a single joint
/// index.
fn resolve_joint(segment: &str, names: &[Vec<String>], what: &str, line: usize) -> Step<JointPattern> {
    let tokens: Vec<&str> = segment.split_whitespace().collect();
    let n = names.len();
    if tokens.len() == n {
        return tokens
            .iter()
            .zip(names)
            .map(|(t, ns)| resolve(t, ns, what, line))
            .collect();
    }
    if let [single] = tokens.as_slice() {
        if *single == "*" {
            return Ok(vec![Pattern::Any; n]);
        }
        let counts: Vec<usize> = names.iter().map(Vec::len).collect();
        let indexer = JointIndexer::new(&counts);
        if let Ok(k) = single.parse::<usize>() {
            if k < indexer.size() {
                return Ok(indexer.decode(k).into_iter().map(Pattern::Is).collect());
            }
        }
        return Err(ParseDiagnostic::error(line, format!("undeclared joint {what} `{single}`")));
    }
    Err(ParseDiagnostic::error(
        line,
        format!("joint {what} needs {n} components, found {}", tokens.len()),
    ))
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: logical_lines(text),
            pos: 0,
            raw: RawDpomdpFile {
                discount: 1.0,
                ..RawDpomdpFile::default()
            },
            seen: Vec::new(),
        }
    }

    /// Tokens of the data lines following the current keyword line.
    fn take_data_lines(&mut self) -> Vec<(usize, Vec<&'a str>)> {
        let mut out = Vec::new();
        while let Some(line) = self.lines.get(self.pos) {
            if is_keyword_line(line.text) {
                break;
            }
            out.push((line.number, line.text.split_whitespace().collect()));
            self.pos += 1;
        }
        out
    }

    fn require(&self, key: &str, line: usize) -> Step<()> {
        if self.seen.contains(&key) {
            Ok(())
        } else {
            Err(ParseDiagnostic::error(line, format!("entry before `{key}:` declaration")))
        }
    }

    fn run(mut self) -> Result<RawDpomdpFile, DpomdpError> {
        while self.pos < self.lines.len() {
            let line = &self.lines[self.pos];
            let (number, text) = (line.number, line.text);
            self.pos += 1;
            let fail = |d: ParseDiagnostic, raw: &RawDpomdpFile| {
                let mut diagnostics = raw.diagnostics.clone();
                diagnostics.push(d);
                DpomdpError { diagnostics }
            };
            let Some((key, rest)) = text.split_once(':') else {
                return Err(fail(
                    ParseDiagnostic::error(number, format!("unexpected data line `{text}`")),
                    &self.raw,
                ));
            };
            let key = key.trim();
            if let Err(d) = self.dispatch(key, rest, number) {
                return Err(fail(d, &self.raw));
            }
        }
        self.finish()
    }

    fn finish(mut self) -> Result<RawDpomdpFile, DpomdpError> {
        for key in ["agents", "states", "actions", "observations"] {
            if !self.seen.contains(&key) {
                let mut diagnostics = self.raw.diagnostics.clone();
                diagnostics.push(ParseDiagnostic::error(0, format!("missing `{key}:` declaration")));
                return Err(DpomdpError { diagnostics });
            }
        }
        if !self.seen.contains(&"start") {
            let n = self.raw.state_count();
            self.raw.start_distribution = vec![1.0 / n as f64; n];
            self.raw
                .diagnostics
                .push(ParseDiagnostic::warning(0, "no `start:` given, using uniform"));
        }
        Ok(self.raw)
    }

    fn dispatch(&mut self, key: &str, rest: &'a str, line: usize) -> Step<()> {
        if let Some(&k) = PREAMBLE.iter().find(|k| **k == key) {
            if self.seen.contains(&k) {
                return Err(ParseDiagnostic::error(line, format!("duplicate preamble key `{k}`")));
            }
            self.seen.push(k);
            return self.preamble(k, rest, line);
        }
        match key {
            "T" => self.transition(rest, line),
            "O" => self.observation(rest, line),
            "R" => self.reward(rest, line),
            other => Err(ParseDiagnostic::error(line, format!("unknown keyword `{other}`"))),
        }
    }

    fn preamble(&mut self, key: &str, rest: &'a str, line: usize) -> Step<()> {
        let inline: Vec<&str> = rest.split_whitespace().collect();
        match key {
            "agents" => {
                let names = declare_names(&inline, "agent", line)?;
                self.raw.agent_count = names.len();
                self.raw.agent_names = names;
            }
            "discount" => {
                let [token] = inline.as_slice() else {
                    return Err(ParseDiagnostic::error(line, "discount takes one value"));
                };
                let d = parse_number(token, line)?;
                if !(0.0..=1.0).contains(&d) {
                    return Err(ParseDiagnostic::error(line, format!("discount {d} outside [0, 1]")));
                }
                self.raw.discount = d;
            }
            "values" => {
                self.raw.value_kind = match inline.as_slice() {
                    ["reward"] => ValueKind::Reward,
                    ["cost"] => ValueKind::Cost,
                    _ => {
                        return Err(ParseDiagnostic::error(
                            line,
                            format!("values must be `reward` or `cost`, found `{}`", rest.trim()),
                        ))
                    }
                };
            }
            "states" => {
                let tokens = if inline.is_empty() {
                    self.take_data_lines().into_iter().flat_map(|(_, t)| t).collect()
                } else {
                    inline
                };
                self.raw.state_names = declare_names(&tokens, "state", line)?;
            }
            "start" => {
                self.require("states", line)?;
                let mut tokens: Vec<(usize, &str)> = inline.iter().map(|t| (line, *t)).collect();
                for (n, ts) in self.take_data_lines() {
                    tokens.extend(ts.into_iter().map(|t| (n, t)));
                }
                self.raw.start_distribution = self.start(&tokens, line)?;
            }
            "actions" | "observations" => {
                self.require("agents", line)?;
                let n = self.raw.agent_count;
                let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
                if !inline.is_empty() {
                    rows.push((line, inline));
                }
                while rows.len() < n {
                    match self.lines.get(self.pos) {
                        Some(l) if !is_keyword_line(l.text) => {
                            rows.push((l.number, l.text.split_whitespace().collect()));
                            self.pos += 1;
                        }
                        _ => {
                            return Err(ParseDiagnostic::error(
                                line,
                                format!("`{key}:` needs one line per agent ({n})"),
                            ))
                        }
                    }
                }
                if rows.len() > n {
                    return Err(ParseDiagnostic::error(line, format!("`{key}:` has more lines than agents")));
                }
                let what = if key == "actions" { "action" } else { "observation" };
                let names = rows
                    .iter()
                    .map(|(n, ts)| declare_names(ts, what, *n))
                    .collect::<Step<Vec<_>>>()?;
                if key == "actions" {
                    self.raw.action_names = names;
                } else {
                    self.raw.observation_names = names;
                }
            }
            _ => unreachable!("preamble keys are fixed"),
        }
        Ok(())
    }

    fn start(&self, tokens: &[(usize, &str)], line: usize) -> Step<Vec<f64>> {
        let n = self.raw.state_count();
        match tokens {
            [(_, "uniform")] => return Ok(vec![1.0 / n as f64; n]),
            [(l, name)] if name.parse::<f64>().is_err() => {
                let Pattern::Is(k) = resolve(name, &self.raw.state_names, "state", *l)? else {
                    return Err(ParseDiagnostic::error(*l, "start state cannot be `*`"));
                };
                let mut out = vec![0.0; n];
                out[k] = 1.0;
                return Ok(out);
            }
            _ => {}
        }
        if tokens.len() != n {
            return Err(ParseDiagnostic::error(
                line,
                format!("start distribution has {} entries for {n} states", tokens.len()),
            ));
        }
        let probs = tokens
            .iter()
            .map(|(l, t)| parse_probability(t, *l))
            .collect::<Step<Vec<f64>>>()?;
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > START_TOLERANCE {
            let shown = format!("{:.6}", sum);
            let shown = shown.trim_end_matches('0').trim_end_matches('.');
            return Err(ParseDiagnostic::error(line, format!("start distribution sums to {shown}")));
        }
        Ok(probs)
    }

    /// Splits `rest` into pattern segments and the trailing data tokens,
    /// pulling further data from following lines.
    fn entry_parts(&mut self, rest: &'a str, line: usize) -> (Vec<&'a str>, Vec<(usize, &'a str)>) {
        let mut segments: Vec<&str> = rest.split(':').collect();
        let tail = segments.pop().unwrap_or("");
        let mut data: Vec<(usize, &str)> = tail.split_whitespace().map(|t| (line, t)).collect();
        for (n, ts) in self.take_data_lines() {
            data.extend(ts.into_iter().map(|t| (n, t)));
        }
        (segments.into_iter().map(str::trim).collect(), data)
    }

    fn kernel_values(
        &self,
        data: &[(usize, &str)],
        expected: usize,
        allow_identity: bool,
        line: usize,
    ) -> Step<KernelValues> {
        match data {
            [(_, "uniform")] => return Ok(KernelValues::Uniform),
            [(l, "identity")] => {
                return if allow_identity {
                    Ok(KernelValues::Identity)
                } else {
                    Err(ParseDiagnostic::error(*l, "`identity` only applies to a square matrix"))
                }
            }
            _ => {}
        }
        if data.len() != expected {
            return Err(ParseDiagnostic::error(
                line,
                format!("expected {expected} probabilities, found {}", data.len()),
            ));
        }
        let values = data
            .iter()
            .map(|(l, t)| parse_probability(t, *l))
            .collect::<Step<Vec<f64>>>()?;
        Ok(if expected == 1 {
            KernelValues::Value(values[0])
        } else {
            KernelValues::Row(values)
        })
    }

    fn transition(&mut self, rest: &'a str, line: usize) -> Step<()> {
        self.require("states", line)?;
        self.require("actions", line)?;
        let (segments, data) = self.entry_parts(rest, line);
        let ns = self.raw.state_count();
        let states = &self.raw.state_names;
        let action = resolve_joint(segments[0], &self.raw.action_names, "action", line)?;
        let (from, to, values) = match segments.len() {
            3 => {
                let from = resolve(segments[1], states, "state", line)?;
                let to = resolve(segments[2], states, "state", line)?;
                let [(l, t)] = data.as_slice() else {
                    return Err(ParseDiagnostic::error(line, "expected one probability"));
                };
                (Some(from), Some(to), KernelValues::Value(parse_probability(t, *l)?))
            }
            2 => {
                let from = resolve(segments[1], states, "state", line)?;
                let values = match self.kernel_values(&data, ns, false, line)? {
                    KernelValues::Value(v) => KernelValues::Row(vec![v]),
                    other => other,
                };
                (Some(from), None, values)
            }
            1 => {
                let values = match self.kernel_values(&data, ns * ns, true, line)? {
                    KernelValues::Value(v) => KernelValues::Matrix(vec![v]),
                    KernelValues::Row(v) => KernelValues::Matrix(v),
                    other => other,
                };
                (None, None, values)
            }
            _ => return Err(ParseDiagnostic::error(line, "malformed `T:` entry")),
        };
        self.raw.transition_entries.push(TransitionEntry {
            line,
            action,
            from,
            to,
            values,
        });
        Ok(())
    }

    fn observation(&mut self, rest: &'a str, line: usize) -> Step<()> {
        self.require("states", line)?;
        self.require("actions", line)?;
        self.require("observations", line)?;
        let (segments, data) = self.entry_parts(rest, line);
        let ns = self.raw.state_count();
        let ny: usize = self.raw.observation_counts().iter().product();
        let action = resolve_joint(segments[0], &self.raw.action_names, "action", line)?;
        let (next_state, observation, values) = match segments.len() {
            3 => {
                let next = resolve(segments[1], &self.raw.state_names, "state", line)?;
                let obs = resolve_joint(segments[2], &self.raw.observation_names, "observation", line)?;
                let [(l, t)] = data.as_slice() else {
                    return Err(ParseDiagnostic::error(line, "expected one probability"));
                };
                (Some(next), Some(obs), KernelValues::Value(parse_probability(t, *l)?))
            }
            2 => {
                let next = resolve(segments[1], &self.raw.state_names, "state", line)?;
                let values = match self.kernel_values(&data, ny, false, line)? {
                    KernelValues::Value(v) => KernelValues::Row(vec![v]),
                    other => other,
                };
                (Some(next), None, values)
            }
            1 => {
                let values = match self.kernel_values(&data, ns * ny, false, line)? {
                    KernelValues::Value(v) => KernelValues::Matrix(vec![v]),
                    KernelValues::Row(v) => KernelValues::Matrix(v),
                    other => other,
                };
                (None, None, values)
            }
            _ => return Err(ParseDiagnostic::error(line, "malformed `O:` entry")),
        };
        self.raw.observation_entries.push(ObservationEntry {
            line,
            action,
            next_state,
            observation,
            values,
        });
        Ok(())
    }

    fn reward(&mut self, rest: &'a str, line: usize) -> Step<()> {
        self.require("states", line)?;
        self.require("actions", line)?;
        self.require("observations", line)?;
        let (segments, data) = self.entry_parts(rest, line);
        if segments.len() != 4 {
            return Err(ParseDiagnostic::error(
                line,
                "`R:` entries must have the form `R: a : s : s' : o : value`",
            ));
        }
        let states = &self.raw.state_names;
        let action = resolve_joint(segments[0], &self.raw.action_names, "action", line)?;
        let state = resolve(segments[1], states, "state", line)?;
        let next_state = resolve(segments[2], states, "state", line)?;
        let observation = resolve_joint(segments[3], &self.raw.observation_names, "observation", line)?;
        let [(l, t)] = data.as_slice() else {
            return Err(ParseDiagnostic::error(line, "expected one reward value"));
        };
        let value = parse_number(t, *l)?;
        self.raw.reward_entries.push(RewardEntry {
            line,
            action,
            state,
            next_state,
            observation,
            value,
        });
        Ok(())
    }
}

/// Tokenizes a `.dpomdp` document and resolves every name to an index.
pub fn parse_dpomdp(text: &str) -> Result<RawDpomdpFile, DpomdpError> {
    Parser::new(text).run()
}

/// Reads, parses and compiles a `.dpomdp` file.
pub fn load_dpomdp(
    path: &Path,
    horizon: usize,
    mode: InitialObservation,
) -> Result<CompiledDpomdp, DpomdpError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        DpomdpError::single(ParseDiagnostic::error(0, format!("cannot read file: {e}")))
    })?;
    let raw = parse_dpomdp(&text)?;
    compile_model(&raw, horizon, mode)
}

/// Convenience wrapper returning only the model.
pub fn model_from_str(text: &str, horizon: usize, mode: InitialObservation) -> Result<DecPomdpModel, DpomdpError> {
    Ok(compile_model(&parse_dpomdp(text)?, horizon, mode)?.model)
}

//! Quantitative event-tree analysis.
//!
//! A tree is an initiating event with frequency `λ`, an ordered list of
//! header events with success probabilities `P_i`, and a table mapping each
//! realizable outcome vector to a consequence label. Sequence frequencies
//! are `λ · ∏_{success} P_i · ∏_{failure} (1 − P_i)`; headers skipped by a
//! prune rule contribute a factor of 1.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::ExecMode;

/// Largest tree the enumerator will expand (2^20 sequences).
pub const MAX_HEADERS: usize = 20;
/// Largest tree that may use an explicit vector → label table.
pub const MAX_TABLE_HEADERS: usize = 12;
/// Relative tolerance of the normalization identity.
pub const NORMALIZATION_RTOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("outcome vector has {outcomes} entries but {probs} probabilities were given")]
    LengthMismatch { outcomes: usize, probs: usize },
    #[error("unknown header id {0}")]
    UnknownHeader(usize),
    #[error("inconsistent prune rule: {0}")]
    InconsistentPrune(String),
    #[error("outcome vector {0} has no consequence")]
    Uncovered(String),
    #[error("outcome vector {0} maps to more than one consequence")]
    Ambiguous(String),
    #[error("tree has {0} headers, more than the supported {MAX_HEADERS}")]
    TooManyHeaders(usize),
    #[error("invalid tree: {0}")]
    Invalid(String),
    #[error("reading tree file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing tree file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Result of one header query along a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "S")]
    Success,
    #[serde(rename = "F")]
    Failure,
    #[serde(rename = "-")]
    NotQueried,
}

impl Branch {
    pub fn symbol(self) -> char {
        match self {
            Branch::Success => 'S',
            Branch::Failure => 'F',
            Branch::NotQueried => '-',
        }
    }
}

/// Render an outcome vector compactly, e.g. `SF-`.
pub fn outcome_string(outcomes: &[Branch]) -> String {
    if outcomes.is_empty() {
        return "(empty)".to_string();
    }
    outcomes.iter().map(|b| b.symbol()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitiatingEvent {
    pub name: String,
    #[serde(default)]
    pub acronym: String,
    #[serde(default)]
    pub description: String,
    /// Events per unit time.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderEvent {
    /// 1-based position in the tree.
    pub id: usize,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub success_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsequenceRule {
    pub outcomes: Vec<Branch>,
    pub label: String,
}

/// After header `after_failure_of` fails, the headers in `skip` are not queried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneRule {
    pub after_failure_of: usize,
    pub skip: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTree {
    pub initiating_event: InitiatingEvent,
    #[serde(default)]
    pub headers: Vec<HeaderEvent>,
    #[serde(default)]
    pub consequences: Vec<ConsequenceRule>,
    /// Label for realizable vectors missing from `consequences`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_consequence: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prune_rules: Vec<PruneRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    pub outcomes: Vec<Branch>,
    pub consequence: String,
    pub frequency: f64,
}

impl EventSequence {
    pub fn successes(&self) -> usize {
        self.outcomes.iter().filter(|b| **b == Branch::Success).count()
    }

    pub fn has_failure(&self) -> bool {
        self.outcomes.contains(&Branch::Failure)
    }
}

/// `λ · ∏_{i ∈ success} P_i · ∏_{i ∈ failure} (1 − P_i)`.
pub fn sequence_frequency(lambda: f64, outcomes: &[Branch], probs: &[f64]) -> Result<f64, TreeError> {
    if outcomes.len() != probs.len() {
        return Err(TreeError::LengthMismatch {
            outcomes: outcomes.len(),
            probs: probs.len(),
        });
    }
    let mut freq = lambda;
    for (branch, p) in outcomes.iter().zip(probs) {
        match branch {
            Branch::Success => freq *= p,
            Branch::Failure => freq *= 1.0 - p,
            Branch::NotQueried => {}
        }
    }
    Ok(freq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    EmptyName,
    NegativeFrequency,
    ProbabilityOutOfRange,
    NonContiguousIds,
    TooManyHeaders,
    RuleLength,
    InconsistentPrune,
    UncoveredVector,
    AmbiguousVector,
    UnrealizableVector,
    Normalization,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::EmptyName => "initiating event name is empty",
            ViolationKind::NegativeFrequency => "initiating event frequency is negative or not finite",
            ViolationKind::ProbabilityOutOfRange => "probability out of range",
            ViolationKind::NonContiguousIds => "header ids are not contiguous",
            ViolationKind::TooManyHeaders => "too many headers",
            ViolationKind::RuleLength => "consequence rule has wrong length",
            ViolationKind::InconsistentPrune => "inconsistent prune rule",
            ViolationKind::UncoveredVector => "uncovered outcome vector",
            ViolationKind::AmbiguousVector => "ambiguous outcome vector",
            ViolationKind::UnrealizableVector => "unrealizable outcome vector",
            ViolationKind::Normalization => "sequence frequencies do not sum to the initiating frequency",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, detail: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            detail: detail.into(),
        });
    }
}

impl EventTree {
    pub fn from_json_str(s: &str) -> Result<Self, TreeError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, TreeError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn n_headers(&self) -> usize {
        self.headers.len()
    }

    pub fn success_probs(&self) -> Vec<f64> {
        self.headers.iter().map(|h| h.success_prob).collect()
    }

    fn index_of(&self, id: usize) -> Option<usize> {
        self.headers.iter().position(|h| h.id == id)
    }

    /// Header positions skipped after each header's failure.
    fn prune_table(&self) -> Result<Vec<Vec<usize>>, TreeError> {
        let mut table = vec![Vec::new(); self.headers.len()];
        for rule in &self.prune_rules {
            let trigger = self
                .index_of(rule.after_failure_of)
                .ok_or_else(|| TreeError::InconsistentPrune(format!("trigger header {} does not exist", rule.after_failure_of)))?;
            for &id in &rule.skip {
                let skipped = self
                    .index_of(id)
                    .ok_or_else(|| TreeError::InconsistentPrune(format!("skipped header {id} does not exist")))?;
                if skipped <= trigger {
                    return Err(TreeError::InconsistentPrune(format!(
                        "header {id} is not downstream of header {}",
                        rule.after_failure_of
                    )));
                }
                table[trigger].push(skipped);
            }
        }
        Ok(table)
    }

    /// Every outcome vector the tree can realize, success branch first.
    pub fn realizable_vectors(&self) -> Result<Vec<Vec<Branch>>, TreeError> {
        let n = self.headers.len();
        if n > MAX_HEADERS {
            return Err(TreeError::TooManyHeaders(n));
        }
        let prune = self.prune_table()?;
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(n);
        expand(0, n, &prune, &mut current, &mut out);
        Ok(out)
    }

    fn label_table(&self) -> Result<BTreeMap<&[Branch], &str>, TreeError> {
        let mut table: BTreeMap<&[Branch], &str> = BTreeMap::new();
        for rule in &self.consequences {
            if let Some(prev) = table.insert(rule.outcomes.as_slice(), rule.label.as_str()) {
                if prev != rule.label {
                    return Err(TreeError::Ambiguous(outcome_string(&rule.outcomes)));
                }
            }
        }
        Ok(table)
    }

    pub fn enumerate_sequences(&self) -> Result<Vec<EventSequence>, TreeError> {
        let vectors = self.realizable_vectors()?;
        let table = self.label_table()?;
        let probs = self.success_probs();
        let lambda = self.initiating_event.frequency;
        vectors
            .into_iter()
            .map(|outcomes| {
                let consequence = match table.get(outcomes.as_slice()) {
                    Some(label) => label.to_string(),
                    None => self
                        .default_consequence
                        .clone()
                        .ok_or_else(|| TreeError::Uncovered(outcome_string(&outcomes)))?,
                };
                let frequency = sequence_frequency(lambda, &outcomes, &probs)?;
                Ok(EventSequence {
                    outcomes,
                    consequence,
                    frequency,
                })
            })
            .collect()
    }

    /// Summed frequency per consequence, in order of first appearance.
    pub fn consequence_frequencies(&self) -> Result<Vec<(String, f64)>, TreeError> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for seq in self.enumerate_sequences()? {
            match out.iter_mut().find(|(label, _)| *label == seq.consequence) {
                Some((_, f)) => *f += seq.frequency,
                None => out.push((seq.consequence, seq.frequency)),
            }
        }
        Ok(out)
    }

    /// Total frequency of sequences ending in `label`. Unknown labels give 0.
    pub fn consequence_frequency(&self, label: &str) -> Result<f64, TreeError> {
        let sequences = self.enumerate_sequences()?;
        let mut found = false;
        let mut total = 0.0;
        for seq in sequences.iter().filter(|s| s.consequence == label) {
            found = true;
            total += seq.frequency;
        }
        if !found {
            log::warn!("consequence {label:?} does not occur in tree {:?}", self.initiating_event.name);
        }
        Ok(total)
    }

    /// Copy of the tree with `success_prob = 1` for every listed header.
    pub fn apply_mitigation(&self, forced_success: &BTreeSet<usize>) -> Result<EventTree, TreeError> {
        let mut mitigated = self.clone();
        for &id in forced_success {
            let idx = self.index_of(id).ok_or(TreeError::UnknownHeader(id))?;
            mitigated.headers[idx].success_prob = 1.0;
        }
        Ok(mitigated)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let ie = &self.initiating_event;
        if ie.name.trim().is_empty() {
            report.push(ViolationKind::EmptyName, "initiating event");
        }
        if !(ie.frequency.is_finite() && ie.frequency >= 0.0) {
            report.push(ViolationKind::NegativeFrequency, format!("frequency = {}", ie.frequency));
        }
        for h in &self.headers {
            if !(0.0..=1.0).contains(&h.success_prob) {
                report.push(
                    ViolationKind::ProbabilityOutOfRange,
                    format!("header {} ({}) has P = {}", h.id, h.name, h.success_prob),
                );
            }
        }
        for (pos, h) in self.headers.iter().enumerate() {
            if h.id != pos + 1 {
                report.push(
                    ViolationKind::NonContiguousIds,
                    format!("position {} carries id {}", pos + 1, h.id),
                );
            }
        }
        let n = self.headers.len();
        if n > MAX_HEADERS || (n > MAX_TABLE_HEADERS && !self.consequences.is_empty()) {
            report.push(ViolationKind::TooManyHeaders, format!("{n} headers"));
            return report;
        }
        for rule in &self.consequences {
            if rule.outcomes.len() != n {
                report.push(
                    ViolationKind::RuleLength,
                    format!("rule {} for {:?} has {} entries, tree has {n} headers", outcome_string(&rule.outcomes), rule.label, rule.outcomes.len()),
                );
            }
        }
        let vectors = match self.realizable_vectors() {
            Ok(v) => v,
            Err(err) => {
                report.push(ViolationKind::InconsistentPrune, err.to_string());
                return report;
            }
        };
        let realizable: BTreeSet<&[Branch]> = vectors.iter().map(Vec::as_slice).collect();
        let mut labels: BTreeMap<&[Branch], BTreeSet<&str>> = BTreeMap::new();
        for rule in &self.consequences {
            labels.entry(rule.outcomes.as_slice()).or_default().insert(rule.label.as_str());
        }
        for (vector, set) in &labels {
            if set.len() > 1 {
                report.push(ViolationKind::AmbiguousVector, outcome_string(vector));
            }
            if vector.len() == n && !realizable.contains(vector) {
                report.push(ViolationKind::UnrealizableVector, outcome_string(vector));
            }
        }
        if self.default_consequence.is_none() {
            for v in &vectors {
                if !labels.contains_key(v.as_slice()) {
                    report.push(ViolationKind::UncoveredVector, outcome_string(v));
                }
            }
        }
        if report.is_valid() {
            let probs = self.success_probs();
            let lambda = ie.frequency;
            let total: f64 = vectors
                .iter()
                .map(|v| sequence_frequency(lambda, v, &probs).unwrap_or(f64::NAN))
                .sum();
            if !approx_eq_rel(total, lambda, NORMALIZATION_RTOL) {
                report.push(ViolationKind::Normalization, format!("sum = {total:e}, λ = {lambda:e}"));
            }
        }
        report
    }
}

fn expand(pos: usize, n: usize, prune: &[Vec<usize>], current: &mut Vec<Branch>, out: &mut Vec<Vec<Branch>>) {
    if pos == n {
        out.push(current.clone());
        return;
    }
    let skipped = current
        .iter()
        .enumerate()
        .any(|(i, b)| *b == Branch::Failure && prune[i].contains(&pos));
    if skipped {
        current.push(Branch::NotQueried);
        expand(pos + 1, n, prune, current, out);
        current.pop();
        return;
    }
    for branch in [Branch::Success, Branch::Failure] {
        current.push(branch);
        expand(pos + 1, n, prune, current, out);
        current.pop();
    }
}

/// `|a − b| ≤ rtol · max(|a|, |b|)`; two exact zeros compare equal.
pub fn approx_eq_rel(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs())
}

/// Enumerate many trees at once.
pub fn enumerate_batch(trees: &[EventTree], mode: ExecMode) -> Vec<Result<Vec<EventSequence>, TreeError>> {
    mode.map(trees, EventTree::enumerate_sequences)
}

/// The two-header Large LOCA tree: safety injection, then containment spray.
/// The core survives only when both succeed.
pub fn large_loca_example(lambda: f64, p_injection: f64, p_spray: f64) -> EventTree {
    use Branch::{Failure as F, Success as S};
    let rule = |outcomes: Vec<Branch>, label: &str| ConsequenceRule {
        outcomes,
        label: label.to_string(),
    };
    EventTree {
        initiating_event: InitiatingEvent {
            name: "Large LOCA".to_string(),
            acronym: "LOCA".to_string(),
            description: "Large-break loss of coolant accident".to_string(),
            frequency: lambda,
        },
        headers: vec![
            HeaderEvent {
                id: 1,
                name: "Safety injection".to_string(),
                description: "Safety injection system operates normally".to_string(),
                success_prob: p_injection,
            },
            HeaderEvent {
                id: 2,
                name: "Containment spray".to_string(),
                description: "Containment spray system functions properly".to_string(),
                success_prob: p_spray,
            },
        ],
        consequences: vec![
            rule(vec![S, S], "No core meltdown"),
            rule(vec![S, F], "Core meltdown"),
            rule(vec![F, S], "Core meltdown"),
            rule(vec![F, F], "Core meltdown"),
        ],
        default_consequence: None,
        prune_rules: Vec::new(),
    }
}

//! Datasets, gold judging, accuracy tables and accumulation export.

mod dataset;
mod report;
pub mod script;
pub mod synth;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::ExecMode;
use crate::memory::MemoryBank;
use crate::pipeline::{run_task_inference, run_validator, Backends, IncidentCase, PipelineError, RunConfig, TaskOutcome};
use crate::types::{ReasonMode, StrategyKind, Task};

pub use dataset::{
    acronym_name, load_dataset, parse_dataset, DatasetError, DatasetManifest, DeclaredSplits, SplitCounts, ACRONYM_COUNTS,
};
pub use report::{accumulation_csv, export_accumulation, CellValue, EvalCell, EvalReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("accuracy needs a positive total (got {correct}/{total})")]
    Accuracy { correct: usize, total: usize },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

/// `correct` out of `total` test cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

pub fn accuracy(correct: usize, total: usize) -> Result<Accuracy, EvalError> {
    if total == 0 || correct > total {
        return Err(EvalError::Accuracy { correct, total });
    }
    Ok(Accuracy { correct, total })
}

impl Accuracy {
    pub fn percent(&self) -> f64 {
        100.0 * self.correct as f64 / self.total as f64
    }

    /// Whole percentages print bare ("100 %"), others with 4 decimals.
    pub fn render(&self) -> String {
        if (100 * self.correct).is_multiple_of(self.total) {
            format!("{} %", 100 * self.correct / self.total)
        } else {
            format!("{:.4} %", self.percent())
        }
    }
}

impl fmt::Display for Accuracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    /// Normalized comparison against the gold lists.
    #[default]
    GoldMatch,
    /// The task validator's verdict, with the gold answer in its prompt.
    ValidatorAgent,
}

impl std::str::FromStr for JudgeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gold" | "gold_match" => Ok(JudgeMode::GoldMatch),
            "validator" | "validator_agent" => Ok(JudgeMode::ValidatorAgent),
            other => Err(format!("unknown judge mode {other:?} (expected gold or validator)")),
        }
    }
}

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize(text: &str) -> String {
    let mut cleaned = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_alphanumeric() {
            cleaned.extend(c.to_lowercase());
        } else {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_enumeration(line: &str) -> &str {
    let mut s = line.trim_start();
    s = s.trim_start_matches(['-', '*', '•', '·']).trim_start();
    let lower = s.to_ascii_lowercase();
    if lower.starts_with("step ") {
        let rest = &s[5..];
        let digits = rest.chars().take_while(char::is_ascii_digit).count();
        if digits > 0 {
            s = rest[digits..].trim_start_matches([':', '.', ')', '-']).trim_start();
        }
        return s;
    }
    let digits = s.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix(['.', ')', ':']) {
            return r.trim_start();
        }
    }
    s
}

/// One normalized item per non-empty answer line.
pub fn answer_items(answer: &str) -> Vec<String> {
    answer
        .lines()
        .map(|l| normalize(strip_enumeration(l)))
        .filter(|l| !l.is_empty())
        .collect()
}

/// task1: same set of items. task2: same items in the same order.
/// task3: the first action matches.
pub fn judge_gold(task: Task, answer: &str, case: &IncidentCase) -> bool {
    let got = answer_items(answer);
    let gold: Vec<String> = case
        .gold_items(task)
        .iter()
        .map(|g| normalize(strip_enumeration(g)))
        .filter(|g| !g.is_empty())
        .collect();
    if gold.is_empty() {
        return false;
    }
    match task {
        Task::Task1 => {
            let a: std::collections::BTreeSet<_> = got.iter().collect();
            let b: std::collections::BTreeSet<_> = gold.iter().collect();
            a == b
        }
        Task::Task2 => got == gold,
        Task::Task3 => got.first() == gold.first(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseVerdict {
    pub case_id: String,
    pub task: Task,
    pub strategy: StrategyKind,
    pub backend: String,
    pub reason: ReasonMode,
    pub correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

fn judge_case(
    case: &IncidentCase,
    task: Task,
    config: &RunConfig,
    bank: &MemoryBank,
    backends: &Backends,
    judge: JudgeMode,
) -> Result<CaseVerdict, PipelineError> {
    let query = case.gold_query(task);
    let outcome = run_task_inference(case, &query, config, bank, backends)?;
    let (correct, answer, failure) = match outcome {
        TaskOutcome::Answered { answer, .. } => {
            let correct = match judge {
                JudgeMode::GoldMatch => judge_gold(task, &answer, case),
                JudgeMode::ValidatorAgent => run_validator(case, task, 1, &query, &answer, config, backends)?.correct,
            };
            (correct, Some(answer), None)
        }
        TaskOutcome::GenerationFailure { error } => (false, None, Some(error)),
        TaskOutcome::Skipped { upstream } => (false, None, Some(format!("skipped: {upstream} failed"))),
    };
    Ok(CaseVerdict {
        case_id: case.case_id.clone(),
        task,
        strategy: config.strategy,
        backend: backends.chat.id().to_string(),
        reason: config.modes(task).generation,
        correct,
        answer,
        failure,
    })
}

/// Score `config` on the test split of `task`. Each case runs on its own
/// fork of `backends`; transcripts are appended in case order.
pub fn evaluate_cell(
    manifest: &DatasetManifest,
    task: Task,
    config: &RunConfig,
    bank: &MemoryBank,
    backends: &Backends,
    judge: JudgeMode,
    mode: ExecMode,
) -> Result<(Accuracy, Vec<CaseVerdict>), EvalError> {
    config.check().map_err(EvalError::Pipeline)?;
    let cases = manifest.test_cases(task);
    let workers: Vec<Backends> = cases.iter().map(|_| backends.fork()).collect();
    let jobs: Vec<(&IncidentCase, &Backends)> = cases.iter().copied().zip(workers.iter()).collect();
    let results = mode.map(&jobs, |(case, b)| judge_case(case, task, config, bank, b, judge));
    for w in &workers {
        backends.transcript.extend(w.transcript.take());
    }
    let verdicts = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let correct = verdicts.iter().filter(|v| v.correct).count();
    Ok((accuracy(correct, verdicts.len())?, verdicts))
}

/// What [`compare_strategies`] evaluates.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareSpec {
    pub tasks: Vec<Task>,
    pub strategies: Vec<StrategyKind>,
    /// Extra rows for the record-only and experience-only ablations.
    pub ablation: bool,
    /// Column modes; applied as the generation reason mode.
    pub reason_modes: Vec<ReasonMode>,
    pub judge: JudgeMode,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            tasks: Task::ALL.to_vec(),
            strategies: StrategyKind::MAIN.to_vec(),
            ablation: true,
            reason_modes: vec![ReasonMode::WithoutReasons, ReasonMode::WithReasons],
            judge: JudgeMode::GoldMatch,
        }
    }
}

struct CellJob {
    task: Task,
    strategy: StrategyKind,
    slot: usize,
    reason: ReasonMode,
}

/// Every (task, strategy, backend, reason) cell over the test splits. A
/// failing cell is reported as an error; the rest still run.
pub fn compare_strategies(
    manifest: &DatasetManifest,
    base: &RunConfig,
    spec: &CompareSpec,
    bank: &MemoryBank,
    slots: &[&Backends],
    mode: ExecMode,
) -> EvalReport {
    let mut strategies = spec.strategies.clone();
    if spec.ablation {
        for s in StrategyKind::ABLATION {
            if !strategies.contains(&s) {
                strategies.push(s);
            }
        }
    }
    let mut jobs = Vec::new();
    for &task in &spec.tasks {
        for &strategy in &strategies {
            for slot in 0..slots.len() {
                for &reason in &spec.reason_modes {
                    jobs.push(CellJob {
                        task,
                        strategy,
                        slot,
                        reason,
                    });
                }
            }
        }
    }
    let workers: Vec<Backends> = jobs.iter().map(|j| slots[j.slot].fork()).collect();
    let indexed: Vec<(&CellJob, &Backends)> = jobs.iter().zip(workers.iter()).collect();
    let cells = mode.map(&indexed, |(job, b)| {
        let mut config = base.clone().with_strategy(job.strategy);
        let i = usize::from(job.task.number() - 1);
        config.reason_gen[i] = job.reason;
        let result = evaluate_cell(manifest, job.task, &config, bank, b, spec.judge, ExecMode::Sequential);
        let (value, verdicts) = match result {
            Ok((acc, verdicts)) => (CellValue::Accuracy(acc), verdicts),
            Err(err) => {
                log::error!("cell {} {} {}: {err}", job.task, job.strategy, job.reason.label());
                (CellValue::Error(err.to_string()), Vec::new())
            }
        };
        EvalCell {
            task: job.task,
            strategy: job.strategy,
            backend: b.chat.id().to_string(),
            reason: job.reason,
            value,
            verdicts,
        }
    });
    for (job, w) in jobs.iter().zip(&workers) {
        slots[job.slot].transcript.extend(w.transcript.take());
    }
    EvalReport::new(manifest, cells)
}

/// Single-configuration evaluation over `tasks` (the `eval` command).
pub fn evaluate(
    manifest: &DatasetManifest,
    config: &RunConfig,
    tasks: &[Task],
    bank: &MemoryBank,
    backends: &Backends,
    judge: JudgeMode,
    mode: ExecMode,
) -> EvalReport {
    let cells = tasks
        .iter()
        .map(|&task| {
            let result = evaluate_cell(manifest, task, config, bank, backends, judge, mode);
            let (value, verdicts) = match result {
                Ok((acc, v)) => (CellValue::Accuracy(acc), v),
                Err(err) => (CellValue::Error(err.to_string()), Vec::new()),
            };
            EvalCell {
                task,
                strategy: config.strategy,
                backend: backends.chat.id().to_string(),
                reason: config.modes(task).generation,
                value,
                verdicts,
            }
        })
        .collect();
    EvalReport::new(manifest, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn case() -> IncidentCase {
        IncidentCase {
            case_id: "c".into(),
            initiating_event: "Main Steam Line Break".into(),
            acronym: "MSLB".into(),
            ie_description: "d".into(),
            event_process_and_response: "p".into(),
            gold_subevents: vec!["Steam line rupture".into(), "Containment pressure rise".into()],
            gold_header_events: vec!["Reactor trip".into(), "MSIV closure".into(), "Auxiliary feedwater".into()],
            gold_operator_actions: vec!["Confirm reactor trip".into(), "Isolate the faulted steam generator".into()],
            split: Default::default(),
            task1_split: None,
            synthetic: true,
        }
    }

    #[test]
    fn accuracy_strings() {
        let cases = [
            (1, 3, "33.3333 %"),
            (2, 3, "66.6667 %"),
            (3, 3, "100 %"),
            (0, 7, "0 %"),
            (1, 7, "14.2857 %"),
            (6, 7, "85.7143 %"),
        ];
        for (c, t, s) in cases {
            assert_eq!(accuracy(c, t).unwrap().render(), s);
        }
        assert!(accuracy(1, 0).is_err());
        assert!(accuracy(4, 3).is_err());
    }

    #[test]
    fn exact_answers_pass_every_task() {
        let c = case();
        for task in Task::ALL {
            assert!(judge_gold(task, &c.gold_text(task), &c), "{task}");
        }
    }

    #[test]
    fn order_matters_only_for_headers() {
        let c = case();
        assert!(!judge_gold(Task::Task2, "1. MSIV closure\n2. Reactor trip\n3. Auxiliary feedwater", &c));
        assert!(judge_gold(Task::Task1, "Containment pressure rise\nSteam line rupture", &c));
    }

    #[test]
    fn task3_scores_first_step() {
        let c = case();
        assert!(judge_gold(Task::Task3, "Step 1: confirm reactor trip.\nStep 2: call the shift supervisor", &c));
        assert!(!judge_gold(Task::Task3, "1. Isolate the faulted steam generator", &c));
    }

    #[test]
    fn enumeration_forms() {
        assert_eq!(strip_enumeration("12) foo"), "foo");
        assert_eq!(strip_enumeration("- foo"), "foo");
        assert_eq!(strip_enumeration("Step 3: foo"), "foo");
        assert_eq!(strip_enumeration("3 pumps"), "3 pumps");
    }

    fn render_pct(s: &str) -> f64 {
        s.trim_end_matches(" %").parse().unwrap()
    }

    proptest! {
        #[test]
        fn complements_sum_to_100(total in 1usize..200, frac in 0.0f64..=1.0) {
            let a = ((total as f64) * frac).floor() as usize;
            let x = render_pct(&accuracy(a, total).unwrap().render());
            let y = render_pct(&accuracy(total - a, total).unwrap().render());
            prop_assert!((x + y - 100.0).abs() <= 1e-4 + 1e-12);
        }

        #[test]
        fn judge_ignores_layout(upper in any::<bool>(), bullet in 0usize..3, pad in 0usize..4) {
            let c = case();
            for task in Task::ALL {
                let text: Vec<String> = c.gold_items(task).iter().enumerate().map(|(i, g)| {
                    let g = if upper { g.to_uppercase() } else { g.to_lowercase() };
                    let prefix = match bullet { 0 => format!("{}.", i + 1), 1 => "-".to_string(), _ => format!("Step {}:", i + 1) };
                    format!("{}{prefix}{}{g}  ", " ".repeat(pad), " ".repeat(pad + 1))
                }).collect();
                prop_assert!(judge_gold(task, &text.join("\n"), &c));
            }
        }
    }
}

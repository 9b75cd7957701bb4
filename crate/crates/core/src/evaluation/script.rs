//! Build scripted-backend replays from outcome tables.
//!
//! Training entries answer each training case correctly after a chosen
//! number of rejected attempts. Evaluation entries answer the first
//! `n_correct` test cases of a cell with the gold list and the rest with
//! an answer that fails the gold judge.

use serde::{Deserialize, Serialize};

use super::DatasetManifest;
use crate::agents::{render_answer, render_items, render_verdict};
use crate::gateway::{ScriptEntry, ScriptMatch};
use crate::pipeline::IncidentCase;
use crate::types::{ReasonMode, StrategyKind, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellPlan {
    pub task: Task,
    pub strategy: StrategyKind,
    pub reason: ReasonMode,
    pub n_correct: usize,
}

/// Correct-case counts for the two reference backbones, per task and
/// strategy: `[without reasons, with reasons]`.
pub const REFERENCE_OUTCOMES: [(&str, Task, StrategyKind, [usize; 2]); 24] = [
    ("gpt-3.5", Task::Task1, StrategyKind::Vanilla, [1, 2]),
    ("gpt-3.5", Task::Task1, StrategyKind::CoT, [0, 0]),
    ("gpt-3.5", Task::Task1, StrategyKind::NPPprompt, [1, 0]),
    ("gpt-3.5", Task::Task1, StrategyKind::EvoTaskTree, [1, 2]),
    ("gpt-4o", Task::Task1, StrategyKind::Vanilla, [1, 0]),
    ("gpt-4o", Task::Task1, StrategyKind::CoT, [2, 0]),
    ("gpt-4o", Task::Task1, StrategyKind::NPPprompt, [1, 1]),
    ("gpt-4o", Task::Task1, StrategyKind::EvoTaskTree, [3, 2]),
    ("gpt-3.5", Task::Task2, StrategyKind::Vanilla, [0, 0]),
    ("gpt-3.5", Task::Task2, StrategyKind::CoT, [0, 0]),
    ("gpt-3.5", Task::Task2, StrategyKind::NPPprompt, [0, 0]),
    ("gpt-3.5", Task::Task2, StrategyKind::EvoTaskTree, [2, 3]),
    ("gpt-4o", Task::Task2, StrategyKind::Vanilla, [0, 0]),
    ("gpt-4o", Task::Task2, StrategyKind::CoT, [0, 0]),
    ("gpt-4o", Task::Task2, StrategyKind::NPPprompt, [0, 3]),
    ("gpt-4o", Task::Task2, StrategyKind::EvoTaskTree, [5, 6]),
    ("gpt-3.5", Task::Task3, StrategyKind::Vanilla, [0, 0]),
    ("gpt-3.5", Task::Task3, StrategyKind::CoT, [0, 2]),
    ("gpt-3.5", Task::Task3, StrategyKind::NPPprompt, [4, 5]),
    ("gpt-3.5", Task::Task3, StrategyKind::EvoTaskTree, [4, 5]),
    ("gpt-4o", Task::Task3, StrategyKind::Vanilla, [0, 1]),
    ("gpt-4o", Task::Task3, StrategyKind::CoT, [0, 0]),
    ("gpt-4o", Task::Task3, StrategyKind::NPPprompt, [4, 5]),
    ("gpt-4o", Task::Task3, StrategyKind::EvoTaskTree, [6, 6]),
];

/// Names accepted by [`reference_plans`].
pub const REFERENCE_BACKENDS: [&str; 2] = ["gpt-3.5", "gpt-4o"];

pub fn reference_plans(backend: &str) -> Option<Vec<CellPlan>> {
    if !REFERENCE_BACKENDS.contains(&backend) {
        return None;
    }
    let mut plans = Vec::new();
    for (b, task, strategy, counts) in REFERENCE_OUTCOMES {
        if b != backend {
            continue;
        }
        for (reason, n_correct) in [ReasonMode::WithoutReasons, ReasonMode::WithReasons].into_iter().zip(counts) {
            plans.push(CellPlan {
                task,
                strategy,
                reason,
                n_correct,
            });
        }
    }
    Some(plans)
}

/// A response the gold judge rejects for `task`.
pub fn wrong_answer(task: Task) -> String {
    match task {
        Task::Task1 => render_items(&["No relevant subevents identified"]),
        Task::Task2 => render_items(&["No header events identified"]),
        Task::Task3 => render_items(&["Wait for further instructions"]),
    }
}

fn executor_response(answer: &str, task: Task) -> String {
    render_answer(answer, Some(&format!("Derived from the {task} situation description.")))
}

fn tag(case: &IncidentCase, task: Task, executor: bool, attempt: u32) -> ScriptMatch {
    ScriptMatch {
        case: Some(case.case_id.clone()),
        task: Some(task),
        role: Some(if executor { task.executor() } else { task.validator() }),
        attempt: Some(attempt),
        ..Default::default()
    }
}

/// Training replay: the `i`-th training sample of a task is rejected
/// `rejections(i)` times before its gold answer is accepted. Samples whose
/// count reaches `max_retries` are never accepted.
pub fn training_entries(
    manifest: &DatasetManifest,
    tasks: &[Task],
    rejections: impl Fn(usize) -> u32,
    max_retries: u32,
) -> Vec<ScriptEntry> {
    let mut entries = Vec::new();
    for &task in tasks {
        for (i, case) in manifest.train_cases(task).into_iter().enumerate() {
            let r = rejections(i).min(max_retries);
            for attempt in 1..=r {
                entries.push(ScriptEntry::new(
                    tag(case, task, true, attempt),
                    executor_response(&wrong_answer(task), task),
                ));
                entries.push(ScriptEntry::new(
                    tag(case, task, false, attempt),
                    render_verdict(false, Some("The answer does not match the reference; list the actual items.")),
                ));
            }
            if r < max_retries {
                entries.push(ScriptEntry::new(
                    tag(case, task, true, r + 1),
                    executor_response(&case.gold_text(task), task),
                ));
                entries.push(ScriptEntry::new(
                    tag(case, task, false, r + 1),
                    render_verdict(true, Some("Matches the reference.")),
                ));
            }
        }
    }
    entries
}

/// Evaluation replay for each planned cell.
pub fn eval_entries(manifest: &DatasetManifest, plans: &[CellPlan]) -> Vec<ScriptEntry> {
    let mut entries = Vec::new();
    for plan in plans {
        for (i, case) in manifest.test_cases(plan.task).into_iter().enumerate() {
            let answer = if i < plan.n_correct {
                case.gold_text(plan.task)
            } else {
                wrong_answer(plan.task)
            };
            let mut m = tag(case, plan.task, true, 1);
            m.strategy = Some(plan.strategy);
            m.reason = Some(plan.reason);
            entries.push(ScriptEntry::new(m, executor_response(&answer, plan.task)));
        }
    }
    entries
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::synth::synth_corpus;
    use crate::evaluation::judge_gold;

    #[test]
    fn wrong_answers_fail_every_synthetic_case() {
        let m = synth_corpus(42);
        for task in Task::ALL {
            for c in &m.cases {
                assert!(!judge_gold(task, &wrong_answer(task), c));
            }
        }
    }

    #[test]
    fn reference_plans_cover_main_rows() {
        for b in REFERENCE_BACKENDS {
            assert_eq!(reference_plans(b).unwrap().len(), 3 * 4 * 2);
        }
        assert!(reference_plans("other").is_none());
    }

    #[test]
    fn training_entry_count() {
        let m = synth_corpus(42);
        let e = training_entries(&m, &[Task::Task1], |i| (i % 3) as u32, 10);
        let rejections: usize = (0..10).map(|i| i % 3).sum();
        assert_eq!(e.len(), 2 * (10 + rejections));
        let capped = training_entries(&m, &[Task::Task1], |_| 20, 2);
        assert_eq!(capped.len(), 2 * 10 * 2);
    }
}

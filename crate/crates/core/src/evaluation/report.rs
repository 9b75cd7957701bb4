use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Accuracy, CaseVerdict, DatasetManifest, EvalError};
use crate::pipeline::AccumulationLog;
use crate::types::{ReasonMode, StrategyKind, Task};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellValue {
    Accuracy(Accuracy),
    Error(String),
}

impl CellValue {
    pub fn render(&self) -> String {
        match self {
            CellValue::Accuracy(a) => a.render(),
            CellValue::Error(_) => "error".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCell {
    pub task: Task,
    pub strategy: StrategyKind,
    pub backend: String,
    pub reason: ReasonMode,
    pub value: CellValue,
    #[serde(skip)]
    pub verdicts: Vec<CaseVerdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
struct CellLine<'a> {
    task: Task,
    strategy: StrategyKind,
    backend: &'a str,
    reason: &'static str,
    accuracy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    correct: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

/// Accuracy tables plus per-case verdicts. Carries no timing data so that
/// identical inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalReport {
    pub cells: Vec<EvalCell>,
    pub test_sizes: BTreeMap<Task, usize>,
}

impl EvalReport {
    pub fn new(manifest: &DatasetManifest, cells: Vec<EvalCell>) -> Self {
        let test_sizes = Task::ALL.iter().map(|&t| (t, manifest.test_cases(t).len())).collect();
        Self { cells, test_sizes }
    }

    pub fn cell(&self, task: Task, strategy: StrategyKind, backend: &str, reason: ReasonMode) -> Option<&EvalCell> {
        self.cells
            .iter()
            .find(|c| c.task == task && c.strategy == strategy && c.backend == backend && c.reason == reason)
    }

    /// Rendered value of one cell, `None` when it was not evaluated.
    pub fn rendered(&self, task: Task, strategy: StrategyKind, backend: &str, reason: ReasonMode) -> Option<String> {
        self.cell(task, strategy, backend, reason).map(|c| c.value.render())
    }

    fn tasks(&self) -> Vec<Task> {
        let mut out: Vec<Task> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.task) {
                out.push(c.task);
            }
        }
        out
    }

    fn table(&self, out: &mut String, task: Task, rows: &[StrategyKind]) {
        let mut columns: Vec<(&str, ReasonMode)> = Vec::new();
        for c in self.cells.iter().filter(|c| c.task == task) {
            if !columns.contains(&(c.backend.as_str(), c.reason)) {
                columns.push((c.backend.as_str(), c.reason));
            }
        }
        out.push_str("| Project |");
        for (backend, reason) in &columns {
            let _ = write!(out, " {backend} {} |", reason.label());
        }
        out.push_str("\n|---|");
        for _ in &columns {
            out.push_str("---|");
        }
        out.push('\n');
        for &strategy in rows {
            let _ = write!(out, "| {strategy} |");
            for &(backend, reason) in &columns {
                let v = self.rendered(task, strategy, backend, reason).unwrap_or_else(|| "-".into());
                let _ = write!(out, " {v} |");
            }
            out.push('\n');
        }
    }

    fn strategies_present(&self, task: Task, candidates: &[StrategyKind]) -> Vec<StrategyKind> {
        candidates
            .iter()
            .copied()
            .filter(|s| self.cells.iter().any(|c| c.task == task && c.strategy == *s))
            .collect()
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Evaluation report\n");
        for task in self.tasks() {
            let n = self.test_sizes.get(&task).copied().unwrap_or(0);
            let _ = write!(out, "\n## {task} ({n} test cases)\n\n");
            let main = self.strategies_present(task, &StrategyKind::MAIN);
            let others: Vec<StrategyKind> = self
                .strategies_present(task, &StrategyKind::ALL)
                .into_iter()
                .filter(|s| !StrategyKind::MAIN.contains(s))
                .collect();
            if !main.is_empty() {
                self.table(&mut out, task, &main);
            }
            if !others.is_empty() {
                let mut rows = Vec::new();
                if main.contains(&StrategyKind::EvoTaskTree) {
                    rows.push(StrategyKind::EvoTaskTree);
                }
                rows.extend(others);
                out.push_str("\nAblation:\n\n");
                self.table(&mut out, task, &rows);
            }
        }
        let errors: Vec<&EvalCell> = self.cells.iter().filter(|c| matches!(c.value, CellValue::Error(_))).collect();
        if !errors.is_empty() {
            out.push_str("\n## Errors\n\n");
            for c in errors {
                if let CellValue::Error(e) = &c.value {
                    let _ = writeln!(out, "- {} {} {} {}: {e}", c.task, c.strategy, c.backend, c.reason.label());
                }
            }
        }
        out
    }

    /// One JSON object per cell.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for c in &self.cells {
            let (correct, total, error) = match &c.value {
                CellValue::Accuracy(a) => (Some(a.correct), Some(a.total), None),
                CellValue::Error(e) => (None, None, Some(e.as_str())),
            };
            let line = CellLine {
                task: c.task,
                strategy: c.strategy,
                backend: &c.backend,
                reason: c.reason.label(),
                accuracy: c.value.render(),
                correct,
                total,
                error,
            };
            out.push_str(&serde_json::to_string(&line).expect("cell serializes"));
            out.push('\n');
        }
        out
    }

    /// Per-case verdicts, one JSON object per line, in cell then case order.
    pub fn results_jsonl(&self) -> String {
        let mut out = String::new();
        for v in self.cells.iter().flat_map(|c| &c.verdicts) {
            out.push_str(&serde_json::to_string(v).expect("verdict serializes"));
            out.push('\n');
        }
        out
    }

    pub fn verdicts(&self) -> impl Iterator<Item = &CaseVerdict> {
        self.cells.iter().flat_map(|c| &c.verdicts)
    }
}

pub fn accumulation_csv(log: &AccumulationLog) -> String {
    let mut out = String::from("sample_index,task,record_count,experience_count\n");
    for r in &log.rows {
        let _ = writeln!(out, "{},{},{},{}", r.sample_index, r.task, r.record_count, r.experience_count);
    }
    out
}

pub fn export_accumulation(log: &AccumulationLog, path: impl AsRef<Path>) -> Result<(), EvalError> {
    let path = path.as_ref();
    std::fs::write(path, accumulation_csv(log)).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::AccumulationRow;

    #[test]
    fn empty_log_is_header_only() {
        assert_eq!(
            accumulation_csv(&AccumulationLog::default()),
            "sample_index,task,record_count,experience_count\n"
        );
    }

    #[test]
    fn csv_rows() {
        let log = AccumulationLog {
            rows: vec![AccumulationRow {
                sample_index: 1,
                task: Task::Task2,
                record_count: 1,
                experience_count: 3,
            }],
        };
        assert!(accumulation_csv(&log).ends_with("1,task2,1,3\n"));
    }

    #[test]
    fn markdown_layout() {
        let manifest = DatasetManifest::new(Vec::new());
        let cell = |strategy, reason, value| EvalCell {
            task: Task::Task1,
            strategy,
            backend: "gpt-4o".into(),
            reason,
            value,
            verdicts: Vec::new(),
        };
        let report = EvalReport::new(
            &manifest,
            vec![
                cell(
                    StrategyKind::EvoTaskTree,
                    ReasonMode::WithoutReasons,
                    CellValue::Accuracy(Accuracy { correct: 3, total: 3 }),
                ),
                cell(StrategyKind::EvoTaskTree, ReasonMode::WithReasons, CellValue::Error("boom".into())),
                cell(
                    StrategyKind::OnlyRL,
                    ReasonMode::WithoutReasons,
                    CellValue::Accuracy(Accuracy { correct: 1, total: 3 }),
                ),
            ],
        );
        let md = report.to_markdown();
        assert!(md.contains("| Project | gpt-4o No reason | gpt-4o Reason |"), "{md}");
        assert!(md.contains("| EvoTaskTree | 100 % | error |"), "{md}");
        assert!(md.contains("| OnlyRL | 33.3333 % | - |"), "{md}");
        assert!(md.contains("boom"));
    }
}

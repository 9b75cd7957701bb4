use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{IncidentCase, Split};
use crate::types::Task;

/// Initiating-event types of the shipped corpus: (full name, acronym, count).
pub const ACRONYM_COUNTS: [(&str, &str, usize); 11] = [
    ("Loss of Coolant Accident", "LOCA", 5),
    ("Loss of Heat Sink Accident", "LOHSA", 3),
    ("Loss of Feedwater Event", "LOFW", 2),
    ("Loss of Offsite Power", "LOOP", 1),
    ("Anticipated Transient Without Scram", "ATWS", 7),
    ("Main Feedwater Line Break", "MFLB", 2),
    ("Main Steam Line Break", "MSLB", 6),
    ("Loss of DC Power Accident", "LODC", 3),
    ("Steam Generator Tube Rupture", "SGTR", 2),
    ("Main Steam Line Break Combined with Steam Generator Tube Rupture", "MSLB+SGTR", 5),
    ("Secondary Loop Transient Event", "SLTE", 2),
];

pub fn acronym_name(acronym: &str) -> Option<&'static str> {
    ACRONYM_COUNTS.iter().find(|(_, a, _)| *a == acronym).map(|(n, _, _)| *n)
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no cases")]
    Empty,
    #[error("case {case} (line {line}): {field}: {message}")]
    Schema {
        case: String,
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("distribution mismatch:\n  {}", .0.join("\n  "))]
    Distribution(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

impl std::fmt::Display for SplitCounts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.train, self.test)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclaredSplits {
    pub task1: SplitCounts,
    /// Shared by task2 and task3.
    pub task23: SplitCounts,
    pub acronyms: BTreeMap<String, usize>,
}

impl Default for DeclaredSplits {
    fn default() -> Self {
        Self {
            task1: SplitCounts { train: 10, test: 3 },
            task23: SplitCounts { train: 31, test: 7 },
            acronyms: ACRONYM_COUNTS.iter().map(|(_, a, n)| (a.to_string(), *n)).collect(),
        }
    }
}

impl DeclaredSplits {
    pub fn for_task(&self, task: Task) -> SplitCounts {
        match task {
            Task::Task1 => self.task1,
            Task::Task2 | Task::Task3 => self.task23,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub cases: Vec<IncidentCase>,
    pub declared: DeclaredSplits,
}

impl DatasetManifest {
    pub fn new(cases: Vec<IncidentCase>) -> Self {
        Self {
            cases,
            declared: DeclaredSplits::default(),
        }
    }

    fn with_split(&self, task: Task, split: Split) -> Vec<&IncidentCase> {
        self.cases.iter().filter(|c| c.split_for(task) == Some(split)).collect()
    }

    pub fn train_cases(&self, task: Task) -> Vec<&IncidentCase> {
        self.with_split(task, Split::Train)
    }

    pub fn test_cases(&self, task: Task) -> Vec<&IncidentCase> {
        self.with_split(task, Split::Test)
    }

    pub fn split_counts(&self, task: Task) -> SplitCounts {
        SplitCounts {
            train: self.train_cases(task).len(),
            test: self.test_cases(task).len(),
        }
    }

    pub fn acronym_histogram(&self) -> BTreeMap<String, usize> {
        let mut h = BTreeMap::new();
        for c in &self.cases {
            *h.entry(c.acronym.clone()).or_insert(0) += 1;
        }
        h
    }

    pub fn find(&self, case_id: &str) -> Option<&IncidentCase> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    /// Differences between the actual and declared splits and histogram.
    pub fn distribution_issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        for (label, task) in [("task1", Task::Task1), ("task2/task3", Task::Task2)] {
            let got = self.split_counts(task);
            let want = self.declared.for_task(task);
            if got != want {
                issues.push(format!("{label} split is {got} (train/test), declared {want}"));
            }
        }
        let hist = self.acronym_histogram();
        if hist != self.declared.acronyms {
            let keys: std::collections::BTreeSet<&String> = hist.keys().chain(self.declared.acronyms.keys()).collect();
            for k in keys {
                let got = hist.get(k).copied().unwrap_or(0);
                let want = self.declared.acronyms.get(k).copied().unwrap_or(0);
                if got != want {
                    issues.push(format!("{k}: {got} cases, declared {want}"));
                }
            }
        }
        issues
    }

    pub fn check_distribution(&self) -> Result<(), DatasetError> {
        let issues = self.distribution_issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(DatasetError::Distribution(issues))
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for c in &self.cases {
            out.push_str(&serde_json::to_string(c).expect("case serializes"));
            out.push('\n');
        }
        out
    }
}

fn schema_check(case: &IncidentCase, line: usize) -> Result<(), DatasetError> {
    let fail = |field, message: &str| DatasetError::Schema {
        case: case.case_id.clone(),
        line,
        field,
        message: message.to_string(),
    };
    if case.case_id.trim().is_empty() {
        return Err(fail("case_id", "empty"));
    }
    if acronym_name(&case.acronym).is_none() {
        return Err(fail("acronym", &format!("unknown acronym {:?}", case.acronym)));
    }
    for (field, value) in [
        ("initiating_event", &case.initiating_event),
        ("ie_description", &case.ie_description),
        ("event_process_and_response", &case.event_process_and_response),
    ] {
        if value.trim().is_empty() {
            return Err(fail(field, "empty"));
        }
    }
    if case.task1_split.is_some() && case.gold_subevents.is_empty() {
        return Err(fail("gold_subevents", "empty for a task1 case"));
    }
    if case.gold_header_events.is_empty() {
        return Err(fail("gold_header_events", "empty"));
    }
    if case.gold_operator_actions.is_empty() {
        return Err(fail("gold_operator_actions", "empty"));
    }
    Ok(())
}

/// Parse and schema-check a JSONL manifest. Split sizes and the acronym
/// histogram are checked separately by [`DatasetManifest::check_distribution`].
pub fn parse_dataset(text: &str) -> Result<DatasetManifest, DatasetError> {
    let mut cases = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let case: IncidentCase = serde_json::from_str(raw).map_err(|e| DatasetError::Parse {
            line,
            message: e.to_string(),
        })?;
        schema_check(&case, line)?;
        if !seen.insert(case.case_id.clone()) {
            return Err(DatasetError::Schema {
                case: case.case_id,
                line,
                field: "case_id",
                message: "duplicate".into(),
            });
        }
        cases.push(case);
    }
    if cases.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(DatasetManifest::new(cases))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<DatasetManifest, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"case_id":"a","initiating_event":"Loss of Offsite Power","acronym":"LOOP","ie_description":"d","event_process_and_response":"p","gold_header_events":["h"],"gold_operator_actions":["x"]}"#;

    #[test]
    fn empty_file() {
        assert!(matches!(parse_dataset("\n\n"), Err(DatasetError::Empty)));
        assert_eq!(parse_dataset("").unwrap_err().to_string(), "no cases");
    }

    #[test]
    fn unknown_acronym_names_case() {
        let bad = LINE.replace("\"LOOP\"", "\"XYZ\"");
        let err = parse_dataset(&bad).unwrap_err();
        assert!(err.to_string().contains("case a"), "{err}");
        assert!(err.to_string().contains("XYZ"), "{err}");
    }

    #[test]
    fn missing_field_names_field_and_line() {
        let bad = LINE.replace(r#""ie_description":"d","#, "");
        let err = parse_dataset(&format!("{LINE}\n{}", bad.replace("\"a\"", "\"b\""))).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("line 2"), "{msg}");
        assert!(msg.contains("ie_description"), "{msg}");
    }

    #[test]
    fn duplicate_ids() {
        assert!(parse_dataset(&format!("{LINE}\n{LINE}")).is_err());
    }

    #[test]
    fn table_total() {
        assert_eq!(ACRONYM_COUNTS.iter().map(|t| t.2).sum::<usize>(), 38);
    }

    #[test]
    fn distribution_issues_for_tiny_manifest() {
        let m = parse_dataset(LINE).unwrap();
        let issues = m.distribution_issues();
        assert!(issues.iter().any(|i| i.starts_with("task1")));
        assert!(issues.iter().any(|i| i.starts_with("LOCA")));
    }
}

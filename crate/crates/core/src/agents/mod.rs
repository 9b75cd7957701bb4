//! Prompt assembly and response parsing for the three executor and three
//! validator roles.
//!
//! Executors answer after an `ANSWER:` marker (preceded by `REASON:` when
//! reasons are generated); validators reply `VERDICT: CORRECT|INCORRECT`.

pub mod charters;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::Message;
use crate::memory::MemoryEntry;
use crate::types::{AgentRole, ReasonMode, Task};

pub const ANSWER_MARKER: &str = "ANSWER:";
pub const REASON_MARKER: &str = "REASON:";
pub const VERDICT_MARKER: &str = "VERDICT:";

const SUCCESS_CASE: &str = include_str!("../../templates/success_case.txt");
const FAILURE_CASE: &str = include_str!("../../templates/failure_case.txt");
const SITUATION: &str = include_str!("../../templates/situation.txt");
const EXECUTOR_FORMAT: &str = include_str!("../../templates/executor_format.txt");
const VALIDATOR_CANDIDATE: &str = include_str!("../../templates/validator_candidate.txt");
const VALIDATOR_GOLD: &str = include_str!("../../templates/validator_gold.txt");
const VALIDATOR_FORMAT: &str = include_str!("../../templates/validator_format.txt");

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("role {role} cannot be used here (expected {expected})")]
    RoleMismatch { role: AgentRole, expected: &'static str },
    #[error("{task} query is missing required field `{field}`")]
    MissingField { task: Task, field: &'static str },
    #[error("response has no {0} marker")]
    MissingMarker(&'static str),
    #[error("answer after {ANSWER_MARKER} is empty")]
    EmptyAnswer,
    #[error("unrecognized verdict {0:?}")]
    UnknownVerdict(String),
}

/// Reason settings for one prompt: whether injected cases show their
/// reasons, and whether the model is asked to produce one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReasonModes {
    pub prompt: ReasonMode,
    pub generation: ReasonMode,
}

impl ReasonModes {
    pub fn uniform(mode: ReasonMode) -> Self {
        Self {
            prompt: mode,
            generation: mode,
        }
    }
}

impl From<ReasonMode> for ReasonModes {
    fn from(mode: ReasonMode) -> Self {
        Self::uniform(mode)
    }
}

/// Input of one task, per the task's input contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskQuery {
    pub task: Task,
    pub initiating_event: String,
    pub ie_description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subevents: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_process_and_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header_events: Option<String>,
}

impl TaskQuery {
    pub fn check(&self) -> Result<(), AgentError> {
        let missing = |field| AgentError::MissingField { task: self.task, field };
        let present = |v: &Option<String>| v.as_deref().is_some_and(|s| !s.trim().is_empty());
        if self.initiating_event.trim().is_empty() {
            return Err(missing("initiating_event"));
        }
        if self.ie_description.trim().is_empty() {
            return Err(missing("ie_description"));
        }
        if self.task >= Task::Task2 {
            if !present(&self.subevents) {
                return Err(missing("subevents"));
            }
            if !present(&self.event_process_and_response) {
                return Err(missing("event_process_and_response"));
            }
        }
        if self.task == Task::Task3 && !present(&self.header_events) {
            return Err(missing("header_events"));
        }
        Ok(())
    }

    /// The fields this task consumes, as plain text. Also the memory key.
    pub fn situation_text(&self) -> String {
        let mut out = format!(
            "Initiating event: {}\nInitiating event description: {}",
            self.initiating_event.trim(),
            self.ie_description.trim()
        );
        let mut block = |label: &str, value: &Option<String>| {
            if let Some(v) = value {
                out.push_str(&format!("\n{label}:\n{}", v.trim()));
            }
        };
        if self.task >= Task::Task2 {
            block("Subevents", &self.subevents);
            block("Event process and system response", &self.event_process_and_response);
        }
        if self.task == Task::Task3 {
            block("Header events", &self.header_events);
        }
        out
    }
}

/// How the executor's system message is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutorStyle {
    /// Bare task description.
    Bare,
    /// Bare task description plus step-by-step guidance.
    StepByStep,
    /// The full role charter.
    Charter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub role: AgentRole,
    pub messages: Vec<Message>,
    /// Ids of the injected record-library entries.
    pub injected_success: Vec<String>,
    /// Ids of the injected experience-base entries.
    pub injected_failure: Vec<String>,
    pub reason_mode: ReasonModes,
}

impl PromptBundle {
    /// Human-readable dump used by golden files and transcripts.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            let role = serde_json::to_value(m.role).expect("role serializes");
            out.push_str(&format!("=== {} ===\n{}\n", role.as_str().unwrap_or("?"), m.content));
        }
        out
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.messages.iter().any(|m| m.content.contains(needle))
    }
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    debug_assert!(!out.contains("{{"), "unfilled placeholder in {out:?}");
    out.trim_end().to_string()
}

fn case_block(template: &str, entry: &MemoryEntry, show_reason: bool, reason_label: &str) -> String {
    let reason = match (&entry.reason, show_reason) {
        (Some(r), true) if !r.trim().is_empty() => format!("### {reason_label}\n{}", r.trim()),
        _ => String::new(),
    };
    fill(
        template,
        &[
            ("question", entry.question.trim()),
            ("answer", entry.answer.trim()),
            ("reason", &reason),
        ],
    )
}

fn executor_format(task: Task, generation: ReasonMode) -> String {
    let reason_instruction = if generation.enabled() {
        format!("Before the answer, write the marker {REASON_MARKER} followed by a brief rationale.\n")
    } else {
        String::new()
    };
    fill(
        EXECUTOR_FORMAT,
        &[
            ("layout", charters::answer_layout(task)),
            ("reason_instruction", &reason_instruction),
        ],
    )
}

fn situation(query: &TaskQuery) -> String {
    fill(SITUATION, &[("fields", &query.situation_text())])
}

/// Executor prompt with the full role charter.
pub fn build_executor_prompt(
    role: AgentRole,
    query: &TaskQuery,
    success: &[MemoryEntry],
    failure: &[MemoryEntry],
    reason_mode: impl Into<ReasonModes>,
) -> Result<PromptBundle, AgentError> {
    build_executor_prompt_styled(ExecutorStyle::Charter, role, query, success, failure, reason_mode)
}

pub fn build_executor_prompt_styled(
    style: ExecutorStyle,
    role: AgentRole,
    query: &TaskQuery,
    success: &[MemoryEntry],
    failure: &[MemoryEntry],
    reason_mode: impl Into<ReasonModes>,
) -> Result<PromptBundle, AgentError> {
    let modes = reason_mode.into();
    if !role.is_executor() {
        return Err(AgentError::RoleMismatch { role, expected: "an executor" });
    }
    if role.task() != query.task {
        return Err(AgentError::RoleMismatch {
            role,
            expected: "the executor of the query's task",
        });
    }
    query.check()?;
    let task = query.task;
    let system = match style {
        ExecutorStyle::Bare => charters::bare_task(task).to_string(),
        ExecutorStyle::StepByStep => format!("{}\n{}", charters::bare_task(task), charters::STEP_BY_STEP),
        ExecutorStyle::Charter => charters::charter(role).to_string(),
    };
    let show_reasons = modes.prompt.enabled();
    let mut sections = Vec::new();
    for entry in success {
        sections.push(case_block(SUCCESS_CASE, entry, show_reasons, "Reason"));
    }
    for entry in failure {
        sections.push(case_block(FAILURE_CASE, entry, show_reasons, "Feedback"));
    }
    sections.push(situation(query));
    sections.push(executor_format(task, modes.generation));
    Ok(PromptBundle {
        role,
        messages: vec![Message::system(system), Message::user(sections.join("\n\n"))],
        injected_success: success.iter().map(|e| e.id.clone()).collect(),
        injected_failure: failure.iter().map(|e| e.id.clone()).collect(),
        reason_mode: modes,
    })
}

fn validator_scope(task: Task, has_gold: bool) -> &'static str {
    match (task, has_gold) {
        (_, false) => "Judge the candidate answer on its own merits.",
        (Task::Task1, true) => "The candidate is correct when it lists the same subevents as the reference answer.",
        (Task::Task2, true) => {
            "The candidate is correct when it lists the same header events as the reference answer, in the same order."
        }
        (Task::Task3, true) => "The candidate is correct when its first action matches the first action of the reference answer.",
    }
}

/// Validator prompt; `gold` is the reference answer in training mode.
pub fn build_validator_prompt(
    role: AgentRole,
    query: &TaskQuery,
    candidate_answer: &str,
    gold: Option<&str>,
    reason_mode: ReasonMode,
) -> Result<PromptBundle, AgentError> {
    if role.is_executor() {
        return Err(AgentError::RoleMismatch { role, expected: "a validator" });
    }
    if role.task() != query.task {
        return Err(AgentError::RoleMismatch {
            role,
            expected: "the validator of the query's task",
        });
    }
    query.check()?;
    let mut sections = vec![
        situation(query),
        fill(VALIDATOR_CANDIDATE, &[("candidate", candidate_answer.trim())]),
    ];
    if let Some(g) = gold {
        sections.push(fill(VALIDATOR_GOLD, &[("gold", g.trim())]));
    }
    let reason_instruction = if reason_mode.enabled() {
        format!("On the next line write {REASON_MARKER} followed by the reason for your verdict.")
    } else {
        String::new()
    };
    sections.push(fill(
        VALIDATOR_FORMAT,
        &[
            ("scope", validator_scope(query.task, gold.is_some())),
            ("reason_instruction", &reason_instruction),
        ],
    ));
    Ok(PromptBundle {
        role,
        messages: vec![
            Message::system(charters::charter(role)),
            Message::user(sections.join("\n\n")),
        ],
        injected_success: Vec::new(),
        injected_failure: Vec::new(),
        reason_mode: ReasonModes::uniform(reason_mode),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub answer: String,
    pub reason: Option<String>,
}

/// Text following `marker`, up to the start of `stop` if it comes later.
fn segment<'a>(content: &'a str, marker: &str, stop: &str) -> Option<&'a str> {
    let start = content.find(marker)? + marker.len();
    let rest = &content[start..];
    let end = rest.find(stop).unwrap_or(rest.len());
    Some(rest[..end].trim())
}

pub fn parse_answer(content: &str, reason_mode: ReasonMode) -> Result<ParsedAnswer, AgentError> {
    let answer = segment(content, ANSWER_MARKER, REASON_MARKER).ok_or(AgentError::MissingMarker(ANSWER_MARKER))?;
    if answer.is_empty() {
        return Err(AgentError::EmptyAnswer);
    }
    let reason = if reason_mode.enabled() {
        segment(content, REASON_MARKER, ANSWER_MARKER)
            .filter(|r| !r.is_empty())
            .map(str::to_string)
    } else {
        None
    };
    Ok(ParsedAnswer {
        answer: answer.to_string(),
        reason,
    })
}

/// Inverse of [`parse_answer`] for marker-free payloads.
pub fn render_answer(answer: &str, reason: Option<&str>) -> String {
    match reason {
        Some(r) => format!("{REASON_MARKER} {r}\n{ANSWER_MARKER} {answer}"),
        None => format!("{ANSWER_MARKER} {answer}"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorVerdict {
    pub correct: bool,
    pub reason: Option<String>,
}

pub fn parse_verdict(content: &str, reason_mode: ReasonMode) -> Result<ValidatorVerdict, AgentError> {
    let after = segment(content, VERDICT_MARKER, REASON_MARKER).ok_or(AgentError::MissingMarker(VERDICT_MARKER))?;
    let token: String = after
        .chars()
        .skip_while(|c| !c.is_alphabetic())
        .take_while(|c| c.is_alphabetic())
        .collect();
    let correct = match token.to_ascii_uppercase().as_str() {
        "CORRECT" => true,
        "INCORRECT" => false,
        _ => return Err(AgentError::UnknownVerdict(token)),
    };
    let reason = if reason_mode.enabled() {
        segment(content, REASON_MARKER, VERDICT_MARKER)
            .filter(|r| !r.is_empty())
            .map(str::to_string)
    } else {
        None
    };
    Ok(ValidatorVerdict { correct, reason })
}

pub fn render_verdict(correct: bool, reason: Option<&str>) -> String {
    let word = if correct { "CORRECT" } else { "INCORRECT" };
    match reason {
        Some(r) => format!("{VERDICT_MARKER} {word}\n{REASON_MARKER} {r}"),
        None => format!("{VERDICT_MARKER} {word}"),
    }
}

/// Numbered list, one item per line.
pub fn render_items<S: AsRef<str>>(items: &[S]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.as_ref().trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::HashEmbedder;
    use crate::memory::{MemoryStore, StoreKind};
    use proptest::prelude::*;

    fn q1() -> TaskQuery {
        TaskQuery {
            task: Task::Task1,
            initiating_event: "Loss of Offsite Power".into(),
            ie_description: "All offsite AC power is lost.".into(),
            subevents: None,
            event_process_and_response: None,
            header_events: None,
        }
    }

    fn q2() -> TaskQuery {
        TaskQuery {
            task: Task::Task2,
            subevents: Some("1. Grid fault".into()),
            event_process_and_response: Some("Diesels start.".into()),
            ..q1()
        }
    }

    fn entry(kind: StoreKind, reason: Option<&str>) -> MemoryEntry {
        let mut s = MemoryStore::new(kind, Task::Task2);
        s.add_entry("Q", "A", reason, &HashEmbedder::default()).unwrap().clone()
    }

    #[test]
    fn zero_shot_executor_prompt() {
        let b = build_executor_prompt(AgentRole::SubeventExecutor, &q1(), &[], &[], ReasonMode::WithoutReasons).unwrap();
        assert_eq!(b.messages[0].role, crate::gateway::MessageRole::System);
        assert!(b.messages[0].content.contains(charters::charter_phrase(AgentRole::SubeventExecutor)));
        let user = &b.messages[1].content;
        assert!(user.starts_with("## Situation"));
        assert!(user.contains("Loss of Offsite Power"));
        assert!(user.contains(ANSWER_MARKER));
        assert!(!b.contains(REASON_MARKER));
        assert!(!b.contains("## Correct case") && !b.contains("## Incorrect case"));
    }

    #[test]
    fn success_precedes_failure() {
        let s = entry(StoreKind::RecordLibrary, Some("why"));
        let f = entry(StoreKind::ExperienceBase, Some("missed diesel"));
        let b = build_executor_prompt(AgentRole::HeaderExecutor, &q2(), std::slice::from_ref(&s), std::slice::from_ref(&f), ReasonMode::WithReasons).unwrap();
        let user = &b.messages[1].content;
        let si = user.find("## Correct case").unwrap();
        let fi = user.find("## Incorrect case").unwrap();
        assert!(si < fi);
        assert!(user.contains(charters::SUCCESS_PHRASE));
        assert!(user.contains(charters::FAILURE_PHRASE));
        assert!(user.contains("missed diesel"));
        assert_eq!(b.injected_success, vec![s.id.clone()]);
        assert_eq!(b.injected_failure, vec![f.id.clone()]);
    }

    #[test]
    fn prompt_mode_hides_stored_reasons() {
        let s = entry(StoreKind::RecordLibrary, Some("secret rationale"));
        let modes = ReasonModes {
            prompt: ReasonMode::WithoutReasons,
            generation: ReasonMode::WithReasons,
        };
        let b = build_executor_prompt(AgentRole::HeaderExecutor, &q2(), &[s], &[], modes).unwrap();
        assert!(!b.contains("secret rationale"));
        assert!(b.contains(REASON_MARKER));
    }

    #[test]
    fn role_and_field_errors() {
        assert!(matches!(
            build_executor_prompt(AgentRole::SubeventValidator, &q1(), &[], &[], ReasonMode::WithReasons),
            Err(AgentError::RoleMismatch { .. })
        ));
        assert!(matches!(
            build_executor_prompt(AgentRole::HeaderExecutor, &q1(), &[], &[], ReasonMode::WithReasons),
            Err(AgentError::RoleMismatch { .. })
        ));
        let mut q = q2();
        q.subevents = None;
        assert_eq!(
            build_executor_prompt(AgentRole::HeaderExecutor, &q, &[], &[], ReasonMode::WithReasons),
            Err(AgentError::MissingField {
                task: Task::Task2,
                field: "subevents"
            })
        );
    }

    #[test]
    fn validator_prompt_sections() {
        let with_gold =
            build_validator_prompt(AgentRole::SubeventValidator, &q1(), "1. a", Some("1. b"), ReasonMode::WithReasons).unwrap();
        assert!(with_gold.contains("## Reference answer"));
        assert!(with_gold.contains("1. b"));
        assert!(with_gold.contains(REASON_MARKER));
        assert!(with_gold.contains("VERDICT: CORRECT"));
        let no_reason = build_validator_prompt(AgentRole::SubeventValidator, &q1(), "1. a", None, ReasonMode::WithoutReasons).unwrap();
        assert!(!no_reason.contains("## Reference answer"));
        assert!(!no_reason.contains(REASON_MARKER));
        assert!(build_validator_prompt(AgentRole::SubeventExecutor, &q1(), "a", None, ReasonMode::WithReasons).is_err());
    }

    #[test]
    fn answer_parsing() {
        assert_eq!(
            parse_answer("ANSWER: close MSIV", ReasonMode::WithoutReasons).unwrap(),
            ParsedAnswer {
                answer: "close MSIV".into(),
                reason: None
            }
        );
        assert_eq!(
            parse_answer("REASON: r\nANSWER: a", ReasonMode::WithReasons).unwrap(),
            ParsedAnswer {
                answer: "a".into(),
                reason: Some("r".into())
            }
        );
        assert_eq!(
            parse_answer("REASON: r\nANSWER: a", ReasonMode::WithoutReasons).unwrap().reason,
            None
        );
        let text = "close the valve";
        assert!(!text.contains(ANSWER_MARKER));
        assert_eq!(parse_answer(text, ReasonMode::WithReasons), Err(AgentError::MissingMarker(ANSWER_MARKER)));
        assert_eq!(parse_answer("ANSWER:   ", ReasonMode::WithReasons), Err(AgentError::EmptyAnswer));
    }

    #[test]
    fn verdict_parsing() {
        assert!(parse_verdict("VERDICT: CORRECT", ReasonMode::WithoutReasons).unwrap().correct);
        assert_eq!(
            parse_verdict("VERDICT: INCORRECT\nREASON: missing step 2", ReasonMode::WithReasons).unwrap(),
            ValidatorVerdict {
                correct: false,
                reason: Some("missing step 2".into())
            }
        );
        let text = "maybe fine";
        assert!(!text.contains(VERDICT_MARKER));
        assert!(parse_verdict(text, ReasonMode::WithReasons).is_err());
        assert!(matches!(
            parse_verdict("VERDICT: perhaps", ReasonMode::WithReasons),
            Err(AgentError::UnknownVerdict(_))
        ));
    }

    fn payload() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9][a-zA-Z0-9 .,;()\n-]{0,40}[a-zA-Z0-9.]"
            .prop_filter("no markers", |s| !s.contains(ANSWER_MARKER) && !s.contains(REASON_MARKER))
    }

    proptest! {
        #[test]
        fn answer_roundtrip(answer in payload(), reason in proptest::option::of(payload())) {
            let text = render_answer(&answer, reason.as_deref());
            let parsed = parse_answer(&text, ReasonMode::WithReasons).unwrap();
            prop_assert_eq!(parsed.answer, answer.trim());
            prop_assert_eq!(parsed.reason.as_deref(), reason.as_deref().map(str::trim));
            let bare = parse_answer(&text, ReasonMode::WithoutReasons).unwrap();
            prop_assert!(bare.reason.is_none());
        }

        #[test]
        fn verdict_roundtrip(correct in any::<bool>(), reason in proptest::option::of(payload())) {
            let v = parse_verdict(&render_verdict(correct, reason.as_deref()), ReasonMode::WithReasons).unwrap();
            prop_assert_eq!(v.correct, correct);
            prop_assert_eq!(v.reason.as_deref(), reason.as_deref().map(str::trim));
        }
    }
}

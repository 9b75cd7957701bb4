//! Deterministic replay backend driven by a JSONL script.
//!
//! Each line is `{"match": {...}, "response": "...", "finish_reason": "completed"}`.
//! Match keys (`task`, `role`, `attempt`, `case`, `strategy`, `reason`) are
//! all optional; an absent key matches anything. A call consumes the first
//! unconsumed entry, in file order, whose keys all agree with the request's
//! [`CallTag`]. Entries with `"repeat": true` are never consumed.

use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{CallTag, ChatBackend, ChatRequest, ChatResponse, FinishReason, GatewayError, Usage};
use crate::types::{AgentRole, ReasonMode, StrategyKind, Task};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<AgentRole>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<ReasonMode>,
}

fn agrees<T: PartialEq>(want: &Option<T>, got: &Option<T>) -> bool {
    match want {
        None => true,
        Some(w) => got.as_ref() == Some(w),
    }
}

impl ScriptMatch {
    pub fn matches(&self, tag: &CallTag) -> bool {
        agrees(&self.task, &tag.task)
            && agrees(&self.role, &tag.role)
            && agrees(&self.attempt, &tag.attempt)
            && agrees(&self.case, &tag.case)
            && agrees(&self.strategy, &tag.strategy)
            && agrees(&self.reason, &tag.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match", default)]
    pub matcher: ScriptMatch,
    pub response: String,
    #[serde(default)]
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeat: bool,
}

impl ScriptEntry {
    pub fn new(matcher: ScriptMatch, response: impl Into<String>) -> Self {
        Self {
            matcher,
            response: response.into(),
            finish_reason: FinishReason::Completed,
            repeat: false,
        }
    }

    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }
}

#[derive(Debug)]
struct Cursor {
    consumed: Vec<bool>,
    calls: u64,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    id: String,
    entries: Arc<Vec<ScriptEntry>>,
    cursor: Mutex<Cursor>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let n = entries.len();
        Self {
            id: "scripted".to_string(),
            entries: Arc::new(entries),
            cursor: Mutex::new(Cursor {
                consumed: vec![false; n],
                calls: 0,
            }),
        }
    }

    /// Unconditional responses, returned in order.
    pub fn from_responses<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(
            responses
                .into_iter()
                .map(|r| ScriptEntry::new(ScriptMatch::default(), r))
                .collect(),
        )
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, GatewayError> {
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(line).map_err(|e| GatewayError::ScriptFormat {
                line: idx + 1,
                message: e.to_string(),
            })?;
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Self::parse_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn to_jsonl(entries: &[ScriptEntry]) -> String {
        let mut out = String::new();
        for e in entries {
            out.push_str(&serde_json::to_string(e).expect("script entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn calls(&self) -> u64 {
        self.cursor.lock().expect("script cursor poisoned").calls
    }

    /// Non-repeating entries not yet consumed.
    pub fn remaining(&self) -> usize {
        let cursor = self.cursor.lock().expect("script cursor poisoned");
        self.entries
            .iter()
            .zip(&cursor.consumed)
            .filter(|(e, used)| !e.repeat && !**used)
            .count()
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.check()?;
        let mut cursor = self.cursor.lock().expect("script cursor poisoned");
        cursor.calls += 1;
        let hit = self
            .entries
            .iter()
            .enumerate()
            .find(|(i, e)| (e.repeat || !cursor.consumed[*i]) && e.matcher.matches(&request.tag));
        let Some((idx, entry)) = hit else {
            return Err(GatewayError::ScriptExhausted(request.tag.to_string()));
        };
        if !entry.repeat {
            cursor.consumed[idx] = true;
        }
        Ok(ChatResponse {
            content: entry.response.clone(),
            finish_reason: entry.finish_reason,
            usage: Usage::default(),
        })
    }

    fn fork(&self) -> Box<dyn ChatBackend> {
        let cursor = self.cursor.lock().expect("script cursor poisoned");
        Box::new(ScriptedBackend {
            id: self.id.clone(),
            entries: Arc::clone(&self.entries),
            cursor: Mutex::new(Cursor {
                consumed: cursor.consumed.clone(),
                calls: 0,
            }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Message;

    fn req(tag: CallTag) -> ChatRequest {
        ChatRequest::new(vec![Message::user("hello")], "m").with_tag(tag)
    }

    #[test]
    fn single_response() {
        let b = ScriptedBackend::from_responses(["A"]);
        let r = b.complete(&req(CallTag::default())).unwrap();
        assert_eq!(r.content, "A");
        assert_eq!(r.finish_reason, FinishReason::Completed);
        assert!(matches!(b.complete(&req(CallTag::default())), Err(GatewayError::ScriptExhausted(_))));
    }

    #[test]
    fn replay_follows_file_order() {
        let text = "{\"response\":\"A\"}\n{\"response\":\"B\"}\n";
        let b = ScriptedBackend::parse_jsonl(text).unwrap();
        let order: Vec<String> = text
            .lines()
            .map(|l| serde_json::from_str::<ScriptEntry>(l).unwrap().response)
            .collect();
        let got: Vec<String> = (0..2).map(|_| b.complete(&req(CallTag::default())).unwrap().content).collect();
        assert_eq!(got, order);
    }

    #[test]
    fn matching_on_tag() {
        let text = r#"{"match":{"task":"task2","role":"header_validator","attempt":1},"response":"VERDICT: INCORRECT"}
{"match":{"task":"task2","role":"header_executor","attempt":1},"response":"ANSWER: x","finish_reason":"truncated"}
{"match":{"case":"c9"},"response":"fallback","repeat":true}"#;
        let b = ScriptedBackend::parse_jsonl(text).unwrap();
        let exec = CallTag {
            task: Some(Task::Task2),
            role: Some(AgentRole::HeaderExecutor),
            attempt: Some(1),
            ..Default::default()
        };
        let r = b.complete(&req(exec.clone())).unwrap();
        assert_eq!(r.finish_reason, FinishReason::Truncated);
        assert!(b.complete(&req(exec)).is_err());
        let other = CallTag {
            case: Some("c9".into()),
            ..Default::default()
        };
        assert_eq!(b.complete(&req(other.clone())).unwrap().content, "fallback");
        assert_eq!(b.complete(&req(other)).unwrap().content, "fallback");
        assert_eq!(b.remaining(), 1);
    }

    #[test]
    fn bad_line_reports_number() {
        let err = ScriptedBackend::parse_jsonl("{\"response\":\"A\"}\n{oops\n").unwrap_err();
        assert!(matches!(err, GatewayError::ScriptFormat { line: 2, .. }));
    }

    #[test]
    fn fork_is_independent() {
        let b = ScriptedBackend::from_responses(["A", "B"]);
        b.complete(&req(CallTag::default())).unwrap();
        let f = b.fork();
        assert_eq!(f.complete(&req(CallTag::default())).unwrap().content, "B");
        assert_eq!(b.complete(&req(CallTag::default())).unwrap().content, "B");
    }
}

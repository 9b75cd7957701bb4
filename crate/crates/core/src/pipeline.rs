//! The executor/validator loop and the task chain.
//!
//! Training: retrieve examples, ask the executor, ask the validator (which
//! sees the gold answer). An accepted answer goes to the task's record
//! library and ends the loop; a rejected one goes to the experience base and
//! the loop retries with a fresh retrieval, up to `max_retries` attempts.
//!
//! Inference: one retrieval and one executor call per task, stores read-only.
//! The chain feeds task1's answer into task2 and both into task3.

use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    self, build_executor_prompt_styled, build_validator_prompt, parse_answer, parse_verdict, render_items,
    AgentError, ExecutorStyle, ParsedAnswer, PromptBundle, ReasonModes, TaskQuery, ValidatorVerdict, ANSWER_MARKER,
    VERDICT_MARKER,
};
use crate::gateway::{complete_checked, CallTag, ChatBackend, ChatRequest, ChatResponse, Embedder, GatewayError};
use crate::memory::{gate_experience, MemoryBank, MemoryEntry, MemoryError, StoreKind, DEFAULT_K, DEFAULT_TAU};
use crate::types::{AgentRole, ReasonMode, StrategyKind, Task};

pub const DEFAULT_MAX_RETRIES: u32 = 10;
pub const DEFAULT_TRUNCATION_RETRIES: usize = 2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("case {case} is not a {task} training case")]
    NotTrainCase { case: String, task: Task },
    #[error("invalid run configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[default]
    Test,
}

/// One dataset record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidentCase {
    pub case_id: String,
    pub initiating_event: String,
    pub acronym: String,
    pub ie_description: String,
    pub event_process_and_response: String,
    #[serde(default)]
    pub gold_subevents: Vec<String>,
    /// Ordered by how the accident develops.
    #[serde(default)]
    pub gold_header_events: Vec<String>,
    /// Ordered by execution.
    #[serde(default)]
    pub gold_operator_actions: Vec<String>,
    /// Split for task2 and task3.
    #[serde(default)]
    pub split: Split,
    /// Split for task1; absent when the case is not part of the task1 set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task1_split: Option<Split>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthetic: bool,
}

impl IncidentCase {
    pub fn split_for(&self, task: Task) -> Option<Split> {
        match task {
            Task::Task1 => self.task1_split,
            Task::Task2 | Task::Task3 => Some(self.split),
        }
    }

    pub fn gold_items(&self, task: Task) -> &[String] {
        match task {
            Task::Task1 => &self.gold_subevents,
            Task::Task2 => &self.gold_header_events,
            Task::Task3 => &self.gold_operator_actions,
        }
    }

    pub fn gold_text(&self, task: Task) -> String {
        render_items(self.gold_items(task))
    }

    /// Query for `task` with the given upstream outputs.
    pub fn query(&self, task: Task, subevents: Option<&str>, header_events: Option<&str>) -> TaskQuery {
        let needs_upstream = task >= Task::Task2;
        TaskQuery {
            task,
            initiating_event: self.initiating_event.clone(),
            ie_description: self.ie_description.clone(),
            subevents: subevents.filter(|_| needs_upstream).map(str::to_string),
            event_process_and_response: needs_upstream.then(|| self.event_process_and_response.clone()),
            header_events: header_events.filter(|_| task == Task::Task3).map(str::to_string),
        }
    }

    /// Query whose upstream inputs are the gold answers (teacher forcing).
    pub fn gold_query(&self, task: Task) -> TaskQuery {
        let subevents = self.gold_text(Task::Task1);
        let headers = self.gold_text(Task::Task2);
        self.query(task, Some(&subevents), Some(&headers))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub strategy: StrategyKind,
    /// Whether injected cases show their reasons, per task.
    pub reason_prompt: [ReasonMode; 3],
    /// Whether executors and validators generate reasons, per task.
    pub reason_gen: [ReasonMode; 3],
    pub k: usize,
    pub tau: f64,
    pub max_retries: u32,
    pub truncation_retries: usize,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Shuffle training cases with this seed; manifest order when absent.
    pub shuffle_seed: Option<u64>,
}

impl Default for RunConfig {
    /// Reasons shown in prompts for every task; generated only for task3.
    fn default() -> Self {
        use ReasonMode::{WithReasons as W, WithoutReasons as Wo};
        Self {
            strategy: StrategyKind::EvoTaskTree,
            reason_prompt: [W, W, W],
            reason_gen: [Wo, Wo, W],
            k: DEFAULT_K,
            tau: DEFAULT_TAU,
            max_retries: DEFAULT_MAX_RETRIES,
            truncation_retries: DEFAULT_TRUNCATION_RETRIES,
            model_id: "gpt-4o".to_string(),
            temperature: 0.0,
            max_tokens: 2048,
            shuffle_seed: None,
        }
    }
}

impl RunConfig {
    pub fn with_strategy(mut self, strategy: StrategyKind) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_reasons(mut self, prompt: ReasonMode, generation: ReasonMode) -> Self {
        self.reason_prompt = [prompt; 3];
        self.reason_gen = [generation; 3];
        self
    }

    pub fn modes(&self, task: Task) -> ReasonModes {
        let i = usize::from(task.number() - 1);
        ReasonModes {
            prompt: self.reason_prompt[i],
            generation: self.reason_gen[i],
        }
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        if self.k == 0 {
            return Err(PipelineError::Config("k must be at least 1".into()));
        }
        if self.max_retries == 0 {
            return Err(PipelineError::Config("max_retries must be at least 1".into()));
        }
        if !(-1.0..=1.0).contains(&self.tau) {
            return Err(PipelineError::Config(format!("tau {} outside [-1, 1]", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    #[serde(flatten)]
    pub tag: CallTag,
    pub messages: Vec<crate::gateway::Message>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<ChatResponse>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Every prompt and response of a run, in call order.
#[derive(Debug, Default)]
pub struct Transcript {
    records: Mutex<Vec<TranscriptRecord>>,
}

impl Transcript {
    pub fn push(&self, record: TranscriptRecord) {
        self.records.lock().expect("transcript poisoned").push(record);
    }

    pub fn extend(&self, records: Vec<TranscriptRecord>) {
        self.records.lock().expect("transcript poisoned").extend(records);
    }

    pub fn take(&self) -> Vec<TranscriptRecord> {
        std::mem::take(&mut *self.records.lock().expect("transcript poisoned"))
    }

    pub fn records(&self) -> Vec<TranscriptRecord> {
        self.records.lock().expect("transcript poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("transcript poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.records.lock().expect("transcript poisoned").iter() {
            out.push_str(&serde_json::to_string(r).expect("transcript serializes"));
            out.push('\n');
        }
        out
    }
}

/// Chat backend, embedder and transcript used by one worker.
pub struct Backends {
    pub chat: Box<dyn ChatBackend>,
    pub embedder: Arc<dyn Embedder>,
    pub transcript: Arc<Transcript>,
}

impl Backends {
    pub fn new(chat: Box<dyn ChatBackend>, embedder: Arc<dyn Embedder>) -> Self {
        Self {
            chat,
            embedder,
            transcript: Arc::new(Transcript::default()),
        }
    }

    /// Independent worker handle with its own transcript.
    pub fn fork(&self) -> Backends {
        Backends {
            chat: self.chat.fork(),
            embedder: Arc::clone(&self.embedder),
            transcript: Arc::new(Transcript::default()),
        }
    }
}

fn call(
    backends: &Backends,
    config: &RunConfig,
    bundle: &PromptBundle,
    tag: CallTag,
    marker: &str,
) -> Result<ChatResponse, GatewayError> {
    let mut request = ChatRequest::new(bundle.messages.clone(), config.model_id.clone()).with_tag(tag);
    request.temperature = config.temperature;
    request.max_tokens = config.max_tokens;
    let result = complete_checked(backends.chat.as_ref(), &request, marker, config.truncation_retries);
    backends.transcript.push(TranscriptRecord {
        tag: request.tag.clone(),
        messages: request.messages,
        response: result.as_ref().ok().cloned(),
        error: result.as_ref().err().map(ToString::to_string),
    });
    result
}

/// What a strategy puts into an executor prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyInputs {
    pub style: ExecutorStyle,
    pub success: Vec<MemoryEntry>,
    pub failure: Vec<MemoryEntry>,
}

/// Resolve the prompt inputs of `strategy` for `query`. Baselines never
/// touch the memory bank.
pub fn apply_strategy(
    strategy: StrategyKind,
    query: &TaskQuery,
    bank: &MemoryBank,
    k: usize,
    tau: f64,
    embedder: &dyn Embedder,
) -> Result<StrategyInputs, PipelineError> {
    let style = match strategy {
        StrategyKind::Vanilla => ExecutorStyle::Bare,
        StrategyKind::CoT => ExecutorStyle::StepByStep,
        _ => ExecutorStyle::Charter,
    };
    let mut inputs = StrategyInputs {
        style,
        success: Vec::new(),
        failure: Vec::new(),
    };
    if !strategy.uses_memory() {
        return Ok(inputs);
    }
    let question = query.situation_text();
    if strategy.uses_records() {
        inputs.success = bank
            .retrieve(query.task, StoreKind::RecordLibrary, &question, k, embedder)?
            .into_iter()
            .map(|r| r.entry)
            .collect();
    }
    if strategy.uses_experience() {
        inputs.failure = bank
            .retrieve(query.task, StoreKind::ExperienceBase, &question, k, embedder)?
            .into_iter()
            .filter(|r| gate_experience(r, tau))
            .map(|r| r.entry)
            .collect();
    }
    Ok(inputs)
}

pub fn build_strategy_prompt(
    strategy: StrategyKind,
    query: &TaskQuery,
    bank: &MemoryBank,
    config: &RunConfig,
    embedder: &dyn Embedder,
) -> Result<PromptBundle, PipelineError> {
    let inputs = apply_strategy(strategy, query, bank, config.k, config.tau, embedder)?;
    Ok(build_executor_prompt_styled(
        inputs.style,
        query.task.executor(),
        query,
        &inputs.success,
        &inputs.failure,
        config.modes(query.task),
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Accepted,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub answer: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub verdict: ValidatorVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRun {
    pub case_id: String,
    pub task: Task,
    pub attempts: Vec<Attempt>,
    pub final_status: RunStatus,
    pub attempts_used: u32,
}

impl TaskRun {
    pub fn rejections(&self) -> usize {
        self.attempts.iter().filter(|a| !a.verdict.correct).count()
    }
}

fn tag(case: &IncidentCase, task: Task, role: AgentRole, attempt: u32, config: &RunConfig) -> CallTag {
    CallTag {
        case: Some(case.case_id.clone()),
        task: Some(task),
        role: Some(role),
        attempt: Some(attempt),
        strategy: Some(config.strategy),
        reason: Some(config.modes(task).generation),
    }
}

/// Ask `task`'s validator to judge `answer` against the gold reference.
pub fn run_validator(
    case: &IncidentCase,
    task: Task,
    attempt: u32,
    query: &TaskQuery,
    answer: &str,
    config: &RunConfig,
    backends: &Backends,
) -> Result<ValidatorVerdict, PipelineError> {
    let generation = config.modes(task).generation;
    let gold = case.gold_text(task);
    let bundle = build_validator_prompt(task.validator(), query, answer, Some(&gold), generation)?;
    let mut last_err = None;
    for _ in 0..=config.truncation_retries {
        let response = call(
            backends,
            config,
            &bundle,
            tag(case, task, task.validator(), attempt, config),
            VERDICT_MARKER,
        )?;
        match parse_verdict(&response.content, generation) {
            Ok(v) => return Ok(v),
            Err(err) => {
                log::warn!("case {} {task} attempt {attempt}: {err}; asking the validator again", case.case_id);
                last_err = Some(err);
            }
        }
    }
    Err(last_err.expect("at least one validator call").into())
}

/// One training episode of `task` on `case`.
pub fn run_task_training(
    case: &IncidentCase,
    task: Task,
    config: &RunConfig,
    bank: &mut MemoryBank,
    backends: &Backends,
) -> Result<TaskRun, PipelineError> {
    config.check()?;
    if case.split_for(task) != Some(Split::Train) {
        return Err(PipelineError::NotTrainCase {
            case: case.case_id.clone(),
            task,
        });
    }
    let query = case.gold_query(task);
    let question = query.situation_text();
    let modes = config.modes(task);
    let embedder = backends.embedder.as_ref();
    let mut run = TaskRun {
        case_id: case.case_id.clone(),
        task,
        attempts: Vec::new(),
        final_status: RunStatus::Exhausted,
        attempts_used: 0,
    };
    for attempt in 1..=config.max_retries {
        let bundle = build_strategy_prompt(config.strategy, &query, bank, config, embedder)?;
        let response = call(
            backends,
            config,
            &bundle,
            tag(case, task, task.executor(), attempt, config),
            ANSWER_MARKER,
        )?;
        let parsed = parse_answer(&response.content, modes.generation)?;
        let verdict = run_validator(case, task, attempt, &query, &parsed.answer, config, backends)?;
        run.attempts_used = attempt;
        if verdict.correct {
            bank.store_mut(task, StoreKind::RecordLibrary)
                .add_entry(&question, &parsed.answer, parsed.reason.as_deref(), embedder)?;
            run.attempts.push(Attempt {
                answer: parsed.answer,
                reason: parsed.reason,
                verdict,
            });
            run.final_status = RunStatus::Accepted;
            return Ok(run);
        }
        bank.store_mut(task, StoreKind::ExperienceBase)
            .add_entry(&question, &parsed.answer, verdict.reason.as_deref(), embedder)?;
        run.attempts.push(Attempt {
            answer: parsed.answer,
            reason: parsed.reason,
            verdict,
        });
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TaskOutcome {
    Answered {
        answer: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    /// The model never produced a parseable answer.
    GenerationFailure { error: String },
    /// An upstream task failed.
    Skipped { upstream: Task },
}

impl TaskOutcome {
    pub fn answer(&self) -> Option<&str> {
        match self {
            TaskOutcome::Answered { answer, .. } => Some(answer),
            _ => None,
        }
    }
}

/// One executor call on `query`, stores read-only.
pub fn run_task_inference(
    case: &IncidentCase,
    query: &TaskQuery,
    config: &RunConfig,
    bank: &MemoryBank,
    backends: &Backends,
) -> Result<TaskOutcome, PipelineError> {
    config.check()?;
    let task = query.task;
    let bundle = build_strategy_prompt(config.strategy, query, bank, config, backends.embedder.as_ref())?;
    let response = call(
        backends,
        config,
        &bundle,
        tag(case, task, task.executor(), 1, config),
        ANSWER_MARKER,
    );
    let response = match response {
        Ok(r) => r,
        Err(GatewayError::Truncated { attempts }) => {
            return Ok(TaskOutcome::GenerationFailure {
                error: format!("truncated after {attempts} attempts"),
            })
        }
        Err(err) => return Err(err.into()),
    };
    Ok(match parse_answer(&response.content, config.modes(task).generation) {
        Ok(ParsedAnswer { answer, reason }) => TaskOutcome::Answered { answer, reason },
        Err(err) => TaskOutcome::GenerationFailure { error: err.to_string() },
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub case_id: String,
    pub subevents: TaskOutcome,
    pub header_events: TaskOutcome,
    pub operator_actions: TaskOutcome,
}

impl ChainOutput {
    /// Plain-text operator report in three sections.
    pub fn render_report(&self, case: &IncidentCase) -> String {
        let section = |title: &str, outcome: &TaskOutcome| {
            let body = match outcome {
                TaskOutcome::Answered { answer, reason } => match reason {
                    Some(r) => format!("{answer}\n\nRationale: {r}"),
                    None => answer.clone(),
                },
                TaskOutcome::GenerationFailure { error } => format!("(generation failed: {error})"),
                TaskOutcome::Skipped { upstream } => format!("(skipped: {upstream} failed)"),
            };
            format!("== {title} ==\n{body}\n")
        };
        format!(
            "Initiating event: {} ({})\n\n{}\n{}\n{}",
            case.initiating_event,
            case.acronym,
            section("Subevents", &self.subevents),
            section("Header events", &self.header_events),
            section("Recommended operator actions", &self.operator_actions),
        )
    }
}

/// task1 → task2 → task3 using generated upstream answers.
pub fn infer_chain(
    case: &IncidentCase,
    config: &RunConfig,
    bank: &MemoryBank,
    backends: &Backends,
) -> Result<ChainOutput, PipelineError> {
    let subevents = run_task_inference(case, &case.query(Task::Task1, None, None), config, bank, backends)?;
    let header_events = match subevents.answer() {
        Some(sub) => run_task_inference(case, &case.query(Task::Task2, Some(sub), None), config, bank, backends)?,
        None => TaskOutcome::Skipped { upstream: Task::Task1 },
    };
    let operator_actions = match (subevents.answer(), header_events.answer()) {
        (Some(sub), Some(headers)) => {
            run_task_inference(case, &case.query(Task::Task3, Some(sub), Some(headers)), config, bank, backends)?
        }
        (None, _) => TaskOutcome::Skipped { upstream: Task::Task1 },
        (Some(_), None) => TaskOutcome::Skipped { upstream: Task::Task2 },
    };
    Ok(ChainOutput {
        case_id: case.case_id.clone(),
        subevents,
        header_events,
        operator_actions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccumulationRow {
    pub sample_index: usize,
    pub task: Task,
    pub record_count: usize,
    pub experience_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccumulationLog {
    pub rows: Vec<AccumulationRow>,
}

impl AccumulationLog {
    pub fn for_task(&self, task: Task) -> impl Iterator<Item = &AccumulationRow> {
        self.rows.iter().filter(move |r| r.task == task)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainFailure {
    pub case_id: String,
    pub task: Task,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub log: AccumulationLog,
    pub runs: Vec<TaskRun>,
    pub failures: Vec<TrainFailure>,
}

/// Train every task in `tasks` over its training cases, task by task.
pub fn train(
    cases: &[IncidentCase],
    tasks: &[Task],
    config: &RunConfig,
    bank: &mut MemoryBank,
    backends: &Backends,
) -> Result<TrainSummary, PipelineError> {
    config.check()?;
    let mut summary = TrainSummary::default();
    for &task in tasks {
        let mut train_cases: Vec<&IncidentCase> = cases
            .iter()
            .filter(|c| c.split_for(task) == Some(Split::Train))
            .collect();
        if let Some(seed) = config.shuffle_seed {
            train_cases.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ u64::from(task.number())));
        }
        for (idx, case) in train_cases.into_iter().enumerate() {
            match run_task_training(case, task, config, bank, backends) {
                Ok(run) => summary.runs.push(run),
                Err(err) => {
                    log::error!("training {task} on {}: {err}", case.case_id);
                    summary.failures.push(TrainFailure {
                        case_id: case.case_id.clone(),
                        task,
                        error: err.to_string(),
                    });
                }
            }
            let (record_count, experience_count) = bank.snapshot_counts(task);
            summary.log.rows.push(AccumulationRow {
                sample_index: idx + 1,
                task,
                record_count,
                experience_count,
            });
        }
    }
    Ok(summary)
}

/// The agents module's list renderer, re-exported for callers that build
/// scripted answers.
pub use agents::render_items as render_answer_items;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{render_answer, render_verdict};
    use crate::gateway::{HashEmbedder, ScriptEntry, ScriptMatch, ScriptedBackend};

    fn case(id: &str) -> IncidentCase {
        IncidentCase {
            case_id: id.into(),
            initiating_event: "Loss of Offsite Power".into(),
            acronym: "LOOP".into(),
            ie_description: format!("Grid disturbance {id} trips all offsite feeders."),
            event_process_and_response: "Reactor trips; diesels start.".into(),
            gold_subevents: vec!["Grid fault".into(), "Switchyard breaker trip".into()],
            gold_header_events: vec!["Reactor trip".into(), "Diesel start".into()],
            gold_operator_actions: vec!["Verify reactor trip".into(), "Start diesels".into()],
            split: Split::Train,
            task1_split: Some(Split::Train),
            synthetic: true,
        }
    }

    fn backends(script: Vec<ScriptEntry>) -> Backends {
        Backends::new(Box::new(ScriptedBackend::new(script)), Arc::new(HashEmbedder::default()))
    }

    fn exec(resp: &str) -> ScriptEntry {
        ScriptEntry::new(
            ScriptMatch {
                role: Some(AgentRole::SubeventExecutor),
                ..Default::default()
            },
            render_answer(resp, None),
        )
    }

    fn verdict(ok: bool) -> ScriptEntry {
        ScriptEntry::new(
            ScriptMatch {
                role: Some(AgentRole::SubeventValidator),
                ..Default::default()
            },
            render_verdict(ok, None),
        )
    }

    #[test]
    fn first_answer_accepted() {
        let b = backends(vec![exec("a"), verdict(true)]);
        let mut bank = MemoryBank::new();
        let run = run_task_training(&case("c1"), Task::Task1, &RunConfig::default(), &mut bank, &b).unwrap();
        assert_eq!(run.final_status, RunStatus::Accepted);
        assert_eq!(run.attempts_used, 1);
        assert_eq!(bank.snapshot_counts(Task::Task1), (1, 0));
        assert_eq!(b.transcript.len(), 2);
    }

    #[test]
    fn reject_reject_accept() {
        let b = backends(vec![exec("x"), verdict(false), exec("y"), verdict(false), exec("z"), verdict(true)]);
        let mut bank = MemoryBank::new();
        let run = run_task_training(&case("c1"), Task::Task1, &RunConfig::default(), &mut bank, &b).unwrap();
        assert_eq!(run.attempts_used, 3);
        assert_eq!(run.rejections(), 2);
        assert_eq!(bank.snapshot_counts(Task::Task1), (1, 2));
        assert_eq!(bank.store(Task::Task1, StoreKind::RecordLibrary).entries()[0].answer, "z");
    }

    #[test]
    fn exhausted_keeps_experience() {
        let mut script = Vec::new();
        for _ in 0..3 {
            script.push(exec("bad"));
            script.push(verdict(false));
        }
        let b = backends(script);
        let mut bank = MemoryBank::new();
        let config = RunConfig {
            max_retries: 3,
            ..RunConfig::default()
        };
        let run = run_task_training(&case("c1"), Task::Task1, &config, &mut bank, &b).unwrap();
        assert_eq!(run.final_status, RunStatus::Exhausted);
        assert_eq!(run.attempts_used, 3);
        assert_eq!(bank.snapshot_counts(Task::Task1), (0, 3));
    }

    #[test]
    fn transport_error_leaves_stores_alone() {
        let b = backends(vec![exec("x"), verdict(false), exec("y")]);
        let mut bank = MemoryBank::new();
        let err = run_task_training(&case("c1"), Task::Task1, &RunConfig::default(), &mut bank, &b).unwrap_err();
        assert!(matches!(err, PipelineError::Gateway(GatewayError::ScriptExhausted(_))));
        assert_eq!(bank.snapshot_counts(Task::Task1), (0, 1));
    }

    #[test]
    fn test_case_rejected_for_training() {
        let mut c = case("c1");
        c.task1_split = Some(Split::Test);
        let b = backends(vec![]);
        let mut bank = MemoryBank::new();
        assert!(matches!(
            run_task_training(&c, Task::Task1, &RunConfig::default(), &mut bank, &b),
            Err(PipelineError::NotTrainCase { .. })
        ));
    }

    #[test]
    fn inference_is_read_only() {
        let b = backends(vec![exec("a")]);
        let bank = MemoryBank::new();
        let before = bank.clone();
        let c = case("c1");
        let out = run_task_inference(&c, &c.query(Task::Task1, None, None), &RunConfig::default(), &bank, &b).unwrap();
        assert_eq!(out.answer(), Some("a"));
        assert_eq!(bank, before);
    }

    #[test]
    fn chain_skips_after_failure() {
        let truncated = ScriptEntry::new(ScriptMatch::default(), "no marker here").repeating();
        let b = backends(vec![truncated]);
        let bank = MemoryBank::new();
        let out = infer_chain(&case("c1"), &RunConfig::default(), &bank, &b).unwrap();
        assert!(matches!(out.subevents, TaskOutcome::GenerationFailure { .. }));
        assert_eq!(out.header_events, TaskOutcome::Skipped { upstream: Task::Task1 });
        assert_eq!(out.operator_actions, TaskOutcome::Skipped { upstream: Task::Task1 });
        // 1 + truncation_retries calls for task1, nothing downstream
        assert_eq!(b.transcript.len(), 1);
    }

    #[test]
    fn train_logs_every_sample() {
        let mut script = Vec::new();
        for _ in 0..4 {
            script.push(exec("a"));
            script.push(verdict(true));
        }
        let cases: Vec<_> = (0..4).map(|i| case(&format!("c{i}"))).collect();
        let b = backends(script);
        let mut bank = MemoryBank::new();
        let summary = train(&cases, &[Task::Task1], &RunConfig::default(), &mut bank, &b).unwrap();
        let counts: Vec<usize> = summary.log.rows.iter().map(|r| r.record_count).collect();
        assert_eq!(counts, vec![1, 2, 3, 4]);
        assert!(summary.failures.is_empty());

        let empty = train(&[], &Task::ALL, &RunConfig::default(), &mut MemoryBank::new(), &b).unwrap();
        assert!(empty.log.rows.is_empty());
    }

    #[test]
    fn config_validation() {
        let bad = RunConfig {
            k: 0,
            ..RunConfig::default()
        };
        assert!(bad.check().is_err());
        let bad = RunConfig {
            max_retries: 0,
            ..RunConfig::default()
        };
        assert!(bad.check().is_err());
    }
}

//! Every fixed English string the agents send to a model lives here.

use crate::types::{AgentRole, Task};

pub const SUBEVENT_EXECUTOR: &str = "You are the initiating event subevent analysis agent of a nuclear power plant emergency support team. \
The agent identifies subevents of initiating events. Examine the detailed description of the initiating event together with any \
correct and incorrect cases provided. When no cases are provided, analyze the subevents of the initiating event directly.";

pub const SUBEVENT_VALIDATOR: &str = "You are the initiating event subevent verification agent of a nuclear power plant emergency support team. \
You check the subevents produced by the analysis agent. Based on the initiating event and its detailed description, decide whether the \
identified subevents match the actual subevents. Judge completeness, relevance and whether any listed item is not a subevent at all.";

pub const HEADER_EXECUTOR: &str = "You are the event tree header event analysis agent of a nuclear power plant emergency support team. \
You specialize in identifying and listing the header events in event trees, in the order in which the accident develops. \
Reference the logic of correct cases and learn from the feedback on incorrect cases to avoid repeated mistakes.";

pub const HEADER_VALIDATOR: &str = "You are the event tree header event verification agent of a nuclear power plant emergency support team. \
You check the header events listed by the header event analysis agent and decide whether they match the actual event progression \
within the plant, including the order of the events.";

pub const STRATEGY_EXECUTOR: &str = "You are the strategy development agent of a nuclear power plant emergency support team. \
You are responsible for determining specific actions that operators should execute, based on the initiating event, its description, \
its subevents, the sequence of header events and examples of correct and incorrect responses. The actions must be detailed, accurate \
and given in execution order.";

pub const STRATEGY_VALIDATOR: &str = "You are the strategy validation agent of a nuclear power plant emergency support team. \
You assess the recommendations given by the strategy development agent and decide whether they align with the actual operator's \
suggestions, with particular attention to the first action.";

/// The phrase each role's system message must contain verbatim.
pub const CHARTER_PHRASES: [(AgentRole, &str); 6] = [
    (AgentRole::SubeventExecutor, "identifies subevents of initiating events"),
    (AgentRole::SubeventValidator, "match the actual subevents"),
    (AgentRole::HeaderExecutor, "identifying and listing the header events"),
    (AgentRole::HeaderValidator, "match the actual event progression"),
    (AgentRole::StrategyExecutor, "determining specific actions that operators should execute"),
    (AgentRole::StrategyValidator, "align with the actual operator's suggestions"),
];

pub const SUCCESS_PHRASE: &str = "the logic applied";
pub const FAILURE_PHRASE: &str = "summarize feedback to prevent recurrence";

pub fn charter(role: AgentRole) -> &'static str {
    match role {
        AgentRole::SubeventExecutor => SUBEVENT_EXECUTOR,
        AgentRole::SubeventValidator => SUBEVENT_VALIDATOR,
        AgentRole::HeaderExecutor => HEADER_EXECUTOR,
        AgentRole::HeaderValidator => HEADER_VALIDATOR,
        AgentRole::StrategyExecutor => STRATEGY_EXECUTOR,
        AgentRole::StrategyValidator => STRATEGY_VALIDATOR,
    }
}

pub fn charter_phrase(role: AgentRole) -> &'static str {
    CHARTER_PHRASES
        .iter()
        .find(|(r, _)| *r == role)
        .map(|(_, p)| *p)
        .expect("every role has a charter phrase")
}

/// Bare task descriptions used by the Vanilla and CoT baselines.
pub fn bare_task(task: Task) -> &'static str {
    match task {
        Task::Task1 => "Task: list the subevents of the initiating event described below.",
        Task::Task2 => "Task: list the event tree header events for the accident described below.",
        Task::Task3 => "Task: recommend the actions the plant operators should take for the accident described below.",
    }
}

pub const STEP_BY_STEP: &str = "Think step by step. First restate what happened and which plant systems are affected. \
Then work through how the accident develops, one stage at a time. Only then write the final list.";

/// Per-task instruction on how to lay out the answer items.
pub fn answer_layout(task: Task) -> &'static str {
    match task {
        Task::Task1 => "List one subevent per line.",
        Task::Task2 => "List one header event per line, in the order in which they occur as the accident develops.",
        Task::Task3 => "List the operator actions as numbered steps, one per line, in the order they must be executed.",
    }
}

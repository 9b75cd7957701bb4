//! Small enums shared by the gateway, memory, agent and pipeline layers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Subevent analysis of the initiating event.
    Task1,
    /// Ordered header-event identification.
    Task2,
    /// Operator-action recommendation.
    Task3,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Task1, Task::Task2, Task::Task3];

    pub fn number(self) -> u8 {
        match self {
            Task::Task1 => 1,
            Task::Task2 => 2,
            Task::Task3 => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Task> {
        match n {
            1 => Some(Task::Task1),
            2 => Some(Task::Task2),
            3 => Some(Task::Task3),
            _ => None,
        }
    }

    pub fn executor(self) -> AgentRole {
        match self {
            Task::Task1 => AgentRole::SubeventExecutor,
            Task::Task2 => AgentRole::HeaderExecutor,
            Task::Task3 => AgentRole::StrategyExecutor,
        }
    }

    pub fn validator(self) -> AgentRole {
        match self {
            Task::Task1 => AgentRole::SubeventValidator,
            Task::Task2 => AgentRole::HeaderValidator,
            Task::Task3 => AgentRole::StrategyValidator,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "task{}", self.number())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.trim().trim_start_matches("task");
        digits
            .parse::<u8>()
            .ok()
            .and_then(Task::from_number)
            .ok_or_else(|| format!("unknown task {s:?} (expected 1, 2, 3 or task1..task3)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    SubeventExecutor,
    SubeventValidator,
    HeaderExecutor,
    HeaderValidator,
    StrategyExecutor,
    StrategyValidator,
}

impl AgentRole {
    pub const ALL: [AgentRole; 6] = [
        AgentRole::SubeventExecutor,
        AgentRole::SubeventValidator,
        AgentRole::HeaderExecutor,
        AgentRole::HeaderValidator,
        AgentRole::StrategyExecutor,
        AgentRole::StrategyValidator,
    ];

    pub fn task(self) -> Task {
        match self {
            AgentRole::SubeventExecutor | AgentRole::SubeventValidator => Task::Task1,
            AgentRole::HeaderExecutor | AgentRole::HeaderValidator => Task::Task2,
            AgentRole::StrategyExecutor | AgentRole::StrategyValidator => Task::Task3,
        }
    }

    pub fn is_executor(self) -> bool {
        matches!(
            self,
            AgentRole::SubeventExecutor | AgentRole::HeaderExecutor | AgentRole::StrategyExecutor
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::SubeventExecutor => "subevent_executor",
            AgentRole::SubeventValidator => "subevent_validator",
            AgentRole::HeaderExecutor => "header_executor",
            AgentRole::HeaderValidator => "header_validator",
            AgentRole::StrategyExecutor => "strategy_executor",
            AgentRole::StrategyValidator => "strategy_validator",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a rationale field is requested / shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonMode {
    WithoutReasons,
    WithReasons,
}

impl ReasonMode {
    pub fn enabled(self) -> bool {
        self == ReasonMode::WithReasons
    }

    pub fn label(self) -> &'static str {
        match self {
            ReasonMode::WithReasons => "Reason",
            ReasonMode::WithoutReasons => "No reason",
        }
    }
}

impl FromStr for ReasonMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "with" | "with_reasons" => Ok(ReasonMode::WithReasons),
            "without" | "without_reasons" => Ok(ReasonMode::WithoutReasons),
            other => Err(format!("unknown reason mode {other:?} (expected with|without)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    Vanilla,
    CoT,
    NPPprompt,
    EvoTaskTree,
    OnlyRL,
    OnlyEB,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Vanilla,
        StrategyKind::CoT,
        StrategyKind::NPPprompt,
        StrategyKind::EvoTaskTree,
        StrategyKind::OnlyRL,
        StrategyKind::OnlyEB,
    ];

    /// Baselines plus the full method.
    pub const MAIN: [StrategyKind; 4] = [
        StrategyKind::Vanilla,
        StrategyKind::CoT,
        StrategyKind::NPPprompt,
        StrategyKind::EvoTaskTree,
    ];

    pub const ABLATION: [StrategyKind; 3] = [StrategyKind::EvoTaskTree, StrategyKind::OnlyRL, StrategyKind::OnlyEB];

    pub fn uses_records(self) -> bool {
        matches!(self, StrategyKind::EvoTaskTree | StrategyKind::OnlyRL)
    }

    pub fn uses_experience(self) -> bool {
        matches!(self, StrategyKind::EvoTaskTree | StrategyKind::OnlyEB)
    }

    pub fn uses_memory(self) -> bool {
        self.uses_records() || self.uses_experience()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Vanilla => "Vanilla",
            StrategyKind::CoT => "CoT",
            StrategyKind::NPPprompt => "NPPprompt",
            StrategyKind::EvoTaskTree => "EvoTaskTree",
            StrategyKind::OnlyRL => "OnlyRL",
            StrategyKind::OnlyEB => "OnlyEB",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str().to_ascii_lowercase() == lower)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_roundtrips() {
        for t in Task::ALL {
            assert_eq!(t.to_string().parse::<Task>().unwrap(), t);
        }
        assert_eq!("2".parse::<Task>().unwrap(), Task::Task2);
        for s in StrategyKind::ALL {
            assert_eq!(s.as_str().parse::<StrategyKind>().unwrap(), s);
        }
        assert_eq!("onlyrl".parse::<StrategyKind>().unwrap(), StrategyKind::OnlyRL);
        assert!("with".parse::<ReasonMode>().unwrap().enabled());
    }

    #[test]
    fn one_executor_and_validator_per_task() {
        for t in Task::ALL {
            let roles: Vec<_> = AgentRole::ALL.iter().filter(|r| r.task() == t).collect();
            assert_eq!(roles.len(), 2);
            assert!(t.executor().is_executor());
            assert!(!t.validator().is_executor());
        }
    }
}

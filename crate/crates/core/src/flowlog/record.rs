use serde::{Deserialize, Serialize};

use crate::network::{FlowVertexKind, VertexId};

/// Task lifecycle status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskStatus {
    New,
    Running,
    Success,
    Fail,
}

impl TaskStatus {
    pub const ALL: [TaskStatus; 4] = [
        TaskStatus::New,
        TaskStatus::Running,
        TaskStatus::Success,
        TaskStatus::Fail,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, TaskStatus::Success | TaskStatus::Fail)
    }

    pub fn label(self) -> &'static str {
        match self {
            TaskStatus::New => "New",
            TaskStatus::Running => "Running",
            TaskStatus::Success => "Success",
            TaskStatus::Fail => "Fail",
        }
    }

    /// Whether `self -> next` is a legal lifecycle step.
    pub fn can_become(self, next: TaskStatus) -> bool {
        matches!(
            (self, next),
            (TaskStatus::New, TaskStatus::Running)
                | (TaskStatus::Running, TaskStatus::Success)
                | (TaskStatus::Running, TaskStatus::Fail)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InvocationStatus {
    Pending,
    Running,
    Success,
    Fail,
}

impl InvocationStatus {
    /// Column of the subtask table this status falls in.
    pub fn as_task_status(self) -> TaskStatus {
        match self {
            InvocationStatus::Pending => TaskStatus::New,
            InvocationStatus::Running => TaskStatus::Running,
            InvocationStatus::Success => TaskStatus::Success,
            InvocationStatus::Fail => TaskStatus::Fail,
        }
    }

    pub fn is_finished(self) -> bool {
        matches!(self, InvocationStatus::Success | InvocationStatus::Fail)
    }
}

/// How an invocation was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RouteUsed {
    Hard,
    Soft,
    Ext,
    Seed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureReason {
    Timeout,
    ContractViolation,
    ExecutorError,
    StepBudgetExhausted,
    UnknownService,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub vertex_id: VertexId,
    pub vertex_kind: FlowVertexKind,
    pub status: InvocationStatus,
    pub wall_time_ms: u64,
    pub token_cost: u64,
    #[serde(default)]
    pub route_kind_used: Option<RouteUsed>,
    /// Canonical JSON of the invocation's input values.
    #[serde(default)]
    pub input_digest: String,
}

/// One persisted task flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub task_id: String,
    pub status: TaskStatus,
    pub target: VertexId,
    pub chain: Vec<ChainEntry>,
    pub total_time_ms: u64,
    pub total_tokens: u64,
    pub created_at: u64,
    #[serde(default)]
    pub ended_at: Option<u64>,
    pub input_digest: String,
    #[serde(default)]
    pub output_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<FailureReason>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("InvalidRecord: {0}")]
pub struct InvalidRecord(pub String);

/// Relative tolerance between `total_time_ms` and the chain's summed time.
pub const TIME_TOLERANCE: f64 = 0.05;

impl FlowRecord {
    pub fn chain_tokens(&self) -> u64 {
        self.chain.iter().map(|c| c.token_cost).sum()
    }

    pub fn chain_time_ms(&self) -> u64 {
        self.chain.iter().map(|c| c.wall_time_ms).sum()
    }

    /// Tokens must match exactly. Time may differ by 5% of the total, plus
    /// one millisecond per entry for per-invocation rounding.
    pub fn validate(&self) -> Result<(), InvalidRecord> {
        if self.task_id.is_empty() {
            return Err(InvalidRecord("empty task_id".into()));
        }
        let tokens = self.chain_tokens();
        if tokens != self.total_tokens {
            return Err(InvalidRecord(format!(
                "total_tokens {} != chain sum {tokens}",
                self.total_tokens
            )));
        }
        let time = self.chain_time_ms();
        let slack =
            (self.total_time_ms as f64 * TIME_TOLERANCE).max(0.0) + self.chain.len() as f64 + 1.0;
        if (time as f64 - self.total_time_ms as f64).abs() > slack {
            return Err(InvalidRecord(format!(
                "total_time_ms {} vs chain sum {time} exceeds tolerance",
                self.total_time_ms
            )));
        }
        if self.status.is_terminal() != self.ended_at.is_some() {
            return Err(InvalidRecord(
                "ended_at must be set iff status is terminal".into(),
            ));
        }
        Ok(())
    }
}

use serde::{Deserialize, Serialize};

use super::context::ContextMap;
use crate::executors::Params;
use crate::flowlog::{FailureReason, TaskStatus};
use crate::network::VertexId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub target: VertexId,
    pub payload: ContextMap,
    pub status: TaskStatus,
    /// Every status the task has been in, in order.
    pub status_history: Vec<TaskStatus>,
    pub created_at: u64,
    #[serde(default)]
    pub started_at: Option<u64>,
    #[serde(default)]
    pub ended_at: Option<u64>,
    pub deadline_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<FailureReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_detail: Option<String>,
    /// Final context values of a successful task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Params>,
}

impl Task {
    pub fn new(
        task_id: String,
        target: VertexId,
        payload: ContextMap,
        deadline_s: f64,
        now: u64,
    ) -> Self {
        Self {
            task_id,
            target,
            payload,
            status: TaskStatus::New,
            status_history: vec![TaskStatus::New],
            created_at: now,
            started_at: None,
            ended_at: None,
            deadline_s,
            failure_reason: None,
            failure_detail: None,
            output: None,
        }
    }

    /// Applies a legal transition; illegal ones are ignored and reported.
    pub fn transition(&mut self, next: TaskStatus, now: u64) -> bool {
        if !self.status.can_become(next) {
            return false;
        }
        self.status = next;
        self.status_history.push(next);
        match next {
            TaskStatus::Running => self.started_at = Some(now),
            TaskStatus::Success | TaskStatus::Fail => self.ended_at = Some(now),
            TaskStatus::New => {}
        }
        true
    }

    pub fn is_finished(&self) -> bool {
        self.status.is_terminal()
    }
}

//! Task lifecycle and execution graphs.
//!
//! A task starts at its target vertex and follows HARD routes until none
//! is open. Group vertexes run their members in planner order (respecting
//! SOFT routes) and reach outside through EXT routes or registry discovery
//! when members are blocked on missing inputs. Every invocation is a node
//! of the task's [`ExecutionGraph`]; finished tasks become flow records.

mod context;
mod graph;
mod planner;
mod routing;
mod run;
mod share;
mod stall;
mod task;

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

pub use context::{ContextEntry, ContextMap, Provenance};
pub use graph::{Edge, ExecutionGraph, Invocation};
pub use planner::{plan_group, DefaultPlanner, PlanError, Planner};
pub use routing::{resolve_ext, resolve_hard, ExtResolution, ExtSource};
pub use share::{SharePolicy, ShareScope, SharedOutput};
pub use stall::{
    detect_stall, output_similarity, reflection_note, StallDecision, REFLECTION_PARAM,
};
pub use task::Task;

pub use crate::config::Limits;
use crate::executors::{Params, VertexExecutor};
use crate::flowlog::{FlowLog, FlowRecord};
use crate::network::{check_params, NetworkOwner, VertexId};
use crate::registry::Registry;
use share::ShareBoard;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchedulerError {
    #[error("UnknownVertex: {0}")]
    UnknownVertex(VertexId),
    #[error("InvalidPayload: {0}")]
    InvalidPayload(String),
    #[error("InvalidDeadline: {0}")]
    InvalidDeadline(f64),
    #[error("UnknownTask: {0}")]
    UnknownTask(String),
    #[error("InvalidSharePolicy: {0}")]
    InvalidSharePolicy(String),
}

impl SchedulerError {
    pub fn code(&self) -> &'static str {
        match self {
            SchedulerError::UnknownVertex(_) => "UnknownVertex",
            SchedulerError::InvalidPayload(_) => "InvalidPayload",
            SchedulerError::InvalidDeadline(_) => "InvalidDeadline",
            SchedulerError::UnknownTask(_) => "UnknownTask",
            SchedulerError::InvalidSharePolicy(_) => "InvalidSharePolicy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRequest {
    pub target: VertexId,
    #[serde(default)]
    pub payload: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_s: Option<f64>,
}

impl TaskRequest {
    pub fn new(target: impl Into<VertexId>, payload: Params) -> Self {
        Self {
            target: target.into(),
            payload,
            deadline_s: None,
        }
    }

    pub fn with_deadline(mut self, deadline_s: f64) -> Self {
        self.deadline_s = Some(deadline_s);
        self
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SchedulerOptions {
    pub limits: Limits,
    /// Every non-group vertex must be a live registered service at the
    /// moment it is invoked, otherwise the task fails with UnknownService.
    pub resolve_via_registry: bool,
}

pub(crate) struct TaskState {
    pub(crate) task: Task,
    pub(crate) graph: ExecutionGraph,
    pub(crate) record: Option<FlowRecord>,
}

pub(crate) struct TaskCell {
    pub(crate) state: Mutex<TaskState>,
    pub(crate) done: watch::Sender<bool>,
}

pub(crate) struct Inner {
    pub(crate) network: Arc<NetworkOwner>,
    pub(crate) registry: Option<Arc<Registry>>,
    pub(crate) executor: Arc<dyn VertexExecutor>,
    pub(crate) planner: Arc<dyn Planner>,
    pub(crate) flow_log: Option<Arc<FlowLog>>,
    pub(crate) options: SchedulerOptions,
    pub(crate) shares: ShareBoard,
    tasks: RwLock<HashMap<String, Arc<TaskCell>>>,
}

#[derive(Clone)]
pub struct Scheduler {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Scheduler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scheduler")
            .field("tasks", &self.inner.tasks.read().len())
            .field("options", &self.inner.options)
            .finish()
    }
}

pub struct SchedulerBuilder {
    network: Arc<NetworkOwner>,
    executor: Arc<dyn VertexExecutor>,
    registry: Option<Arc<Registry>>,
    planner: Arc<dyn Planner>,
    flow_log: Option<Arc<FlowLog>>,
    options: SchedulerOptions,
}

impl SchedulerBuilder {
    pub fn registry(mut self, registry: Arc<Registry>) -> Self {
        self.registry = Some(registry);
        self
    }

    pub fn planner(mut self, planner: Arc<dyn Planner>) -> Self {
        self.planner = planner;
        self
    }

    pub fn flow_log(mut self, log: Arc<FlowLog>) -> Self {
        self.flow_log = Some(log);
        self
    }

    pub fn limits(mut self, limits: Limits) -> Self {
        self.options.limits = limits;
        self
    }

    pub fn resolve_via_registry(mut self, on: bool) -> Self {
        self.options.resolve_via_registry = on;
        self
    }

    pub fn build(self) -> Scheduler {
        Scheduler {
            inner: Arc::new(Inner {
                network: self.network,
                registry: self.registry,
                executor: self.executor,
                planner: self.planner,
                flow_log: self.flow_log,
                options: self.options,
                shares: ShareBoard::default(),
                tasks: RwLock::new(HashMap::new()),
            }),
        }
    }
}

impl Scheduler {
    pub fn builder(
        network: Arc<NetworkOwner>,
        executor: Arc<dyn VertexExecutor>,
    ) -> SchedulerBuilder {
        SchedulerBuilder {
            network,
            executor,
            registry: None,
            planner: Arc::new(DefaultPlanner),
            flow_log: None,
            options: SchedulerOptions::default(),
        }
    }

    pub fn network(&self) -> &Arc<NetworkOwner> {
        &self.inner.network
    }

    pub fn registry(&self) -> Option<&Arc<Registry>> {
        self.inner.registry.as_ref()
    }

    pub fn options(&self) -> &SchedulerOptions {
        &self.inner.options
    }

    /// Validates the request and starts the task in the background.
    /// Must be called from within a Tokio runtime.
    pub fn submit(&self, req: TaskRequest) -> Result<String, SchedulerError> {
        let net = self.inner.network.snapshot();
        let target = net
            .get(&req.target)
            .ok_or_else(|| SchedulerError::UnknownVertex(req.target.clone()))?;
        let check = check_params(&req.payload, target.input_schema());
        if !check.is_ok() {
            return Err(SchedulerError::InvalidPayload(check.summary()));
        }
        let deadline_s = req
            .deadline_s
            .unwrap_or(self.inner.options.limits.deadline_s);
        if !(deadline_s > 0.0 && deadline_s.is_finite()) {
            return Err(SchedulerError::InvalidDeadline(deadline_s));
        }
        let task_id = uuid::Uuid::new_v4().simple().to_string();
        let clock = run::TaskClock::start();
        let task = Task::new(
            task_id.clone(),
            req.target.clone(),
            ContextMap::from_payload(&req.payload),
            deadline_s,
            clock.now_ms(),
        );
        let (done, _) = watch::channel(false);
        let cell = Arc::new(TaskCell {
            state: Mutex::new(TaskState {
                task,
                graph: ExecutionGraph::new(task_id.clone()),
                record: None,
            }),
            done,
        });
        self.inner
            .tasks
            .write()
            .insert(task_id.clone(), cell.clone());
        let runner = run::Runner::new(self.inner.clone(), cell, net, clock, task_id.clone());
        tokio::spawn(runner.drive());
        Ok(task_id)
    }

    fn cell(&self, task_id: &str) -> Result<Arc<TaskCell>, SchedulerError> {
        self.inner
            .tasks
            .read()
            .get(task_id)
            .cloned()
            .ok_or_else(|| SchedulerError::UnknownTask(task_id.to_string()))
    }

    pub fn get_status(&self, task_id: &str) -> Result<Task, SchedulerError> {
        Ok(self.cell(task_id)?.state.lock().task.clone())
    }

    pub fn get_graph(&self, task_id: &str) -> Result<ExecutionGraph, SchedulerError> {
        Ok(self.cell(task_id)?.state.lock().graph.clone())
    }

    /// The flow record, once the task has finished.
    pub fn flow_record(&self, task_id: &str) -> Result<Option<FlowRecord>, SchedulerError> {
        Ok(self.cell(task_id)?.state.lock().record.clone())
    }

    pub fn task_ids(&self) -> Vec<String> {
        self.inner.tasks.read().keys().cloned().collect()
    }

    /// Resolves once the task is Success or Fail.
    pub async fn wait(&self, task_id: &str) -> Result<Task, SchedulerError> {
        let cell = self.cell(task_id)?;
        let mut rx = cell.done.subscribe();
        let _ = rx.wait_for(|d| *d).await;
        let task = cell.state.lock().task.clone();
        Ok(task)
    }

    pub async fn run(&self, req: TaskRequest) -> Result<Task, SchedulerError> {
        let id = self.submit(req)?;
        self.wait(&id).await
    }

    pub fn set_share_policy(&self, policy: SharePolicy) -> Result<(), SchedulerError> {
        let net = self.inner.network.snapshot();
        let v = net.get(&policy.vertex_id).ok_or_else(|| {
            SchedulerError::InvalidSharePolicy(format!("unknown vertex {}", policy.vertex_id))
        })?;
        if let Some(p) = policy
            .shared_params
            .iter()
            .find(|p| v.output_schema().get(p).is_none())
        {
            return Err(SchedulerError::InvalidSharePolicy(format!(
                "{p} is not an output of {}",
                policy.vertex_id
            )));
        }
        self.inner.shares.set_policy(policy);
        Ok(())
    }

    /// Latest published outputs of a vertex under a read_only share policy.
    pub fn read_shared(&self, vertex: &VertexId) -> Option<SharedOutput> {
        self.inner.shares.read(vertex)
    }
}

//! Backends that realize a vertex's [`LogicBinding`].

mod builtin;
mod command;
mod http;
pub mod llm;

use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::network::{LogicBinding, Vertex, VertexKind};

pub use builtin::{exec_builtin, parse_transform, Transform};
pub use command::exec_command;
pub use http::exec_http;
pub use llm::{LlmExecutor, LlmSettings, PromptSubject};

/// Plain parameter values, without provenance.
pub type Params = Map<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub output_ctx: Params,
    pub token_cost: u64,
    pub wall_time_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_trace: Option<String>,
}

impl ExecutionResult {
    pub fn new(output_ctx: Params, started: Instant) -> Self {
        Self {
            output_ctx,
            token_cost: 0,
            wall_time_ms: started.elapsed().as_millis() as u64,
            raw_trace: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("UnknownTransform: {0}")]
    UnknownTransform(String),
    #[error("ExecutorError: {0}")]
    Executor(String),
    #[error("ExecutorTimeout after {0:?}")]
    Timeout(Duration),
    #[error("OutputNotJson: {0}")]
    OutputNotJson(String),
    #[error("ApiError: {0}")]
    Api(String),
    #[error("ParseError: {0}")]
    Parse(String),
}

impl ExecError {
    pub fn code(&self) -> &'static str {
        match self {
            ExecError::UnknownTransform(_) => "UnknownTransform",
            ExecError::Executor(_) => "ExecutorError",
            ExecError::Timeout(_) => "ExecutorTimeout",
            ExecError::OutputNotJson(_) => "OutputNotJson",
            ExecError::Api(_) => "ApiError",
            ExecError::Parse(_) => "ParseError",
        }
    }
}

pub(crate) fn secs(timeout_s: f64) -> Duration {
    Duration::try_from_secs_f64(timeout_s).unwrap_or(Duration::MAX)
}

/// Anything that can run a non-group vertex.
#[async_trait]
pub trait VertexExecutor: Send + Sync {
    async fn execute(&self, vertex: &Vertex, ctx: &Params) -> Result<ExecutionResult, ExecError>;
}

/// Dispatches on the vertex's logic binding. External vertexes are called
/// over HTTP at their `endpoint_url`.
#[derive(Clone)]
pub struct DefaultExecutor {
    http: reqwest::Client,
    llm: Option<Arc<LlmExecutor>>,
    external_timeout: Duration,
}

impl Default for DefaultExecutor {
    fn default() -> Self {
        Self {
            http: reqwest::Client::new(),
            llm: None,
            external_timeout: Duration::from_secs(30),
        }
    }
}

impl DefaultExecutor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_llm(mut self, llm: Arc<LlmExecutor>) -> Self {
        self.llm = Some(llm);
        self
    }

    pub fn with_external_timeout(mut self, timeout: Duration) -> Self {
        self.external_timeout = timeout;
        self
    }
}

#[async_trait]
impl VertexExecutor for DefaultExecutor {
    async fn execute(&self, vertex: &Vertex, ctx: &Params) -> Result<ExecutionResult, ExecError> {
        match &vertex.kind {
            VertexKind::Agent(role) => match &role.logic {
                LogicBinding::Builtin(t) => exec_builtin(t, ctx).await,
                LogicBinding::Command { argv, timeout_s } => {
                    exec_command(argv, ctx, secs(*timeout_s)).await
                }
                LogicBinding::Http {
                    endpoint_url,
                    timeout_s,
                } => exec_http(&self.http, endpoint_url, ctx, secs(*timeout_s)).await,
                LogicBinding::Llm { model_hint } => match &self.llm {
                    Some(llm) => {
                        llm.run(&PromptSubject::from_role(role), ctx, Some(model_hint))
                            .await
                    }
                    None => Err(ExecError::Executor("no LLM endpoint configured".into())),
                },
            },
            VertexKind::External(ext) => {
                exec_http(&self.http, &ext.endpoint_url, ctx, self.external_timeout).await
            }
            VertexKind::Group(_) => Err(ExecError::Executor(format!(
                "group {} is run by the scheduler, not an executor",
                vertex.id
            ))),
        }
    }
}

//! Builders for networks of mock vertexes. Used by tests, benches and the
//! gateway's integration tests.

use std::collections::HashMap;
use std::sync::Arc;

use async_trait::async_trait;
use parking_lot::Mutex;

use crate::executors::{DefaultExecutor, ExecError, ExecutionResult, Params, VertexExecutor};
use crate::network::{
    AgentGroup, AgentNetwork, AgentRole, LogicBinding, ParamKind, ParameterSchema, ParameterSpec,
    Route, Vertex, VertexId,
};

/// Schema where every listed name is a required `any` param.
pub fn any_schema(names: &[&str]) -> ParameterSchema {
    ParameterSchema::new(
        names
            .iter()
            .map(|n| ParameterSpec::required(*n, ParamKind::Any))
            .collect(),
    )
}

pub fn agent_with(id: &str, inputs: &[&str], outputs: &[&str], logic: LogicBinding) -> Vertex {
    Vertex::agent(
        id,
        AgentRole {
            name: id.to_string(),
            description: format!("{id} agent"),
            system_prompt: format!("You are {id}."),
            input_schema: any_schema(inputs),
            output_schema: any_schema(outputs),
            logic,
        },
    )
}

/// Agent running the `identity` builtin.
pub fn agent(id: &str, inputs: &[&str], outputs: &[&str]) -> Vertex {
    agent_with(id, inputs, outputs, LogicBinding::builtin("identity"))
}

pub fn group(id: &str, members: &[&str], inputs: &[&str], outputs: &[&str]) -> Vertex {
    Vertex::group(
        id,
        AgentGroup {
            name: id.to_string(),
            goal_description: format!("{id} group"),
            group_prompt: String::new(),
            input_schema: any_schema(inputs),
            output_schema: any_schema(outputs),
            members: members.iter().map(|m| (*m).into()).collect(),
        },
    )
}

type Script = dyn Fn(&Params, u64) -> Result<(Params, u64), ExecError> + Send + Sync;

/// Executor that runs per-vertex closures and falls back to
/// [`DefaultExecutor`] for every other vertex. Each closure receives the
/// input values and the 1-based call count for its vertex, and returns the
/// output plus a token cost.
#[derive(Default)]
pub struct ScriptedExecutor {
    scripts: HashMap<VertexId, Arc<Script>>,
    calls: Mutex<HashMap<VertexId, u64>>,
    fallback: DefaultExecutor,
}

impl ScriptedExecutor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(
        mut self,
        id: &str,
        f: impl Fn(&Params, u64) -> Result<(Params, u64), ExecError> + Send + Sync + 'static,
    ) -> Self {
        self.scripts.insert(id.into(), Arc::new(f));
        self
    }

    pub fn calls(&self, id: &str) -> u64 {
        self.calls
            .lock()
            .get(&VertexId::from(id))
            .copied()
            .unwrap_or(0)
    }
}

#[async_trait]
impl VertexExecutor for ScriptedExecutor {
    async fn execute(&self, vertex: &Vertex, ctx: &Params) -> Result<ExecutionResult, ExecError> {
        let n = {
            let mut calls = self.calls.lock();
            let c = calls.entry(vertex.id.clone()).or_default();
            *c += 1;
            *c
        };
        match self.scripts.get(&vertex.id) {
            Some(f) => {
                let (output_ctx, token_cost) = f(ctx, n)?;
                Ok(ExecutionResult {
                    output_ctx,
                    token_cost,
                    wall_time_ms: 0,
                    raw_trace: None,
                })
            }
            None => self.fallback.execute(vertex, ctx).await,
        }
    }
}

/// Builds a network, panicking on any invalid vertex or route.
pub fn network(vertexes: Vec<Vertex>, routes: Vec<Route>) -> AgentNetwork {
    let mut net = AgentNetwork::new();
    for v in vertexes {
        let id = v.id.clone();
        net = net
            .add_vertex(v)
            .unwrap_or_else(|e| panic!("vertex {id}: {e}"));
    }
    for r in routes {
        net = net
            .add_route(r.clone())
            .unwrap_or_else(|e| panic!("route {r:?}: {e}"));
    }
    net
}

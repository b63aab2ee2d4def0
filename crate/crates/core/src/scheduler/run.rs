use std::collections::{BTreeSet, HashMap};
use std::future::Future;
use std::pin::Pin;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde_json::Value;
use tokio::time::Instant;

use super::context::{ContextMap, Provenance};
use super::graph::{Edge, Invocation};
use super::planner::PlanError;
use super::routing::{resolve_ext, resolve_hard};
use super::stall::{
    detect_stall, output_similarity, reflection_note, StallDecision, REFLECTION_PARAM,
};
use super::{Inner, TaskCell};
use crate::executors::{ExecError, Params};
use crate::flowlog::{
    ChainEntry, FailureReason, FlowRecord, InvocationStatus, RouteUsed, TaskStatus,
};
use crate::json::canonical_map;
use crate::network::{check_params, AgentNetwork, FlowVertexKind, Vertex, VertexId};
use crate::registry::Liveness;

/// Wall-clock timestamps derived from a monotonic base, so timestamps and
/// measured durations agree (also under a paused test clock).
#[derive(Debug, Clone, Copy)]
pub(crate) struct TaskClock {
    epoch_ms: u64,
    base: Instant,
}

impl TaskClock {
    pub(crate) fn start() -> Self {
        let epoch_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self {
            epoch_ms,
            base: Instant::now(),
        }
    }

    pub(crate) fn now_ms(&self) -> u64 {
        self.at(Instant::now())
    }

    fn at(&self, t: Instant) -> u64 {
        self.epoch_ms + t.saturating_duration_since(self.base).as_millis() as u64
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Failure {
    reason: FailureReason,
    detail: String,
}

impl Failure {
    fn new(reason: FailureReason, detail: impl Into<String>) -> Self {
        Self {
            reason,
            detail: detail.into(),
        }
    }
}

fn exec_failure(e: &ExecError) -> Failure {
    let reason = match e {
        ExecError::Timeout(_) => FailureReason::Timeout,
        _ => FailureReason::ExecutorError,
    };
    Failure::new(reason, e.to_string())
}

type Step<'a, T> = Pin<Box<dyn Future<Output = Result<T, Failure>> + Send + 'a>>;

pub(crate) struct Runner {
    inner: Arc<Inner>,
    cell: Arc<TaskCell>,
    net: Arc<AgentNetwork>,
    clock: TaskClock,
    task_id: String,
    seq: u64,
    started: HashMap<String, Instant>,
    first_start: Option<Instant>,
    top_mark: Option<Instant>,
    history: HashMap<VertexId, Vec<Params>>,
    last_inv: HashMap<VertexId, String>,
    strikes: HashMap<VertexId, u32>,
    last_ctx: ContextMap,
}

impl Runner {
    pub(crate) fn new(
        inner: Arc<Inner>,
        cell: Arc<TaskCell>,
        net: Arc<AgentNetwork>,
        clock: TaskClock,
        task_id: String,
    ) -> Self {
        Self {
            inner,
            cell,
            net,
            clock,
            task_id,
            seq: 0,
            started: HashMap::new(),
            first_start: None,
            top_mark: None,
            history: HashMap::new(),
            last_inv: HashMap::new(),
            strikes: HashMap::new(),
            last_ctx: ContextMap::new(),
        }
    }

    pub(crate) async fn drive(mut self) {
        let deadline_s = self.cell.state.lock().task.deadline_s;
        let limit = Duration::try_from_secs_f64(deadline_s).unwrap_or(Duration::MAX);
        let outcome = match tokio::time::timeout(limit, self.run_chain()).await {
            Ok(r) => r,
            Err(_) => Err(Failure::new(
                FailureReason::Timeout,
                format!("deadline of {deadline_s}s exceeded"),
            )),
        };
        self.finish(outcome);
    }

    async fn run_chain(&mut self) -> Result<ContextMap, Failure> {
        let (target, mut ctx) = {
            let st = self.cell.state.lock();
            (st.task.target.clone(), st.task.payload.clone())
        };
        let mut current = self.vertex(&target)?;
        let mut route = RouteUsed::Seed;
        loop {
            let out = self
                .invoke(current.clone(), &ctx, route, None, None)
                .await?;
            ctx.merge(&out);
            self.last_ctx = ctx.clone();
            let Some(next) = resolve_hard(&self.net, &current.id, &ctx.values()) else {
                break;
            };
            current = self.vertex(&next)?;
            route = RouteUsed::Hard;
        }
        let target_v = self.vertex(&target)?;
        let check = check_params(&ctx.values(), target_v.output_schema());
        if !check.is_ok() {
            return Err(Failure::new(
                FailureReason::ContractViolation,
                format!(
                    "final context does not satisfy {target}: {}",
                    check.summary()
                ),
            ));
        }
        Ok(ctx)
    }

    fn vertex(&self, id: &VertexId) -> Result<Arc<Vertex>, Failure> {
        self.net.get(id).cloned().ok_or_else(|| {
            Failure::new(
                FailureReason::UnknownService,
                format!("unknown vertex {id}"),
            )
        })
    }

    /// One invocation plus stall handling for its vertex.
    fn invoke<'a>(
        &'a mut self,
        v: Arc<Vertex>,
        ctx: &'a ContextMap,
        route: RouteUsed,
        parent: Option<String>,
        planned: Option<String>,
    ) -> Step<'a, ContextMap> {
        Box::pin(async move {
            let (mut inv_id, mut out) = self
                .invoke_once(&v, ctx, route, parent.clone(), planned, None)
                .await?;
            let threshold = self.inner.options.limits.stall_threshold;
            loop {
                let hist = self.history.entry(v.id.clone()).or_default();
                hist.push(out.values());
                let strikes = self.strikes.get(&v.id).copied().unwrap_or(0);
                let decision = detect_stall(hist, strikes, threshold);
                let sim = match hist.as_slice() {
                    [.., a, b] => output_similarity(a, b),
                    _ => 0.0,
                };
                self.last_inv.insert(v.id.clone(), inv_id.clone());
                match decision {
                    StallDecision::Continue => return Ok(out),
                    StallDecision::Abort => {
                        return Err(Failure::new(
                            FailureReason::StepBudgetExhausted,
                            format!("{} stalled again after reflection", v.id),
                        ))
                    }
                    StallDecision::Reflect => {
                        *self.strikes.entry(v.id.clone()).or_default() += 1;
                        tracing::info!(task = %self.task_id, vertex = %v.id, "stall detected, reflecting");
                        let note = (
                            Value::String(reflection_note(v.id.as_str(), sim)),
                            Provenance::Invocation(inv_id.clone()),
                        );
                        (inv_id, out) = self
                            .invoke_once(&v, ctx, route, parent.clone(), None, Some(note))
                            .await?;
                    }
                }
            }
        })
    }

    async fn invoke_once(
        &mut self,
        v: &Arc<Vertex>,
        ctx: &ContextMap,
        route: RouteUsed,
        parent: Option<String>,
        planned: Option<String>,
        note: Option<(Value, Provenance)>,
    ) -> Result<(String, ContextMap), Failure> {
        let mut input = ctx.project(v.input_schema().names());
        let reflected = note.is_some();
        if let Some((text, prov)) = note {
            input.insert(REFLECTION_PARAM, text, prov);
        }
        let inv_id = self.start_node(v, input.clone(), route, parent, planned, reflected)?;
        let result = self.execute(v, &input, &inv_id).await;
        match result {
            Ok((out, tokens)) => {
                self.finish_node(
                    &inv_id,
                    InvocationStatus::Success,
                    Some(out.clone()),
                    tokens,
                    None,
                );
                self.inner
                    .shares
                    .publish(&v.id, &out.values(), &self.task_id, &inv_id);
                Ok((inv_id, out))
            }
            Err((f, tokens)) => {
                self.finish_node(
                    &inv_id,
                    InvocationStatus::Fail,
                    None,
                    tokens,
                    Some(f.detail.clone()),
                );
                Err(f)
            }
        }
    }

    async fn execute(
        &mut self,
        v: &Arc<Vertex>,
        input: &ContextMap,
        inv_id: &str,
    ) -> Result<(ContextMap, u64), (Failure, u64)> {
        let values = input.values();
        let pre = check_params(&values, v.input_schema());
        if !pre.is_ok() {
            return Err((
                Failure::new(
                    FailureReason::ContractViolation,
                    format!("input of {}: {}", v.id, pre.summary()),
                ),
                0,
            ));
        }
        if self.inner.options.resolve_via_registry && !v.is_group() && !self.registered(&v.id) {
            return Err((
                Failure::new(
                    FailureReason::UnknownService,
                    format!("{} is not a live registered service", v.id),
                ),
                0,
            ));
        }
        let (out, tokens) = if v.is_group() {
            (
                self.run_group(v.clone(), input.clone(), inv_id.to_string())
                    .await
                    .map_err(|f| (f, 0))?,
                0,
            )
        } else {
            let res = self
                .inner
                .executor
                .execute(v, &values)
                .await
                .map_err(|e| (exec_failure(&e), 0))?;
            let out = ContextMap::from_params(
                &res.output_ctx,
                Provenance::Invocation(inv_id.to_string()),
            );
            (out, res.token_cost)
        };
        let post = check_params(&out.values(), v.output_schema());
        if !post.is_ok() {
            return Err((
                Failure::new(
                    FailureReason::ContractViolation,
                    format!("output of {}: {}", v.id, post.summary()),
                ),
                tokens,
            ));
        }
        Ok((out, tokens))
    }

    fn registered(&self, id: &VertexId) -> bool {
        let Some(reg) = &self.inner.registry else {
            return false;
        };
        reg.get(id.as_str())
            .into_iter()
            .chain(reg.list().into_iter().filter(|d| &d.vertex.id == id))
            .any(|d| d.liveness != Liveness::Dead)
    }

    fn run_group(
        &mut self,
        g: Arc<Vertex>,
        input: ContextMap,
        inv_id: String,
    ) -> Step<'_, ContextMap> {
        Box::pin(async move {
            let mut gctx = input;
            let mut executed: BTreeSet<VertexId> = BTreeSet::new();
            let mut exclude: BTreeSet<VertexId> = self
                .net
                .vertexes()
                .filter(|v| self.net.is_inside(&g.id, &v.id))
                .map(|v| v.id.clone())
                .collect();
            exclude.insert(g.id.clone());
            let planner = self.inner.planner.clone();
            loop {
                let available: BTreeSet<String> = gctx.names().map(str::to_string).collect();
                let plan = planner.plan(&self.net, &g.id, &available, &executed).await;
                match plan {
                    Ok(plan) if !plan.is_empty() => {
                        let slots: Vec<Option<String>> =
                            plan.iter().map(|m| self.plan_node(m, &inv_id)).collect();
                        for (m, slot) in plan.into_iter().zip(slots) {
                            let mv = self.vertex(&m)?;
                            let out = self
                                .invoke(mv, &gctx, RouteUsed::Soft, Some(inv_id.clone()), slot)
                                .await?;
                            gctx.merge(&out);
                            executed.insert(m);
                        }
                        continue;
                    }
                    Ok(_) | Err(PlanError::NoSatisfiableMember { .. }) => {}
                    Err(e) => {
                        return Err(Failure::new(FailureReason::ExecutorError, e.to_string()))
                    }
                }
                let missing = missing_params(&self.net, &g, &gctx, &executed);
                if missing.is_empty() {
                    break;
                }
                let found = resolve_ext(
                    &self.net,
                    self.inner.registry.as_deref(),
                    &g.id,
                    &missing,
                    &gctx.values(),
                    &exclude,
                );
                let Some(found) = found else {
                    tracing::info!(task = %self.task_id, group = %g.id, ?missing, "no EXT target found");
                    break;
                };
                exclude.insert(found.vertex.id.clone());
                let out = self
                    .invoke(
                        found.vertex,
                        &gctx,
                        RouteUsed::Ext,
                        Some(inv_id.clone()),
                        None,
                    )
                    .await?;
                gctx.merge(&out);
            }
            Ok(gctx.project(g.output_schema().names()))
        })
    }

    fn next_inv_id(&mut self) -> String {
        self.seq += 1;
        format!("{}/{}", self.task_id, self.seq)
    }

    fn blank_node(
        &self,
        inv_id: String,
        v: &Vertex,
        route: RouteUsed,
        parent: Option<String>,
    ) -> Invocation {
        Invocation {
            inv_id,
            vertex_id: v.id.clone(),
            vertex_kind: v.flow_kind(),
            parent,
            input_ctx: ContextMap::new(),
            output_ctx: None,
            status: InvocationStatus::Pending,
            started_at: None,
            ended_at: None,
            wall_time_ms: 0,
            span_ms: 0,
            token_cost: 0,
            route_kind_used: Some(route),
            reflected: false,
            error: None,
        }
    }

    /// Pending node for a planned member, if the step budget allows.
    fn plan_node(&mut self, member: &VertexId, parent: &str) -> Option<String> {
        let v = self.net.get(member)?.clone();
        let max = self.inner.options.limits.max_steps;
        if self.cell.state.lock().graph.nodes.len() >= max {
            return None;
        }
        let id = self.next_inv_id();
        let node = self.blank_node(id.clone(), &v, RouteUsed::Soft, Some(parent.to_string()));
        self.cell.state.lock().graph.nodes.push(node);
        Some(id)
    }

    fn start_node(
        &mut self,
        v: &Vertex,
        input: ContextMap,
        route: RouteUsed,
        parent: Option<String>,
        planned: Option<String>,
        reflected: bool,
    ) -> Result<String, Failure> {
        let max = self.inner.options.limits.max_steps;
        let id = match planned {
            Some(id) => id,
            None => {
                if self.cell.state.lock().graph.nodes.len() >= max {
                    return Err(Failure::new(
                        FailureReason::StepBudgetExhausted,
                        format!("step budget of {max} invocations exhausted"),
                    ));
                }
                self.next_inv_id()
            }
        };
        let t = Instant::now();
        self.first_start.get_or_insert(t);
        // Scheduling time between top-level invocations is charged to the next one.
        let from = match (&parent, self.top_mark) {
            (None, Some(m)) => m,
            _ => t,
        };
        self.started.insert(id.clone(), from);
        let now = self.clock.at(t);

        let mut st = self.cell.state.lock();
        if st.task.status == TaskStatus::New {
            st.task.transition(TaskStatus::Running, now);
        }
        let edges: Vec<Edge> = input
            .iter()
            .filter_map(|(name, e)| {
                let p = e.provenance.invocation()?;
                let produced = st
                    .graph
                    .node(p)
                    .and_then(|n| n.output_ctx.as_ref())
                    .is_some_and(|o| o.contains(name));
                produced.then(|| Edge {
                    producer: p.to_string(),
                    consumer: id.clone(),
                    param: name.clone(),
                })
            })
            .collect();
        st.graph.edges.extend(edges);
        if st.graph.node(&id).is_none() {
            let node = self.blank_node(id.clone(), v, route, parent);
            st.graph.nodes.push(node);
        }
        let node = st.graph.node_mut(&id).expect("node exists");
        node.input_ctx = input;
        node.status = InvocationStatus::Running;
        node.started_at = Some(now);
        node.route_kind_used = Some(route);
        node.reflected = reflected;
        Ok(id)
    }

    fn finish_node(
        &mut self,
        inv_id: &str,
        status: InvocationStatus,
        output: Option<ContextMap>,
        tokens: u64,
        error: Option<String>,
    ) {
        let t = Instant::now();
        let now = self.clock.at(t);
        let span = self
            .started
            .get(inv_id)
            .map(|s| t.saturating_duration_since(*s).as_millis() as u64)
            .unwrap_or(0);
        let mut st = self.cell.state.lock();
        close_node(&mut st.graph, inv_id, status, now, span);
        let node = st.graph.node_mut(inv_id).expect("node exists");
        if node.parent.is_none() {
            self.top_mark = Some(t);
        }
        node.output_ctx = output;
        node.token_cost = tokens;
        node.error = error;
    }

    fn finish(mut self, outcome: Result<ContextMap, Failure>) {
        let end = Instant::now();
        let now = self.clock.at(end);
        let mut interrupted = false;
        let (mut task, graph) = {
            let mut st = self.cell.state.lock();
            let open: Vec<String> = st
                .graph
                .nodes
                .iter()
                .rev()
                .filter(|n| n.status == InvocationStatus::Running)
                .map(|n| n.inv_id.clone())
                .collect();
            interrupted = !open.is_empty();
            for id in open {
                let span = self
                    .started
                    .get(&id)
                    .map(|s| end.saturating_duration_since(*s).as_millis() as u64)
                    .unwrap_or(0);
                close_node(&mut st.graph, &id, InvocationStatus::Fail, now, span);
                st.graph.node_mut(&id).expect("node").error = Some("interrupted".into());
            }
            (st.task.clone(), st.graph.clone())
        };

        if task.status == TaskStatus::New {
            task.transition(TaskStatus::Running, now);
        }
        let output_digest = match &outcome {
            Ok(ctx) => {
                task.output = Some(ctx.values());
                task.transition(TaskStatus::Success, now);
                canonical_map(&ctx.values())
            }
            Err(f) => {
                task.failure_reason = Some(f.reason);
                task.failure_detail = Some(f.detail.clone());
                task.transition(TaskStatus::Fail, now);
                if self
                    .last_ctx
                    .iter()
                    .any(|(_, e)| e.provenance != Provenance::TaskPayload)
                {
                    canonical_map(&std::mem::take(&mut self.last_ctx).values())
                } else {
                    String::new()
                }
            }
        };
        if let Err(f) = &outcome {
            tracing::info!(task = %self.task_id, reason = ?f.reason, detail = %f.detail, "task failed");
        }

        let total_end = match self.top_mark {
            Some(m) if !interrupted => m,
            _ => end,
        };
        let total_time_ms = self
            .first_start
            .map(|s| total_end.saturating_duration_since(s).as_millis() as u64)
            .unwrap_or(0);
        let record = FlowRecord {
            task_id: task.task_id.clone(),
            status: task.status,
            target: task.target.clone(),
            chain: graph
                .nodes
                .iter()
                .map(|n| ChainEntry {
                    vertex_id: n.vertex_id.clone(),
                    vertex_kind: n.vertex_kind,
                    status: n.status,
                    wall_time_ms: n.wall_time_ms,
                    token_cost: n.token_cost,
                    route_kind_used: n.route_kind_used,
                    input_digest: canonical_map(&n.input_ctx.values()),
                })
                .collect(),
            total_time_ms,
            total_tokens: graph.nodes.iter().map(|n| n.token_cost).sum(),
            created_at: task.created_at,
            ended_at: task.ended_at,
            input_digest: canonical_map(&task.payload.values()),
            output_digest,
            failure_reason: task.failure_reason,
        };
        if let Some(log) = &self.inner.flow_log {
            if let Err(e) = log.append(&record) {
                tracing::error!(task = %self.task_id, error = %e, "flow record not persisted");
            }
        }
        {
            let mut st = self.cell.state.lock();
            st.task = task;
            st.record = Some(record);
        }
        self.cell.done.send_replace(true);
    }
}

/// Marks a node ended. A group's own time is its span minus the spans of
/// its direct children.
fn close_node(
    graph: &mut super::graph::ExecutionGraph,
    inv_id: &str,
    status: InvocationStatus,
    now: u64,
    span: u64,
) {
    let is_group = graph
        .node(inv_id)
        .is_some_and(|n| n.vertex_kind == FlowVertexKind::Group);
    let children: u64 = if is_group {
        graph.children(inv_id).map(|c| c.span_ms).sum()
    } else {
        0
    };
    let node = graph.node_mut(inv_id).expect("node exists");
    node.status = status;
    node.ended_at = Some(now);
    node.span_ms = span;
    node.wall_time_ms = span.saturating_sub(children);
}

/// Required group outputs and required inputs of blocked members that the
/// group context does not hold yet. Empty once the group's outputs are in.
fn missing_params(
    net: &AgentNetwork,
    g: &Vertex,
    gctx: &ContextMap,
    executed: &BTreeSet<VertexId>,
) -> Vec<String> {
    let mut missing: BTreeSet<String> = g
        .output_schema()
        .required_names()
        .filter(|n| !gctx.contains(n))
        .map(str::to_string)
        .collect();
    if missing.is_empty() {
        return Vec::new();
    }
    let group = g.as_group().expect("group vertex");
    for m in group.members.iter().filter(|m| !executed.contains(*m)) {
        if let Some(mv) = net.get(m) {
            missing.extend(
                mv.input_schema()
                    .required_names()
                    .filter(|n| !gctx.contains(n))
                    .map(str::to_string),
            );
        }
    }
    missing.into_iter().collect()
}

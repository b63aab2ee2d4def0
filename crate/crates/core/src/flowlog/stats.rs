//! Task, subtask, protocol and per-vertex aggregates over flow records.
//!
//! Sums are kept as integers and divided only when the report is built, so
//! the result does not depend on record order or on how the parallel fold
//! splits the input.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::record::{FlowRecord, InvocationStatus, TaskStatus};
use crate::network::{FlowVertexKind, VertexId};
use crate::par::{self, Exec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusRow {
    pub status: TaskStatus,
    pub count: u64,
    pub pct: f64,
    pub avg_chain_len: f64,
    pub avg_time_s: f64,
    pub avg_tokens: f64,
}

/// Chain entries per vertex kind, split by status. Counts every entry,
/// planned or executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskRow {
    pub kind: FlowVertexKind,
    pub total: u64,
    pub new: u64,
    pub running: u64,
    pub success: u64,
    pub fail: u64,
}

impl SubtaskRow {
    pub fn count(&self, s: TaskStatus) -> u64 {
        match s {
            TaskStatus::New => self.new,
            TaskStatus::Running => self.running,
            TaskStatus::Success => self.success,
            TaskStatus::Fail => self.fail,
        }
    }

    pub fn pct(&self, s: TaskStatus) -> f64 {
        pct(self.count(s), self.total)
    }
}

/// Executed (success or fail) invocations per vertex kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRow {
    pub kind: FlowVertexKind,
    pub invocations: u64,
    pub avg_time_s: f64,
    /// Absent for RPA vertexes, which consume no tokens.
    pub avg_tokens: Option<f64>,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexRow {
    pub vertex_id: VertexId,
    pub kind: FlowVertexKind,
    pub invocations: u64,
    pub avg_time_s: f64,
    pub avg_tokens: Option<f64>,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexStats {
    /// Sorted by descending invocations, then vertex id.
    pub rows: Vec<VertexRow>,
    /// `(vertex, invocations)` in the same order: the long-tail view.
    pub histogram: Vec<(VertexId, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub records: u64,
    pub skipped_lines: usize,
    pub status_rows: Vec<StatusRow>,
    pub subtask_rows: Vec<SubtaskRow>,
    pub protocol_rows: Vec<ProtocolRow>,
    pub vertex: VertexStats,
}

fn pct(part: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        part as f64 * 100.0 / total as f64
    }
}

fn avg(sum: u64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct StatusAcc {
    count: u64,
    chain: u64,
    time_ms: u64,
    tokens: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct ExecAcc {
    executed: u64,
    success: u64,
    time_ms: u64,
    tokens: u64,
}

impl ExecAcc {
    fn add(&mut self, status: InvocationStatus, time_ms: u64, tokens: u64) {
        if !status.is_finished() {
            return;
        }
        self.executed += 1;
        self.success += u64::from(status == InvocationStatus::Success);
        self.time_ms += time_ms;
        self.tokens += tokens;
    }

    fn merge(&mut self, o: &ExecAcc) {
        self.executed += o.executed;
        self.success += o.success;
        self.time_ms += o.time_ms;
        self.tokens += o.tokens;
    }
}

#[derive(Debug, Clone, Default)]
struct VertexAcc {
    kind: Option<FlowVertexKind>,
    exec: ExecAcc,
}

#[derive(Debug, Clone, Default)]
struct Acc {
    records: u64,
    status: [StatusAcc; 4],
    subtasks: BTreeMap<FlowVertexKind, [u64; 4]>,
    protocol: BTreeMap<FlowVertexKind, ExecAcc>,
    vertexes: BTreeMap<VertexId, VertexAcc>,
}

fn status_index(s: TaskStatus) -> usize {
    s as usize
}

impl Acc {
    fn add(mut self, r: &FlowRecord) -> Self {
        self.records += 1;
        let s = &mut self.status[status_index(r.status)];
        s.count += 1;
        s.chain += r.chain.len() as u64;
        s.time_ms += r.total_time_ms;
        s.tokens += r.total_tokens;
        for c in &r.chain {
            self.subtasks.entry(c.vertex_kind).or_default()
                [status_index(c.status.as_task_status())] += 1;
            self.protocol.entry(c.vertex_kind).or_default().add(
                c.status,
                c.wall_time_ms,
                c.token_cost,
            );
            let v = self.vertexes.entry(c.vertex_id.clone()).or_default();
            v.kind = Some(v.kind.map_or(c.vertex_kind, |k| k.min(c.vertex_kind)));
            v.exec.add(c.status, c.wall_time_ms, c.token_cost);
        }
        self
    }

    fn merge(mut self, o: Acc) -> Self {
        self.records += o.records;
        for (a, b) in self.status.iter_mut().zip(o.status.iter()) {
            a.count += b.count;
            a.chain += b.chain;
            a.time_ms += b.time_ms;
            a.tokens += b.tokens;
        }
        for (k, counts) in o.subtasks {
            let mine = self.subtasks.entry(k).or_default();
            for (m, c) in mine.iter_mut().zip(counts) {
                *m += c;
            }
        }
        for (k, e) in o.protocol {
            self.protocol.entry(k).or_default().merge(&e);
        }
        for (id, v) in o.vertexes {
            let mine = self.vertexes.entry(id).or_default();
            mine.kind = match (mine.kind, v.kind) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            mine.exec.merge(&v.exec);
        }
        self
    }
}

fn accumulate(exec: Exec, records: &[FlowRecord]) -> Acc {
    par::fold(exec, records, Acc::default, Acc::add, Acc::merge)
}

/// Kinds that always get a row; others appear only when observed.
const TABLE_KINDS: [FlowVertexKind; 2] = [FlowVertexKind::Agent, FlowVertexKind::Rpa];

fn shown_kinds<T>(observed: &BTreeMap<FlowVertexKind, T>) -> Vec<FlowVertexKind> {
    FlowVertexKind::ALL
        .into_iter()
        .filter(|k| TABLE_KINDS.contains(k) || observed.contains_key(k))
        .collect()
}

fn tokens_for(kind: FlowVertexKind, e: &ExecAcc) -> Option<f64> {
    (kind != FlowVertexKind::Rpa).then(|| avg(e.tokens, e.executed))
}

fn vertex_stats_from(acc: &Acc) -> VertexStats {
    let mut rows: Vec<VertexRow> = acc
        .vertexes
        .iter()
        .map(|(id, v)| {
            let kind = v.kind.unwrap_or(FlowVertexKind::Agent);
            VertexRow {
                vertex_id: id.clone(),
                kind,
                invocations: v.exec.executed,
                avg_time_s: avg(v.exec.time_ms, v.exec.executed) / 1000.0,
                avg_tokens: tokens_for(kind, &v.exec),
                success_rate: pct(v.exec.success, v.exec.executed),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.invocations
            .cmp(&a.invocations)
            .then_with(|| a.vertex_id.cmp(&b.vertex_id))
    });
    let histogram = rows
        .iter()
        .map(|r| (r.vertex_id.clone(), r.invocations))
        .collect();
    VertexStats { rows, histogram }
}

pub fn compute_stats(records: &[FlowRecord]) -> StatsReport {
    compute_stats_with(Exec::default(), records)
}

pub fn compute_stats_with(exec: Exec, records: &[FlowRecord]) -> StatsReport {
    let acc = accumulate(exec, records);
    let status_rows = TaskStatus::ALL
        .iter()
        .map(|&s| {
            let a = acc.status[status_index(s)];
            StatusRow {
                status: s,
                count: a.count,
                pct: pct(a.count, acc.records),
                avg_chain_len: avg(a.chain, a.count),
                avg_time_s: avg(a.time_ms, a.count) / 1000.0,
                avg_tokens: avg(a.tokens, a.count),
            }
        })
        .collect();
    let subtask_rows = shown_kinds(&acc.subtasks)
        .into_iter()
        .map(|kind| {
            let c = acc.subtasks.get(&kind).copied().unwrap_or_default();
            SubtaskRow {
                kind,
                total: c.iter().sum(),
                new: c[0],
                running: c[1],
                success: c[2],
                fail: c[3],
            }
        })
        .collect();
    let protocol_rows = shown_kinds(&acc.protocol)
        .into_iter()
        .map(|kind| {
            let e = acc.protocol.get(&kind).copied().unwrap_or_default();
            ProtocolRow {
                kind,
                invocations: e.executed,
                avg_time_s: avg(e.time_ms, e.executed) / 1000.0,
                avg_tokens: tokens_for(kind, &e),
                success_rate: pct(e.success, e.executed),
            }
        })
        .collect();
    StatsReport {
        records: acc.records,
        skipped_lines: 0,
        status_rows,
        subtask_rows,
        protocol_rows,
        vertex: vertex_stats_from(&acc),
    }
}

pub fn compute_vertex_stats(records: &[FlowRecord]) -> VertexStats {
    compute_vertex_stats_with(Exec::default(), records)
}

pub fn compute_vertex_stats_with(exec: Exec, records: &[FlowRecord]) -> VertexStats {
    vertex_stats_from(&accumulate(exec, records))
}

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::context::ContextMap;
use crate::flowlog::{InvocationStatus, RouteUsed};
use crate::network::{FlowVertexKind, VertexId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub inv_id: String,
    pub vertex_id: VertexId,
    pub vertex_kind: FlowVertexKind,
    /// Enclosing group invocation, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub input_ctx: ContextMap,
    #[serde(default)]
    pub output_ctx: Option<ContextMap>,
    pub status: InvocationStatus,
    #[serde(default)]
    pub started_at: Option<u64>,
    #[serde(default)]
    pub ended_at: Option<u64>,
    /// Own time. For groups this excludes time spent in child invocations.
    pub wall_time_ms: u64,
    /// Start to end, children included.
    pub span_ms: u64,
    pub token_cost: u64,
    #[serde(default)]
    pub route_kind_used: Option<RouteUsed>,
    /// Re-invoked after a stall with a `reflection_note`.
    #[serde(default)]
    pub reflected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub producer: String,
    pub consumer: String,
    pub param: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionGraph {
    pub task_id: String,
    pub nodes: Vec<Invocation>,
    pub edges: Vec<Edge>,
}

impl ExecutionGraph {
    pub fn new(task_id: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            ..Self::default()
        }
    }

    pub fn node(&self, inv_id: &str) -> Option<&Invocation> {
        self.nodes.iter().find(|n| n.inv_id == inv_id)
    }

    pub fn node_mut(&mut self, inv_id: &str) -> Option<&mut Invocation> {
        self.nodes.iter_mut().find(|n| n.inv_id == inv_id)
    }

    pub fn children<'a>(&'a self, inv_id: &'a str) -> impl Iterator<Item = &'a Invocation> + 'a {
        self.nodes
            .iter()
            .filter(move |n| n.parent.as_deref() == Some(inv_id))
    }

    pub fn reflections(&self) -> usize {
        self.nodes.iter().filter(|n| n.reflected).count()
    }

    pub fn is_acyclic(&self) -> bool {
        let mut indeg: BTreeMap<&str, usize> =
            self.nodes.iter().map(|n| (n.inv_id.as_str(), 0)).collect();
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        let pairs: BTreeSet<(&str, &str)> = self
            .edges
            .iter()
            .map(|e| (e.producer.as_str(), e.consumer.as_str()))
            .collect();
        for (p, c) in &pairs {
            *indeg.entry(c).or_default() += 1;
            indeg.entry(p).or_default();
            out.entry(p).or_default().push(c);
        }
        let mut queue: VecDeque<&str> = indeg
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(n, _)| *n)
            .collect();
        let mut seen = 0;
        while let Some(n) = queue.pop_front() {
            seen += 1;
            for c in out.get(n).into_iter().flatten() {
                let d = indeg.get_mut(c).expect("known node");
                *d -= 1;
                if *d == 0 {
                    queue.push_back(c);
                }
            }
        }
        seen == indeg.len()
    }

    /// Graphviz digraph: data edges are labelled with the param name,
    /// group containment is dotted.
    pub fn to_dot(&self) -> String {
        let mut s = format!("digraph {} {{\n  rankdir=LR;\n", quote(&self.task_id));
        for n in &self.nodes {
            let label = format!(
                "{}\\n#{} {}",
                escape(n.vertex_id.as_str()),
                escape(n.inv_id.rsplit('/').next().unwrap_or(&n.inv_id)),
                format!("{:?}", n.status).to_lowercase()
            );
            let shape = if n.vertex_kind == FlowVertexKind::Group {
                "box"
            } else {
                "ellipse"
            };
            let _ = writeln!(
                s,
                "  {} [label=\"{label}\", shape={shape}];",
                quote(&n.inv_id)
            );
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "  {} -> {} [label={}];",
                quote(&e.producer),
                quote(&e.consumer),
                quote(&e.param)
            );
        }
        for n in &self.nodes {
            if let Some(p) = &n.parent {
                let _ = writeln!(s, "  {} -> {} [style=dotted];", quote(p), quote(&n.inv_id));
            }
        }
        s.push_str("}\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn quote(s: &str) -> String {
    format!("\"{}\"", escape(s))
}

//! Reference implementations written directly from the contracts, without
//! sharing code with the library.

use std::collections::BTreeSet;

use agentmesh::network::{ParamError, ParamKind, ParameterSchema};
use serde_json::{Map, Value};

pub fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

pub fn kind_ok(kind: ParamKind, v: &Value) -> bool {
    let want = match kind {
        ParamKind::Any => return true,
        ParamKind::String => "string",
        ParamKind::Number => "number",
        ParamKind::Boolean => "boolean",
        ParamKind::Object => "object",
        ParamKind::Array => "array",
    };
    kind_name(v) == want
}

/// Errors in schema order, then undeclared keys in key order.
pub fn check(
    values: &Map<String, Value>,
    schema: &ParameterSchema,
) -> (Vec<ParamError>, Vec<String>) {
    let mut errors = Vec::new();
    for p in &schema.params {
        if !p.required {
            continue;
        }
        match values.get(&p.name) {
            None => errors.push(ParamError::MissingRequired {
                name: p.name.clone(),
            }),
            Some(v) if !kind_ok(p.kind, v) => errors.push(ParamError::KindMismatch {
                name: p.name.clone(),
                expected: p.kind,
                actual: kind_name(v).to_string(),
            }),
            Some(_) => {}
        }
    }
    let declared: BTreeSet<&str> = schema.params.iter().map(|p| p.name.as_str()).collect();
    let mut extra: Vec<String> = values
        .keys()
        .filter(|k| !declared.contains(k.as_str()))
        .cloned()
        .collect();
    extra.sort();
    (errors, extra)
}

pub fn accepts(values: &Map<String, Value>, schema: &ParameterSchema) -> bool {
    check(values, schema).0.is_empty()
}

/// Maximal runs of alphanumerics and underscores.
pub fn words(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            cur.push(c);
        } else if !cur.is_empty() {
            out.insert(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.insert(cur);
    }
    out
}

pub fn jaccard(a: &str, b: &str) -> f64 {
    let (a, b) = (words(a), words(b));
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.iter().filter(|t| b.contains(*t)).count();
    let union = a.union(&b).count();
    inter as f64 / union as f64
}

/// Sorted-key compact JSON, recursively.
pub fn canonical(v: &Value) -> String {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let parts: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical(&m[k])))
                .collect();
            format!("{{{}}}", parts.join(","))
        }
        Value::Array(items) => {
            format!(
                "[{}]",
                items.iter().map(canonical).collect::<Vec<_>>().join(",")
            )
        }
        other => other.to_string(),
    }
}

/// Guard expressions built as trees, rendered to the text grammar.
#[derive(Debug, Clone)]
pub enum GuardTree {
    Has(String),
    Eq(String, Value),
    And(Box<GuardTree>, Box<GuardTree>),
    Or(Box<GuardTree>, Box<GuardTree>),
    Not(Box<GuardTree>),
}

impl GuardTree {
    pub fn text(&self) -> String {
        match self {
            GuardTree::Has(p) => format!("has({p})"),
            GuardTree::Eq(p, v) => format!("eq({p}, {v})"),
            GuardTree::And(a, b) => format!("and({}, {})", a.text(), b.text()),
            GuardTree::Or(a, b) => format!("or({},{})", a.text(), b.text()),
            GuardTree::Not(a) => format!("not( {} )", a.text()),
        }
    }

    pub fn holds(&self, ctx: &Map<String, Value>) -> bool {
        match self {
            GuardTree::Has(p) => ctx.contains_key(p),
            GuardTree::Eq(p, v) => ctx.get(p) == Some(v),
            GuardTree::And(a, b) => a.holds(ctx) && b.holds(ctx),
            GuardTree::Or(a, b) => a.holds(ctx) || b.holds(ctx),
            GuardTree::Not(a) => !a.holds(ctx),
        }
    }
}

/// A consistent record: totals are derived from the chain.
pub fn record(
    task_id: String,
    status: agentmesh::flowlog::TaskStatus,
    chain: Vec<agentmesh::flowlog::ChainEntry>,
    output_digest: String,
) -> agentmesh::flowlog::FlowRecord {
    agentmesh::flowlog::FlowRecord {
        task_id,
        status,
        target: chain
            .first()
            .map_or_else(|| "none".into(), |c| c.vertex_id.clone()),
        total_time_ms: chain.iter().map(|c| c.wall_time_ms).sum(),
        total_tokens: chain.iter().map(|c| c.token_cost).sum(),
        chain,
        created_at: 0,
        ended_at: None,
        input_digest: "{}".into(),
        output_digest,
        failure_reason: None,
    }
}

pub fn entry(
    vertex: &str,
    status: agentmesh::flowlog::InvocationStatus,
) -> agentmesh::flowlog::ChainEntry {
    agentmesh::flowlog::ChainEntry {
        vertex_id: vertex.into(),
        vertex_kind: agentmesh::network::FlowVertexKind::Agent,
        status,
        wall_time_ms: 1,
        token_cost: 1,
        route_kind_used: None,
        input_digest: "{}".into(),
    }
}

//! Vertex kinds, their descriptor file format, and typed routes.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::schema::{validate_schema, ParameterSchema};

/// Opaque vertex identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub String);

impl VertexId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VertexId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for VertexId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// How an agent turns inputs into outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogicBinding {
    Builtin(String),
    Command {
        argv: Vec<String>,
        timeout_s: f64,
    },
    Http {
        #[serde(rename = "endpoint")]
        endpoint_url: String,
        timeout_s: f64,
    },
    Llm {
        model_hint: String,
    },
}

impl LogicBinding {
    pub fn builtin(transform: impl Into<String>) -> Self {
        LogicBinding::Builtin(transform.into())
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            LogicBinding::Command { argv, timeout_s } => {
                if argv.is_empty() {
                    out.push("command argv is empty".into());
                }
                if !(*timeout_s > 0.0) {
                    out.push("command timeout_s must be positive".into());
                }
            }
            LogicBinding::Http { timeout_s, .. } if !(*timeout_s > 0.0) => {
                out.push("http timeout_s must be positive".into());
            }
            _ => {}
        }
        out
    }
}

/// Single-agent knowledge: name, description, prompt, I/O schemas, logic.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRole {
    pub name: String,
    pub description: String,
    pub system_prompt: String,
    pub input_schema: ParameterSchema,
    pub output_schema: ParameterSchema,
    pub logic: LogicBinding,
}

/// Goal-oriented group of member vertexes behind group-level schemas.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentGroup {
    pub name: String,
    pub goal_description: String,
    pub group_prompt: String,
    pub input_schema: ParameterSchema,
    pub output_schema: ParameterSchema,
    /// Order matters: it is the planner's tie-breaker.
    pub members: Vec<VertexId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolTag {
    Rpa,
    Mcp,
    Generic,
}

/// A service outside the agent model (RPA workflow, MCP server, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalDescriptor {
    pub name: String,
    pub description: String,
    pub input_schema: ParameterSchema,
    pub output_schema: ParameterSchema,
    pub protocol_tag: ProtocolTag,
    pub endpoint_url: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VertexKind {
    Agent(AgentRole),
    Group(AgentGroup),
    External(ExternalDescriptor),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VertexDescriptor", into = "VertexDescriptor")]
pub struct Vertex {
    pub id: VertexId,
    pub kind: VertexKind,
}

impl Vertex {
    pub fn agent(id: impl Into<VertexId>, role: AgentRole) -> Self {
        Self {
            id: id.into(),
            kind: VertexKind::Agent(role),
        }
    }

    pub fn group(id: impl Into<VertexId>, group: AgentGroup) -> Self {
        Self {
            id: id.into(),
            kind: VertexKind::Group(group),
        }
    }

    pub fn external(id: impl Into<VertexId>, ext: ExternalDescriptor) -> Self {
        Self {
            id: id.into(),
            kind: VertexKind::External(ext),
        }
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            VertexKind::Agent(a) => &a.name,
            VertexKind::Group(g) => &g.name,
            VertexKind::External(e) => &e.name,
        }
    }

    pub fn description(&self) -> &str {
        match &self.kind {
            VertexKind::Agent(a) => &a.description,
            VertexKind::Group(g) => &g.goal_description,
            VertexKind::External(e) => &e.description,
        }
    }

    pub fn input_schema(&self) -> &ParameterSchema {
        match &self.kind {
            VertexKind::Agent(a) => &a.input_schema,
            VertexKind::Group(g) => &g.input_schema,
            VertexKind::External(e) => &e.input_schema,
        }
    }

    pub fn output_schema(&self) -> &ParameterSchema {
        match &self.kind {
            VertexKind::Agent(a) => &a.output_schema,
            VertexKind::Group(g) => &g.output_schema,
            VertexKind::External(e) => &e.output_schema,
        }
    }

    pub fn as_group(&self) -> Option<&AgentGroup> {
        match &self.kind {
            VertexKind::Group(g) => Some(g),
            _ => None,
        }
    }

    pub fn is_group(&self) -> bool {
        self.as_group().is_some()
    }

    /// Classification used in flow records and the protocol tables.
    pub fn flow_kind(&self) -> FlowVertexKind {
        match &self.kind {
            VertexKind::Agent(a) => match a.logic {
                LogicBinding::Command { .. } => FlowVertexKind::Rpa,
                _ => FlowVertexKind::Agent,
            },
            VertexKind::Group(_) => FlowVertexKind::Group,
            VertexKind::External(e) if e.protocol_tag == ProtocolTag::Rpa => FlowVertexKind::Rpa,
            VertexKind::External(_) => FlowVertexKind::External,
        }
    }

    /// Problems that make the vertex invalid on its own, without a network.
    pub fn self_check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.0.is_empty() {
            out.push("empty vertex id".to_string());
        }
        if self.name().is_empty() {
            out.push("empty name".to_string());
        }
        for (label, schema) in [
            ("input", self.input_schema()),
            ("output", self.output_schema()),
        ] {
            for v in validate_schema(schema).violations {
                out.push(format!("{label} schema: {v}"));
            }
        }
        match &self.kind {
            VertexKind::Agent(a) => out.extend(a.logic.problems()),
            VertexKind::Group(g) => {
                if g.members.is_empty() {
                    out.push("group has no members".to_string());
                }
                if g.members.contains(&self.id) {
                    out.push("group lists itself as a member".to_string());
                }
            }
            VertexKind::External(e) => {
                if e.endpoint_url.is_empty() {
                    out.push("external vertex has no endpoint_url".to_string());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowVertexKind {
    Agent,
    Rpa,
    Group,
    External,
}

impl FlowVertexKind {
    pub const ALL: [FlowVertexKind; 4] = [
        FlowVertexKind::Agent,
        FlowVertexKind::Rpa,
        FlowVertexKind::Group,
        FlowVertexKind::External,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FlowVertexKind::Agent => "Agent",
            FlowVertexKind::Rpa => "RPA",
            FlowVertexKind::Group => "Group",
            FlowVertexKind::External => "External",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Agent,
    Group,
    External,
}

/// The flat on-disk / on-wire vertex descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexDescriptor {
    pub id: String,
    pub kind: DescriptorKind,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    #[serde(default)]
    pub input_schema: ParameterSchema,
    #[serde(default)]
    pub output_schema: ParameterSchema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logic: Option<LogicBinding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol_tag: Option<ProtocolTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid vertex descriptor: {0}")]
pub struct DescriptorError(pub String);

impl TryFrom<VertexDescriptor> for Vertex {
    type Error = DescriptorError;

    fn try_from(d: VertexDescriptor) -> Result<Self, Self::Error> {
        let kind = match d.kind {
            DescriptorKind::Agent => VertexKind::Agent(AgentRole {
                name: d.name,
                description: d.description,
                system_prompt: d.system_prompt.unwrap_or_default(),
                input_schema: d.input_schema,
                output_schema: d.output_schema,
                logic: d
                    .logic
                    .ok_or_else(|| DescriptorError("agent descriptor needs \"logic\"".into()))?,
            }),
            DescriptorKind::Group => VertexKind::Group(AgentGroup {
                name: d.name,
                goal_description: d.description,
                group_prompt: d.system_prompt.unwrap_or_default(),
                input_schema: d.input_schema,
                output_schema: d.output_schema,
                members: d
                    .members
                    .ok_or_else(|| DescriptorError("group descriptor needs \"members\"".into()))?
                    .into_iter()
                    .map(VertexId)
                    .collect(),
            }),
            DescriptorKind::External => VertexKind::External(ExternalDescriptor {
                name: d.name,
                description: d.description,
                input_schema: d.input_schema,
                output_schema: d.output_schema,
                protocol_tag: d.protocol_tag.unwrap_or(ProtocolTag::Generic),
                endpoint_url: d.endpoint_url.ok_or_else(|| {
                    DescriptorError("external descriptor needs \"endpoint_url\"".into())
                })?,
            }),
        };
        Ok(Vertex {
            id: VertexId(d.id),
            kind,
        })
    }
}

impl From<Vertex> for VertexDescriptor {
    fn from(v: Vertex) -> Self {
        let id = v.id.0;
        match v.kind {
            VertexKind::Agent(a) => VertexDescriptor {
                id,
                kind: DescriptorKind::Agent,
                name: a.name,
                description: a.description,
                system_prompt: Some(a.system_prompt),
                input_schema: a.input_schema,
                output_schema: a.output_schema,
                logic: Some(a.logic),
                members: None,
                protocol_tag: None,
                endpoint_url: None,
            },
            VertexKind::Group(g) => VertexDescriptor {
                id,
                kind: DescriptorKind::Group,
                name: g.name,
                description: g.goal_description,
                system_prompt: Some(g.group_prompt),
                input_schema: g.input_schema,
                output_schema: g.output_schema,
                logic: None,
                members: Some(g.members.into_iter().map(|m| m.0).collect()),
                protocol_tag: None,
                endpoint_url: None,
            },
            VertexKind::External(e) => VertexDescriptor {
                id,
                kind: DescriptorKind::External,
                name: e.name,
                description: e.description,
                system_prompt: None,
                input_schema: e.input_schema,
                output_schema: e.output_schema,
                logic: None,
                members: None,
                protocol_tag: Some(e.protocol_tag),
                endpoint_url: Some(e.endpoint_url),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RouteKind {
    Hard,
    Soft,
    Ext,
}

impl fmt::Display for RouteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RouteKind::Hard => "HARD",
            RouteKind::Soft => "SOFT",
            RouteKind::Ext => "EXT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub from: VertexId,
    pub to: VertexId,
    pub kind: RouteKind,
    /// Lower runs earlier.
    #[serde(default)]
    pub priority: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
}

impl Route {
    pub fn new(from: impl Into<VertexId>, to: impl Into<VertexId>, kind: RouteKind) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            kind,
            priority: 0,
            guard: None,
        }
    }

    pub fn hard(from: impl Into<VertexId>, to: impl Into<VertexId>) -> Self {
        Self::new(from, to, RouteKind::Hard)
    }

    pub fn soft(from: impl Into<VertexId>, to: impl Into<VertexId>) -> Self {
        Self::new(from, to, RouteKind::Soft)
    }

    pub fn ext(from: impl Into<VertexId>, to: impl Into<VertexId>) -> Self {
        Self::new(from, to, RouteKind::Ext)
    }

    pub fn with_priority(mut self, priority: i64) -> Self {
        self.priority = priority;
        self
    }

    pub fn with_guard(mut self, guard: impl Into<String>) -> Self {
        self.guard = Some(guard.into());
        self
    }
}

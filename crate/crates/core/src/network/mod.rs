//! The agent network: vertexes joined by typed routes.
//!
//! An [`AgentNetwork`] value is an immutable, versioned snapshot. Mutations
//! return a new snapshot with `version + 1`; the receiver is never touched,
//! so tasks that captured an older `Arc<AgentNetwork>` keep a stable view.
//! [`NetworkOwner`] serializes mutations and publishes the latest snapshot.

pub mod guard;
pub mod schema;
pub mod vertex;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

pub use guard::{eval_guard_text, Guard, GuardParseError};
pub use schema::{
    check_params, is_identifier, validate_schema, value_kind, CheckResult, ParamError, ParamKind,
    ParameterSchema, ParameterSpec, SchemaViolation, ValidationReport,
};
pub use vertex::{
    AgentGroup, AgentRole, DescriptorError, DescriptorKind, ExternalDescriptor, FlowVertexKind,
    LogicBinding, ProtocolTag, Route, RouteKind, Vertex, VertexDescriptor, VertexId, VertexKind,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetworkError {
    #[error("DuplicateId: vertex {0} already exists")]
    DuplicateId(VertexId),
    #[error("InvalidVertex: {0}")]
    InvalidVertex(String),
    #[error("UnknownVertex: {0}")]
    UnknownVertex(VertexId),
    #[error("UnknownEndpoint: {0}")]
    UnknownEndpoint(VertexId),
    #[error("SelfLoop: route {0} -> {0}")]
    SelfLoop(VertexId),
    #[error("SoftRouteOutsideGroup: {from} and {to} share no group")]
    SoftRouteOutsideGroup { from: VertexId, to: VertexId },
    #[error("ExtRouteInsideGroup: {to} is inside group {from}")]
    ExtRouteInsideGroup { from: VertexId, to: VertexId },
    #[error("ExtRouteFromNonGroup: {0} is not a group")]
    ExtRouteFromNonGroup(VertexId),
    #[error("WouldEmptyGroup: removing {member} empties group {group}")]
    WouldEmptyGroup { group: VertexId, member: VertexId },
    #[error("NotAGroup: {0}")]
    NotAGroup(VertexId),
    #[error("CycleDetected at {0}")]
    CycleDetected(VertexId),
    #[error("UnknownRoute: {from} -> {to}")]
    UnknownRoute { from: VertexId, to: VertexId },
}

impl NetworkError {
    /// Stable error name used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            NetworkError::DuplicateId(_) => "DuplicateId",
            NetworkError::InvalidVertex(_) => "InvalidVertex",
            NetworkError::UnknownVertex(_) => "UnknownVertex",
            NetworkError::UnknownEndpoint(_) => "UnknownEndpoint",
            NetworkError::SelfLoop(_) => "SelfLoop",
            NetworkError::SoftRouteOutsideGroup { .. } => "SoftRouteOutsideGroup",
            NetworkError::ExtRouteInsideGroup { .. } => "ExtRouteInsideGroup",
            NetworkError::ExtRouteFromNonGroup(_) => "ExtRouteFromNonGroup",
            NetworkError::WouldEmptyGroup { .. } => "WouldEmptyGroup",
            NetworkError::NotAGroup(_) => "NotAGroup",
            NetworkError::CycleDetected(_) => "CycleDetected",
            NetworkError::UnknownRoute { .. } => "UnknownRoute",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentNetwork {
    version: u64,
    vertexes: BTreeMap<VertexId, Arc<Vertex>>,
    routes: Vec<Route>,
}

impl AgentNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn get(&self, id: &VertexId) -> Option<&Arc<Vertex>> {
        self.vertexes.get(id)
    }

    pub fn contains(&self, id: &VertexId) -> bool {
        self.vertexes.contains_key(id)
    }

    pub fn vertexes(&self) -> impl Iterator<Item = &Arc<Vertex>> {
        self.vertexes.values()
    }

    pub fn len(&self) -> usize {
        self.vertexes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertexes.is_empty()
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn routes_from<'a>(
        &'a self,
        id: &'a VertexId,
        kind: RouteKind,
    ) -> impl Iterator<Item = &'a Route> + 'a {
        self.routes
            .iter()
            .filter(move |r| &r.from == id && r.kind == kind)
    }

    fn bumped(&self) -> Self {
        let mut next = self.clone();
        next.version += 1;
        next
    }

    pub fn add_vertex(&self, v: Vertex) -> Result<AgentNetwork, NetworkError> {
        if self.vertexes.contains_key(&v.id) {
            return Err(NetworkError::DuplicateId(v.id));
        }
        let problems = v.self_check();
        if !problems.is_empty() {
            return Err(NetworkError::InvalidVertex(format!(
                "{}: {}",
                v.id,
                problems.join("; ")
            )));
        }
        if let Some(g) = v.as_group() {
            if let Some(missing) = g.members.iter().find(|m| !self.contains(m)) {
                return Err(NetworkError::InvalidVertex(format!(
                    "{}: member {missing} does not exist",
                    v.id
                )));
            }
        }
        let mut next = self.bumped();
        let id = v.id.clone();
        next.vertexes.insert(id.clone(), Arc::new(v));
        if let Err(e) = next.check_membership_acyclic() {
            return Err(NetworkError::InvalidVertex(format!("{id}: {e}")));
        }
        Ok(next)
    }

    pub fn add_route(&self, r: Route) -> Result<AgentNetwork, NetworkError> {
        self.check_route(&r)?;
        let mut next = self.bumped();
        next.routes.push(r);
        Ok(next)
    }

    /// Validates a route against this snapshot without adding it.
    pub fn check_route(&self, r: &Route) -> Result<(), NetworkError> {
        if r.from == r.to {
            return Err(NetworkError::SelfLoop(r.from.clone()));
        }
        for end in [&r.from, &r.to] {
            if !self.contains(end) {
                return Err(NetworkError::UnknownEndpoint(end.clone()));
            }
        }
        match r.kind {
            RouteKind::Hard => Ok(()),
            RouteKind::Soft => {
                if self.share_group(&r.from, &r.to) {
                    Ok(())
                } else {
                    Err(NetworkError::SoftRouteOutsideGroup {
                        from: r.from.clone(),
                        to: r.to.clone(),
                    })
                }
            }
            RouteKind::Ext => {
                if !self.vertexes[&r.from].is_group() {
                    return Err(NetworkError::ExtRouteFromNonGroup(r.from.clone()));
                }
                if self.is_inside(&r.from, &r.to) {
                    Err(NetworkError::ExtRouteInsideGroup {
                        from: r.from.clone(),
                        to: r.to.clone(),
                    })
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn remove_route(&self, r: &Route) -> Result<AgentNetwork, NetworkError> {
        let pos =
            self.routes
                .iter()
                .position(|x| x == r)
                .ok_or_else(|| NetworkError::UnknownRoute {
                    from: r.from.clone(),
                    to: r.to.clone(),
                })?;
        let mut next = self.bumped();
        next.routes.remove(pos);
        Ok(next)
    }

    /// Removes a vertex, its incident routes, and its group memberships.
    pub fn remove_vertex(&self, id: &VertexId) -> Result<AgentNetwork, NetworkError> {
        if !self.contains(id) {
            return Err(NetworkError::UnknownVertex(id.clone()));
        }
        let mut next = self.bumped();
        next.vertexes.remove(id);
        next.routes.retain(|r| &r.from != id && &r.to != id);
        for (gid, v) in next.vertexes.iter_mut() {
            let Some(g) = v.as_group() else { continue };
            if !g.members.contains(id) {
                continue;
            }
            if g.members.iter().all(|m| m == id) {
                return Err(NetworkError::WouldEmptyGroup {
                    group: gid.clone(),
                    member: id.clone(),
                });
            }
            let mut updated = (**v).clone();
            if let VertexKind::Group(ref mut ug) = updated.kind {
                ug.members.retain(|m| m != id);
            }
            *v = Arc::new(updated);
        }
        // SOFT routes may have lost their shared group.
        let keep: Vec<bool> = next
            .routes
            .iter()
            .map(|r| r.kind != RouteKind::Soft || next.share_group(&r.from, &r.to))
            .collect();
        let mut it = keep.into_iter();
        next.routes.retain(|_| it.next().unwrap_or(true));
        Ok(next)
    }

    /// Whether `id` is a member of `group` at any nesting depth, nested
    /// group ids included.
    pub fn is_inside(&self, group: &VertexId, id: &VertexId) -> bool {
        let mut stack = vec![group];
        let mut seen = BTreeSet::new();
        while let Some(g) = stack.pop() {
            let Some(members) = self.get(g).and_then(|v| v.as_group()).map(|g| &g.members) else {
                continue;
            };
            for m in members {
                if m == id {
                    return true;
                }
                if seen.insert(m) {
                    stack.push(m);
                }
            }
        }
        false
    }

    /// Direct parent groups of `id`.
    pub fn parents_of<'a>(&'a self, id: &'a VertexId) -> impl Iterator<Item = &'a VertexId> + 'a {
        self.vertexes.iter().filter_map(move |(gid, v)| {
            v.as_group().filter(|g| g.members.contains(id)).map(|_| gid)
        })
    }

    pub fn share_group(&self, a: &VertexId, b: &VertexId) -> bool {
        self.vertexes.values().any(|v| {
            v.as_group()
                .is_some_and(|g| g.members.contains(a) && g.members.contains(b))
        })
    }

    /// Depth-first member expansion; nested groups are replaced by their
    /// own expansion, and each id is kept at its first occurrence.
    pub fn flatten_group(&self, group_id: &VertexId) -> Result<Vec<VertexId>, NetworkError> {
        let v = self
            .get(group_id)
            .ok_or_else(|| NetworkError::UnknownVertex(group_id.clone()))?;
        if !v.is_group() {
            return Err(NetworkError::NotAGroup(group_id.clone()));
        }
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        let mut stack = vec![group_id.clone()];
        self.flatten_into(group_id, &mut stack, &mut seen, &mut out)?;
        Ok(out)
    }

    fn flatten_into(
        &self,
        group_id: &VertexId,
        path: &mut Vec<VertexId>,
        seen: &mut BTreeSet<VertexId>,
        out: &mut Vec<VertexId>,
    ) -> Result<(), NetworkError> {
        let g = self.vertexes[group_id].as_group().expect("group");
        for m in &g.members {
            let mv = self
                .get(m)
                .ok_or_else(|| NetworkError::UnknownVertex(m.clone()))?;
            if mv.is_group() {
                if path.contains(m) {
                    return Err(NetworkError::CycleDetected(m.clone()));
                }
                path.push(m.clone());
                self.flatten_into(m, path, seen, out)?;
                path.pop();
            } else if seen.insert(m.clone()) {
                out.push(m.clone());
            }
        }
        Ok(())
    }

    fn check_membership_acyclic(&self) -> Result<(), NetworkError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Active,
            Done,
        }
        fn visit(
            net: &AgentNetwork,
            id: &VertexId,
            marks: &mut BTreeMap<VertexId, Mark>,
        ) -> Result<(), NetworkError> {
            match marks.get(id) {
                Some(Mark::Done) => return Ok(()),
                Some(Mark::Active) => return Err(NetworkError::CycleDetected(id.clone())),
                None => {}
            }
            marks.insert(id.clone(), Mark::Active);
            if let Some(g) = net.get(id).and_then(|v| v.as_group()) {
                for m in &g.members {
                    visit(net, m, marks)?;
                }
            }
            marks.insert(id.clone(), Mark::Done);
            Ok(())
        }
        let mut marks = BTreeMap::new();
        for id in self.vertexes.keys() {
            visit(self, id, &mut marks)?;
        }
        Ok(())
    }
}

/// Single writer for the network; readers take cheap snapshots.
#[derive(Debug, Default)]
pub struct NetworkOwner {
    current: RwLock<Arc<AgentNetwork>>,
    write: Mutex<()>,
}

impl NetworkOwner {
    pub fn new(net: AgentNetwork) -> Self {
        Self {
            current: RwLock::new(Arc::new(net)),
            write: Mutex::new(()),
        }
    }

    pub fn snapshot(&self) -> Arc<AgentNetwork> {
        self.current.read().clone()
    }

    pub fn version(&self) -> u64 {
        self.current.read().version()
    }

    /// Applies `f` to the latest snapshot; mutations run one at a time.
    pub fn mutate<F>(&self, f: F) -> Result<Arc<AgentNetwork>, NetworkError>
    where
        F: FnOnce(&AgentNetwork) -> Result<AgentNetwork, NetworkError>,
    {
        let _guard = self.write.lock();
        let base = self.snapshot();
        let next = Arc::new(f(&base)?);
        *self.current.write() = next.clone();
        Ok(next)
    }

    pub fn add_vertex(&self, v: Vertex) -> Result<Arc<AgentNetwork>, NetworkError> {
        self.mutate(|n| n.add_vertex(v))
    }

    pub fn add_route(&self, r: Route) -> Result<Arc<AgentNetwork>, NetworkError> {
        self.mutate(|n| n.add_route(r))
    }

    pub fn remove_vertex(&self, id: &VertexId) -> Result<Arc<AgentNetwork>, NetworkError> {
        self.mutate(|n| n.remove_vertex(id))
    }
}

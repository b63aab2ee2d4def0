//! Member ordering inside a group.

use std::collections::BTreeSet;

use async_trait::async_trait;

use crate::network::{AgentNetwork, RouteKind, VertexId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    /// Members remain but none can run; `missing` lists the required
    /// inputs no available or planned source provides.
    #[error("NoSatisfiableMember: missing {missing:?}")]
    NoSatisfiableMember { missing: Vec<String> },
    #[error("NotAGroup: {0}")]
    NotAGroup(VertexId),
}

#[async_trait]
pub trait Planner: Send + Sync {
    /// Orders the not-yet-executed members of `group`, given the names
    /// already present in the group's context.
    async fn plan(
        &self,
        net: &AgentNetwork,
        group: &VertexId,
        available: &BTreeSet<String>,
        executed: &BTreeSet<VertexId>,
    ) -> Result<Vec<VertexId>, PlanError>;
}

/// Greedy data-dependency planner.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultPlanner;

#[async_trait]
impl Planner for DefaultPlanner {
    async fn plan(
        &self,
        net: &AgentNetwork,
        group: &VertexId,
        available: &BTreeSet<String>,
        executed: &BTreeSet<VertexId>,
    ) -> Result<Vec<VertexId>, PlanError> {
        plan_group(net, group, available, executed)
    }
}

/// Repeatedly takes the earliest member (in declared order) whose required
/// inputs are covered by `available` plus the declared outputs of members
/// planned so far. A SOFT route `a -> b` between members keeps `b` out until
/// `a` is executed or planned.
///
/// An empty plan with members left over is `NoSatisfiableMember`.
pub fn plan_group(
    net: &AgentNetwork,
    group: &VertexId,
    available: &BTreeSet<String>,
    executed: &BTreeSet<VertexId>,
) -> Result<Vec<VertexId>, PlanError> {
    let g = net
        .get(group)
        .and_then(|v| v.as_group())
        .ok_or_else(|| PlanError::NotAGroup(group.clone()))?;
    let members: Vec<&VertexId> = g.members.iter().filter(|m| net.contains(m)).collect();
    let soft: Vec<(&VertexId, &VertexId)> = net
        .routes()
        .iter()
        .filter(|r| r.kind == RouteKind::Soft)
        .filter(|r| members.contains(&&r.from) && members.contains(&&r.to))
        .map(|r| (&r.from, &r.to))
        .collect();

    let mut names = available.clone();
    let mut done: BTreeSet<&VertexId> = executed.iter().collect();
    let mut plan = Vec::new();
    loop {
        let next = members.iter().find(|m| {
            !done.contains(**m)
                && soft.iter().all(|(a, b)| b != *m || done.contains(a))
                && net
                    .get(m)
                    .is_some_and(|v| v.input_schema().required_names().all(|n| names.contains(n)))
        });
        let Some(m) = next else { break };
        let v = net.get(m).expect("member present");
        names.extend(v.output_schema().names().map(str::to_string));
        done.insert(m);
        plan.push((*m).clone());
    }

    let left: Vec<&VertexId> = members
        .iter()
        .copied()
        .filter(|m| !done.contains(m))
        .collect();
    if plan.is_empty() && !left.is_empty() {
        let mut missing: BTreeSet<String> = BTreeSet::new();
        for m in left {
            let v = net.get(m).expect("member present");
            missing.extend(
                v.input_schema()
                    .required_names()
                    .filter(|n| !names.contains(*n))
                    .map(str::to_string),
            );
        }
        return Err(PlanError::NoSatisfiableMember {
            missing: missing.into_iter().collect(),
        });
    }
    Ok(plan)
}

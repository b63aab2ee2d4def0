use std::collections::BTreeSet;
use std::sync::Arc;

use crate::executors::Params;
use crate::network::{
    eval_guard_text, AgentNetwork, ParamKind, ParameterSchema, ParameterSpec, Route, RouteKind,
    Vertex, VertexId,
};
use crate::registry::{DiscoveryQuery, Registry};

fn guard_open(r: &Route, ctx: &Params) -> bool {
    r.guard.as_deref().is_none_or(|g| eval_guard_text(g, ctx))
}

fn by_priority<'a>(mut routes: Vec<&'a Route>) -> Vec<&'a Route> {
    routes.sort_by(|a, b| a.priority.cmp(&b.priority).then_with(|| a.to.cmp(&b.to)));
    routes
}

/// Next vertex along an open HARD route from `current`: smallest priority,
/// then smallest `to`.
pub fn resolve_hard(net: &AgentNetwork, current: &VertexId, ctx: &Params) -> Option<VertexId> {
    let open = net
        .routes_from(current, RouteKind::Hard)
        .filter(|r| guard_open(r, ctx))
        .collect();
    by_priority(open).first().map(|r| r.to.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtSource {
    Route,
    Discovery { service_id: String, score: f64 },
}

#[derive(Debug, Clone)]
pub struct ExtResolution {
    pub vertex: Arc<Vertex>,
    pub source: ExtSource,
}

/// Finds an outside vertex that can produce some of `missing`.
///
/// Open EXT routes from the group are tried first, in priority order; the
/// first whose target declares at least one missing output wins. Otherwise
/// the registry is queried for services producing `missing` and accepting
/// `ctx`, and the best-scoring one is taken. Vertexes in `exclude` are
/// skipped on both paths.
pub fn resolve_ext(
    net: &AgentNetwork,
    registry: Option<&Registry>,
    group: &VertexId,
    missing: &[String],
    ctx: &Params,
    exclude: &BTreeSet<VertexId>,
) -> Option<ExtResolution> {
    if missing.is_empty() {
        return None;
    }
    let open = net
        .routes_from(group, RouteKind::Ext)
        .filter(|r| guard_open(r, ctx))
        .collect();
    for r in by_priority(open) {
        if exclude.contains(&r.to) {
            continue;
        }
        let Some(v) = net.get(&r.to) else { continue };
        if v.output_schema()
            .names()
            .any(|n| missing.iter().any(|m| m == n))
        {
            return Some(ExtResolution {
                vertex: v.clone(),
                source: ExtSource::Route,
            });
        }
    }

    let registry = registry?;
    let query = DiscoveryQuery {
        required_output: Some(missing_schema(missing)),
        acceptable_input: Some(ctx.clone()),
        top_k: registry.len().max(1),
        ..DiscoveryQuery::default()
    };
    let ranked = match registry.discover(&query) {
        Ok(r) => r,
        Err(e) => {
            tracing::warn!(error = %e, "discovery query rejected");
            return None;
        }
    };
    ranked.into_iter().find_map(|s| {
        let d = registry.get(&s.service_id)?;
        if exclude.contains(&d.vertex.id) || &d.vertex.id == group {
            return None;
        }
        Some(ExtResolution {
            vertex: Arc::new(d.vertex),
            source: ExtSource::Discovery {
                service_id: s.service_id,
                score: s.score,
            },
        })
    })
}

fn missing_schema(missing: &[String]) -> ParameterSchema {
    ParameterSchema::new(
        missing
            .iter()
            .map(|m| ParameterSpec::required(m.clone(), ParamKind::Any))
            .collect(),
    )
}

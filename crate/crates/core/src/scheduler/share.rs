use std::collections::BTreeMap;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::executors::Params;
use crate::network::VertexId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareScope {
    #[default]
    Off,
    ReadOnly,
}

/// Publishes selected outputs of one vertex to a channel other tasks may
/// query. Nothing is ever merged into another task's context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharePolicy {
    pub vertex_id: VertexId,
    pub shared_params: Vec<String>,
    #[serde(default)]
    pub scope: ShareScope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedOutput {
    pub vertex_id: VertexId,
    pub values: Params,
    pub task_id: String,
    pub inv_id: String,
}

#[derive(Debug, Default)]
pub(crate) struct ShareBoard {
    policies: RwLock<BTreeMap<VertexId, SharePolicy>>,
    latest: RwLock<BTreeMap<VertexId, SharedOutput>>,
}

impl ShareBoard {
    pub(crate) fn set_policy(&self, p: SharePolicy) {
        if p.scope == ShareScope::Off {
            self.policies.write().remove(&p.vertex_id);
            self.latest.write().remove(&p.vertex_id);
        } else {
            self.policies.write().insert(p.vertex_id.clone(), p);
        }
    }

    pub(crate) fn publish(&self, vertex: &VertexId, output: &Params, task_id: &str, inv_id: &str) {
        let Some(p) = self.policies.read().get(vertex).cloned() else {
            return;
        };
        let values: Params = p
            .shared_params
            .iter()
            .filter_map(|k| output.get(k).map(|v| (k.clone(), v.clone())))
            .collect();
        self.latest.write().insert(
            vertex.clone(),
            SharedOutput {
                vertex_id: vertex.clone(),
                values,
                task_id: task_id.to_string(),
                inv_id: inv_id.to_string(),
            },
        );
    }

    pub(crate) fn read(&self, vertex: &VertexId) -> Option<SharedOutput> {
        self.latest.read().get(vertex).cloned()
    }
}

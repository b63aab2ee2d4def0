use std::collections::BTreeMap;

use super::record::{FlowRecord, TaskStatus};
use crate::json::token_jaccard;
use crate::network::VertexId;
use crate::par::{self, Exec};

/// Text similarity in [0, 1] between two canonical JSON digests.
pub trait Similarity: Sync {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Token Jaccard over whitespace/punctuation-split text.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenJaccard;

impl Similarity for TokenJaccard {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        token_jaccard(a, b)
    }
}

impl<F: Fn(&str, &str) -> f64 + Sync> Similarity for F {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        self(a, b)
    }
}

/// Mean similarity between each invocation's input and its task's final
/// output, over successful tasks only.
///
/// The mean is taken over the per-vertex values sorted ascending, so the
/// result is independent of record order and of parallel splitting.
pub fn contribution(records: &[FlowRecord], sim: &dyn Similarity) -> BTreeMap<VertexId, f64> {
    contribution_with(Exec::default(), records, sim)
}

pub fn contribution_with(
    exec: Exec,
    records: &[FlowRecord],
    sim: &dyn Similarity,
) -> BTreeMap<VertexId, f64> {
    type Acc = BTreeMap<VertexId, Vec<f64>>;
    let per_vertex: Acc = par::fold(
        exec,
        records,
        Acc::new,
        |mut acc, r| {
            if r.status == TaskStatus::Success {
                for c in &r.chain {
                    let s = sim
                        .similarity(&c.input_digest, &r.output_digest)
                        .clamp(0.0, 1.0);
                    acc.entry(c.vertex_id.clone()).or_default().push(s);
                }
            }
            acc
        },
        |mut a, b| {
            for (k, mut v) in b {
                a.entry(k).or_default().append(&mut v);
            }
            a
        },
    );
    per_vertex
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_by(f64::total_cmp);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (k, mean)
        })
        .collect()
}

//! HARD-route mining from recorded chains.
//!
//! The unit of mining is an adjacent pair `a -> b` in a chain. A record
//! "contains" the pair if it appears anywhere in its chain.
//!
//! ```text
//! support(a,b) = |Success records containing a->b| / |Success records|
//! lift(a,b)    = P(Success | contains a->b) / P(Success)
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::record::{FlowRecord, TaskStatus};
use crate::network::{Route, RouteKind, VertexId};
use crate::par::{self, Exec};

pub type Pair = (VertexId, VertexId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairCounts {
    /// Records containing the pair.
    pub with: u64,
    /// Successful records containing the pair.
    pub success_with: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedPair {
    pub from: VertexId,
    pub to: VertexId,
    pub support: f64,
    pub lift: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MiningError {
    #[error("min_support must be in (0, 1], got {0}")]
    InvalidSupport(f64),
    #[error("min_success_lift must be a finite number, got {0}")]
    InvalidLift(f64),
}

/// Distinct adjacent pairs of one chain, self-pairs excluded.
pub fn adjacent_pairs(record: &FlowRecord) -> BTreeSet<Pair> {
    record
        .chain
        .windows(2)
        .filter(|w| w[0].vertex_id != w[1].vertex_id)
        .map(|w| (w[0].vertex_id.clone(), w[1].vertex_id.clone()))
        .collect()
}

#[derive(Debug, Clone, Default)]
struct Acc {
    records: u64,
    successes: u64,
    pairs: BTreeMap<Pair, PairCounts>,
}

fn count(exec: Exec, records: &[FlowRecord]) -> Acc {
    par::fold(
        exec,
        records,
        Acc::default,
        |mut acc, r| {
            let ok = r.status == TaskStatus::Success;
            acc.records += 1;
            acc.successes += u64::from(ok);
            for p in adjacent_pairs(r) {
                let c = acc.pairs.entry(p).or_default();
                c.with += 1;
                c.success_with += u64::from(ok);
            }
            acc
        },
        |mut a, b| {
            a.records += b.records;
            a.successes += b.successes;
            for (p, c) in b.pairs {
                let mine = a.pairs.entry(p).or_default();
                mine.with += c.with;
                mine.success_with += c.success_with;
            }
            a
        },
    )
}

/// Support and lift for every observed pair, in (from, to) order.
pub fn score_pairs(exec: Exec, records: &[FlowRecord]) -> Vec<MinedPair> {
    let acc = count(exec, records);
    if acc.successes == 0 {
        return Vec::new();
    }
    let p_success = acc.successes as f64 / acc.records as f64;
    acc.pairs
        .into_iter()
        .map(|((from, to), c)| MinedPair {
            from,
            to,
            support: c.success_with as f64 / acc.successes as f64,
            lift: (c.success_with as f64 / c.with as f64) / p_success,
        })
        .collect()
}

/// HARD routes for pairs meeting both thresholds, ranked by support (ties by
/// `(from, to)`); the rank becomes the route priority. Pairs that already
/// exist as HARD routes in `existing` are skipped.
pub fn mine_hard_routes(
    records: &[FlowRecord],
    min_support: f64,
    min_success_lift: f64,
    existing: &[Route],
) -> Result<Vec<Route>, MiningError> {
    mine_hard_routes_with(
        Exec::default(),
        records,
        min_support,
        min_success_lift,
        existing,
    )
}

pub fn mine_hard_routes_with(
    exec: Exec,
    records: &[FlowRecord],
    min_support: f64,
    min_success_lift: f64,
    existing: &[Route],
) -> Result<Vec<Route>, MiningError> {
    if !(min_support > 0.0 && min_support <= 1.0) {
        return Err(MiningError::InvalidSupport(min_support));
    }
    if !min_success_lift.is_finite() {
        return Err(MiningError::InvalidLift(min_success_lift));
    }
    let known: BTreeSet<(&VertexId, &VertexId)> = existing
        .iter()
        .filter(|r| r.kind == RouteKind::Hard)
        .map(|r| (&r.from, &r.to))
        .collect();
    let mut kept: Vec<MinedPair> = score_pairs(exec, records)
        .into_iter()
        .filter(|p| p.support >= min_support && p.lift >= min_success_lift)
        .filter(|p| !known.contains(&(&p.from, &p.to)))
        .collect();
    kept.sort_by(|a, b| {
        b.support
            .total_cmp(&a.support)
            .then_with(|| (&a.from, &a.to).cmp(&(&b.from, &b.to)))
    });
    Ok(kept
        .into_iter()
        .enumerate()
        .map(|(rank, p)| Route::hard(p.from, p.to).with_priority(rank as i64))
        .collect())
}

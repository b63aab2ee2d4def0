use serde::{Deserialize, Serialize};

use crate::executors::Params;
use crate::json::{canonical_map, token_jaccard};

pub const REFLECTION_PARAM: &str = "reflection_note";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StallDecision {
    Continue,
    Reflect,
    Abort,
}

/// Token Jaccard between the canonical JSON of two outputs.
pub fn output_similarity(a: &Params, b: &Params) -> f64 {
    token_jaccard(&canonical_map(a), &canonical_map(b))
}

/// Compares the last two outputs of one vertex within one task.
/// `strikes` counts earlier stalls of the same vertex in the task.
pub fn detect_stall(history: &[Params], strikes: u32, threshold: f64) -> StallDecision {
    let [.., prev, last] = history else {
        return StallDecision::Continue;
    };
    if output_similarity(prev, last) < threshold {
        StallDecision::Continue
    } else if strikes == 0 {
        StallDecision::Reflect
    } else {
        StallDecision::Abort
    }
}

pub fn reflection_note(vertex: &str, similarity: f64) -> String {
    format!(
        "The previous output of {vertex} was {:.0}% similar to the one before it; \
         no substantive change occurred. Revise the approach instead of repeating it.",
        similarity * 100.0
    )
}

//! Flow recording and analytics over recorded flows.

mod contribution;
mod log;
mod mining;
mod record;
mod stats;
pub mod table;

pub use contribution::{contribution, contribution_with, Similarity, TokenJaccard};
pub use log::{scan_file, scan_reader, FlowLog, FlowLogError, LogScan};
pub use mining::{
    adjacent_pairs, mine_hard_routes, mine_hard_routes_with, score_pairs, MinedPair, MiningError,
    Pair,
};
pub use record::{
    ChainEntry, FailureReason, FlowRecord, InvalidRecord, InvocationStatus, RouteUsed, TaskStatus,
    TIME_TOLERANCE,
};
pub use stats::{
    compute_stats, compute_stats_with, compute_vertex_stats, compute_vertex_stats_with,
    ProtocolRow, StatsReport, StatusRow, SubtaskRow, VertexRow, VertexStats,
};

impl LogScan {
    /// Stats over the scanned records, carrying the skipped-line count.
    pub fn stats(&self) -> StatsReport {
        let mut r = compute_stats(&self.records);
        r.skipped_lines = self.skipped_lines;
        r
    }
}

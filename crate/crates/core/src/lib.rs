//! Service-oriented multi-agent orchestration.
//!
//! Agents, agent groups and external services are vertexes of an
//! [`network::AgentNetwork`] joined by HARD, SOFT and EXT routes. The
//! [`scheduler::Scheduler`] runs tasks against network snapshots, recording
//! each task's execution graph; finished tasks become
//! [`flowlog::FlowRecord`]s that feed the analytics and route mining in
//! [`flowlog`]. The [`registry`] makes vertexes discoverable as services.

pub mod config;
pub mod executors;
pub mod flowlog;
pub mod json;
pub mod network;
pub mod par;
pub mod registry;
pub mod scheduler;
pub mod testkit;

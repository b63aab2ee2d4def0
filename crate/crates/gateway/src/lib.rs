//! HTTP gateway exposing the registry and scheduler, plus the client used
//! by the `agentmesh` command line.

pub mod cli;
pub mod client;
pub mod config;
mod error;
pub mod server;

pub use client::{Client, ClientError};
pub use config::GatewayConfig;
pub use error::GatewayError;
pub use server::{router, AppState, Gateway};

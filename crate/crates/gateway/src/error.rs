use agentmesh::config::ConfigError;
use agentmesh::flowlog::FlowLogError;
use agentmesh::network::NetworkError;
use agentmesh::registry::RegistryError;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("BindError: cannot listen on {addr}: {reason}")]
    Bind { addr: String, reason: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    FlowLog(#[from] FlowLogError),
    #[error("{0}")]
    Network(#[from] NetworkError),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
}

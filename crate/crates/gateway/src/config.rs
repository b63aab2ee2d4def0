use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use agentmesh::config::{self, ConfigError, Settings};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub listen_addr: String,
    pub registry_journal_path: PathBuf,
    pub flow_log_path: PathBuf,
    /// Routes added over the API are journaled here and replayed on start.
    pub routes_path: Option<PathBuf>,
    #[serde(flatten)]
    pub settings: Settings,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            listen_addr: "127.0.0.1:8080".into(),
            registry_journal_path: "registry.jsonl".into(),
            flow_log_path: "flows.jsonl".into(),
            routes_path: Some("routes.jsonl".into()),
            settings: Settings::default(),
        }
    }
}

impl GatewayConfig {
    /// All files under `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            registry_journal_path: dir.join("registry.jsonl"),
            flow_log_path: dir.join("flows.jsonl"),
            routes_path: Some(dir.join("routes.jsonl")),
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Defaults, then the file if given, then the environment
    /// (`LISTEN_ADDR`, `REGISTRY_JOURNAL`, `FLOW_LOG` and the scheduler and
    /// liveness variables).
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut c = match path {
            Some(p) => Self::from_toml(&config::read(p)?)?,
            None => Self::default(),
        };
        c.apply_env(|k| std::env::var(k).ok())?;
        Ok(c)
    }

    pub fn apply_env(
        &mut self,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        if let Some(v) = lookup("LISTEN_ADDR") {
            self.listen_addr = v;
        }
        if let Some(v) = lookup("REGISTRY_JOURNAL") {
            self.registry_journal_path = v.into();
        }
        if let Some(v) = lookup("FLOW_LOG") {
            self.flow_log_path = v.into();
        }
        self.settings.apply_env(lookup)
    }

    /// Limits must be positive and every path must be writable.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.settings.validate()?;
        let paths = [
            Some(&self.registry_journal_path),
            Some(&self.flow_log_path),
            self.routes_path.as_ref(),
        ];
        for p in paths.into_iter().flatten() {
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| {
                    ConfigError::Invalid(format!("{} is not writable: {e}", p.display()))
                })?;
        }
        Ok(())
    }
}

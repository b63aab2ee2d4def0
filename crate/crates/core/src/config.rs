//! Runtime limits, loaded from TOML with environment overrides.
//!
//! Recognized variables: `MAX_STEPS`, `DEADLINE_S`, `STALL_THRESHOLD`,
//! `T_SUSPECT`, `T_DEAD` (seconds).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::registry::LivenessThresholds;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("ConfigError: cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("ConfigError: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("ConfigError: {var}={value:?} is not a valid value")]
    Env { var: &'static str, value: String },
    #[error("ConfigError: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub max_steps: usize,
    pub deadline_s: f64,
    pub stall_threshold: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_steps: 32,
            deadline_s: 600.0,
            stall_threshold: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    #[serde(flatten)]
    pub limits: Limits,
    pub t_suspect_s: f64,
    pub t_dead_s: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            limits: Limits::default(),
            t_suspect_s: 30.0,
            t_dead_s: 120.0,
        }
    }
}

fn parse_env<T: std::str::FromStr>(
    var: &'static str,
    lookup: &impl Fn(&str) -> Option<String>,
) -> Result<Option<T>, ConfigError> {
    match lookup(var) {
        None => Ok(None),
        Some(value) => value
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| ConfigError::Env { var, value }),
    }
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Defaults, then the file if given, then the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut s = match path {
            Some(p) => Self::from_toml(&read(p)?)?,
            None => Self::default(),
        };
        s.apply_env(|k| std::env::var(k).ok())?;
        s.validate()?;
        Ok(s)
    }

    pub fn apply_env(
        &mut self,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        if let Some(v) = parse_env("MAX_STEPS", &lookup)? {
            self.limits.max_steps = v;
        }
        if let Some(v) = parse_env("DEADLINE_S", &lookup)? {
            self.limits.deadline_s = v;
        }
        if let Some(v) = parse_env("STALL_THRESHOLD", &lookup)? {
            self.limits.stall_threshold = v;
        }
        if let Some(v) = parse_env("T_SUSPECT", &lookup)? {
            self.t_suspect_s = v;
        }
        if let Some(v) = parse_env("T_DEAD", &lookup)? {
            self.t_dead_s = v;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let l = &self.limits;
        if l.max_steps == 0 {
            return Err(ConfigError::Invalid("max_steps must be positive".into()));
        }
        if !(l.deadline_s > 0.0 && l.deadline_s.is_finite()) {
            return Err(ConfigError::Invalid("deadline_s must be positive".into()));
        }
        if !(l.stall_threshold > 0.0 && l.stall_threshold <= 1.0) {
            return Err(ConfigError::Invalid(
                "stall_threshold must be in (0, 1]".into(),
            ));
        }
        if !(self.t_suspect_s > 0.0 && self.t_dead_s > self.t_suspect_s) {
            return Err(ConfigError::Invalid(
                "need 0 < t_suspect_s < t_dead_s".into(),
            ));
        }
        Ok(())
    }

    pub fn liveness(&self) -> LivenessThresholds {
        LivenessThresholds {
            suspect_after_ms: (self.t_suspect_s * 1000.0) as u64,
            dead_after_ms: (self.t_dead_s * 1000.0) as u64,
        }
    }
}

pub fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

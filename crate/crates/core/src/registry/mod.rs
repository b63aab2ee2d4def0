//! Service registration, discovery and heartbeat liveness.
//!
//! Every register/deregister/heartbeat is appended to an optional JSONL
//! journal before it becomes visible; [`Registry::open`] replays the journal.

mod clock;
mod discovery;

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::network::Vertex;
use crate::par::Exec;

pub use clock::{Clock, ManualClock, SystemClock};
pub use discovery::{DefaultScorer, DiscoveryQuery, DiscoveryScorer, ScoreWeights, ScoredService};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Liveness {
    Alive,
    Suspect,
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LivenessThresholds {
    pub suspect_after_ms: u64,
    pub dead_after_ms: u64,
}

impl Default for LivenessThresholds {
    fn default() -> Self {
        Self {
            suspect_after_ms: 30_000,
            dead_after_ms: 120_000,
        }
    }
}

impl LivenessThresholds {
    pub fn classify(&self, now_ms: u64, last_heartbeat_ms: u64) -> Liveness {
        let age = now_ms.saturating_sub(last_heartbeat_ms);
        if age < self.suspect_after_ms {
            Liveness::Alive
        } else if age < self.dead_after_ms {
            Liveness::Suspect
        } else {
            Liveness::Dead
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub service_id: String,
    pub vertex: Vertex,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    pub registered_at: u64,
    pub last_heartbeat: u64,
    pub liveness: Liveness,
    #[serde(default)]
    pub tags: Vec<String>,
}

/// What a caller submits to [`Registry::register`]. The service id
/// defaults to the vertex id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_id: Option<String>,
    pub vertex: Vertex,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl Registration {
    pub fn new(vertex: Vertex) -> Self {
        Self {
            service_id: None,
            vertex,
            endpoint_url: None,
            tags: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        self.service_id
            .as_deref()
            .unwrap_or_else(|| self.vertex.id.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("DuplicateService: {0} is already registered and alive")]
    DuplicateService(String),
    #[error("InvalidDescriptor: {0}")]
    InvalidDescriptor(String),
    #[error("UnknownService: {0}")]
    UnknownService(String),
    #[error("EmptyQuery: discovery needs at least one criterion")]
    EmptyQuery,
    #[error("InvalidQuery: {0}")]
    InvalidQuery(String),
    #[error("journal: {0}")]
    Io(#[from] std::io::Error),
    #[error("journal line {line}: {source}")]
    Journal {
        line: usize,
        source: serde_json::Error,
    },
}

impl RegistryError {
    pub fn code(&self) -> &'static str {
        match self {
            RegistryError::DuplicateService(_) => "DuplicateService",
            RegistryError::InvalidDescriptor(_) => "InvalidDescriptor",
            RegistryError::UnknownService(_) => "UnknownService",
            RegistryError::EmptyQuery => "EmptyQuery",
            RegistryError::InvalidQuery(_) => "InvalidQuery",
            RegistryError::Io(_) | RegistryError::Journal { .. } => "IoError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JournalEvent {
    Register,
    Deregister,
    Heartbeat,
}

/// One journal line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub ts: u64,
    pub event: JournalEvent,
    pub service_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<ServiceDescriptor>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RegistryConfig {
    pub liveness: LivenessThresholds,
    pub exec: Exec,
}

pub struct Registry {
    config: RegistryConfig,
    clock: Arc<dyn Clock>,
    scorer: Arc<dyn DiscoveryScorer>,
    services: RwLock<BTreeMap<String, ServiceDescriptor>>,
    journal: Option<Mutex<File>>,
    journal_path: Option<PathBuf>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("services", &self.services.read().len())
            .field("journal", &self.journal_path)
            .finish()
    }
}

impl Registry {
    /// In-memory registry without a journal.
    pub fn in_memory(config: RegistryConfig, clock: Arc<dyn Clock>) -> Self {
        Self {
            config,
            clock,
            scorer: Arc::new(DefaultScorer::default()),
            services: RwLock::new(BTreeMap::new()),
            journal: None,
            journal_path: None,
        }
    }

    /// Replays the journal at `path` (if any) and appends to it from then on.
    pub fn open(
        path: impl AsRef<Path>,
        config: RegistryConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let mut services = BTreeMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: JournalEntry =
                    serde_json::from_str(&line).map_err(|source| RegistryError::Journal {
                        line: i + 1,
                        source,
                    })?;
                replay(&mut services, entry);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            services: RwLock::new(services),
            journal: Some(Mutex::new(file)),
            journal_path: Some(path.to_path_buf()),
            ..Self::in_memory(config, clock)
        })
    }

    pub fn with_scorer(mut self, scorer: Arc<dyn DiscoveryScorer>) -> Self {
        self.scorer = scorer;
        self
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    fn write_journal(&self, entry: &JournalEntry) -> Result<(), RegistryError> {
        if let Some(j) = &self.journal {
            let line = serde_json::to_string(entry).expect("journal entry serializes");
            let mut f = j.lock();
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        Ok(())
    }

    fn with_liveness(&self, mut d: ServiceDescriptor, now: u64) -> ServiceDescriptor {
        d.liveness = self.config.liveness.classify(now, d.last_heartbeat);
        d
    }

    pub fn register(&self, reg: Registration) -> Result<String, RegistryError> {
        let problems = reg.vertex.self_check();
        if !problems.is_empty() {
            return Err(RegistryError::InvalidDescriptor(problems.join("; ")));
        }
        let id = reg.id().to_string();
        if id.is_empty() {
            return Err(RegistryError::InvalidDescriptor("empty service_id".into()));
        }
        let mut services = self.services.write();
        let now = self.clock.now_ms();
        if let Some(existing) = services.get(&id) {
            if self.config.liveness.classify(now, existing.last_heartbeat) == Liveness::Alive {
                return Err(RegistryError::DuplicateService(id));
            }
        }
        let desc = ServiceDescriptor {
            service_id: id.clone(),
            vertex: reg.vertex,
            endpoint_url: reg.endpoint_url,
            registered_at: now,
            last_heartbeat: now,
            liveness: Liveness::Alive,
            tags: reg.tags,
        };
        self.write_journal(&JournalEntry {
            ts: now,
            event: JournalEvent::Register,
            service_id: id.clone(),
            descriptor: Some(desc.clone()),
        })?;
        services.insert(id.clone(), desc);
        Ok(id)
    }

    pub fn deregister(&self, service_id: &str) -> Result<(), RegistryError> {
        let mut services = self.services.write();
        if !services.contains_key(service_id) {
            return Err(RegistryError::UnknownService(service_id.to_string()));
        }
        self.write_journal(&JournalEntry {
            ts: self.clock.now_ms(),
            event: JournalEvent::Deregister,
            service_id: service_id.to_string(),
            descriptor: None,
        })?;
        services.remove(service_id);
        Ok(())
    }

    pub fn heartbeat(&self, service_id: &str) -> Result<Liveness, RegistryError> {
        let mut services = self.services.write();
        let now = self.clock.now_ms();
        let desc = services
            .get_mut(service_id)
            .ok_or_else(|| RegistryError::UnknownService(service_id.to_string()))?;
        self.write_journal(&JournalEntry {
            ts: now,
            event: JournalEvent::Heartbeat,
            service_id: service_id.to_string(),
            descriptor: None,
        })?;
        desc.last_heartbeat = desc.last_heartbeat.max(now);
        desc.liveness = self.config.liveness.classify(now, desc.last_heartbeat);
        Ok(desc.liveness)
    }

    pub fn get(&self, service_id: &str) -> Option<ServiceDescriptor> {
        let now = self.clock.now_ms();
        self.services
            .read()
            .get(service_id)
            .cloned()
            .map(|d| self.with_liveness(d, now))
    }

    pub fn list(&self) -> Vec<ServiceDescriptor> {
        let now = self.clock.now_ms();
        self.services
            .read()
            .values()
            .cloned()
            .map(|d| self.with_liveness(d, now))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.services.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ranks live (alive or suspect) services against `q`.
    pub fn discover(&self, q: &DiscoveryQuery) -> Result<Vec<ScoredService>, RegistryError> {
        q.validate()?;
        let candidates: Vec<ServiceDescriptor> = self
            .list()
            .into_iter()
            .filter(|d| d.liveness != Liveness::Dead)
            .collect();
        Ok(discovery::rank(
            self.config.exec,
            self.scorer.as_ref(),
            q,
            &candidates,
        ))
    }
}

fn replay(services: &mut BTreeMap<String, ServiceDescriptor>, entry: JournalEntry) {
    match entry.event {
        JournalEvent::Register => {
            if let Some(d) = entry.descriptor {
                services.insert(entry.service_id, d);
            }
        }
        JournalEvent::Deregister => {
            services.remove(&entry.service_id);
        }
        JournalEvent::Heartbeat => {
            if let Some(d) = services.get_mut(&entry.service_id) {
                d.last_heartbeat = d.last_heartbeat.max(entry.ts);
            }
        }
    }
}

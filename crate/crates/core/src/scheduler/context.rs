use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::executors::Params;

/// Where a context value came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    TaskPayload,
    Invocation(String),
}

const PAYLOAD: &str = "task_payload";

impl Provenance {
    pub fn as_str(&self) -> &str {
        match self {
            Provenance::TaskPayload => PAYLOAD,
            Provenance::Invocation(id) => id,
        }
    }

    pub fn invocation(&self) -> Option<&str> {
        match self {
            Provenance::TaskPayload => None,
            Provenance::Invocation(id) => Some(id),
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Provenance {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Provenance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == PAYLOAD {
            Provenance::TaskPayload
        } else {
            Provenance::Invocation(s)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub value: Value,
    pub provenance: Provenance,
}

/// Parameter values with provenance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextMap {
    entries: BTreeMap<String, ContextEntry>,
}

impl ContextMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_payload(payload: &Params) -> Self {
        Self::from_params(payload, Provenance::TaskPayload)
    }

    pub fn from_params(params: &Params, provenance: Provenance) -> Self {
        let mut ctx = Self::new();
        ctx.merge_params(params, &provenance);
        ctx
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ContextEntry> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ContextEntry)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Value, provenance: Provenance) {
        self.entries
            .insert(name.into(), ContextEntry { value, provenance });
    }

    /// Later values replace earlier ones.
    pub fn merge_params(&mut self, params: &Params, provenance: &Provenance) {
        for (k, v) in params {
            self.insert(k.clone(), v.clone(), provenance.clone());
        }
    }

    pub fn merge(&mut self, other: &ContextMap) {
        for (k, e) in &other.entries {
            self.entries.insert(k.clone(), e.clone());
        }
    }

    /// Entries whose names are in `names`, provenance kept.
    pub fn project<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> ContextMap {
        let mut out = ContextMap::new();
        for n in names {
            if let Some(e) = self.entries.get(n) {
                out.entries.insert(n.to_string(), e.clone());
            }
        }
        out
    }

    /// Plain values, as handed to executors.
    pub fn values(&self) -> Params {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.value.clone()))
            .collect()
    }
}

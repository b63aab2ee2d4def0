use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{RegistryError, ServiceDescriptor};
use crate::json::lower_tokens;
use crate::network::{check_params, ParameterSchema};
use crate::par::{self, Exec};

fn default_top_k() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_substring: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_keywords: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_output: Option<ParameterSchema>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptable_input: Option<Map<String, Value>>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

impl Default for DiscoveryQuery {
    fn default() -> Self {
        Self {
            name_substring: None,
            description_keywords: None,
            required_output: None,
            acceptable_input: None,
            top_k: default_top_k(),
        }
    }
}

impl DiscoveryQuery {
    pub fn by_name(name: impl Into<String>) -> Self {
        Self {
            name_substring: Some(name.into()),
            ..Self::default()
        }
    }

    pub fn producing(schema: ParameterSchema) -> Self {
        Self {
            required_output: Some(schema),
            ..Self::default()
        }
    }

    fn name(&self) -> Option<&str> {
        self.name_substring.as_deref().filter(|s| !s.is_empty())
    }

    /// Lower-cased keyword tokens.
    pub fn keyword_tokens(&self) -> BTreeSet<String> {
        self.description_keywords
            .iter()
            .flatten()
            .flat_map(|k| lower_tokens(k))
            .collect()
    }

    fn required_output(&self) -> Option<&ParameterSchema> {
        self.required_output
            .as_ref()
            .filter(|s| !s.params.is_empty())
    }

    pub fn has_criterion(&self) -> bool {
        self.name().is_some()
            || !self.keyword_tokens().is_empty()
            || self.required_output().is_some()
            || self.acceptable_input.is_some()
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        if self.top_k == 0 {
            return Err(RegistryError::InvalidQuery(
                "top_k must be at least 1".into(),
            ));
        }
        if !self.has_criterion() {
            return Err(RegistryError::EmptyQuery);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub keywords: f64,
    pub output_coverage: f64,
    pub input_acceptability: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            keywords: 0.4,
            output_coverage: 0.3,
            input_acceptability: 0.3,
        }
    }
}

/// Relevance of one service to a query, in [0, 1]. Services scoring 0 are
/// never returned.
pub trait DiscoveryScorer: Send + Sync {
    fn score(&self, q: &DiscoveryQuery, service: &ServiceDescriptor) -> f64;

    /// Hard filter applied before scoring.
    fn admits(&self, q: &DiscoveryQuery, service: &ServiceDescriptor) -> bool {
        match q.name() {
            Some(n) => service
                .vertex
                .name()
                .to_lowercase()
                .contains(&n.to_lowercase()),
            None => true,
        }
    }
}

/// Weighted sum of keyword overlap, output coverage and input acceptability.
///
/// The keyword term is the fraction of query terms matched: each keyword
/// token matches if it appears among the service's name and description
/// tokens, and the name substring (when set) counts as one more term that
/// matches by substring. Unset criteria contribute 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultScorer {
    pub weights: ScoreWeights,
}

impl DefaultScorer {
    pub fn keyword_overlap(q: &DiscoveryQuery, service: &ServiceDescriptor) -> f64 {
        let kws = q.keyword_tokens();
        let name_term = q.name().map(|n| {
            service
                .vertex
                .name()
                .to_lowercase()
                .contains(&n.to_lowercase())
        });
        let terms = kws.len() + usize::from(name_term.is_some());
        if terms == 0 {
            return 0.0;
        }
        let mut have = lower_tokens(service.vertex.name());
        have.extend(lower_tokens(service.vertex.description()));
        let hits =
            kws.iter().filter(|k| have.contains(*k)).count() + usize::from(name_term == Some(true));
        hits as f64 / terms as f64
    }

    pub fn output_coverage(q: &DiscoveryQuery, service: &ServiceDescriptor) -> f64 {
        let Some(req) = q.required_output() else {
            return 0.0;
        };
        let wanted: BTreeSet<&str> = req.names().collect();
        let out: BTreeSet<&str> = service.vertex.output_schema().names().collect();
        wanted.intersection(&out).count() as f64 / wanted.len() as f64
    }

    pub fn input_acceptability(q: &DiscoveryQuery, service: &ServiceDescriptor) -> f64 {
        match &q.acceptable_input {
            Some(ctx) if check_params(ctx, service.vertex.input_schema()).is_ok() => 1.0,
            _ => 0.0,
        }
    }
}

impl DiscoveryScorer for DefaultScorer {
    fn score(&self, q: &DiscoveryQuery, service: &ServiceDescriptor) -> f64 {
        let w = self.weights;
        let s = w.keywords * Self::keyword_overlap(q, service)
            + w.output_coverage * Self::output_coverage(q, service)
            + w.input_acceptability * Self::input_acceptability(q, service);
        s.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredService {
    pub service_id: String,
    pub score: f64,
}

/// Descending score, ties by ascending service id.
pub fn ranking_order(a: &ScoredService, b: &ScoredService) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.service_id.cmp(&b.service_id))
}

pub(super) fn rank(
    exec: Exec,
    scorer: &dyn DiscoveryScorer,
    q: &DiscoveryQuery,
    candidates: &[ServiceDescriptor],
) -> Vec<ScoredService> {
    let mut scored: Vec<ScoredService> = par::map(exec, candidates, |d| {
        let score = if scorer.admits(q, d) {
            scorer.score(q, d)
        } else {
            0.0
        };
        ScoredService {
            service_id: d.service_id.clone(),
            score,
        }
    })
    .into_iter()
    .filter(|s| s.score > 0.0)
    .collect();
    scored.sort_by(ranking_order);
    scored.truncate(q.top_k);
    scored
}

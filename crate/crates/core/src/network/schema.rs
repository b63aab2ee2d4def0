//! Parameter schemas and the runtime contract checks built on them.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// JSON-aligned parameter kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    String,
    Number,
    Boolean,
    Object,
    Array,
    Any,
}

impl ParamKind {
    pub const ALL: [ParamKind; 6] = [
        ParamKind::String,
        ParamKind::Number,
        ParamKind::Boolean,
        ParamKind::Object,
        ParamKind::Array,
        ParamKind::Any,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::String => "string",
            ParamKind::Number => "number",
            ParamKind::Boolean => "boolean",
            ParamKind::Object => "object",
            ParamKind::Array => "array",
            ParamKind::Any => "any",
        }
    }

    pub fn matches(self, value: &Value) -> bool {
        match self {
            ParamKind::Any => true,
            ParamKind::String => value.is_string(),
            ParamKind::Number => value.is_number(),
            ParamKind::Boolean => value.is_boolean(),
            ParamKind::Object => value.is_object(),
            ParamKind::Array => value.is_array(),
        }
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Name of the JSON kind of a concrete value (`null` included).
pub fn value_kind(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub required: bool,
}

impl ParameterSpec {
    pub fn required(name: impl Into<String>, kind: ParamKind) -> Self {
        Self {
            name: name.into(),
            kind,
            description: String::new(),
            required: true,
        }
    }

    pub fn optional(name: impl Into<String>, kind: ParamKind) -> Self {
        Self {
            required: false,
            ..Self::required(name, kind)
        }
    }

    pub fn describe(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterSchema {
    #[serde(default)]
    pub params: Vec<ParameterSpec>,
}

impl ParameterSchema {
    pub fn new(params: Vec<ParameterSpec>) -> Self {
        Self { params }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Shorthand for a schema whose params are all required.
    pub fn required(params: &[(&str, ParamKind)]) -> Self {
        Self::new(
            params
                .iter()
                .map(|(n, k)| ParameterSpec::required(*n, *k))
                .collect(),
        )
    }

    pub fn get(&self, name: &str) -> Option<&ParameterSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn required_names(&self) -> impl Iterator<Item = &str> {
        self.params
            .iter()
            .filter(|p| p.required)
            .map(|p| p.name.as_str())
    }

    pub fn validate(&self) -> ValidationReport {
        validate_schema(self)
    }
}

/// `[A-Za-z_][A-Za-z0-9_]*`
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", content = "name", rename_all = "snake_case")]
pub enum SchemaViolation {
    DuplicateName(String),
    InvalidIdentifier(String),
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaViolation::DuplicateName(n) => write!(f, "duplicate name {n}"),
            SchemaViolation::InvalidIdentifier(n) => write!(f, "invalid identifier {n:?}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<SchemaViolation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks name syntax and uniqueness. An empty schema is valid.
pub fn validate_schema(schema: &ParameterSchema) -> ValidationReport {
    let mut seen = BTreeSet::new();
    let mut violations = Vec::new();
    for p in &schema.params {
        if !is_identifier(&p.name) {
            violations.push(SchemaViolation::InvalidIdentifier(p.name.clone()));
        }
        if !seen.insert(p.name.as_str()) {
            violations.push(SchemaViolation::DuplicateName(p.name.clone()));
        }
    }
    ValidationReport { violations }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[serde(tag = "error")]
pub enum ParamError {
    #[error("MissingRequired({name})")]
    MissingRequired { name: String },
    #[error("KindMismatch({name}, {expected}, {actual})")]
    KindMismatch {
        name: String,
        expected: ParamKind,
        actual: String,
    },
}

/// Outcome of [`check_params`]: errors break the contract, warnings do not.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub errors: Vec<ParamError>,
    /// Keys present in the values but not declared by the schema.
    pub extra_keys: Vec<String>,
}

impl CheckResult {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn summary(&self) -> String {
        self.errors
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Runtime contract check of `values` against `schema`.
///
/// Required params must be present with a value of their kind. Optional
/// params are not kind-checked, and undeclared keys only warn.
pub fn check_params(values: &Map<String, Value>, schema: &ParameterSchema) -> CheckResult {
    let mut result = CheckResult::default();
    for spec in &schema.params {
        match values.get(&spec.name) {
            None if spec.required => result.errors.push(ParamError::MissingRequired {
                name: spec.name.clone(),
            }),
            None => {}
            Some(v) if spec.required && !spec.kind.matches(v) => {
                result.errors.push(ParamError::KindMismatch {
                    name: spec.name.clone(),
                    expected: spec.kind,
                    actual: value_kind(v).to_string(),
                })
            }
            Some(_) => {}
        }
    }
    result.extra_keys = values
        .keys()
        .filter(|k| schema.get(k).is_none())
        .cloned()
        .collect();
    result
}

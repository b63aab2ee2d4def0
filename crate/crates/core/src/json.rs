//! Canonical JSON text and token-level similarity.
//!
//! Canonical form: object keys sorted by byte order, no insignificant
//! whitespace, numbers in serde_json's shortest round-trip form. Digests in
//! flow records and stall detection both go through [`canonical`].

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde_json::{Map, Value};

/// Renders `value` as canonical JSON text.
pub fn canonical(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

/// Canonical text of a JSON object given as a map.
pub fn canonical_map(map: &Map<String, Value>) -> String {
    let mut out = String::new();
    write_object(map, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Null | Value::Bool(_) | Value::Number(_) | Value::String(_) => {
            // scalars: serde_json already emits the compact, shortest form
            let _ = write!(out, "{value}");
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => write_object(map, out),
    }
}

fn write_object(map: &Map<String, Value>, out: &mut String) {
    let mut keys: Vec<&String> = map.keys().collect();
    keys.sort();
    out.push('{');
    for (i, key) in keys.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}", Value::String(key.clone()));
        out.push(':');
        write_canonical(&map[key], out);
    }
    out.push('}');
}

/// Splits text on anything that is not alphanumeric or `_`.
pub fn tokens(text: &str) -> BTreeSet<&str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Lower-cased word tokens, used by discovery keyword matching.
pub fn lower_tokens(text: &str) -> BTreeSet<String> {
    tokens(text).into_iter().map(str::to_lowercase).collect()
}

/// Jaccard index of two token sets. Two empty sets are identical (1.0).
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Token Jaccard over two texts.
pub fn token_jaccard(a: &str, b: &str) -> f64 {
    jaccard(&tokens(a), &tokens(b))
}

use std::time::{Duration, Instant};

use serde_json::Value;

use super::{ExecError, ExecutionResult, Params};

/// Deterministic transforms used for mock vertexes and plumbing.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Identity,
    Rename { from: String, to: String },
    Const { name: String, value: Value },
    Concat { a: String, b: String, out: String },
    Fail,
    Sleep(Duration),
}

pub fn parse_transform(id: &str) -> Result<Transform, ExecError> {
    let unknown = || ExecError::UnknownTransform(id.to_string());
    let (head, rest) = id.split_once(':').unwrap_or((id, ""));
    let t = match head {
        "identity" if rest.is_empty() && !id.contains(':') => Transform::Identity,
        "fail" if !id.contains(':') => Transform::Fail,
        "rename" => {
            let (from, to) = rest.split_once(':').ok_or_else(unknown)?;
            if from.is_empty() || to.is_empty() || to.contains(':') {
                return Err(unknown());
            }
            Transform::Rename {
                from: from.into(),
                to: to.into(),
            }
        }
        "const" => {
            // the JSON literal may itself contain ':'
            let (name, json) = rest.split_once(':').ok_or_else(unknown)?;
            let value = serde_json::from_str(json).map_err(|_| unknown())?;
            if name.is_empty() {
                return Err(unknown());
            }
            Transform::Const {
                name: name.into(),
                value,
            }
        }
        "concat" => {
            let parts: Vec<&str> = rest.split(':').collect();
            match parts.as_slice() {
                [a, b, out] if !a.is_empty() && !b.is_empty() && !out.is_empty() => {
                    Transform::Concat {
                        a: (*a).into(),
                        b: (*b).into(),
                        out: (*out).into(),
                    }
                }
                _ => return Err(unknown()),
            }
        }
        "sleep" => Transform::Sleep(Duration::from_millis(rest.parse().map_err(|_| unknown())?)),
        _ => return Err(unknown()),
    };
    Ok(t)
}

impl Transform {
    /// Pure part of the transform; `Sleep` behaves as identity here.
    pub fn apply(&self, ctx: &Params) -> Result<Params, ExecError> {
        match self {
            Transform::Identity | Transform::Sleep(_) => Ok(ctx.clone()),
            Transform::Rename { from, to } => {
                let mut out = ctx.clone();
                let v = out
                    .remove(from)
                    .ok_or_else(|| ExecError::Executor(format!("rename: missing {from}")))?;
                out.insert(to.clone(), v);
                Ok(out)
            }
            Transform::Const { name, value } => {
                Ok(Params::from_iter([(name.clone(), value.clone())]))
            }
            Transform::Concat { a, b, out } => {
                let text = |k: &String| match ctx.get(k) {
                    Some(Value::String(s)) => Ok(s.clone()),
                    Some(other) => Ok(other.to_string()),
                    None => Err(ExecError::Executor(format!("concat: missing {k}"))),
                };
                let joined = text(a)? + &text(b)?;
                Ok(Params::from_iter([(out.clone(), Value::String(joined))]))
            }
            Transform::Fail => Err(ExecError::Executor("fail transform".into())),
        }
    }
}

/// identity | rename:a:b | const:name:json | concat:a:b:out | fail | sleep:ms
pub async fn exec_builtin(transform_id: &str, ctx: &Params) -> Result<ExecutionResult, ExecError> {
    let started = Instant::now();
    let t = parse_transform(transform_id)?;
    if let Transform::Sleep(d) = t {
        tokio::time::sleep(d).await;
    }
    Ok(ExecutionResult::new(t.apply(ctx)?, started))
}

use std::time::{Duration, Instant};

use serde_json::Value;

use super::command::truncate;
use super::{ExecError, ExecutionResult, Params};

/// POSTs the context as JSON; a 2xx JSON-object body is the output.
pub async fn exec_http(
    client: &reqwest::Client,
    endpoint: &str,
    ctx: &Params,
    timeout: Duration,
) -> Result<ExecutionResult, ExecError> {
    let started = Instant::now();
    let url = reqwest::Url::parse(endpoint)
        .map_err(|e| ExecError::Executor(format!("bad endpoint {endpoint:?}: {e}")))?;
    let call = async {
        let resp = client.post(url).json(ctx).timeout(timeout).send().await?;
        let status = resp.status();
        let body = resp.text().await?;
        Ok::<_, reqwest::Error>((status, body))
    };
    let (status, body) = match tokio::time::timeout(timeout, call).await {
        Err(_) => return Err(ExecError::Timeout(timeout)),
        Ok(Err(e)) if e.is_timeout() => return Err(ExecError::Timeout(timeout)),
        Ok(Err(e)) => return Err(ExecError::Executor(format!("POST {endpoint}: {e}"))),
        Ok(Ok(r)) => r,
    };
    if !status.is_success() {
        return Err(ExecError::Executor(format!(
            "POST {endpoint}: HTTP {}: {}",
            status.as_u16(),
            truncate(&body, 200)
        )));
    }
    match serde_json::from_str::<Value>(&body) {
        Ok(Value::Object(map)) => Ok(ExecutionResult::new(map, started)),
        _ => Err(ExecError::OutputNotJson(truncate(&body, 200))),
    }
}

use std::process::Stdio;
use std::time::{Duration, Instant};

use serde_json::Value;
use tokio::io::AsyncWriteExt;
use tokio::process::Command;

use super::{ExecError, ExecutionResult, Params};

/// Runs `argv` with the context as JSON on stdin and parses a JSON object
/// from stdout. The child is killed if it outlives `timeout`.
pub async fn exec_command(
    argv: &[String],
    ctx: &Params,
    timeout: Duration,
) -> Result<ExecutionResult, ExecError> {
    let started = Instant::now();
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| ExecError::Executor("empty argv".into()))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .kill_on_drop(true)
        .spawn()
        .map_err(|e| ExecError::Executor(format!("spawn {program}: {e}")))?;

    let input = serde_json::to_vec(ctx).expect("params serialize");
    let mut stdin = child.stdin.take().expect("piped stdin");
    let writer = tokio::spawn(async move {
        // a child that never reads stdin is not an error
        let _ = stdin.write_all(&input).await;
        let _ = stdin.shutdown().await;
    });

    let output = match tokio::time::timeout(timeout, child.wait_with_output()).await {
        Ok(res) => res.map_err(|e| ExecError::Executor(format!("wait {program}: {e}")))?,
        Err(_) => {
            writer.abort();
            return Err(ExecError::Timeout(timeout));
        }
    };
    let _ = writer.await;

    let stdout = String::from_utf8_lossy(&output.stdout).into_owned();
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        return Err(ExecError::Executor(format!(
            "{program} exited with {}: {}",
            output.status,
            stderr.trim()
        )));
    }
    match serde_json::from_str::<Value>(stdout.trim()) {
        Ok(Value::Object(map)) => {
            let mut res = ExecutionResult::new(map, started);
            res.raw_trace = Some(stdout);
            Ok(res)
        }
        _ => Err(ExecError::OutputNotJson(truncate(&stdout, 200))),
    }
}

pub(crate) fn truncate(s: &str, max: usize) -> String {
    if s.len() <= max {
        return s.to_string();
    }
    let mut end = max;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}...", &s[..end])
}

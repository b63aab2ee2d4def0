//! OpenAI-compatible chat-completion executor.
//!
//! All model access goes through [`ChatTransport`]; [`HttpChatTransport`]
//! is the network implementation and tests plug in a stub. Transient API
//! failures are retried up to `max_retries` times with exponential backoff
//! (`backoff_base`, then doubled). A reply without a JSON object earns one
//! reprompt that quotes the parse failure.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::Semaphore;

use super::command::truncate;
use super::{ExecError, ExecutionResult, Params};
use crate::network::{AgentGroup, AgentRole, ParameterSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Request body; exactly these fields go on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub content: String,
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    /// Worth retrying: connection failures, 429 and 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("fatal: {0}")]
    Fatal(String),
    #[error("timeout")]
    Timeout,
}

#[async_trait]
pub trait ChatTransport: Send + Sync {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatReply, TransportError>;
}

#[derive(Debug, Clone)]
pub struct LlmSettings {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub max_concurrency: usize,
    pub temperature: f64,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub reprompts: u32,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            api_key: None,
            model: "default".into(),
            timeout: Duration::from_secs(120),
            max_concurrency: 4,
            temperature: 0.2,
            max_retries: 2,
            backoff_base: Duration::from_secs(1),
            reprompts: 1,
        }
    }
}

impl LlmSettings {
    /// Reads LLM_BASE_URL, LLM_API_KEY, LLM_MODEL, LLM_TIMEOUT_S and
    /// LLM_MAX_CONCURRENCY. Returns `None` when no base URL is set.
    pub fn from_env() -> Option<Self> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Option<Self> {
        let mut s = Self {
            base_url: get("LLM_BASE_URL")?,
            ..Self::default()
        };
        s.api_key = get("LLM_API_KEY").filter(|k| !k.is_empty());
        if let Some(m) = get("LLM_MODEL") {
            s.model = m;
        }
        if let Some(t) = get("LLM_TIMEOUT_S").and_then(|v| v.parse::<f64>().ok()) {
            if t > 0.0 {
                s.timeout = super::secs(t);
            }
        }
        if let Some(c) = get("LLM_MAX_CONCURRENCY").and_then(|v| v.parse::<usize>().ok()) {
            s.max_concurrency = c.max(1);
        }
        Some(s)
    }
}

/// reqwest-backed transport for `{base_url}/chat/completions`.
pub struct HttpChatTransport {
    client: reqwest::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpChatTransport {
    pub fn new(settings: &LlmSettings) -> Self {
        Self {
            client: reqwest::Client::new(),
            url: format!(
                "{}/chat/completions",
                settings.base_url.trim_end_matches('/')
            ),
            api_key: settings.api_key.clone(),
        }
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[async_trait]
impl ChatTransport for HttpChatTransport {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatReply, TransportError> {
        let mut builder = self.client.post(&self.url).json(req);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().await.map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Transient(e.to_string())
            }
        })?;
        let status = resp.status();
        let body = resp
            .text()
            .await
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(TransportError::Transient(format!(
                "HTTP {status}: {}",
                truncate(&body, 200)
            )));
        }
        if !status.is_success() {
            return Err(TransportError::Fatal(format!(
                "HTTP {status}: {}",
                truncate(&body, 200)
            )));
        }
        let parsed: WireResponse = serde_json::from_str(&body)
            .map_err(|e| TransportError::Fatal(format!("bad completion body: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        Ok(ChatReply {
            content,
            usage: parsed.usage,
        })
    }
}

/// The parts of a role or group header that go into a prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSubject {
    pub name: String,
    pub description: String,
    pub system_prompt: String,
    pub output_schema: ParameterSchema,
}

impl PromptSubject {
    pub fn from_role(role: &AgentRole) -> Self {
        Self {
            name: role.name.clone(),
            description: role.description.clone(),
            system_prompt: role.system_prompt.clone(),
            output_schema: role.output_schema.clone(),
        }
    }

    pub fn from_group(group: &AgentGroup) -> Self {
        Self {
            name: group.name.clone(),
            description: group.goal_description.clone(),
            system_prompt: group.group_prompt.clone(),
            output_schema: group.output_schema.clone(),
        }
    }
}

/// The user message: description, declared outputs, then the context.
pub fn render_user_prompt(subject: &PromptSubject, ctx: &Params) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Role: {}", subject.name);
    if !subject.description.is_empty() {
        let _ = writeln!(s, "{}", subject.description);
    }
    let _ = writeln!(s, "\nProduce a JSON object with these output parameters:");
    for p in &subject.output_schema.params {
        let req = if p.required { "required" } else { "optional" };
        let _ = write!(s, "- {} ({}, {})", p.name, p.kind, req);
        if !p.description.is_empty() {
            let _ = write!(s, ": {}", p.description);
        }
        s.push('\n');
    }
    let ctx_json = serde_json::to_string_pretty(ctx).expect("params serialize");
    let _ = writeln!(s, "\nInput context (JSON):\n{ctx_json}");
    s.push_str("\nReply with a single JSON object.");
    s
}

/// First `{...}` in `text` that parses as a JSON object. Code fences and
/// surrounding prose are skipped naturally.
pub fn extract_json_object(text: &str) -> Option<Params> {
    for (i, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            return Some(map);
        }
    }
    None
}

fn estimate_tokens(req: &ChatRequest, reply: &str) -> u64 {
    let chars: usize = req
        .messages
        .iter()
        .map(|m| m.content.chars().count())
        .sum::<usize>()
        + reply.chars().count();
    (chars as u64).div_ceil(4)
}

pub struct LlmExecutor {
    settings: LlmSettings,
    transport: Arc<dyn ChatTransport>,
    permits: Arc<Semaphore>,
}

impl LlmExecutor {
    pub fn new(settings: LlmSettings, transport: Arc<dyn ChatTransport>) -> Self {
        let permits = Arc::new(Semaphore::new(settings.max_concurrency.max(1)));
        Self {
            settings,
            transport,
            permits,
        }
    }

    pub fn over_http(settings: LlmSettings) -> Self {
        let transport = Arc::new(HttpChatTransport::new(&settings));
        Self::new(settings, transport)
    }

    pub fn settings(&self) -> &LlmSettings {
        &self.settings
    }

    /// One request with bounded retries. Returns the reply and the number of
    /// tokens charged for every attempt that produced a reply.
    async fn call(&self, req: &ChatRequest) -> Result<ChatReply, ExecError> {
        let mut attempt = 0u32;
        loop {
            let result = {
                let _permit = self.permits.acquire().await.expect("semaphore open");
                tokio::time::timeout(self.settings.timeout, self.transport.complete(req)).await
            };
            match result {
                Err(_) | Ok(Err(TransportError::Timeout)) => {
                    return Err(ExecError::Timeout(self.settings.timeout))
                }
                Ok(Ok(reply)) => return Ok(reply),
                Ok(Err(TransportError::Fatal(m))) => return Err(ExecError::Api(m)),
                Ok(Err(TransportError::Transient(m))) => {
                    if attempt >= self.settings.max_retries {
                        return Err(ExecError::Api(format!(
                            "{m} (gave up after {} retries)",
                            attempt
                        )));
                    }
                    let delay = self.settings.backoff_base * 2u32.pow(attempt);
                    tracing::warn!(error = %m, ?delay, "chat completion failed; retrying");
                    tokio::time::sleep(delay).await;
                    attempt += 1;
                }
            }
        }
    }

    pub async fn run(
        &self,
        subject: &PromptSubject,
        ctx: &Params,
        model_hint: Option<&str>,
    ) -> Result<ExecutionResult, ExecError> {
        let started = Instant::now();
        let model = model_hint
            .filter(|m| !m.is_empty())
            .unwrap_or(&self.settings.model)
            .to_string();
        let mut req = ChatRequest {
            model,
            messages: vec![
                ChatMessage::system(subject.system_prompt.clone()),
                ChatMessage::user(render_user_prompt(subject, ctx)),
            ],
            temperature: self.settings.temperature,
        };
        let mut tokens = 0u64;
        let mut transcript = String::new();
        let mut reprompts_left = self.settings.reprompts;
        loop {
            let reply = self.call(&req).await?;
            tokens += match reply.usage {
                Some(u) => u.prompt_tokens + u.completion_tokens,
                None => estimate_tokens(&req, &reply.content),
            };
            transcript.push_str(&reply.content);
            transcript.push('\n');
            if let Some(obj) = extract_json_object(&reply.content) {
                return Ok(ExecutionResult {
                    output_ctx: obj,
                    token_cost: tokens,
                    wall_time_ms: started.elapsed().as_millis() as u64,
                    raw_trace: Some(transcript),
                });
            }
            if reprompts_left == 0 {
                return Err(ExecError::Parse(format!(
                    "no JSON object in reply: {}",
                    truncate(&reply.content, 200)
                )));
            }
            reprompts_left -= 1;
            req.messages.push(ChatMessage::user(format!(
                "Your previous reply could not be parsed: it contained no JSON object.\n\
                 Previous reply:\n{}\n\nReply again with only a single JSON object.",
                truncate(&reply.content, 2000)
            )));
        }
    }
}

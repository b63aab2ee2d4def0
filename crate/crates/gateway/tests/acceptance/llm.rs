use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Duration;

use agentmesh::executors::llm::{
    extract_json_object, ChatReply, ChatRequest, ChatTransport, TransportError, Usage,
};
use agentmesh::executors::{
    DefaultExecutor, ExecError, LlmExecutor, LlmSettings, Params, PromptSubject, VertexExecutor,
};
use agentmesh::network::{
    AgentRole, LogicBinding, ParamKind, ParameterSchema, ParameterSpec, Vertex,
};
use async_trait::async_trait;
use parking_lot::Mutex;
use serde_json::json;
use tokio::runtime::Runtime;
use tokio::time::Instant;

/// Backoff gaps may exceed the nominal delay by at most this much.
const BACKOFF_SLACK: Duration = Duration::from_millis(5);

type Reply = Result<ChatReply, TransportError>;

#[derive(Default)]
struct Stub {
    replies: Mutex<VecDeque<Reply>>,
    calls: Mutex<Vec<(Instant, ChatRequest)>>,
}

impl Stub {
    fn new(replies: Vec<Reply>) -> Arc<Self> {
        Arc::new(Self {
            replies: Mutex::new(replies.into()),
            calls: Mutex::default(),
        })
    }

    fn calls(&self) -> Vec<(Instant, ChatRequest)> {
        self.calls.lock().clone()
    }
}

#[async_trait]
impl ChatTransport for Stub {
    async fn complete(&self, req: &ChatRequest) -> Reply {
        self.calls.lock().push((Instant::now(), req.clone()));
        self.replies
            .lock()
            .pop_front()
            .unwrap_or_else(|| Err(TransportError::Fatal("stub exhausted".into())))
    }
}

fn text(content: &str) -> Reply {
    Ok(ChatReply {
        content: content.into(),
        usage: None,
    })
}

fn transient() -> Reply {
    Err(TransportError::Transient("503 service unavailable".into()))
}

fn settings() -> LlmSettings {
    LlmSettings {
        max_retries: 2,
        backoff_base: Duration::from_secs(1),
        reprompts: 1,
        ..LlmSettings::default()
    }
}

fn subject() -> PromptSubject {
    PromptSubject {
        name: "Critic".into(),
        description: "Reviews drafts for factual errors.".into(),
        system_prompt: "You are a meticulous critic.".into(),
        output_schema: ParameterSchema::new(vec![
            ParameterSpec::required("verdict", ParamKind::String),
            ParameterSpec::optional("score", ParamKind::Number),
        ]),
    }
}

fn ctx() -> Params {
    Params::from_iter([
        ("draft".to_string(), json!("The moon is made of rock.")),
        ("round".to_string(), json!(2)),
    ])
}

fn exec(stub: &Arc<Stub>) -> LlmExecutor {
    LlmExecutor::new(settings(), stub.clone())
}

fn prompt_assembly(rt: &Runtime) {
    let stub = Stub::new(vec![text(r#"{"verdict": "fine"}"#)]);
    let out = rt
        .block_on(exec(&stub).run(&subject(), &ctx(), None))
        .unwrap();
    assert_eq!(out.output_ctx["verdict"], "fine");
    let calls = stub.calls();
    assert_eq!(calls.len(), 1);
    let msgs = &calls[0].1.messages;
    assert_eq!(msgs.len(), 2);
    assert_eq!(
        (msgs[0].role.as_str(), msgs[0].content.as_str()),
        ("system", "You are a meticulous critic.")
    );
    assert_eq!(msgs[1].role, "user");
    let user = &msgs[1].content;
    for needle in [
        "Critic",
        "Reviews drafts for factual errors.",
        "- verdict (string, required)",
        "- score (number, optional)",
        "\"draft\": \"The moon is made of rock.\"",
        "\"round\": 2",
    ] {
        assert!(user.contains(needle), "prompt lacks {needle:?}:\n{user}");
    }
}

fn extraction(rt: &Runtime) {
    let cases = [
        ("```json\n{\"verdict\": \"fenced\"}\n```", "fenced"),
        (
            "Sure! Here is my answer: {\"verdict\": \"prose\", \"score\": 3} Hope it helps.",
            "prose",
        ),
        (
            "Set {a} is odd, but {\"verdict\": \"second\"} is the object.",
            "second",
        ),
        (
            "```\n{\"verdict\": {\"nested\": true}}\n```\ntrailing {\"verdict\": \"later\"}",
            "nested",
        ),
    ];
    for (reply, want) in cases {
        let obj = extract_json_object(reply).unwrap_or_else(|| panic!("nothing in {reply:?}"));
        let got = match &obj["verdict"] {
            serde_json::Value::String(s) => s.clone(),
            _ => "nested".to_string(),
        };
        assert_eq!(got, want, "{reply:?}");
    }
    assert!(extract_json_object("no braces here").is_none());
    assert!(extract_json_object("[1, 2] {broken").is_none());

    // Through the executor, as an agent with an LLM binding.
    let stub = Stub::new(vec![text(
        "Thinking...\n```json\n{\"verdict\": \"ok\"}\n```",
    )]);
    let agent = Vertex::agent(
        "critic",
        AgentRole {
            name: "Critic".into(),
            description: "Reviews drafts.".into(),
            system_prompt: "You are a critic.".into(),
            input_schema: ParameterSchema::required(&[("draft", ParamKind::String)]),
            output_schema: ParameterSchema::required(&[("verdict", ParamKind::String)]),
            logic: LogicBinding::Llm {
                model_hint: "small".into(),
            },
        },
    );
    let de = DefaultExecutor::new().with_llm(Arc::new(exec(&stub)));
    let out = rt.block_on(de.execute(&agent, &ctx())).unwrap();
    assert_eq!(out.output_ctx["verdict"], "ok");
    assert_eq!(stub.calls()[0].1.model, "small");
}

fn reprompt(rt: &Runtime) {
    let stub = Stub::new(vec![
        text("I refuse to use JSON."),
        text("Still no JSON, sorry."),
    ]);
    let err = rt
        .block_on(exec(&stub).run(&subject(), &ctx(), None))
        .unwrap_err();
    assert!(matches!(err, ExecError::Parse(_)), "{err:?}");
    let calls = stub.calls();
    assert_eq!(calls.len(), 2, "exactly one reprompt");
    let second = &calls[1].1.messages;
    assert_eq!(second.len(), 3);
    assert_eq!(second[..2], calls[0].1.messages[..]);
    assert_eq!(second[2].role, "user");
    assert!(second[2].content.contains("I refuse to use JSON."));

    let stub = Stub::new(vec![text("no json"), text("{\"verdict\": \"second try\"}")]);
    let out = rt
        .block_on(exec(&stub).run(&subject(), &ctx(), None))
        .unwrap();
    assert_eq!(out.output_ctx["verdict"], "second try");
}

fn gaps(calls: &[(Instant, ChatRequest)]) -> Vec<Duration> {
    calls.windows(2).map(|w| w[1].0 - w[0].0).collect()
}

fn assert_gaps(got: &[Duration], want: &[Duration]) {
    assert_eq!(got.len(), want.len(), "{got:?}");
    for (g, w) in got.iter().zip(want) {
        assert!(
            *g >= *w && *g <= *w + BACKOFF_SLACK,
            "gap {g:?}, expected {w:?}"
        );
    }
}

fn backoff() -> String {
    let paused = tokio::runtime::Builder::new_current_thread()
        .enable_time()
        .start_paused(true)
        .build()
        .unwrap();
    let s = Duration::from_secs;

    let stub = Stub::new(vec![
        transient(),
        transient(),
        transient(),
        text("{\"verdict\": \"late\"}"),
    ]);
    let err = paused
        .block_on(exec(&stub).run(&subject(), &ctx(), None))
        .unwrap_err();
    assert!(matches!(err, ExecError::Api(_)), "{err:?}");
    assert_eq!(stub.calls().len(), 3, "1 attempt + 2 retries");
    assert_gaps(&gaps(&stub.calls()), &[s(1), s(2)]);

    let stub = Stub::new(vec![
        transient(),
        transient(),
        text("{\"verdict\": \"third\"}"),
    ]);
    let out = paused
        .block_on(exec(&stub).run(&subject(), &ctx(), None))
        .unwrap();
    assert_eq!(out.output_ctx["verdict"], "third");
    assert_gaps(&gaps(&stub.calls()), &[s(1), s(2)]);

    let stub = Stub::new(vec![Err(TransportError::Fatal("401 unauthorized".into()))]);
    let err = paused
        .block_on(exec(&stub).run(&subject(), &ctx(), None))
        .unwrap_err();
    assert!(matches!(err, ExecError::Api(_)), "{err:?}");
    assert_eq!(stub.calls().len(), 1, "fatal errors are not retried");

    let stub = Stub::new(vec![Err(TransportError::Timeout)]);
    let err = paused
        .block_on(exec(&stub).run(&subject(), &ctx(), None))
        .unwrap_err();
    assert!(matches!(err, ExecError::Timeout(_)), "{err:?}");
    "3 calls with 1s/2s backoff then ApiError; fatal not retried".into()
}

fn token_accounting(rt: &Runtime) {
    let stub = Stub::new(vec![Ok(ChatReply {
        content: "{\"verdict\": \"x\"}".into(),
        usage: Some(Usage {
            prompt_tokens: 120,
            completion_tokens: 7,
        }),
    })]);
    let out = rt
        .block_on(exec(&stub).run(&subject(), &ctx(), None))
        .unwrap();
    assert_eq!(out.token_cost, 127);

    let reply = "{\"verdict\": \"x\"}";
    let stub = Stub::new(vec![text(reply)]);
    let out = rt
        .block_on(exec(&stub).run(&subject(), &ctx(), None))
        .unwrap();
    let sent: usize = stub.calls()[0]
        .1
        .messages
        .iter()
        .map(|m| m.content.chars().count())
        .sum();
    let chars = (sent + reply.chars().count()) as u64;
    assert_eq!(out.token_cost, chars.div_ceil(4));
}

pub fn run(rt: &Runtime) -> String {
    prompt_assembly(rt);
    extraction(rt);
    reprompt(rt);
    let retry = backoff();
    token_accounting(rt);
    format!("prompt carries system prompt, schema and ctx; fenced and prose JSON extracted; ParseError after one reprompt; {retry}")
}

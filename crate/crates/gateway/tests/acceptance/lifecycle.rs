use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use agentmesh::config::Limits;
use agentmesh::executors::{ExecError, ExecutionResult, Params, VertexExecutor};
use agentmesh::flowlog::{FailureReason, FlowRecord, InvocationStatus, TaskStatus};
use agentmesh::network::{
    AgentRole, LogicBinding, NetworkOwner, ParamKind, ParameterSchema, Route, Vertex,
};
use agentmesh::scheduler::{Scheduler, TaskRequest};
use agentmesh::testkit::{group, network};
use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tokio::runtime::Runtime;

const CASES: usize = 60;
const DEADLINE_S: f64 = 0.5;
const MAX_STEPS: usize = 10;
/// Allowed gap between a record's total time and its chain's summed time:
/// 5% of the total, plus one millisecond per entry and one for the total,
/// since every duration is truncated to whole milliseconds.
const TIME_REL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Behaviour {
    Ok { sleep_ms: u64, tokens: u64 },
    WrongKind { tokens: u64 },
    Error,
    Hang,
    Changing { tokens: u64 },
}

impl Behaviour {
    fn tokens(self) -> u64 {
        match self {
            Behaviour::Ok { tokens, .. }
            | Behaviour::WrongKind { tokens }
            | Behaviour::Changing { tokens } => tokens,
            Behaviour::Error | Behaviour::Hang => 0,
        }
    }
}

struct Scripted {
    behaviours: HashMap<String, Behaviour>,
    outputs: HashMap<String, String>,
    counter: AtomicU64,
}

#[async_trait]
impl VertexExecutor for Scripted {
    async fn execute(&self, vertex: &Vertex, ctx: &Params) -> Result<ExecutionResult, ExecError> {
        let id = vertex.id.as_str();
        let out = self.outputs[id].clone();
        let seed = ctx
            .values()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("|");
        let value = |tokens| ExecutionResult {
            output_ctx: Params::from_iter([(out.clone(), json!(format!("{seed}>{id}")))]),
            token_cost: tokens,
            wall_time_ms: 0,
            raw_trace: None,
        };
        match self.behaviours[id] {
            Behaviour::Ok { sleep_ms, tokens } => {
                tokio::time::sleep(Duration::from_millis(sleep_ms)).await;
                Ok(value(tokens))
            }
            Behaviour::WrongKind { tokens } => Ok(ExecutionResult {
                output_ctx: Params::from_iter([(out.clone(), json!(7))]),
                ..value(tokens)
            }),
            Behaviour::Error => Err(ExecError::Executor(format!("{id} refused"))),
            Behaviour::Hang => {
                tokio::time::sleep(Duration::from_secs(3600)).await;
                Err(ExecError::Executor("woke".into()))
            }
            Behaviour::Changing { tokens } => {
                let n = self.counter.fetch_add(1, Ordering::Relaxed);
                Ok(ExecutionResult {
                    output_ctx: Params::from_iter([(
                        out.clone(),
                        json!(format!("{id} round {n} {}", n * n)),
                    )]),
                    ..value(tokens)
                })
            }
        }
    }
}

fn string_agent(id: &str, input: &str, output: &str) -> Vertex {
    Vertex::agent(
        id,
        AgentRole {
            name: id.into(),
            description: format!("{id} step"),
            system_prompt: String::new(),
            input_schema: ParameterSchema::required(&[(input, ParamKind::String)]),
            output_schema: ParameterSchema::required(&[(output, ParamKind::String)]),
            logic: LogicBinding::builtin("identity"),
        },
    )
}

struct Case {
    sched: Scheduler,
    target: &'static str,
    behaviours: HashMap<String, Behaviour>,
    expect: Result<(), FailureReason>,
    looped: bool,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let len = rng.random_range(1..=4);
    let looped = len >= 2 && rng.random_bool(0.2);
    let grouped = !looped && rng.random_bool(0.3);
    let ids: Vec<String> = (0..len).map(|i| format!("v{i}")).collect();
    let mut behaviours = HashMap::new();
    let mut outputs = HashMap::new();
    let mut expect = Ok(());
    for (i, id) in ids.iter().enumerate() {
        let tokens = rng.random_range(0..50);
        let b = if looped {
            if rng.random_bool(0.5) {
                Behaviour::Changing { tokens }
            } else {
                Behaviour::Ok {
                    sleep_ms: rng.random_range(0..3),
                    tokens,
                }
            }
        } else {
            match rng.random_range(0..100) {
                0..70 => Behaviour::Ok {
                    sleep_ms: rng.random_range(0..6),
                    tokens,
                },
                70..80 => Behaviour::WrongKind { tokens },
                80..90 => Behaviour::Error,
                _ => Behaviour::Hang,
            }
        };
        if expect.is_ok() {
            expect = match b {
                Behaviour::WrongKind { .. } => Err(FailureReason::ContractViolation),
                Behaviour::Error => Err(FailureReason::ExecutorError),
                Behaviour::Hang => Err(FailureReason::Timeout),
                _ => Ok(()),
            };
        }
        behaviours.insert(id.clone(), b);
        outputs.insert(id.clone(), format!("p{}", i + 1));
    }
    if looped {
        expect = Err(FailureReason::StepBudgetExhausted);
    }
    let mut vertexes: Vec<Vertex> = (0..len)
        .map(|i| string_agent(&ids[i], &format!("p{i}"), &format!("p{}", i + 1)))
        .collect();
    let mut routes = Vec::new();
    let target = if grouped {
        let members: Vec<&str> = ids.iter().map(String::as_str).collect();
        vertexes.push(group("grp", &members, &["p0"], &[&format!("p{len}")]));
        "grp"
    } else {
        routes.extend((1..len).map(|i| Route::hard(ids[i - 1].as_str(), ids[i].as_str())));
        if looped {
            routes.push(Route::hard(ids[len - 1].as_str(), "v0"));
        }
        "v0"
    };
    let exec = Scripted {
        behaviours: behaviours.clone(),
        outputs,
        counter: AtomicU64::new(0),
    };
    let sched = Scheduler::builder(
        Arc::new(NetworkOwner::new(network(vertexes, routes))),
        Arc::new(exec),
    )
    .limits(Limits {
        max_steps: MAX_STEPS,
        deadline_s: DEADLINE_S,
        ..Limits::default()
    })
    .build();
    Case {
        sched,
        target,
        behaviours,
        expect,
        looped,
    }
}

fn expected_tokens(rec: &FlowRecord, behaviours: &HashMap<String, Behaviour>) -> u64 {
    rec.chain
        .iter()
        .filter(|c| c.status.is_finished())
        .map(|c| {
            behaviours
                .get(c.vertex_id.as_str())
                .map_or(0, |b| b.tokens())
        })
        .sum()
}

fn is_subsequence(seen: &[TaskStatus], of: &[TaskStatus]) -> bool {
    let mut it = of.iter();
    seen.iter().all(|s| it.any(|o| o == s))
}

async fn check_case(n: usize, case: Case) -> (bool, usize) {
    let id = case
        .sched
        .submit(TaskRequest::new(
            case.target,
            Params::from_iter([("p0".to_string(), Value::from("seed"))]),
        ))
        .unwrap();
    let poll_sched = case.sched.clone();
    let poll_id = id.clone();
    let poller = tokio::spawn(async move {
        let mut seen: Vec<TaskStatus> = Vec::new();
        loop {
            let s = poll_sched.get_status(&poll_id).unwrap().status;
            if seen.last() != Some(&s) {
                seen.push(s);
            }
            if s.is_terminal() {
                return seen;
            }
            tokio::time::sleep(Duration::from_millis(1)).await;
        }
    });
    let task = case.sched.wait(&id).await.unwrap();
    let seen = poller.await.unwrap();

    let terminal = if case.expect.is_ok() {
        TaskStatus::Success
    } else {
        TaskStatus::Fail
    };
    let full = [TaskStatus::New, TaskStatus::Running, terminal];
    assert_eq!(task.status_history, full, "case {n}");
    assert!(is_subsequence(&seen, &full), "case {n}: polled {seen:?}");
    assert_eq!(
        task.failure_reason,
        case.expect.err(),
        "case {n}: {:?}",
        task.failure_detail
    );

    let rec = case
        .sched
        .flow_record(&id)
        .unwrap()
        .expect("record after wait");
    rec.validate().unwrap_or_else(|e| panic!("case {n}: {e}"));
    assert_eq!(rec.status, terminal);
    let graph = case.sched.get_graph(&id).unwrap();
    assert_eq!(rec.chain.len(), graph.nodes.len());
    assert!(
        graph
            .nodes
            .iter()
            .all(|g| g.status != InvocationStatus::Running),
        "case {n}: open node"
    );
    let chain_tokens: u64 = rec.chain.iter().map(|c| c.token_cost).sum();
    assert_eq!(rec.total_tokens, chain_tokens, "case {n}");
    assert_eq!(
        rec.total_tokens,
        expected_tokens(&rec, &case.behaviours),
        "case {n}"
    );

    let chain_ms: u64 = rec.chain.iter().map(|c| c.wall_time_ms).sum();
    let slack = TIME_REL * rec.total_time_ms as f64 + rec.chain.len() as f64 + 1.0;
    let gap = (rec.total_time_ms as f64 - chain_ms as f64).abs();
    assert!(
        gap <= slack,
        "case {n}: total {} vs chain {chain_ms}",
        rec.total_time_ms
    );
    if case.looped {
        assert!(rec.chain.len() <= MAX_STEPS, "case {n}");
    }
    (case.expect.is_ok(), rec.chain.len())
}

pub fn run(rt: &Runtime) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let cases: Vec<Case> = (0..CASES).map(|_| random_case(&mut rng)).collect();
    let mut reasons: HashMap<String, usize> = HashMap::new();
    for c in &cases {
        let key = c
            .expect
            .map_or_else(|r| format!("{r:?}"), |_| "Success".into());
        *reasons.entry(key).or_default() += 1;
    }
    let results = rt.block_on(async {
        let handles: Vec<_> = cases
            .into_iter()
            .enumerate()
            .map(|(n, c)| tokio::spawn(check_case(n, c)))
            .collect();
        let mut out = Vec::new();
        for h in handles {
            out.push(
                h.await
                    .unwrap_or_else(|e| std::panic::resume_unwind(e.into_panic())),
            );
        }
        out
    });
    let nodes: usize = results.iter().map(|r| r.1).sum();
    let mut reasons: Vec<_> = reasons.into_iter().collect();
    reasons.sort();
    let summary: Vec<String> = reasons.iter().map(|(k, v)| format!("{k} {v}")).collect();
    for required in [
        "Success",
        "ContractViolation",
        "ExecutorError",
        "Timeout",
        "StepBudgetExhausted",
    ] {
        assert!(
            reasons.iter().any(|(k, _)| k == required),
            "no {required} case generated"
        );
    }
    format!(
        "{CASES} concurrent tasks, {nodes} invocations: {}",
        summary.join(", ")
    )
}

use std::sync::Arc;

use agentmesh::config::Limits;
use agentmesh::executors::Params;
use agentmesh::flowlog::{FailureReason, TaskStatus};
use agentmesh::network::{NetworkOwner, Route};
use agentmesh::scheduler::{detect_stall, Scheduler, StallDecision, TaskRequest};
use agentmesh::testkit::{agent, network, ScriptedExecutor};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tokio::runtime::Runtime;

use crate::naive::{canonical, jaccard};

const THRESHOLD: f64 = 0.95;
const MAX_STEPS: usize = 12;
const HISTORIES: usize = 300;
const WORDS: [&str; 6] = ["alpha", "beta", "gamma", "delta", "x", "y"];

fn random_params(rng: &mut ChaCha8Rng) -> Params {
    let n = rng.random_range(0..=3);
    (0..n)
        .map(|_| {
            let k = WORDS.choose(rng).unwrap().to_string();
            let len = rng.random_range(0..=4);
            let text: Vec<&str> = (0..len).map(|_| *WORDS.choose(rng).unwrap()).collect();
            (k, json!(text.join(" ")))
        })
        .collect()
}

fn naive_decision(history: &[Params], strikes: u32, threshold: f64) -> StallDecision {
    if history.len() < 2 {
        return StallDecision::Continue;
    }
    let a = canonical(&Value::Object(history[history.len() - 2].clone()));
    let b = canonical(&Value::Object(history[history.len() - 1].clone()));
    if jaccard(&a, &b) < threshold {
        StallDecision::Continue
    } else if strikes == 0 {
        StallDecision::Reflect
    } else {
        StallDecision::Abort
    }
}

fn ping_pong(
    rt: &Runtime,
    output: fn(u64) -> Value,
) -> (Vec<String>, usize, Option<FailureReason>) {
    let net = network(
        vec![agent("a", &["x"], &["x"]), agent("b", &["x"], &["x"])],
        vec![Route::hard("a", "b"), Route::hard("b", "a")],
    );
    let exec = ScriptedExecutor::new()
        .with("a", move |_, n| {
            Ok((Params::from_iter([("x".to_string(), output(n))]), 1))
        })
        .with("b", |_, n| {
            Ok((
                Params::from_iter([("x".to_string(), json!(format!("b pass {n} {}", n * 31)))]),
                1,
            ))
        });
    let sched = Scheduler::builder(Arc::new(NetworkOwner::new(net)), Arc::new(exec))
        .limits(Limits {
            max_steps: MAX_STEPS,
            stall_threshold: THRESHOLD,
            ..Limits::default()
        })
        .build();
    rt.block_on(async {
        let id = sched
            .submit(TaskRequest::new(
                "a",
                Params::from_iter([("x".to_string(), json!("start"))]),
            ))
            .unwrap();
        let task = sched.wait(&id).await.unwrap();
        assert_eq!(task.status, TaskStatus::Fail);
        let g = sched.get_graph(&id).unwrap();
        let chain = g.nodes.iter().map(|n| n.vertex_id.to_string()).collect();
        (chain, g.reflections(), task.failure_reason)
    })
}

const NEAR: &str = "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10 w11 w12 w13 w14 w15 w16 w17 w18 w19";

fn near_output(n: u64) -> Value {
    json!(format!("{NEAR} v{n}"))
}

pub fn run(rt: &Runtime) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0008);
    for i in 0..HISTORIES {
        let len = rng.random_range(0..=4);
        let mut history: Vec<Params> = (0..len).map(|_| random_params(&mut rng)).collect();
        if len >= 2 && rng.random_bool(0.3) {
            history[len - 1] = history[len - 2].clone();
        }
        let strikes = rng.random_range(0..=2);
        let threshold = *[0.5, THRESHOLD, 1.0].choose(&mut rng).unwrap();
        assert_eq!(
            detect_stall(&history, strikes, threshold),
            naive_decision(&history, strikes, threshold),
            "history {i}: {history:?}"
        );
    }

    let (chain, reflections, reason) = ping_pong(rt, |_| json!("same"));
    assert_eq!(chain, ["a", "b", "a", "a"]);
    assert_eq!(reflections, 1);
    assert_eq!(reason, Some(FailureReason::StepBudgetExhausted));

    let (chain, reflections, reason) = ping_pong(rt, |n| json!(format!("draft {n} {}", n * 7)));
    assert_eq!(chain.len(), MAX_STEPS);
    assert_eq!(reflections, 0);
    assert_eq!(reason, Some(FailureReason::StepBudgetExhausted));

    let near = jaccard(
        &canonical(&json!({"x": near_output(1)})),
        &canonical(&json!({"x": near_output(2)})),
    );
    assert!(
        near > 0.9 && near < THRESHOLD,
        "near-threshold similarity {near}"
    );
    let (chain, reflections, _) = ping_pong(rt, near_output);
    assert_eq!(chain.len(), MAX_STEPS);
    assert_eq!(reflections, 0, "similarity {near:.3} must not reflect");

    format!(
        "{HISTORIES} histories match reference; identical outputs: a > b > a > a, 1 reflection, then StepBudgetExhausted; \
         changing outputs: 0 reflections over {MAX_STEPS} steps; similarity {near:.3} below {THRESHOLD} does not reflect"
    )
}

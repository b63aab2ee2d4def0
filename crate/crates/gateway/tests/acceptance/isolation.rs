use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use agentmesh::executors::DefaultExecutor;
use agentmesh::flowlog::TaskStatus;
use agentmesh::network::{LogicBinding, NetworkOwner, Route};
use agentmesh::scheduler::{ExecutionGraph, Provenance, Scheduler, TaskRequest};
use agentmesh::testkit::{agent_with, group, network};
use serde_json::{json, Map, Value};
use tokio::runtime::Runtime;

use crate::naive::words;

const CONCURRENT: usize = 50;
const REPS: usize = 20;
const BUDGET: Duration = Duration::from_secs(60);

fn scheduler() -> Scheduler {
    let b =
        |id: &str, i: &[&str], o: &[&str], t: &str| agent_with(id, i, o, LogicBinding::builtin(t));
    let net = network(
        vec![
            b("a", &["x"], &["y"], "rename:x:y"),
            b("b", &["y"], &["y"], "sleep:2"),
            b("c", &["y"], &["u"], "rename:y:u"),
            b("d", &["u"], &["w"], "rename:u:w"),
            group("g", &["c", "d"], &["y"], &["w"]),
        ],
        vec![Route::hard("a", "b"), Route::hard("b", "g")],
    );
    Scheduler::builder(
        Arc::new(NetworkOwner::new(net)),
        Arc::new(DefaultExecutor::new()),
    )
    .build()
}

/// Every sentinel-looking token in the graph must be the task's own, and
/// every provenance must point at an invocation of the same task that
/// produced that value.
fn check_graph(task_id: &str, sentinel: &str, graph: &ExecutionGraph) {
    let text = serde_json::to_string(graph).unwrap();
    let seen: BTreeSet<String> = words(&text)
        .into_iter()
        .filter(|w| w.starts_with("snt_"))
        .collect();
    assert_eq!(
        seen,
        BTreeSet::from([sentinel.to_string()]),
        "task {task_id} saw {seen:?}"
    );
    for n in &graph.nodes {
        assert!(
            n.inv_id.starts_with(&format!("{task_id}/")),
            "foreign node {}",
            n.inv_id
        );
        for (name, e) in n.input_ctx.iter() {
            let Provenance::Invocation(p) = &e.provenance else {
                continue;
            };
            let producer = graph
                .node(p)
                .unwrap_or_else(|| panic!("{name} in {} from unknown {p}", n.inv_id));
            let produced = producer.output_ctx.as_ref().and_then(|o| o.get(name));
            assert_eq!(
                produced.map(|x| &x.value),
                Some(&e.value),
                "{name} in {} vs {p}",
                n.inv_id
            );
        }
    }
}

pub fn run(rt: &Runtime) -> String {
    let started = Instant::now();
    let sched = scheduler();
    let mut checked = 0;
    for rep in 0..REPS {
        let batch: Vec<(String, String)> = (0..CONCURRENT)
            .map(|i| {
                let sentinel = format!("snt_{rep}_{i}_{:08x}", (rep * 7919 + i * 104_729) as u32);
                let payload: Map<String, Value> =
                    [("x".to_string(), json!(sentinel))].into_iter().collect();
                let id =
                    rt.block_on(async { sched.submit(TaskRequest::new("a", payload)).unwrap() });
                (id, sentinel)
            })
            .collect();
        rt.block_on(async {
            // Tasks already run concurrently; waiting in order is enough.
            for (id, _) in &batch {
                let t = sched.wait(id).await.unwrap();
                assert_eq!(t.status, TaskStatus::Success, "{t:?}");
            }
        });
        for (id, sentinel) in &batch {
            let task = sched.get_status(id).unwrap();
            assert_eq!(
                task.output.as_ref().and_then(|o| o.get("w")),
                Some(&json!(sentinel))
            );
            let graph = sched.get_graph(id).unwrap();
            let chain: Vec<&str> = graph.nodes.iter().map(|n| n.vertex_id.as_str()).collect();
            assert_eq!(chain, ["a", "b", "g", "c", "d"]);
            check_graph(id, sentinel, &graph);
            checked += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed < BUDGET, "took {elapsed:?}");
    format!("{checked} tasks in {REPS} waves of {CONCURRENT}: no foreign sentinel, all provenance resolves")
}

use std::time::{Duration, Instant};

use agentmesh::flowlog::{scan_file, TaskStatus};
use serde_json::{json, Value};
use tokio::runtime::Runtime;

use crate::common::{poll_done, start, to_json, writing_services};

const BUDGET: Duration = Duration::from_secs(30);

pub fn run(rt: &Runtime) -> String {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let detail = rt.block_on(async {
        let gw = start(dir.path()).await;
        let client = gw.client();
        for v in writing_services() {
            assert_eq!(client.register(&to_json(&v)).await.unwrap(), v.id.as_str());
        }
        // No EXT route exists, so the reviewer can only come from discovery.
        assert!(client.routes().await.unwrap().is_empty());

        let task_id = client
            .submit("writing", &json!({"topic": "spec"}), Some(10.0))
            .await
            .unwrap();
        let task = poll_done(&client, &task_id, Duration::from_secs(20)).await;
        assert_eq!(task["status"], "Success", "{task}");
        assert_eq!(task["output"]["report"], "spec-ok");

        let graph = client.graph_json(&task_id).await.unwrap();
        let nodes = graph["nodes"].as_array().unwrap();
        let chain: Vec<&str> = nodes
            .iter()
            .map(|n| n["vertex_id"].as_str().unwrap())
            .collect();
        assert_eq!(chain, ["writing", "drafter", "reviewer", "finalizer"]);
        let ext: Vec<&Value> = nodes
            .iter()
            .filter(|n| n["route_kind_used"] == "EXT")
            .collect();
        assert_eq!(ext.len(), 1, "exactly one EXT node");
        assert_eq!(ext[0]["vertex_id"], "reviewer");

        let dot = client.graph_dot(&task_id).await.unwrap();
        assert!(
            dot.starts_with("digraph") && dot.trim_end().ends_with('}'),
            "{dot}"
        );
        assert_eq!(dot.matches('{').count(), dot.matches('}').count());

        let scan = scan_file(&gw.config.flow_log_path).unwrap();
        assert_eq!(scan.skipped_lines, 0);
        assert_eq!(scan.records.len(), 1, "one flow record");
        let rec = &scan.records[0];
        rec.validate().unwrap();
        assert_eq!(rec.task_id, task_id);
        assert_eq!(rec.status, TaskStatus::Success);
        gw.stop().await;
        format!("chain {}, EXT via discovery: reviewer", chain.join(" > "))
    });
    let elapsed = started.elapsed();
    assert!(elapsed < BUDGET, "took {elapsed:?}");
    format!("5 services over HTTP, {detail}, one valid flow record")
}

#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use agentmesh::network::{LogicBinding, Vertex};
use agentmesh::testkit::{agent_with, group};
use agentmesh_gateway::{Client, Gateway, GatewayConfig};
use serde_json::Value;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub struct Running {
    pub addr: SocketAddr,
    pub url: String,
    pub config: GatewayConfig,
    stop: Option<oneshot::Sender<()>>,
    handle: Option<JoinHandle<()>>,
}

impl Running {
    pub fn client(&self) -> Client {
        Client::new(&self.url)
    }

    pub async fn stop(mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(h) = self.handle.take() {
            h.await.unwrap();
        }
    }
}

pub fn config_in(dir: &Path) -> GatewayConfig {
    GatewayConfig {
        listen_addr: "127.0.0.1:0".into(),
        ..GatewayConfig::in_dir(dir)
    }
}

pub async fn start(dir: &Path) -> Running {
    let config = config_in(dir);
    let gw = Gateway::bind(&config).await.expect("gateway binds");
    let addr = gw.local_addr();
    let (tx, rx) = oneshot::channel();
    let handle = tokio::spawn(async move {
        gw.serve_until(async {
            let _ = rx.await;
        })
        .await
        .unwrap();
    });
    Running {
        addr,
        url: format!("http://{addr}"),
        config,
        stop: Some(tx),
        handle: Some(handle),
    }
}

pub fn to_json(v: &Vertex) -> Value {
    serde_json::to_value(v).unwrap()
}

/// Five services: a writing group of two members that cannot produce a
/// `review` themselves, a reviewer outside the group, and an unrelated
/// translator.
pub fn writing_services() -> Vec<Vertex> {
    vec![
        agent_with(
            "drafter",
            &["topic"],
            &["draft"],
            LogicBinding::builtin("rename:topic:draft"),
        ),
        agent_with(
            "finalizer",
            &["draft", "review"],
            &["report"],
            LogicBinding::builtin("concat:draft:review:report"),
        ),
        group(
            "writing",
            &["drafter", "finalizer"],
            &["topic"],
            &["report"],
        ),
        agent_with(
            "reviewer",
            &["draft"],
            &["review"],
            LogicBinding::builtin(r#"const:review:"-ok""#),
        ),
        agent_with(
            "translator",
            &["text"],
            &["translation"],
            LogicBinding::builtin("rename:text:translation"),
        ),
    ]
}

/// Polls until the task leaves New/Running.
pub async fn poll_done(client: &Client, task_id: &str, limit: Duration) -> Value {
    let deadline = tokio::time::Instant::now() + limit;
    loop {
        let t = client.status(task_id).await.unwrap();
        let s = t["status"].as_str().unwrap_or_default().to_string();
        if s == "Success" || s == "Fail" {
            return t;
        }
        assert!(
            tokio::time::Instant::now() < deadline,
            "task {task_id} still {s}"
        );
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

//! Thin HTTP client for the gateway API.

use agentmesh::network::Route;
use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{code}: {message}")]
    Api {
        status: u16,
        code: String,
        message: String,
    },
    #[error("ConnectionError: {0}")]
    Transport(#[from] reqwest::Error),
}

impl ClientError {
    pub fn code(&self) -> &str {
        match self {
            ClientError::Api { code, .. } => code,
            ClientError::Transport(_) => "ConnectionError",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base: base_url.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn finish(resp: reqwest::Response) -> Result<reqwest::Response, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await?;
        let body: Value = serde_json::from_str(&text).unwrap_or(Value::Null);
        let field = |k: &str| body.get(k).and_then(Value::as_str).map(String::from);
        Err(ClientError::Api {
            status: status.as_u16(),
            code: field("error").unwrap_or_else(|| format!("Http{}", status.as_u16())),
            message: field("message").unwrap_or(text),
        })
    }

    async fn json(resp: reqwest::Response) -> Result<Value, ClientError> {
        let resp = Self::finish(resp).await?;
        if resp.status() == reqwest::StatusCode::NO_CONTENT {
            return Ok(Value::Null);
        }
        Ok(resp.json().await?)
    }

    async fn get(&self, path: &str) -> Result<Value, ClientError> {
        Self::json(self.http.get(self.url(path)).send().await?).await
    }

    async fn post(&self, path: &str, body: &Value) -> Result<Value, ClientError> {
        Self::json(self.http.post(self.url(path)).json(body).send().await?).await
    }

    pub async fn health(&self) -> Result<Value, ClientError> {
        self.get("/v1/health").await
    }

    /// Body is a registration or a bare vertex descriptor. Returns the
    /// service id.
    pub async fn register(&self, body: &Value) -> Result<String, ClientError> {
        let v = self.post("/v1/services", body).await?;
        Ok(v["service_id"].as_str().unwrap_or_default().to_string())
    }

    pub async fn deregister(&self, service_id: &str) -> Result<(), ClientError> {
        let resp = self
            .http
            .delete(self.url(&format!("/v1/services/{service_id}")))
            .send()
            .await?;
        Self::finish(resp).await.map(drop)
    }

    pub async fn heartbeat(&self, service_id: &str) -> Result<Value, ClientError> {
        self.post(
            &format!("/v1/services/{service_id}/heartbeat"),
            &Value::Null,
        )
        .await
    }

    pub async fn discover(
        &self,
        name: Option<&str>,
        keywords: &[String],
        top_k: Option<usize>,
    ) -> Result<Value, ClientError> {
        let mut q: Vec<(&str, String)> = Vec::new();
        if let Some(n) = name {
            q.push(("name", n.to_string()));
        }
        if !keywords.is_empty() {
            q.push(("keywords", keywords.join(",")));
        }
        if let Some(k) = top_k {
            q.push(("top_k", k.to_string()));
        }
        let resp = self
            .http
            .get(self.url("/v1/services"))
            .query(&q)
            .send()
            .await?;
        Self::json(resp).await
    }

    pub async fn submit(
        &self,
        target: &str,
        payload: &Value,
        deadline_s: Option<f64>,
    ) -> Result<String, ClientError> {
        let mut body = json!({"target": target, "payload": payload});
        if let Some(d) = deadline_s {
            body["deadline_s"] = json!(d);
        }
        let v = self.post("/v1/tasks", &body).await?;
        Ok(v["task_id"].as_str().unwrap_or_default().to_string())
    }

    pub async fn status(&self, task_id: &str) -> Result<Value, ClientError> {
        self.get(&format!("/v1/tasks/{task_id}")).await
    }

    pub async fn graph_json(&self, task_id: &str) -> Result<Value, ClientError> {
        self.get(&format!("/v1/tasks/{task_id}/graph")).await
    }

    pub async fn graph_dot(&self, task_id: &str) -> Result<String, ClientError> {
        let resp = self
            .http
            .get(self.url(&format!("/v1/tasks/{task_id}/graph")))
            .query(&[("format", "dot")])
            .send()
            .await?;
        Ok(Self::finish(resp).await?.text().await?)
    }

    pub async fn routes(&self) -> Result<Vec<Route>, ClientError> {
        let v = self.get("/v1/routes").await?;
        Ok(serde_json::from_value(v["routes"].clone()).unwrap_or_default())
    }

    pub async fn add_route(&self, route: &Route) -> Result<Value, ClientError> {
        self.post(
            "/v1/routes",
            &serde_json::to_value(route).expect("route serializes"),
        )
        .await
    }
}

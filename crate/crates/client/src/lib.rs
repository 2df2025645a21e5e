//! Async client for the gatescope service. Responses are returned as the
//! service's JSON, except for the few replies with a fixed shape.

use reqwest::{RequestBuilder, Response};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use reqwest::{Method, StatusCode};

#[derive(Debug, Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("{code}: {message}")]
    Api {
        status: u16,
        code: String,
        message: String,
        seq: Option<u64>,
    },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn code(&self) -> &str {
        match self {
            ClientError::Api { code, .. } => code,
            ClientError::Transport(_) => "TransportError",
            ClientError::Decode(_) => "DecodeError",
        }
    }
}

impl From<reqwest::Error> for ClientError {
    fn from(e: reqwest::Error) -> Self {
        if e.is_decode() {
            ClientError::Decode(e.to_string())
        } else {
            ClientError::Transport(e.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Created {
    pub id: u64,
    pub seq: u64,
    pub submodule: Value,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct CommandReply {
    pub text: String,
    pub data: Value,
    pub seq: u64,
}

#[derive(Deserialize)]
struct ErrorBody {
    code: String,
    message: String,
    #[serde(default)]
    seq: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:7878`.
    pub fn new(base: impl Into<String>) -> Self {
        let mut base = base.into();
        while base.ends_with('/') {
            base.pop();
        }
        if !base.contains("://") {
            base = format!("http://{base}");
        }
        Client {
            base,
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn req(&self, method: Method, path: &str) -> RequestBuilder {
        self.http.request(method, format!("{}{path}", self.base))
    }

    async fn send<T: DeserializeOwned>(&self, rb: RequestBuilder) -> Result<T> {
        let resp = check(rb.send().await?).await?;
        Ok(resp.json().await?)
    }

    async fn post<T: DeserializeOwned>(&self, path: &str, body: &impl Serialize) -> Result<T> {
        self.send(self.req(Method::POST, path).json(body)).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str, query: &[(&str, String)]) -> Result<T> {
        self.send(self.req(Method::GET, path).query(query)).await
    }

    pub async fn summary(&self) -> Result<Value> {
        self.get("/netlist/summary", &[]).await
    }

    /// Digest of the live project.
    pub async fn digest(&self) -> Result<String> {
        let s = self.summary().await?;
        s["digest"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::Decode("summary has no digest".into()))
    }

    pub async fn graph(&self, center: u32, radius: usize) -> Result<Value> {
        self.get("/graph", &[("center", center.to_string()), ("radius", radius.to_string())])
            .await
    }

    pub async fn gate(&self, id: u32) -> Result<Value> {
        self.get(&format!("/gate/{id}"), &[]).await
    }

    pub async fn submodules(&self) -> Result<Value> {
        self.get("/submodules", &[]).await
    }

    pub async fn create_submodule(&self, name: &str, color: Option<[u8; 3]>) -> Result<Created> {
        self.post("/submodules", &json!({ "name": name, "color": color })).await
    }

    pub async fn assign_gates(&self, submodule: u64, gates: &[u32]) -> Result<Value> {
        self.post(&format!("/submodules/{submodule}/gates"), &json!({ "gates": gates }))
            .await
    }

    pub async fn unassign_gates(&self, submodule: u64, gates: &[u32]) -> Result<Value> {
        self.post(
            &format!("/submodules/{submodule}/gates"),
            &json!({ "gates": gates, "remove": true }),
        )
        .await
    }

    /// Reports a UI selection; returns the seq of the logged event.
    pub async fn select(&self, gates: &[u32]) -> Result<u64> {
        let v: Value = self.post("/select", &json!({ "gates": gates })).await?;
        v["seq"].as_u64().ok_or_else(|| ClientError::Decode("reply has no seq".into()))
    }

    pub async fn command(&self, line: &str) -> Result<CommandReply> {
        self.post("/command", &json!({ "line": line })).await
    }

    pub async fn trace(&self, probes: &[&str], cycles: usize, seed: u64) -> Result<Value> {
        let mut q = vec![("cycles", cycles.to_string()), ("seed", seed.to_string())];
        q.extend(probes.iter().map(|p| ("probe", p.to_string())));
        self.get("/trace", &q).await
    }

    /// Logged records with seq greater than `after`.
    pub async fn events(&self, after: u64) -> Result<Vec<Value>> {
        self.get("/events", &[("after", after.to_string())]).await
    }

    /// Opens the server-sent event stream, starting after `after`.
    pub async fn stream(&self, after: u64) -> Result<EventStream> {
        let rb = self
            .req(Method::GET, "/events/stream")
            .query(&[("after", after.to_string())])
            .header("accept", "text/event-stream");
        let resp = check(rb.send().await?).await?;
        Ok(EventStream { resp, buf: Vec::new() })
    }

    /// Sends a raw request; for callers that need a status code.
    pub async fn raw(&self, method: Method, path: &str, body: Option<String>) -> Result<(StatusCode, Value)> {
        let mut rb = self.req(method, path);
        if let Some(b) = body {
            rb = rb.header("content-type", "application/json").body(b);
        }
        let resp = rb.send().await?;
        let status = resp.status();
        let text = resp.text().await?;
        let v = serde_json::from_str(&text).unwrap_or(Value::String(text));
        Ok((status, v))
    }
}

async fn check(resp: Response) -> Result<Response> {
    if resp.status().is_success() {
        return Ok(resp);
    }
    let status = resp.status().as_u16();
    let text = resp.text().await?;
    match serde_json::from_str::<ErrorBody>(&text) {
        Ok(b) => Err(ClientError::Api {
            status,
            code: b.code,
            message: b.message,
            seq: b.seq,
        }),
        Err(_) => Err(ClientError::Api {
            status,
            code: "HttpError".into(),
            message: text,
            seq: None,
        }),
    }
}

/// Records from `/events/stream`, in seq order.
pub struct EventStream {
    resp: Response,
    buf: Vec<u8>,
}

impl EventStream {
    /// Next record, or `None` once the server closes the stream.
    pub async fn next(&mut self) -> Option<Result<Value>> {
        loop {
            if let Some(end) = self.buf.windows(2).position(|w| w == b"\n\n") {
                let raw: Vec<u8> = self.buf.drain(..end + 2).collect();
                let block = String::from_utf8_lossy(&raw);
                let data: Vec<&str> = block
                    .lines()
                    .filter_map(|l| l.strip_prefix("data:"))
                    .map(|d| d.strip_prefix(' ').unwrap_or(d))
                    .collect();
                if data.is_empty() {
                    continue;
                }
                return Some(serde_json::from_str(&data.join("\n")).map_err(|e| ClientError::Decode(e.to_string())));
            }
            match self.resp.chunk().await {
                Ok(Some(bytes)) => self.buf.extend_from_slice(&bytes),
                Ok(None) => return None,
                Err(e) => return Some(Err(e.into())),
            }
        }
    }
}

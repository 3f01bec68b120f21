//! HTTP JSON backends speaking the chat-completions wire shape.
//!
//! One client serves all four roles; role separation is logical, keyed by
//! backend id. Vision calls (caption, VQA) send multimodal messages whose
//! image part is either a base64 data URL or a local-file reference,
//! depending on the configured image mode. Embeddings use the common
//! `{model, input: [...]}` / `{data: [{embedding: [...]}]}` shape.
//!
//! Transient transport failures (connect errors, timeouts, HTTP 429/5xx)
//! are retried twice with backoff; only the final successful attempt is
//! accounted, with the retry count logged on the event.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use serde::Deserialize;
use serde_json::json;

use super::{
    BackendReply, BackendSuite, CaptionBackend, ChatBackend, ChatMessage, EmbeddingBackend,
    EmbeddingReply, GatewayError, Role, Usage, VqaBackend,
};
use crate::clock::Stopwatch;
use crate::media::FrameRef;
use crate::signal::EmbeddingVector;

const MAX_RETRIES: u32 = 2;
const BACKOFF: [Duration; 2] = [Duration::from_millis(100), Duration::from_millis(400)];

/// How image content is carried in multimodal messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageMode {
    /// Inline `data:` URL with base64-encoded file contents.
    Base64,
    /// `file://` reference to the local image path.
    Path,
}

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub id: String,
    /// Chat-completions endpoint, e.g. `http://host/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub image_mode: ImageMode,
    pub timeout_s: u64,
    pub max_inflight: usize,
    /// Fixed prompt used when captioning a frame.
    pub caption_prompt: String,
}

impl HttpBackendConfig {
    pub fn new(id: &str, endpoint: &str, model: &str) -> Self {
        Self {
            id: id.to_string(),
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key: None,
            image_mode: ImageMode::Base64,
            timeout_s: 120,
            max_inflight: 4,
            caption_prompt: "Describe the image concisely.".to_string(),
        }
    }
}

/// Counting semaphore bounding in-flight requests per backend.
struct Inflight {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Inflight {
    fn new(n: usize) -> Self {
        Self { permits: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        let mut permits = self.permits.lock().expect("inflight lock poisoned");
        while *permits == 0 {
            permits = self.cv.wait(permits).expect("inflight wait poisoned");
        }
        *permits -= 1;
        drop(permits);
        let out = f();
        *self.permits.lock().expect("inflight lock poisoned") += 1;
        self.cv.notify_one();
        out
    }
}

pub struct HttpBackend {
    cfg: HttpBackendConfig,
    client: reqwest::blocking::Client,
    inflight: Inflight,
}

impl HttpBackend {
    pub fn new(cfg: HttpBackendConfig) -> Result<Arc<Self>, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_s))
            .build()
            .map_err(|e| GatewayError::Protocol(format!("http client: {e}")))?;
        Ok(Arc::new(Self {
            inflight: Inflight::new(cfg.max_inflight),
            cfg,
            client,
        }))
    }

    /// POST `body` to the endpoint, retrying transient failures.
    /// Returns the parsed JSON plus (latency of the successful attempt,
    /// number of retries spent).
    fn post(&self, body: &serde_json::Value) -> Result<(serde_json::Value, f64, u32), GatewayError> {
        self.inflight.run(|| {
            let mut retries = 0u32;
            loop {
                let watch = Stopwatch::start();
                let mut request = self
                    .client
                    .post(&self.cfg.endpoint)
                    .header("content-type", "application/json")
                    .json(body);
                if let Some(key) = &self.cfg.api_key {
                    request = request.bearer_auth(key);
                }
                let outcome = request.send();
                let transient = match &outcome {
                    Ok(resp) => {
                        let code = resp.status().as_u16();
                        if resp.status().is_success() {
                            None
                        } else if code == 429 || resp.status().is_server_error() {
                            Some(format!("http status {code}"))
                        } else {
                            return Err(GatewayError::Protocol(format!(
                                "http status {code} from {}",
                                self.cfg.endpoint
                            )));
                        }
                    }
                    Err(e) => Some(e.to_string()),
                };
                match transient {
                    None => {
                        let resp = outcome.expect("checked success");
                        let latency = watch.elapsed_s();
                        let value: serde_json::Value = resp
                            .json()
                            .map_err(|e| GatewayError::Protocol(format!("bad json: {e}")))?;
                        return Ok((value, latency, retries));
                    }
                    Some(message) => {
                        if retries >= MAX_RETRIES {
                            return Err(GatewayError::Transport { message, retries });
                        }
                        std::thread::sleep(BACKOFF[retries as usize]);
                        retries += 1;
                    }
                }
            }
        })
    }

    fn chat_request(&self, messages: serde_json::Value, temperature: f64) -> serde_json::Value {
        json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": temperature,
        })
    }

    fn parse_chat_reply(
        &self,
        value: serde_json::Value,
        latency_s: f64,
        transport_retries: u32,
    ) -> Result<BackendReply, GatewayError> {
        #[derive(Deserialize)]
        struct Choice {
            message: ChoiceMessage,
        }
        #[derive(Deserialize)]
        struct ChoiceMessage {
            content: Option<String>,
        }
        #[derive(Deserialize)]
        struct UsageWire {
            prompt_tokens: Option<u64>,
            completion_tokens: Option<u64>,
        }
        #[derive(Deserialize)]
        struct Wire {
            choices: Vec<Choice>,
            usage: Option<UsageWire>,
        }
        let wire: Wire = serde_json::from_value(value)
            .map_err(|e| GatewayError::Protocol(format!("chat response shape: {e}")))?;
        let text = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Protocol("response has no choices[0].message.content".into()))?;
        let usage = wire.usage.and_then(|u| match (u.prompt_tokens, u.completion_tokens) {
            (Some(p), Some(c)) => {
                Some(Usage { prompt_tokens: p, completion_tokens: c, estimated: false })
            }
            _ => None,
        });
        Ok(BackendReply { text, usage, latency_s, transport_retries })
    }

    fn image_part(&self, frame: &FrameRef) -> Result<serde_json::Value, GatewayError> {
        let url = match self.cfg.image_mode {
            ImageMode::Path => format!("file://{}", frame.image_path.display()),
            ImageMode::Base64 => {
                let bytes = std::fs::read(&frame.image_path)
                    .map_err(|_| GatewayError::MissingImage(frame.image_path.clone()))?;
                format!(
                    "data:image/png;base64,{}",
                    base64::engine::general_purpose::STANDARD.encode(bytes)
                )
            }
        };
        if self.cfg.image_mode == ImageMode::Path && !frame.image_path.is_file() {
            return Err(GatewayError::MissingImage(frame.image_path.clone()));
        }
        Ok(json!({"type": "image_url", "image_url": {"url": url}}))
    }

    fn vision_call(&self, frame: &FrameRef, prompt: &str) -> Result<BackendReply, GatewayError> {
        let content = json!([
            {"type": "text", "text": prompt},
            self.image_part(frame)?,
        ]);
        let body = self.chat_request(json!([{"role": "user", "content": content}]), 0.0);
        let (value, latency, retries) = self.post(&body)?;
        self.parse_chat_reply(value, latency, retries)
    }
}

impl ChatBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.cfg.id
    }

    fn chat(
        &self,
        messages: &[ChatMessage],
        temperature: f64,
    ) -> Result<BackendReply, GatewayError> {
        let wire_messages: Vec<serde_json::Value> = messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                json!({"role": role, "content": m.content})
            })
            .collect();
        let body = self.chat_request(json!(wire_messages), temperature);
        let (value, latency, retries) = self.post(&body)?;
        self.parse_chat_reply(value, latency, retries)
    }
}

impl CaptionBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.cfg.id
    }

    fn caption(&self, frame: &FrameRef) -> Result<BackendReply, GatewayError> {
        self.vision_call(frame, &self.cfg.caption_prompt.clone())
    }
}

impl VqaBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.cfg.id
    }

    fn vqa(&self, frame: &FrameRef, question: &str) -> Result<BackendReply, GatewayError> {
        self.vision_call(frame, question)
    }
}

pub struct HttpEmbeddingBackend {
    backend: Arc<HttpBackend>,
}

impl HttpEmbeddingBackend {
    pub fn new(cfg: HttpBackendConfig) -> Result<Arc<Self>, GatewayError> {
        Ok(Arc::new(Self { backend: HttpBackend::new(cfg)? }))
    }

    fn embed(&self, input: Vec<String>) -> Result<EmbeddingReply, GatewayError> {
        let body = json!({"model": self.backend.cfg.model, "input": input});
        let (value, latency, retries) = self.backend.post(&body)?;
        #[derive(Deserialize)]
        struct Item {
            embedding: Vec<f64>,
            index: Option<usize>,
        }
        #[derive(Deserialize)]
        struct Wire {
            data: Vec<Item>,
        }
        let wire: Wire = serde_json::from_value(value)
            .map_err(|e| GatewayError::Protocol(format!("embedding response shape: {e}")))?;
        let mut items = wire.data;
        if items.iter().all(|i| i.index.is_some()) {
            items.sort_by_key(|i| i.index.unwrap_or(0));
        }
        let vectors = items
            .into_iter()
            .map(|i| EmbeddingVector::new(i.embedding))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| GatewayError::Protocol(format!("bad embedding values: {e}")))?;
        Ok(EmbeddingReply { vectors, latency_s: latency, transport_retries: retries })
    }
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn id(&self) -> &str {
        &self.backend.cfg.id
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingReply, GatewayError> {
        self.embed(vec![text.to_string()])
    }

    fn embed_frames(&self, frames: &[FrameRef]) -> Result<EmbeddingReply, GatewayError> {
        let inputs = frames
            .iter()
            .map(|f| match self.backend.cfg.image_mode {
                ImageMode::Path => Ok(format!("file://{}", f.image_path.display())),
                ImageMode::Base64 => {
                    let bytes = std::fs::read(&f.image_path)
                        .map_err(|_| GatewayError::MissingImage(f.image_path.clone()))?;
                    Ok(format!(
                        "data:image/png;base64,{}",
                        base64::engine::general_purpose::STANDARD.encode(bytes)
                    ))
                }
            })
            .collect::<Result<Vec<_>, GatewayError>>()?;
        self.embed(inputs)
    }
}

/// Assemble a suite where all four roles speak HTTP. Endpoints may differ
/// per role; ids keep trace attribution distinct.
pub fn http_suite(
    chat: HttpBackendConfig,
    captioner: HttpBackendConfig,
    vqa: HttpBackendConfig,
    embedder: HttpBackendConfig,
) -> Result<BackendSuite, GatewayError> {
    Ok(BackendSuite::new(
        HttpBackend::new(chat)?,
        HttpBackend::new(captioner)?,
        HttpBackend::new(vqa)?,
        HttpEmbeddingBackend::new(embedder)?,
        false,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Serve the given (status, body) responses on a fresh port, one
    /// connection each, then stop.
    fn serve(responses: Vec<(u16, String)>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = match listener.accept() {
                    Ok(x) => x,
                    Err(_) => return,
                };
                let mut buf = [0u8; 65536];
                let mut read = 0usize;
                // Read headers, then the content-length body.
                let body_start = loop {
                    match stream.read(&mut buf[read..]) {
                        Ok(0) => break None,
                        Ok(n) => {
                            read += n;
                            if let Some(pos) =
                                buf[..read].windows(4).position(|w| w == b"\r\n\r\n")
                            {
                                break Some(pos + 4);
                            }
                        }
                        Err(_) => break None,
                    }
                };
                if let Some(start) = body_start {
                    let headers = String::from_utf8_lossy(&buf[..start]).to_lowercase();
                    let want: usize = headers
                        .lines()
                        .find_map(|l| l.strip_prefix("content-length:"))
                        .and_then(|v| v.trim().parse().ok())
                        .unwrap_or(0);
                    while read - start < want {
                        match stream.read(&mut buf[read..]) {
                            Ok(0) => break,
                            Ok(n) => read += n,
                            Err(_) => break,
                        }
                    }
                }
                let reason = if status == 200 { "OK" } else { "ERR" };
                let resp = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        format!("http://{addr}/v1/chat/completions")
    }

    fn chat_body(content: &str) -> String {
        json!({
            "choices": [{"message": {"role": "assistant", "content": content}}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 7, "total_tokens": 18}
        })
        .to_string()
    }

    #[test]
    fn chat_happy_path_parses_reply_and_usage() {
        let endpoint = serve(vec![(200, chat_body("hello"))]);
        let backend = HttpBackend::new(HttpBackendConfig::new("llm", &endpoint, "m")).unwrap();
        let reply = backend.chat(&[ChatMessage::user("hi")], 0.0).unwrap();
        assert_eq!(reply.text, "hello");
        let usage = reply.usage.unwrap();
        assert_eq!((usage.prompt_tokens, usage.completion_tokens), (11, 7));
        assert!(!usage.estimated);
        assert_eq!(reply.transport_retries, 0);
    }

    #[test]
    fn transient_500_is_retried_then_succeeds() {
        let endpoint = serve(vec![(500, "{}".into()), (200, chat_body("ok"))]);
        let backend = HttpBackend::new(HttpBackendConfig::new("llm", &endpoint, "m")).unwrap();
        let reply = backend.chat(&[ChatMessage::user("hi")], 0.0).unwrap();
        assert_eq!(reply.text, "ok");
        assert_eq!(reply.transport_retries, 1);
    }

    #[test]
    fn persistent_failure_exhausts_retries() {
        let endpoint = serve(vec![(500, "{}".into()); 3]);
        let backend = HttpBackend::new(HttpBackendConfig::new("llm", &endpoint, "m")).unwrap();
        match backend.chat(&[ChatMessage::user("hi")], 0.0) {
            Err(GatewayError::Transport { retries, .. }) => assert_eq!(retries, 2),
            other => panic!("expected transport error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_response_is_protocol_error() {
        let endpoint = serve(vec![(200, r#"{"not": "chat"}"#.into())]);
        let backend = HttpBackend::new(HttpBackendConfig::new("llm", &endpoint, "m")).unwrap();
        assert!(matches!(
            backend.chat(&[ChatMessage::user("hi")], 0.0),
            Err(GatewayError::Protocol(_))
        ));
    }

    #[test]
    fn client_error_is_not_retried() {
        let endpoint = serve(vec![(400, "{}".into())]);
        let backend = HttpBackend::new(HttpBackendConfig::new("llm", &endpoint, "m")).unwrap();
        assert!(matches!(
            backend.chat(&[ChatMessage::user("hi")], 0.0),
            Err(GatewayError::Protocol(_))
        ));
    }

    #[test]
    fn caption_with_missing_image_fails() {
        let endpoint = serve(vec![]);
        let backend = HttpBackend::new(HttpBackendConfig::new("cap", &endpoint, "m")).unwrap();
        let table = crate::media::FrameIndexTable::synthetic(
            "v",
            1.0,
            1,
            std::path::Path::new("/no/such/dir"),
        );
        assert!(matches!(
            backend.caption(&table.frames[0]),
            Err(GatewayError::MissingImage(_))
        ));
    }

    #[test]
    fn embeddings_parse_and_keep_order() {
        let body = json!({
            "data": [
                {"embedding": [0.0, 1.0], "index": 1},
                {"embedding": [1.0, 0.0], "index": 0}
            ]
        })
        .to_string();
        let endpoint = serve(vec![(200, body)]);
        let embedder =
            HttpEmbeddingBackend::new(HttpBackendConfig::new("emb", &endpoint, "m")).unwrap();
        let reply = embedder.embed_text("hello").unwrap();
        // index field wins over wire order
        assert_eq!(reply.vectors[0].as_slice(), &[1.0, 0.0]);
        assert_eq!(reply.vectors[1].as_slice(), &[0.0, 1.0]);
    }
}

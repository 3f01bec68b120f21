//! Uniform backend interfaces for the four model roles — chat LLM,
//! captioner, VQA, and embedder — plus the traced call wrappers that give
//! every backend call exactly one accounting event.
//!
//! Two implementations ship: an HTTP chat-completions-style client
//! (feature `http`) and fully scripted deterministic mocks for offline
//! runs and tests.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::FrameRef;
use crate::signal::EmbeddingVector;
use crate::trace::{EventCategory, SessionTrace};

#[cfg(feature = "http")]
pub mod http;
pub mod mock;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {retries} retries: {message}")]
    Transport { message: String, retries: u32 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("mock chat script exhausted: no entry matches the prompt")]
    ScriptExhausted,
    #[error("mock script has no entry for {0}")]
    ScriptMiss(String),
    #[error("image file missing: {0}")]
    MissingImage(PathBuf),
    #[error("embedding dimension drift: expected {expected}, got {got}")]
    DimensionDrift { expected: usize, got: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// True when counts come from the whitespace fallback estimator rather
    /// than the service's usage report.
    pub estimated: bool,
}

/// Raw reply from a text-producing backend, before trace accounting.
#[derive(Debug, Clone)]
pub struct BackendReply {
    pub text: String,
    pub usage: Option<Usage>,
    pub latency_s: f64,
    pub transport_retries: u32,
}

#[derive(Debug, Clone)]
pub struct EmbeddingReply {
    pub vectors: Vec<EmbeddingVector>,
    pub latency_s: f64,
    pub transport_retries: u32,
}

pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn chat(&self, messages: &[ChatMessage], temperature: f64) -> Result<BackendReply, GatewayError>;
}

pub trait CaptionBackend: Send + Sync {
    fn id(&self) -> &str;
    fn caption(&self, frame: &FrameRef) -> Result<BackendReply, GatewayError>;
}

pub trait VqaBackend: Send + Sync {
    fn id(&self) -> &str;
    fn vqa(&self, frame: &FrameRef, question: &str) -> Result<BackendReply, GatewayError>;
}

pub trait EmbeddingBackend: Send + Sync {
    fn id(&self) -> &str;
    fn embed_text(&self, text: &str) -> Result<EmbeddingReply, GatewayError>;
    /// Batched; output order must match input order.
    fn embed_frames(&self, frames: &[FrameRef]) -> Result<EmbeddingReply, GatewayError>;
}

/// The four model roles behind one handle. Roles are logical: they may all
/// point at the same physical service under different ids.
#[derive(Clone)]
pub struct BackendSuite {
    pub chat: Arc<dyn ChatBackend>,
    pub captioner: Arc<dyn CaptionBackend>,
    pub vqa: Arc<dyn VqaBackend>,
    pub embedder: Arc<dyn EmbeddingBackend>,
    /// Mock suites report scripted latencies, which keeps whole runs
    /// bitwise-reproducible; wall-clock timing stays off when set.
    pub deterministic_timing: bool,
    embed_dim: Arc<AtomicUsize>,
}

impl BackendSuite {
    pub fn new(
        chat: Arc<dyn ChatBackend>,
        captioner: Arc<dyn CaptionBackend>,
        vqa: Arc<dyn VqaBackend>,
        embedder: Arc<dyn EmbeddingBackend>,
        deterministic_timing: bool,
    ) -> Self {
        Self {
            chat,
            captioner,
            vqa,
            embedder,
            deterministic_timing,
            embed_dim: Arc::new(AtomicUsize::new(0)),
        }
    }

    fn check_dims(&self, vectors: &[EmbeddingVector]) -> Result<(), GatewayError> {
        for v in vectors {
            let prev = self
                .embed_dim
                .compare_exchange(0, v.dim(), Ordering::SeqCst, Ordering::SeqCst)
                .unwrap_or_else(|p| p);
            if prev != 0 && prev != v.dim() {
                return Err(GatewayError::DimensionDrift { expected: prev, got: v.dim() });
            }
        }
        Ok(())
    }
}

/// One completed chat call, with usage resolved (reported or estimated).
#[derive(Debug, Clone)]
pub struct ChatExchange {
    pub reply: String,
    pub usage: Usage,
    pub latency_s: f64,
}

/// Whitespace-token fallback used when a backend reports no usage.
pub fn estimate_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Run a chat call and record one `llm` event. `label` names the calling
/// operation for trace readability.
pub fn chat(
    suite: &BackendSuite,
    messages: &[ChatMessage],
    temperature: f64,
    label: &str,
    trace: &mut SessionTrace,
) -> Result<ChatExchange, GatewayError> {
    if messages.is_empty() {
        return Err(GatewayError::EmptyInput("chat messages"));
    }
    if messages.last().map(|m| m.role) != Some(Role::User) {
        return Err(GatewayError::Protocol("final chat message must have role user".into()));
    }
    let reply = suite.chat.chat(messages, temperature)?;
    if reply.text.is_empty() {
        return Err(GatewayError::Protocol("backend returned an empty reply".into()));
    }
    let usage = reply.usage.unwrap_or_else(|| Usage {
        prompt_tokens: messages.iter().map(|m| estimate_tokens(&m.content)).sum(),
        completion_tokens: estimate_tokens(&reply.text),
        estimated: true,
    });
    trace.record_event(
        EventCategory::Llm,
        &format!("{}/{label}", suite.chat.id()),
        reply.latency_s,
        Some((usage.prompt_tokens, usage.completion_tokens, usage.estimated)),
        vec![],
        reply.transport_retries,
    );
    Ok(ChatExchange { reply: reply.text, usage, latency_s: reply.latency_s })
}

/// Caption one frame and record one `caption` event carrying its timestamp.
pub fn caption(
    suite: &BackendSuite,
    frame: &FrameRef,
    trace: &mut SessionTrace,
) -> Result<String, GatewayError> {
    let reply = suite.captioner.caption(frame)?;
    if reply.text.is_empty() {
        return Err(GatewayError::Protocol("backend returned an empty caption".into()));
    }
    trace.record_event(
        EventCategory::Caption,
        &format!("{}/caption", suite.captioner.id()),
        reply.latency_s,
        None,
        vec![frame.timestamp_s],
        reply.transport_retries,
    );
    Ok(reply.text)
}

/// Answer a visual question on one frame and record one `qa` event.
pub fn vqa(
    suite: &BackendSuite,
    frame: &FrameRef,
    question: &str,
    trace: &mut SessionTrace,
) -> Result<String, GatewayError> {
    if question.is_empty() {
        return Err(GatewayError::EmptyInput("vqa question"));
    }
    let reply = suite.vqa.vqa(frame, question)?;
    if reply.text.is_empty() {
        return Err(GatewayError::Protocol("backend returned an empty answer".into()));
    }
    trace.record_event(
        EventCategory::Qa,
        &format!("{}/vqa", suite.vqa.id()),
        reply.latency_s,
        None,
        vec![frame.timestamp_s],
        reply.transport_retries,
    );
    Ok(reply.text)
}

pub fn embed_text(
    suite: &BackendSuite,
    text: &str,
    trace: &mut SessionTrace,
) -> Result<EmbeddingVector, GatewayError> {
    if text.is_empty() {
        return Err(GatewayError::EmptyInput("embedding text"));
    }
    let reply = suite.embedder.embed_text(text)?;
    suite.check_dims(&reply.vectors)?;
    let vector = reply
        .vectors
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::Protocol("embedder returned no vector".into()))?;
    trace.record_event(
        EventCategory::Embedding,
        &format!("{}/embed_text", suite.embedder.id()),
        reply.latency_s,
        None,
        vec![],
        reply.transport_retries,
    );
    Ok(vector)
}

pub fn embed_frames(
    suite: &BackendSuite,
    frames: &[FrameRef],
    trace: &mut SessionTrace,
) -> Result<Vec<EmbeddingVector>, GatewayError> {
    if frames.is_empty() {
        return Err(GatewayError::EmptyInput("embedding frames"));
    }
    let reply = suite.embedder.embed_frames(frames)?;
    if reply.vectors.len() != frames.len() {
        return Err(GatewayError::Protocol(format!(
            "embedder returned {} vectors for {} frames",
            reply.vectors.len(),
            frames.len()
        )));
    }
    suite.check_dims(&reply.vectors)?;
    trace.record_event(
        EventCategory::Embedding,
        &format!("{}/embed_frames", suite.embedder.id()),
        reply.latency_s,
        None,
        vec![],
        reply.transport_retries,
    );
    Ok(reply.vectors)
}

/// Canonical frame key used by mock script maps and memory rendering:
/// seconds with two decimals.
pub fn frame_key(timestamp_s: f64) -> String {
    format!("{timestamp_s:.2}")
}

//! Fully scripted deterministic backends for offline runs and tests.
//!
//! A [`MockScript`] pins every reply: chat responses come from an ordered
//! queue (plain entries are consumed once, pattern entries are reusable
//! rules matched by substring against the rendered conversation), captions
//! and embeddings from keyed maps, and VQA answers from (frame, question
//! pattern) rules. Lookups never depend on wall clock or ambient state, so
//! end-to-end mock runs are bitwise-reproducible.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{
    BackendReply, BackendSuite, CaptionBackend, ChatBackend, ChatMessage, EmbeddingBackend,
    EmbeddingReply, GatewayError, Usage, VqaBackend,
};
use crate::gateway::frame_key;
use crate::media::FrameRef;
use crate::signal::EmbeddingVector;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatRule {
    /// Substring matched against the rendered conversation. Entries without
    /// a pattern are plain queue items, consumed in order.
    pub pattern: Option<String>,
    pub reply: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VqaRule {
    /// Frame key, seconds with two decimals (e.g. "46.00").
    pub frame: String,
    /// Substring of the question.
    pub pattern: String,
    pub answer: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MockScript {
    pub chat_responses: Vec<ChatRule>,
    /// Frame key -> truthful caption.
    pub caption_map: BTreeMap<String, String>,
    pub vqa_map: Vec<VqaRule>,
    /// `text:<query>` or `frame:<key>` -> vector.
    pub embedding_map: BTreeMap<String, Vec<f64>>,
    /// Frame key -> caption that takes precedence over `caption_map`.
    pub hallucination_overrides: BTreeMap<String, String>,
    /// Latency reported for every scripted call.
    pub simulated_latency_s: f64,
    /// In strict mode unmapped lookups are errors; in lenient mode captions
    /// and embeddings fall back to deterministic synthetic values.
    pub strict: bool,
}

impl Default for MockScript {
    fn default() -> Self {
        Self {
            chat_responses: Vec::new(),
            caption_map: BTreeMap::new(),
            vqa_map: Vec::new(),
            embedding_map: BTreeMap::new(),
            hallucination_overrides: BTreeMap::new(),
            simulated_latency_s: 0.0,
            strict: true,
        }
    }
}

impl MockScript {
    pub fn from_json_file(path: &Path) -> Result<Self, GatewayError> {
        let body = std::fs::read(path)
            .map_err(|e| GatewayError::Protocol(format!("mock script {}: {e}", path.display())))?;
        serde_json::from_slice(&body)
            .map_err(|e| GatewayError::Protocol(format!("mock script {}: {e}", path.display())))
    }

    pub fn push_chat_reply(&mut self, reply: &str) {
        self.chat_responses.push(ChatRule { reply: reply.into(), ..ChatRule::default() });
    }

    pub fn push_chat_reply_with_usage(&mut self, reply: &str, prompt: u64, completion: u64) {
        self.chat_responses.push(ChatRule {
            reply: reply.into(),
            prompt_tokens: Some(prompt),
            completion_tokens: Some(completion),
            ..ChatRule::default()
        });
    }

    pub fn push_chat_rule(&mut self, pattern: &str, reply: &str) {
        self.chat_responses.push(ChatRule {
            pattern: Some(pattern.into()),
            reply: reply.into(),
            ..ChatRule::default()
        });
    }

    pub fn set_caption(&mut self, timestamp_s: f64, caption: &str) {
        self.caption_map.insert(frame_key(timestamp_s), caption.into());
    }

    pub fn set_hallucination(&mut self, timestamp_s: f64, caption: &str) {
        self.hallucination_overrides.insert(frame_key(timestamp_s), caption.into());
    }

    pub fn set_vqa(&mut self, timestamp_s: f64, pattern: &str, answer: &str) {
        self.vqa_map.push(VqaRule {
            frame: frame_key(timestamp_s),
            pattern: pattern.into(),
            answer: answer.into(),
        });
    }

    pub fn set_text_embedding(&mut self, text: &str, values: Vec<f64>) {
        self.embedding_map.insert(format!("text:{text}"), values);
    }

    pub fn set_frame_embedding(&mut self, timestamp_s: f64, values: Vec<f64>) {
        self.embedding_map.insert(format!("frame:{}", frame_key(timestamp_s)), values);
    }
}

struct MockState {
    script: MockScript,
    consumed: Mutex<Vec<bool>>,
    prompts: Mutex<Vec<String>>,
}

impl MockState {
    fn reply(&self, text: &str, usage: Option<Usage>) -> BackendReply {
        BackendReply {
            text: text.to_string(),
            usage,
            latency_s: self.script.simulated_latency_s,
            transport_retries: 0,
        }
    }

    fn fallback_embedding(&self, key: &str) -> EmbeddingVector {
        let dim = self
            .script
            .embedding_map
            .values()
            .next()
            .map(|v| v.len())
            .unwrap_or(8);
        // splitmix64 stream seeded by the key: stable across runs.
        let mut state: u64 = key.bytes().fold(0xcbf29ce484222325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x100000001b3)
        });
        let mut next = || {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^ (z >> 31)
        };
        let values: Vec<f64> = (0..dim)
            .map(|_| (next() as f64 / u64::MAX as f64) * 2.0 - 1.0)
            .collect();
        EmbeddingVector::new(values).expect("synthetic embedding is valid")
    }

    fn lookup_embedding(&self, key: &str) -> Result<EmbeddingVector, GatewayError> {
        match self.script.embedding_map.get(key) {
            Some(values) => EmbeddingVector::new(values.clone())
                .map_err(|e| GatewayError::Protocol(format!("scripted embedding {key}: {e}"))),
            None if self.script.strict => Err(GatewayError::ScriptMiss(format!("embedding {key}"))),
            None => Ok(self.fallback_embedding(key)),
        }
    }
}

/// Handle over one scripted state; hand out backends with [`Self::suite`].
#[derive(Clone)]
pub struct MockSuite {
    state: Arc<MockState>,
}

impl MockSuite {
    pub fn new(script: MockScript) -> Self {
        let consumed = vec![false; script.chat_responses.len()];
        Self {
            state: Arc::new(MockState {
                script,
                consumed: Mutex::new(consumed),
                prompts: Mutex::new(Vec::new()),
            }),
        }
    }

    pub fn suite(&self) -> BackendSuite {
        let chat = Arc::new(MockChat { state: self.state.clone() });
        let captioner = Arc::new(MockCaptioner { state: self.state.clone() });
        let vqa = Arc::new(MockVqa { state: self.state.clone() });
        let embedder = Arc::new(MockEmbedder { state: self.state.clone() });
        BackendSuite::new(chat, captioner, vqa, embedder, true)
    }

    pub fn into_suite(self) -> BackendSuite {
        self.suite()
    }

    /// Every conversation the chat backend has seen, rendered; a testing aid
    /// for prompt-plumbing assertions.
    pub fn chat_prompts(&self) -> Vec<String> {
        self.state.prompts.lock().expect("prompt log poisoned").clone()
    }
}

fn render_conversation(messages: &[ChatMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        let role = match m.role {
            super::Role::System => "system",
            super::Role::User => "user",
            super::Role::Assistant => "assistant",
        };
        out.push_str(role);
        out.push_str(": ");
        out.push_str(&m.content);
        out.push('\n');
    }
    out
}

struct MockChat {
    state: Arc<MockState>,
}

impl ChatBackend for MockChat {
    fn id(&self) -> &str {
        "mock-chat"
    }

    fn chat(
        &self,
        messages: &[ChatMessage],
        _temperature: f64,
    ) -> Result<BackendReply, GatewayError> {
        let prompt = render_conversation(messages);
        self.state
            .prompts
            .lock()
            .expect("prompt log poisoned")
            .push(prompt.clone());
        let mut consumed = self.state.consumed.lock().expect("consumed flags poisoned");
        for (i, rule) in self.state.script.chat_responses.iter().enumerate() {
            let hit = match &rule.pattern {
                Some(p) => prompt.contains(p.as_str()),
                None => !consumed[i],
            };
            if hit {
                if rule.pattern.is_none() {
                    consumed[i] = true;
                }
                let usage = match (rule.prompt_tokens, rule.completion_tokens) {
                    (Some(p), Some(c)) => {
                        Some(Usage { prompt_tokens: p, completion_tokens: c, estimated: false })
                    }
                    _ => None,
                };
                return Ok(self.state.reply(&rule.reply, usage));
            }
        }
        Err(GatewayError::ScriptExhausted)
    }
}

struct MockCaptioner {
    state: Arc<MockState>,
}

impl CaptionBackend for MockCaptioner {
    fn id(&self) -> &str {
        "mock-captioner"
    }

    fn caption(&self, frame: &FrameRef) -> Result<BackendReply, GatewayError> {
        let key = frame_key(frame.timestamp_s);
        let script = &self.state.script;
        if let Some(text) = script.hallucination_overrides.get(&key) {
            return Ok(self.state.reply(text, None));
        }
        match script.caption_map.get(&key) {
            Some(text) => Ok(self.state.reply(text, None)),
            None if script.strict => Err(GatewayError::ScriptMiss(format!("caption {key}"))),
            None => Ok(self.state.reply(&format!("a frame at {key}s"), None)),
        }
    }
}

struct MockVqa {
    state: Arc<MockState>,
}

impl VqaBackend for MockVqa {
    fn id(&self) -> &str {
        "mock-vqa"
    }

    fn vqa(&self, frame: &FrameRef, question: &str) -> Result<BackendReply, GatewayError> {
        let key = frame_key(frame.timestamp_s);
        let script = &self.state.script;
        for rule in &script.vqa_map {
            if rule.frame == key && question.contains(&rule.pattern) {
                return Ok(self.state.reply(&rule.answer, None));
            }
        }
        if script.strict {
            Err(GatewayError::ScriptMiss(format!("vqa ({key}, {question:?})")))
        } else {
            Ok(self.state.reply("the frame does not show this clearly", None))
        }
    }
}

struct MockEmbedder {
    state: Arc<MockState>,
}

impl EmbeddingBackend for MockEmbedder {
    fn id(&self) -> &str {
        "mock-embedder"
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingReply, GatewayError> {
        let vector = self.state.lookup_embedding(&format!("text:{text}"))?;
        Ok(EmbeddingReply {
            vectors: vec![vector],
            latency_s: self.state.script.simulated_latency_s,
            transport_retries: 0,
        })
    }

    fn embed_frames(&self, frames: &[FrameRef]) -> Result<EmbeddingReply, GatewayError> {
        let vectors = frames
            .iter()
            .map(|f| {
                self.state
                    .lookup_embedding(&format!("frame:{}", frame_key(f.timestamp_s)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EmbeddingReply {
            vectors,
            latency_s: self.state.script.simulated_latency_s,
            transport_retries: 0,
        })
    }
}

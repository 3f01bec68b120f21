//! Session traces: the ordered event log of one video-question run.
//!
//! Every backend call and kernel invocation appends exactly one event in
//! one of the accounting buckets (embedding, retrieval, caption, qa, llm).
//! Traces serialize to line-delimited JSON: a header record, then events,
//! decisions and a memory snapshot in execution order, then a final record
//! that marks the trace complete.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad trace record at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace has no header record")]
    MissingHeader,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventCategory {
    Embedding,
    Retrieval,
    Caption,
    Qa,
    Llm,
}

impl EventCategory {
    pub const ALL: [EventCategory; 5] = [
        EventCategory::Embedding,
        EventCategory::Retrieval,
        EventCategory::Caption,
        EventCategory::Qa,
        EventCategory::Llm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventCategory::Embedding => "embedding",
            EventCategory::Retrieval => "retrieval",
            EventCategory::Caption => "caption",
            EventCategory::Qa => "qa",
            EventCategory::Llm => "llm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: usize,
    pub category: EventCategory,
    /// Backend id plus a short operation label, e.g. "mock-chat/evaluate".
    pub label: String,
    pub latency_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub tokens_estimated: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frame_timestamps: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub transport_retries: u32,
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub step: usize,
    pub decision: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_index: Option<usize>,
    pub explanation: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Header {
        sample_id: String,
        config: serde_json::Value,
    },
    Event(TraceEvent),
    Decision(DecisionRecord),
    Memory {
        memory: serde_json::Value,
    },
    Final {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        answer_index: Option<usize>,
        failed: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        failure_reason: Option<String>,
    },
}

/// Full event log of one session run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionTrace {
    pub sample_id: String,
    pub config: serde_json::Value,
    pub events: Vec<TraceEvent>,
    pub decisions: Vec<DecisionRecord>,
    pub memory: Option<serde_json::Value>,
    pub final_answer: Option<usize>,
    pub failed: bool,
    pub failure_reason: Option<String>,
    /// Whether a final record was seen/emitted; incomplete traces are
    /// re-run on benchmark resume.
    pub complete: bool,
}

impl SessionTrace {
    pub fn new(sample_id: &str, config: serde_json::Value) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            config,
            events: Vec::new(),
            decisions: Vec::new(),
            memory: None,
            final_answer: None,
            failed: false,
            failure_reason: None,
            complete: false,
        }
    }

    pub fn record_event(
        &mut self,
        category: EventCategory,
        label: &str,
        latency_s: f64,
        usage: Option<(u64, u64, bool)>,
        frame_timestamps: Vec<f64>,
        transport_retries: u32,
    ) {
        let (prompt_tokens, completion_tokens, tokens_estimated) = match usage {
            Some((p, c, est)) => (Some(p), Some(c), est),
            None => (None, None, false),
        };
        self.events.push(TraceEvent {
            seq: self.events.len(),
            category,
            label: label.to_string(),
            latency_s,
            prompt_tokens,
            completion_tokens,
            tokens_estimated,
            frame_timestamps,
            transport_retries,
        });
    }

    pub fn record_decision(&mut self, decision: DecisionRecord) {
        self.decisions.push(decision);
    }

    pub fn set_memory_snapshot(&mut self, memory: serde_json::Value) {
        self.memory = Some(memory);
    }

    pub fn finish_ok(&mut self, answer_index: usize) {
        self.final_answer = Some(answer_index);
        self.failed = false;
        self.complete = true;
    }

    pub fn finish_failed(&mut self, reason: &str) {
        self.failed = true;
        self.failure_reason = Some(reason.to_string());
        self.complete = true;
    }

    pub fn total_seconds(&self, category: EventCategory) -> f64 {
        self.events
            .iter()
            .filter(|e| e.category == category)
            .map(|e| e.latency_s)
            .sum()
    }

    pub fn llm_calls(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.category == EventCategory::Llm)
            .count()
    }

    /// Generated (completion) tokens across all LLM events.
    pub fn llm_completion_tokens(&self) -> u64 {
        self.events
            .iter()
            .filter(|e| e.category == EventCategory::Llm)
            .filter_map(|e| e.completion_tokens)
            .sum()
    }

    pub fn llm_prompt_tokens(&self) -> u64 {
        self.events
            .iter()
            .filter(|e| e.category == EventCategory::Llm)
            .filter_map(|e| e.prompt_tokens)
            .sum()
    }

    fn records(&self) -> Vec<Record> {
        let mut out = Vec::with_capacity(self.events.len() + self.decisions.len() + 3);
        out.push(Record::Header {
            sample_id: self.sample_id.clone(),
            config: self.config.clone(),
        });
        for e in &self.events {
            out.push(Record::Event(e.clone()));
        }
        for d in &self.decisions {
            out.push(Record::Decision(d.clone()));
        }
        if let Some(m) = &self.memory {
            out.push(Record::Memory { memory: m.clone() });
        }
        if self.complete {
            out.push(Record::Final {
                answer_index: self.final_answer,
                failed: self.failed,
                failure_reason: self.failure_reason.clone(),
            });
        }
        out
    }

    /// Serialize to line-delimited JSON, written atomically.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), TraceError> {
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            for record in self.records() {
                serde_json::to_writer(&mut f, &record)
                    .map_err(|e| TraceError::Parse { line: 0, message: e.to_string() })?;
                f.write_all(b"\n")?;
            }
            f.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, TraceError> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut trace: Option<SessionTrace> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line)
                .map_err(|e| TraceError::Parse { line: i + 1, message: e.to_string() })?;
            match record {
                Record::Header { sample_id, config } => {
                    trace = Some(SessionTrace::new(&sample_id, config));
                }
                other => {
                    let t = trace.as_mut().ok_or(TraceError::MissingHeader)?;
                    match other {
                        Record::Header { .. } => unreachable!(),
                        Record::Event(e) => t.events.push(e),
                        Record::Decision(d) => t.decisions.push(d),
                        Record::Memory { memory } => t.memory = Some(memory),
                        Record::Final { answer_index, failed, failure_reason } => {
                            t.final_answer = answer_index;
                            t.failed = failed;
                            t.failure_reason = failure_reason;
                            t.complete = true;
                        }
                    }
                }
            }
        }
        trace.ok_or(TraceError::MissingHeader)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_trace() -> SessionTrace {
        let mut t = SessionTrace::new("s1", serde_json::json!({"n_f": 5}));
        t.record_event(EventCategory::Embedding, "mock/embed", 0.5, None, vec![], 0);
        t.record_event(
            EventCategory::Llm,
            "mock/chat",
            1.0,
            Some((100, 50, false)),
            vec![],
            1,
        );
        t.record_event(
            EventCategory::Caption,
            "mock/caption",
            0.25,
            None,
            vec![12.0],
            0,
        );
        t.record_decision(DecisionRecord {
            step: 1,
            decision: "terminate".into(),
            guidance: None,
            answer_index: Some(2),
            explanation: "enough".into(),
        });
        t.set_memory_snapshot(serde_json::json!({"entries": []}));
        t.finish_ok(2);
        t
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let t = sample_trace();
        t.write_jsonl(&path).unwrap();
        let r = SessionTrace::read_jsonl(&path).unwrap();
        assert_eq!(r.sample_id, t.sample_id);
        assert_eq!(r.events, t.events);
        assert_eq!(r.decisions, t.decisions);
        assert_eq!(r.final_answer, Some(2));
        assert!(r.complete);
        assert!(!r.failed);
    }

    #[test]
    fn truncated_trace_is_incomplete() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        sample_trace().write_jsonl(&path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let truncated: Vec<&str> = body.lines().take(3).collect();
        std::fs::write(&path, truncated.join("\n")).unwrap();
        let r = SessionTrace::read_jsonl(&path).unwrap();
        assert!(!r.complete);
    }

    #[test]
    fn category_totals() {
        let t = sample_trace();
        assert_eq!(t.total_seconds(EventCategory::Llm), 1.0);
        assert_eq!(t.total_seconds(EventCategory::Embedding), 0.5);
        assert_eq!(t.total_seconds(EventCategory::Retrieval), 0.0);
        assert_eq!(t.llm_calls(), 1);
        assert_eq!(t.llm_completion_tokens(), 50);
        assert_eq!(t.llm_prompt_tokens(), 100);
    }
}

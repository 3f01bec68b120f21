//! The perception action space: divergent search, temporal focus, spatial
//! focus, and the quick preview, composed from the frame store, the signal
//! kernels, and the model gateway.
//!
//! Tool inputs arrive as text emitted by the perception agent and are
//! parsed against fixed grammars — `('query', (start, end))` for divergent
//! search, `[(start, end), ...]` for temporal focus, and
//! `[('question', time), ...]` for spatial focus — tolerant of surrounding
//! whitespace and nothing else.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Stopwatch;
use crate::gateway::{self, BackendSuite, GatewayError};
use crate::media::{self, FrameIndexTable, FrameRef, MediaError};
use crate::signal::{self, EmbeddingVector, SignalError, SimilarityProfile};
use crate::trace::{EventCategory, SessionTrace};

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("no frames fall inside span ({0}, {1})")]
    EmptySpan(f64, f64),
    #[error("timestamp {0} outside the video's [0, {1}] range")]
    OutOfRangeTimestamp(f64, f64),
    #[error("spatial focus requires at least one query")]
    EmptyQueryList,
    #[error(transparent)]
    Grammar(#[from] GrammarMismatch),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// A tool-input string rejected by its grammar, with the byte offset where
/// parsing stopped. Surfaced verbatim to the agent retry loop.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("grammar mismatch at byte {pos}: {message}")]
pub struct GrammarMismatch {
    pub pos: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    DivergentSearch,
    TemporalFocus,
    SpatialFocus,
}

impl ToolKind {
    pub fn name(self) -> &'static str {
        match self {
            ToolKind::DivergentSearch => "divergent_search",
            ToolKind::TemporalFocus => "temporal_focus",
            ToolKind::SpatialFocus => "spatial_focus",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.trim() {
            "divergent_search" => Some(ToolKind::DivergentSearch),
            "temporal_focus" => Some(ToolKind::TemporalFocus),
            "spatial_focus" => Some(ToolKind::SpatialFocus),
            _ => None,
        }
    }
}

/// Parsed, validated payload of a tool invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tool", rename_all = "snake_case")]
pub enum ToolInput {
    DivergentSearch { query: String, span: (f64, f64) },
    TemporalFocus { spans: Vec<(f64, f64)> },
    SpatialFocus { queries: Vec<(String, f64)> },
}

/// One action selected by the perception agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: ToolKind,
    pub raw_input: String,
    pub input: ToolInput,
    /// Advisory notes on inputs the grammar accepts but the prompt rules
    /// discourage (e.g. single-letter queries).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl ToolCall {
    pub fn parse(tool: ToolKind, raw: &str) -> Result<Self, GrammarMismatch> {
        let input = parse_tool_input(tool, raw)?;
        let mut flags = Vec::new();
        if let ToolInput::DivergentSearch { query, .. } = &input {
            if query.trim().chars().count() == 1 {
                flags.push("single_letter_query".to_string());
            }
        }
        Ok(Self { tool, raw_input: raw.trim().to_string(), input, flags })
    }

    /// Compact rendering for memory and trace text.
    pub fn describe(&self) -> String {
        format!("{} {}", self.tool.name(), self.raw_input)
    }
}

// ---------------------------------------------------------------------------
// Tool input grammars
// ---------------------------------------------------------------------------

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self { src: src.as_bytes(), pos: 0 }
    }

    fn err(&self, message: impl Into<String>) -> GrammarMismatch {
        GrammarMismatch { pos: self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), GrammarMismatch> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!(
                "expected '{}', found {}",
                c as char,
                self.found_desc()
            )))
        }
    }

    fn found_desc(&self) -> String {
        match self.peek() {
            Some(b) => format!("'{}'", b as char),
            None => "end of input".to_string(),
        }
    }

    /// A quoted string; either quote character is accepted, the content runs
    /// to the next matching quote, no escapes.
    fn string(&mut self) -> Result<String, GrammarMismatch> {
        self.skip_ws();
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => {
                return Err(
                    self.err(format!("expected a quoted string, found {}", self.found_desc()))
                )
            }
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Err(self.err("unterminated string"));
        }
        let text = std::str::from_utf8(&self.src[start..self.pos])
            .map_err(|_| self.err("string is not valid UTF-8"))?
            .to_string();
        self.pos += 1;
        if text.is_empty() {
            return Err(self.err("string must be non-empty"));
        }
        Ok(text)
    }

    fn number(&mut self) -> Result<f64, GrammarMismatch> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.peek(), Some(b'+' | b'-')) {
            self.pos += 1;
        }
        while matches!(self.peek(), Some(b'0'..=b'9') | Some(b'.')) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err(format!("expected a number, found {}", self.found_desc())));
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        text.parse::<f64>()
            .map_err(|_| GrammarMismatch { pos: start, message: format!("bad number {text:?}") })
    }

    fn finish(&mut self) -> Result<(), GrammarMismatch> {
        self.skip_ws();
        if self.pos < self.src.len() {
            Err(self.err(format!("trailing input {}", self.found_desc())))
        } else {
            Ok(())
        }
    }
}

fn parse_span(cur: &mut Cursor) -> Result<(f64, f64), GrammarMismatch> {
    cur.expect(b'(')?;
    let start = cur.number()?;
    cur.expect(b',')?;
    let end = cur.number()?;
    cur.expect(b')')?;
    if start > end {
        return Err(cur.err(format!("span start {start} exceeds end {end}")));
    }
    Ok((start, end))
}

fn parse_query(cur: &mut Cursor) -> Result<(String, f64), GrammarMismatch> {
    cur.expect(b'(')?;
    let question = cur.string()?;
    cur.expect(b',')?;
    let t = cur.number()?;
    cur.expect(b')')?;
    Ok((question, t))
}

/// Strict parser for the tool input grammars.
pub fn parse_tool_input(tool: ToolKind, raw: &str) -> Result<ToolInput, GrammarMismatch> {
    if raw.trim().is_empty() {
        return Err(GrammarMismatch { pos: 0, message: "empty tool input".into() });
    }
    let mut cur = Cursor::new(raw);
    match tool {
        ToolKind::DivergentSearch => {
            cur.expect(b'(')?;
            let query = cur.string()?;
            cur.expect(b',')?;
            let span = parse_span(&mut cur)?;
            cur.expect(b')')?;
            cur.finish()?;
            Ok(ToolInput::DivergentSearch { query, span })
        }
        ToolKind::TemporalFocus => {
            cur.expect(b'[')?;
            let mut spans = vec![parse_span(&mut cur)?];
            loop {
                cur.skip_ws();
                match cur.peek() {
                    Some(b',') => {
                        cur.pos += 1;
                        spans.push(parse_span(&mut cur)?);
                    }
                    Some(b']') => {
                        cur.pos += 1;
                        break;
                    }
                    _ => {
                        return Err(
                            cur.err(format!("expected ',' or ']', found {}", cur.found_desc()))
                        )
                    }
                }
            }
            cur.finish()?;
            Ok(ToolInput::TemporalFocus { spans })
        }
        ToolKind::SpatialFocus => {
            cur.expect(b'[')?;
            let mut queries = vec![parse_query(&mut cur)?];
            loop {
                cur.skip_ws();
                match cur.peek() {
                    Some(b',') => {
                        cur.pos += 1;
                        queries.push(parse_query(&mut cur)?);
                    }
                    Some(b']') => {
                        cur.pos += 1;
                        break;
                    }
                    _ => {
                        return Err(
                            cur.err(format!("expected ',' or ']', found {}", cur.found_desc()))
                        )
                    }
                }
            }
            cur.finish()?;
            Ok(ToolInput::SpatialFocus { queries })
        }
    }
}

/// Parse a `[("question", timestamp), ...]` list. Shared with the
/// reflection agent's verification-question output, which uses the same
/// shape as spatial focus input.
pub fn parse_question_list(raw: &str) -> Result<Vec<(String, f64)>, GrammarMismatch> {
    match parse_tool_input(ToolKind::SpatialFocus, raw)? {
        ToolInput::SpatialFocus { queries } => Ok(queries),
        _ => unreachable!(),
    }
}

// ---------------------------------------------------------------------------
// Observations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Caption,
    VqaAnswer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationItem {
    pub timestamp_s: f64,
    pub text: String,
    pub kind: ItemKind,
}

/// Per-category wall time spent inside one tool run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Elapsed {
    pub embedding_s: f64,
    pub retrieval_s: f64,
    pub caption_s: f64,
    pub qa_s: f64,
}

/// Timestamped textual evidence produced by one tool run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub tool: String,
    pub items: Vec<ObservationItem>,
    pub frames_touched: Vec<FrameRef>,
    pub elapsed: Elapsed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    Watershed,
    Topk,
    Uniform,
}

impl std::str::FromStr for SelectionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "watershed" => Ok(SelectionStrategy::Watershed),
            "topk" => Ok(SelectionStrategy::Topk),
            "uniform" => Ok(SelectionStrategy::Uniform),
            other => Err(format!("unknown selection strategy {other:?}")),
        }
    }
}

fn record_retrieval(
    suite: &BackendSuite,
    watch: Stopwatch,
    label: &str,
    trace: &mut SessionTrace,
) -> f64 {
    let elapsed = if suite.deterministic_timing { 0.0 } else { watch.elapsed_s() };
    trace.record_event(EventCategory::Retrieval, label, elapsed, None, vec![], 0);
    elapsed
}

fn push_touched(frames_touched: &mut Vec<FrameRef>, frame: &FrameRef) {
    if !frames_touched.iter().any(|f| f.index == frame.index) {
        frames_touched.push(frame.clone());
    }
}

/// Build the similarity profile for a query over a frame window.
pub fn similarity_profile(
    query_vec: &EmbeddingVector,
    frames: &[FrameRef],
    frame_vecs: &[EmbeddingVector],
    span: (f64, f64),
    window: usize,
) -> Result<SimilarityProfile, SignalError> {
    let raw = frame_vecs
        .iter()
        .map(|v| signal::cosine_similarity(query_vec, v))
        .collect::<Result<Vec<_>, _>>()?;
    let timestamps = frames.iter().map(|f| f.timestamp_s).collect();
    SimilarityProfile::build(span, timestamps, raw, window)
}

/// Keyframe retrieval over a broad span: embed the sub-query and the span's
/// frames, build the smoothed similarity profile, select frames by the
/// configured strategy (watershed by default), and caption each selection
/// in timestamp order.
#[allow(clippy::too_many_arguments)]
pub fn divergent_search(
    query: &str,
    span: (f64, f64),
    table: &FrameIndexTable,
    suite: &BackendSuite,
    n_f: usize,
    window: usize,
    strategy: SelectionStrategy,
    trace: &mut SessionTrace,
) -> Result<Observation, ToolError> {
    let frames = media::frames_in_span(table, span)?;
    if frames.is_empty() {
        return Err(ToolError::EmptySpan(span.0, span.1));
    }
    let mut elapsed = Elapsed::default();

    let query_vec = gateway::embed_text(suite, query, trace)?;
    elapsed.embedding_s += trace.events.last().map(|e| e.latency_s).unwrap_or(0.0);
    let frame_vecs = gateway::embed_frames(suite, &frames, trace)?;
    elapsed.embedding_s += trace.events.last().map(|e| e.latency_s).unwrap_or(0.0);

    let watch = Stopwatch::start();
    let profile = similarity_profile(&query_vec, &frames, &frame_vecs, span, window)?;
    let mut selected: Vec<usize> = match strategy {
        SelectionStrategy::Watershed => {
            let regions = signal::segment_watershed(&profile.smoothed, profile.threshold);
            signal::select_peak_representatives(&profile, &regions, n_f)
        }
        SelectionStrategy::Topk => signal::select_topk(&profile, n_f),
        SelectionStrategy::Uniform => signal::select_uniform(profile.len(), n_f),
    };
    if selected.is_empty() {
        // Watershed finds no strictly-above-mean run only on an exactly
        // constant profile; with no signal to rank by, sample evenly.
        selected = signal::select_uniform(profile.len(), n_f);
    }
    elapsed.retrieval_s = record_retrieval(suite, watch, "kernel/divergent_search", trace);

    let mut items = Vec::with_capacity(selected.len());
    let mut frames_touched = Vec::new();
    for idx in selected {
        let frame = &frames[idx];
        let text = gateway::caption(suite, frame, trace)?;
        elapsed.caption_s += trace.events.last().map(|e| e.latency_s).unwrap_or(0.0);
        items.push(ObservationItem {
            timestamp_s: frame.timestamp_s,
            text,
            kind: ItemKind::Caption,
        });
        push_touched(&mut frames_touched, frame);
    }
    Ok(Observation {
        tool: ToolKind::DivergentSearch.name().to_string(),
        items,
        frames_touched,
        elapsed,
    })
}

/// Fine-grained semantic sampling inside given spans: per span, cluster the
/// frame embeddings and caption each cluster's nearest-to-centroid
/// representative. Items are merged across spans in timestamp order.
pub fn temporal_focus(
    spans: &[(f64, f64)],
    table: &FrameIndexTable,
    suite: &BackendSuite,
    k_t: usize,
    seed: u64,
    trace: &mut SessionTrace,
) -> Result<Observation, ToolError> {
    let mut elapsed = Elapsed::default();
    let mut captioned: Vec<FrameRef> = Vec::new();
    for &span in spans {
        let frames = media::frames_in_span(table, span)?;
        if frames.is_empty() {
            return Err(ToolError::EmptySpan(span.0, span.1));
        }
        let vectors = gateway::embed_frames(suite, &frames, trace)?;
        elapsed.embedding_s += trace.events.last().map(|e| e.latency_s).unwrap_or(0.0);

        let watch = Stopwatch::start();
        let clusters = signal::kmeans(&vectors, k_t.min(frames.len()), seed)?;
        let mut reps = clusters.representatives;
        reps.sort_unstable();
        elapsed.retrieval_s += record_retrieval(suite, watch, "kernel/temporal_focus", trace);

        for idx in reps {
            captioned.push(frames[idx].clone());
        }
    }
    captioned.sort_by(|a, b| {
        a.timestamp_s
            .partial_cmp(&b.timestamp_s)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut items = Vec::with_capacity(captioned.len());
    let mut frames_touched = Vec::new();
    for frame in &captioned {
        let text = gateway::caption(suite, frame, trace)?;
        elapsed.caption_s += trace.events.last().map(|e| e.latency_s).unwrap_or(0.0);
        items.push(ObservationItem {
            timestamp_s: frame.timestamp_s,
            text,
            kind: ItemKind::Caption,
        });
        push_touched(&mut frames_touched, frame);
    }
    Ok(Observation {
        tool: ToolKind::TemporalFocus.name().to_string(),
        items,
        frames_touched,
        elapsed,
    })
}

/// Timestamp-addressed visual question answering. Each timestamp resolves
/// to its nearest frame; answers come back in input order.
pub fn spatial_focus(
    queries: &[(String, f64)],
    table: &FrameIndexTable,
    suite: &BackendSuite,
    trace: &mut SessionTrace,
) -> Result<Observation, ToolError> {
    if queries.is_empty() {
        return Err(ToolError::EmptyQueryList);
    }
    let mut elapsed = Elapsed::default();
    let mut items = Vec::with_capacity(queries.len());
    let mut frames_touched = Vec::new();
    for (question, t) in queries {
        if *t < 0.0 || *t > table.duration_s {
            return Err(ToolError::OutOfRangeTimestamp(*t, table.duration_s));
        }
        let frame = media::nearest_frame(table, *t)?;
        let answer = gateway::vqa(suite, &frame, question, trace)?;
        elapsed.qa_s += trace.events.last().map(|e| e.latency_s).unwrap_or(0.0);
        items.push(ObservationItem {
            timestamp_s: frame.timestamp_s,
            text: format!("Q: {question} A: {answer}"),
            kind: ItemKind::VqaAnswer,
        });
        push_touched(&mut frames_touched, &frame);
    }
    Ok(Observation {
        tool: ToolKind::SpatialFocus.name().to_string(),
        items,
        frames_touched,
        elapsed,
    })
}

/// Scene summary over the whole video: cluster all frame embeddings into
/// `k_m` groups and caption each representative. The result initializes
/// the working memory as observation zero.
pub fn quick_preview(
    table: &FrameIndexTable,
    suite: &BackendSuite,
    k_m: usize,
    seed: u64,
    trace: &mut SessionTrace,
) -> Result<Observation, ToolError> {
    if table.frames.is_empty() {
        return Err(ToolError::EmptySpan(0.0, table.duration_s));
    }
    let mut elapsed = Elapsed::default();
    let vectors = gateway::embed_frames(suite, &table.frames, trace)?;
    elapsed.embedding_s = trace.events.last().map(|e| e.latency_s).unwrap_or(0.0);

    let watch = Stopwatch::start();
    let clusters = signal::kmeans(&vectors, k_m.min(table.frames.len()), seed)?;
    let mut reps = clusters.representatives;
    reps.sort_unstable();
    elapsed.retrieval_s = record_retrieval(suite, watch, "kernel/quick_preview", trace);

    let mut items = Vec::with_capacity(reps.len());
    let mut frames_touched = Vec::new();
    for idx in reps {
        let frame = &table.frames[idx];
        let text = gateway::caption(suite, frame, trace)?;
        elapsed.caption_s += trace.events.last().map(|e| e.latency_s).unwrap_or(0.0);
        items.push(ObservationItem {
            timestamp_s: frame.timestamp_s,
            text,
            kind: ItemKind::Caption,
        });
        push_touched(&mut frames_touched, frame);
    }
    Ok(Observation {
        tool: "quick_preview".to_string(),
        items,
        frames_touched,
        elapsed,
    })
}

/// Run a parsed tool call against the table.
#[allow(clippy::too_many_arguments)]
pub fn dispatch(
    call: &ToolCall,
    table: &FrameIndexTable,
    suite: &BackendSuite,
    n_f: usize,
    window: usize,
    strategy: SelectionStrategy,
    k_t: usize,
    seed: u64,
    trace: &mut SessionTrace,
) -> Result<Observation, ToolError> {
    match &call.input {
        ToolInput::DivergentSearch { query, span } => {
            divergent_search(query, *span, table, suite, n_f, window, strategy, trace)
        }
        ToolInput::TemporalFocus { spans } => temporal_focus(spans, table, suite, k_t, seed, trace),
        ToolInput::SpatialFocus { queries } => spatial_focus(queries, table, suite, trace),
    }
}

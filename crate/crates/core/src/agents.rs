//! The perception agent (tool selection + output parsing), the
//! verification-enhanced reflection agent (claim verification, sufficiency
//! evaluation, planning), and the orchestrator loop binding them under the
//! iteration cap.
//!
//! Prompt templates live as text assets under `prompts/` with `{slot}`
//! substitution; agent replies are parsed strictly, and a malformed reply
//! is re-prompted with the parse error appended, twice, before the session
//! fails.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{self, BackendSuite, ChatMessage, GatewayError};
use crate::media::FrameIndexTable;
use crate::memory::{
    render_observation, Annotation, Evidence, MemoryError, Verdict, WorkingMemory,
};
use crate::tools::{self, Observation, SelectionStrategy, ToolCall, ToolError, ToolKind};
use crate::trace::{DecisionRecord, SessionTrace};

pub const PERCEPTION_PROMPT: &str = include_str!("../prompts/perception_agent.txt");
pub const VERIFY_PROMPT: &str = include_str!("../prompts/reflection_verify.txt");
pub const EVALUATE_PROMPT: &str = include_str!("../prompts/reflection_evaluate.txt");
pub const FORCED_PROMPT: &str = include_str!("../prompts/reflection_forced.txt");
pub const CROSSCHECK_PROMPT: &str = include_str!("../prompts/crosscheck.txt");
pub const TOOLKIT_DOC: &str = include_str!("../prompts/toolkit.txt");

/// Re-prompts allowed after a malformed agent reply.
pub const MAX_REPROMPTS: usize = 2;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("malformed agent output after {MAX_REPROMPTS} re-prompts: {0}")]
    MalformedAgentOutput(String),
    #[error("final answer {got} outside the option range 0-{max}")]
    AnswerOutOfRange { got: usize, max: usize },
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Media(#[from] crate::media::MediaError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// Verbal feedback from reflection that conditions the next perception step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Guidance {
    pub text: String,
    pub step: usize,
}

/// Result of verifying one observation's key claims against the frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub key_info_present: bool,
    pub questions: Vec<(String, f64)>,
    pub facts: Vec<Evidence>,
    pub verdicts: Vec<(String, Verdict)>,
}

impl VerificationOutcome {
    pub fn into_annotations(self) -> Vec<Annotation> {
        let facts = self.facts;
        self.verdicts
            .into_iter()
            .map(|(claim, verdict)| Annotation { claim, verdict, evidence: facts.clone() })
            .collect()
    }
}

/// Continue with guidance, or terminate with an answer.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Continue { guidance: Guidance, explanation: String },
    Terminate { answer_index: usize, explanation: String },
}

/// Tunable knobs of one session.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Frame budget per divergent search.
    pub n_f: usize,
    /// Clusters per temporal-focus span.
    pub k_t: usize,
    /// Clusters for the quick preview.
    pub k_m: usize,
    /// Perception-reflection iteration cap.
    pub t_max: usize,
    /// Frame sampling rate.
    pub fps: f64,
    /// Similarity smoothing window (odd).
    pub window: usize,
    pub seed: u64,
    pub strategy: SelectionStrategy,
    pub verification_enabled: bool,
    /// With reflection off the loop degenerates to act-then-answer.
    pub reflection_enabled: bool,
    pub temperature: f64,
    /// Clip length a captioner may assume around each frame; at 1 FPS a
    /// clip degenerates to the frame itself.
    pub clip_len_s: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            n_f: 5,
            k_t: 3,
            k_m: 5,
            t_max: 3,
            fps: 1.0,
            window: 5,
            seed: 0,
            strategy: SelectionStrategy::Watershed,
            verification_enabled: true,
            reflection_enabled: true,
            temperature: 0.0,
            clip_len_s: 1.0,
        }
    }
}

/// Substitute `{key}` slots in a single left-to-right pass. Inserted values
/// are never rescanned, so slot-like text inside captions or memory cannot
/// be re-substituted; unknown braces pass through literally.
fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        match tail[1..].find('}') {
            Some(close) => {
                let key = &tail[1..close + 1];
                match slots.iter().find(|(k, _)| *k == key) {
                    Some((_, value)) => out.push_str(value),
                    None => out.push_str(&tail[..close + 2]),
                }
                rest = &tail[close + 2..];
            }
            None => {
                out.push_str(tail);
                return out;
            }
        }
    }
    out.push_str(rest);
    out
}

fn format_duration(duration_s: f64) -> String {
    format!("{duration_s:.1}")
}

/// Question plus enumerated options, as the reflection prompts see it.
fn question_block(question: &str, options: &[String]) -> String {
    let mut s = question.to_string();
    if !options.is_empty() {
        s.push_str("\nOptions:");
        for (i, o) in options.iter().enumerate() {
            s.push_str(&format!("\n{i}. {o}"));
        }
    }
    s
}

// ---------------------------------------------------------------------------
// Reply parsers
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum ParseFail {
    Malformed(String),
    OutOfRange { got: usize, max: usize },
}

impl ParseFail {
    fn message(&self) -> String {
        match self {
            ParseFail::Malformed(m) => m.clone(),
            ParseFail::OutOfRange { got, max } => {
                format!("final answer {got} outside the option range 0-{max}")
            }
        }
    }
}

fn strip_brackets(s: &str) -> &str {
    s.trim()
        .strip_prefix('[')
        .and_then(|x| x.strip_suffix(']'))
        .map(str::trim)
        .unwrap_or(s.trim())
}

/// Value of the first line starting with `prefix`, if any.
fn line_value<'a>(reply: &'a str, prefix: &str) -> Option<&'a str> {
    reply
        .lines()
        .find_map(|l| l.trim_start().strip_prefix(prefix))
        .map(str::trim)
}

/// Everything after the first occurrence of `prefix`, spanning lines.
fn tail_after<'a>(reply: &'a str, prefix: &str) -> Option<&'a str> {
    reply.find(prefix).map(|i| reply[i + prefix.len()..].trim())
}

/// Parse the perception agent's two-line output. The prompt demands the
/// format with no additional text, so prose before `Tool Name:` is
/// rejected.
fn parse_perception_reply(reply: &str) -> Result<ToolCall, ParseFail> {
    let trimmed = reply.trim();
    if !trimmed.starts_with("Tool Name:") {
        return Err(ParseFail::Malformed(
            "output must start with 'Tool Name:' and contain no extra text".into(),
        ));
    }
    let name_line = trimmed.lines().next().unwrap_or_default();
    let name = strip_brackets(name_line.strip_prefix("Tool Name:").unwrap_or_default());
    let tool = ToolKind::from_name(name).ok_or_else(|| {
        ParseFail::Malformed(format!(
            "unknown tool {name:?}; expected divergent_search, temporal_focus, or spatial_focus"
        ))
    })?;
    let raw_input = tail_after(trimmed, "Tool Input:")
        .ok_or_else(|| ParseFail::Malformed("missing 'Tool Input:' line".into()))?;
    ToolCall::parse(tool, raw_input).map_err(|e| ParseFail::Malformed(e.to_string()))
}

struct VerifyReply {
    key_info: bool,
    questions: Vec<(String, f64)>,
}

fn parse_verify_reply(reply: &str) -> Result<VerifyReply, ParseFail> {
    let value = line_value(reply, "Key Information:")
        .ok_or_else(|| ParseFail::Malformed("missing 'Key Information:' line".into()))?;
    let key_info = match strip_brackets(value).to_ascii_uppercase().as_str() {
        "YES" => true,
        "NO" => false,
        other => {
            return Err(ParseFail::Malformed(format!(
                "Key Information must be YES or NO, got {other:?}"
            )))
        }
    };
    if !key_info {
        return Ok(VerifyReply { key_info: false, questions: vec![] });
    }
    let list = tail_after(reply, "Verification Questions:")
        .ok_or_else(|| ParseFail::Malformed("missing 'Verification Questions:' line".into()))?;
    let questions =
        tools::parse_question_list(list).map_err(|e| ParseFail::Malformed(e.to_string()))?;
    if !(2..=3).contains(&questions.len()) {
        return Err(ParseFail::Malformed(format!(
            "expected 2-3 verification questions, got {}",
            questions.len()
        )));
    }
    Ok(VerifyReply { key_info: true, questions })
}

/// Parse the sufficiency-assessment output into a decision. `max_option`
/// bounds the final answer; `forced` rejects continue decisions.
fn parse_evaluate_reply(reply: &str, max_option: usize, forced: bool, step: usize) -> Result<Decision, ParseFail> {
    let decision = line_value(reply, "Decision:")
        .ok_or_else(|| ParseFail::Malformed("missing 'Decision:' line".into()))?;
    let decision = strip_brackets(decision).trim_end_matches('.').to_ascii_lowercase();
    let explanation = line_value(reply, "Analysis:").unwrap_or_default().to_string();
    if decision == "terminate" {
        let answer = line_value(reply, "Final Answer:")
            .ok_or_else(|| ParseFail::Malformed("missing 'Final Answer:' line".into()))?;
        let answer = strip_brackets(answer);
        let got: usize = answer.parse().map_err(|_| {
            ParseFail::Malformed(format!("Final Answer must be an integer, got {answer:?}"))
        })?;
        if got > max_option {
            return Err(ParseFail::OutOfRange { got, max: max_option });
        }
        Ok(Decision::Terminate { answer_index: got, explanation })
    } else if decision == "continue" {
        if forced {
            return Err(ParseFail::Malformed(
                "the budget is exhausted; you must terminate with a final answer".into(),
            ));
        }
        let text = tail_after(reply, "Guidance:")
            .ok_or_else(|| ParseFail::Malformed("missing 'Guidance:' line".into()))?
            .to_string();
        if text.is_empty() {
            return Err(ParseFail::Malformed("guidance must be non-empty".into()));
        }
        Ok(Decision::Continue { guidance: Guidance { text, step }, explanation })
    } else {
        Err(ParseFail::Malformed(format!(
            "Decision must be continue or terminate, got {decision:?}"
        )))
    }
}

fn parse_crosscheck_reply(reply: &str, claims: &[String]) -> Result<Vec<(String, Verdict)>, ParseFail> {
    let mut verdicts = Vec::with_capacity(claims.len());
    for (i, claim) in claims.iter().enumerate() {
        let prefix = format!("Claim {}:", i + 1);
        let value = line_value(reply, &prefix)
            .ok_or_else(|| ParseFail::Malformed(format!("missing '{prefix}' line")))?;
        let verdict = match strip_brackets(value).to_ascii_lowercase().as_str() {
            "confirmed" => Verdict::Confirmed,
            "contradicted" => Verdict::Contradicted,
            "unverifiable" => Verdict::Unverifiable,
            other => {
                return Err(ParseFail::Malformed(format!(
                    "verdict must be confirmed/contradicted/unverifiable, got {other:?}"
                )))
            }
        };
        verdicts.push((claim.clone(), verdict));
    }
    Ok(verdicts)
}

impl From<ParseFail> for AgentError {
    fn from(fail: ParseFail) -> Self {
        match fail {
            ParseFail::OutOfRange { got, max } => AgentError::AnswerOutOfRange { got, max },
            ParseFail::Malformed(m) => AgentError::MalformedAgentOutput(m),
        }
    }
}

/// Single-shot parse of a perception reply (no re-prompting).
pub fn parse_perception_output(reply: &str) -> Result<ToolCall, AgentError> {
    parse_perception_reply(reply).map_err(AgentError::from)
}

/// Single-shot parse of a verification reply: whether key information is
/// present, and the 2-3 verification questions when it is.
pub fn parse_verification_output(reply: &str) -> Result<(bool, Vec<(String, f64)>), AgentError> {
    let parsed = parse_verify_reply(reply).map_err(AgentError::from)?;
    Ok((parsed.key_info, parsed.questions))
}

/// Single-shot parse of a sufficiency-assessment reply.
pub fn parse_evaluation_output(
    reply: &str,
    max_option: usize,
    forced: bool,
) -> Result<Decision, AgentError> {
    parse_evaluate_reply(reply, max_option, forced, 0).map_err(AgentError::from)
}

// ---------------------------------------------------------------------------
// Agent chat calls with bounded re-prompting
// ---------------------------------------------------------------------------

/// Issue a chat call and parse the reply; on parse failure, re-prompt with
/// the parser error appended, up to [`MAX_REPROMPTS`] times. Every attempt
/// is a real LLM call and is accounted as one.
fn chat_parsed<T>(
    suite: &BackendSuite,
    prompt: String,
    temperature: f64,
    label: &str,
    trace: &mut SessionTrace,
    parse: impl Fn(&str) -> Result<T, ParseFail>,
) -> Result<T, AgentError> {
    let mut messages = vec![ChatMessage::user(prompt)];
    let mut last_fail: Option<ParseFail> = None;
    for _ in 0..=MAX_REPROMPTS {
        let exchange = gateway::chat(suite, &messages, temperature, label, trace)?;
        match parse(&exchange.reply) {
            Ok(value) => return Ok(value),
            Err(fail) => {
                messages.push(ChatMessage::assistant(exchange.reply));
                messages.push(ChatMessage::user(format!(
                    "Your output could not be parsed: {}. Re-emit your answer using EXACTLY the required format.",
                    fail.message()
                )));
                last_fail = Some(fail);
            }
        }
    }
    Err(last_fail.expect("loop ran at least once").into())
}

/// Fill the perception prompt, call the chat backend, and parse the
/// selected tool call.
pub fn mgpa_select_action(
    question: &str,
    memory: &WorkingMemory,
    guidance: Option<&Guidance>,
    duration_s: f64,
    suite: &BackendSuite,
    temperature: f64,
    trace: &mut SessionTrace,
) -> Result<ToolCall, AgentError> {
    let guidance_text = guidance.map(|g| g.text.as_str()).unwrap_or("None yet.");
    let prompt = fill(
        PERCEPTION_PROMPT,
        &[
            ("question", question),
            ("video_duration", &format_duration(duration_s)),
            ("memory", &memory.render_context()),
            ("guidance", guidance_text),
            ("tools", TOOLKIT_DOC),
        ],
    );
    chat_parsed(suite, prompt, temperature, "select_action", trace, parse_perception_reply)
}

/// Cross-verify the latest observation: ask whether it carries key
/// information, generate 2-3 verification questions, answer them with the
/// VQA backend on the addressed frames, and judge each claim against the
/// collected facts.
pub fn vera_verify(
    question: &str,
    latest: &Observation,
    table: &FrameIndexTable,
    suite: &BackendSuite,
    temperature: f64,
    trace: &mut SessionTrace,
) -> Result<VerificationOutcome, AgentError> {
    let prompt = fill(
        VERIFY_PROMPT,
        &[
            ("question", question),
            ("video_duration", &format_duration(table.duration_s)),
            ("latest_observation", &render_observation(latest)),
        ],
    );
    let step1 = chat_parsed(suite, prompt, temperature, "verify", trace, parse_verify_reply)?;
    if !step1.key_info {
        return Ok(VerificationOutcome {
            key_info_present: false,
            questions: vec![],
            facts: vec![],
            verdicts: vec![],
        });
    }

    let mut facts = Vec::with_capacity(step1.questions.len());
    for (q, t) in &step1.questions {
        let frame = crate::media::nearest_frame(table, *t)?;
        let answer = gateway::vqa(suite, &frame, q, trace)?;
        facts.push(Evidence { question: q.clone(), answer, timestamp_s: frame.timestamp_s });
    }

    let claims: Vec<String> = latest.items.iter().map(|i| i.text.clone()).collect();
    let claims_text = claims
        .iter()
        .enumerate()
        .map(|(i, c)| format!("Claim {}: {c}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    let facts_text = facts
        .iter()
        .map(|f| format!("- Q: {} A: {} (t={:.2})", f.question, f.answer, f.timestamp_s))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = fill(
        CROSSCHECK_PROMPT,
        &[("question", question), ("claims", &claims_text), ("facts", &facts_text)],
    );
    let verdicts = chat_parsed(suite, prompt, temperature, "crosscheck", trace, |reply| {
        parse_crosscheck_reply(reply, &claims)
    })?;

    Ok(VerificationOutcome {
        key_info_present: true,
        questions: step1.questions,
        facts,
        verdicts,
    })
}

/// Sufficiency assessment over the rendered memory: continue with guidance
/// or terminate with an answer. In forced mode (budget exhausted) only
/// terminate parses.
#[allow(clippy::too_many_arguments)]
pub fn vera_evaluate(
    question: &str,
    options: &[String],
    memory: &WorkingMemory,
    duration_s: f64,
    suite: &BackendSuite,
    temperature: f64,
    forced: bool,
    step: usize,
    trace: &mut SessionTrace,
) -> Result<Decision, AgentError> {
    let max_option = options.len().saturating_sub(1);
    let template = if forced { FORCED_PROMPT } else { EVALUATE_PROMPT };
    let prompt = fill(
        template,
        &[
            ("question", &question_block(question, options)),
            ("video_duration", &format_duration(duration_s)),
            ("working_memory", &memory.render_context()),
            ("max_option", &max_option.to_string()),
        ],
    );
    let label = if forced { "evaluate_forced" } else { "evaluate" };
    chat_parsed(suite, prompt, temperature, label, trace, |reply| {
        parse_evaluate_reply(reply, max_option, forced, step)
    })
}

/// Outcome of one session: the chosen option (absent on failure) plus the
/// full trace. Failures are flagged, never panicked.
#[derive(Debug)]
pub struct SessionResult {
    pub answer_index: Option<usize>,
    pub failed: bool,
    pub failure_reason: Option<String>,
    pub trace: SessionTrace,
}

/// Run one full perception-reflection session:
/// quick preview, then up to `t_max` iterations of
/// evaluate -> select action -> dispatch tool -> verify -> append,
/// with a forced terminate-only evaluation if the loop exhausts.
pub fn run_session(
    sample_id: &str,
    table: &FrameIndexTable,
    question: &str,
    options: &[String],
    config: &SessionConfig,
    suite: &BackendSuite,
) -> SessionResult {
    let config_snapshot = serde_json::to_value(config).expect("config serializes");
    let mut trace = SessionTrace::new(sample_id, config_snapshot);

    let outcome = run_session_inner(table, question, options, config, suite, &mut trace);
    match outcome {
        Ok((answer_index, memory)) => {
            let snapshot = serde_json::to_value(&memory).expect("memory serializes");
            trace.set_memory_snapshot(snapshot);
            trace.finish_ok(answer_index);
            SessionResult { answer_index: Some(answer_index), failed: false, failure_reason: None, trace }
        }
        Err(e) => {
            let reason = e.to_string();
            trace.finish_failed(&reason);
            SessionResult { answer_index: None, failed: true, failure_reason: Some(reason), trace }
        }
    }
}

fn run_session_inner(
    table: &FrameIndexTable,
    question: &str,
    options: &[String],
    config: &SessionConfig,
    suite: &BackendSuite,
    trace: &mut SessionTrace,
) -> Result<(usize, WorkingMemory), AgentError> {
    let preview = tools::quick_preview(table, suite, config.k_m, config.seed, trace)?;
    let mut memory = WorkingMemory::init(question, options, preview)?;
    let mut guidance: Option<Guidance> = None;

    for step in 1..=config.t_max {
        if config.reflection_enabled {
            let decision = vera_evaluate(
                question,
                options,
                &memory,
                table.duration_s,
                suite,
                config.temperature,
                false,
                step,
                trace,
            )?;
            match decision {
                Decision::Terminate { answer_index, explanation } => {
                    trace.record_decision(DecisionRecord {
                        step,
                        decision: "terminate".into(),
                        guidance: None,
                        answer_index: Some(answer_index),
                        explanation,
                    });
                    return Ok((answer_index, memory));
                }
                Decision::Continue { guidance: g, explanation } => {
                    trace.record_decision(DecisionRecord {
                        step,
                        decision: "continue".into(),
                        guidance: Some(g.text.clone()),
                        answer_index: None,
                        explanation,
                    });
                    guidance = Some(g);
                }
            }
        }

        let call = mgpa_select_action(
            question,
            &memory,
            guidance.as_ref(),
            table.duration_s,
            suite,
            config.temperature,
            trace,
        )?;
        let observation = tools::dispatch(
            &call,
            table,
            suite,
            config.n_f,
            config.window,
            config.strategy,
            config.k_t,
            config.seed,
            trace,
        )?;
        let annotations = if config.verification_enabled {
            vera_verify(question, &observation, table, suite, config.temperature, trace)?
                .into_annotations()
        } else {
            Vec::new()
        };
        memory.append_entry(step, call, observation, annotations)?;
    }

    // Budget exhausted: answer from what is in memory.
    let decision = vera_evaluate(
        question,
        options,
        &memory,
        table.duration_s,
        suite,
        config.temperature,
        true,
        config.t_max + 1,
        trace,
    )?;
    match decision {
        Decision::Terminate { answer_index, explanation } => {
            trace.record_decision(DecisionRecord {
                step: config.t_max + 1,
                decision: "terminate".into(),
                guidance: None,
                answer_index: Some(answer_index),
                explanation,
            });
            Ok((answer_index, memory))
        }
        Decision::Continue { .. } => unreachable!("forced evaluation cannot continue"),
    }
}

//! Human-readable rendering of a persisted trace: events in execution
//! order, decisions, the memory snapshot, and recomputed totals.

use std::path::Path;

use super::metrics::frames_metric;
use super::HarnessError;
use crate::memory::WorkingMemory;
use crate::trace::{EventCategory, SessionTrace};

pub fn inspect_trace(path: &Path) -> Result<String, HarnessError> {
    let trace = SessionTrace::read_jsonl(path)?;
    Ok(render_trace(&trace))
}

pub fn render_trace(trace: &SessionTrace) -> String {
    let mut out = String::new();
    out.push_str(&format!("trace {}\n", trace.sample_id));
    out.push_str(&format!("config: {}\n", trace.config));

    out.push_str("events:\n");
    for e in &trace.events {
        let mut line = format!(
            "  {:>4} [{:<9}] {:<32} {:>8.3}s",
            e.seq,
            e.category.name(),
            e.label,
            e.latency_s
        );
        if let (Some(p), Some(c)) = (e.prompt_tokens, e.completion_tokens) {
            line.push_str(&format!(" tokens {p}+{c}"));
            if e.tokens_estimated {
                line.push_str(" (est)");
            }
        }
        if !e.frame_timestamps.is_empty() {
            let ts: Vec<String> = e.frame_timestamps.iter().map(|t| format!("{t:.2}")).collect();
            line.push_str(&format!(" frames [{}]", ts.join(", ")));
        }
        if e.transport_retries > 0 {
            line.push_str(&format!(" retries {}", e.transport_retries));
        }
        line.push('\n');
        out.push_str(&line);
    }

    if !trace.decisions.is_empty() {
        out.push_str("decisions:\n");
        for d in &trace.decisions {
            match (&d.guidance, d.answer_index) {
                (Some(g), _) => {
                    out.push_str(&format!("  step {}: {} — guidance: {}\n", d.step, d.decision, g))
                }
                (None, Some(a)) => {
                    out.push_str(&format!("  step {}: {} — answer {}\n", d.step, d.decision, a))
                }
                (None, None) => out.push_str(&format!("  step {}: {}\n", d.step, d.decision)),
            }
        }
    }

    if let Some(memory_json) = &trace.memory {
        if let Ok(memory) = serde_json::from_value::<WorkingMemory>(memory_json.clone()) {
            out.push_str("memory:\n");
            for line in memory.render_context().lines() {
                out.push_str(&format!("  {line}\n"));
            }
        }
    }

    match (trace.failed, trace.final_answer) {
        (true, _) => out.push_str(&format!(
            "final: FAILED — {}\n",
            trace.failure_reason.as_deref().unwrap_or("unknown")
        )),
        (false, Some(a)) => out.push_str(&format!("final: answer {a}\n")),
        (false, None) => out.push_str("final: incomplete\n"),
    }

    let totals: Vec<String> = EventCategory::ALL
        .iter()
        .map(|c| format!("{} {:.3}s", c.name(), trace.total_seconds(*c)))
        .collect();
    out.push_str(&format!(
        "totals: {} | llm calls {} | llm tokens {} | frames metric {}\n",
        totals.join(" | "),
        trace.llm_calls(),
        trace.llm_completion_tokens(),
        frames_metric(trace)
    ));
    out
}

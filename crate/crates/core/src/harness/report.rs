//! Report assembly: per-sample rows plus aggregate accuracy, frames, and
//! per-category timing/call/token means.

use serde::{Deserialize, Serialize};

use super::metrics::frames_metric;
use crate::trace::{EventCategory, SessionTrace};

/// Counting rule printed into every report so numbers are interpretable
/// without the code.
pub const FRAMES_RULE: &str = "frames = distinct frames per sample receiving a caption or VQA \
call (quick preview and verification included; a frame both captioned and questioned counts \
once); llm_tokens = generated (completion) tokens";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample_id: String,
    pub failed: bool,
    pub answer_index: Option<usize>,
    pub truth: Option<usize>,
    /// Present when truth is known; failures judge incorrect.
    pub correct: Option<bool>,
    pub frames: usize,
    pub embedding_s: f64,
    pub retrieval_s: f64,
    pub caption_s: f64,
    pub qa_s: f64,
    pub llm_s: f64,
    pub total_s: f64,
    pub llm_calls: usize,
    pub llm_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub frames_rule: String,
    pub sample_count: usize,
    pub failed_count: usize,
    /// Samples with ground truth, the accuracy denominator.
    pub labeled_count: usize,
    /// Percent correct over all labeled samples; failures count incorrect.
    pub accuracy_pct: f64,
    /// Means over non-failed samples.
    pub mean_frames: f64,
    pub mean_embedding_s: f64,
    pub mean_retrieval_s: f64,
    pub mean_caption_s: f64,
    pub mean_qa_s: f64,
    pub mean_llm_s: f64,
    pub mean_total_s: f64,
    pub mean_llm_calls: f64,
    pub mean_llm_tokens: f64,
    pub samples: Vec<SampleRow>,
}

fn row_from_trace(trace: &SessionTrace, truth: Option<usize>) -> SampleRow {
    let embedding_s = trace.total_seconds(EventCategory::Embedding);
    let retrieval_s = trace.total_seconds(EventCategory::Retrieval);
    let caption_s = trace.total_seconds(EventCategory::Caption);
    let qa_s = trace.total_seconds(EventCategory::Qa);
    let llm_s = trace.total_seconds(EventCategory::Llm);
    let correct = truth.map(|t| !trace.failed && trace.final_answer == Some(t));
    SampleRow {
        sample_id: trace.sample_id.clone(),
        failed: trace.failed,
        answer_index: trace.final_answer,
        truth,
        correct,
        frames: frames_metric(trace),
        embedding_s,
        retrieval_s,
        caption_s,
        qa_s,
        llm_s,
        total_s: embedding_s + retrieval_s + caption_s + qa_s + llm_s,
        llm_calls: trace.llm_calls(),
        llm_tokens: trace.llm_completion_tokens(),
    }
}

/// Assemble the report from traces paired with their ground truth. Rows are
/// ordered by sample id so a resumed run reproduces the same bytes.
pub fn build_report(traces: &[(SessionTrace, Option<usize>)]) -> Report {
    let mut samples: Vec<SampleRow> =
        traces.iter().map(|(t, truth)| row_from_trace(t, *truth)).collect();
    samples.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let sample_count = samples.len();
    let failed_count = samples.iter().filter(|r| r.failed).count();
    let labeled: Vec<&SampleRow> = samples.iter().filter(|r| r.truth.is_some()).collect();
    let labeled_count = labeled.len();
    let correct_count = labeled.iter().filter(|r| r.correct == Some(true)).count();
    let accuracy_pct = if labeled_count == 0 {
        0.0
    } else {
        100.0 * correct_count as f64 / labeled_count as f64
    };

    let ok: Vec<&SampleRow> = samples.iter().filter(|r| !r.failed).collect();
    let mean = |f: &dyn Fn(&SampleRow) -> f64| -> f64 {
        if ok.is_empty() {
            0.0
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
        }
    };

    Report {
        frames_rule: FRAMES_RULE.to_string(),
        sample_count,
        failed_count,
        labeled_count,
        accuracy_pct,
        mean_frames: mean(&|r| r.frames as f64),
        mean_embedding_s: mean(&|r| r.embedding_s),
        mean_retrieval_s: mean(&|r| r.retrieval_s),
        mean_caption_s: mean(&|r| r.caption_s),
        mean_qa_s: mean(&|r| r.qa_s),
        mean_llm_s: mean(&|r| r.llm_s),
        mean_total_s: mean(&|r| r.total_s),
        mean_llm_calls: mean(&|r| r.llm_calls as f64),
        mean_llm_tokens: mean(&|r| r.llm_tokens as f64),
        samples,
    }
}

/// Fixed-width text table with one row per sample and an aggregate row.
pub fn render_table(report: &Report) -> String {
    let mut out = String::new();
    out.push_str(&format!("# {}\n", report.frames_rule));
    out.push_str(&format!(
        "{:<16} {:>4} {:>6} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>6} {:>7}\n",
        "sample", "ok", "frames", "embed_s", "retr_s", "capt_s", "qa_s", "llm_s", "total_s",
        "calls", "tokens"
    ));
    for r in &report.samples {
        let ok = if r.failed {
            "FAIL"
        } else {
            match r.correct {
                Some(true) => "yes",
                Some(false) => "no",
                None => "-",
            }
        };
        out.push_str(&format!(
            "{:<16} {:>4} {:>6} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>6} {:>7}\n",
            r.sample_id,
            ok,
            r.frames,
            r.embedding_s,
            r.retrieval_s,
            r.caption_s,
            r.qa_s,
            r.llm_s,
            r.total_s,
            r.llm_calls,
            r.llm_tokens
        ));
    }
    out.push_str(&format!(
        "{:<16} {:>4} {:>6.1} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>6.1} {:>7.1}\n",
        "mean",
        "",
        report.mean_frames,
        report.mean_embedding_s,
        report.mean_retrieval_s,
        report.mean_caption_s,
        report.mean_qa_s,
        report.mean_llm_s,
        report.mean_total_s,
        report.mean_llm_calls,
        report.mean_llm_tokens
    ));
    out.push_str(&format!(
        "accuracy: {:.1}% over {} labeled samples ({} total, {} failed)\n",
        report.accuracy_pct, report.labeled_count, report.sample_count, report.failed_count
    ));
    out
}

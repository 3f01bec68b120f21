//! Fully scripted offline scenarios: a synthetic park video whose frame
//! embeddings, captions, VQA answers, and chat replies are all pinned, so
//! whole sessions run deterministically with no model in the loop.
//!
//! The hallucination scenario injects a false caption on one frame while
//! the VQA backend stays truthful; whether the session lands on the
//! correct option then depends purely on the engine's verification
//! routing, which makes it the standard end-to-end fixture.

use std::path::Path;

use crate::gateway::mock::MockScript;
use crate::media::FrameIndexTable;

/// Scene blocks of the synthetic 90-frame video, 18 frames each.
const BLOCK_CAPTIONS: [&str; 5] = [
    "#C the boy walks through the park",
    "#C the boy waves at a vendor",
    "#C the boy stands near a bench",
    "#C the boy sits on the grass",
    "#C the boy walks toward the gate",
];

/// Triangular query-affinity humps (center frame, height); the divergent
/// search profile peaks exactly at the centers.
const HUMPS: [(usize, f64); 5] = [(15, 0.9), (28, 0.7), (46, 0.8), (60, 0.6), (74, 0.5)];
const HUMP_HALF_WIDTH: f64 = 4.0;

pub const FRAME_COUNT: usize = 90;
pub const SUB_QUERY: &str = "boy holding object";
pub const SEARCH_SPAN: (f64, f64) = (10.0, 80.0);
pub const HALLUCINATED_FRAME_S: f64 = 46.0;
pub const HALLUCINATED_CAPTION: &str = "#C a boy holds a teddy bear";
pub const TRUTHFUL_CAPTION: &str = "#C the boy holds a small brown bag";

#[derive(Debug, Clone)]
pub struct ScriptedScenario {
    pub table: FrameIndexTable,
    pub script: MockScript,
    pub question: String,
    pub options: Vec<String>,
    /// Option index the verified session should reach ("a bag").
    pub correct_answer: usize,
    /// Option index the unverified session is misled into ("a teddy bear").
    pub hallucinated_answer: usize,
}

fn block_of(frame: usize) -> usize {
    (frame / 18).min(BLOCK_CAPTIONS.len() - 1)
}

fn query_affinity(frame: usize) -> f64 {
    HUMPS
        .iter()
        .map(|&(center, height)| {
            let d = (frame as f64 - center as f64).abs();
            if d < HUMP_HALF_WIDTH { height * (1.0 - d / HUMP_HALF_WIDTH) } else { 0.0 }
        })
        .fold(0.0, f64::max)
}

fn synthetic_table() -> FrameIndexTable {
    FrameIndexTable::synthetic("park", 1.0, FRAME_COUNT, Path::new("/synthetic/park"))
}

/// Embeddings, captions, VQA answers, and the hallucination override
/// shared by every scripted scenario.
fn base_script() -> MockScript {
    let mut script = MockScript::default();
    // Query direction is the last axis; scene blocks occupy the first five.
    script.set_text_embedding(SUB_QUERY, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    for frame in 0..FRAME_COUNT {
        let mut v = vec![0.0f64; 6];
        v[block_of(frame)] = 1.0;
        v[5] = query_affinity(frame);
        script.set_frame_embedding(frame as f64, v);
        script.set_caption(frame as f64, BLOCK_CAPTIONS[block_of(frame)]);
    }
    script.set_caption(HALLUCINATED_FRAME_S, TRUTHFUL_CAPTION);
    script.set_hallucination(HALLUCINATED_FRAME_S, HALLUCINATED_CAPTION);
    script.set_vqa(46.0, "holding", "The boy is holding a small brown bag.");
    script.set_vqa(28.0, "color", "The object is brown.");
    script
}

fn question() -> String {
    "What is the boy holding in the video?".to_string()
}

fn options() -> Vec<String> {
    ["a bag", "a teddy bear", "a kite", "a phone", "a book"]
        .into_iter()
        .map(String::from)
        .collect()
}

/// The hallucination-routing scenario. One chat script serves both
/// verification modes: reusable pattern rules keyed on the distinct prompt
/// headers pick the reply, and the terminate rules key on what the
/// rendered memory contains (a contradiction flag, or the uncorrected
/// hallucinated caption).
pub fn hallucination_scenario() -> ScriptedScenario {
    let mut script = base_script();
    script.push_chat_rule(
        "analyzing the latest observation",
        "Key Information: YES\nVerification Questions: [(\"What is the boy holding?\", 46.0), (\"What color is the object the boy holds?\", 28.0)]",
    );
    script.push_chat_rule(
        "cross-checking",
        "Claim 1: unverifiable\nClaim 2: unverifiable\nClaim 3: contradicted\nClaim 4: unverifiable\nClaim 5: unverifiable",
    );
    script.push_chat_rule(
        "You are a Perception Agent",
        "Tool Name: divergent_search\nTool Input: ('boy holding object', (10.0, 80.0))",
    );
    script.push_chat_rule(
        "CONTRADICTED",
        "Analysis: The caption at 46.00s was contradicted; the verified facts show a bag.\nDecision: terminate\nFinal Answer: 0",
    );
    script.push_chat_rule(
        HALLUCINATED_CAPTION,
        "Analysis: The boy is seen holding a teddy bear at 46.00s.\nDecision: terminate\nFinal Answer: 1",
    );
    script.push_chat_rule(
        "Analyze working memory",
        "Analysis: The preview does not show what the boy is holding.\nDecision: continue\nGuidance: Use divergent_search for the boy holding an object between 10 and 80 seconds.",
    );
    ScriptedScenario {
        table: synthetic_table(),
        script,
        question: question(),
        options: options(),
        correct_answer: 0,
        hallucinated_answer: 1,
    }
}

/// A scenario whose reflection never volunteers to terminate, so the loop
/// must run to the iteration cap and answer through the forced evaluation.
pub fn exhaustion_scenario() -> ScriptedScenario {
    let mut script = base_script();
    script.push_chat_rule(
        "budget is exhausted",
        "Analysis: Budget exhausted; answering from memory.\nDecision: terminate\nFinal Answer: 0",
    );
    script.push_chat_rule("analyzing the latest observation", "Key Information: NO");
    script.push_chat_rule(
        "You are a Perception Agent",
        "Tool Name: divergent_search\nTool Input: ('boy holding object', (10.0, 80.0))",
    );
    script.push_chat_rule(
        "Analyze working memory",
        "Analysis: Still missing the held object.\nDecision: continue\nGuidance: Keep searching for the boy holding an object.",
    );
    ScriptedScenario {
        table: synthetic_table(),
        script,
        question: question(),
        options: options(),
        correct_answer: 0,
        hallucinated_answer: 1,
    }
}

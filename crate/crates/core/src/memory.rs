//! Working memory: the append-only interleaving of actions and
//! observations that feeds every agent prompt, with verification
//! annotations attached to the entries they judge.
//!
//! Contradicted claims are flagged and kept rather than deleted, so the
//! agent can see that a claim was false (and what the corrected facts are)
//! instead of re-fetching the same hallucination.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tools::{Observation, ToolCall};

#[derive(Debug, Error, PartialEq)]
pub enum MemoryError {
    #[error("question must be non-empty")]
    EmptyQuestion,
    #[error("step gap: expected {expected}, got {got}")]
    StepGap { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Confirmed,
    Contradicted,
    Unverifiable,
}

/// One verification question/answer pair, tied to the frame it was asked on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub question: String,
    pub answer: String,
    pub timestamp_s: f64,
}

/// A verification verdict on one claim, with the facts that support it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub claim: String,
    pub verdict: Verdict,
    pub evidence: Vec<Evidence>,
}

/// What produced an entry's observation: the quick preview at step 0, or a
/// perception tool call afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionRecord {
    QuickPreview,
    Tool { call: ToolCall },
}

impl ActionRecord {
    fn describe(&self) -> String {
        match self {
            ActionRecord::QuickPreview => "quick_preview".to_string(),
            ActionRecord::Tool { call } => call.describe(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub step: usize,
    pub action: ActionRecord,
    pub observation: Observation,
    pub annotations: Vec<Annotation>,
}

/// The evolving session state: question, answer options, and the ordered
/// entries. Entry 0 is always the quick preview.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingMemory {
    pub question: String,
    pub options: Vec<String>,
    pub entries: Vec<MemoryEntry>,
}

impl WorkingMemory {
    pub fn init(
        question: &str,
        options: &[String],
        preview: Observation,
    ) -> Result<Self, MemoryError> {
        if question.trim().is_empty() {
            return Err(MemoryError::EmptyQuestion);
        }
        Ok(Self {
            question: question.to_string(),
            options: options.to_vec(),
            entries: vec![MemoryEntry {
                step: 0,
                action: ActionRecord::QuickPreview,
                observation: preview,
                annotations: Vec::new(),
            }],
        })
    }

    /// Append the next entry; steps must be contiguous.
    pub fn append_entry(
        &mut self,
        step: usize,
        action: ToolCall,
        observation: Observation,
        annotations: Vec<Annotation>,
    ) -> Result<(), MemoryError> {
        let expected = self.entries.last().map(|e| e.step + 1).unwrap_or(0);
        if step != expected {
            return Err(MemoryError::StepGap { expected, got: step });
        }
        self.entries.push(MemoryEntry {
            step,
            action: ActionRecord::Tool { call: action },
            observation,
            annotations,
        });
        Ok(())
    }

    /// Number of perception iterations executed so far.
    pub fn iterations(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    /// Deterministic textual rendering fed into agent prompts. One block per
    /// entry: the step and action, then items as `[t=SS.ss] text` lines with
    /// verification flags attached to the claims they judge.
    pub fn render_context(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&format!("Step {} [{}]:\n", entry.step, entry.action.describe()));
            for item in &entry.observation.items {
                out.push_str(&format!("  [t={:.2}] {}", item.timestamp_s, item.text));
                if let Some(a) = entry.annotations.iter().find(|a| a.claim == item.text) {
                    match a.verdict {
                        Verdict::Confirmed => out.push_str(" [VERIFIED]"),
                        Verdict::Contradicted => {
                            out.push_str(&format!(" [CONTRADICTED: {}]", render_evidence(&a.evidence)));
                        }
                        Verdict::Unverifiable => {}
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

fn render_evidence(evidence: &[Evidence]) -> String {
    evidence
        .iter()
        .map(|e| format!("Q: {} A: {} (t={:.2})", e.question, e.answer, e.timestamp_s))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Render one observation the same way memory entries render their items;
/// used for the reflection agent's "latest observation" prompt slot.
pub fn render_observation(observation: &Observation) -> String {
    observation
        .items
        .iter()
        .map(|i| format!("[t={:.2}] {}", i.timestamp_s, i.text))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::{Elapsed, ItemKind, ObservationItem, ToolKind};

    fn obs(tool: &str, items: Vec<(f64, &str)>) -> Observation {
        Observation {
            tool: tool.to_string(),
            items: items
                .into_iter()
                .map(|(t, text)| ObservationItem {
                    timestamp_s: t,
                    text: text.to_string(),
                    kind: ItemKind::Caption,
                })
                .collect(),
            frames_touched: vec![],
            elapsed: Elapsed::default(),
        }
    }

    fn call() -> ToolCall {
        ToolCall::parse(ToolKind::DivergentSearch, "('boy holding object', (10.0, 80.0))").unwrap()
    }

    #[test]
    fn init_holds_exactly_the_preview() {
        let m = WorkingMemory::init(
            "What is the boy holding?",
            &["a bag".into(), "a teddy bear".into()],
            obs("quick_preview", vec![(0.0, "#C a boy walks"), (18.0, "#C a park")]),
        )
        .unwrap();
        assert_eq!(m.entries.len(), 1);
        assert_eq!(m.entries[0].step, 0);
        assert_eq!(m.entries[0].observation.items.len(), 2);
        assert_eq!(m.iterations(), 0);
    }

    #[test]
    fn empty_question_is_error() {
        assert_eq!(
            WorkingMemory::init("  ", &[], obs("quick_preview", vec![])).unwrap_err(),
            MemoryError::EmptyQuestion
        );
    }

    #[test]
    fn append_grows_by_one_and_checks_steps() {
        let mut m = WorkingMemory::init("q?", &[], obs("quick_preview", vec![(0.0, "a")])).unwrap();
        m.append_entry(1, call(), obs("divergent_search", vec![(46.0, "b")]), vec![])
            .unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(
            m.append_entry(3, call(), obs("divergent_search", vec![]), vec![])
                .unwrap_err(),
            MemoryError::StepGap { expected: 2, got: 3 }
        );
    }

    #[test]
    fn contradicted_claims_are_kept_and_flagged() {
        let mut m = WorkingMemory::init("q?", &[], obs("quick_preview", vec![(0.0, "a")])).unwrap();
        let claim = "#C a boy is holding a toy";
        m.append_entry(
            1,
            call(),
            obs("divergent_search", vec![(46.0, claim)]),
            vec![Annotation {
                claim: claim.to_string(),
                verdict: Verdict::Contradicted,
                evidence: vec![Evidence {
                    question: "What is the boy holding?".into(),
                    answer: "it is a bag".into(),
                    timestamp_s: 46.0,
                }],
            }],
        )
        .unwrap();
        let text = m.render_context();
        assert!(text.contains(claim), "claim must remain visible");
        assert!(text.contains("[CONTRADICTED: Q: What is the boy holding? A: it is a bag (t=46.00)]"));
    }

    #[test]
    fn render_has_no_flags_without_annotations() {
        let m = WorkingMemory::init("q?", &[], obs("quick_preview", vec![(0.0, "#C scene")])).unwrap();
        let text = m.render_context();
        assert!(!text.contains("[VERIFIED]"));
        assert!(!text.contains("[CONTRADICTED"));
        assert!(text.contains("#C scene"), "caption prefixes pass through untouched");
    }

    #[test]
    fn render_is_stable_and_prefix_ordered() {
        let mut m = WorkingMemory::init("q?", &[], obs("quick_preview", vec![(0.0, "a")])).unwrap();
        let before = m.render_context();
        assert_eq!(before, m.render_context());
        m.append_entry(1, call(), obs("divergent_search", vec![(46.0, "b")]), vec![])
            .unwrap();
        let after = m.render_context();
        assert!(after.starts_with(&before), "older entries render as a prefix");
    }

    #[test]
    fn serde_round_trip_renders_identically() {
        let mut m = WorkingMemory::init(
            "q?",
            &["x".into(), "y".into()],
            obs("quick_preview", vec![(0.0, "a"), (18.0, "b")]),
        )
        .unwrap();
        m.append_entry(
            1,
            call(),
            obs("divergent_search", vec![(46.0, "c")]),
            vec![Annotation {
                claim: "c".into(),
                verdict: Verdict::Confirmed,
                evidence: vec![],
            }],
        )
        .unwrap();
        let json = serde_json::to_value(&m).unwrap();
        let back: WorkingMemory = serde_json::from_value(json).unwrap();
        assert_eq!(back.render_context(), m.render_context());
        assert_eq!(back, m);
    }

    #[test]
    fn golden_rendering() {
        let mut m = WorkingMemory::init(
            "What is the boy holding in the video?",
            &["a bag".into(), "a teddy bear".into()],
            obs(
                "quick_preview",
                vec![(0.0, "#C a boy walks in a park"), (18.0, "#O a vendor sells balloons")],
            ),
        )
        .unwrap();
        m.append_entry(
            1,
            call(),
            obs(
                "divergent_search",
                vec![(15.0, "#C a boy waves"), (46.0, "#C a boy holds a teddy bear")],
            ),
            vec![
                Annotation {
                    claim: "#C a boy waves".into(),
                    verdict: Verdict::Confirmed,
                    evidence: vec![],
                },
                Annotation {
                    claim: "#C a boy holds a teddy bear".into(),
                    verdict: Verdict::Contradicted,
                    evidence: vec![Evidence {
                        question: "What is the boy holding?".into(),
                        answer: "The boy is holding a bag.".into(),
                        timestamp_s: 46.0,
                    }],
                },
            ],
        )
        .unwrap();
        let golden = include_str!("../tests/golden/memory_render.txt");
        assert_eq!(m.render_context(), golden);
    }
}

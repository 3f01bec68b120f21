//! Line-delimited JSON dataset loading.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// One benchmark item: a video, a question, and its answer options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub video_path: PathBuf,
    pub question: String,
    pub options: Vec<String>,
    /// Ground-truth option; absent for unlabeled runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_index: Option<usize>,
}

/// Parse a JSONL dataset, rejecting malformed rows and duplicate ids with
/// their row numbers.
pub fn load_dataset(path: &Path) -> Result<Vec<Sample>, HarnessError> {
    let body = std::fs::read_to_string(path)?;
    let mut samples = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (i, line) in body.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(line)
            .map_err(|e| HarnessError::ParseError { row, message: e.to_string() })?;
        if sample.sample_id.is_empty() {
            return Err(HarnessError::ParseError { row, message: "empty sample_id".into() });
        }
        if sample.question.trim().is_empty() {
            return Err(HarnessError::ParseError { row, message: "empty question".into() });
        }
        if sample.options.len() < 2 {
            return Err(HarnessError::ParseError {
                row,
                message: format!("need at least 2 options, got {}", sample.options.len()),
            });
        }
        if let Some(truth) = sample.answer_index {
            if truth >= sample.options.len() {
                return Err(HarnessError::ParseError {
                    row,
                    message: format!(
                        "answer_index {truth} out of range for {} options",
                        sample.options.len()
                    ),
                });
            }
        }
        if !seen.insert(sample.sample_id.clone()) {
            return Err(HarnessError::DuplicateId { row, id: sample.sample_id });
        }
        samples.push(sample);
    }
    Ok(samples)
}

//! The frames metric and answer judging.

use std::collections::BTreeSet;

use super::HarnessError;
use crate::trace::{EventCategory, SessionTrace};

/// Number of distinct frames that received a caption or VQA call in one
/// session — quick-preview and verification frames included, a frame that
/// was both captioned and questioned counted once. Set semantics make the
/// metric invariant under event reordering.
pub fn frames_metric(trace: &SessionTrace) -> usize {
    let mut distinct: BTreeSet<i64> = BTreeSet::new();
    for event in &trace.events {
        if matches!(event.category, EventCategory::Caption | EventCategory::Qa) {
            for &t in &event.frame_timestamps {
                distinct.insert((t * 1e6).round() as i64);
            }
        }
    }
    distinct.len()
}

/// Strict-equality multiple-choice judging. Both indices must lie inside
/// the option range.
pub fn judge_answer(
    predicted: usize,
    truth: usize,
    option_count: usize,
) -> Result<bool, HarnessError> {
    for answer in [predicted, truth] {
        if answer >= option_count {
            return Err(HarnessError::OutOfRange { answer, count: option_count });
        }
    }
    Ok(predicted == truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_with(frames: &[(EventCategory, Vec<f64>)]) -> SessionTrace {
        let mut t = SessionTrace::new("s", serde_json::Value::Null);
        for (category, ts) in frames {
            t.record_event(*category, "x", 0.0, None, ts.clone(), 0);
        }
        t
    }

    #[test]
    fn empty_trace_counts_zero() {
        assert_eq!(frames_metric(&trace_with(&[])), 0);
    }

    #[test]
    fn distinct_union_of_caption_and_qa_frames() {
        // 5 preview captions, 5 new search captions, 2 VQA hits on frames
        // already captioned: 10 distinct.
        let t = trace_with(&[
            (EventCategory::Caption, vec![0.0, 18.0, 36.0, 54.0, 72.0]),
            (EventCategory::Caption, vec![15.0, 28.0, 46.0, 60.0, 74.0]),
            (EventCategory::Qa, vec![46.0]),
            (EventCategory::Qa, vec![28.0]),
        ]);
        assert_eq!(frames_metric(&t), 10);
    }

    #[test]
    fn repeated_touches_count_once_and_other_categories_do_not_count() {
        let t = trace_with(&[
            (EventCategory::Caption, vec![1.0, 2.0]),
            (EventCategory::Caption, vec![1.0, 2.0]),
            (EventCategory::Embedding, vec![]),
        ]);
        assert_eq!(frames_metric(&t), 2);
    }

    #[test]
    fn metric_is_order_invariant() {
        let a = trace_with(&[
            (EventCategory::Caption, vec![1.0]),
            (EventCategory::Qa, vec![2.0]),
        ]);
        let b = trace_with(&[
            (EventCategory::Qa, vec![2.0]),
            (EventCategory::Caption, vec![1.0]),
        ]);
        assert_eq!(frames_metric(&a), frames_metric(&b));
    }

    #[test]
    fn judge_cases() {
        assert!(judge_answer(2, 2, 5).unwrap());
        assert!(!judge_answer(0, 4, 5).unwrap());
        assert!(matches!(judge_answer(9, 1, 5), Err(HarnessError::OutOfRange { .. })));
        assert!(matches!(judge_answer(1, 9, 5), Err(HarnessError::OutOfRange { .. })));
    }
}

//! Browser demo bindings. Three interactive operations back the static
//! page in `www/`: similarity-profile analysis (watershed vs top-k vs
//! uniform selection), seeded k-means over 2-D points, and a fully
//! scripted perception-reflection session with the verification toggle.
//!
//! Every exported function takes primitives or JSON strings and returns a
//! JSON string, so the logic is plain Rust testable on any target; the
//! `wasm_bindgen` wrappers only ferry strings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use cogniloop::agents::{run_session, SessionConfig};
use cogniloop::gateway::mock::MockSuite;
use cogniloop::harness::frames_metric;
use cogniloop::memory::WorkingMemory;
use cogniloop::scenario::hallucination_scenario;
use cogniloop::signal::{
    kmeans, segment_watershed, select_peak_representatives, select_topk, select_uniform,
    EmbeddingVector, SimilarityProfile,
};

fn json_result(result: Result<String, String>) -> String {
    match result {
        Ok(body) => body,
        Err(message) => {
            serde_json::json!({ "error": message }).to_string()
        }
    }
}

// ---------------------------------------------------------------------------
// Profile analysis
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RegionOut {
    start: usize,
    end: usize,
    rep: usize,
}

#[derive(Serialize)]
struct ProfileOut {
    raw: Vec<f64>,
    smoothed: Vec<f64>,
    threshold: f64,
    regions: Vec<RegionOut>,
    watershed: Vec<usize>,
    topk: Vec<usize>,
    uniform: Vec<usize>,
}

fn analyze_profile_impl(raw_json: &str, window: usize, n_f: usize) -> Result<String, String> {
    let raw: Vec<f64> = serde_json::from_str(raw_json).map_err(|e| format!("raw scores: {e}"))?;
    if raw.is_empty() {
        return Err("need at least one score".into());
    }
    let timestamps: Vec<f64> = (0..raw.len()).map(|i| i as f64).collect();
    let profile = SimilarityProfile::build((0.0, raw.len() as f64), timestamps, raw, window)
        .map_err(|e| e.to_string())?;
    let regions = segment_watershed(&profile.smoothed, profile.threshold);
    let out = ProfileOut {
        watershed: select_peak_representatives(&profile, &regions, n_f),
        topk: select_topk(&profile, n_f),
        uniform: select_uniform(profile.len(), n_f),
        regions: regions
            .iter()
            .map(|r| RegionOut { start: r.start_idx, end: r.end_idx, rep: r.rep_idx })
            .collect(),
        raw: profile.raw,
        smoothed: profile.smoothed,
        threshold: profile.threshold,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Analyze raw similarity scores: smooth, threshold at the mean, segment
/// into peak regions, and select frames under all three strategies.
#[wasm_bindgen]
pub fn analyze_profile(raw_json: &str, window: usize, n_f: usize) -> String {
    json_result(analyze_profile_impl(raw_json, window, n_f))
}

/// Deterministic synthetic profile from gaussian bumps plus a little
/// hash-based jitter; `peaks_json` is `[[center, width, height], ...]`.
#[wasm_bindgen]
pub fn gaussian_profile(length: usize, peaks_json: &str, noise: f64, seed: u64) -> String {
    json_result(gaussian_profile_impl(length, peaks_json, noise, seed))
}

fn gaussian_profile_impl(
    length: usize,
    peaks_json: &str,
    noise: f64,
    seed: u64,
) -> Result<String, String> {
    let peaks: Vec<(f64, f64, f64)> =
        serde_json::from_str(peaks_json).map_err(|e| format!("peaks: {e}"))?;
    if length == 0 {
        return Err("length must be positive".into());
    }
    let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
    let mut next = move || {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        (z ^ (z >> 31)) as f64 / u64::MAX as f64
    };
    let scores: Vec<f64> = (0..length)
        .map(|i| {
            let x = i as f64;
            let bumps: f64 = peaks
                .iter()
                .map(|&(c, w, h)| h * (-((x - c) * (x - c)) / (2.0 * w * w)).exp())
                .sum();
            (bumps + noise * next()).clamp(0.0, 1.0)
        })
        .collect();
    serde_json::to_string(&scores).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ClusterOut {
    k: usize,
    assignments: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    representatives: Vec<usize>,
}

fn cluster_points_impl(points_json: &str, k: usize, seed: u64) -> Result<String, String> {
    let points: Vec<[f64; 2]> =
        serde_json::from_str(points_json).map_err(|e| format!("points: {e}"))?;
    let vectors = points
        .iter()
        .map(|p| EmbeddingVector::new(p.to_vec()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let result = kmeans(&vectors, k, seed).map_err(|e| e.to_string())?;
    let out = ClusterOut {
        k: result.k,
        assignments: result.assignments,
        centroids: result.centroids.iter().map(|c| c.as_slice().to_vec()).collect(),
        representatives: result.representatives,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Seeded k-means over `[[x, y], ...]` points with nearest-to-centroid
/// representatives, the selection rule behind quick preview and temporal
/// focus.
#[wasm_bindgen]
pub fn cluster_points(points_json: &str, k: usize, seed: u64) -> String {
    json_result(cluster_points_impl(points_json, k, seed))
}

// ---------------------------------------------------------------------------
// Scripted session
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EventOut {
    seq: usize,
    category: String,
    label: String,
}

#[derive(Serialize)]
struct SessionOut {
    question: String,
    options: Vec<String>,
    answer_index: Option<usize>,
    answer_text: Option<String>,
    correct_answer: usize,
    failed: bool,
    memory_text: String,
    frames: usize,
    llm_calls: usize,
    events: Vec<EventOut>,
}

fn run_scripted_session_impl(verification: bool) -> Result<String, String> {
    let scenario = hallucination_scenario();
    let config = SessionConfig { verification_enabled: verification, ..Default::default() };
    let suite = MockSuite::new(scenario.script.clone()).into_suite();
    let result = run_session(
        "demo",
        &scenario.table,
        &scenario.question,
        &scenario.options,
        &config,
        &suite,
    );
    let memory_text = result
        .trace
        .memory
        .as_ref()
        .and_then(|m| serde_json::from_value::<WorkingMemory>(m.clone()).ok())
        .map(|m| m.render_context())
        .unwrap_or_default();
    let out = SessionOut {
        question: scenario.question,
        answer_text: result
            .answer_index
            .and_then(|i| scenario.options.get(i).cloned()),
        options: scenario.options,
        answer_index: result.answer_index,
        correct_answer: scenario.correct_answer,
        failed: result.failed,
        memory_text,
        frames: frames_metric(&result.trace),
        llm_calls: result.trace.llm_calls(),
        events: result
            .trace
            .events
            .iter()
            .map(|e| EventOut {
                seq: e.seq,
                category: e.category.name().to_string(),
                label: e.label.clone(),
            })
            .collect(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Run the scripted hallucination scenario end to end: a false caption on
/// one frame, a truthful VQA backend, and the verification toggle deciding
/// whether the session lands on the right option.
#[wasm_bindgen]
pub fn run_scripted_session(verification: bool) -> String {
    json_result(run_scripted_session_impl(verification))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_analysis_reports_selections() {
        let raw = "[0.0, 0.1, 1.0, 0.95, 0.1, 0.0, 0.1, 0.7, 0.1, 0.0]";
        let out: serde_json::Value =
            serde_json::from_str(&analyze_profile(raw, 1, 2)).unwrap();
        assert_eq!(out["watershed"], serde_json::json!([2, 7]));
        assert_eq!(out["topk"], serde_json::json!([2, 3]));
        assert_eq!(out["regions"].as_array().unwrap().len(), 2);
        assert!(out["threshold"].as_f64().unwrap() > 0.0);
        // Remaining fields the page reads.
        assert_eq!(out["raw"].as_array().unwrap().len(), 10);
        assert_eq!(out["smoothed"].as_array().unwrap().len(), 10);
        assert_eq!(out["uniform"], serde_json::json!([0, 9]));
        let region = &out["regions"][0];
        assert!(region["start"].is_u64() && region["end"].is_u64() && region["rep"].is_u64());
    }

    #[test]
    fn bad_input_reports_error_json() {
        let out: serde_json::Value = serde_json::from_str(&analyze_profile("nope", 1, 2)).unwrap();
        assert!(out["error"].as_str().unwrap().contains("raw scores"));
        let out: serde_json::Value =
            serde_json::from_str(&analyze_profile("[0.5]", 2, 2)).unwrap();
        assert!(out["error"].is_string());
    }

    #[test]
    fn gaussian_profile_is_deterministic() {
        let a = gaussian_profile(50, "[[10, 3, 0.9], [35, 4, 0.6]]", 0.05, 7);
        let b = gaussian_profile(50, "[[10, 3, 0.9], [35, 4, 0.6]]", 0.05, 7);
        assert_eq!(a, b);
        let scores: Vec<f64> = serde_json::from_str(&a).unwrap();
        assert_eq!(scores.len(), 50);
        assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn clustering_splits_blobs() {
        let points =
            "[[0.0, 0.0], [0.2, 0.1], [0.1, 0.3], [10.0, 10.0], [10.2, 9.9], [9.8, 10.1]]";
        let out: serde_json::Value =
            serde_json::from_str(&cluster_points(points, 2, 3)).unwrap();
        assert_eq!(out["k"], 2);
        let assignments = out["assignments"].as_array().unwrap();
        assert_eq!(assignments[0], assignments[1]);
        assert_eq!(assignments[3], assignments[4]);
        assert_ne!(assignments[0], assignments[3]);
        assert_eq!(out["representatives"].as_array().unwrap().len(), 2);
        let centroids = out["centroids"].as_array().unwrap();
        assert_eq!(centroids.len(), 2);
        assert_eq!(centroids[0].as_array().unwrap().len(), 2);
    }

    #[test]
    fn scripted_session_flips_with_verification() {
        let with: serde_json::Value =
            serde_json::from_str(&run_scripted_session(true)).unwrap();
        let without: serde_json::Value =
            serde_json::from_str(&run_scripted_session(false)).unwrap();
        assert_eq!(with["answer_index"], 0);
        assert_eq!(with["answer_text"], "a bag");
        assert_eq!(without["answer_index"], 1);
        assert!(with["memory_text"].as_str().unwrap().contains("CONTRADICTED"));
        assert_eq!(with["frames"], 10);
        assert!(!with["events"].as_array().unwrap().is_empty());
        // Remaining fields the page reads.
        assert_eq!(with["correct_answer"], 0);
        assert_eq!(with["failed"], false);
        assert!(with["llm_calls"].as_u64().unwrap() > 0);
        assert!(with["question"].as_str().unwrap().contains("holding"));
        assert_eq!(with["options"].as_array().unwrap().len(), 5);
        assert!(with["events"][0]["category"].is_string());
    }
}

//! Deterministic numeric kernels for frame selection.
//!
//! Everything here is pure: cosine similarity, sliding-window smoothing,
//! watershed-style peak segmentation, the baseline selection strategies
//! (top-k, uniform), and seeded k-means with nearest-to-centroid
//! representative extraction. No I/O, no hidden state.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity is undefined for an all-zero vector")]
    ZeroVector,
    #[error("smoothing window must be odd, got {0}")]
    EvenWindow(usize),
    #[error("input must be non-empty")]
    EmptyInput,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("timestamps must be strictly increasing")]
    NonMonotonicTimestamps,
    #[error("length mismatch: {0} timestamps vs {1} scores")]
    LengthMismatch(usize, usize),
}

/// A fixed-dimension embedding, unitless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, SignalError> {
        if values.is_empty() {
            return Err(SignalError::EmptyInput);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Squared Euclidean distance; both k-means steps only need the ordering.
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cosine similarity between two equal-dimension, non-zero vectors.
///
/// The result is clamped into [-1, 1] to absorb float round-off.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, SignalError> {
    if a.dim() != b.dim() {
        return Err(SignalError::DimensionMismatch(a.dim(), b.dim()));
    }
    let dot: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum();
    let na: f64 = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(SignalError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Sliding-window average with shrinking windows at the sequence edges.
///
/// Element `i` is the mean of `raw` over the window centered at `i`,
/// truncated at the boundaries, so the output has the input's length and
/// a constant sequence maps to itself.
pub fn smooth_scores(raw: &[f64], window: usize) -> Result<Vec<f64>, SignalError> {
    if raw.is_empty() {
        return Err(SignalError::EmptyInput);
    }
    if window == 0 || window.is_multiple_of(2) {
        return Err(SignalError::EvenWindow(window));
    }
    let half = window / 2;
    let n = raw.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let slice = &raw[lo..=hi];
        out.push(slice.iter().sum::<f64>() / slice.len() as f64);
    }
    Ok(out)
}

/// Per-frame similarity scores over a temporal span: raw, smoothed, and the
/// mean-of-smoothed threshold that separates peaks from valleys.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityProfile {
    pub span: (f64, f64),
    pub timestamps: Vec<f64>,
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub threshold: f64,
}

impl SimilarityProfile {
    /// Build a profile from raw scores: smooth, then take the arithmetic
    /// mean of the smoothed scores as the threshold.
    pub fn build(
        span: (f64, f64),
        timestamps: Vec<f64>,
        raw: Vec<f64>,
        window: usize,
    ) -> Result<Self, SignalError> {
        if timestamps.len() != raw.len() {
            return Err(SignalError::LengthMismatch(timestamps.len(), raw.len()));
        }
        if timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SignalError::NonMonotonicTimestamps);
        }
        if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite(i));
        }
        let smoothed = smooth_scores(&raw, window)?;
        let threshold = smoothed.iter().sum::<f64>() / smoothed.len() as f64;
        Ok(Self { span, timestamps, raw, smoothed, threshold })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// A maximal run of indices whose smoothed score is strictly above the
/// threshold, with its in-region argmax as the representative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRegion {
    pub start_idx: usize,
    pub end_idx: usize,
    pub rep_idx: usize,
    pub rep_score: f64,
}

/// Segment a smoothed score sequence into peak regions: maximal runs of
/// indices with score strictly above `threshold`, in ascending order.
/// The representative is the earliest in-region argmax.
pub fn segment_watershed(smoothed: &[f64], threshold: f64) -> Vec<PeakRegion> {
    let mut regions = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..=smoothed.len() {
        let above = i < smoothed.len() && smoothed[i] > threshold;
        match (start, above) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                let end = i - 1;
                let mut rep = s;
                for j in s + 1..=end {
                    if smoothed[j] > smoothed[rep] {
                        rep = j;
                    }
                }
                regions.push(PeakRegion {
                    start_idx: s,
                    end_idx: end,
                    rep_idx: rep,
                    rep_score: smoothed[rep],
                });
                start = None;
            }
            _ => {}
        }
    }
    regions
}

/// Keep the representatives of the `n_f` highest-peaked regions, returned in
/// ascending timestamp order. Fewer regions than `n_f` means fewer results;
/// valleys are never used as padding.
pub fn select_peak_representatives(
    profile: &SimilarityProfile,
    regions: &[PeakRegion],
    n_f: usize,
) -> Vec<usize> {
    let mut ranked: Vec<&PeakRegion> = regions.iter().collect();
    // Highest peak first; ties go to the earlier timestamp.
    ranked.sort_by(|a, b| {
        b.rep_score
            .partial_cmp(&a.rep_score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.rep_idx.cmp(&b.rep_idx))
    });
    let take = n_f.min(ranked.len());
    let mut picked: Vec<usize> = ranked[..take].iter().map(|r| r.rep_idx).collect();
    picked.sort_unstable();
    debug_assert!(picked.iter().all(|&i| i < profile.len()));
    picked
}

/// Indices of the `k` highest smoothed scores, ascending timestamp order,
/// earliest timestamp on ties.
pub fn select_topk(profile: &SimilarityProfile, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..profile.len()).collect();
    order.sort_by(|&a, &b| {
        profile.smoothed[b]
            .partial_cmp(&profile.smoothed[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut picked: Vec<usize> = order[..k.min(profile.len())].to_vec();
    picked.sort_unstable();
    picked
}

/// `k` indices evenly spaced over `[0, t_count-1]`, endpoints included for
/// k >= 2, rounded to the nearest integer and deduplicated.
pub fn select_uniform(t_count: usize, k: usize) -> Vec<usize> {
    if t_count == 0 || k == 0 {
        return Vec::new();
    }
    if k == 1 {
        return vec![0];
    }
    let mut out: Vec<usize> = Vec::with_capacity(k);
    let last = (t_count - 1) as f64;
    for i in 0..k {
        let pos = (i as f64 * last / (k - 1) as f64).round() as usize;
        if out.last() != Some(&pos) {
            out.push(pos);
        }
    }
    out
}

/// Output of seeded k-means: compact cluster ids (empty clusters dropped),
/// final centroids, and the nearest-to-centroid input index per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<EmbeddingVector>,
    pub representatives: Vec<usize>,
}

const KMEANS_MAX_ITERS: usize = 100;

/// Seeded k-means over embedding vectors.
///
/// Deterministic for a fixed `(vectors, k, seed)`: the first centroid is
/// drawn from a seeded RNG, the rest by farthest-point seeding, and all
/// ties break toward the lowest index. The effective k is clamped to the
/// input size; clusters left empty at convergence are dropped.
pub fn kmeans(
    vectors: &[EmbeddingVector],
    k: usize,
    seed: u64,
) -> Result<ClusterResult, SignalError> {
    if vectors.is_empty() || k == 0 {
        return Err(SignalError::EmptyInput);
    }
    let dim = vectors[0].dim();
    if let Some((i, _)) = vectors.iter().enumerate().find(|(_, v)| v.dim() != dim) {
        return Err(SignalError::DimensionMismatch(dim, vectors[i].dim()));
    }
    let k = k.min(vectors.len());

    // Farthest-point seeding from a seeded RNG.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroid_idx = vec![rng.gen_range(0..vectors.len())];
    while centroid_idx.len() < k {
        let mut best = (0usize, -1.0f64);
        for (i, v) in vectors.iter().enumerate() {
            if centroid_idx.contains(&i) {
                continue;
            }
            let nearest = centroid_idx
                .iter()
                .map(|&c| dist_sq(v.as_slice(), vectors[c].as_slice()))
                .fold(f64::INFINITY, f64::min);
            if nearest > best.1 {
                best = (i, nearest);
            }
        }
        centroid_idx.push(best.0);
    }
    let mut centroids: Vec<Vec<f64>> = centroid_idx
        .iter()
        .map(|&i| vectors[i].as_slice().to_vec())
        .collect();

    let assign = |centroids: &[Vec<f64>]| -> Vec<usize> {
        vectors
            .iter()
            .map(|v| {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (c, centroid) in centroids.iter().enumerate() {
                    let d = dist_sq(v.as_slice(), centroid);
                    if d < best_d {
                        best = c;
                        best_d = d;
                    }
                }
                best
            })
            .collect()
    };

    let mut assignments = assign(&centroids);
    for _ in 0..KMEANS_MAX_ITERS {
        // Update step: mean of members; an empty cluster keeps its centroid.
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &c) in vectors.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(v.as_slice()) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centroids[c] = sums[c].clone();
            }
        }
        let next = assign(&centroids);
        if next == assignments {
            break;
        }
        assignments = next;
    }

    // Drop empty clusters and renumber compactly.
    let mut counts = vec![0usize; k];
    for &c in &assignments {
        counts[c] += 1;
    }
    let mut remap = vec![usize::MAX; k];
    let mut kept_centroids = Vec::new();
    for c in 0..k {
        if counts[c] > 0 {
            remap[c] = kept_centroids.len();
            kept_centroids.push(centroids[c].clone());
        }
    }
    let assignments: Vec<usize> = assignments.iter().map(|&c| remap[c]).collect();

    // Nearest-to-centroid representative per cluster, earliest index on ties.
    let mut representatives = vec![usize::MAX; kept_centroids.len()];
    let mut rep_dist = vec![f64::INFINITY; kept_centroids.len()];
    for (i, v) in vectors.iter().enumerate() {
        let c = assignments[i];
        let d = dist_sq(v.as_slice(), &kept_centroids[c]);
        if d < rep_dist[c] {
            rep_dist[c] = d;
            representatives[c] = i;
        }
    }

    let centroids = kept_centroids
        .into_iter()
        .map(EmbeddingVector::new)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ClusterResult {
        k: centroids.len(),
        assignments,
        centroids,
        representatives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec2(x: f64, y: f64) -> EmbeddingVector {
        EmbeddingVector::new(vec![x, y]).unwrap()
    }

    fn profile_from(raw: Vec<f64>, window: usize) -> SimilarityProfile {
        let ts: Vec<f64> = (0..raw.len()).map(|i| i as f64).collect();
        SimilarityProfile::build((0.0, raw.len() as f64), ts, raw, window).unwrap()
    }

    /// Independent enumeration of maximal strictly-above-threshold runs.
    fn brute_force_regions(smoothed: &[f64], threshold: f64) -> Vec<PeakRegion> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < smoothed.len() {
            if smoothed[i] > threshold {
                let start = i;
                while i < smoothed.len() && smoothed[i] > threshold {
                    i += 1;
                }
                let end = i - 1;
                let rep = (start..=end)
                    .max_by(|&a, &b| {
                        smoothed[a]
                            .partial_cmp(&smoothed[b])
                            .unwrap()
                            .then(b.cmp(&a))
                    })
                    .unwrap();
                out.push(PeakRegion {
                    start_idx: start,
                    end_idx: end,
                    rep_idx: rep,
                    rep_score: smoothed[rep],
                });
            } else {
                i += 1;
            }
        }
        out
    }

    #[test]
    fn cosine_identical() {
        let s = cosine_similarity(&vec2(1.0, 0.0), &vec2(1.0, 0.0)).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_orthogonal() {
        let s = cosine_similarity(&vec2(1.0, 0.0), &vec2(0.0, 1.0)).unwrap();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn cosine_45_degrees() {
        let s = cosine_similarity(&vec2(1.0, 1.0), &vec2(1.0, 0.0)).unwrap();
        assert!((s - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((s - 0.70711).abs() < 1e-5);
    }

    #[test]
    fn cosine_errors() {
        let a = EmbeddingVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            cosine_similarity(&a, &vec2(1.0, 0.0)),
            Err(SignalError::DimensionMismatch(3, 2))
        );
        assert_eq!(
            cosine_similarity(&vec2(0.0, 0.0), &vec2(1.0, 0.0)),
            Err(SignalError::ZeroVector)
        );
    }

    #[test]
    fn embedding_rejects_bad_values() {
        assert_eq!(EmbeddingVector::new(vec![]), Err(SignalError::EmptyInput));
        assert_eq!(
            EmbeddingVector::new(vec![1.0, f64::NAN]),
            Err(SignalError::NonFinite(1))
        );
    }

    #[test]
    fn smooth_window_one_is_identity() {
        let raw = vec![0.3, 0.7, 0.5];
        assert_eq!(smooth_scores(&raw, 1).unwrap(), raw);
    }

    #[test]
    fn smooth_constant_invariance() {
        let raw = vec![0.4; 4];
        for w in [1usize, 3, 5, 7] {
            for (got, want) in smooth_scores(&raw, w).unwrap().iter().zip(&raw) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn smooth_shrinking_edges() {
        let raw = vec![0.0, 1.0, 0.0, 1.0, 0.0];
        let got = smooth_scores(&raw, 3).unwrap();
        let want = [0.5, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 0.5];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn smooth_errors() {
        assert_eq!(smooth_scores(&[], 3), Err(SignalError::EmptyInput));
        assert_eq!(smooth_scores(&[1.0], 2), Err(SignalError::EvenWindow(2)));
        assert_eq!(smooth_scores(&[1.0], 0), Err(SignalError::EvenWindow(0)));
    }

    #[test]
    fn watershed_constant_sequence_has_no_regions() {
        assert!(segment_watershed(&[0.5, 0.5, 0.5], 0.5).is_empty());
    }

    #[test]
    fn watershed_single_peak() {
        let regions = segment_watershed(&[0.0, 1.0, 2.0, 1.0, 0.0], 0.8);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].start_idx, 1);
        assert_eq!(regions[0].end_idx, 3);
        assert_eq!(regions[0].rep_idx, 2);
        assert_eq!(regions[0].rep_score, 2.0);
    }

    #[test]
    fn watershed_two_peaks() {
        let regions = segment_watershed(&[0.0, 2.0, 0.0, 0.0, 3.0, 0.0], 1.0);
        assert_eq!(regions.len(), 2);
        assert_eq!(regions[0].rep_idx, 1);
        assert_eq!(regions[1].rep_idx, 4);
    }

    #[test]
    fn watershed_rep_tie_breaks_earliest() {
        let regions = segment_watershed(&[0.0, 1.0, 1.0, 0.0], 0.5);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].rep_idx, 1);
    }

    #[test]
    fn peak_selection_fewer_regions_than_budget() {
        let p = profile_from(vec![0.0, 2.0, 0.0, 0.0, 3.0, 0.0], 1);
        let regions = segment_watershed(&p.smoothed, p.threshold);
        assert_eq!(regions.len(), 2);
        assert_eq!(select_peak_representatives(&p, &regions, 5), vec![1, 4]);
    }

    #[test]
    fn peak_selection_ranks_by_height() {
        // Three separated peaks with heights 0.9, 0.4, 0.7.
        let p = profile_from(vec![0.0, 0.9, 0.0, 0.4, 0.0, 0.7, 0.0], 1);
        let regions = segment_watershed(&p.smoothed, p.threshold);
        assert_eq!(regions.len(), 3);
        assert_eq!(select_peak_representatives(&p, &regions, 2), vec![1, 5]);
    }

    #[test]
    fn topk_basic() {
        let p = profile_from(vec![0.1, 0.9, 0.8, 0.2], 1);
        assert_eq!(select_topk(&p, 2), vec![1, 2]);
        assert_eq!(select_topk(&p, 10), vec![0, 1, 2, 3]);
    }

    #[test]
    fn topk_clusters_on_tall_peak_where_watershed_diversifies() {
        // Bimodal: tall narrow peak at 2..3, lower peak at 7.
        let p = profile_from(vec![0.0, 0.1, 1.0, 0.95, 0.1, 0.0, 0.1, 0.7, 0.1, 0.0], 1);
        let regions = segment_watershed(&p.smoothed, p.threshold);
        let watershed = select_peak_representatives(&p, &regions, 2);
        let topk = select_topk(&p, 2);
        assert_eq!(topk, vec![2, 3]); // both from the taller peak
        assert_eq!(watershed, vec![2, 7]); // one per peak
        let region_of = |i: usize| {
            regions
                .iter()
                .position(|r| r.start_idx <= i && i <= r.end_idx)
                .unwrap()
        };
        assert_ne!(region_of(watershed[0]), region_of(watershed[1]));
        assert_eq!(region_of(topk[0]), region_of(topk[1]));
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(select_uniform(10, 1), vec![0]);
        assert_eq!(select_uniform(5, 5), vec![0, 1, 2, 3, 4]);
        assert_eq!(select_uniform(9, 3), vec![0, 4, 8]);
        assert_eq!(select_uniform(2, 5), vec![0, 1]);
    }

    #[test]
    fn kmeans_singleton_clusters() {
        let vs = vec![vec2(0.0, 0.0), vec2(1.0, 0.0), vec2(0.0, 1.0)];
        let r = kmeans(&vs, 3, 7).unwrap();
        assert_eq!(r.k, 3);
        let mut reps = r.representatives.clone();
        reps.sort_unstable();
        assert_eq!(reps, vec![0, 1, 2]);
    }

    #[test]
    fn kmeans_two_blobs() {
        let mut vs = Vec::new();
        for d in [0.0, 0.2, -0.2] {
            vs.push(vec2(0.0 + d, 0.0 - d));
            vs.push(vec2(10.0 + d, 10.0 - d));
        }
        let r = kmeans(&vs, 2, 3).unwrap();
        assert_eq!(r.k, 2);
        // Points alternate blobs by construction; assignments must split them.
        let a0 = r.assignments[0];
        for (i, &a) in r.assignments.iter().enumerate() {
            if i % 2 == 0 {
                assert_eq!(a, a0);
            } else {
                assert_ne!(a, a0);
            }
        }
        // Representatives are the blob points nearest to the blob mean (0,0)/(10,10).
        let mut reps = r.representatives.clone();
        reps.sort_unstable();
        assert_eq!(reps, vec![0, 1]);
    }

    #[test]
    fn kmeans_clamps_k_and_drops_empty() {
        let vs = vec![vec2(1.0, 1.0), vec2(1.0, 1.0), vec2(1.0, 1.0)];
        let r = kmeans(&vs, 5, 0).unwrap();
        assert_eq!(r.k, 1);
        assert_eq!(r.assignments, vec![0, 0, 0]);
        assert_eq!(r.representatives, vec![0]);
    }

    #[test]
    fn kmeans_empty_input_is_error() {
        assert_eq!(kmeans(&[], 3, 0).unwrap_err(), SignalError::EmptyInput);
    }

    #[test]
    fn kmeans_seed_reproducible() {
        let vs: Vec<_> = (0..10)
            .map(|i| vec2((i * i % 7) as f64, (i % 4) as f64))
            .collect();
        let a = kmeans(&vs, 3, 42).unwrap();
        let b = kmeans(&vs, 3, 42).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn smoothed_within_window_bounds(
            raw in proptest::collection::vec(0.0f64..1.0, 1..64),
            half in 0usize..4,
        ) {
            let window = 2 * half + 1;
            let sm = smooth_scores(&raw, window).unwrap();
            prop_assert_eq!(sm.len(), raw.len());
            for (i, &value) in sm.iter().enumerate() {
                let lo = i.saturating_sub(half);
                let hi = (i + half).min(raw.len() - 1);
                let slice = &raw[lo..=hi];
                let min = slice.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(value >= min - 1e-12 && value <= max + 1e-12);
            }
        }

        #[test]
        fn watershed_matches_brute_force(
            raw in proptest::collection::vec(0.0f64..1.0, 1..64),
        ) {
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            prop_assert_eq!(segment_watershed(&raw, mean), brute_force_regions(&raw, mean));
        }

        #[test]
        fn representatives_are_valley_separated(
            raw in proptest::collection::vec(0.0f64..1.0, 2..64),
            n_f in 1usize..6,
        ) {
            let p = profile_from(raw, 3);
            let regions = segment_watershed(&p.smoothed, p.threshold);
            let picked = select_peak_representatives(&p, &regions, n_f);
            prop_assert_eq!(picked.len(), n_f.min(regions.len()));
            for w in picked.windows(2) {
                let separated = (w[0] + 1..w[1]).any(|i| p.smoothed[i] <= p.threshold);
                prop_assert!(separated, "reps {} and {} share a region", w[0], w[1]);
            }
        }

        #[test]
        fn topk_cardinality(
            raw in proptest::collection::vec(0.0f64..1.0, 1..64),
            k in 1usize..70,
        ) {
            let p = profile_from(raw, 1);
            prop_assert_eq!(select_topk(&p, k).len(), k.min(p.len()));
        }

        #[test]
        fn kmeans_points_nearest_own_centroid(
            pts in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..12),
            k in 1usize..5,
            seed in 0u64..8,
        ) {
            let vs: Vec<_> = pts.iter().map(|&(x, y)| vec2(x, y)).collect();
            let r = kmeans(&vs, k, seed).unwrap();
            for (i, v) in vs.iter().enumerate() {
                let own = dist_sq(v.as_slice(), r.centroids[r.assignments[i]].as_slice());
                for c in &r.centroids {
                    prop_assert!(own <= dist_sq(v.as_slice(), c.as_slice()) + 1e-9);
                }
            }
        }
    }
}

//! Frame store: map a video file to timestamped frame images at a fixed
//! sampling rate, and resolve spans/timestamps to frame references.
//!
//! Extraction is delegated to an external media tool (ffmpeg by default)
//! through a command template, so the engine stays free of codec concerns;
//! numbered image files are the interchange format.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("frame extractor not found: {0}")]
    ExtractorNotFound(String),
    #[error("frame extraction failed (exit {status}): {stderr}")]
    ExtractionFailed { status: i32, stderr: String },
    #[error("video not readable: {0}")]
    UnreadableVideo(PathBuf),
    #[error("fps must be positive, got {0}")]
    InvalidFps(f64),
    #[error("inverted span: start {0} > end {1}")]
    InvertedSpan(f64, f64),
    #[error("frame table is empty")]
    EmptyTable,
    #[error("bad frame table: {0}")]
    BadTable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One sampled frame: its position in the table and the extracted image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    #[serde(skip)]
    pub video_id: String,
    pub index: usize,
    pub timestamp_s: f64,
    pub image_path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Fingerprint {
    size: u64,
    mtime_s: i64,
    fps: f64,
}

/// Timestamp-ordered frame store for one video.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameIndexTable {
    pub video_id: String,
    pub fps: f64,
    pub duration_s: f64,
    pub frames: Vec<FrameRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fingerprint: Option<Fingerprint>,
}

impl FrameIndexTable {
    /// Build an in-memory table without touching the filesystem. Used by
    /// mock-backed sessions and tests; image paths point into `frame_dir`
    /// but are not required to exist.
    pub fn synthetic(video_id: &str, fps: f64, frame_count: usize, frame_dir: &Path) -> Self {
        let frames = (0..frame_count)
            .map(|i| FrameRef {
                video_id: video_id.to_string(),
                index: i,
                timestamp_s: i as f64 / fps,
                image_path: frame_dir.join(format!("frame_{i:06}.png")),
            })
            .collect();
        Self {
            video_id: video_id.to_string(),
            fps,
            duration_s: frame_count as f64 / fps,
            frames,
            fingerprint: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), MediaError> {
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec_pretty(self).expect("table serializes");
        std::fs::write(&tmp, body)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MediaError> {
        let body = std::fs::read(path)?;
        let mut table: FrameIndexTable =
            serde_json::from_slice(&body).map_err(|e| MediaError::BadTable(e.to_string()))?;
        for f in &mut table.frames {
            f.video_id = table.video_id.clone();
        }
        Ok(table)
    }
}

/// Default extraction template, targeting ffmpeg. `{input}`, `{fps}` and
/// `{pattern}` are substituted before the command is spawned.
pub const DEFAULT_EXTRACTOR: &str =
    "ffmpeg -y -loglevel error -i {input} -vf fps={fps} -start_number 0 {pattern}";

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn video_id_for(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "video".to_string());
    let sanitized: String = stem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{sanitized}-{:08x}", fnv1a(path.to_string_lossy().as_bytes()) as u32)
}

fn fingerprint_of(path: &Path, fps: f64) -> Result<Fingerprint, MediaError> {
    let meta = std::fs::metadata(path).map_err(|_| MediaError::UnreadableVideo(path.into()))?;
    let mtime_s = meta
        .modified()?
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0);
    Ok(Fingerprint { size: meta.len(), mtime_s, fps })
}

// Indexing is exclusive per table entry within the process; the table file
// itself is written atomically.
fn entry_lock(key: &Path) -> std::sync::Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<PathBuf, std::sync::Arc<Mutex<()>>>>> = OnceLock::new();
    let map = LOCKS.get_or_init(|| Mutex::new(HashMap::new()));
    map.lock()
        .expect("lock registry poisoned")
        .entry(key.to_path_buf())
        .or_default()
        .clone()
}

/// Extract frames from `video_path` at `fps` into `workdir` and return the
/// timestamp-ordered table. Re-running with an unchanged video reuses the
/// existing extraction (fingerprint: size, mtime, fps).
pub fn index_video(
    video_path: &Path,
    fps: f64,
    workdir: &Path,
) -> Result<FrameIndexTable, MediaError> {
    index_video_with(video_path, fps, workdir, DEFAULT_EXTRACTOR)
}

/// Same as [`index_video`] with an explicit extractor command template.
pub fn index_video_with(
    video_path: &Path,
    fps: f64,
    workdir: &Path,
    extractor: &str,
) -> Result<FrameIndexTable, MediaError> {
    if fps.is_nan() || fps <= 0.0 {
        return Err(MediaError::InvalidFps(fps));
    }
    if !video_path.is_file() {
        return Err(MediaError::UnreadableVideo(video_path.into()));
    }
    let video_id = video_id_for(video_path);
    let entry_dir = workdir.join(&video_id);
    let table_path = entry_dir.join("index.json");

    let lock = entry_lock(&table_path);
    let _guard = lock.lock().expect("entry lock poisoned");

    let fingerprint = fingerprint_of(video_path, fps)?;
    if table_path.is_file() {
        if let Ok(existing) = FrameIndexTable::load(&table_path) {
            if existing.fingerprint == Some(fingerprint)
                && existing.frames.iter().all(|f| f.image_path.is_file())
            {
                return Ok(existing);
            }
        }
    }

    let frame_dir = entry_dir.join("frames");
    if frame_dir.exists() {
        std::fs::remove_dir_all(&frame_dir)?;
    }
    std::fs::create_dir_all(&frame_dir)?;
    let pattern = frame_dir.join("frame_%06d.png");

    run_extractor(extractor, video_path, fps, &pattern)?;

    let mut frames = Vec::new();
    loop {
        let image_path = frame_dir.join(format!("frame_{:06}.png", frames.len()));
        if !image_path.is_file() {
            break;
        }
        frames.push(FrameRef {
            video_id: video_id.clone(),
            index: frames.len(),
            timestamp_s: frames.len() as f64 / fps,
            image_path,
        });
    }
    if frames.is_empty() {
        return Err(MediaError::ExtractionFailed {
            status: 0,
            stderr: "extractor exited 0 but produced no frames".into(),
        });
    }

    let table = FrameIndexTable {
        video_id,
        fps,
        duration_s: frames.len() as f64 / fps,
        frames,
        fingerprint: Some(fingerprint),
    };
    table.save(&table_path)?;
    Ok(table)
}

fn run_extractor(
    template: &str,
    input: &Path,
    fps: f64,
    pattern: &Path,
) -> Result<(), MediaError> {
    let args: Vec<String> = template
        .split_whitespace()
        .map(|tok| {
            tok.replace("{input}", &input.to_string_lossy())
                .replace("{fps}", &format!("{fps}"))
                .replace("{pattern}", &pattern.to_string_lossy())
        })
        .collect();
    let (cmd, rest) = args
        .split_first()
        .ok_or_else(|| MediaError::ExtractorNotFound(String::new()))?;
    let output = Command::new(cmd).args(rest).output().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            MediaError::ExtractorNotFound(cmd.clone())
        } else {
            MediaError::Io(e)
        }
    })?;
    if !output.status.success() {
        return Err(MediaError::ExtractionFailed {
            status: output.status.code().unwrap_or(-1),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    Ok(())
}

/// All frames with `start_s <= timestamp <= end_s`, the span clamped to
/// `[0, duration]`. An empty result is valid.
pub fn frames_in_span(
    table: &FrameIndexTable,
    span: (f64, f64),
) -> Result<Vec<FrameRef>, MediaError> {
    let (start, end) = span;
    if start > end {
        return Err(MediaError::InvertedSpan(start, end));
    }
    let start = start.max(0.0);
    let end = end.min(table.duration_s);
    Ok(table
        .frames
        .iter()
        .filter(|f| f.timestamp_s >= start && f.timestamp_s <= end)
        .cloned()
        .collect())
}

/// The frame whose timestamp is closest to `t`; the earlier frame wins ties.
pub fn nearest_frame(table: &FrameIndexTable, t: f64) -> Result<FrameRef, MediaError> {
    table
        .frames
        .iter()
        .min_by(|a, b| {
            (a.timestamp_s - t)
                .abs()
                .partial_cmp(&(b.timestamp_s - t).abs())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.index.cmp(&b.index))
        })
        .cloned()
        .ok_or(MediaError::EmptyTable)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(fps: f64, n: usize) -> FrameIndexTable {
        FrameIndexTable::synthetic("vid", fps, n, Path::new("/nonexistent"))
    }

    #[test]
    fn span_full_cover_returns_everything() {
        let t = table(1.0, 20);
        let got = frames_in_span(&t, (0.0, t.duration_s)).unwrap();
        assert_eq!(got.len(), 20);
        assert!(got.windows(2).all(|w| w[0].timestamp_s < w[1].timestamp_s));
    }

    #[test]
    fn span_inclusive_bounds() {
        let t = table(1.0, 20);
        let got = frames_in_span(&t, (10.0, 12.0)).unwrap();
        let ts: Vec<f64> = got.iter().map(|f| f.timestamp_s).collect();
        assert_eq!(ts, vec![10.0, 11.0, 12.0]);
    }

    #[test]
    fn span_out_of_range_clamps_to_empty() {
        let t = table(1.0, 20);
        assert!(frames_in_span(&t, (-5.0, -1.0)).unwrap().is_empty());
    }

    #[test]
    fn span_inverted_is_error() {
        let t = table(1.0, 20);
        assert!(matches!(
            frames_in_span(&t, (12.0, 10.0)),
            Err(MediaError::InvertedSpan(_, _))
        ));
    }

    #[test]
    fn nearest_exact_hit() {
        let t = table(1.0, 20);
        assert_eq!(nearest_frame(&t, 10.0).unwrap().index, 10);
    }

    #[test]
    fn nearest_rounds_and_ties_to_earlier() {
        let t = table(1.0, 20);
        assert_eq!(nearest_frame(&t, 10.4).unwrap().index, 10);
        assert_eq!(nearest_frame(&t, 10.5).unwrap().index, 10);
        assert_eq!(nearest_frame(&t, 10.6).unwrap().index, 11);
    }

    #[test]
    fn nearest_on_empty_table_is_error() {
        let t = table(1.0, 0);
        assert!(matches!(nearest_frame(&t, 0.0), Err(MediaError::EmptyTable)));
    }

    #[test]
    fn timestamp_round_trip_within_half_period() {
        let fps = 2.0;
        let t = table(fps, 40);
        let mut x = 0.0;
        // The bound holds up to half a sampling period from the last frame.
        while x <= t.duration_s - 0.5 / fps {
            let f = nearest_frame(&t, x).unwrap();
            assert!((f.timestamp_s - x).abs() <= 0.5 / fps + 1e-9, "t={x}");
            x += 0.173;
        }
    }

    #[test]
    fn invalid_fps_is_error() {
        let err = index_video(Path::new("/dev/null"), 0.0, Path::new("/tmp")).unwrap_err();
        assert!(matches!(err, MediaError::InvalidFps(_)));
    }

    #[test]
    fn missing_video_is_error() {
        let err =
            index_video(Path::new("/no/such/file.mp4"), 1.0, Path::new("/tmp")).unwrap_err();
        assert!(matches!(err, MediaError::UnreadableVideo(_)));
    }
}

//! Benchmark execution: one session per sample with bounded parallelism,
//! atomic per-sample trace files, and resume-by-skipping samples whose
//! trace is already complete.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::report::{build_report, render_table, Report};
use super::{HarnessError, Sample};
use crate::agents::{run_session, SessionConfig};
use crate::gateway::BackendSuite;
use crate::media::index_video_with;
use crate::trace::SessionTrace;

pub fn trace_path(out_dir: &Path, sample_id: &str) -> PathBuf {
    out_dir.join(format!("trace-{sample_id}.jsonl"))
}

#[derive(Debug)]
pub struct BenchOutcome {
    pub report: Report,
    /// Samples skipped because a complete trace already existed.
    pub resumed: usize,
}

fn complete_trace(path: &Path) -> Option<SessionTrace> {
    if !path.is_file() {
        return None;
    }
    SessionTrace::read_jsonl(path).ok().filter(|t| t.complete)
}

/// Run every sample (skipping those with complete traces), persist one
/// trace file per sample, and assemble the report. Per-sample failures are
/// recorded in their traces and never abort the batch.
#[allow(clippy::too_many_arguments)]
pub fn run_benchmark(
    samples: &[Sample],
    config: &SessionConfig,
    suite: &BackendSuite,
    parallelism: usize,
    out_dir: &Path,
    workdir: &Path,
    extractor: &str,
) -> Result<BenchOutcome, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::create_dir_all(workdir)?;

    let pending: Vec<&Sample> = samples
        .iter()
        .filter(|s| complete_trace(&trace_path(out_dir, &s.sample_id)).is_none())
        .collect();
    let resumed = samples.len() - pending.len();

    let cursor = AtomicUsize::new(0);
    let io_errors: Mutex<Vec<HarnessError>> = Mutex::new(Vec::new());
    let workers = parallelism.max(1).min(pending.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                let Some(sample) = pending.get(i) else { break };
                let trace = run_one(sample, config, suite, workdir, extractor);
                if let Err(e) = trace.write_jsonl(&trace_path(out_dir, &sample.sample_id)) {
                    io_errors.lock().expect("io error log poisoned").push(e.into());
                }
            });
        }
    });
    if let Some(e) = io_errors.into_inner().expect("io error log poisoned").into_iter().next() {
        return Err(e);
    }

    let mut rows: Vec<(SessionTrace, Option<usize>)> = Vec::with_capacity(samples.len());
    for sample in samples {
        let trace = SessionTrace::read_jsonl(&trace_path(out_dir, &sample.sample_id))?;
        rows.push((trace, sample.answer_index));
    }
    let report = build_report(&rows);

    let report_json = serde_json::to_vec_pretty(&report).expect("report serializes");
    write_atomic(&out_dir.join("report.json"), &report_json)?;
    write_atomic(&out_dir.join("report.txt"), render_table(&report).as_bytes())?;
    Ok(BenchOutcome { report, resumed })
}

fn run_one(
    sample: &Sample,
    config: &SessionConfig,
    suite: &BackendSuite,
    workdir: &Path,
    extractor: &str,
) -> SessionTrace {
    let table = match index_video_with(&sample.video_path, config.fps, workdir, extractor) {
        Ok(table) => table,
        Err(e) => {
            // Indexing failures still yield a complete (failed) trace so the
            // batch keeps going and the report counts the sample incorrect.
            let snapshot = serde_json::to_value(config).expect("config serializes");
            let mut trace = SessionTrace::new(&sample.sample_id, snapshot);
            trace.finish_failed(&format!("indexing failed: {e}"));
            return trace;
        }
    };
    run_session(
        &sample.sample_id,
        &table,
        &sample.question,
        &sample.options,
        config,
        suite,
    )
    .trace
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

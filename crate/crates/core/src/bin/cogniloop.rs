//! Command-line entry points: index a video, ask one question, run a
//! benchmark, inspect a trace, rebuild a report.
//!
//! Exit codes: 0 success, 1 usage error, 2 benchmark completed with sample
//! failures, 3 fatal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use cogniloop::agents::run_session;
use cogniloop::harness::{
    build_report, inspect_trace, load_config, load_dataset, render_table, run_benchmark,
    EngineConfig,
};
use cogniloop::media::index_video_with;
use cogniloop::trace::SessionTrace;

#[derive(Parser)]
#[command(name = "cogniloop", version, about = "Perception-reflection engine for long-video QA")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract frames from a video into the working directory.
    Index {
        video: PathBuf,
        /// Sampling rate; defaults to the config value.
        #[arg(long)]
        fps: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run one question against one video and write the session trace.
    Ask {
        video: PathBuf,
        question: String,
        /// Comma-separated answer options.
        #[arg(long, value_delimiter = ',', required = true)]
        options: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trace output path (default: trace-adhoc.jsonl).
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Run a JSONL dataset and emit traces plus a report.
    Bench {
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a persisted trace chronologically.
    Inspect { trace: PathBuf },
    /// Rebuild the report from a directory of traces.
    Report {
        dir: PathBuf,
        /// Dataset to recover ground truth from (for accuracy).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn engine_config(path: &Option<PathBuf>) -> Result<EngineConfig> {
    match path {
        Some(p) => load_config(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(EngineConfig::default()),
    }
}

fn cmd_index(video: &Path, fps: Option<f64>, config: &Option<PathBuf>) -> Result<()> {
    let cfg = engine_config(config)?;
    let fps = fps.unwrap_or(cfg.session.fps);
    let table = index_video_with(video, fps, &cfg.workdir, &cfg.extractor)?;
    println!(
        "indexed {} — {} frames at {} fps, {:.1}s",
        table.video_id,
        table.frames.len(),
        table.fps,
        table.duration_s
    );
    Ok(())
}

fn cmd_ask(
    video: &Path,
    question: &str,
    options: &[String],
    config: &Option<PathBuf>,
    trace_out: &Option<PathBuf>,
) -> Result<()> {
    if options.len() < 2 {
        bail!("need at least 2 options");
    }
    let cfg = engine_config(config)?;
    let suite = cfg.build_suite()?;
    let table = index_video_with(video, cfg.session.fps, &cfg.workdir, &cfg.extractor)?;
    let result = run_session("adhoc", &table, question, options, &cfg.session, &suite);

    let out = trace_out.clone().unwrap_or_else(|| PathBuf::from("trace-adhoc.jsonl"));
    result.trace.write_jsonl(&out)?;
    println!("trace written to {}", out.display());

    match result.answer_index {
        Some(i) => {
            println!("answer: {} — {}", i, options.get(i).map(String::as_str).unwrap_or("?"));
            Ok(())
        }
        None => bail!(
            "session failed: {}",
            result.failure_reason.unwrap_or_else(|| "unknown".into())
        ),
    }
}

fn cmd_bench(
    dataset: &Path,
    config: &Option<PathBuf>,
    parallel: usize,
    out: &Path,
) -> Result<bool> {
    let cfg = engine_config(config)?;
    let suite = cfg.build_suite()?;
    let samples = load_dataset(dataset)?;
    let outcome = run_benchmark(
        &samples,
        &cfg.session,
        &suite,
        parallel,
        out,
        &cfg.workdir,
        &cfg.extractor,
    )?;
    if outcome.resumed > 0 {
        println!("resumed: skipped {} samples with complete traces", outcome.resumed);
    }
    print!("{}", render_table(&outcome.report));
    println!("report written to {}", out.join("report.json").display());
    Ok(outcome.report.failed_count > 0)
}

fn cmd_report(dir: &Path, dataset: &Option<PathBuf>) -> Result<()> {
    let truths: std::collections::HashMap<String, usize> = match dataset {
        Some(p) => load_dataset(p)?
            .into_iter()
            .filter_map(|s| s.answer_index.map(|a| (s.sample_id, a)))
            .collect(),
        None => Default::default(),
    };
    let mut rows = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("trace-") && name.ends_with(".jsonl") {
            let trace = SessionTrace::read_jsonl(&path)?;
            let truth = truths.get(&trace.sample_id).copied();
            rows.push((trace, truth));
        }
    }
    if rows.is_empty() {
        bail!("no trace-*.jsonl files in {}", dir.display());
    }
    print!("{}", render_table(&build_report(&rows)));
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.cmd {
        Cmd::Index { video, fps, config } => cmd_index(video, *fps, config).map(|_| false),
        Cmd::Ask { video, question, options, config, trace_out } => {
            cmd_ask(video, question, options, config, trace_out).map(|_| false)
        }
        Cmd::Bench { dataset, config, parallel, out } => cmd_bench(dataset, config, *parallel, out),
        Cmd::Inspect { trace } => {
            print!("{}", inspect_trace(trace)?);
            Ok(false)
        }
        Cmd::Report { dir, dataset } => cmd_report(dir, dataset).map(|_| false),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are not usage errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

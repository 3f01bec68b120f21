//! Black-box tests of the command-line interface, fully offline: a stub
//! extractor supplies frames and a mock-script file supplies every model
//! reply.

use std::os::unix::fs::PermissionsExt;
use std::path::PathBuf;
use std::process::{Command, Output};

use cogniloop::scenario::hallucination_scenario;

const BIN: &str = env!("CARGO_BIN_EXE_cogniloop");

const STUB: &str = r#"#!/bin/sh
count=$(cat "$1")
i=0
while [ "$i" -lt "$count" ]; do
  printf 'png-bytes' > "$(printf "$3" "$i")"
  i=$((i+1))
done
"#;

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();

        let script_path = root.join("extract.sh");
        std::fs::write(&script_path, STUB).unwrap();
        std::fs::set_permissions(&script_path, std::fs::Permissions::from_mode(0o755)).unwrap();

        let mock_path = root.join("mock_script.json");
        let scenario = hallucination_scenario();
        std::fs::write(&mock_path, serde_json::to_vec_pretty(&scenario.script).unwrap()).unwrap();

        let config = root.join("engine.conf");
        std::fs::write(
            &config,
            format!(
                "backend = mock\nmock_script = {}\nworkdir = {}\nextractor = {} {{input}} {{fps}} {{pattern}}\n",
                mock_path.display(),
                root.join("work").display(),
                script_path.display(),
            ),
        )
        .unwrap();

        Self { _dir: dir, root, config }
    }

    fn video(&self, name: &str) -> PathBuf {
        let path = self.root.join(name);
        std::fs::write(&path, "90").unwrap();
        path
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(BIN).args(args).current_dir(&self.root).output().unwrap()
    }
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn code(output: &Output) -> i32 {
    output.status.code().unwrap_or(-1)
}

#[test]
fn index_reports_frame_count() {
    let fx = Fixture::new();
    let video = fx.video("clip.mp4");
    let out = fx.run(&[
        "index",
        video.to_str().unwrap(),
        "--fps",
        "1.0",
        "--config",
        fx.config.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert!(stdout(&out).contains("90 frames"), "{}", stdout(&out));
}

#[test]
fn ask_answers_and_inspect_renders_the_trace() {
    let fx = Fixture::new();
    let video = fx.video("clip.mp4");
    let trace_path = fx.root.join("out.jsonl");
    let out = fx.run(&[
        "ask",
        video.to_str().unwrap(),
        "What is the boy holding in the video?",
        "--options",
        "a bag,a teddy bear,a kite,a phone,a book",
        "--config",
        fx.config.to_str().unwrap(),
        "--trace-out",
        trace_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("answer: 0"), "{}", stdout(&out));
    assert!(trace_path.is_file());

    let out = fx.run(&["inspect", trace_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("CONTRADICTED"), "{text}");
    assert!(text.contains("frames metric 10"), "{text}");
    assert!(text.contains("final: answer 0"), "{text}");
}

#[test]
fn bench_resume_and_report() {
    let fx = Fixture::new();
    let v1 = fx.video("v1.mp4");
    let v2 = fx.video("v2.mp4");
    let v3 = fx.video("v3.mp4");
    let missing = fx.root.join("gone.mp4"); // never written: indexing fails

    let dataset = fx.root.join("data.jsonl");
    let options = r#"["a bag","a teddy bear","a kite","a phone","a book"]"#;
    let rows = [
        format!(r#"{{"sample_id":"s1","video_path":"{}","question":"What is the boy holding in the video?","options":{options},"answer_index":0}}"#, v1.display()),
        format!(r#"{{"sample_id":"s2","video_path":"{}","question":"What is the boy holding in the video?","options":{options},"answer_index":1}}"#, v2.display()),
        format!(r#"{{"sample_id":"s3","video_path":"{}","question":"What is the boy holding in the video?","options":{options},"answer_index":0}}"#, v3.display()),
        format!(r#"{{"sample_id":"s4","video_path":"{}","question":"What is the boy holding in the video?","options":{options},"answer_index":0}}"#, missing.display()),
    ];
    std::fs::write(&dataset, rows.join("\n")).unwrap();

    let out_dir = fx.root.join("bench-out");
    let out = fx.run(&[
        "bench",
        dataset.to_str().unwrap(),
        "--config",
        fx.config.to_str().unwrap(),
        "--parallel",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    // One sample failed (missing video): exit 2, batch not aborted.
    assert_eq!(code(&out), 2, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    // s1 correct, s2 wrong option, s3 correct, s4 failed -> 50%.
    assert!(text.contains("accuracy: 50.0% over 4 labeled samples (4 total, 1 failed)"), "{text}");
    assert!(out_dir.join("report.json").is_file());
    assert!(out_dir.join("report.txt").is_file());
    let report_bytes = std::fs::read(out_dir.join("report.json")).unwrap();

    // Re-running resumes every sample and reproduces the same report.
    let out = fx.run(&[
        "bench",
        dataset.to_str().unwrap(),
        "--config",
        fx.config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("skipped 4 samples"), "{}", stdout(&out));
    assert_eq!(std::fs::read(out_dir.join("report.json")).unwrap(), report_bytes);

    // report rebuilds the table from raw traces.
    let out = fx.run(&[
        "report",
        out_dir.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("accuracy: 50.0%"), "{}", stdout(&out));
}

#[test]
fn exit_codes_for_usage_and_fatal_errors() {
    let fx = Fixture::new();
    let out = fx.run(&["frobnicate"]);
    assert_eq!(code(&out), 1);
    let out = fx.run(&["inspect", "/no/such/trace.jsonl"]);
    assert_eq!(code(&out), 3);
    let out = fx.run(&["--help"]);
    assert_eq!(code(&out), 0);
}

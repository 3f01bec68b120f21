//! Run the built-in scripted hallucination scenario offline, with and
//! without verification, and print what each mode answers.
//!
//! `--dump-script <path>` writes the scenario's mock script as JSON, ready
//! for `cogniloop ask --config` with `backend = mock`.

use cogniloop::agents::{run_session, SessionConfig};
use cogniloop::gateway::mock::MockSuite;
use cogniloop::harness::frames_metric;
use cogniloop::scenario::hallucination_scenario;

fn main() {
    let scenario = hallucination_scenario();

    let mut args = std::env::args().skip(1);
    if let Some(flag) = args.next() {
        if flag == "--dump-script" {
            let path = args.next().expect("--dump-script needs a path");
            let body = serde_json::to_vec_pretty(&scenario.script).expect("script serializes");
            std::fs::write(&path, body).expect("write script");
            println!("mock script written to {path}");
            return;
        }
        eprintln!("unknown argument {flag:?}; only --dump-script <path> is supported");
        std::process::exit(1);
    }

    println!("Q: {}", scenario.question);
    for (i, option) in scenario.options.iter().enumerate() {
        println!("  {i}. {option}");
    }
    for verification in [true, false] {
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
        let answer = result.answer_index.expect("scripted session answers");
        println!(
            "verification {}: answer {} ({}) — {} frames, {} llm calls",
            if verification { "on " } else { "off" },
            answer,
            scenario.options[answer],
            frames_metric(&result.trace),
            result.trace.llm_calls(),
        );
    }
}

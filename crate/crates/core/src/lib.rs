//! cogniloop — a perception–reflection orchestration engine for long-video
//! question answering.
//!
//! A perception agent dispatches multi-granular tools (divergent search,
//! temporal focus, spatial focus) over an indexed frame store, a working
//! memory accumulates timestamped evidence, and a verification-enhanced
//! reflection agent cross-checks key claims against the frames before
//! deciding to continue or answer. All vision/language models sit behind
//! pluggable backends (HTTP or fully scripted mocks), and a benchmark
//! harness accounts for frames, runtime, calls, and tokens per sample.

pub mod agents;
pub(crate) mod clock;
pub mod gateway;
pub mod harness;
pub mod media;
pub mod memory;
pub mod scenario;
pub mod signal;
pub mod tools;
pub mod trace;

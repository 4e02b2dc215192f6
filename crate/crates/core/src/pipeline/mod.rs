//! End-to-end stages: simulate a stream, run the online model over it, score
//! and export the results.

pub mod config;
pub mod evaluate;
pub mod export;
pub mod run;
pub mod simulate;

pub use config::{MergeStrategy, RunConfig, StreamSource, TraceVariant};
pub use evaluate::{evaluate_run, evaluate_runs, LoadedRun};
pub use export::{export, ExportTarget};
pub use run::{run, verify_hashes, RunFailure, RunManifest, RunOptions, StepRecord};
pub use simulate::{load_stream_dir, simulate};

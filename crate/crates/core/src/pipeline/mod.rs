//! Reproducible orchestration of the selection, synthesis and evaluation stages.

pub mod config;
pub mod eval;
pub mod report;
pub mod run;
pub mod synth;

pub use config::{EvalStageConfig, FeatureMode, RunConfig, SynthStageConfig};
pub use report::report;
pub use run::{run, RunManifest, RunSummary};

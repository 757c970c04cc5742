//! Scenario files, bundled presets, run directories with hashed manifests,
//! and the acceptance suite behind the `shockrep` command.

pub mod analyses;
pub mod config;
pub mod error;
pub mod presets;
pub mod run;
pub mod verify;

pub use config::{AnalysisRequest, Overrides, ScenarioConfig};
pub use error::{Error, Result};
pub use run::{analyze, run_scenario, simulate, RunManifest};
pub use verify::{verify_suite, Tier, VerifyOptions, VerifyReport};

//! Config parsing, scenario orchestration and run manifests.

pub mod config;
pub mod manifest;
pub mod scenario;

pub use config::{parse_config, ExperimentConfig, InitialKind, Scenario, DEFAULTS_HELP};
pub use manifest::RunManifest;
pub use scenario::{precision, run_scenario};

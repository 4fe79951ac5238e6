//! Experiment harness: configuration, seeded world generation, scheme
//! orchestration, metrics emission, and the preflight validation report.

pub mod config;
pub mod metrics;
pub mod runner;
pub mod validate;
pub mod world;

pub use config::{load_config, parse_config_str, Scheme, SimConfig};
pub use metrics::{MetricsRow, SchemeSummary, METRICS_HEADER, SUMMARY_HEADER};
pub use runner::{run_experiment, sweep_capacity};
pub use validate::{validate, ValidationReport};

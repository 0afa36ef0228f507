//! Experiment protocols: shift probing, adaptation runs with repeats, and
//! the pooling ablation.

pub mod ablation;
pub mod config;
pub mod metrics;
pub mod pipeline;
pub mod probe;

pub use ablation::{ablate_pooling, AblationPreset, ABLATION_PRESETS};
pub use config::{DataSource, ExperimentConfig, ModelPreset, ProbeConfig};
pub use metrics::{read_metrics, write_metrics, MetricsRecord, MetricsRow, RepeatOutcome};
pub use pipeline::{AuditLog, Prepared, RepeatArtifacts, RunReport, Runner};
pub use probe::{probe_shift, ProbeOutcome};

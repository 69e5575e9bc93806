//! Experiment harness: configuration and presets, parameter sweeps with
//! log-log scaling fits, cumulative-energy and local-period reports, and
//! CSV / JSON / SVG emission. The `mspl` binary exposes all of it.

pub mod config;
pub mod error;
pub mod fit;
pub mod output;
pub mod pipeline;
pub mod reports;
pub mod svg;

pub use config::{preset, ExperimentConfig, Format, ModelKind};
pub use error::{LabError, Result};
pub use fit::{fit_scaling, ScalingFit};
pub use reports::{run_distribution_report, run_period_report, run_sweep};

//! Experiment harness around the dissemination simulator: preset and
//! config-file driven sweeps, channel calibration, and the end-to-end
//! patch pipeline. The `cidp` binary wires these onto a CLI.

pub mod calibrate;
pub mod config;
pub mod experiment;
pub mod pipeline;
pub mod presets;
pub mod svg;

pub use calibrate::{calibrate, CalibrateOptions, CalibrationResult};
pub use config::{ConfigError, ExperimentConfig, SweepSpec, SweepVariable, TopologyConfig};
pub use experiment::{run_experiment, ExperimentOutcome};
pub use pipeline::{run_pipeline, PipelineOptions, PipelineReport};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("calibration failed: target {target} unreachable in bracket (closest {closest:.6})")]
    CalibrationFailed { target: f64, closest: f64 },
    #[error(transparent)]
    Sim(#[from] cidp_core::simnet::Error),
    #[error(transparent)]
    Framing(#[from] cidp_core::framing::Error),
    #[error(transparent)]
    Protocol(#[from] cidp_core::protocol::Error),
    #[error(transparent)]
    Patch(#[from] cidp_core::patchgen::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BenchError {
    /// Process exit code: 2 config, 4 verification, 3 anything else.
    /// (Verification failures are raised by the CLI, not this enum.)
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Invalid(_) => 2,
            _ => 3,
        }
    }
}

//! Experiment runner: configuration, CSV artifacts, and the CLI.
//!
//! Each experiment writes one CSV whose `#`-prefixed header echoes the
//! fully resolved configuration (including the seed), so any output file
//! can be reproduced byte for byte from its own header.

mod cli;
pub mod config;
mod scenario;
mod single_shot;
mod sweeps;

pub use cli::main_cli;
pub use config::{CsvArtifact, Experiment, ExperimentConfig, GridSpec, SerSource};
pub use scenario::{run_dpc_scenario, scenario_records, PolicyStep, ScenarioResult, StepRecord};
pub use single_shot::run_single_shot_eval;
pub use sweeps::{run_constel_dump, run_pmse_sweep, run_ser_sweep};

use crate::channel::ChannelError;
use crate::powerctl::PowerCtlError;
use crate::receiver::ReceiverError;
use crate::reftables::TableError;
use crate::waveforms::WaveformError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Receiver(#[from] ReceiverError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    PowerCtl(#[from] PowerCtlError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

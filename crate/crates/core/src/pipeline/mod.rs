//! Dataset generation: configuration, seeded per-scenario random streams,
//! PF-mode and OPF-mode runs fanned out over worker threads, and the
//! on-disk dataset format.

mod config;
mod dataset;
mod record;
mod rng;
mod run;

pub use config::{ConfigError, GenerationConfig, Mode, SolverSettings, TopologyMode};
pub use dataset::{
    read_dataset, read_manifest, write_dataset, write_manifest, Dataset, DatasetError, ElementCounts, Manifest,
    BRANCH_HEADER, BUS_HEADER, FORMAT_VERSION, GEN_HEADER, SAMPLE_HEADER, TIMING_HEADER,
};
pub use record::{BranchRecord, BusRecord, GenRecord, Runtimes, SampleRecord, SampleStatus, Summary};
pub use rng::derive_scenario_rng;
pub use run::{generate, run_opf_mode, run_pf_mode, Progress};

use thiserror::Error;

use crate::perturb::PerturbError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read {path}: {reason}")]
    Input { path: String, reason: String },
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("config mode is {actual:?}, expected {expected:?}")]
    WrongMode { expected: Mode, actual: Mode },
}

//! Scenario perturbations: load scenarios with range calibration, N−k
//! topologies, branch impedance scaling and generator cost changes.

mod admittance;
mod cost;
mod load;
mod topology;

pub use admittance::perturb_admittance;
pub use cost::{perturb_costs, CostMode};
pub use load::{
    calibrate_load_range, calibrate_with, generate_load_scenarios, LoadProfile, LoadRange, LoadScenario,
};
pub use topology::{enumerate_topologies, sample_topologies, DEFAULT_ATTEMPT_CAP, DEFAULT_ENUMERATION_CAP};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbError {
    #[error("AC-OPF does not converge on the nominal grid")]
    BaseCaseInfeasible,
    #[error("{count} candidate topologies exceed the enumeration cap of {cap}; lower k or sample instead")]
    CombinatorialBlowup { count: u128, cap: usize },
    #[error("no admissible topology with {size} outages after {attempts} attempts")]
    RejectionExhausted { size: usize, attempts: usize },
    #[error("invalid load profile: {0}")]
    InvalidProfile(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

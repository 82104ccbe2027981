//! Power flow and optimal power flow dataset generation for transmission
//! grids: MATPOWER case handling, AC/DC solvers, scenario perturbations,
//! a deterministic generation pipeline and dataset analysis.

pub mod clock;
pub mod grid;
pub mod linalg;
pub mod powerflow;
pub mod opf;
pub mod perturb;
pub mod pipeline;
pub mod analysis;

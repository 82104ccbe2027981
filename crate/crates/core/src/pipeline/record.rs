use crate::grid::{BusId, CostPoly, TopologyPerturbation};
use crate::powerflow::BranchFlow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleStatus {
    Converged,
    NotConverged,
    /// PF mode only: the base-topology OPF of the load scenario failed, so no
    /// setpoints exist and nothing was solved.
    Skipped,
}

impl SampleStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleStatus::Converged => "converged",
            SampleStatus::NotConverged => "not_converged",
            SampleStatus::Skipped => "skipped",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "converged" => Some(SampleStatus::Converged),
            "not_converged" => Some(SampleStatus::NotConverged),
            "skipped" => Some(SampleStatus::Skipped),
            _ => None,
        }
    }
}

/// Per-bus data of one sample. Solution fields are NaN when nothing was
/// solved; violation flags are `None` unless the sample converged.
#[derive(Debug, Clone, PartialEq)]
pub struct BusRecord {
    pub bus_id: BusId,
    pub pd: f64,
    pub qd: f64,
    pub vm: f64,
    pub va: f64,
    pub va_dc: f64,
    pub vm_violation: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRecord {
    pub gen_id: usize,
    pub bus_id: BusId,
    pub in_service: bool,
    pub pg: f64,
    pub qg: f64,
    pub cost: CostPoly,
    /// DC-OPF dispatch; NaN when the DC-OPF failed.
    pub pg_dc: f64,
    pub qg_violation: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub branch_id: usize,
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub in_service: bool,
    pub r: f64,
    pub x: f64,
    pub flow: BranchFlow,
    pub loading: f64,
    /// DC-PF from→to flow; NaN when the DC-PF was not solved.
    pub pf_dc: f64,
    pub overload: Option<bool>,
    pub angle_violation: Option<bool>,
}

/// Wall-clock seconds spent per solver on one sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Runtimes {
    /// AC-PF (PF mode) or AC-OPF (OPF mode).
    pub ac: f64,
    /// PF mode: the scenario's base-topology AC-OPF.
    pub base_opf: f64,
    pub dc_pf: f64,
    pub dc_opf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub scenario_id: usize,
    pub topology_id: usize,
    pub topology: TopologyPerturbation,
    /// Digest of the branch impedance factors applied to the scenario.
    pub admittance_hash: String,
    pub cost_mode: String,
    pub status: SampleStatus,
    pub failure: Option<String>,
    pub iterations: usize,
    pub max_mismatch: f64,
    /// Generation cost of the recorded dispatch, $/h.
    pub objective: f64,
    pub dc_pf_solved: bool,
    pub dc_opf_objective: Option<f64>,
    pub slack_pg_violation: Option<bool>,
    pub buses: Vec<BusRecord>,
    pub gens: Vec<GenRecord>,
    pub branches: Vec<BranchRecord>,
    pub runtimes: Runtimes,
}

impl SampleRecord {
    pub fn converged(&self) -> bool {
        self.status == SampleStatus::Converged
    }

    pub fn overload_count(&self) -> usize {
        self.branches.iter().filter(|b| b.overload == Some(true)).count()
    }

    pub fn violation_count(&self) -> usize {
        self.overload_count()
            + self.branches.iter().filter(|b| b.angle_violation == Some(true)).count()
            + self.buses.iter().filter(|b| b.vm_violation == Some(true)).count()
            + self.gens.iter().filter(|g| g.qg_violation == Some(true)).count()
            + usize::from(self.slack_pg_violation == Some(true))
    }
}

/// Totals over a set of samples; the convergence rate counts skipped
/// samples as failures.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Summary {
    pub samples: usize,
    pub converged: usize,
    pub not_converged: usize,
    pub skipped: usize,
    pub with_violation: usize,
    pub convergence_rate: f64,
}

impl Summary {
    pub fn of(records: &[SampleRecord]) -> Self {
        let count = |s: SampleStatus| records.iter().filter(|r| r.status == s).count();
        let converged = count(SampleStatus::Converged);
        Summary {
            samples: records.len(),
            converged,
            not_converged: count(SampleStatus::NotConverged),
            skipped: count(SampleStatus::Skipped),
            with_violation: records.iter().filter(|r| r.violation_count() > 0).count(),
            convergence_rate: if records.is_empty() { 0.0 } else { converged as f64 / records.len() as f64 },
        }
    }
}

//! Grid data model: buses, branches, generators and loads of a transmission
//! case, plus the MATPOWER reader/writer and slack-connectivity queries.

mod matpower;
mod topology;

use std::collections::HashMap;

pub use matpower::{parse_matpower, serialize_matpower};
pub use topology::{connected_component_of_slack, is_admissible, TopologyPerturbation};

use thiserror::Error;

pub type BusId = i64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("malformed case: {0}")]
    MalformedCase(String),
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("no slack bus (type 3) in case")]
    NoSlack,
    #[error("invalid grid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusRole {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    InService,
    OutOfService,
}

impl Status {
    pub fn is_on(self) -> bool {
        self == Status::InService
    }

    pub fn from_flag(on: bool) -> Self {
        if on {
            Status::InService
        } else {
            Status::OutOfService
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub role: BusRole,
    /// Shunt conductance in p.u. (MW consumed at 1 p.u. voltage / base).
    pub shunt_g: f64,
    /// Shunt susceptance in p.u. (MVAr injected at 1 p.u. voltage / base).
    pub shunt_b: f64,
    pub vm_min: f64,
    pub vm_max: f64,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: usize,
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub r: f64,
    pub x: f64,
    pub b_charge: f64,
    /// Off-nominal turns ratio as stored in the case; 0 means nominal (1.0).
    pub tap: f64,
    /// Phase shift in radians.
    pub shift: f64,
    /// Long-term MVA rating; 0 means unlimited.
    pub rate_a: f64,
    pub ang_min: f64,
    pub ang_max: f64,
    pub status: Status,
}

impl Branch {
    pub fn effective_tap(&self) -> f64 {
        if self.tap == 0.0 {
            1.0
        } else {
            self.tap
        }
    }

    pub fn is_limited(&self) -> bool {
        self.rate_a > 0.0
    }

    /// MATPOWER treats angle limits at or beyond ±360° as absent.
    pub fn has_angle_limits(&self) -> bool {
        let full = 2.0 * std::f64::consts::PI - 1e-9;
        self.ang_min > -full || self.ang_max < full
    }
}

/// Quadratic generation cost `c2·P² + c1·P + c0` with `P` in MW.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostPoly {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl CostPoly {
    pub fn new(c2: f64, c1: f64, c0: f64) -> Self {
        CostPoly { c2, c1, c0 }
    }

    pub fn eval(&self, p_mw: f64) -> f64 {
        (self.c2 * p_mw + self.c1) * p_mw + self.c0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CostPoly::new(self.c2 * factor, self.c1 * factor, self.c0 * factor)
    }
}

impl Default for CostPoly {
    fn default() -> Self {
        CostPoly::new(0.0, 1.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub id: usize,
    pub bus: BusId,
    pub pg: f64,
    pub qg: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub vg: f64,
    pub status: Status,
    pub cost: CostPoly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub id: usize,
    pub bus: BusId,
    pub pd: f64,
    pub qd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
}

impl Grid {
    /// Checks every structural invariant of the model.
    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.base_mva > 0.0) || !self.base_mva.is_finite() {
            return Err(GridError::Invalid(format!("base_mva must be positive, got {}", self.base_mva)));
        }
        let mut seen = HashMap::with_capacity(self.buses.len());
        for (i, bus) in self.buses.iter().enumerate() {
            if seen.insert(bus.id, i).is_some() {
                return Err(GridError::Invalid(format!("duplicate bus id {}", bus.id)));
            }
            if !(bus.vm_min > 0.0 && bus.vm_min <= bus.vm_max) {
                return Err(GridError::Invalid(format!(
                    "bus {}: voltage bounds [{}, {}] must satisfy 0 < vm_min <= vm_max",
                    bus.id, bus.vm_min, bus.vm_max
                )));
            }
        }
        match self.buses.iter().filter(|b| b.role == BusRole::Slack).count() {
            0 => return Err(GridError::NoSlack),
            1 => {}
            n => return Err(GridError::Invalid(format!("{n} slack buses, expected exactly one"))),
        }
        for br in &self.branches {
            for end in [br.from_bus, br.to_bus] {
                if !seen.contains_key(&end) {
                    return Err(GridError::DanglingReference(format!(
                        "branch {} references unknown bus {end}",
                        br.id
                    )));
                }
            }
            if br.from_bus == br.to_bus {
                return Err(GridError::Invalid(format!("branch {} is a self-loop", br.id)));
            }
            if br.r < 0.0 || br.x == 0.0 || !br.x.is_finite() {
                return Err(GridError::Invalid(format!(
                    "branch {}: needs r >= 0 and x != 0 (r={}, x={})",
                    br.id, br.r, br.x
                )));
            }
            if br.ang_min > br.ang_max {
                return Err(GridError::Invalid(format!("branch {}: ang_min > ang_max", br.id)));
            }
        }
        for g in &self.generators {
            if !seen.contains_key(&g.bus) {
                return Err(GridError::DanglingReference(format!(
                    "generator {} references unknown bus {}",
                    g.id, g.bus
                )));
            }
            if g.p_min > g.p_max || g.q_min > g.q_max {
                return Err(GridError::Invalid(format!("generator {}: inverted bounds", g.id)));
            }
            if g.cost.c2 < 0.0 {
                return Err(GridError::Invalid(format!("generator {}: negative quadratic cost", g.id)));
            }
        }
        for l in &self.loads {
            if !seen.contains_key(&l.bus) {
                return Err(GridError::DanglingReference(format!(
                    "load {} references unknown bus {}",
                    l.id, l.bus
                )));
            }
        }
        Ok(())
    }

    /// Map from bus id to its position in `buses`.
    pub fn bus_index(&self) -> HashMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn slack_position(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.role == BusRole::Slack)
            .expect("validated grid has a slack bus")
    }

    pub fn slack_bus(&self) -> BusId {
        self.buses[self.slack_position()].id
    }

    /// Per-bus demand `(P, Q)` in MW/MVAr, indexed by bus position.
    pub fn bus_demand(&self) -> Vec<(f64, f64)> {
        let index = self.bus_index();
        let mut out = vec![(0.0, 0.0); self.buses.len()];
        for l in &self.loads {
            let slot = &mut out[index[&l.bus]];
            slot.0 += l.pd;
            slot.1 += l.qd;
        }
        out
    }

    pub fn total_load_mw(&self) -> f64 {
        self.loads.iter().map(|l| l.pd).sum()
    }

    pub fn in_service_generators(&self) -> impl Iterator<Item = &Generator> {
        self.generators.iter().filter(|g| g.status.is_on())
    }

    pub fn in_service_branches(&self) -> impl Iterator<Item = &Branch> {
        self.branches.iter().filter(|b| b.status.is_on())
    }

    /// Returns a copy with the listed branches and generators switched out of
    /// service. When the slack bus loses its last in-service generator the
    /// reference role moves to the bus of the remaining in-service generator
    /// with the largest `p_max`, so downstream solvers always see a slack
    /// with a machine attached.
    pub fn with_topology(&self, topo: &TopologyPerturbation) -> Grid {
        let mut grid = self.clone();
        for br in grid.branches.iter_mut() {
            if topo.disabled_branches.contains(&br.id) {
                br.status = Status::OutOfService;
            }
        }
        for g in grid.generators.iter_mut() {
            if topo.disabled_generators.contains(&g.id) {
                g.status = Status::OutOfService;
            }
        }
        grid.reassign_slack_if_orphaned();
        grid
    }

    pub(crate) fn reassign_slack_if_orphaned(&mut self) {
        let slack = self.slack_bus();
        if self.in_service_generators().any(|g| g.bus == slack) {
            return;
        }
        let replacement = self
            .in_service_generators()
            .fold(None::<&Generator>, |best, g| match best {
                Some(b) if b.p_max >= g.p_max => Some(b),
                _ => Some(g),
            })
            .map(|g| g.bus);
        if let Some(new_slack) = replacement {
            for bus in self.buses.iter_mut() {
                if bus.id == slack {
                    bus.role = if self.generators.iter().any(|g| g.bus == slack) {
                        BusRole::Pv
                    } else {
                        BusRole::Pq
                    };
                } else if bus.id == new_slack {
                    bus.role = BusRole::Slack;
                }
            }
        }
    }

    /// Field-wise comparison with a relative tolerance on real-valued fields.
    pub fn approx_eq(&self, other: &Grid, rel_tol: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * a.abs().max(b.abs()).max(1.0);
        close(self.base_mva, other.base_mva)
            && self.buses.len() == other.buses.len()
            && self.branches.len() == other.branches.len()
            && self.generators.len() == other.generators.len()
            && self.loads.len() == other.loads.len()
            && self.buses.iter().zip(&other.buses).all(|(a, b)| {
                a.id == b.id
                    && a.role == b.role
                    && close(a.shunt_g, b.shunt_g)
                    && close(a.shunt_b, b.shunt_b)
                    && close(a.vm_min, b.vm_min)
                    && close(a.vm_max, b.vm_max)
                    && close(a.base_kv, b.base_kv)
            })
            && self.branches.iter().zip(&other.branches).all(|(a, b)| {
                a.id == b.id
                    && a.from_bus == b.from_bus
                    && a.to_bus == b.to_bus
                    && a.status == b.status
                    && [
                        (a.r, b.r),
                        (a.x, b.x),
                        (a.b_charge, b.b_charge),
                        (a.tap, b.tap),
                        (a.shift, b.shift),
                        (a.rate_a, b.rate_a),
                        (a.ang_min, b.ang_min),
                        (a.ang_max, b.ang_max),
                    ]
                    .iter()
                    .all(|&(u, v)| close(u, v))
            })
            && self.generators.iter().zip(&other.generators).all(|(a, b)| {
                a.id == b.id
                    && a.bus == b.bus
                    && a.status == b.status
                    && [
                        (a.pg, b.pg),
                        (a.qg, b.qg),
                        (a.p_min, b.p_min),
                        (a.p_max, b.p_max),
                        (a.q_min, b.q_min),
                        (a.q_max, b.q_max),
                        (a.vg, b.vg),
                        (a.cost.c2, b.cost.c2),
                        (a.cost.c1, b.cost.c1),
                        (a.cost.c0, b.cost.c0),
                    ]
                    .iter()
                    .all(|&(u, v)| close(u, v))
            })
            && self
                .loads
                .iter()
                .zip(&other.loads)
                .all(|(a, b)| a.id == b.id && a.bus == b.bus && close(a.pd, b.pd) && close(a.qd, b.qd))
    }
}

#[cfg(test)]
pub(crate) mod test_grids {
    use super::*;

    pub fn bus(id: BusId, role: BusRole) -> Bus {
        Bus { id, role, shunt_g: 0.0, shunt_b: 0.0, vm_min: 0.9, vm_max: 1.1, base_kv: 230.0 }
    }

    pub fn line(id: usize, from: BusId, to: BusId, r: f64, x: f64) -> Branch {
        Branch {
            id,
            from_bus: from,
            to_bus: to,
            r,
            x,
            b_charge: 0.0,
            tap: 0.0,
            shift: 0.0,
            rate_a: 0.0,
            ang_min: -2.0 * std::f64::consts::PI,
            ang_max: 2.0 * std::f64::consts::PI,
            status: Status::InService,
        }
    }

    pub fn generator(id: usize, bus: BusId, p_max: f64) -> Generator {
        Generator {
            id,
            bus,
            pg: 0.0,
            qg: 0.0,
            p_min: 0.0,
            p_max,
            q_min: -p_max,
            q_max: p_max,
            vg: 1.0,
            status: Status::InService,
            cost: CostPoly::new(0.0, 10.0, 0.0),
        }
    }

    /// Three buses in a triangle, generator on the slack, loads on 2 and 3.
    pub fn triangle() -> Grid {
        Grid {
            base_mva: 100.0,
            buses: vec![bus(1, BusRole::Slack), bus(2, BusRole::Pq), bus(3, BusRole::Pq)],
            branches: vec![line(0, 1, 2, 0.01, 0.1), line(1, 2, 3, 0.01, 0.1), line(2, 1, 3, 0.01, 0.1)],
            generators: vec![generator(0, 1, 300.0)],
            loads: vec![Load { id: 0, bus: 2, pd: 50.0, qd: 10.0 }, Load { id: 1, bus: 3, pd: 40.0, qd: 5.0 }],
        }
    }

    /// Radial chain 1 - 2 - 3 with the slack at bus 1.
    pub fn chain() -> Grid {
        Grid {
            base_mva: 100.0,
            buses: vec![bus(1, BusRole::Slack), bus(2, BusRole::Pq), bus(3, BusRole::Pq)],
            branches: vec![line(0, 1, 2, 0.01, 0.1), line(1, 2, 3, 0.01, 0.1)],
            generators: vec![generator(0, 1, 300.0)],
            loads: vec![Load { id: 0, bus: 3, pd: 30.0, qd: 5.0 }],
        }
    }
}

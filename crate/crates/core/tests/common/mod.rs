#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use datakit::grid::{parse_matpower, Branch, Bus, BusId, BusRole, CostPoly, Generator, Grid, Load, Status, TopologyPerturbation};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FIXTURES: &[&str] =
    &["case2_calibration.m", "case3_mesh.m", "case9.m", "case14.m", "case24_ieee_rts.m", "case24_tight.m", "case30.m"];

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load(name: &str) -> Grid {
    parse_matpower(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Knobs for [`random_grid`].
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub buses: usize,
    /// Branches added on top of the spanning tree.
    pub extra_branches: usize,
    pub generators: usize,
    /// Taps, phase shifts, shunts, angle limits and out-of-service elements.
    pub exotic: bool,
}

/// Random grid whose in-service branches always connect every bus. Bus ids
/// are shuffled non-contiguous integers; at most one load per bus, in bus
/// order, so the case text maps back to the same load list.
pub fn random_grid(rng: &mut impl Rng, shape: Shape) -> Grid {
    let n = shape.buses;
    let mut ids: Vec<BusId> = (0..n).map(|i| 1 + 3 * i as BusId).collect();
    for i in (1..n).rev() {
        ids.swap(i, rng.gen_range(0..=i));
    }
    let slack = rng.gen_range(0..n);
    let gen_buses: Vec<usize> =
        std::iter::once(slack).chain((1..shape.generators).map(|_| rng.gen_range(0..n))).collect();
    let buses = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| Bus {
            id,
            role: if i == slack {
                BusRole::Slack
            } else if gen_buses.contains(&i) {
                BusRole::Pv
            } else {
                BusRole::Pq
            },
            shunt_g: if shape.exotic && rng.gen_bool(0.2) { rng.gen_range(0.0..0.05) } else { 0.0 },
            shunt_b: if shape.exotic && rng.gen_bool(0.2) { rng.gen_range(-0.2..0.2) } else { 0.0 },
            vm_min: 0.9,
            vm_max: 1.1,
            base_kv: [69.0, 138.0, 230.0, 345.0][rng.gen_range(0..4)],
        })
        .collect();

    let mut branches = Vec::new();
    let mut add = |rng: &mut dyn rand::RngCore, f: usize, t: usize, must_be_on: bool| {
        let exotic = shape.exotic;
        let tap = if exotic && rng.gen_bool(0.3) { rng.gen_range(0.9..1.1) } else { 0.0 };
        let shift = if exotic && rng.gen_bool(0.15) { rng.gen_range(-10.0f64..10.0).to_radians() } else { 0.0 };
        let (ang_min, ang_max) = if exotic && rng.gen_bool(0.2) {
            (-(rng.gen_range(20..60) as f64).to_radians(), (rng.gen_range(20..60) as f64).to_radians())
        } else {
            (-2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI)
        };
        let id = branches.len();
        branches.push(Branch {
            id,
            from_bus: ids[f],
            to_bus: ids[t],
            r: rng.gen_range(0.001..0.05),
            x: rng.gen_range(0.02..0.3),
            b_charge: rng.gen_range(0.0..0.1),
            tap,
            shift,
            rate_a: if rng.gen_bool(0.7) { rng.gen_range(50..400) as f64 } else { 0.0 },
            ang_min,
            ang_max,
            status: Status::from_flag(must_be_on || !exotic || rng.gen_bool(0.9)),
        });
    };
    for t in 1..n {
        let f = rng.gen_range(0..t);
        add(rng, f, t, true);
    }
    for _ in 0..shape.extra_branches {
        let f = rng.gen_range(0..n);
        let mut t = rng.gen_range(0..n - 1);
        if t >= f {
            t += 1;
        }
        add(rng, f, t, false);
    }

    let generators = gen_buses
        .iter()
        .enumerate()
        .map(|(id, &b)| {
            let p_max = rng.gen_range(100..400) as f64;
            Generator {
                id,
                bus: ids[b],
                pg: rng.gen_range(0.0..p_max),
                qg: rng.gen_range(-20.0..20.0),
                p_min: 0.0,
                p_max,
                q_min: -p_max / 2.0,
                q_max: p_max / 2.0,
                vg: rng.gen_range(0.98..1.05),
                status: Status::from_flag(id == 0 || !shape.exotic || rng.gen_bool(0.9)),
                cost: CostPoly::new(rng.gen_range(0.0..0.05), rng.gen_range(5.0..40.0), rng.gen_range(0.0..100.0)),
            }
        })
        .collect();

    let mut loads = Vec::new();
    for (i, &id) in ids.iter().enumerate() {
        if i != slack && rng.gen_bool(0.6) {
            loads.push(Load { id: loads.len(), bus: id, pd: rng.gen_range(5.0..60.0), qd: rng.gen_range(-5.0..20.0) });
        }
    }
    Grid { base_mva: 100.0, buses, branches, generators, loads }
}

/// Buses reachable from the slack over in-service branches not in `disabled`,
/// by breadth-first search that rescans the branch list at every pop.
pub fn bfs_from_slack(grid: &Grid, disabled: &BTreeSet<usize>) -> BTreeSet<BusId> {
    let slack = grid.buses.iter().find(|b| b.role == BusRole::Slack).unwrap().id;
    let mut seen = BTreeSet::from([slack]);
    let mut queue = VecDeque::from([slack]);
    while let Some(bus) = queue.pop_front() {
        for br in &grid.branches {
            if br.status != Status::InService || disabled.contains(&br.id) {
                continue;
            }
            let next = if br.from_bus == bus {
                br.to_bus
            } else if br.to_bus == bus {
                br.from_bus
            } else {
                continue;
            };
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    seen
}

/// Independent admissibility rule: every bus still reachable and at least
/// one in-service generator left.
pub fn admissible(grid: &Grid, topo: &TopologyPerturbation) -> bool {
    let live_gens = grid
        .generators
        .iter()
        .filter(|g| g.status == Status::InService && !topo.disabled_generators.contains(&g.id))
        .count();
    live_gens > 0 && bfs_from_slack(grid, &topo.disabled_branches).len() == grid.buses.len()
}

/// Best dispatch found by brute force on a grid with three units, the first
/// on the slack: the two other outputs and all three voltage setpoints are
/// meshed, AC-PF fills in the rest, and points with any limit violation are
/// dropped. The search refines three times around the incumbent. Returns
/// the cost and the AC-PF state at that point.
pub fn mesh_oracle(grid: &Grid) -> (f64, datakit::powerflow::PfSolution) {
    use datakit::analysis::detect_violations;
    use datakit::powerflow::{solve_ac_pf, PfOptions, Setpoints};
    assert_eq!(grid.generators.len(), 3);
    let g = &grid.generators;
    let pos = |id| grid.buses.iter().position(|b| b.id == id).unwrap();
    let vbounds: Vec<(f64, f64)> = g.iter().map(|u| (grid.buses[pos(u.bus)].vm_min, grid.buses[pos(u.bus)].vm_max)).collect();
    let evaluate = |p1: f64, p2: f64, v: &[f64]| {
        let sp = Setpoints { pg: vec![0.0, p1, p2], qg: vec![0.0; 3], vm: v.to_vec() };
        let s = solve_ac_pf(grid, &sp, &PfOptions::default());
        if !s.converged || !detect_violations(grid, &s, 1e-6).is_empty() {
            return None;
        }
        let cost: f64 = g.iter().zip(&s.pg).map(|(u, &p)| u.cost.eval(p)).sum();
        Some((cost, s))
    };

    let mut centre = ((g[1].p_min + g[1].p_max) / 2.0, (g[2].p_min + g[2].p_max) / 2.0, vec![1.0; 3]);
    let mut best: Option<(f64, datakit::powerflow::PfSolution)> = None;
    let span = (g[1].p_max - g[1].p_min).max(g[2].p_max - g[2].p_min);
    for (p_step, p_n, v_step) in [(span / 30.0, 16, 0.025), (span / 150.0, 5, 0.01), (span / 750.0, 5, 0.0025)] {
        let mut improved = centre.clone();
        let axes: Vec<Vec<f64>> = (0..3)
            .map(|k| {
                (-4..=4)
                    .map(|i| centre.2[k] + i as f64 * v_step)
                    .filter(|v| *v >= vbounds[k].0 && *v <= vbounds[k].1)
                    .collect()
            })
            .collect();
        for a in -p_n..=p_n {
            for b in -p_n..=p_n {
                let (p1, p2) = (centre.0 + a as f64 * p_step, centre.1 + b as f64 * p_step);
                if p1 < g[1].p_min || p1 > g[1].p_max || p2 < g[2].p_min || p2 > g[2].p_max {
                    continue;
                }
                for &v0 in &axes[0] {
                    for &v1 in &axes[1] {
                        for &v2 in &axes[2] {
                            if let Some((cost, s)) = evaluate(p1, p2, &[v0, v1, v2]) {
                                if best.as_ref().map_or(true, |(c, _)| cost < *c) {
                                    best = Some((cost, s));
                                    improved = (p1, p2, vec![v0, v1, v2]);
                                }
                            }
                        }
                    }
                }
            }
        }
        centre = improved;
    }
    best.expect("no feasible mesh point")
}

/// DC angles (rad) by a dense solve of the reduced susceptance system, with
/// phase shifts as equivalent injections. `injections` in MW per bus.
pub fn dense_dc_angles(grid: &Grid, injections: &[f64]) -> Vec<f64> {
    use nalgebra::{DMatrix, DVector};
    let n = grid.buses.len();
    let slack = grid.buses.iter().position(|b| b.role == BusRole::Slack).unwrap();
    let pos = |id| grid.buses.iter().position(|b| b.id == id).unwrap();
    let mut b = DMatrix::<f64>::zeros(n, n);
    let mut p = DVector::<f64>::from_iterator(n, injections.iter().map(|x| x / grid.base_mva));
    for br in grid.branches.iter().filter(|b| b.status == Status::InService) {
        let (f, t) = (pos(br.from_bus), pos(br.to_bus));
        let s = 1.0 / (br.x * if br.tap == 0.0 { 1.0 } else { br.tap });
        b[(f, f)] += s;
        b[(t, t)] += s;
        b[(f, t)] -= s;
        b[(t, f)] -= s;
        p[f] += s * br.shift;
        p[t] -= s * br.shift;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let reduced = DMatrix::from_fn(n - 1, n - 1, |i, j| b[(keep[i], keep[j])]);
    let rhs = DVector::from_fn(n - 1, |i, _| p[keep[i]]);
    let solved = reduced.lu().solve(&rhs).unwrap();
    let mut theta = vec![0.0; n];
    for (i, &k) in keep.iter().enumerate() {
        theta[k] = solved[i];
    }
    theta
}

/// DC branch flows (p.u.) implied by `theta`; zero for out-of-service branches.
pub fn dc_flows(grid: &Grid, theta: &[f64]) -> Vec<f64> {
    let pos = |id| grid.buses.iter().position(|b| b.id == id).unwrap();
    grid.branches
        .iter()
        .map(|br| {
            if br.status != Status::InService {
                return 0.0;
            }
            let ratio = if br.tap == 0.0 { 1.0 } else { br.tap };
            (theta[pos(br.from_bus)] - theta[pos(br.to_bus)] - br.shift) / (br.x * ratio)
        })
        .collect()
}

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use super::config::{GenerationConfig, Mode, TopologyMode};
use super::dataset::{write_dataset, write_manifest, Dataset, ElementCounts, Manifest, FORMAT_VERSION};
use super::record::{BranchRecord, BusRecord, GenRecord, Runtimes, SampleRecord, SampleStatus, Summary};
use super::rng::{derive_scenario_rng, ADMITTANCE_STREAM, LOAD_STREAM, SCENARIO_COST_STREAM, TOPOLOGY_STREAM};
use super::PipelineError;
use crate::analysis::detect_violations;
use crate::grid::{parse_matpower, Grid, TopologyPerturbation};
use crate::opf::{solve_ac_opf, solve_dc_opf, OpfOptions, OpfProblem};
use crate::perturb::{
    calibrate_load_range, enumerate_topologies, generate_load_scenarios, perturb_admittance, perturb_costs,
    sample_topologies, LoadProfile, LoadRange, LoadScenario,
};
use crate::powerflow::{branch_loading, solve_ac_pf, solve_dc_pf, PfOptions, PfSolution, Setpoints};

/// Reported after each finished load scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub scenario: usize,
    pub completed: usize,
    pub total: usize,
}

/// Everything shared by all scenarios of a run.
struct Context<'a> {
    config: &'a GenerationConfig,
    grid: Grid,
    grid_sha256: String,
    profile: LoadProfile,
    range: LoadRange,
    loads: Vec<LoadScenario>,
    enumerated: Option<Vec<TopologyPerturbation>>,
}

fn read_input(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Input { path: path.display().to_string(), reason: e.to_string() })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl<'a> Context<'a> {
    fn prepare(config: &'a GenerationConfig) -> Result<Self, PipelineError> {
        let text = read_input(&config.grid_path)?;
        let grid = parse_matpower(&text)
            .map_err(|e| PipelineError::Input { path: config.grid_path.display().to_string(), reason: e.to_string() })?;
        let profile = match &config.profile_path {
            Some(p) => {
                let name = p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
                LoadProfile::parse(name, &read_input(p)?)?
            }
            None => LoadProfile::constant(),
        };
        let range = match config.load_upper {
            Some(u) => LoadRange::new(u, config.r)?,
            None => {
                let opts = OpfOptions { tol: config.solver.opf_tol, max_iter: config.solver.opf_max_iter };
                calibrate_load_range(&grid, config.r, config.solver.calibration_step, &opts)?
            }
        };
        log::info!("load range [{}, {}]", range.l, range.u);
        let loads = generate_load_scenarios(
            &grid,
            &profile,
            &range,
            config.n_load_scenarios,
            config.sigma_load,
            &mut derive_scenario_rng(config.seed, LOAD_STREAM, 0),
        );
        let enumerated = match config.topology_mode {
            TopologyMode::Enumerate => Some(enumerate_topologies(&grid, config.k, config.solver.enumeration_cap)?),
            TopologyMode::Sample => None,
        };
        Ok(Context { config, grid_sha256: hex(&Sha256::digest(text.as_bytes())), grid, profile, range, loads, enumerated })
    }

    fn topologies(&self, t: usize) -> Result<Vec<TopologyPerturbation>, PipelineError> {
        let per = self.config.topologies_per_scenario;
        Ok(match &self.enumerated {
            Some(list) => (0..per).map(|j| list[(t * per + j) % list.len()].clone()).collect(),
            None => sample_topologies(
                &self.grid,
                self.config.k,
                per,
                &mut derive_scenario_rng(self.config.seed, t as u64, TOPOLOGY_STREAM),
                self.config.solver.attempt_cap,
            )?,
        })
    }

    fn opf_options(&self) -> OpfOptions {
        OpfOptions { tol: self.config.solver.opf_tol, max_iter: self.config.solver.opf_max_iter }
    }

    /// Load and admittance perturbations of scenario `t`.
    fn scenario_grid(&self, t: usize) -> (Grid, String) {
        let loaded = self.loads[t].apply(&self.grid);
        let mut rng = derive_scenario_rng(self.config.seed, t as u64, ADMITTANCE_STREAM);
        let (grid, factors) = perturb_admittance(&loaded, self.config.sigma_admittance, &mut rng);
        let mut h = Sha256::new();
        for (fr, fx) in factors {
            h.update(fr.to_le_bytes());
            h.update(fx.to_le_bytes());
        }
        (grid, hex(&h.finalize()[..8]))
    }

    fn run_scenario(&self, t: usize) -> Result<Vec<SampleRecord>, PipelineError> {
        let (scenario_grid, hash) = self.scenario_grid(t);
        let topologies = self.topologies(t)?;
        let cost_mode = self.config.cost_mode;
        let label = |j: usize, topology: &TopologyPerturbation| Label {
            scenario_id: t,
            topology_id: j,
            topology: topology.clone(),
            admittance_hash: hash.clone(),
            cost_mode: cost_mode.name().to_string(),
        };
        match self.config.mode {
            Mode::Opf => Ok(topologies
                .iter()
                .enumerate()
                .map(|(j, topo)| {
                    let mut rng = derive_scenario_rng(self.config.seed, t as u64, j as u64);
                    let grid = perturb_costs(&scenario_grid.with_topology(topo), cost_mode, &mut rng);
                    let opf = solve_ac_opf(&OpfProblem::new(&grid), &self.opf_options());
                    let runtimes = Runtimes { ac: opf.state.runtime, ..Runtimes::default() };
                    self.record(label(j, topo), &grid, Some(opf.state), runtimes)
                })
                .collect()),
            Mode::Pf => {
                let mut rng = derive_scenario_rng(self.config.seed, t as u64, SCENARIO_COST_STREAM);
                let costed = perturb_costs(&scenario_grid, cost_mode, &mut rng);
                let base = solve_ac_opf(&OpfProblem::new(&costed), &self.opf_options());
                let index = costed.bus_index();
                let setpoints = Setpoints {
                    pg: base.state.pg.clone(),
                    qg: base.state.qg.clone(),
                    vm: costed.generators.iter().map(|g| base.state.vm[index[&g.bus]]).collect(),
                };
                let options = PfOptions {
                    tol: self.config.solver.pf_tol,
                    max_iter: self.config.solver.pf_max_iter,
                    warm_start: Some((base.state.vm.clone(), base.state.va.clone())),
                };
                Ok(topologies
                    .iter()
                    .enumerate()
                    .map(|(j, topo)| {
                        let grid = costed.with_topology(topo);
                        let mut runtimes = Runtimes { base_opf: base.state.runtime, ..Runtimes::default() };
                        let state = base.feasible.then(|| {
                            let pf = solve_ac_pf(&grid, &setpoints, &options);
                            runtimes.ac = pf.runtime;
                            pf
                        });
                        self.record(label(j, topo), &grid, state, runtimes)
                    })
                    .collect())
            }
        }
    }

    /// Assembles one sample: the AC state (absent when skipped), DC-PF on the
    /// recorded dispatch, DC-OPF on the same grid, and inline violation flags.
    fn record(&self, label: Label, grid: &Grid, state: Option<PfSolution>, mut runtimes: Runtimes) -> SampleRecord {
        let nb = grid.buses.len();
        let index = grid.bus_index();
        let demand = grid.bus_demand();
        let status = match &state {
            None => SampleStatus::Skipped,
            Some(s) if s.converged => SampleStatus::Converged,
            Some(_) => SampleStatus::NotConverged,
        };

        let dc_pf = state.as_ref().and_then(|s| {
            let mut inj: Vec<f64> = demand.iter().map(|d| -d.0).collect();
            for g in grid.in_service_generators() {
                inj[index[&g.bus]] += s.pg[g.id];
            }
            solve_dc_pf(grid, &inj).ok()
        });
        runtimes.dc_pf = dc_pf.as_ref().map_or(0.0, |d| d.runtime);
        let dc_opf = solve_dc_opf(grid);
        runtimes.dc_opf = match &dc_opf {
            Ok(d) => d.runtime,
            Err(crate::opf::OpfError::Infeasible { runtime, .. }) => *runtime,
        };
        let dc_opf = dc_opf.ok();

        let violations = state
            .as_ref()
            .filter(|s| s.converged)
            .map(|s| detect_violations(grid, s, self.config.solver.violation_tol));
        let nan_state = PfSolution {
            vm: vec![f64::NAN; nb],
            va: vec![f64::NAN; nb],
            pg: vec![f64::NAN; grid.generators.len()],
            qg: vec![f64::NAN; grid.generators.len()],
            branch_flows: vec![
                crate::powerflow::BranchFlow { p_from: f64::NAN, q_from: f64::NAN, p_to: f64::NAN, q_to: f64::NAN };
                grid.branches.len()
            ],
            converged: false,
            iterations: 0,
            runtime: 0.0,
            max_mismatch: f64::NAN,
            failure: None,
        };
        let s = state.as_ref().unwrap_or(&nan_state);
        let rates: Vec<f64> = grid.branches.iter().map(|b| b.rate_a).collect();
        let loading = branch_loading(&s.branch_flows, &rates);
        let objective = if state.is_some() {
            grid.in_service_generators().map(|g| g.cost.eval(s.pg[g.id])).sum()
        } else {
            f64::NAN
        };
        let flag = |hit: bool| violations.as_ref().map(|_| hit);

        SampleRecord {
            scenario_id: label.scenario_id,
            topology_id: label.topology_id,
            topology: label.topology,
            admittance_hash: label.admittance_hash,
            cost_mode: label.cost_mode,
            status,
            failure: match (&state, status) {
                (None, _) => Some("base_opf_failed".to_string()),
                (Some(s), SampleStatus::NotConverged) => s.failure.map(|f| f.as_str().to_string()),
                _ => None,
            },
            iterations: s.iterations,
            max_mismatch: s.max_mismatch,
            objective,
            dc_pf_solved: dc_pf.is_some(),
            dc_opf_objective: dc_opf.as_ref().map(|d| d.objective),
            slack_pg_violation: violations.as_ref().map(|v| v.slack_pg_violation),
            buses: grid
                .buses
                .iter()
                .enumerate()
                .map(|(i, b)| BusRecord {
                    bus_id: b.id,
                    pd: demand[i].0,
                    qd: demand[i].1,
                    vm: s.vm[i],
                    va: s.va[i],
                    va_dc: dc_pf.as_ref().map_or(f64::NAN, |d| d.va[i]),
                    vm_violation: flag(violations.as_ref().is_some_and(|v| v.vm_violations.contains(&b.id))),
                })
                .collect(),
            gens: grid
                .generators
                .iter()
                .map(|g| GenRecord {
                    gen_id: g.id,
                    bus_id: g.bus,
                    in_service: g.status.is_on(),
                    pg: s.pg[g.id],
                    qg: s.qg[g.id],
                    cost: g.cost,
                    pg_dc: dc_opf.as_ref().map_or(f64::NAN, |d| d.pg[g.id]),
                    qg_violation: flag(violations.as_ref().is_some_and(|v| v.qg_violations.contains(&g.id))),
                })
                .collect(),
            branches: grid
                .branches
                .iter()
                .map(|br| BranchRecord {
                    branch_id: br.id,
                    from_bus: br.from_bus,
                    to_bus: br.to_bus,
                    in_service: br.status.is_on(),
                    r: br.r,
                    x: br.x,
                    flow: s.branch_flows[br.id],
                    loading: loading[br.id],
                    pf_dc: dc_pf.as_ref().map_or(f64::NAN, |d| d.flows[br.id]),
                    overload: flag(violations.as_ref().is_some_and(|v| v.branch_overloads.contains(&br.id))),
                    angle_violation: flag(violations.as_ref().is_some_and(|v| v.angle_violations.contains(&br.id))),
                })
                .collect(),
            runtimes,
        }
    }

    fn manifest(&self, summary: Summary) -> Manifest {
        let c = self.config;
        Manifest {
            format_version: FORMAT_VERSION,
            complete: false,
            mode: match c.mode {
                Mode::Pf => "pf".into(),
                Mode::Opf => "opf".into(),
            },
            grid_file: "grid.m".into(),
            grid_sha256: self.grid_sha256.clone(),
            seed: c.seed,
            config: c.echo(),
            load_range: [self.range.l, self.range.u],
            profile: self.profile.name.clone(),
            elements: ElementCounts {
                buses: self.grid.buses.len(),
                generators: self.grid.generators.len(),
                branches: self.grid.branches.len(),
                loads: self.grid.loads.len(),
            },
            n_load_scenarios: c.n_load_scenarios,
            topologies_per_scenario: c.topologies_per_scenario,
            summary,
        }
    }
}

struct Label {
    scenario_id: usize,
    topology_id: usize,
    topology: TopologyPerturbation,
    admittance_hash: String,
    cost_mode: String,
}

/// Runs `task` for every scenario on `workers` threads, keeping results in
/// scenario order.
fn fan_out<T: Send>(
    n: usize,
    workers: usize,
    task: impl Fn(usize) -> Result<T, PipelineError> + Sync,
    progress: &(dyn Fn(&Progress) + Sync),
) -> Result<Vec<T>, PipelineError> {
    let completed = AtomicUsize::new(0);
    let run = |t: usize| {
        let out = task(t);
        let done = completed.fetch_add(1, Ordering::SeqCst) + 1;
        progress(&Progress { scenario: t, completed: done, total: n });
        out
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| PipelineError::Input { path: "thread pool".into(), reason: e.to_string() })?;
            return pool.install(|| (0..n).into_par_iter().map(run).collect());
        }
    }
    #[cfg(not(feature = "parallel"))]
    if workers > 1 {
        log::warn!("built without the parallel feature; running on one thread");
    }
    (0..n).map(run).collect()
}

fn execute(
    config: &GenerationConfig,
    workers: usize,
    progress: &(dyn Fn(&Progress) + Sync),
    before_solve: impl FnOnce(&Manifest) -> Result<(), PipelineError>,
) -> Result<Dataset, PipelineError> {
    let ctx = Context::prepare(config)?;
    before_solve(&ctx.manifest(Summary::of(&[])))?;
    let per_scenario = fan_out(config.n_load_scenarios, workers.max(1), |t| ctx.run_scenario(t), progress)?;
    let records: Vec<SampleRecord> = per_scenario.into_iter().flatten().collect();
    let summary = Summary::of(&records);
    Ok(Dataset { manifest: ctx.manifest(summary), grid: ctx.grid, records })
}

fn expect_mode(config: &GenerationConfig, mode: Mode) -> Result<(), PipelineError> {
    if config.mode == mode {
        Ok(())
    } else {
        Err(PipelineError::WrongMode { expected: mode, actual: config.mode })
    }
}

/// OPF mode: every (scenario, topology) pair gets its own cost perturbation
/// and AC-OPF.
pub fn run_opf_mode(
    config: &GenerationConfig,
    workers: usize,
    progress: &(dyn Fn(&Progress) + Sync),
) -> Result<Dataset, PipelineError> {
    expect_mode(config, Mode::Opf)?;
    execute(config, workers, progress, |_| Ok(()))
}

/// PF mode: one AC-OPF per load scenario on the base topology fixes the
/// setpoints; each topology is then solved by AC-PF without re-dispatch.
pub fn run_pf_mode(
    config: &GenerationConfig,
    workers: usize,
    progress: &(dyn Fn(&Progress) + Sync),
) -> Result<Dataset, PipelineError> {
    expect_mode(config, Mode::Pf)?;
    execute(config, workers, progress, |_| Ok(()))
}

/// Runs the configured mode and writes the dataset to `config.output_dir`.
/// An incomplete manifest is on disk from before the first solve until the
/// last data file is written.
pub fn generate(
    config: &GenerationConfig,
    workers: usize,
    progress: &(dyn Fn(&Progress) + Sync),
) -> Result<Dataset, PipelineError> {
    let dir = &config.output_dir;
    let mut dataset = execute(config, workers, progress, |manifest| {
        std::fs::create_dir_all(dir)
            .map_err(|e| PipelineError::Input { path: dir.display().to_string(), reason: e.to_string() })?;
        write_manifest(dir, manifest)?;
        Ok(())
    })?;
    write_dataset(&dataset, dir)?;
    dataset.manifest.complete = true;
    Ok(dataset)
}

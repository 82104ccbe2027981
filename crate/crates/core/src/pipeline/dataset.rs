//! Dataset directory layout:
//!
//! | file          | one row per                 |
//! |---------------|-----------------------------|
//! | `sample.csv`  | sample                      |
//! | `bus.csv`     | sample × bus                |
//! | `gen.csv`     | sample × generator          |
//! | `branch.csv`  | sample × branch             |
//! | `timing.csv`  | sample (solver wall times)  |
//! | `grid.m`      | base grid, MATPOWER format  |
//! | `manifest.json` | run description and totals |
//!
//! Rows appear in `(scenario_id, topology_id)` order. Reals are written in
//! shortest round-trip form; empty cells mean "not applicable".

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::record::{BranchRecord, BusRecord, GenRecord, Runtimes, SampleRecord, SampleStatus, Summary};
use crate::grid::{parse_matpower, serialize_matpower, CostPoly, Grid, TopologyPerturbation};
use crate::powerflow::BranchFlow;

pub const FORMAT_VERSION: u32 = 1;

pub const SAMPLE_HEADER: &str = "scenario_id,topology_id,status,failure,iterations,max_mismatch,objective,\
disabled_branches,disabled_generators,admittance_hash,cost_mode,dc_pf_solved,dc_opf_objective,\
n_overloads,n_vm_violations,n_angle_violations,n_qg_violations,slack_pg_violation,any_violation";
pub const BUS_HEADER: &str = "scenario_id,topology_id,bus_id,Pd,Qd,Vm,Va,Va_dc,vm_violation";
pub const GEN_HEADER: &str = "scenario_id,topology_id,gen_id,bus_id,status,Pg,Qg,c2,c1,c0,Pg_dc,qg_violation";
pub const BRANCH_HEADER: &str =
    "scenario_id,topology_id,branch_id,from_bus,to_bus,status,r,x,Pf,Qf,Pt,Qt,loading,Pf_dc,overload,angle_violation";
pub const TIMING_HEADER: &str = "scenario_id,topology_id,ac_seconds,base_opf_seconds,dc_pf_seconds,dc_opf_seconds";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("I/O failure: {0}")]
    Io(String),
    #[error("corrupt dataset: {0}")]
    Corrupt(String),
}

fn io(path: &Path, e: std::io::Error) -> DatasetError {
    DatasetError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementCounts {
    pub buses: usize,
    pub generators: usize,
    pub branches: usize,
    pub loads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// False until every data file has been written.
    pub complete: bool,
    pub mode: String,
    pub grid_file: String,
    pub grid_sha256: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub load_range: [f64; 2],
    pub profile: String,
    pub elements: ElementCounts,
    pub n_load_scenarios: usize,
    pub topologies_per_scenario: usize,
    pub summary: Summary,
}

impl Manifest {
    /// Solver tolerance of the AC solve that produced the recorded states.
    pub fn ac_tolerance(&self) -> f64 {
        let key = if self.mode == "opf" { "opf_tol" } else { "pf_tol" };
        self.config["solver"][key].as_f64().unwrap_or(1e-6)
    }

    pub fn violation_tolerance(&self) -> f64 {
        self.config["solver"]["violation_tol"].as_f64().unwrap_or(1e-5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    /// Base grid before any perturbation.
    pub grid: Grid,
    pub records: Vec<SampleRecord>,
}

fn opt_bool(v: Option<bool>) -> &'static str {
    match v {
        None => "",
        Some(false) => "0",
        Some(true) => "1",
    }
}

fn join(ids: &std::collections::BTreeSet<usize>) -> String {
    ids.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), DatasetError> {
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| DatasetError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| io(&path, e))
}

/// Writes every file of the layout. The manifest is first written with
/// `complete: false` and rewritten as complete after the data files.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut manifest = dataset.manifest.clone();
    manifest.complete = false;
    write_manifest(dir, &manifest)?;

    let grid_path = dir.join(&manifest.grid_file);
    fs::write(&grid_path, serialize_matpower(&dataset.grid)).map_err(|e| io(&grid_path, e))?;

    let records = &dataset.records;
    let mut sample = String::from(SAMPLE_HEADER) + "\n";
    let mut bus = String::from(BUS_HEADER) + "\n";
    let mut gen = String::from(GEN_HEADER) + "\n";
    let mut branch = String::from(BRANCH_HEADER) + "\n";
    let mut timing = String::from(TIMING_HEADER) + "\n";
    for r in records {
        let key = format!("{},{}", r.scenario_id, r.topology_id);
        let count = |flags: &mut dyn Iterator<Item = Option<bool>>| -> String {
            if r.converged() {
                flags.filter(|f| *f == Some(true)).count().to_string()
            } else {
                String::new()
            }
        };
        let overloads = count(&mut r.branches.iter().map(|b| b.overload));
        let vm = count(&mut r.buses.iter().map(|b| b.vm_violation));
        let angle = count(&mut r.branches.iter().map(|b| b.angle_violation));
        let qg = count(&mut r.gens.iter().map(|g| g.qg_violation));
        let any = if r.converged() { opt_bool(Some(r.violation_count() > 0)) } else { "" };
        let _ = writeln!(
            sample,
            "{key},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.status.as_str(),
            r.failure.as_deref().unwrap_or(""),
            r.iterations,
            r.max_mismatch,
            r.objective,
            join(&r.topology.disabled_branches),
            join(&r.topology.disabled_generators),
            r.admittance_hash,
            r.cost_mode,
            u8::from(r.dc_pf_solved),
            r.dc_opf_objective.map(|v| v.to_string()).unwrap_or_default(),
            overloads,
            vm,
            angle,
            qg,
            opt_bool(r.slack_pg_violation),
            any,
        );
        for b in &r.buses {
            let _ = writeln!(
                bus,
                "{key},{},{},{},{},{},{},{}",
                b.bus_id,
                b.pd,
                b.qd,
                b.vm,
                b.va,
                b.va_dc,
                opt_bool(b.vm_violation)
            );
        }
        for g in &r.gens {
            let _ = writeln!(
                gen,
                "{key},{},{},{},{},{},{},{},{},{},{}",
                g.gen_id,
                g.bus_id,
                u8::from(g.in_service),
                g.pg,
                g.qg,
                g.cost.c2,
                g.cost.c1,
                g.cost.c0,
                g.pg_dc,
                opt_bool(g.qg_violation)
            );
        }
        for b in &r.branches {
            let _ = writeln!(
                branch,
                "{key},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                b.branch_id,
                b.from_bus,
                b.to_bus,
                u8::from(b.in_service),
                b.r,
                b.x,
                b.flow.p_from,
                b.flow.q_from,
                b.flow.p_to,
                b.flow.q_to,
                b.loading,
                b.pf_dc,
                opt_bool(b.overload),
                opt_bool(b.angle_violation)
            );
        }
        let t = &r.runtimes;
        let _ = writeln!(timing, "{key},{},{},{},{}", t.ac, t.base_opf, t.dc_pf, t.dc_opf);
    }
    for (name, body) in
        [("sample.csv", sample), ("bus.csv", bus), ("gen.csv", gen), ("branch.csv", branch), ("timing.csv", timing)]
    {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| io(&path, e))?;
    }

    manifest.complete = true;
    write_manifest(dir, &manifest)
}

/// A parsed CSV file with named columns.
struct Table {
    name: &'static str,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(dir: &Path, name: &'static str, header: &str) -> Result<Self, DatasetError> {
        let path = dir.join(name);
        let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        let mut lines = text.lines();
        let first = lines.next().ok_or_else(|| DatasetError::Corrupt(format!("{name} is empty")))?;
        if first != header {
            return Err(DatasetError::Corrupt(format!("{name}: unexpected header '{first}'")));
        }
        let columns: Vec<String> = first.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells: Vec<String> = line.split(',').map(str::to_string).collect();
            if cells.len() != columns.len() {
                return Err(DatasetError::Corrupt(format!(
                    "{name} line {}: {} cells, expected {}",
                    i + 2,
                    cells.len(),
                    columns.len()
                )));
            }
            rows.push(cells);
        }
        Ok(Table { name, columns, rows })
    }

    fn col(&self, name: &str) -> usize {
        self.columns.iter().position(|c| c == name).expect("column exists in the fixed header")
    }
}

/// Typed access to one row.
struct Row<'a> {
    table: &'a Table,
    index: usize,
}

impl Row<'_> {
    fn raw(&self, col: &str) -> &str {
        &self.table.rows[self.index][self.table.col(col)]
    }

    fn corrupt(&self, col: &str, what: &str) -> DatasetError {
        DatasetError::Corrupt(format!("{} row {} column {col}: {what}", self.table.name, self.index + 1))
    }

    fn get<T: FromStr>(&self, col: &str) -> Result<T, DatasetError> {
        let s = self.raw(col);
        s.parse().map_err(|_| self.corrupt(col, &format!("cannot parse '{s}'")))
    }

    fn opt<T: FromStr>(&self, col: &str) -> Result<Option<T>, DatasetError> {
        if self.raw(col).is_empty() {
            Ok(None)
        } else {
            self.get(col).map(Some)
        }
    }

    fn flag(&self, col: &str) -> Result<bool, DatasetError> {
        match self.raw(col) {
            "0" => Ok(false),
            "1" => Ok(true),
            s => Err(self.corrupt(col, &format!("'{s}' is not 0 or 1"))),
        }
    }

    fn opt_flag(&self, col: &str) -> Result<Option<bool>, DatasetError> {
        if self.raw(col).is_empty() {
            Ok(None)
        } else {
            self.flag(col).map(Some)
        }
    }

    fn ids(&self, col: &str) -> Result<Vec<usize>, DatasetError> {
        let s = self.raw(col);
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(';').map(|p| p.parse().map_err(|_| self.corrupt(col, &format!("bad id list '{s}'")))).collect()
    }

    fn key(&self) -> Result<(usize, usize), DatasetError> {
        Ok((self.get("scenario_id")?, self.get("topology_id")?))
    }
}

/// Rows `[start, start + n)` of `table` must all belong to sample `key`.
fn block(table: &Table, start: usize, n: usize, key: (usize, usize)) -> Result<Vec<Row<'_>>, DatasetError> {
    if start + n > table.rows.len() {
        return Err(DatasetError::Corrupt(format!("{} ends before sample {key:?} is complete", table.name)));
    }
    (start..start + n)
        .map(|index| {
            let row = Row { table, index };
            if row.key()? != key {
                return Err(DatasetError::Corrupt(format!("{} row {}: expected sample {key:?}", table.name, index + 1)));
            }
            Ok(row)
        })
        .collect()
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DatasetError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Corrupt(format!("manifest.json: {e}")))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let manifest = read_manifest(dir)?;
    let grid_path = dir.join(&manifest.grid_file);
    let grid_text = fs::read_to_string(&grid_path).map_err(|e| io(&grid_path, e))?;
    let grid = parse_matpower(&grid_text).map_err(|e| DatasetError::Corrupt(format!("{}: {e}", manifest.grid_file)))?;
    let (nb, ng, nl) = (grid.buses.len(), grid.generators.len(), grid.branches.len());

    let samples = Table::read(dir, "sample.csv", SAMPLE_HEADER)?;
    let buses = Table::read(dir, "bus.csv", BUS_HEADER)?;
    let gens = Table::read(dir, "gen.csv", GEN_HEADER)?;
    let branches = Table::read(dir, "branch.csv", BRANCH_HEADER)?;
    let timing = Table::read(dir, "timing.csv", TIMING_HEADER)?;
    let n = samples.rows.len();
    for (t, per) in [(&buses, nb), (&gens, ng), (&branches, nl), (&timing, 1)] {
        if t.rows.len() != n * per {
            return Err(DatasetError::Corrupt(format!("{} has {} rows, expected {}", t.name, t.rows.len(), n * per)));
        }
    }

    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let s = Row { table: &samples, index: i };
        let key = s.key()?;
        let status_text = s.raw("status");
        let status = SampleStatus::parse(status_text).ok_or_else(|| s.corrupt("status", status_text))?;
        let bus_rows = block(&buses, i * nb, nb, key)?
            .iter()
            .map(|b| {
                Ok(BusRecord {
                    bus_id: b.get("bus_id")?,
                    pd: b.get("Pd")?,
                    qd: b.get("Qd")?,
                    vm: b.get("Vm")?,
                    va: b.get("Va")?,
                    va_dc: b.get("Va_dc")?,
                    vm_violation: b.opt_flag("vm_violation")?,
                })
            })
            .collect::<Result<Vec<_>, DatasetError>>()?;
        let gen_rows = block(&gens, i * ng, ng, key)?
            .iter()
            .map(|g| {
                Ok(GenRecord {
                    gen_id: g.get("gen_id")?,
                    bus_id: g.get("bus_id")?,
                    in_service: g.flag("status")?,
                    pg: g.get("Pg")?,
                    qg: g.get("Qg")?,
                    cost: CostPoly::new(g.get("c2")?, g.get("c1")?, g.get("c0")?),
                    pg_dc: g.get("Pg_dc")?,
                    qg_violation: g.opt_flag("qg_violation")?,
                })
            })
            .collect::<Result<Vec<_>, DatasetError>>()?;
        let branch_rows = block(&branches, i * nl, nl, key)?
            .iter()
            .map(|b| {
                Ok(BranchRecord {
                    branch_id: b.get("branch_id")?,
                    from_bus: b.get("from_bus")?,
                    to_bus: b.get("to_bus")?,
                    in_service: b.flag("status")?,
                    r: b.get("r")?,
                    x: b.get("x")?,
                    flow: BranchFlow { p_from: b.get("Pf")?, q_from: b.get("Qf")?, p_to: b.get("Pt")?, q_to: b.get("Qt")? },
                    loading: b.get("loading")?,
                    pf_dc: b.get("Pf_dc")?,
                    overload: b.opt_flag("overload")?,
                    angle_violation: b.opt_flag("angle_violation")?,
                })
            })
            .collect::<Result<Vec<_>, DatasetError>>()?;
        let t = &block(&timing, i, 1, key)?[0];
        let failure = s.raw("failure");
        records.push(SampleRecord {
            scenario_id: key.0,
            topology_id: key.1,
            topology: TopologyPerturbation::new(s.ids("disabled_branches")?, s.ids("disabled_generators")?),
            admittance_hash: s.raw("admittance_hash").to_string(),
            cost_mode: s.raw("cost_mode").to_string(),
            status,
            failure: (!failure.is_empty()).then(|| failure.to_string()),
            iterations: s.get("iterations")?,
            max_mismatch: s.get("max_mismatch")?,
            objective: s.get("objective")?,
            dc_pf_solved: s.flag("dc_pf_solved")?,
            dc_opf_objective: s.opt("dc_opf_objective")?,
            slack_pg_violation: s.opt_flag("slack_pg_violation")?,
            buses: bus_rows,
            gens: gen_rows,
            branches: branch_rows,
            runtimes: Runtimes {
                ac: t.get("ac_seconds")?,
                base_opf: t.get("base_opf_seconds")?,
                dc_pf: t.get("dc_pf_seconds")?,
                dc_opf: t.get("dc_opf_seconds")?,
            },
        });
    }
    Ok(Dataset { manifest, grid, records })
}

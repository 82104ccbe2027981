use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_yaml::{Mapping, Value};
use thiserror::Error;

use crate::perturb::{CostMode, DEFAULT_ATTEMPT_CAP, DEFAULT_ENUMERATION_CAP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("config is not valid YAML: {0}")]
    Syntax(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Schema(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pf,
    Opf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyMode {
    Enumerate,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSettings {
    pub pf_tol: f64,
    pub pf_max_iter: usize,
    pub opf_tol: f64,
    pub opf_max_iter: usize,
    pub violation_tol: f64,
    pub calibration_step: f64,
    pub attempt_cap: usize,
    pub enumeration_cap: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            pf_tol: 1e-8,
            pf_max_iter: 30,
            opf_tol: 1e-6,
            opf_max_iter: 200,
            violation_tol: 1e-5,
            calibration_step: 0.1,
            attempt_cap: DEFAULT_ATTEMPT_CAP,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub grid_path: PathBuf,
    pub mode: Mode,
    pub n_load_scenarios: usize,
    pub topologies_per_scenario: usize,
    pub k: usize,
    pub topology_mode: TopologyMode,
    pub sigma_load: f64,
    pub r: f64,
    /// Skips calibration and uses this upper load multiplier.
    pub load_upper: Option<f64>,
    pub sigma_admittance: f64,
    pub cost_mode: CostMode,
    /// Constant profile when absent.
    pub profile_path: Option<PathBuf>,
    pub seed: u64,
    /// Worker threads; `None` leaves the choice to the caller.
    pub workers: Option<usize>,
    pub output_dir: PathBuf,
    pub solver: SolverSettings,
}

impl GenerationConfig {
    /// Defaults for everything except the three required paths/mode.
    pub fn new(grid_path: impl Into<PathBuf>, mode: Mode, output_dir: impl Into<PathBuf>) -> Self {
        GenerationConfig {
            grid_path: grid_path.into(),
            mode,
            n_load_scenarios: 1,
            topologies_per_scenario: 1,
            k: 0,
            topology_mode: TopologyMode::Sample,
            sigma_load: 0.0,
            r: 0.4,
            load_upper: None,
            sigma_admittance: 0.0,
            cost_mode: CostMode::None,
            profile_path: None,
            seed: 0,
            workers: None,
            output_dir: output_dir.into(),
            solver: SolverSettings::default(),
        }
    }

    /// Reads a YAML config; relative paths resolve against the file's
    /// directory. `overrides` are `key=value` pairs (dotted keys reach into
    /// `solver`) applied before validation.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Unreadable { path: path.display().to_string(), reason: e.to_string() })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_yaml(&text, &base, overrides)
    }

    pub fn from_yaml(text: &str, base_dir: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut root: Value = serde_yaml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        if root.is_null() {
            root = Value::Mapping(Mapping::new());
        }
        let Value::Mapping(mut map) = root else {
            return Err(ConfigError::Schema(vec!["top level must be a mapping of keys to values".into()]));
        };
        let mut errors = Vec::new();
        for item in overrides {
            if let Err(e) = apply_override(&mut map, item) {
                errors.push(e);
            }
        }
        let mut fields = Fields { map, errors, prefix: "" };
        let config = fields.build(base_dir);
        if fields.errors.is_empty() {
            Ok(config)
        } else {
            Err(ConfigError::Schema(fields.errors))
        }
    }

    /// Config echo for the manifest: everything that shapes the data, with
    /// input files reduced to their names and run-local settings (worker
    /// count, output location) left out.
    pub fn echo(&self) -> serde_json::Value {
        let file_name = |p: &Path| p.file_name().map(|f| f.to_string_lossy().into_owned());
        let (cost_scale_lo, cost_scale_hi) = match self.cost_mode {
            CostMode::Scale { lo, hi } => (Some(lo), Some(hi)),
            _ => (None, None),
        };
        serde_json::json!({
            "grid_path": file_name(&self.grid_path),
            "mode": self.mode,
            "n_load_scenarios": self.n_load_scenarios,
            "topologies_per_scenario": self.topologies_per_scenario,
            "k": self.k,
            "topology_mode": self.topology_mode,
            "sigma_load": self.sigma_load,
            "r": self.r,
            "load_upper": self.load_upper,
            "sigma_admittance": self.sigma_admittance,
            "cost_mode": self.cost_mode.name(),
            "cost_scale_lo": cost_scale_lo,
            "cost_scale_hi": cost_scale_hi,
            "profile_path": self.profile_path.as_deref().and_then(file_name),
            "seed": self.seed,
            "solver": self.solver,
        })
    }
}

fn apply_override(map: &mut Mapping, item: &str) -> Result<(), String> {
    let Some((key, raw)) = item.split_once('=') else {
        return Err(format!("override '{item}' is not of the form key=value"));
    };
    let value: Value = serde_yaml::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts.pop().unwrap_or_default();
    let mut target = map;
    for part in parts {
        let entry = target
            .entry(Value::String(part.to_string()))
            .or_insert_with(|| Value::Mapping(Mapping::new()));
        target = entry.as_mapping_mut().ok_or_else(|| format!("override '{key}': '{part}' is not a section"))?;
    }
    target.insert(Value::String(last.to_string()), value);
    Ok(())
}

/// Pulls typed fields out of a mapping, recording every problem instead of
/// stopping at the first.
struct Fields {
    map: Mapping,
    errors: Vec<String>,
    prefix: &'static str,
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key)
    }

    fn bad(&mut self, key: &str, what: &str) {
        self.errors.push(format!("{}{key}: {what}", self.prefix));
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.take(key)? {
            Value::String(s) => Some(s),
            other => {
                self.bad(key, &format!("expected a string, got {}", describe(&other)));
                None
            }
        }
    }

    fn path(&mut self, key: &str, base: &Path) -> Option<PathBuf> {
        self.string(key).map(|s| {
            let p = PathBuf::from(s);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        })
    }

    fn float(&mut self, key: &str, default: f64, check: impl Fn(f64) -> bool, rule: &str) -> f64 {
        match self.take(key) {
            None => default,
            Some(v) => match v.as_f64() {
                Some(x) if check(x) => x,
                Some(x) => {
                    self.bad(key, &format!("{x} violates {rule}"));
                    default
                }
                None => {
                    self.bad(key, &format!("expected a number, got {}", describe(&v)));
                    default
                }
            },
        }
    }

    fn count(&mut self, key: &str, default: usize, min: usize) -> usize {
        match self.take(key) {
            None => default,
            Some(v) => match v.as_u64() {
                Some(x) if x as usize >= min => x as usize,
                _ => {
                    self.bad(key, &format!("expected an integer >= {min}, got {}", describe(&v)));
                    default
                }
            },
        }
    }

    fn choice<T: Copy>(&mut self, key: &str, options: &[(&str, T)]) -> Option<T> {
        let s = self.string(key)?;
        let found = options.iter().find(|(name, _)| name.eq_ignore_ascii_case(&s)).map(|&(_, v)| v);
        if found.is_none() {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            self.bad(key, &format!("'{s}' is not one of {}", names.join(", ")));
        }
        found
    }

    fn build(&mut self, base: &Path) -> GenerationConfig {
        let grid_path = self.path("grid_path", base);
        let output_dir = self.path("output_dir", base);
        let mode = self.choice("mode", &[("pf", Mode::Pf), ("opf", Mode::Opf)]);
        for (key, missing) in [("grid_path", grid_path.is_none()), ("output_dir", output_dir.is_none()), ("mode", mode.is_none())] {
            if missing && !self.errors.iter().any(|e| e.starts_with(key)) {
                self.bad(key, "required");
            }
        }
        let mut c = GenerationConfig::new(grid_path.unwrap_or_default(), mode.unwrap_or(Mode::Pf), output_dir.unwrap_or_default());
        c.n_load_scenarios = self.count("n_load_scenarios", c.n_load_scenarios, 1);
        c.topologies_per_scenario = self.count("topologies_per_scenario", c.topologies_per_scenario, 1);
        c.k = self.count("k", c.k, 0);
        if let Some(m) =
            self.choice("topology_mode", &[("enumerate", TopologyMode::Enumerate), ("sample", TopologyMode::Sample)])
        {
            c.topology_mode = m;
        }
        c.sigma_load = self.float("sigma_load", c.sigma_load, |x| (0.0..1.0).contains(&x), "0 <= sigma_load < 1");
        c.r = self.float("r", c.r, |x| (0.0..1.0).contains(&x), "0 <= r < 1");
        if self.map.contains_key("load_upper") {
            c.load_upper = Some(self.float("load_upper", 1.0, |x| x > 0.0 && x.is_finite(), "load_upper > 0"));
        }
        c.sigma_admittance =
            self.float("sigma_admittance", c.sigma_admittance, |x| x >= 0.0 && x.is_finite(), "sigma_admittance >= 0");
        let cost = self.choice("cost_mode", &[("none", 0), ("permute", 1), ("scale", 2)]);
        let has_lo = self.map.contains_key("cost_scale_lo");
        let has_hi = self.map.contains_key("cost_scale_hi");
        let lo = self.float("cost_scale_lo", 1.0, |x| x > 0.0 && x.is_finite(), "cost_scale_lo > 0");
        let hi = self.float("cost_scale_hi", 1.0, |x| x > 0.0 && x.is_finite(), "cost_scale_hi > 0");
        c.cost_mode = match cost {
            Some(1) => CostMode::Permute,
            Some(2) => {
                if !(has_lo && has_hi) {
                    self.bad("cost_mode", "scale needs cost_scale_lo and cost_scale_hi");
                } else if lo > hi {
                    self.bad("cost_scale_lo", "must not exceed cost_scale_hi");
                }
                CostMode::Scale { lo, hi }
            }
            _ => CostMode::None,
        };
        c.profile_path = self.path("profile_path", base);
        if let Some(v) = self.take("seed") {
            match v.as_u64() {
                Some(s) => c.seed = s,
                None => self.bad("seed", &format!("expected a nonnegative integer, got {}", describe(&v))),
            }
        }
        if self.map.contains_key("workers") {
            c.workers = Some(self.count("workers", 1, 1));
        }
        match self.take("solver") {
            None => {}
            Some(Value::Mapping(m)) => {
                let mut inner = Fields { map: m, errors: Vec::new(), prefix: "solver." };
                c.solver = inner.solver();
                self.errors.append(&mut inner.errors);
            }
            Some(other) => self.bad("solver", &format!("expected a mapping, got {}", describe(&other))),
        }
        let leftover: Vec<String> = self.map.keys().map(|k| describe_key(k)).collect();
        for key in leftover {
            self.bad(&key, "unknown key");
        }
        c
    }

    fn solver(&mut self) -> SolverSettings {
        let d = SolverSettings::default();
        let positive = |x: f64| x > 0.0 && x.is_finite();
        let s = SolverSettings {
            pf_tol: self.float("pf_tol", d.pf_tol, positive, "pf_tol > 0"),
            pf_max_iter: self.count("pf_max_iter", d.pf_max_iter, 1),
            opf_tol: self.float("opf_tol", d.opf_tol, positive, "opf_tol > 0"),
            opf_max_iter: self.count("opf_max_iter", d.opf_max_iter, 1),
            violation_tol: self.float("violation_tol", d.violation_tol, |x| x >= 0.0, "violation_tol >= 0"),
            calibration_step: self.float("calibration_step", d.calibration_step, positive, "calibration_step > 0"),
            attempt_cap: self.count("attempt_cap", d.attempt_cap, 1),
            enumeration_cap: self.count("enumeration_cap", d.enumeration_cap, 1),
        };
        let leftover: Vec<String> = self.map.keys().map(|k| describe_key(k)).collect();
        for key in leftover {
            self.bad(&key, "unknown key");
        }
        s
    }
}

fn describe(v: &Value) -> String {
    match v {
        Value::Null => "nothing".into(),
        Value::Bool(b) => format!("boolean {b}"),
        Value::Number(n) => format!("number {n}"),
        Value::String(s) => format!("'{s}'"),
        Value::Sequence(_) => "a list".into(),
        Value::Mapping(_) => "a mapping".into(),
        Value::Tagged(_) => "a tagged value".into(),
    }
}

fn describe_key(k: &Value) -> String {
    match k {
        Value::String(s) => s.clone(),
        other => describe(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "grid_path: case.m\nmode: opf\noutput_dir: out\n";

    #[test]
    fn defaults_and_relative_paths() {
        let c = GenerationConfig::from_yaml(MINIMAL, Path::new("/cfg"), &[]).unwrap();
        assert_eq!(c.grid_path, PathBuf::from("/cfg/case.m"));
        assert_eq!(c.output_dir, PathBuf::from("/cfg/out"));
        assert_eq!(c.mode, Mode::Opf);
        assert_eq!(c.r, 0.4);
        assert_eq!(c.solver, SolverSettings::default());
        assert_eq!(c.workers, None);
    }

    #[test]
    fn full_config_with_overrides() {
        let text = format!(
            "{MINIMAL}n_load_scenarios: 20\ntopologies_per_scenario: 3\nk: 1\ntopology_mode: enumerate\n\
             sigma_load: 0.2\ncost_mode: scale\ncost_scale_lo: 0.5\ncost_scale_hi: 2\nseed: 3\n\
             solver:\n  pf_tol: 1.0e-9\n"
        );
        let c = GenerationConfig::from_yaml(&text, Path::new("/"), &["seed=7".into(), "solver.opf_tol=1e-7".into()])
            .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.n_load_scenarios, 20);
        assert_eq!(c.topology_mode, TopologyMode::Enumerate);
        assert_eq!(c.cost_mode, CostMode::Scale { lo: 0.5, hi: 2.0 });
        assert_eq!(c.solver.pf_tol, 1e-9);
        assert_eq!(c.solver.opf_tol, 1e-7);
    }

    #[test]
    fn every_bad_key_is_reported() {
        let text = "mode: dc\nn_load_scenarios: 0\nsigma_load: 1.5\nbogus: 1\nsolver:\n  pf_tol: -1\n  nope: 2\n";
        let Err(ConfigError::Schema(errors)) = GenerationConfig::from_yaml(text, Path::new("."), &[]) else {
            panic!("expected schema errors");
        };
        for key in ["grid_path", "output_dir", "mode", "n_load_scenarios", "sigma_load", "bogus", "solver.pf_tol", "solver.nope"] {
            assert!(errors.iter().any(|e| e.starts_with(key)), "{key} missing from {errors:?}");
        }
    }

    #[test]
    fn echo_omits_run_local_settings() {
        let a = GenerationConfig::from_yaml(MINIMAL, Path::new("/a"), &["workers=1".into()]).unwrap();
        let b = GenerationConfig::from_yaml(MINIMAL, Path::new("/b"), &["workers=8".into()]).unwrap();
        assert_eq!(a.echo(), b.echo());
    }
}

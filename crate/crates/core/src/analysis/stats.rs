use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::entropy::{compute_entropy, Feature, FeatureEntropy, DEFAULT_BINS};
use super::validate::{balance_residuals, rebuild_grid};
use super::AnalysisError;
use crate::pipeline::{read_dataset, Dataset, ElementCounts, Summary};

/// Counts over fixed bins; `edges` has one more entry than `counts`, and the
/// last edge may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn new(edges: Vec<f64>) -> Self {
        Histogram { counts: vec![0; edges.len() - 1], edges }
    }

    fn add(&mut self, v: f64) {
        if let Some(i) = (0..self.counts.len()).find(|&i| v >= self.edges[i] && v < self.edges[i + 1]) {
            self.counts[i] += 1;
        }
    }

    /// Decades `[1e-16, 1e-15), …, [1e-1, 1)`, with `[0, 1e-16)` in front and
    /// `[1, ∞)` behind.
    fn log_decades() -> Self {
        let mut edges = vec![0.0];
        edges.extend((-16..=0).map(|e| 10f64.powi(e)));
        edges.push(f64::INFINITY);
        Histogram::new(edges)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct Spread {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub total: f64,
}

impl Spread {
    fn of(mut values: Vec<f64>) -> Self {
        values.retain(|v| v.is_finite());
        if values.is_empty() {
            return Spread::default();
        }
        values.sort_by(f64::total_cmp);
        let total: f64 = values.iter().sum();
        Spread {
            count: values.len(),
            mean: total / values.len() as f64,
            median: values[values.len() / 2],
            max: values[values.len() - 1],
            total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub elements: ElementCounts,
    pub summary: Summary,
    pub ac_balance_residual: Histogram,
    pub ac_balance_residual_max: f64,
    pub dc_balance_residual: Histogram,
    pub dc_balance_residual_max: f64,
    pub runtime_seconds: BTreeMap<String, Spread>,
    /// Loading of in-service rated branches over converged samples.
    pub branch_loading: Histogram,
    /// Number of samples per overload count.
    pub overloads_per_sample: BTreeMap<usize, usize>,
    pub fraction_overloaded_branches: f64,
    pub fraction_samples_with_overload: f64,
    pub fraction_samples_with_violation: f64,
    pub entropy: Vec<FeatureEntropy>,
}

pub fn compute_stats(dataset: &Dataset) -> StatsReport {
    let base = dataset.grid.base_mva;
    let mut ac = Histogram::log_decades();
    let mut dc = Histogram::log_decades();
    let (mut ac_max, mut dc_max) = (0.0f64, 0.0f64);
    let mut loading_edges: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
    loading_edges.push(f64::INFINITY);
    let mut loading = Histogram::new(loading_edges);
    let mut overloads_per_sample = BTreeMap::new();
    let (mut rated, mut overloaded) = (0usize, 0usize);
    let (mut with_overload, mut with_violation) = (0usize, 0usize);
    let converged: Vec<_> = dataset.records.iter().filter(|r| r.converged()).collect();

    for rec in &converged {
        let grid = rebuild_grid(&dataset.grid, rec);
        let residual = balance_residuals(&grid, rec).into_iter().fold(0.0f64, f64::max);
        ac.add(residual);
        ac_max = ac_max.max(residual);

        if rec.dc_pf_solved {
            // DC balance away from the slack, which absorbs the mismatch
            let index = grid.bus_index();
            let slack = grid.slack_position();
            let mut net: Vec<f64> = rec.buses.iter().map(|b| -b.pd).collect();
            for g in grid.in_service_generators() {
                net[index[&g.bus]] += rec.gens[g.id].pg;
            }
            for br in grid.in_service_branches() {
                let f = rec.branches[br.id].pf_dc;
                net[index[&br.from_bus]] -= f;
                net[index[&br.to_bus]] += f;
            }
            let r = (0..net.len()).filter(|&i| i != slack).fold(0.0f64, |m, i| m.max(net[i].abs() / base));
            dc.add(r);
            dc_max = dc_max.max(r);
        }

        for (br, stored) in grid.branches.iter().zip(&rec.branches) {
            if br.status.is_on() && br.is_limited() {
                loading.add(stored.loading);
                rated += 1;
                overloaded += usize::from(stored.overload == Some(true));
            }
        }
        let n = rec.overload_count();
        *overloads_per_sample.entry(n).or_insert(0) += 1;
        with_overload += usize::from(n > 0);
        with_violation += usize::from(rec.violation_count() > 0);
    }

    let runtime = |f: fn(&crate::pipeline::Runtimes) -> f64| {
        Spread::of(dataset.records.iter().map(|r| f(&r.runtimes)).filter(|&t| t > 0.0).collect())
    };
    let mut runtime_seconds = BTreeMap::new();
    runtime_seconds.insert("ac".to_string(), runtime(|t| t.ac));
    runtime_seconds.insert("base_opf".to_string(), runtime(|t| t.base_opf));
    runtime_seconds.insert("dc_pf".to_string(), runtime(|t| t.dc_pf));
    runtime_seconds.insert("dc_opf".to_string(), runtime(|t| t.dc_opf));

    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    StatsReport {
        elements: dataset.manifest.elements.clone(),
        summary: Summary::of(&dataset.records),
        ac_balance_residual: ac,
        ac_balance_residual_max: ac_max,
        dc_balance_residual: dc,
        dc_balance_residual_max: dc_max,
        runtime_seconds,
        branch_loading: loading,
        overloads_per_sample,
        fraction_overloaded_branches: ratio(overloaded, rated),
        fraction_samples_with_overload: ratio(with_overload, converged.len()),
        fraction_samples_with_violation: ratio(with_violation, converged.len()),
        entropy: Feature::ALL.iter().filter_map(|&f| compute_entropy(dataset, f, DEFAULT_BINS).ok()).collect(),
    }
}

pub fn render_text(s: &StatsReport) -> String {
    let mut out = String::new();
    let e = &s.elements;
    let m = &s.summary;
    let _ = writeln!(out, "elements: {} buses, {} generators, {} branches, {} loads", e.buses, e.generators, e.branches, e.loads);
    let _ = writeln!(
        out,
        "samples: {} (converged {}, not converged {}, skipped {}), convergence rate {:.2}%",
        m.samples,
        m.converged,
        m.not_converged,
        m.skipped,
        100.0 * m.convergence_rate
    );
    let _ = writeln!(out, "samples with >=1 overload: {:.2}%", 100.0 * s.fraction_samples_with_overload);
    let _ = writeln!(out, "samples with >=1 violation: {:.2}%", 100.0 * s.fraction_samples_with_violation);
    let _ = writeln!(out, "overloaded branches: {:.3}% of rated in-service branch observations", 100.0 * s.fraction_overloaded_branches);
    let _ = writeln!(out, "max AC balance residual: {:e} p.u.", s.ac_balance_residual_max);
    let _ = writeln!(out, "max DC balance residual: {:e} p.u.", s.dc_balance_residual_max);
    let _ = writeln!(out, "\nruntime (s)      count       mean     median        max");
    for (name, r) in &s.runtime_seconds {
        let _ = writeln!(out, "{name:<12} {:>9} {:>10.3e} {:>10.3e} {:>10.3e}", r.count, r.mean, r.median, r.max);
    }
    let _ = writeln!(out, "\noverloads per sample");
    for (n, c) in &s.overloads_per_sample {
        let _ = writeln!(out, "  {n:>3}: {c}");
    }
    let _ = writeln!(out, "\nbranch loading");
    for (i, c) in s.branch_loading.counts.iter().enumerate() {
        let (a, b) = (s.branch_loading.edges[i], s.branch_loading.edges[i + 1]);
        let _ = writeln!(out, "  [{a:.1}, {b:.1}): {c}");
    }
    let _ = writeln!(out, "\nAC balance residual (p.u.)");
    for (i, c) in s.ac_balance_residual.counts.iter().enumerate().filter(|(_, c)| **c > 0) {
        let _ = writeln!(out, "  [{:e}, {:e}): {c}", s.ac_balance_residual.edges[i], s.ac_balance_residual.edges[i + 1]);
    }
    let _ = writeln!(out, "\nentropy (bits, {} bins)   buses  samples   mean H   normalized", DEFAULT_BINS);
    for f in &s.entropy {
        let _ = writeln!(out, "  {:<24} {:>5} {:>8} {:>8.4} {:>12.4}", f.feature.name(), f.buses.len(), f.samples, f.mean, f.normalized);
    }
    out
}

/// Computes the statistics of the dataset at `path` and writes `stats.txt`
/// and `stats.json` next to it.
pub fn stats_report(path: &Path) -> Result<StatsReport, AnalysisError> {
    let dataset = read_dataset(path)?;
    let report = compute_stats(&dataset);
    let write = |name: &str, body: String| {
        let p = path.join(name);
        std::fs::write(&p, body).map_err(|e| AnalysisError::Io(format!("{}: {e}", p.display())))
    };
    write("stats.txt", render_text(&report))?;
    write(
        "stats.json",
        serde_json::to_string_pretty(&report).map_err(|e| AnalysisError::Io(e.to_string()))? + "\n",
    )?;
    Ok(report)
}

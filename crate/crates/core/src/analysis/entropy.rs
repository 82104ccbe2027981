use std::f64::consts::PI;

use serde::Serialize;

use super::AnalysisError;
use crate::grid::BusId;
use crate::pipeline::{Dataset, SampleStatus};

pub const DEFAULT_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Feature {
    Pd,
    Qd,
    Pg,
    Qg,
    Vm,
    Va,
}

impl Feature {
    pub const ALL: [Feature; 6] = [Feature::Pd, Feature::Qd, Feature::Pg, Feature::Qg, Feature::Vm, Feature::Va];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Pd => "Pd",
            Feature::Qd => "Qd",
            Feature::Pg => "Pg",
            Feature::Qg => "Qg",
            Feature::Vm => "Vm",
            Feature::Va => "Va",
        }
    }
}

/// Histogram support of one bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Domain {
    /// Closed interval `[lo, hi]`.
    Range(f64, f64),
    /// The angle circle `(−π, π]`.
    Angle,
}

impl Domain {
    fn bounds(&self) -> (f64, f64) {
        match *self {
            Domain::Range(lo, hi) => (lo, hi),
            Domain::Angle => (-PI, PI),
        }
    }

    fn bin(&self, v: f64, bins: usize) -> usize {
        let (lo, hi) = self.bounds();
        let pos = (v - lo) / (hi - lo) * bins as f64;
        let b = match self {
            // left-open bins so that π lands in the last one and −π is excluded
            Domain::Angle => pos.ceil() - 1.0,
            Domain::Range(..) => pos.floor(),
        };
        b.clamp(0.0, bins as f64 - 1.0) as usize
    }
}

/// Entropy in bits of the `bins`-bin histogram of `values` over `domain`.
/// Degenerate ranges (a constant feature) give zero.
pub fn histogram_entropy(values: &[f64], domain: Domain, bins: usize) -> f64 {
    let (lo, hi) = domain.bounds();
    if values.is_empty() || !(hi > lo) {
        return 0.0;
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[domain.bin(v, bins)] += 1;
    }
    let n = values.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureEntropy {
    pub feature: Feature,
    pub bins: usize,
    pub buses: Vec<BusId>,
    /// Per-bus entropy in bits.
    pub per_bus: Vec<f64>,
    pub domains: Vec<Domain>,
    pub mean: f64,
    /// Mean divided by `log2(bins)`, in `[0, 1]`.
    pub normalized: f64,
    pub samples: usize,
}

/// Per-bus histogram entropies of one feature. `values[b]` holds every
/// sample of bus `buses[b]`. Domains default to `(−π, π]` for angles and to
/// the per-bus sample range otherwise.
pub fn feature_entropy(
    feature: Feature,
    buses: &[BusId],
    values: &[Vec<f64>],
    bins: usize,
    domains: Option<&[Domain]>,
) -> FeatureEntropy {
    let domains: Vec<Domain> = match domains {
        Some(d) => d.to_vec(),
        None => values
            .iter()
            .map(|v| match feature {
                Feature::Va => Domain::Angle,
                _ => {
                    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    Domain::Range(lo, hi)
                }
            })
            .collect(),
    };
    let per_bus: Vec<f64> = values.iter().zip(&domains).map(|(v, &d)| histogram_entropy(v, d, bins)).collect();
    let mean = if per_bus.is_empty() { 0.0 } else { per_bus.iter().sum::<f64>() / per_bus.len() as f64 };
    FeatureEntropy {
        feature,
        bins,
        buses: buses.to_vec(),
        normalized: mean / (bins as f64).log2(),
        mean,
        per_bus,
        domains,
        samples: values.first().map_or(0, Vec::len),
    }
}

/// Per-bus sample values of `feature` over the converged samples. Load
/// features cover buses with nonzero nominal demand, generator features
/// cover buses hosting a generator (summed per bus), voltages cover all.
pub fn feature_values(dataset: &Dataset, feature: Feature) -> (Vec<BusId>, Vec<Vec<f64>>) {
    let grid = &dataset.grid;
    let index = grid.bus_index();
    let positions: Vec<usize> = match feature {
        Feature::Pd | Feature::Qd => {
            let demand = grid.bus_demand();
            (0..grid.buses.len()).filter(|&i| demand[i] != (0.0, 0.0)).collect()
        }
        Feature::Pg | Feature::Qg => {
            let mut host = vec![false; grid.buses.len()];
            for g in &grid.generators {
                host[index[&g.bus]] = true;
            }
            (0..grid.buses.len()).filter(|&i| host[i]).collect()
        }
        Feature::Vm | Feature::Va => (0..grid.buses.len()).collect(),
    };
    let mut values = vec![Vec::new(); positions.len()];
    for rec in dataset.records.iter().filter(|r| r.status == SampleStatus::Converged) {
        let mut per_bus = vec![0.0; grid.buses.len()];
        match feature {
            Feature::Pg | Feature::Qg => {
                for g in &rec.gens {
                    per_bus[index[&g.bus_id]] += if feature == Feature::Pg { g.pg } else { g.qg };
                }
            }
            _ => {
                for (i, b) in rec.buses.iter().enumerate() {
                    per_bus[i] = match feature {
                        Feature::Pd => b.pd,
                        Feature::Qd => b.qd,
                        Feature::Vm => b.vm,
                        _ => b.va,
                    };
                }
            }
        }
        for (slot, &p) in values.iter_mut().zip(&positions) {
            slot.push(per_bus[p]);
        }
    }
    (positions.iter().map(|&p| grid.buses[p].id).collect(), values)
}

pub fn compute_entropy(dataset: &Dataset, feature: Feature, bins: usize) -> Result<FeatureEntropy, AnalysisError> {
    if !dataset.records.iter().any(|r| r.status == SampleStatus::Converged) {
        return Err(AnalysisError::NoConvergedSamples);
    }
    let (buses, values) = feature_values(dataset, feature);
    Ok(feature_entropy(feature, &buses, &values, bins, None))
}

use num_complex::Complex64;

use crate::grid::Grid;

/// Π-model admittances of one in-service branch, in p.u., with bus
/// endpoints given as positions into `Grid::buses`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub branch: usize,
    pub from: usize,
    pub to: usize,
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

/// Nodal admittance matrix in compressed-row form. Each row is sorted by
/// column and holds the diagonal entry even when it is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub dim: usize,
    pub rows: Vec<Vec<(usize, Complex64)>>,
}

impl AdmittanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|p| self.rows[i][p].1)
            .unwrap_or_default()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

pub fn branch_admittances(grid: &Grid) -> Vec<BranchAdmittance> {
    let index = grid.bus_index();
    grid.in_service_branches()
        .map(|br| {
            let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
            let half_charge = Complex64::new(0.0, br.b_charge / 2.0);
            let t = br.effective_tap();
            let tap = Complex64::from_polar(t, br.shift);
            BranchAdmittance {
                branch: br.id,
                from: index[&br.from_bus],
                to: index[&br.to_bus],
                yff: (ys + half_charge) / (t * t),
                yft: -ys / tap.conj(),
                ytf: -ys / tap,
                ytt: ys + half_charge,
            }
        })
        .collect()
}

/// Assembles the bus admittance matrix from in-service branches and bus shunts.
pub fn build_admittance(grid: &Grid) -> AdmittanceMatrix {
    let n = grid.buses.len();
    let mut rows: Vec<Vec<(usize, Complex64)>> = (0..n)
        .map(|i| vec![(i, Complex64::new(grid.buses[i].shunt_g, grid.buses[i].shunt_b))])
        .collect();
    let mut add = |i: usize, j: usize, v: Complex64| match rows[i].binary_search_by_key(&j, |&(c, _)| c) {
        Ok(p) => rows[i][p].1 += v,
        Err(p) => rows[i].insert(p, (j, v)),
    };
    for ba in branch_admittances(grid) {
        add(ba.from, ba.from, ba.yff);
        add(ba.from, ba.to, ba.yft);
        add(ba.to, ba.from, ba.ytf);
        add(ba.to, ba.to, ba.ytt);
    }
    AdmittanceMatrix { dim: n, rows }
}

//! Sparse assembly in triplet form and direct solves through faer's sparse LU.

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use faer::prelude::Solve;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("singular system")]
    Singular,
    #[error("sparse assembly failed: {0}")]
    Assembly(String),
}

/// A square sparse matrix under construction. Duplicate entries are summed.
#[derive(Debug, Clone)]
pub struct SparseBuilder {
    n: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl SparseBuilder {
    pub fn new(n: usize) -> Self {
        SparseBuilder { n, entries: Vec::new() }
    }

    pub fn with_capacity(n: usize, nnz: usize) -> Self {
        SparseBuilder { n, entries: Vec::with_capacity(nnz) }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        if value != 0.0 {
            self.entries.push(Triplet::new(row, col, value));
        }
    }

    /// Factors and solves `A x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        assert_eq!(rhs.len(), self.n, "right-hand side length");
        if self.n == 0 {
            return Ok(Vec::new());
        }
        let matrix = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &self.entries)
            .map_err(|e| LinalgError::Assembly(format!("{e:?}")))?;
        let lu = matrix.sp_lu().map_err(|_| LinalgError::Singular)?;
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = lu.solve(&b);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(LinalgError::Singular)
        }
    }

    /// Dense row-major copy, for tests and small diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for t in &self.entries {
            out[t.row][t.col] += t.val;
        }
        out
    }
}

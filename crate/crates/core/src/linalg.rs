//! Sparse assembly and direct solves on top of faer.

use std::sync::Once;

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Par, Side};

use crate::error::{Error, Result};

static SEQUENTIAL: Once = Once::new();

/// Parallelism lives at the macro-point level; keep faer's kernels sequential.
fn init() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// Coordinate-format accumulator; duplicate entries are summed.
#[derive(Clone, Debug)]
pub struct Triplets {
    n: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.entries.push(Triplet::new(i, j, v));
    }

    /// Adds `v` at (i, j) and (j, i).
    #[inline]
    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        self.add(i, j, v);
        if i != j {
            self.add(j, i, v);
        }
    }

    pub fn build(&self) -> Result<SparseColMat<usize, f64>> {
        SparseColMat::try_new_from_triplets(self.n, self.n, &self.entries).map_err(|e| {
            Error::Linear {
                stage: "assembly",
                msg: format!("{e:?}"),
            }
        })
    }

    /// y = A x, computed straight from the triplets.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for t in &self.entries {
            y[t.row] += t.val * x[t.col];
        }
        y
    }
}

fn to_mat(cols: &[&[f64]], n: usize) -> Mat<f64> {
    Mat::from_fn(n, cols.len(), |i, j| cols[j][i])
}

fn from_mat(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)]).collect())
        .collect()
}

/// Sparse Cholesky factor of a symmetric positive definite matrix.
pub struct Cholesky {
    n: usize,
    llt: Llt<usize, f64>,
}

impl Cholesky {
    pub fn factor(a: &Triplets, stage: &'static str) -> Result<Self> {
        init();
        let m = a.build()?;
        let llt = m.sp_cholesky(Side::Lower).map_err(|e| Error::Linear {
            stage,
            msg: format!("cholesky failed: {e:?}"),
        })?;
        Ok(Self { n: a.dim(), llt })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_many(&[b]).pop().unwrap()
    }

    pub fn solve_many(&self, bs: &[&[f64]]) -> Vec<Vec<f64>> {
        let rhs = to_mat(bs, self.n);
        from_mat(&self.llt.solve(&rhs))
    }
}

/// Sparse LU solve for the nonsymmetric macro systems.
pub fn lu_solve(a: &Triplets, b: &[f64], stage: &'static str) -> Result<Vec<f64>> {
    init();
    let m = a.build()?;
    let lu: Lu<usize, f64> = m.sp_lu().map_err(|e| Error::Linear {
        stage,
        msg: format!("lu failed: {e:?}"),
    })?;
    let x = from_mat(&lu.solve(&to_mat(&[b], a.dim()))).pop().unwrap();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Linear {
            stage,
            msg: "singular system (non-finite solution)".into(),
        });
    }
    Ok(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

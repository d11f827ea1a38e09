//! Sparse matrices and the linear-system backends shared by every solver.
//!
//! The direct backend is faer's sparse LU with partial pivoting followed by
//! one round of iterative refinement. The iterative backend is a Jacobi
//! preconditioned BiCGSTAB that accepts a warm start, which matters inside
//! policy iteration where consecutive systems differ in a handful of rows.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative residual accepted from either backend.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearSolver {
    #[default]
    Direct,
    Iterative,
}

impl std::str::FromStr for LinearSolver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Self::Direct),
            "iterative" => Ok(Self::Iterative),
            other => Err(format!("unknown linear solver `{other}`")),
        }
    }
}

/// Compressed sparse row matrix with `f64` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix row by row. Entries in a row may repeat a column; they
    /// are summed.
    pub fn from_rows<I, R>(n_cols: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = (usize, f64)>,
    {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for row in rows {
            scratch.clear();
            scratch.extend(row);
            scratch.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in &scratch {
                assert!(c < n_cols, "column {c} out of range");
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows: row_ptr.len() - 1,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| [(i, 1.0)]))
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    /// `A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `xᵀ A`
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows);
        let mut out = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (j, v) in self.row(i) {
                    out[j] += xi * v;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n_cols];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                rows[j].push((i, v));
            }
        }
        Self::from_rows(self.n_rows, rows)
    }

    fn triplets(&self) -> Vec<Triplet<usize, usize, f64>> {
        (0..self.n_rows)
            .flat_map(|i| self.row(i).map(move |(j, v)| Triplet::new(i, j, v)))
            .collect()
    }
}

/// Relative residual `‖Ax − b‖∞ / max(‖b‖∞, 1)`.
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    ax.iter()
        .zip(b)
        .map(|(l, r)| (l - r).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Solves the square system `A x = b`.
pub fn solve(kind: LinearSolver, a: &CsrMatrix, b: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
    if a.n_rows != a.n_cols || a.n_rows != b.len() {
        return Err(Error::SolverFailure(format!(
            "dimension mismatch: {}x{} system with rhs of length {}",
            a.n_rows,
            a.n_cols,
            b.len()
        )));
    }
    if b.is_empty() {
        return Ok(Vec::new());
    }
    let x = match kind {
        LinearSolver::Direct => match solve_direct(a, b) {
            Ok(x) => x,
            Err(DirectFailure::OutOfMemory) => {
                log::warn!(
                    "sparse LU of a {}-state system ran out of memory, falling back to BiCGSTAB",
                    a.n_rows
                );
                bicgstab(a, b, guess, 1e-13, 50 * a.n_rows + 1000)?
            }
            Err(DirectFailure::Other(e)) => return Err(e),
        },
        LinearSolver::Iterative => bicgstab(a, b, guess, 1e-13, 50 * a.n_rows + 1000)?,
    };
    let res = relative_residual(a, &x, b);
    if !res.is_finite() || res > RESIDUAL_TOLERANCE {
        return Err(Error::SolverFailure(format!(
            "relative residual {res:.3e} above {RESIDUAL_TOLERANCE:.0e}"
        )));
    }
    Ok(x)
}

enum DirectFailure {
    OutOfMemory,
    Other(Error),
}

fn solve_direct(a: &CsrMatrix, b: &[f64]) -> std::result::Result<Vec<f64>, DirectFailure> {
    let n = a.n_rows;
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &a.triplets())
        .map_err(|e| DirectFailure::Other(Error::SolverFailure(format!("{e:?}"))))?;
    let lu = mat.sp_lu().map_err(|e| {
        let msg = format!("{e:?}");
        if msg.contains("OutOfMemory") {
            DirectFailure::OutOfMemory
        } else {
            DirectFailure::Other(Error::SingularSystem(msg))
        }
    })?;
    let rhs = Col::<f64>::from_fn(n, |i| b[i]);
    let sol = lu.solve(&rhs);
    let mut x: Vec<f64> = (0..n).map(|i| sol[i]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(DirectFailure::Other(Error::SingularSystem(
            "non-finite entries in LU solution".into(),
        )));
    }
    // one step of iterative refinement
    let ax = a.mul_vec(&x);
    let r = Col::<f64>::from_fn(n, |i| b[i] - ax[i]);
    let dx = lu.solve(&r);
    for (i, xi) in x.iter_mut().enumerate() {
        let d = dx[i];
        if d.is_finite() {
            *xi += d;
        }
    }
    Ok(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned BiCGSTAB.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], guess: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| {
            let d = a.get(i, i);
            if d.abs() > f64::MIN_POSITIVE {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&inv_diag).map(|(x, d)| x * d).collect() };

    let mut x = match guess {
        Some(g) if g.len() == n => g.to_vec(),
        _ => vec![0.0; n],
    };
    let ax = a.mul_vec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let r_hat = r.clone();
    let b_norm = norm(b).max(1e-300);
    if norm(&r) / b_norm <= tol {
        return Ok(x);
    }
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_next = dot(&r_hat, &r);
        if rho_next.abs() < 1e-300 {
            break;
        }
        let beta = (rho_next / rho) * (alpha / omega);
        rho = rho_next;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precond(&p);
        v = a.mul_vec(&p_hat);
        let denom = dot(&r_hat, &v);
        if denom.abs() < 1e-300 {
            break;
        }
        alpha = rho / denom;
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm(&s) / b_norm <= tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok(x);
        }
        let s_hat = precond(&s);
        let t = a.mul_vec(&s_hat);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm(&r) / b_norm <= tol {
            return Ok(x);
        }
        if omega == 0.0 {
            break;
        }
    }
    // Let the caller's residual check decide whether what we have is usable.
    Ok(x)
}

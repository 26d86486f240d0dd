//! Small dense-vector helpers and the SPD solvers shared by the equilibrium,
//! Newton and resolvent code paths.
//!
//! Every SPD system that appears in this crate has the shape
//! `A x = sum_e c_e (x_i - x_j)(e_i - e_j) + diag(d) x`, i.e. a weighted graph
//! Laplacian plus a positive diagonal. [`SpdSystem`] stores exactly that and
//! solves it either densely (Cholesky, small N) or with Jacobi-preconditioned
//! conjugate gradients.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Below this size SPD systems are solved by dense Cholesky.
pub const DENSE_SOLVE_LIMIT: usize = 200;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

/// Removes the component along the all-ones vector in place.
pub fn project_out_mean(a: &mut [f64]) {
    let m = mean(a);
    a.iter_mut().for_each(|x| *x -= m);
}

/// Norm of the component of `a` orthogonal to the all-ones vector.
pub fn perp_norm(a: &[f64]) -> f64 {
    let m = mean(a);
    a.iter().map(|x| (x - m) * (x - m)).sum::<f64>().sqrt()
}

/// Eigenvalues of a dense symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Weighted-Laplacian-plus-diagonal SPD operator on a fixed graph topology.
#[derive(Debug, Clone)]
pub struct SpdSystem<'g> {
    graph: &'g Graph,
    /// One coefficient per edge of `graph`, in edge order. Must be >= 0.
    edge_coeffs: Vec<f64>,
    /// Diagonal shift. Must be > 0 somewhere for definiteness on connected graphs.
    diag: Vec<f64>,
}

impl<'g> SpdSystem<'g> {
    pub fn new(graph: &'g Graph, edge_coeffs: Vec<f64>, diag: Vec<f64>) -> Self {
        debug_assert_eq!(edge_coeffs.len(), graph.edge_count());
        debug_assert_eq!(diag.len(), graph.node_count());
        Self {
            graph,
            edge_coeffs,
            diag,
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for ((o, d), xi) in out.iter_mut().zip(&self.diag).zip(x) {
            *o = d * xi;
        }
        for (e, c) in self.graph.edges().iter().zip(&self.edge_coeffs) {
            let f = c * (x[e.i] - x[e.j]);
            out[e.i] += f;
            out[e.j] -= f;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = self.diag.clone();
        for (e, c) in self.graph.edges().iter().zip(&self.edge_coeffs) {
            d[e.i] += c;
            d[e.j] += c;
        }
        d
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(&self.diag));
        for (e, c) in self.graph.edges().iter().zip(&self.edge_coeffs) {
            m[(e.i, e.i)] += c;
            m[(e.j, e.j)] += c;
            m[(e.i, e.j)] -= c;
            m[(e.j, e.i)] -= c;
        }
        debug_assert_eq!(m.nrows(), n);
        m
    }

    /// Solves `A x = b`: dense Cholesky below [`DENSE_SOLVE_LIMIT`], CG otherwise.
    pub fn solve(&self, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
        if self.dim() < DENSE_SOLVE_LIMIT {
            let chol = self.to_dense().cholesky().ok_or_else(|| {
                Error::InvalidArgument("system matrix is not positive definite".into())
            })?;
            Ok(chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec())
        } else {
            let diag = self.diagonal();
            conjugate_gradient(|x, y| self.apply(x, y), &diag, b, None, rel_tol, 10 * self.dim() + 100)
        }
    }
}

/// Jacobi-preconditioned conjugate gradients for an SPD operator.
///
/// Stops when `||b - A x|| <= rel_tol * ||b||`.
pub fn conjugate_gradient<F>(
    apply: F,
    diag: &[f64],
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let target = rel_tol * b_norm;

    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for _ in 0..max_iter {
        if norm2(&r) <= target {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::InvalidArgument(
                "conjugate gradient: operator is not positive definite".into(),
            ));
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    // Recompute the true residual before giving up; the recursive one drifts.
    apply(&x, &mut ax);
    let res = dist2(b, &ax);
    if res <= target {
        Ok(x)
    } else {
        Err(Error::NonConvergence {
            solver: "conjugate gradient",
            iterations: max_iter,
            residual: res / b_norm,
        })
    }
}

//! Solvers for the symmetric Neumann operators.
//!
//! Intervals give tridiagonal systems that are solved directly. Rectangles use
//! Jacobi-preconditioned conjugate gradients with a fixed reduction order, so
//! repeated solves are bit-for-bit reproducible.

use thiserror::Error;

use crate::stencil::NeumannOperator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("conjugate gradient did not reach relative residual {tol:e} in {iterations} iterations (last {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    #[error("operator is singular or indefinite (pivot {pivot:e} at row {row})")]
    Breakdown { row: usize, pivot: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `op * x = rhs`.
pub fn solve(
    op: &NeumannOperator,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats), SolveError> {
    if op.grid().dim() == 1 {
        let x = tridiagonal(op, rhs)?;
        Ok((
            x,
            SolveStats {
                iterations: 1,
                relative_residual: 0.0,
            },
        ))
    } else {
        pcg(op, rhs, rhs, tol, max_iter)
    }
}

/// Default iteration cap for the conjugate-gradient path.
pub fn default_max_iter(op: &NeumannOperator) -> usize {
    10 * op.grid().len() + 1000
}

fn tridiagonal(op: &NeumannOperator, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
    let n = rhs.len();
    let diag = op.diagonal();
    let off = op.coupling(0);
    // Thomas algorithm with a constant off-diagonal.
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return Err(SolveError::Breakdown { row: 0, pivot });
    }
    c[0] = off / pivot;
    d[0] = rhs[0] / pivot;
    for k in 1..n {
        pivot = diag[k] - off * c[k - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(SolveError::Breakdown { row: k, pivot });
        }
        c[k] = off / pivot;
        d[k] = (rhs[k] - off * d[k - 1]) / pivot;
    }
    let mut x = d;
    for k in (0..n - 1).rev() {
        x[k] -= c[k] * x[k + 1];
    }
    Ok(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients from the initial guess `x0`.
pub fn pcg(
    op: &NeumannOperator,
    rhs: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats), SolveError> {
    let n = rhs.len();
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / d).collect();
    let b_norm = dot(rhs, rhs).sqrt();
    let mut x = x0.to_vec();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut ax = vec![0.0; n];
    op.apply_slice(&x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut res = dot(&r, &r).sqrt() / b_norm;
    if res <= tol {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                relative_residual: res,
            },
        ));
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        op.apply_slice(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(SolveError::Breakdown { row: it, pivot: pap });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        if res <= tol {
            return Ok((
                x,
                SolveStats {
                    iterations: it,
                    relative_residual: res,
                },
            ));
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(SolveError::NotConverged {
        iterations: max_iter,
        residual: res,
        tol,
    })
}

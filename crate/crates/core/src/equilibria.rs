//! Steady states and the spectral threshold quantities.

use serde::Serialize;
use thiserror::Error;

use crate::grid::{Field, Grid, GridError};
use crate::linsolve::{self, SolveError};
use crate::model::{pow0, SisSystem};
use crate::stencil::{cross_diffusion_into, laplacian_into, NeumannOperator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("outside the supported regime: {0}")]
    Domain(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("{what} did not converge within {iterations} iterations")]
    NotConverged { what: &'static str, iterations: usize },
    #[error("no positive steady state: principal eigenvalue {lambda_star} is non-negative")]
    NoPositiveSteadyState { lambda_star: f64 },
    #[error("upper and lower iterations stalled {gap:e} apart (tolerance {tol:e})")]
    NonUniqueness { gap: f64, tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumKind {
    DiseaseFree,
    ConstantEndemic,
    HeterogeneousEndemic,
}

/// A steady state. Constant kinds hold single-entry fields; see [`Equilibrium::on_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub kind: EquilibriumKind,
    pub s: Field,
    pub i: Field,
    pub residual: f64,
}

impl Equilibrium {
    fn constant(kind: EquilibriumKind, s: f64, i: f64, residual: f64) -> Self {
        Equilibrium {
            kind,
            s: Field::new(vec![s]),
            i: Field::new(vec![i]),
            residual,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.s.len() == 1
    }

    /// Fields on `grid`, replicating constant values.
    pub fn on_grid(&self, grid: &Grid) -> Result<(Field, Field), GridError> {
        if self.is_constant() && grid.len() != 1 {
            return Ok((grid.constant(self.s[0]), grid.constant(self.i[0])));
        }
        grid.check_len(&self.s)?;
        grid.check_len(&self.i)?;
        Ok((self.s.clone(), self.i.clone()))
    }
}

/// The disease-free state `(N / |Omega|, 0)`.
pub fn dfe(population: f64, omega_measure: f64) -> Result<Equilibrium, EquilibriumError> {
    if !(population > 0.0 && omega_measure > 0.0) {
        return Err(EquilibriumError::Domain("N and |Omega| must be positive".into()));
    }
    Ok(Equilibrium::constant(
        EquilibriumKind::DiseaseFree,
        population / omega_measure,
        0.0,
        0.0,
    ))
}

/// Constant endemic state for `0 < p < 1` and `gamma = r * beta`:
/// the root of `r (tau - S)^(1-p) = S^q` on `(0, tau)`.
pub fn constant_ee_sublinear(tau: f64, r: f64, p: f64, q: f64) -> Result<Equilibrium, EquilibriumError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(EquilibriumError::Domain(format!(
            "sublinear endemic state needs 0 < p < 1, got p = {p}"
        )));
    }
    if !(tau > 0.0 && r > 0.0 && q > 0.0) {
        return Err(EquilibriumError::Domain("tau, r and q must be positive".into()));
    }
    // Bisect in whichever unknown is the smaller one so it keeps full relative precision.
    let f = |s: f64| r * (tau - s).powf(1.0 - p) - s.powf(q);
    let (s, i) = if f(0.5 * tau) <= 0.0 {
        let s = bisect(f, 0.0, 0.5 * tau);
        (s, tau - s)
    } else {
        let i = bisect(|i: f64| (tau - i).powf(q) - r * i.powf(1.0 - p), 0.0, 0.5 * tau);
        (tau - i, i)
    };
    Ok(Equilibrium::constant(
        EquilibriumKind::ConstantEndemic,
        s,
        i,
        scalar_residual(s, i, r, p, q),
    ))
}

/// Constant endemic state for `p = 1`; `None` unless `tau > r^(1/q)`.
pub fn constant_ee_linear(tau: f64, r: f64, q: f64) -> Option<Equilibrium> {
    let s = r.powf(1.0 / q);
    if !(tau > s) {
        return None;
    }
    let i = tau - s;
    Some(Equilibrium::constant(
        EquilibriumKind::ConstantEndemic,
        s,
        i,
        scalar_residual(s, i, r, 1.0, q),
    ))
}

/// `|S^q I^p - r I|`, the reaction residual per unit `beta`.
fn scalar_residual(s: f64, i: f64, r: f64, p: f64, q: f64) -> f64 {
    (s.powf(q) * i.powf(p) - r * i).abs()
}

/// Max-norm residual of the full steady-state equations at `(s, i)`.
pub fn steady_state_residual(sys: &SisSystem, s: &Field, i: &Field) -> Result<f64, GridError> {
    let grid = &sys.grid;
    grid.check_len(s)?;
    grid.check_len(i)?;
    let n = grid.len();
    let prm = &sys.params;
    let mut lap_s = vec![0.0; n];
    let mut lap_i = vec![0.0; n];
    let mut cross = vec![0.0; n];
    laplacian_into(grid, s.values(), &mut lap_s);
    laplacian_into(grid, i.values(), &mut lap_i);
    cross_diffusion_into(grid, s.values(), i.values(), &mut cross);
    let mut worst = 0.0f64;
    for k in 0..n {
        let inc = sys.beta[k] * pow0(s[k], prm.q) * pow0(i[k], prm.p);
        let rs = prm.d_s * lap_s[k] + prm.chi * cross[k] - inc + sys.gamma[k] * i[k];
        let ri = prm.d_i * lap_i[k] + inc - (sys.gamma[k] + prm.mu) * i[k];
        worst = worst.max(rs.abs()).max(ri.abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralResult {
    pub r0: f64,
    pub lambda_star: f64,
    /// Principal eigenvector of the linearization at the disease-free state,
    /// positive with unit discrete L2 norm.
    #[serde(skip)]
    pub eigenfunction: Field,
    pub iterations: usize,
}

const SPECTRAL_MAX_ITER: usize = 200_000;
const SPECTRAL_SOLVE_TOL: f64 = 1e-14;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn solve(op: &NeumannOperator, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
    let max = 20 * op.grid().len() + 1000;
    linsolve::solve(op, rhs, SPECTRAL_SOLVE_TOL, max).map(|(x, _)| x)
}

fn check_rates(grid: &Grid, beta: &Field, gamma: &Field, d_i: f64) -> Result<(), EquilibriumError> {
    grid.check(beta)?;
    grid.check(gamma)?;
    if beta.min() <= 0.0 || gamma.min() <= 0.0 {
        return Err(EquilibriumError::Domain(
            "beta and gamma must be positive in every cell".into(),
        ));
    }
    if !(d_i > 0.0) {
        return Err(EquilibriumError::Domain("d_I must be positive".into()));
    }
    Ok(())
}

/// `R0 = tau^q sup <beta phi, phi> / <(d_I A + gamma) phi, phi>` by power iteration,
/// together with the principal eigenvalue of `d_I A + gamma - beta tau^q`.
pub fn basic_reproduction_number(
    grid: &Grid,
    beta: &Field,
    gamma: &Field,
    d_i: f64,
    tau: f64,
    q: f64,
) -> Result<SpectralResult, EquilibriumError> {
    check_rates(grid, beta, gamma, d_i)?;
    if !(tau > 0.0 && q > 0.0) {
        return Err(EquilibriumError::Domain(
            "N/|Omega| and q must be positive".into(),
        ));
    }
    let n = grid.len();
    let scale = tau.powf(q);
    let b: Vec<f64> = beta.iter().map(|v| scale * v).collect();
    let m_op = NeumannOperator::new(grid, d_i, gamma)?;

    let mut x = vec![1.0; n];
    let mut rho = f64::NAN;
    let mut bx = vec![0.0; n];
    let mut mx = vec![0.0; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > SPECTRAL_MAX_ITER {
            return Err(EquilibriumError::NotConverged {
                what: "R0 power iteration",
                iterations: SPECTRAL_MAX_ITER,
            });
        }
        for k in 0..n {
            bx[k] = b[k] * x[k];
        }
        let mut y = solve(&m_op, &bx)?;
        let norm = dot(&y, &y).sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        m_op.apply_slice(&y, &mut mx);
        for k in 0..n {
            bx[k] = b[k] * y[k];
        }
        let next = dot(&y, &bx) / dot(&y, &mx);
        let res: f64 =
            (0..n).map(|k| (bx[k] - next * mx[k]).powi(2)).sum::<f64>().sqrt() / dot(&bx, &bx).sqrt();
        let settled = (next - rho).abs() < 1e-12 * next.abs() && res <= 1e-7;
        rho = next;
        x = y;
        if settled {
            break;
        }
    }
    let (lambda_star, eigenfunction, inner) = principal_eigenpair(grid, beta, gamma, d_i, tau, q, Some(&x))?;
    Ok(SpectralResult {
        r0: rho,
        lambda_star,
        eigenfunction,
        iterations: iterations + inner,
    })
}

/// Smallest eigenvalue of `d_I A + diag(gamma - beta tau^q)` by shifted inverse
/// iteration, with its positive eigenvector (unit discrete L2 norm).
pub fn principal_eigenpair(
    grid: &Grid,
    beta: &Field,
    gamma: &Field,
    d_i: f64,
    tau: f64,
    q: f64,
    start: Option<&[f64]>,
) -> Result<(f64, Field, usize), EquilibriumError> {
    check_rates(grid, beta, gamma, d_i)?;
    let n = grid.len();
    let scale = tau.powf(q);
    let c: Vec<f64> = (0..n).map(|k| gamma[k] - beta[k] * scale).collect();
    // The spectrum lies above min(c), so this shift keeps the solve positive definite.
    let sigma = c.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let shifted = Field::new(c.iter().map(|v| v - sigma).collect());
    let k_op = NeumannOperator::new(grid, d_i, &Field::new(c))?;
    let shift_op = NeumannOperator::new(grid, d_i, &shifted)?;

    let mut x = match start {
        Some(s) if s.len() == n => s.to_vec(),
        _ => vec![1.0; n],
    };
    let mut kx = vec![0.0; n];
    let mut lambda = f64::NAN;
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > SPECTRAL_MAX_ITER {
            return Err(EquilibriumError::NotConverged {
                what: "principal eigenvalue inverse iteration",
                iterations: SPECTRAL_MAX_ITER,
            });
        }
        let mut y = solve(&shift_op, &x)?;
        let norm = dot(&y, &y).sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        k_op.apply_slice(&y, &mut kx);
        let next = dot(&y, &kx);
        let res: f64 = (0..n).map(|k| (kx[k] - next * y[k]).powi(2)).sum::<f64>().sqrt();
        let size = 1.0 + (next - sigma).abs();
        let settled = (next - lambda).abs() < 1e-13 * size && res <= 1e-8 * size;
        lambda = next;
        x = y;
        if settled {
            break;
        }
    }
    let sign = if x.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let l2 = (grid.cell_measure() * dot(&x, &x)).sqrt();
    let phi = Field::new(x.iter().map(|v| sign * v / l2).collect());
    Ok((lambda, phi, iterations))
}

/// Diagnostics of the monotone iteration behind [`heterogeneous_ee`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneReport {
    pub iterations: usize,
    pub shift: f64,
    pub lower_start: f64,
    pub upper_start: f64,
    /// Gap between the two sequences at termination.
    pub gap: f64,
    /// Largest step against the expected direction of either sequence.
    pub monotonicity_violation: f64,
}

const MONOTONE_MAX_ITER: usize = 200_000;

/// Positive steady state `U` of `d_I lap U + beta (tau0 - U)^q U^p - gamma U = 0`
/// by monotone iteration from an upper and a lower solution; returns
/// `S = tau0 - U`, `I = U`.
#[allow(clippy::too_many_arguments)]
pub fn heterogeneous_ee(
    grid: &Grid,
    tau0: f64,
    beta: &Field,
    gamma: &Field,
    d_i: f64,
    p: f64,
    q: f64,
    tol: f64,
) -> Result<(Equilibrium, MonotoneReport), EquilibriumError> {
    check_rates(grid, beta, gamma, d_i)?;
    if !(tau0 > 0.0 && q > 0.0 && tol > 0.0) {
        return Err(EquilibriumError::Domain(
            "tau0, q and tol must be positive".into(),
        ));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(EquilibriumError::Domain(format!(
            "positive steady state is only constructed for 0 < p <= 1, got p = {p}"
        )));
    }
    let n = grid.len();
    let min_ratio = |num: &Field, den: &Field| {
        num.iter()
            .zip(den.iter())
            .map(|(a, b)| a / b)
            .fold(f64::INFINITY, f64::min)
    };
    let gb_min = min_ratio(gamma, beta);
    let bg_min = min_ratio(beta, gamma);

    // Upper constant: f <= 0 wherever (tau0 - u)^q <= min(gamma/beta) u^(1-p).
    let upper_start = if q >= 1.0 {
        tau0
    } else {
        let root = bisect(|u| (tau0 - u).powf(q) - gb_min * u.powf(1.0 - p), 0.0, tau0);
        0.5 * (root + tau0)
    };

    let lower: Vec<f64> = if p < 1.0 {
        let root = bisect(|d| (tau0 - d).powf(q) * bg_min - d.powf(1.0 - p), 0.0, tau0);
        vec![0.5 * root; n]
    } else {
        let (lambda, phi, _) = principal_eigenpair(grid, beta, gamma, d_i, tau0, q, None)?;
        if lambda >= 0.0 {
            return Err(EquilibriumError::NoPositiveSteadyState { lambda_star: lambda });
        }
        let mut s = 0.5 * upper_start / phi.max();
        let ok =
            |s: f64| (0..n).all(|k| beta[k] * (tau0.powf(q) - (tau0 - s * phi[k]).powf(q)) <= -0.5 * lambda);
        let mut halvings = 0;
        while !ok(s) {
            s *= 0.5;
            halvings += 1;
            if halvings > 200 {
                return Err(EquilibriumError::NotConverged {
                    what: "eigenfunction lower solution",
                    iterations: halvings,
                });
            }
        }
        phi.iter().map(|v| s * v).collect()
    };
    let lower_start = lower.iter().copied().fold(f64::INFINITY, f64::min);

    let reaction = |k: usize, u: f64| beta[k] * pow0(tau0 - u, q) * pow0(u, p) - gamma[k] * u;
    // One-sided Lipschitz bound of -f on [lower, upper], sampled.
    let lo = lower_start.min(upper_start);
    let mut bound = 0.0f64;
    for j in 0..1024 {
        let u = lo + (upper_start - lo) * (j as f64 + 0.5) / 1024.0;
        let (a, b) = (pow0(tau0 - u, q), pow0(u, p));
        for k in 0..n {
            let mut dfdu = -gamma[k];
            if u > 0.0 {
                dfdu += beta[k] * p * a * pow0(u, p - 1.0);
            }
            if tau0 - u > 0.0 {
                dfdu -= beta[k] * q * pow0(tau0 - u, q - 1.0) * b;
            }
            bound = bound.max(-dfdu);
        }
    }
    let shift = (1.1 * bound).max(1e-3 * gamma.max());
    let op = NeumannOperator::new(grid, d_i, &grid.constant(shift))?;
    let apply_map = |u: &[f64]| -> Result<Vec<f64>, SolveError> {
        let rhs: Vec<f64> = (0..n).map(|k| shift * u[k] + reaction(k, u[k])).collect();
        solve(&op, &rhs)
    };

    let mut up = vec![upper_start; n];
    let mut low = lower;
    let mut violation = 0.0f64;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MONOTONE_MAX_ITER {
        iterations += 1;
        let up_next = apply_map(&up)?;
        let low_next = apply_map(&low)?;
        for k in 0..n {
            violation = violation.max(up_next[k] - up[k]).max(low[k] - low_next[k]);
        }
        let step = (0..n)
            .map(|k| (up_next[k] - up[k]).abs().max((low_next[k] - low[k]).abs()))
            .fold(0.0, f64::max);
        up = up_next;
        low = low_next;
        gap = (0..n).map(|k| (up[k] - low[k]).abs()).fold(0.0, f64::max);
        if gap <= tol {
            break;
        }
        // Both sequences have stopped moving but not met.
        if step <= 1e-3 * tol && iterations > 10 {
            return Err(EquilibriumError::NonUniqueness { gap, tol });
        }
    }
    if gap > tol {
        return Err(EquilibriumError::NotConverged {
            what: "monotone iteration",
            iterations,
        });
    }
    let u: Vec<f64> = (0..n).map(|k| 0.5 * (up[k] + low[k])).collect();
    let fixed = apply_map(&u)?;
    let residual = (0..n).map(|k| (fixed[k] - u[k]).abs()).fold(0.0, f64::max);
    let eq = Equilibrium {
        kind: EquilibriumKind::HeterogeneousEndemic,
        s: Field::new(u.iter().map(|v| tau0 - v).collect()),
        i: Field::new(u),
        residual,
    };
    Ok((
        eq,
        MonotoneReport {
            iterations,
            shift,
            lower_start,
            upper_start,
            gap,
            monotonicity_violation: violation,
        },
    ))
}

/// Root of a decreasing function with `f(lo) > 0 > f(hi)`, to floating-point resolution.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..2100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

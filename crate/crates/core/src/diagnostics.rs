//! Trajectory bookkeeping and the monitored quantities: masses, norms,
//! Lyapunov functionals, tail decay rates and the limiting susceptible density.

use serde::Serialize;
use thiserror::Error;

use crate::grid::{Field, Grid};
use crate::integrator::State;
use crate::stencil::{gradient_l2, integrate_slice, neumaier_sum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("{0}")]
    Domain(String),
    #[error("need at least {needed} points in the fitting window, have {have}")]
    InsufficientData { needed: usize, have: usize },
}

/// One row of the time series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub t: f64,
    pub mass_s: f64,
    pub mass_i: f64,
    pub linf_s: f64,
    pub linf_i: f64,
    pub l2_grad_s: f64,
    pub l2_grad_i: f64,
    pub v1: Option<f64>,
    pub v3: Option<f64>,
    pub v4: Option<f64>,
    /// Mass added by positivity clamping so far.
    pub clamp_mass: f64,
    /// Running `int_0^t int_Omega I`.
    pub cumulative_i: f64,
}

impl Record {
    pub fn measure(grid: &Grid, state: &State, clamp_mass: f64, cumulative_i: f64) -> Record {
        Record {
            t: state.t,
            mass_s: integrate_slice(grid, state.s.values()),
            mass_i: integrate_slice(grid, state.i.values()),
            linf_s: state.s.linf(),
            linf_i: state.i.linf(),
            l2_grad_s: gradient_l2(grid, &state.s).unwrap_or(f64::NAN),
            l2_grad_i: gradient_l2(grid, &state.i).unwrap_or(f64::NAN),
            v1: None,
            v3: None,
            v4: None,
            clamp_mass,
            cumulative_i,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.mass_s + self.mass_i
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub s: Field,
    pub i: Field,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum StopReason {
    TEnd,
    Converged,
    Aborted(String),
}

impl StopReason {
    pub fn label(&self) -> &'static str {
        match self {
            StopReason::TEnd => "t_end",
            StopReason::Converged => "converged",
            StopReason::Aborted(_) => "aborted",
        }
    }
}

/// Which functional is being tracked, with its reference state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum LyapunovSpec {
    /// Sublinear constant endemic state; uses the log form when `q == 1`.
    V1 {
        s_star: f64,
        i_star: f64,
        p: f64,
        q: f64,
    },
    /// Disease-free attraction when `r^(1/q) >= N/|Omega|`.
    V3 { n_over_omega: f64, r: f64, q: f64 },
    /// Constant endemic state `(S^, I^)` for linear incidence in `I`.
    V4 {
        s_hat: f64,
        i_hat: f64,
        d_s: f64,
        d_i: f64,
    },
}

impl LyapunovSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LyapunovSpec::V1 { .. } => "V1",
            LyapunovSpec::V3 { .. } => "V3",
            LyapunovSpec::V4 { .. } => "V4",
        }
    }

    pub fn evaluate(&self, grid: &Grid, s: &Field, i: &Field) -> Result<f64, DiagnosticsError> {
        match *self {
            LyapunovSpec::V1 { s_star, i_star, p, q } => lyapunov_v1(grid, s, i, s_star, i_star, p, q),
            LyapunovSpec::V3 { n_over_omega, r, q } => Ok(lyapunov_v3(grid, s, i, n_over_omega, r, q)),
            LyapunovSpec::V4 {
                s_hat,
                i_hat,
                d_s,
                d_i,
            } => Ok(lyapunov_v4(grid, s, i, s_hat, i_hat, d_s, d_i)),
        }
    }
}

/// Per-step values of the tracked functional.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovTrace {
    pub spec: LyapunovSpec,
    pub values: Vec<f64>,
}

impl LyapunovTrace {
    /// Largest step-to-step increase.
    pub fn max_increase(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `V(t_{k+1}) <= V(t_k) + rel_slack * V(t_0)` for every accepted step.
    ///
    /// `abs_floor` bounds the round-off allowance when `V(t_0)` is itself near zero.
    pub fn is_monotone(&self, rel_slack: f64, abs_floor: f64) -> bool {
        let v0 = self.values.first().copied().unwrap_or(0.0);
        let allowance = (rel_slack * v0.abs()).max(abs_floor);
        self.values.len() < 2 || self.max_increase() <= allowance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub snapshots: Vec<Snapshot>,
    pub cumulative_i_integral: f64,
    pub stop_reason: StopReason,
    pub steps: usize,
    pub rejected_steps: usize,
    pub clamp_mass: f64,
    pub lyapunov: Option<LyapunovTrace>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    pub fn series(&self, f: impl Fn(&Record) -> f64) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t, f(r))).collect()
    }
}

/// `max_k |M_S + M_I + mu * int_0^t int I - N| / N` over the records.
pub fn mass_balance_residual(traj: &Trajectory, mu: f64, population: f64) -> f64 {
    traj.records
        .iter()
        .map(|r| (r.mass_s + r.mass_i + mu * r.cumulative_i - population).abs() / population)
        .fold(0.0, f64::max)
}

/// Limiting susceptible density `(N - mu * int_0^inf int I) / |Omega|` for `mu > 0`.
pub fn predict_s_star(
    traj: &Trajectory,
    mu: f64,
    population: f64,
    omega_measure: f64,
) -> Result<f64, DiagnosticsError> {
    if !(mu > 0.0) {
        return Err(DiagnosticsError::Domain(format!(
            "the limiting density formula needs mu > 0, got {mu}"
        )));
    }
    Ok((population - mu * traj.cumulative_i_integral) / omega_measure)
}

fn require_positive(f: &Field, name: &str) -> Result<(), DiagnosticsError> {
    match f.iter().position(|v| !(*v > 0.0)) {
        Some(k) => Err(DiagnosticsError::Domain(format!(
            "{name} must be positive, cell {k} holds {}",
            f[k]
        ))),
        None => Ok(()),
    }
}

/// Relative-entropy functional around the sublinear constant endemic state.
pub fn lyapunov_v1(
    grid: &Grid,
    s: &Field,
    i: &Field,
    s_star: f64,
    i_star: f64,
    p: f64,
    q: f64,
) -> Result<f64, DiagnosticsError> {
    require_positive(s, "S")?;
    require_positive(i, "I")?;
    let s_part = |sv: f64| -> f64 {
        if q == 1.0 {
            sv - s_star - s_star * (sv / s_star).ln()
        } else {
            (sv - s_star) - s_star.powf(q) / (1.0 - q) * (sv.powf(1.0 - q) - s_star.powf(1.0 - q))
        }
    };
    let i_part =
        |iv: f64| -> f64 { (iv - i_star) - i_star.powf(1.0 - p) / p * (iv.powf(p) - i_star.powf(p)) };
    let integrand = s.iter().zip(i.iter()).map(|(&sv, &iv)| s_part(sv) + i_part(iv));
    Ok(grid.cell_measure() * neumaier_sum(integrand))
}

/// `int [ (S - N/|Omega|)^2 / 2 + (r^(1/q) - N/|Omega|) I ]`.
pub fn lyapunov_v3(grid: &Grid, s: &Field, i: &Field, n_over_omega: f64, r: f64, q: f64) -> f64 {
    let weight = r.powf(1.0 / q) - n_over_omega;
    let integrand = s.iter().zip(i.iter()).map(|(&sv, &iv)| {
        let d = sv - n_over_omega;
        0.5 * d * d + weight * iv
    });
    grid.cell_measure() * neumaier_sum(integrand)
}

/// `int [ (S - S^ + I - I^)^2 / 2 + (d_S + d_I)^2 / (8 d_S d_I) (S - S^)^2 ]`.
pub fn lyapunov_v4(grid: &Grid, s: &Field, i: &Field, s_hat: f64, i_hat: f64, d_s: f64, d_i: f64) -> f64 {
    let k = (d_s + d_i).powi(2) / (8.0 * d_s * d_i);
    let integrand = s.iter().zip(i.iter()).map(|(&sv, &iv)| {
        let ds = sv - s_hat;
        let sum = ds + iv - i_hat;
        0.5 * sum * sum + k * ds * ds
    });
    grid.cell_measure() * neumaier_sum(integrand)
}

/// Minimum points in the fitting window.
pub const DECAY_MIN_POINTS: usize = 5;

/// Least-squares slope of `-ln(value)` against `t` over the last half of the series.
pub fn decay_rate(series: &[(f64, f64)]) -> Result<f64, DiagnosticsError> {
    let window = &series[series.len() / 2..];
    if window.len() < DECAY_MIN_POINTS {
        return Err(DiagnosticsError::InsufficientData {
            needed: DECAY_MIN_POINTS,
            have: window.len(),
        });
    }
    if let Some((t, v)) = window.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(DiagnosticsError::Domain(format!(
            "decay fit needs positive values, got {v} at t = {t}"
        )));
    }
    let n = window.len() as f64;
    let t_mean = window.iter().map(|(t, _)| t).sum::<f64>() / n;
    let y: Vec<f64> = window.iter().map(|(_, v)| -v.ln()).collect();
    let y_mean = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for ((t, _), yv) in window.iter().zip(&y) {
        let dt = t - t_mean;
        sxy += dt * (yv - y_mean);
        sxx += dt * dt;
    }
    if sxx == 0.0 {
        return Err(DiagnosticsError::Domain("fitting window spans zero time".into()));
    }
    Ok(sxy / sxx)
}

/// True when every state in the window lies within `tol * (1 + |S_last| + |I_last|)`
/// of the last one in summed max-norm.
pub fn detect_convergence(window: &[State], tol: f64) -> bool {
    let Some(last) = window.last() else {
        return false;
    };
    if window.len() < 2 {
        return false;
    }
    let scale = 1.0 + last.s.linf() + last.i.linf();
    window
        .iter()
        .all(|st| st.s.max_distance(&last.s) + st.i.max_distance(&last.i) <= tol * scale)
}

//! IMEX time stepping: implicit diffusion, explicit cross-diffusion and reaction.
//!
//! The explicit reaction terms satisfy `R_S + R_I = -mu * I` pointwise and the
//! implicit diffusion solves preserve cell sums, so the discrete total mass obeys
//! `M_new = M - dt * mu * int I_explicit` up to solver tolerance and clamping.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{
    detect_convergence, LyapunovSpec, LyapunovTrace, Record, Snapshot, StopReason, Trajectory,
};
use crate::grid::{Field, Grid};
use crate::linsolve::{self, SolveError};
use crate::model::{pow0, ModelError, SisSystem};
use crate::stencil::{cross_diffusion_into, integrate_slice, laplacian_into, NeumannOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Backward Euler diffusion with forward Euler explicit terms.
    BackwardEuler,
    /// Trapezoidal diffusion with a Heun predictor-corrector for the explicit terms.
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_floor")]
    pub positivity_floor: f64,
    #[serde(default = "default_linear_tol")]
    pub linear_tol: f64,
    #[serde(default = "default_max_shrink")]
    pub max_dt_shrink: u32,
}

fn default_scheme() -> Scheme {
    Scheme::BackwardEuler
}
fn default_floor() -> f64 {
    1e-13
}
fn default_linear_tol() -> f64 {
    1e-10
}
fn default_max_shrink() -> u32 {
    20
}

impl StepperConfig {
    pub fn new(dt: f64) -> Self {
        StepperConfig {
            dt,
            scheme: default_scheme(),
            positivity_floor: default_floor(),
            linear_tol: default_linear_tol(),
            max_dt_shrink: default_max_shrink(),
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<(), StepError> {
        let bad = |what: &str| Err(StepError::Config(what.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.positivity_floor > 0.0 && self.positivity_floor < 1e-3) {
            return bad("positivity_floor must lie in (0, 1e-3)");
        }
        if !(self.linear_tol > 0.0) {
            return bad("linear_tol must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("implicit solve failed: {0}")]
    LinearSolve(#[from] SolveError),
    #[error("non-finite value in {field} at cell {cell}")]
    NonFinite { field: &'static str, cell: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub s: Field,
    pub i: Field,
    pub t: f64,
}

impl State {
    pub fn new(s: Field, i: Field) -> Self {
        State { s, i, t: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: State,
    pub dt: f64,
    /// Mass added when raising cells to the positivity floor.
    pub clamp_mass: f64,
    /// `int I` as weighted by the explicit terms of this step.
    pub explicit_i_integral: f64,
}

/// Solves `(Id - dt * d * laplacian) u = rhs`.
pub fn solve_implicit_diffusion(
    grid: &Grid,
    rhs: &Field,
    d: f64,
    dt: f64,
    cfg: &StepperConfig,
) -> Result<Field, StepError> {
    grid.check_len(rhs).map_err(ModelError::from)?;
    if d == 0.0 || dt == 0.0 {
        return Ok(rhs.clone());
    }
    let op = NeumannOperator::shifted_identity(grid, dt * d);
    let (u, _) = linsolve::solve(&op, rhs.values(), cfg.linear_tol, linsolve::default_max_iter(&op))?;
    Ok(Field::new(u))
}

fn implicit_solve(grid: &Grid, rhs: Vec<f64>, d: f64, cfg: &StepperConfig) -> Result<Vec<f64>, StepError> {
    if d == 0.0 {
        return Ok(rhs);
    }
    let op = NeumannOperator::shifted_identity(grid, d);
    let (u, _) = linsolve::solve(&op, &rhs, cfg.linear_tol, linsolve::default_max_iter(&op))?;
    Ok(u)
}

/// Explicit right-hand sides `(R_S, R_I)`.
fn explicit_terms(sys: &SisSystem, s: &[f64], i: &[f64]) -> Result<(Vec<f64>, Vec<f64>), StepError> {
    let n = s.len();
    let prm = &sys.params;
    let mut rs = vec![0.0; n];
    if prm.chi != 0.0 {
        cross_diffusion_into(&sys.grid, s, i, &mut rs);
        rs.iter_mut().for_each(|v| *v *= prm.chi);
    }
    let mut ri = vec![0.0; n];
    let beta = sys.beta.values();
    let gamma = sys.gamma.values();
    for k in 0..n {
        if (s[k] <= 0.0 && prm.q < 1.0) || (i[k] <= 0.0 && prm.p < 1.0) {
            return Err(ModelError::FloorBreach("zero density with sublinear exponent").into());
        }
        let inc = beta[k] * pow0(s[k], prm.q) * pow0(i[k], prm.p);
        let recovery = gamma[k] * i[k];
        rs[k] += recovery - inc;
        ri[k] = inc - recovery - prm.mu * i[k];
    }
    Ok((rs, ri))
}

fn clamp(values: &mut [f64], floor: f64, cell_measure: f64, name: &'static str) -> Result<f64, StepError> {
    let mut added = 0.0;
    for (k, v) in values.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(StepError::NonFinite { field: name, cell: k });
        }
        if *v < floor {
            added += (floor - *v) * cell_measure;
            *v = floor;
        }
    }
    Ok(added)
}

/// One step of size `cfg.dt`.
pub fn step(sys: &SisSystem, state: &State, cfg: &StepperConfig) -> Result<StepOutput, StepError> {
    step_with_dt(sys, state, cfg, cfg.dt)
}

/// One step of size `dt`; the remaining settings come from `cfg`.
pub fn step_with_dt(
    sys: &SisSystem,
    state: &State,
    cfg: &StepperConfig,
    dt: f64,
) -> Result<StepOutput, StepError> {
    let grid = &sys.grid;
    let prm = &sys.params;
    let s = state.s.values();
    let i = state.i.values();
    let h = grid.cell_measure();
    let floor = cfg.positivity_floor;
    let (rs, ri) = explicit_terms(sys, s, i)?;
    let be_rhs = |u: &[f64], r: &[f64]| -> Vec<f64> { u.iter().zip(r).map(|(u, r)| u + dt * r).collect() };

    let (mut s_new, mut i_new, explicit_i) = match cfg.scheme {
        Scheme::BackwardEuler => {
            let s_new = implicit_solve(grid, be_rhs(s, &rs), dt * prm.d_s, cfg)?;
            let i_new = implicit_solve(grid, be_rhs(i, &ri), dt * prm.d_i, cfg)?;
            (s_new, i_new, integrate_slice(grid, i))
        }
        Scheme::CrankNicolson => {
            let mut s_pred = implicit_solve(grid, be_rhs(s, &rs), dt * prm.d_s, cfg)?;
            let mut i_pred = implicit_solve(grid, be_rhs(i, &ri), dt * prm.d_i, cfg)?;
            clamp(&mut s_pred, floor, h, "S")?;
            clamp(&mut i_pred, floor, h, "I")?;
            let (rs_pred, ri_pred) = explicit_terms(sys, &s_pred, &i_pred)?;
            let mut lap = vec![0.0; s.len()];
            let mut cn_rhs = |u: &[f64], d: f64, r0: &[f64], r1: &[f64]| -> Vec<f64> {
                laplacian_into(grid, u, &mut lap);
                (0..u.len())
                    .map(|k| u[k] + 0.5 * dt * (d * lap[k] + r0[k] + r1[k]))
                    .collect()
            };
            let rhs_s = cn_rhs(s, prm.d_s, &rs, &rs_pred);
            let rhs_i = cn_rhs(i, prm.d_i, &ri, &ri_pred);
            let s_new = implicit_solve(grid, rhs_s, 0.5 * dt * prm.d_s, cfg)?;
            let i_new = implicit_solve(grid, rhs_i, 0.5 * dt * prm.d_i, cfg)?;
            let weighted = 0.5 * (integrate_slice(grid, i) + integrate_slice(grid, &i_pred));
            (s_new, i_new, weighted)
        }
    };
    let clamp_mass = clamp(&mut s_new, floor, h, "S")? + clamp(&mut i_new, floor, h, "I")?;
    Ok(StepOutput {
        state: State {
            s: Field::new(s_new),
            i: Field::new(i_new),
            t: state.t + dt,
        },
        dt,
        clamp_mass,
        explicit_i_integral: explicit_i,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Number of consecutive records compared.
    pub window: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub stepper: StepperConfig,
    pub t_end: f64,
    pub output_interval: f64,
    pub snapshot_times: Vec<f64>,
    pub convergence: Option<ConvergenceConfig>,
    pub lyapunov: Option<LyapunovSpec>,
}

impl RunConfig {
    pub fn new(stepper: StepperConfig, t_end: f64, output_interval: f64) -> Self {
        RunConfig {
            stepper,
            t_end,
            output_interval,
            snapshot_times: Vec::new(),
            convergence: None,
            lyapunov: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    /// Last accepted state; the last healthy one when the run aborted.
    pub final_state: State,
}

/// Advances `initial` until `t_end`, convergence, or an abort.
pub fn run(sys: &SisSystem, initial: State, cfg: &RunConfig) -> Result<RunOutcome, StepError> {
    cfg.stepper.validate()?;
    if !(cfg.t_end >= 0.0 && cfg.t_end.is_finite()) {
        return Err(StepError::Config("t_end must be finite and non-negative".into()));
    }
    if !(cfg.output_interval > 0.0) {
        return Err(StepError::Config("output interval must be positive".into()));
    }
    if let Some(c) = cfg.convergence {
        if c.window < 2 {
            return Err(StepError::Config("convergence window must be at least 2".into()));
        }
    }
    let grid = &sys.grid;
    let mut warnings = Vec::new();
    if sys.params.chi != 0.0 {
        let hmin = grid
            .extents()
            .iter()
            .zip(grid.cells())
            .map(|(l, n)| l / *n as f64)
            .fold(f64::INFINITY, f64::min);
        let limit = hmin * hmin / (4.0 * (sys.params.d_s + sys.params.chi.abs() * initial.i.linf()));
        if cfg.stepper.dt > limit {
            warnings.push(format!(
                "dt = {} exceeds the explicit cross-diffusion guard h^2/(4(d_S+|chi| max I)) = {limit:.3e}",
                cfg.stepper.dt
            ));
        }
    }

    let t0 = initial.t;
    let mut state = initial;
    let mut cumulative_i = 0.0;
    let mut clamp_total = 0.0;
    let mut mass_i_prev = integrate_slice(grid, state.i.values());
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut lyap = match cfg.lyapunov {
        Some(spec) => Some(LyapunovTrace {
            spec,
            values: vec![spec
                .evaluate(grid, &state.s, &state.i)
                .map_err(|e| StepError::Config(e.to_string()))?],
        }),
        None => None,
    };
    let mut recent: VecDeque<State> = VecDeque::new();
    let window = cfg.convergence.map(|c| c.window).unwrap_or(0);

    let mut snap_times: Vec<f64> = cfg
        .snapshot_times
        .iter()
        .copied()
        .filter(|t| *t >= t0 && *t <= cfg.t_end)
        .collect();
    snap_times.sort_by(|a, b| a.total_cmp(b));
    snap_times.dedup();
    let mut next_snap = 0;

    let take_record = |state: &State, clamp_total: f64, cumulative_i: f64| -> Record {
        let mut rec = Record::measure(grid, state, clamp_total, cumulative_i);
        if let Some(spec) = cfg.lyapunov {
            let v = spec.evaluate(grid, &state.s, &state.i).ok();
            match spec {
                LyapunovSpec::V1 { .. } => rec.v1 = v,
                LyapunovSpec::V3 { .. } => rec.v3 = v,
                LyapunovSpec::V4 { .. } => rec.v4 = v,
            }
        }
        rec
    };

    records.push(take_record(&state, 0.0, 0.0));
    if window > 0 {
        recent.push_back(state.clone());
    }
    while next_snap < snap_times.len() && snap_times[next_snap] <= t0 {
        snapshots.push(Snapshot {
            t: state.t,
            s: state.s.clone(),
            i: state.i.clone(),
        });
        next_snap += 1;
    }

    let base_dt = cfg.stepper.dt;
    let mut dt_try = base_dt;
    let mut shrinks = 0u32;
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut record_index = 1u64;
    let mut stop = StopReason::TEnd;
    let eps_t = 1e-12 * cfg.t_end.abs().max(base_dt);

    while cfg.t_end - state.t > eps_t {
        let next_record = t0 + record_index as f64 * cfg.output_interval;
        let mut target = next_record.min(cfg.t_end);
        if next_snap < snap_times.len() {
            target = target.min(snap_times[next_snap]);
        }
        let gap = target - state.t;
        let (dt, lands) = if gap <= dt_try * (1.0 + 1e-9) {
            (gap, true)
        } else {
            (dt_try, false)
        };
        match step_with_dt(sys, &state, &cfg.stepper, dt) {
            Ok(out) => {
                let mut next = out.state;
                if lands {
                    next.t = target;
                }
                let mass_i_new = integrate_slice(grid, next.i.values());
                cumulative_i += 0.5 * dt * (mass_i_prev + mass_i_new);
                mass_i_prev = mass_i_new;
                clamp_total += out.clamp_mass;
                state = next;
                steps += 1;
                shrinks = 0;
                dt_try = (dt_try * 2.0).min(base_dt);
                if let Some(tr) = lyap.as_mut() {
                    if let Ok(v) = tr.spec.evaluate(grid, &state.s, &state.i) {
                        tr.values.push(v);
                    }
                }
                let at_record = (state.t - next_record).abs() <= eps_t;
                let at_end = cfg.t_end - state.t <= eps_t;
                if at_record {
                    record_index += 1;
                }
                if at_record || at_end {
                    records.push(take_record(&state, clamp_total, cumulative_i));
                }
                while next_snap < snap_times.len() && snap_times[next_snap] <= state.t + eps_t {
                    snapshots.push(Snapshot {
                        t: state.t,
                        s: state.s.clone(),
                        i: state.i.clone(),
                    });
                    next_snap += 1;
                }
                if at_record && window > 0 {
                    recent.push_back(state.clone());
                    if recent.len() > window {
                        recent.pop_front();
                    }
                    if recent.len() == window {
                        let tol = cfg.convergence.map(|c| c.tol).unwrap_or(0.0);
                        if detect_convergence(recent.make_contiguous(), tol) {
                            stop = StopReason::Converged;
                            break;
                        }
                    }
                }
            }
            Err(err) => {
                rejected += 1;
                shrinks += 1;
                if shrinks > cfg.stepper.max_dt_shrink {
                    stop = StopReason::Aborted(format!(
                        "step at t = {} failed after {} dt halvings (suspected blow-up): {err}",
                        state.t, cfg.stepper.max_dt_shrink
                    ));
                    break;
                }
                dt_try *= 0.5;
            }
        }
    }
    if records.last().map(|r| r.t) != Some(state.t) {
        records.push(take_record(&state, clamp_total, cumulative_i));
    }

    Ok(RunOutcome {
        trajectory: Trajectory {
            records,
            snapshots,
            cumulative_i_integral: cumulative_i,
            stop_reason: stop,
            steps,
            rejected_steps: rejected,
            clamp_mass: clamp_total,
            lyapunov: lyap,
            warnings,
        },
        final_state: state,
    })
}

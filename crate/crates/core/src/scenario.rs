//! Scenario files, run orchestration, artifacts and parameter sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::diagnostics::{
    decay_rate, mass_balance_residual, predict_s_star, LyapunovSpec, StopReason, Trajectory,
};
use crate::equilibria::{
    basic_reproduction_number, constant_ee_linear, constant_ee_sublinear, heterogeneous_ee, SpectralResult,
};
use crate::grid::{Grid, GridError};
use crate::integrator::{run, ConvergenceConfig, RunConfig, State, StepError, StepperConfig};
use crate::model::{
    materialize_coefficient, validate_initial_data, CoefficientSpec, ConservedTotals, ModelError,
    ModelParams, SisSystem,
};
use crate::regime::{
    boundedness_certificate, predict_long_time, BoundednessCertificate, Outcome, Prediction, RegimeError,
    ThresholdLimit,
};

/// Relative mass-balance defect above which a run is never reported as successful.
pub const MASS_BALANCE_LIMIT: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
}

/// `gamma` either as its own profile or as a constant multiple of `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Ratio(RatioToBeta),
    Profile(CoefficientSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioToBeta {
    pub ratio_to_beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(rename = "S")]
    pub s: CoefficientSpec,
    #[serde(rename = "I")]
    pub i: CoefficientSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_interval")]
    pub interval: f64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
}

fn default_interval() -> f64 {
    1.0
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            interval: default_interval(),
            snapshots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Analysis {
    Certificate,
    Prediction,
    R0,
    Equilibria,
    Lyapunov,
    Rates,
}

fn all_analyses() -> Vec<Analysis> {
    vec![
        Analysis::Certificate,
        Analysis::Prediction,
        Analysis::R0,
        Analysis::Equilibria,
        Analysis::Lyapunov,
        Analysis::Rates,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub domain: DomainSpec,
    pub params: ModelParams,
    pub beta: CoefficientSpec,
    pub gamma: GammaSpec,
    pub initial: InitialSpec,
    pub stepper: StepperConfig,
    pub t_end: f64,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default = "all_analyses")]
    pub analyses: Vec<Analysis>,
}

/// A scenario with its grid, coefficients and initial state materialized.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub system: SisSystem,
    pub initial: State,
    pub totals: ConservedTotals,
}

impl Scenario {
    pub fn from_json(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            path: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn wants(&self, a: Analysis) -> bool {
        self.analyses.contains(&a)
    }

    /// Materializes and validates everything the run needs.
    pub fn prepare(&self) -> Result<Prepared, ScenarioError> {
        if self.id.trim().is_empty() {
            return Err(ScenarioError::Invalid("id must not be empty".into()));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(ScenarioError::Invalid(format!(
                "t_end must be finite and >= 0, got {}",
                self.t_end
            )));
        }
        if !(self.output.interval > 0.0) {
            return Err(ScenarioError::Invalid("output.interval must be positive".into()));
        }
        self.stepper.validate()?;
        let grid = Grid::new(&self.domain.extents, &self.domain.cells)?;
        self.params.validate()?;
        let beta = materialize_coefficient(&self.beta, &grid)?;
        let gamma = match &self.gamma {
            GammaSpec::Ratio(r) => {
                if !(r.ratio_to_beta > 0.0 && r.ratio_to_beta.is_finite()) {
                    return Err(ModelError::Parameter {
                        name: "gamma.ratio_to_beta",
                        value: r.ratio_to_beta,
                        requirement: "ratio_to_beta > 0",
                    }
                    .into());
                }
                beta.map(|b| r.ratio_to_beta * b)
            }
            GammaSpec::Profile(spec) => materialize_coefficient(spec, &grid)?,
        };
        let s0 = self.initial.s.evaluate(&grid)?;
        let i0 = self.initial.i.evaluate(&grid)?;
        validate_initial_data(&s0, &i0, self.params.p, self.params.q)?;
        let totals = ConservedTotals::from_initial(&grid, &s0, &i0)?;
        let system = SisSystem::new(grid, self.params, beta, gamma)?;
        Ok(Prepared {
            scenario: self.clone(),
            system,
            initial: State::new(s0, i0),
            totals,
        })
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let sc = Scenario::from_json(&text, &path.display().to_string())?;
    sc.prepare()?;
    Ok(sc)
}

/// The functional whose monotone decay the theory guarantees for this configuration.
pub fn lyapunov_for(prep: &Prepared) -> Option<LyapunovSpec> {
    let prm = &prep.system.params;
    if prm.mu != 0.0 || prm.chi != 0.0 {
        return None;
    }
    let r = prep.system.proportionality_ratio()?;
    let tau = prep.totals.mean_density();
    if prm.p < 1.0 {
        let eq = constant_ee_sublinear(tau, r, prm.p, prm.q).ok()?;
        return Some(LyapunovSpec::V1 {
            s_star: eq.s[0],
            i_star: eq.i[0],
            p: prm.p,
            q: prm.q,
        });
    }
    if prm.p == 1.0 {
        return Some(match constant_ee_linear(tau, r, prm.q) {
            Some(eq) => LyapunovSpec::V4 {
                s_hat: eq.s[0],
                i_hat: eq.i[0],
                d_s: prm.d_s,
                d_i: prm.d_i,
            },
            None => LyapunovSpec::V3 {
                n_over_omega: tau,
                r,
                q: prm.q,
            },
        });
    }
    None
}

/// Spectral quantities for the configuration.
pub fn spectral_for(prep: &Prepared) -> Result<SpectralResult, ScenarioError> {
    let sys = &prep.system;
    basic_reproduction_number(
        &sys.grid,
        &sys.beta,
        &sys.gamma,
        sys.params.d_i,
        prep.totals.mean_density(),
        sys.params.q,
    )
    .map_err(|e| ScenarioError::Regime(e.into()))
}

/// Static analyses: certificate, spectral data and prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticReport {
    pub certificate: Option<BoundednessCertificate>,
    pub spectral: Option<SpectralResult>,
    pub prediction: Option<Prediction>,
    pub errors: Vec<String>,
}

pub fn static_analyses(prep: &Prepared) -> StaticReport {
    let sc = &prep.scenario;
    let sys = &prep.system;
    let mut errors = Vec::new();
    let certificate = sc
        .wants(Analysis::Certificate)
        .then(|| boundedness_certificate(sys.grid.dim(), sys.params.p, sys.params.q));
    let needs_spectral = sc.wants(Analysis::R0)
        || (sc.wants(Analysis::Prediction)
            && sys.params.p == 1.0
            && sys.params.mu == 0.0
            && sys.params.chi == 0.0);
    let spectral = if needs_spectral {
        match spectral_for(prep) {
            Ok(s) => Some(s),
            Err(e) => {
                errors.push(format!("R0: {e}"));
                None
            }
        }
    } else {
        None
    };
    let prediction = if sc.wants(Analysis::Prediction) {
        match predict_long_time(
            &sys.params,
            &sys.beta,
            &sys.gamma,
            &prep.totals,
            spectral.as_ref(),
        ) {
            Ok(p) => Some(p),
            Err(e) => {
                errors.push(format!("prediction: {e}"));
                None
            }
        }
    } else {
        None
    };
    StaticReport {
        certificate,
        spectral,
        prediction,
        errors,
    }
}

/// Summary scalars of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub id: String,
    pub success: bool,
    pub stop_reason: StopReason,
    pub steps: usize,
    pub rejected_steps: usize,
    pub final_t: f64,
    pub final_mass_s: f64,
    pub final_mass_i: f64,
    pub final_linf_s: f64,
    pub final_linf_i: f64,
    pub final_min_s: f64,
    pub final_min_i: f64,
    pub final_mean_s: f64,
    pub mass_balance_residual: f64,
    pub clamp_mass: f64,
    pub certificate: Option<BoundednessCertificate>,
    pub prediction: Option<Prediction>,
    pub spectral: Option<SpectralResult>,
    /// `(N - mu int int I) / |Omega|` when deaths are present.
    pub predicted_s_limit: Option<f64>,
    /// Max-norm distance between the final state and the predicted limit.
    pub distance_to_prediction: Option<f64>,
    pub equilibrium_residual: Option<f64>,
    pub decay_rate_linf_i: Option<f64>,
    pub decay_rate_mass_i: Option<f64>,
    pub lyapunov_functional: Option<&'static str>,
    pub lyapunov_max_increase: Option<f64>,
    pub lyapunov_monotone: Option<bool>,
    pub warnings: Vec<String>,
    pub errors: Vec<String>,
}

/// In-memory result of a scenario run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
    pub final_state: State,
}

/// Runs a prepared scenario and evaluates the requested analyses.
pub fn execute(prep: &Prepared) -> Result<RunResult, ScenarioError> {
    let sc = &prep.scenario;
    let sys = &prep.system;
    let grid = &sys.grid;
    let prm = &sys.params;
    let report = static_analyses(prep);
    let mut errors = report.errors.clone();

    let lyapunov = if sc.wants(Analysis::Lyapunov) {
        lyapunov_for(prep)
    } else {
        None
    };
    let cfg = RunConfig {
        stepper: sc.stepper,
        t_end: sc.t_end,
        output_interval: sc.output.interval,
        snapshot_times: sc.output.snapshots.clone(),
        convergence: sc.convergence,
        lyapunov,
    };
    let outcome = run(sys, prep.initial.clone(), &cfg)?;
    let traj = outcome.trajectory;
    let fin = outcome.final_state;
    let totals = &prep.totals;
    let residual = mass_balance_residual(&traj, prm.mu, totals.population);
    let omega = grid.omega_measure();
    let mass_s = crate::stencil::integrate_slice(grid, fin.s.values());

    let predicted_s_limit = (prm.mu > 0.0)
        .then(|| predict_s_star(&traj, prm.mu, totals.population, omega).ok())
        .flatten();

    let mut distance = None;
    let mut equilibrium_residual = None;
    if let Some(pred) = &report.prediction {
        let constant = |s: f64, i: f64| {
            Some(
                fin.s
                    .map(|v| (v - s).abs())
                    .max()
                    .max(fin.i.map(|v| (v - i).abs()).max()),
            )
        };
        let heterogeneous = |errors: &mut Vec<String>, residual: &mut Option<f64>| -> Option<f64> {
            if !sc.wants(Analysis::Equilibria) {
                return None;
            }
            let tau = totals.mean_density();
            match heterogeneous_ee(grid, tau, &sys.beta, &sys.gamma, prm.d_i, prm.p, prm.q, 1e-10) {
                Ok((eq, _)) => {
                    *residual = Some(eq.residual);
                    Some(fin.s.max_distance(&eq.s).max(fin.i.max_distance(&eq.i)))
                }
                Err(e) => {
                    errors.push(format!("equilibria: {e}"));
                    None
                }
            }
        };
        distance = match &pred.outcome {
            Outcome::ExtinctionBoth => Some(fin.s.linf().max(fin.i.linf())),
            Outcome::DiseaseFree { .. } => predicted_s_limit.and_then(|s| constant(s, 0.0)),
            Outcome::ConstantEndemic { s, i } => constant(*s, *i),
            Outcome::HeterogeneousEndemic => heterogeneous(&mut errors, &mut equilibrium_residual),
            Outcome::ThresholdByR0 { limit, .. } => match limit {
                ThresholdLimit::DiseaseFree { s } => constant(*s, 0.0),
                ThresholdLimit::ConstantEndemic { s, i } => constant(*s, *i),
                ThresholdLimit::HeterogeneousEndemic => heterogeneous(&mut errors, &mut equilibrium_residual),
            },
            Outcome::Unknown { .. } => None,
        };
    }

    let (mut rate_i, mut rate_mass) = (None, None);
    if sc.wants(Analysis::Rates) {
        // A state that never moves away from its start has nothing to fit.
        if traj.records.len() >= 2 * crate::diagnostics::DECAY_MIN_POINTS {
            rate_i = decay_rate(&traj.series(|r| r.linf_i)).ok();
            rate_mass = decay_rate(&traj.series(|r| r.mass_i)).ok();
        }
    }

    let (mut ly_name, mut ly_inc, mut ly_ok) = (None, None, None);
    if let Some(trace) = &traj.lyapunov {
        let floor = 64.0 * f64::EPSILON * totals.population.max(1.0) * (1.0 + totals.mean_density());
        ly_name = Some(trace.spec.name());
        ly_inc = Some(if trace.values.len() < 2 {
            0.0
        } else {
            trace.max_increase()
        });
        ly_ok = Some(trace.is_monotone(1e-8, floor));
    }

    let aborted = matches!(traj.stop_reason, StopReason::Aborted(_));
    let mut warnings = traj.warnings.clone();
    if sc.wants(Analysis::Lyapunov) && lyapunov.is_none() {
        warnings.push("no Lyapunov functional applies to this configuration".into());
    }
    if residual > MASS_BALANCE_LIMIT {
        errors.push(format!(
            "mass-balance residual {residual:e} exceeds {MASS_BALANCE_LIMIT:e}"
        ));
    }
    let summary = RunSummary {
        id: sc.id.clone(),
        success: !aborted && errors.is_empty(),
        stop_reason: traj.stop_reason.clone(),
        steps: traj.steps,
        rejected_steps: traj.rejected_steps,
        final_t: fin.t,
        final_mass_s: mass_s,
        final_mass_i: crate::stencil::integrate_slice(grid, fin.i.values()),
        final_linf_s: fin.s.linf(),
        final_linf_i: fin.i.linf(),
        final_min_s: fin.s.min(),
        final_min_i: fin.i.min(),
        final_mean_s: mass_s / omega,
        mass_balance_residual: residual,
        clamp_mass: traj.clamp_mass,
        certificate: report.certificate,
        prediction: report.prediction,
        spectral: report.spectral,
        predicted_s_limit,
        distance_to_prediction: distance,
        equilibrium_residual,
        decay_rate_linf_i: rate_i,
        decay_rate_mass_i: rate_mass,
        lyapunov_functional: ly_name,
        lyapunov_max_increase: ly_inc,
        lyapunov_monotone: ly_ok,
        warnings,
        errors,
    };
    Ok(RunResult {
        summary,
        trajectory: traj,
        final_state: fin,
    })
}

/// Fixed-width float text with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes `timeseries.csv`, one snapshot CSV per snapshot and `summary.json`.
pub fn write_artifacts(prep: &Prepared, result: &RunResult, out_dir: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut w = csv::Writer::from_path(out_dir.join("timeseries.csv"))?;
    w.write_record([
        "t",
        "mass_S",
        "mass_I",
        "linf_S",
        "linf_I",
        "clamp_mass",
        "V1",
        "V3",
        "V4",
        "l2_gradS",
        "l2_gradI",
        "cumulative_I",
    ])?;
    for r in &result.trajectory.records {
        w.write_record([
            fmt_f64(r.t),
            fmt_f64(r.mass_s),
            fmt_f64(r.mass_i),
            fmt_f64(r.linf_s),
            fmt_f64(r.linf_i),
            fmt_f64(r.clamp_mass),
            opt(r.v1),
            opt(r.v3),
            opt(r.v4),
            fmt_f64(r.l2_grad_s),
            fmt_f64(r.l2_grad_i),
            fmt_f64(r.cumulative_i),
        ])?;
    }
    w.flush().map_err(io_err(out_dir))?;

    let grid = &prep.system.grid;
    for (k, snap) in result.trajectory.snapshots.iter().enumerate() {
        let path = out_dir.join(format!("snapshot_{k:03}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        if grid.dim() == 1 {
            w.write_record(["x", "S", "I"])?;
        } else {
            w.write_record(["x", "y", "S", "I"])?;
        }
        for c in 0..grid.len() {
            let (x, y) = grid.center(c);
            let mut row = vec![fmt_f64(x)];
            if grid.dim() == 2 {
                row.push(fmt_f64(y));
            }
            row.push(fmt_f64(snap.s[c]));
            row.push(fmt_f64(snap.i[c]));
            w.write_record(&row)?;
        }
        w.flush().map_err(io_err(&path))?;
    }

    let snapshot_times: Vec<f64> = result.trajectory.snapshots.iter().map(|s| s.t).collect();
    let doc = json!({
        "scenario": prep.scenario,
        "summary": result.summary,
        "snapshot_times": snapshot_times,
    });
    let path = out_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&doc).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(())
}

/// Runs a scenario and writes its artifacts under `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<RunSummary, ScenarioError> {
    let prep = scenario.prepare()?;
    let result = execute(&prep)?;
    write_artifacts(&prep, &result, out_dir)?;
    Ok(result.summary)
}

/// One swept coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    /// Dotted path into the scenario, e.g. `params.p` or `domain.cells.0`.
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes {
    pub axes: Vec<Axis>,
}

pub fn load_axes(path: &Path) -> Result<Axes, ScenarioError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let axes: Axes = serde_json::from_str(&text).map_err(|e| ScenarioError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if axes.axes.is_empty() || axes.axes.iter().any(|a| a.values.is_empty()) {
        return Err(ScenarioError::Invalid(
            "every sweep axis needs at least one value".into(),
        ));
    }
    Ok(axes)
}

/// All combinations, the first axis varying slowest.
pub fn expand(axes: &Axes) -> Vec<Vec<f64>> {
    let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes.axes {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push(*v);
                    c
                })
            })
            .collect();
    }
    combos
}

fn set_path(doc: &mut Value, path: &str, value: f64) -> Result<(), ScenarioError> {
    let missing = || ScenarioError::Invalid(format!("sweep path '{path}' does not name a numeric field"));
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last && !map.contains_key(*part) {
                    // Optional scalars such as params.chi may be absent from the template.
                    map.insert(part.to_string(), Value::Null);
                }
                map.get_mut(*part).ok_or_else(missing)?
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| missing())?;
                items.get_mut(idx).ok_or_else(missing)?
            }
            _ => return Err(missing()),
        };
    }
    if !(cur.is_number() || cur.is_null()) {
        return Err(missing());
    }
    // Integer-valued fields such as cell counts must stay integers.
    *cur = if value.fract() == 0.0 && cur.is_u64() {
        json!(value as u64)
    } else {
        json!(value)
    };
    Ok(())
}

/// Per-combination outcome in a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub index: usize,
    pub id: String,
    pub values: Vec<f64>,
    pub result: Result<RunSummary, String>,
}

/// Expands and runs every combination with `jobs` worker threads; rows keep expansion order.
pub fn sweep(
    template: &Value,
    axes: &Axes,
    jobs: usize,
    out_dir: &Path,
) -> Result<Vec<SweepRow>, ScenarioError> {
    use rayon::prelude::*;

    let base_id = template
        .get("id")
        .and_then(Value::as_str)
        .unwrap_or("sweep")
        .to_string();
    let combos = expand(axes);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        combos
            .par_iter()
            .enumerate()
            .map(|(index, values)| {
                let id = format!("{base_id}-{index:04}");
                let attempt = || -> Result<RunSummary, ScenarioError> {
                    let mut doc = template.clone();
                    for (axis, v) in axes.axes.iter().zip(values) {
                        set_path(&mut doc, &axis.path, *v)?;
                    }
                    if let Value::Object(map) = &mut doc {
                        map.insert("id".into(), Value::String(id.clone()));
                    }
                    let sc: Scenario =
                        serde_json::from_value(doc).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
                    run_scenario(&sc, &out_dir.join(&id))
                };
                SweepRow {
                    index,
                    id: id.clone(),
                    values: values.clone(),
                    result: attempt().map_err(|e| e.to_string()),
                }
            })
            .collect()
    });
    write_sweep_table(&rows, axes, &out_dir.join("sweep.csv"))?;
    Ok(rows)
}

fn write_sweep_table(rows: &[SweepRow], axes: &Axes, path: &Path) -> Result<(), ScenarioError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = vec!["index".into(), "id".into()];
    header.extend(axes.axes.iter().map(|a| a.path.clone()));
    header.extend(
        [
            "success",
            "stop_reason",
            "final_t",
            "mass_balance_residual",
            "final_linf_S",
            "final_linf_I",
            "final_mean_S",
            "verdict",
            "prediction",
            "r0",
            "lambda_star",
            "distance_to_prediction",
            "decay_rate_linf_I",
            "lyapunov_monotone",
            "error",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.index.to_string(), row.id.clone()];
        rec.extend(row.values.iter().map(|v| fmt_f64(*v)));
        match &row.result {
            Ok(s) => {
                let verdict = s
                    .certificate
                    .and_then(|c| serde_json::to_value(c.verdict).ok())
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default();
                let prediction = s
                    .prediction
                    .as_ref()
                    .map(|p| outcome_label(&p.outcome).to_string())
                    .unwrap_or_default();
                rec.extend([
                    s.success.to_string(),
                    s.stop_reason.label().to_string(),
                    fmt_f64(s.final_t),
                    fmt_f64(s.mass_balance_residual),
                    fmt_f64(s.final_linf_s),
                    fmt_f64(s.final_linf_i),
                    fmt_f64(s.final_mean_s),
                    verdict,
                    prediction,
                    opt(s.spectral.as_ref().map(|x| x.r0)),
                    opt(s.spectral.as_ref().map(|x| x.lambda_star)),
                    opt(s.distance_to_prediction),
                    opt(s.decay_rate_linf_i),
                    s.lyapunov_monotone.map(|b| b.to_string()).unwrap_or_default(),
                    s.errors.join("; "),
                ]);
            }
            Err(e) => {
                rec.push("false".into());
                rec.extend(std::iter::repeat_n(String::new(), 13));
                rec.push(e.clone());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn outcome_label(o: &Outcome) -> &'static str {
    match o {
        Outcome::ExtinctionBoth => "extinction-both",
        Outcome::DiseaseFree { .. } => "disease-free",
        Outcome::ConstantEndemic { .. } => "constant-endemic",
        Outcome::HeterogeneousEndemic => "heterogeneous-endemic",
        Outcome::ThresholdByR0 { limit, .. } => match limit {
            ThresholdLimit::DiseaseFree { .. } => "threshold-disease-free",
            ThresholdLimit::ConstantEndemic { .. } => "threshold-constant-endemic",
            ThresholdLimit::HeterogeneousEndemic => "threshold-heterogeneous-endemic",
        },
        Outcome::Unknown { .. } => "unknown",
    }
}

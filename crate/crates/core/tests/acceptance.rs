//! End-to-end acceptance criteria. Each prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use sislab::diagnostics::{decay_rate, mass_balance_residual, predict_s_star, LyapunovSpec};
use sislab::equilibria::{basic_reproduction_number, heterogeneous_ee};
use sislab::integrator::{run, step, RunConfig, Scheme, State, StepperConfig};
use sislab::regime::{boundedness_certificate, Verdict};
use sislab::scenario::{run_scenario, sweep, Axes, Axis, Scenario};
use sislab::stencil::{integrate, laplacian, NeumannOperator};
use sislab::{ConservedTotals, Field, Grid, ModelParams, SisSystem};

type Check = Result<String, String>;
type Criterion<'a> = (&'a str, Box<dyn Fn() -> Check>);

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn params(d_s: f64, d_i: f64, chi: f64, mu: f64, p: f64, q: f64) -> ModelParams {
    ModelParams {
        d_s,
        d_i,
        chi,
        mu,
        p,
        q,
    }
}

fn scenario(v: Value) -> Scenario {
    serde_json::from_value(v).expect("scenario literal")
}

fn total_mass(g: &Grid, st: &State) -> f64 {
    integrate(g, &st.s).unwrap() + integrate(g, &st.i).unwrap()
}

fn conservation_system(mu: f64) -> (SisSystem, State) {
    let g = Grid::interval(1.0, 256).unwrap();
    let beta = g.field_from_fn(|x, _| 2.0 + (2.0 * std::f64::consts::PI * x).cos());
    let sys = SisSystem::new(
        g.clone(),
        params(1.0, 0.5, 0.5, mu, 1.0, 1.0),
        beta,
        g.constant(1.0),
    )
    .unwrap();
    let pi = std::f64::consts::PI;
    let st = State::new(
        g.field_from_fn(|x, _| 1.0 + 0.5 * (pi * x).cos()),
        g.field_from_fn(|x, _| 0.2 + 0.15 * (3.0 * pi * x).cos()),
    );
    (sys, st)
}

fn mass_conservation() -> Check {
    let (sys, mut st) = conservation_system(0.0);
    let g = sys.grid.clone();
    let n0 = total_mass(&g, &st);
    let cfg = StepperConfig::new(1e-4);
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut clamp = 0.0;
    for _ in 0..10_000 {
        let out = step(&sys, &st, &cfg).map_err(|e| e.to_string())?;
        clamp += out.clamp_mass;
        st = out.state;
        worst = worst.max((total_mass(&g, &st) - n0).abs() / n0);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst <= 1e-9,
        format!("max relative mass defect {worst:e} > 1e-9"),
    )?;
    ensure(secs < 10.0, format!("took {secs:.2} s"))?;
    ensure(clamp < 1e-10 * n0, format!("clamp mass {clamp:e}"))?;
    Ok(format!("max defect {worst:.2e} over 1e4 steps, {secs:.2} s"))
}

fn mass_balance() -> Check {
    let mut res = Vec::new();
    for dt in [2e-3, 1e-3] {
        let (sys, st) = conservation_system(0.5);
        let n0 = total_mass(&sys.grid, &st);
        let cfg = RunConfig::new(
            StepperConfig::new(dt).with_scheme(Scheme::CrankNicolson),
            2.0,
            0.01,
        );
        let out = run(&sys, st, &cfg).map_err(|e| e.to_string())?;
        ensure(
            out.trajectory.clamp_mass < 1e-10 * n0,
            "clamping activated".into(),
        )?;
        res.push(mass_balance_residual(&out.trajectory, 0.5, n0));
    }
    let ratio = res[0] / res[1];
    ensure(
        res[1] <= 1e-6 && res[0] <= 1e-6,
        format!("residuals {:e}, {:e}", res[0], res[1]),
    )?;
    ensure(
        ratio >= 1.8,
        format!("halving dt reduced the residual only {ratio:.2}x"),
    )?;
    Ok(format!(
        "residual {:.2e} -> {:.2e} on halving dt ({ratio:.2}x)",
        res[0], res[1]
    ))
}

fn threshold_scenario(id: &str, r: f64) -> Scenario {
    scenario(json!({
        "id": id,
        "domain": {"extents": [1.0], "cells": [128]},
        "params": {"d_S": 0.5, "d_I": 0.25, "chi": 0.0, "mu": 0.0, "p": 1.0, "q": 1.0},
        "beta": 1.0,
        "gamma": {"ratio_to_beta": r},
        "initial": {"S": "0.7 + 0.2 * cos(pi * x)", "I": "0.3 + 0.1 * cos(2 * pi * x)"},
        "stepper": {"dt": 0.01},
        "t_end": 400.0,
        "output": {"interval": 1.0, "snapshots": [0.0, 400.0]},
        "convergence": {"window": 5, "tol": 1e-12}
    }))
}

fn threshold_dynamics() -> Check {
    let mut notes = Vec::new();
    // N/|Omega| = 1; r = 0.5 is endemic, r = 2 and r = 1 are not.
    for (r, expected) in [(0.5, (0.5, 0.5)), (2.0, (1.0, 0.0))] {
        let sc = threshold_scenario(&format!("threshold-r{r}"), r);
        let start = Instant::now();
        let prep = sc.prepare().map_err(|e| e.to_string())?;
        let res = sislab::scenario::execute(&prep).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let fin = &res.final_state;
        let dist = fin
            .s
            .map(|v| (v - expected.0).abs())
            .max()
            .max(fin.i.map(|v| (v - expected.1).abs()).max());
        ensure(
            dist <= 1e-3,
            format!("r = {r}: distance {dist:e} to {expected:?}"),
        )?;
        ensure(secs < 60.0, format!("r = {r}: took {secs:.1} s"))?;
        let reported = res.summary.distance_to_prediction.unwrap_or(f64::INFINITY);
        ensure(
            (reported - dist).abs() <= 1e-12,
            format!("summary distance {reported:e} disagrees"),
        )?;
        ensure(
            res.summary.success,
            format!("r = {r}: run reported failure {:?}", res.summary.errors),
        )?;
        notes.push(format!("r={r}: {dist:.1e} in {secs:.1}s"));
    }
    Ok(notes.join(", "))
}

fn extinction() -> Check {
    let g = Grid::interval(1.0, 64).unwrap();
    let pi = std::f64::consts::PI;
    let mut notes = Vec::new();
    for chi in [0.0, 0.3] {
        let sys = SisSystem::new(
            g.clone(),
            params(0.1, 0.1, chi, 0.5, 0.7, 1.0),
            g.constant(40.0),
            g.constant(0.5),
        )
        .unwrap();
        let st = State::new(
            g.field_from_fn(|x, _| 1.0 + 0.2 * (pi * x).cos()),
            g.field_from_fn(|x, _| 0.5 + 0.1 * (2.0 * pi * x).cos()),
        );
        let n0 = total_mass(&g, &st);
        let horizon = 400.0;
        let cfg = RunConfig::new(StepperConfig::new(0.01), horizon, 1.0);
        let out = run(&sys, st, &cfg).map_err(|e| e.to_string())?;
        let fin = &out.final_state;
        let size = fin.s.linf() + fin.i.linf();
        ensure(
            size < 1e-3,
            format!("chi = {chi}: |S|+|I| = {size:e} at t = {horizon}"),
        )?;
        ensure(
            out.trajectory.clamp_mass < 1e-10 * n0,
            format!("chi = {chi}: clamp mass {:e}", out.trajectory.clamp_mass),
        )?;
        let hit = out
            .trajectory
            .records
            .iter()
            .find(|r| r.linf_s + r.linf_i < 1e-3)
            .map(|r| r.t);
        notes.push(format!(
            "chi={chi}: {size:.1e} (below 1e-3 from t={})",
            hit.unwrap_or(f64::NAN)
        ));
    }
    Ok(notes.join(", "))
}

fn death_run(p: f64, beta: f64, t_end: f64) -> Result<(SisSystem, sislab::RunOutcome, f64), String> {
    let g = Grid::interval(1.0, 64).unwrap();
    let pi = std::f64::consts::PI;
    let sys = SisSystem::new(
        g.clone(),
        params(0.2, 0.1, 0.2, 0.5, p, 1.0),
        g.constant(beta),
        g.constant(0.5),
    )
    .unwrap();
    let st = State::new(
        g.field_from_fn(|x, _| 1.0 + 0.3 * (pi * x).cos()),
        g.field_from_fn(|x, _| 0.5 + 0.2 * (2.0 * pi * x).cos()),
    );
    let n0 = total_mass(&g, &st);
    let cfg = RunConfig::new(
        StepperConfig::new(0.005).with_scheme(Scheme::CrankNicolson),
        t_end,
        0.25,
    );
    let out = run(&sys, st, &cfg).map_err(|e| e.to_string())?;
    Ok((sys, out, n0))
}

fn exponential_regime() -> Check {
    let (gamma, mu) = (0.5, 0.5);
    let (sys, out, n0) = death_run(1.5, 1.0, 20.0)?;
    let traj = &out.trajectory;
    let rate = decay_rate(&traj.series(|r| r.linf_i)).map_err(|e| e.to_string())?;
    ensure(
        rate >= 0.4 * (gamma + mu),
        format!("tail decay rate {rate} < {}", 0.4 * (gamma + mu)),
    )?;
    let omega = sys.grid.omega_measure();
    let predicted = predict_s_star(traj, mu, n0, omega).map_err(|e| e.to_string())?;
    let mean_s = integrate(&sys.grid, &out.final_state.s).unwrap() / omega;
    let rel = (mean_s - predicted).abs() / predicted;
    ensure(
        rel <= 1e-3,
        format!("mean S {mean_s} vs predicted {predicted} (rel {rel:e})"),
    )?;

    let beta = 2.0;
    let (sys1, out1, n1) = death_run(1.0, beta, 80.0)?;
    let s_lim =
        predict_s_star(&out1.trajectory, mu, n1, sys1.grid.omega_measure()).map_err(|e| e.to_string())?;
    let mean_s1 = integrate(&sys1.grid, &out1.final_state.s).unwrap() / sys1.grid.omega_measure();
    let cap = (gamma + mu) / beta;
    ensure(
        s_lim <= cap + 1e-3 && mean_s1 <= cap + 1e-3,
        format!("p = 1 limit {s_lim} exceeds cap {cap}"),
    )?;
    Ok(format!(
        "rate {rate:.3} >= {:.2}; mean S {mean_s:.6} vs {predicted:.6}; p=1 limit {s_lim:.4} <= {cap}",
        0.4 * (gamma + mu)
    ))
}

/// Largest eigenvalue of `B^{1/2} M^{-1} B^{1/2}` and smallest of `M - B`.
fn dense_oracle(g: &Grid, beta: &Field, gamma: &Field, d: f64, scale: f64) -> (f64, f64) {
    let op = NeumannOperator::new(g, d, gamma).unwrap();
    let n = g.len();
    let mut m = DMatrix::zeros(n, n);
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let col = op.apply(&Field::new(e)).unwrap();
        for r in 0..n {
            m[(r, c)] = col[r];
        }
    }
    let bh = DMatrix::from_fn(n, n, |r, c| if r == c { (scale * beta[r]).sqrt() } else { 0.0 });
    let sym = &bh * m.clone().try_inverse().unwrap() * &bh;
    let sym = 0.5 * (&sym + sym.transpose());
    let r0 = SymmetricEigen::new(sym).eigenvalues.max();
    let lam = SymmetricEigen::new(m - &bh * &bh).eigenvalues.min();
    (r0, lam)
}

fn reproduction_number() -> Check {
    for cells in [16, 64, 256] {
        let g = Grid::interval(2.0, cells).unwrap();
        let (r, tau, q) = (0.7, 1.3, 2.0);
        let res = basic_reproduction_number(&g, &g.constant(1.5), &g.constant(1.5 * r), 0.4, tau, q)
            .map_err(|e| e.to_string())?;
        let exact = tau.powf(q) / r;
        ensure(
            (res.r0 - exact).abs() <= 1e-10,
            format!("{cells} cells: R0 {} vs {exact}", res.r0),
        )?;
    }

    let g = Grid::interval(2.0, 2).unwrap();
    let (beta, gamma) = (Field::new(vec![1.0, 3.0]), Field::new(vec![1.0, 1.0]));
    let res = basic_reproduction_number(&g, &beta, &gamma, 1.0, 1.0, 1.0).map_err(|e| e.to_string())?;
    let (oracle, lam) = dense_oracle(&g, &beta, &gamma, 1.0, 1.0);
    let exact = (4.0 + 7f64.sqrt()) / 3.0;
    ensure(
        (res.r0 - exact).abs() <= 1e-12 && (oracle - exact).abs() <= 1e-12,
        format!("two-cell R0 {}", res.r0),
    )?;
    ensure(
        (res.lambda_star - lam).abs() <= 1e-12,
        format!("two-cell lambda {}", res.lambda_star),
    )?;

    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    let trials = 40;
    for t in 0..trials {
        let g = if t % 2 == 0 {
            Grid::interval(rng.random_range(0.5..3.0), rng.random_range(2..=64)).unwrap()
        } else {
            let nx = rng.random_range(2..=8);
            let ny = rng.random_range(2..=(64 / nx).min(8));
            Grid::rectangle(rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), nx, ny).unwrap()
        };
        let n = g.len();
        let beta = Field::new((0..n).map(|_| rng.random_range(0.1..3.0)).collect());
        let gamma = Field::new((0..n).map(|_| rng.random_range(0.1..3.0)).collect());
        let d = rng.random_range(0.01..2.0);
        let (tau, q) = (rng.random_range(0.3..2.0), rng.random_range(0.5..2.0));
        let res = basic_reproduction_number(&g, &beta, &gamma, d, tau, q).map_err(|e| e.to_string())?;
        let (r0, lam) = dense_oracle(&g, &beta, &gamma, d, tau.powf(q));
        let err = (res.r0 - r0).abs() / r0;
        worst = worst.max(err);
        ensure(err <= 1e-8, format!("trial {t}: R0 {} vs oracle {r0}", res.r0))?;
        ensure(
            (res.lambda_star - lam).abs() <= 1e-8 * (1.0 + lam.abs()),
            format!("trial {t}: lambda {} vs oracle {lam}", res.lambda_star),
        )?;
        if (res.r0 - 1.0).abs() > 1e-9 {
            ensure(
                (res.r0 > 1.0) == (res.lambda_star < 0.0),
                format!("trial {t}: sign mismatch"),
            )?;
        }
    }
    Ok(format!(
        "grid-independent homogeneous R0, two-cell exact, {trials} random instances (worst rel {worst:.1e})"
    ))
}

fn lyapunov_run(spec_kind: &str) -> Result<(f64, f64, usize), String> {
    let g = Grid::interval(1.0, 64).unwrap();
    let pi = std::f64::consts::PI;
    let beta = g.field_from_fn(|x, _| 1.0 + 0.5 * (pi * x).cos());
    let (prm, r, s0, i0): (ModelParams, f64, Field, Field) = match spec_kind {
        "V1" => (
            params(0.3, 0.6, 0.0, 0.0, 0.5, 0.5),
            1.0,
            g.field_from_fn(|x, _| 1.2 + 0.5 * (pi * x).cos()),
            g.field_from_fn(|x, _| 0.8 + 0.3 * (2.0 * pi * x).cos()),
        ),
        "V1log" => (
            params(0.3, 0.6, 0.0, 0.0, 0.5, 1.0),
            1.0,
            g.field_from_fn(|x, _| 1.2 + 0.5 * (pi * x).cos()),
            g.field_from_fn(|x, _| 0.8 + 0.3 * (2.0 * pi * x).cos()),
        ),
        "V3" => (
            params(0.3, 0.6, 0.0, 0.0, 1.0, 1.0),
            2.0,
            g.field_from_fn(|x, _| 0.7 + 0.2 * (pi * x).cos()),
            g.field_from_fn(|x, _| 0.3 + 0.1 * (2.0 * pi * x).cos()),
        ),
        _ => (
            params(0.3, 0.6, 0.0, 0.0, 1.0, 1.0),
            0.5,
            g.field_from_fn(|x, _| 0.7 + 0.2 * (pi * x).cos()),
            g.field_from_fn(|x, _| 0.3 + 0.1 * (2.0 * pi * x).cos()),
        ),
    };
    let gamma = beta.map(|b| r * b);
    let sys = SisSystem::new(g.clone(), prm, beta, gamma).unwrap();
    let totals = ConservedTotals::from_initial(&g, &s0, &i0).unwrap();
    let tau = totals.mean_density();
    let spec = match spec_kind {
        "V1" | "V1log" => {
            let eq = sislab::equilibria::constant_ee_sublinear(tau, r, prm.p, prm.q).unwrap();
            LyapunovSpec::V1 {
                s_star: eq.s[0],
                i_star: eq.i[0],
                p: prm.p,
                q: prm.q,
            }
        }
        "V3" => LyapunovSpec::V3 {
            n_over_omega: tau,
            r,
            q: prm.q,
        },
        _ => LyapunovSpec::V4 {
            s_hat: r,
            i_hat: tau - r,
            d_s: prm.d_s,
            d_i: prm.d_i,
        },
    };
    let mut cfg = RunConfig::new(StepperConfig::new(0.01), 100.0, 1.0);
    cfg.lyapunov = Some(spec);
    let out = run(&sys, State::new(s0, i0), &cfg).map_err(|e| e.to_string())?;
    let trace = out.trajectory.lyapunov.unwrap();
    let v0 = trace.values[0];
    let floor = 64.0 * f64::EPSILON * totals.population * (1.0 + tau);
    if !trace.is_monotone(1e-8, floor) {
        return Err(format!(
            "{spec_kind}: increase {:e} against V0 = {v0:e}",
            trace.max_increase()
        ));
    }
    Ok((v0, *trace.values.last().unwrap(), trace.values.len()))
}

fn lyapunov_monotonicity() -> Check {
    let mut notes = Vec::new();
    for kind in ["V1", "V1log", "V3", "V4"] {
        let (v0, v_end, n) = lyapunov_run(kind)?;
        ensure(v_end < v0, format!("{kind} did not decrease"))?;
        notes.push(format!("{kind} {v0:.2e}->{v_end:.1e} over {n} values"));
    }
    Ok(notes.join(", "))
}

fn heterogeneous_endemic() -> Check {
    let g = Grid::interval(1.0, 64).unwrap();
    let pi = std::f64::consts::PI;
    let d = 0.2;
    let beta = g.field_from_fn(|x, _| 2.0 + (2.0 * pi * x).sin());
    let gamma = g.field_from_fn(|x, _| (2.0 + (2.0 * pi * x).sin()) * 0.6 * (1.0 + 0.3 * (pi * x).cos()));
    let sys = SisSystem::new(
        g.clone(),
        params(d, d, 0.0, 0.0, 0.6, 1.0),
        beta.clone(),
        gamma.clone(),
    )
    .unwrap();
    let st = State::new(
        g.field_from_fn(|x, _| 0.8 + 0.3 * (pi * x).cos()),
        g.field_from_fn(|x, _| 0.4 + 0.2 * (3.0 * pi * x).cos()),
    );
    let tau = ConservedTotals::from_initial(&g, &st.s, &st.i)
        .unwrap()
        .mean_density();
    let (eq, report) =
        heterogeneous_ee(&g, tau, &beta, &gamma, d, 0.6, 1.0, 1e-10).map_err(|e| e.to_string())?;
    ensure(report.gap <= 1e-8, format!("upper/lower gap {:e}", report.gap))?;
    ensure(
        report.monotonicity_violation <= 1e-13,
        format!("monotonicity violated by {:e}", report.monotonicity_violation),
    )?;
    let cfg = RunConfig::new(StepperConfig::new(0.01), 300.0, 1.0);
    let out = run(&sys, st, &cfg).map_err(|e| e.to_string())?;
    let dist = out
        .final_state
        .s
        .max_distance(&eq.s)
        .max(out.final_state.i.max_distance(&eq.i));
    ensure(
        dist <= 1e-2,
        format!("simulated field {dist:e} from monotone-iteration state"),
    )?;
    let spread = eq.i.max() - eq.i.min();
    Ok(format!(
        "distance {dist:.1e}, upper/lower gap {:.1e} after {} iterations, I spread {spread:.3}",
        report.gap, report.iterations
    ))
}

/// The inequalities written out per dimension.
fn transcribed(n: usize, p: f64, q: f64) -> (bool, bool, bool) {
    match n {
        1 => (
            p < 2.0,
            q < 0.5 && p + 2.0 * q < 2.0,
            10.0 * q + 4.0 * p < 15.0 && q + p < 3.0,
        ),
        2 => (
            2.0 * p < 4.0,
            q < 1.0 / 3.0 && p + 3.0 * q < 2.0,
            3.0 * q + p < 3.0 && q + p < 2.0,
        ),
        3 => (
            3.0 * p + q < 5.0,
            q < 0.25 && p + 4.0 * q < 1.0 + 2.0 / 3.0,
            false,
        ),
        _ => unreachable!(),
    }
}

fn classifier_table() -> Check {
    let fixed = [
        (1, 1.0, 1.0, Verdict::AnyChi),
        (2, 1.0, 1.0, Verdict::SmallChiOnly),
        (3, 0.2, 0.2, Verdict::AnyChi),
    ];
    for (n, p, q, v) in fixed {
        let c = boundedness_certificate(n, p, q);
        ensure(c.verdict == v, format!("({n}, {p}, {q}) gave {:?}", c.verdict))?;
    }
    let mut rng = StdRng::seed_from_u64(20);
    for k in 0..20 {
        let n = rng.random_range(1..=3);
        let (p, q) = (rng.random_range(0.01..3.5), rng.random_range(0.01..3.5));
        let c = boundedness_certificate(n, p, q);
        let t = transcribed(n, p, q);
        ensure(
            (
                c.holds_small_chi,
                c.holds_any_chi_semigroup,
                c.holds_any_chi_energy,
            ) == t,
            format!("triple {k} ({n}, {p}, {q}) disagrees"),
        )?;
        let expected = if t.1 || t.2 {
            Verdict::AnyChi
        } else if t.0 {
            Verdict::SmallChiOnly
        } else {
            Verdict::Unproven
        };
        ensure(c.verdict == expected, format!("triple {k} verdict"))?;
    }
    Ok("3 fixed cases and 20 random triples agree exactly".into())
}

fn observed_order(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn ode_error(dt: f64) -> f64 {
    let g = Grid::interval(1.0, 4).unwrap();
    let sys = SisSystem::new(
        g.clone(),
        params(0.1, 0.1, 0.0, 0.5, 1.0, 1.0),
        g.constant(1.5),
        g.constant(0.5),
    )
    .unwrap();
    let out = run(
        &sys,
        State::new(g.constant(1.0), g.constant(0.5)),
        &RunConfig::new(StepperConfig::new(dt), 1.0, 1.0),
    )
    .unwrap();
    let reference = run(
        &sys,
        State::new(g.constant(1.0), g.constant(0.5)),
        &RunConfig::new(
            StepperConfig::new(1e-5).with_scheme(Scheme::CrankNicolson),
            1.0,
            1.0,
        ),
    )
    .unwrap();
    out.final_state
        .s
        .max_distance(&reference.final_state.s)
        .max(out.final_state.i.max_distance(&reference.final_state.i))
}

fn convergence_orders() -> Check {
    let pi = std::f64::consts::PI;
    let mut notes = Vec::new();
    for dim in [1, 2] {
        let mut errs = Vec::new();
        for n in [16, 32, 64, 128] {
            let g = if dim == 1 {
                Grid::interval(1.0, n).unwrap()
            } else {
                Grid::rectangle(1.0, 1.0, n, n).unwrap()
            };
            let f = g.field_from_fn(|x, y| (pi * x).cos() * if dim == 2 { (pi * y).cos() } else { 1.0 });
            let lap = laplacian(&g, &f).unwrap();
            let exact = f.map(|v| -(dim as f64) * pi * pi * v);
            errs.push(lap.max_distance(&exact));
        }
        for o in observed_order(&errs) {
            ensure((o - 2.0).abs() <= 0.2, format!("{dim}D Laplacian order {o:.3}"))?;
        }
        notes.push(format!(
            "{dim}D Laplacian order {:.3}",
            observed_order(&errs).last().unwrap()
        ));
    }
    let errs: Vec<f64> = [0.04, 0.02, 0.01].into_iter().map(ode_error).collect();
    for o in observed_order(&errs) {
        ensure(o >= 1.0, format!("backward Euler temporal order {o:.3}"))?;
    }
    notes.push(format!(
        "temporal order {:.3}",
        observed_order(&errs).last().unwrap()
    ));
    Ok(notes.join(", "))
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(dir: &Path) -> Check {
    let sc = threshold_scenario("determinism", 0.5);
    let (a, b) = (dir.join("run-a"), dir.join("run-b"));
    run_scenario(&sc, &a).map_err(|e| e.to_string())?;
    run_scenario(&sc, &b).map_err(|e| e.to_string())?;
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    ensure(!ta.is_empty() && ta == tb, "repeated scenario runs differ".into())?;

    let template = json!({
        "id": "grid",
        "domain": {"extents": [1.0], "cells": [32]},
        "params": {"d_S": 0.5, "d_I": 0.5, "chi": 0.2, "mu": 0.0, "p": 1.0, "q": 1.0},
        "beta": "1 + 0.5 * cos(pi * x)",
        "gamma": {"ratio_to_beta": 0.5},
        "initial": {"S": "0.7 + 0.2 * cos(pi * x)", "I": "0.3 + 0.1 * cos(2 * pi * x)"},
        "stepper": {"dt": 0.01},
        "t_end": 2.0,
        "output": {"interval": 0.5}
    });
    let axes = Axes {
        axes: vec![
            Axis {
                path: "params.p".into(),
                values: vec![0.5, 1.5, 2.5],
            },
            Axis {
                path: "params.q".into(),
                values: vec![0.5, 1.0, 1.5],
            },
        ],
    };
    let (s1, s8) = (dir.join("sweep-1"), dir.join("sweep-8"));
    let rows = sweep(&template, &axes, 1, &s1).map_err(|e| e.to_string())?;
    sweep(&template, &axes, 8, &s8).map_err(|e| e.to_string())?;
    let (t1, t8) = (read_tree(&s1), read_tree(&s8));
    ensure(t1 == t8, "sweep outputs differ between 1 and 8 workers".into())?;
    for row in &rows {
        let (p, q) = (row.values[0], row.values[1]);
        let summary = row
            .result
            .as_ref()
            .map_err(|e| format!("row {}: {e}", row.index))?;
        let any = summary
            .certificate
            .map(|c| c.verdict == Verdict::AnyChi)
            .unwrap_or(false);
        ensure(
            any == (10.0 * q + 4.0 * p < 15.0 && q + p < 3.0),
            format!("row {} verdict", row.index),
        )?;
    }
    Ok(format!(
        "{} files identical across reruns, {} files identical across 1/8 workers",
        ta.len(),
        t1.len()
    ))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path().to_path_buf();
    let criteria: Vec<Criterion> = vec![
        ("mass conservation without deaths", Box::new(mass_conservation)),
        ("mass balance with deaths", Box::new(mass_balance)),
        ("threshold dynamics", Box::new(threshold_dynamics)),
        (
            "extinction for sublinear incidence with deaths",
            Box::new(extinction),
        ),
        (
            "exponential elimination and limiting density",
            Box::new(exponential_regime),
        ),
        ("basic reproduction number", Box::new(reproduction_number)),
        ("Lyapunov monotonicity", Box::new(lyapunov_monotonicity)),
        ("heterogeneous endemic state", Box::new(heterogeneous_endemic)),
        ("boundedness classifier table", Box::new(classifier_table)),
        ("spatial and temporal order", Box::new(convergence_orders)),
        ("determinism", Box::new(move || determinism(&root))),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", k + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

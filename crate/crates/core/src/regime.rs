//! Parameter regions with guaranteed bounded solutions, and the long-time
//! outcome the theory predicts for a configuration.

use serde::Serialize;
use thiserror::Error;

use crate::equilibria::{constant_ee_linear, constant_ee_sublinear, EquilibriumError, SpectralResult};
use crate::grid::Field;
use crate::model::{proportionality_ratio, ConservedTotals, ModelError, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Bounded for every cross-diffusion coefficient.
    AnyChi,
    /// Bounded for sufficiently small `|chi|` (threshold not quantified).
    SmallChiOnly,
    Unproven,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundednessCertificate {
    pub dimension: usize,
    pub p: f64,
    pub q: f64,
    /// `n p + (n-2)^+ q < n + min(n, 2)`.
    pub holds_small_chi: bool,
    /// `q < 1/(n+1)` and `p + (n+1) q < 1 + min(1, 2/n)`.
    pub holds_any_chi_semigroup: bool,
    /// Energy estimates, available for `n <= 2` only.
    pub holds_any_chi_energy: bool,
    pub verdict: Verdict,
}

pub fn boundedness_certificate(n: usize, p: f64, q: f64) -> BoundednessCertificate {
    let nf = n as f64;
    let small = nf * p + (nf - 2.0).max(0.0) * q < nf + nf.min(2.0);
    let semigroup = q < 1.0 / (nf + 1.0) && p + (nf + 1.0) * q < 1.0 + (2.0 / nf).min(1.0);
    let energy = match n {
        1 => 10.0 * q + 4.0 * p < 15.0 && q + p < 3.0,
        2 => 3.0 * q + p < 3.0 && q + p < 2.0,
        _ => false,
    };
    let verdict = if semigroup || energy {
        Verdict::AnyChi
    } else if small {
        Verdict::SmallChiOnly
    } else {
        Verdict::Unproven
    };
    BoundednessCertificate {
        dimension: n,
        p,
        q,
        holds_small_chi: small,
        holds_any_chi_semigroup: semigroup,
        holds_any_chi_energy: energy,
        verdict,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThresholdLimit {
    DiseaseFree { s: f64 },
    ConstantEndemic { s: f64, i: f64 },
    HeterogeneousEndemic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Outcome {
    /// Both compartments vanish.
    ExtinctionBoth,
    /// `I -> 0` and `S` tends to a constant fixed by the cumulative infection;
    /// `s_cap` bounds that constant when the rates are spatially uniform.
    DiseaseFree {
        s_cap: Option<f64>,
    },
    ConstantEndemic {
        s: f64,
        i: f64,
    },
    HeterogeneousEndemic,
    ThresholdByR0 {
        r0: f64,
        limit: ThresholdLimit,
    },
    Unknown {
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateClaim {
    None,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub outcome: Outcome,
    pub rate_claim: RateClaim,
    /// Short description of the result the prediction rests on.
    pub basis: &'static str,
    /// The outcome holds for bounded global solutions; boundedness itself is
    /// certified separately or observed.
    pub requires_bounded_solution: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegimeError {
    #[error("threshold prediction for p = 1 needs R0 and the principal eigenvalue")]
    MissingSpectral,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

/// Applies the decision table of the long-time results.
pub fn predict_long_time(
    params: &ModelParams,
    beta: &Field,
    gamma: &Field,
    totals: &ConservedTotals,
    spectral: Option<&SpectralResult>,
) -> Result<Prediction, RegimeError> {
    params.validate()?;
    let p = params.p;
    let q = params.q;
    let tau = totals.mean_density();
    let ratio = proportionality_ratio(beta, gamma);

    if params.mu > 0.0 {
        let (outcome, rate_claim, basis) = if p < 1.0 {
            (
                Outcome::ExtinctionBoth,
                RateClaim::None,
                "death-induced extinction, sublinear infection",
            )
        } else if p == 1.0 {
            let uniform = |f: &Field| f.max() - f.min() <= 1e-12 * f.max();
            let s_cap =
                (uniform(beta) && uniform(gamma)).then(|| ((gamma[0] + params.mu) / beta[0]).powf(1.0 / q));
            (
                Outcome::DiseaseFree { s_cap },
                RateClaim::None,
                "death-induced disease elimination, linear infection",
            )
        } else {
            (
                Outcome::DiseaseFree { s_cap: None },
                RateClaim::Exponential,
                "death-induced exponential disease elimination, superlinear infection",
            )
        };
        return Ok(Prediction {
            outcome,
            rate_claim,
            basis,
            requires_bounded_solution: true,
        });
    }

    let unknown = |reason: &str| Prediction {
        outcome: Outcome::Unknown {
            reason: reason.to_string(),
        },
        rate_claim: RateClaim::None,
        basis: "none",
        requires_bounded_solution: false,
    };
    if params.chi != 0.0 {
        return Ok(unknown("no long-time result for mu = 0 with cross-diffusion"));
    }
    let equal_diffusion = params.d_s == params.d_i;
    if p > 1.0 {
        return Ok(unknown(
            "dynamics for p > 1 without deaths depend on the initial data",
        ));
    }
    if ratio.is_none() && !equal_diffusion {
        return Ok(unknown("needs gamma proportional to beta or d_S = d_I"));
    }

    let prediction = |outcome, basis| Prediction {
        outcome,
        rate_claim: RateClaim::None,
        basis,
        requires_bounded_solution: false,
    };
    if p < 1.0 {
        return Ok(match ratio {
            Some(r) => {
                let eq = constant_ee_sublinear(tau, r, p, q)?;
                prediction(
                    Outcome::ConstantEndemic {
                        s: eq.s[0],
                        i: eq.i[0],
                    },
                    "global stability of the constant endemic state, proportional rates",
                )
            }
            None => prediction(
                Outcome::HeterogeneousEndemic,
                "global stability of the heterogeneous endemic state, equal diffusion",
            ),
        });
    }

    let spectral = spectral.ok_or(RegimeError::MissingSpectral)?;
    let r0 = spectral.r0;
    let limit = match ratio {
        // With proportional rates R0 > 1 is exactly tau > r^(1/q); use the algebraic form.
        Some(r) => match constant_ee_linear(tau, r, q) {
            Some(eq) => ThresholdLimit::ConstantEndemic {
                s: eq.s[0],
                i: eq.i[0],
            },
            None => ThresholdLimit::DiseaseFree { s: tau },
        },
        None if r0 > 1.0 => ThresholdLimit::HeterogeneousEndemic,
        None => ThresholdLimit::DiseaseFree { s: tau },
    };
    let basis = if ratio.is_some() {
        "threshold dynamics in R0, proportional rates"
    } else {
        "threshold dynamics in R0, equal diffusion"
    };
    Ok(prediction(Outcome::ThresholdByR0 { r0, limit }, basis))
}

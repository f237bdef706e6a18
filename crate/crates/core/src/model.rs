//! Model coefficients, heterogeneous rate profiles and admissible initial data.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ParseError};
use crate::grid::{Field, Grid, GridError};
use crate::stencil::integrate_slice;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter {name} = {value} violates {requirement}")]
    Parameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("expression uses y on a one-dimensional grid")]
    YOnInterval,
    #[error("non-positive coefficient {value} at cell {cell}")]
    NonPositiveCoefficient { cell: usize, value: f64 },
    #[error("non-finite value at cell {cell}")]
    NonFinite { cell: usize },
    #[error("inadmissible initial data: {}", join(.0))]
    Inadmissible(Vec<Violation>),
    #[error("positivity floor breached: {0}")]
    FloorBreach(&'static str),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Scalar coefficients of the system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(rename = "d_S")]
    pub d_s: f64,
    #[serde(rename = "d_I")]
    pub d_i: f64,
    /// Signed; only `|chi|` enters the boundedness regions.
    #[serde(default)]
    pub chi: f64,
    #[serde(default)]
    pub mu: f64,
    pub p: f64,
    pub q: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let checks: [(&'static str, f64, bool, &'static str); 6] = [
            ("d_S", self.d_s, self.d_s > 0.0, "d_S > 0"),
            ("d_I", self.d_i, self.d_i > 0.0, "d_I > 0"),
            ("chi", self.chi, true, "finite chi"),
            ("mu", self.mu, self.mu >= 0.0, "mu >= 0"),
            ("p", self.p, self.p > 0.0, "p > 0"),
            ("q", self.q, self.q > 0.0, "q > 0"),
        ];
        for (name, value, ok, requirement) in checks {
            if !ok || !value.is_finite() {
                return Err(ModelError::Parameter {
                    name,
                    value,
                    requirement,
                });
            }
        }
        Ok(())
    }
}

/// A spatial profile: a constant, an expression in the cell centers, or one value per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Constant(f64),
    Expression(String),
    Tabulated(Vec<f64>),
}

impl CoefficientSpec {
    /// Evaluates on the grid without any sign requirement.
    pub fn evaluate(&self, grid: &Grid) -> Result<Field, ModelError> {
        let field = match self {
            CoefficientSpec::Constant(c) => grid.constant(*c),
            CoefficientSpec::Expression(src) => {
                let e = Expr::parse(src)?;
                if grid.dim() == 1 && e.uses_y() {
                    return Err(ModelError::YOnInterval);
                }
                grid.field_from_fn(|x, y| e.eval(x, y))
            }
            CoefficientSpec::Tabulated(v) => {
                let f = Field::new(v.clone());
                grid.check_len(&f)?;
                f
            }
        };
        if let Some(cell) = field.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { cell });
        }
        Ok(field)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, CoefficientSpec::Constant(_))
    }
}

/// Evaluates a rate profile and requires it to be strictly positive everywhere.
pub fn materialize_coefficient(spec: &CoefficientSpec, grid: &Grid) -> Result<Field, ModelError> {
    let field = spec.evaluate(grid)?;
    if let Some(cell) = field.iter().position(|v| *v <= 0.0) {
        return Err(ModelError::NonPositiveCoefficient {
            cell,
            value: field[cell],
        });
    }
    Ok(field)
}

/// A violated clause of the admissibility conditions on `(S0, I0)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeS { cell: usize },
    NegativeI { cell: usize },
    IVanishes,
    SNotPositive { q: f64 },
    INotPositive { p: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeS { cell } => write!(f, "S0 must be >= 0 (cell {cell})"),
            Violation::NegativeI { cell } => write!(f, "I0 must be >= 0 (cell {cell})"),
            Violation::IVanishes => write!(f, "I0 must not vanish identically"),
            Violation::SNotPositive { q } => write!(f, "inf S0 must be >0 when q<1 (q = {q})"),
            Violation::INotPositive { p } => write!(f, "inf I0 must be >0 when p<1 (p = {p})"),
        }
    }
}

/// Checks every admissibility clause; a size mismatch is reported as a grid error instead.
pub fn validate_initial_data(s0: &Field, i0: &Field, p: f64, q: f64) -> Result<(), ModelError> {
    if s0.len() != i0.len() {
        return Err(GridError::SizeMismatch {
            expected: s0.len(),
            found: i0.len(),
        }
        .into());
    }
    if let Some(cell) = s0.iter().chain(i0.iter()).position(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite {
            cell: cell % s0.len().max(1),
        });
    }
    let mut v = Vec::new();
    if let Some(cell) = s0.iter().position(|x| *x < 0.0) {
        v.push(Violation::NegativeS { cell });
    }
    if let Some(cell) = i0.iter().position(|x| *x < 0.0) {
        v.push(Violation::NegativeI { cell });
    }
    if i0.max() <= 0.0 {
        v.push(Violation::IVanishes);
    }
    if q < 1.0 && s0.min() <= 0.0 {
        v.push(Violation::SNotPositive { q });
    }
    if p < 1.0 && i0.min() <= 0.0 {
        v.push(Violation::INotPositive { p });
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(ModelError::Inadmissible(v))
    }
}

/// `x^e` for `x >= 0`, `e > 0`, with `0^e = 0`.
#[inline]
pub(crate) fn pow0(x: f64, e: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if e == 1.0 {
        x
    } else {
        x.powf(e)
    }
}

/// Power-law incidence `beta * S^q * I^p`.
pub fn incidence(s: f64, i: f64, beta: f64, p: f64, q: f64) -> Result<f64, ModelError> {
    if s < 0.0 || i < 0.0 {
        return Err(ModelError::FloorBreach("negative density in incidence"));
    }
    if s == 0.0 && q < 1.0 {
        return Err(ModelError::FloorBreach("S = 0 with q < 1"));
    }
    if i == 0.0 && p < 1.0 {
        return Err(ModelError::FloorBreach("I = 0 with p < 1"));
    }
    Ok(beta * pow0(s, q) * pow0(i, p))
}

/// Totals fixed by the initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedTotals {
    /// `N`, the initial total population.
    pub population: f64,
    pub omega_measure: f64,
}

impl ConservedTotals {
    pub fn from_initial(grid: &Grid, s0: &Field, i0: &Field) -> Result<Self, ModelError> {
        grid.check_len(s0)?;
        grid.check_len(i0)?;
        let population = integrate_slice(grid, s0.values()) + integrate_slice(grid, i0.values());
        if !(population > 0.0) {
            return Err(ModelError::Parameter {
                name: "N",
                value: population,
                requirement: "N > 0",
            });
        }
        Ok(ConservedTotals {
            population,
            omega_measure: grid.omega_measure(),
        })
    }

    /// `N / |Omega|`.
    pub fn mean_density(&self) -> f64 {
        self.population / self.omega_measure
    }
}

/// Grid, parameters and materialized rate profiles.
#[derive(Debug, Clone)]
pub struct SisSystem {
    pub grid: Grid,
    pub params: ModelParams,
    pub beta: Field,
    pub gamma: Field,
}

impl SisSystem {
    pub fn new(grid: Grid, params: ModelParams, beta: Field, gamma: Field) -> Result<Self, ModelError> {
        params.validate()?;
        for f in [&beta, &gamma] {
            grid.check(f)?;
            if let Some(cell) = f.iter().position(|v| *v <= 0.0) {
                return Err(ModelError::NonPositiveCoefficient { cell, value: f[cell] });
            }
        }
        Ok(SisSystem {
            grid,
            params,
            beta,
            gamma,
        })
    }

    /// The constant `r` with `gamma = r * beta`, if the ratio is uniform to 1e-12.
    pub fn proportionality_ratio(&self) -> Option<f64> {
        proportionality_ratio(&self.beta, &self.gamma)
    }

    pub fn is_homogeneous(&self) -> bool {
        let uniform = |f: &Field| {
            let (lo, hi) = (f.min(), f.max());
            (hi - lo) <= 1e-12 * hi.abs()
        };
        uniform(&self.beta) && uniform(&self.gamma)
    }
}

/// Returns `r` when `gamma / beta` deviates from its mean by less than 1e-12 relative.
pub fn proportionality_ratio(beta: &Field, gamma: &Field) -> Option<f64> {
    if beta.is_empty() || beta.len() != gamma.len() {
        return None;
    }
    let ratios: Vec<f64> = gamma.iter().zip(beta.iter()).map(|(g, b)| g / b).collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let dev = ratios.iter().fold(0.0f64, |m, r| m.max((r - mean).abs()));
    if dev <= 1e-12 * mean.abs() {
        Some(mean)
    } else {
        None
    }
}

//! Finite-volume operators with homogeneous Neumann boundaries.
//!
//! Boundary faces carry zero flux (ghost-cell reflection), so every operator
//! here conserves the cell-measure-weighted sum of its argument.

use crate::grid::{Field, Grid, GridError};

/// Visits every interior face once as `(cell, neighbour, 1/h^2)`.
fn for_each_face(grid: &Grid, mut visit: impl FnMut(usize, usize, f64)) {
    let nx = grid.nx();
    let ny = grid.ny();
    let wx = 1.0 / (grid.h(0) * grid.h(0));
    for j in 0..ny {
        for i in 0..nx - 1 {
            let k = i + nx * j;
            visit(k, k + 1, wx);
        }
    }
    if grid.dim() == 2 {
        let wy = 1.0 / (grid.h(1) * grid.h(1));
        for j in 0..ny - 1 {
            for i in 0..nx {
                let k = i + nx * j;
                visit(k, k + nx, wy);
            }
        }
    }
}

pub(crate) fn laplacian_into(grid: &Grid, f: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for_each_face(grid, |a, b, w| {
        let flux = (f[b] - f[a]) * w;
        out[a] += flux;
        out[b] -= flux;
    });
}

pub(crate) fn cross_diffusion_into(grid: &Grid, s: &[f64], i: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for_each_face(grid, |a, b, w| {
        let s_face = 0.5 * (s[a] + s[b]);
        let flux = s_face * (i[b] - i[a]) * w;
        out[a] += flux;
        out[b] -= flux;
    });
}

/// Unit-diffusivity discrete Laplacian.
pub fn laplacian(grid: &Grid, f: &Field) -> Result<Field, GridError> {
    grid.check_len(f)?;
    let mut out = vec![0.0; grid.len()];
    laplacian_into(grid, f.values(), &mut out);
    Ok(Field::new(out))
}

/// Discrete `div(S grad I)` in conservative flux form with arithmetic-mean face values of `S`.
pub fn cross_diffusion_div(grid: &Grid, s: &Field, i: &Field) -> Result<Field, GridError> {
    grid.check_len(s)?;
    grid.check_len(i)?;
    let mut out = vec![0.0; grid.len()];
    cross_diffusion_into(grid, s.values(), i.values(), &mut out);
    Ok(Field::new(out))
}

/// Compensated sum in a fixed order.
pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub(crate) fn integrate_slice(grid: &Grid, f: &[f64]) -> f64 {
    grid.cell_measure() * neumaier_sum(f.iter().copied())
}

/// Midpoint-rule integral over the domain.
pub fn integrate(grid: &Grid, f: &Field) -> Result<f64, GridError> {
    grid.check_len(f)?;
    Ok(integrate_slice(grid, f.values()))
}

/// Discrete `||grad f||_{L^2}` built from face differences.
pub fn gradient_l2(grid: &Grid, f: &Field) -> Result<f64, GridError> {
    grid.check_len(f)?;
    let v = f.values();
    let mut acc = Vec::with_capacity(2 * grid.len());
    for_each_face(grid, |a, b, w| {
        let d = v[b] - v[a];
        acc.push(d * d * w);
    });
    Ok((grid.cell_measure() * neumaier_sum(acc)).sqrt())
}

/// The symmetric operator `f -> -d * laplacian(f) + diag * f`.
#[derive(Debug, Clone)]
pub struct NeumannOperator {
    grid: Grid,
    diffusivity: f64,
    reaction: Vec<f64>,
}

impl NeumannOperator {
    pub fn new(grid: &Grid, diffusivity: f64, reaction_diag: &Field) -> Result<Self, GridError> {
        grid.check(reaction_diag)?;
        assert!(diffusivity >= 0.0, "diffusivity must be non-negative");
        Ok(NeumannOperator {
            grid: grid.clone(),
            diffusivity,
            reaction: reaction_diag.values().to_vec(),
        })
    }

    /// `Id + d * (-laplacian)`, the implicit diffusion matrix.
    pub fn shifted_identity(grid: &Grid, diffusivity: f64) -> Self {
        NeumannOperator {
            grid: grid.clone(),
            diffusivity,
            reaction: vec![1.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn diffusivity(&self) -> f64 {
        self.diffusivity
    }

    pub fn reaction(&self) -> &[f64] {
        &self.reaction
    }

    pub(crate) fn apply_slice(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|o| *o = 0.0);
        let d = self.diffusivity;
        if d != 0.0 {
            for_each_face(&self.grid, |a, b, w| {
                let flux = d * (x[b] - x[a]) * w;
                y[a] -= flux;
                y[b] += flux;
            });
        }
        for ((yk, xk), rk) in y.iter_mut().zip(x).zip(&self.reaction) {
            *yk += rk * xk;
        }
    }

    pub fn apply(&self, f: &Field) -> Result<Field, GridError> {
        self.grid.check_len(f)?;
        let mut out = vec![0.0; self.grid.len()];
        self.apply_slice(f.values(), &mut out);
        Ok(Field::new(out))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut diag = self.reaction.clone();
        let d = self.diffusivity;
        for_each_face(&self.grid, |a, b, w| {
            diag[a] += d * w;
            diag[b] += d * w;
        });
        diag
    }

    /// Off-diagonal entry shared by neighbours along `axis`.
    pub(crate) fn coupling(&self, axis: usize) -> f64 {
        let h = self.grid.h(axis);
        -self.diffusivity / (h * h)
    }
}

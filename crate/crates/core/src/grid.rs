//! Cell-centered rectangular grids and the scalar fields that live on them.
//!
//! Cells are stored row-major with the x index fastest: cell `(i, j)` has flat
//! index `i + nx * j`. A 1D grid is a 2D grid with a single row.

use std::ops::{Index, IndexMut};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("axis {axis}: extent must be positive and finite, got {value}")]
    Extent { axis: usize, value: f64 },
    #[error("axis {axis}: need at least {min} cells, got {value}")]
    Cells { axis: usize, value: usize, min: usize },
    #[error("field has {found} values but the grid has {expected} cells")]
    SizeMismatch { expected: usize, found: usize },
    #[error("field value at cell {cell} is not finite")]
    NonFinite { cell: usize },
}

/// Smallest number of cells per axis.
///
/// Two cells is the smallest grid on which the Neumann stencil is non-trivial.
pub const MIN_CELLS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    extents: [f64; 2],
    cells: [usize; 2],
    h: [f64; 2],
}

impl Grid {
    pub fn new(extents: &[f64], cells: &[usize]) -> Result<Self, GridError> {
        let dim = extents.len();
        if dim == 0 || dim > 2 {
            return Err(GridError::Dimension(dim));
        }
        if cells.len() != dim {
            return Err(GridError::Dimension(cells.len()));
        }
        let mut ext = [1.0; 2];
        let mut n = [1usize; 2];
        let mut h = [1.0; 2];
        for axis in 0..dim {
            let l = extents[axis];
            if !(l.is_finite() && l > 0.0) {
                return Err(GridError::Extent { axis, value: l });
            }
            if cells[axis] < MIN_CELLS {
                return Err(GridError::Cells {
                    axis,
                    value: cells[axis],
                    min: MIN_CELLS,
                });
            }
            ext[axis] = l;
            n[axis] = cells[axis];
            h[axis] = l / cells[axis] as f64;
        }
        Ok(Grid {
            dim,
            extents: ext,
            cells: n,
            h,
        })
    }

    pub fn interval(length: f64, cells: usize) -> Result<Self, GridError> {
        Self::new(&[length], &[cells])
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self, GridError> {
        Self::new(&[lx, ly], &[nx, ny])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn nx(&self) -> usize {
        self.cells[0]
    }

    /// Rows along y; 1 for an interval.
    pub fn ny(&self) -> usize {
        self.cells[1]
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_measure(&self) -> f64 {
        self.h[..self.dim].iter().product()
    }

    pub fn omega_measure(&self) -> f64 {
        self.extents[..self.dim].iter().product()
    }

    /// Cell-center coordinates `(x, y)`; `y` is 0 on an interval.
    pub fn center(&self, k: usize) -> (f64, f64) {
        let i = k % self.cells[0];
        let j = k / self.cells[0];
        let x = (i as f64 + 0.5) * self.h[0];
        let y = if self.dim == 2 {
            (j as f64 + 0.5) * self.h[1]
        } else {
            0.0
        };
        (x, y)
    }

    pub fn field_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> Field {
        Field::new(
            (0..self.len())
                .map(|k| {
                    let (x, y) = self.center(k);
                    f(x, y)
                })
                .collect(),
        )
    }

    pub fn constant(&self, value: f64) -> Field {
        Field::new(vec![value; self.len()])
    }

    pub fn zeros(&self) -> Field {
        self.constant(0.0)
    }

    /// Checks that `f` has one finite value per cell.
    pub fn check(&self, f: &Field) -> Result<(), GridError> {
        if f.len() != self.len() {
            return Err(GridError::SizeMismatch {
                expected: self.len(),
                found: f.len(),
            });
        }
        if let Some(cell) = f.values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { cell });
        }
        Ok(())
    }

    pub(crate) fn check_len(&self, f: &Field) -> Result<(), GridError> {
        if f.len() != self.len() {
            return Err(GridError::SizeMismatch {
                expected: self.len(),
                found: f.len(),
            });
        }
        Ok(())
    }
}

/// Per-cell values of a scalar quantity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Field { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.values.iter()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::new(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.len(), other.len());
        Field::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Max-norm of `self - other`.
    pub fn max_distance(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl From<Vec<f64>> for Field {
    fn from(values: Vec<f64>) -> Self {
        Field::new(values)
    }
}

impl Index<usize> for Field {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

impl IndexMut<usize> for Field {
    fn index_mut(&mut self, k: usize) -> &mut f64 {
        &mut self.values[k]
    }
}

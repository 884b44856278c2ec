use serde::{Deserialize, Serialize};

use crate::error::{PamError, Result};
use crate::lattice::{LatticeBox, MAX_DIM};

/// Semantic tag carried by a [`GridField`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldLabel {
    Noise,
    Potential,
    Solution,
    Resolvent,
    Correction,
    Drift(usize),
    Eigenvector(usize),
    Custom(String),
}

/// A scalar field sampled on the cell centers of a [`LatticeBox`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    grid: LatticeBox,
    values: Vec<f64>,
    label: FieldLabel,
}

impl GridField {
    pub fn new(grid: LatticeBox, values: Vec<f64>, label: FieldLabel) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(PamError::Format(format!(
                "field has {} values but the grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values, label })
    }

    pub fn zeros(grid: LatticeBox, label: FieldLabel) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
            label,
        }
    }

    pub fn constant(grid: LatticeBox, value: f64, label: FieldLabel) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![value; n],
            label,
        }
    }

    pub fn from_fn(grid: LatticeBox, label: FieldLabel, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self { grid, values, label }
    }

    pub fn grid(&self) -> &LatticeBox {
        &self.grid
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

    pub fn label(&self) -> &FieldLabel {
        &self.label
    }

    pub fn with_label(mut self, label: FieldLabel) -> Self {
        self.label = label;
        self
    }

    fn check_same_grid(&self, other: &GridField) -> Result<()> {
        if self.grid != other.grid {
            return Err(PamError::Misaligned("fields live on different boxes".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &GridField) -> Result<GridField> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(GridField {
            grid: self.grid.clone(),
            values,
            label: self.label.clone(),
        })
    }

    pub fn sub(&self, other: &GridField) -> Result<GridField> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(GridField {
            grid: self.grid.clone(),
            values,
            label: self.label.clone(),
        })
    }

    pub fn scaled(&self, s: f64) -> GridField {
        GridField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
            label: self.label.clone(),
        }
    }

    pub fn shifted(&self, c: f64) -> GridField {
        GridField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v + c).collect(),
            label: self.label.clone(),
        }
    }

    /// `h^d`-weighted inner product.
    pub fn dot(&self, other: &GridField) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.grid.cell_volume() * dot(&self.values, &other.values))
    }

    /// Discrete `L^2` norm `(h^d Σ v²)^{1/2}`.
    pub fn norm_l2(&self) -> f64 {
        (self.grid.cell_volume() * dot(&self.values, &self.values)).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Value at the grid point nearest to `x`.
    pub fn value_near(&self, x: &[f64]) -> Result<f64> {
        self.grid
            .nearest_index(x)
            .map(|i| self.values[i])
            .ok_or_else(|| PamError::OutsideBox { point: x.to_vec() })
    }

    /// Multilinear interpolation between cell centers; constant extension in the
    /// outer half cell (the even reflection of a Neumann field).
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        interpolate(&self.grid, &self.values, x)
    }

    /// Restriction to an aligned sub-box; values are copied, not resampled.
    pub fn restrict(&self, sub: &LatticeBox) -> Result<GridField> {
        let off = sub.offset_in(&self.grid)?;
        let values = (0..sub.len())
            .map(|i| self.values[sub.embed_index(i, &off, &self.grid)])
            .collect();
        Ok(GridField {
            grid: sub.clone(),
            values,
            label: self.label.clone(),
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Multilinear interpolation of cell-centered samples.
pub(crate) fn interpolate(grid: &LatticeBox, values: &[f64], x: &[f64]) -> f64 {
    let d = grid.dim();
    let m = grid.per_axis();
    let h = grid.spacing();
    let mut base = [0usize; MAX_DIM];
    let mut frac = [0.0f64; MAX_DIM];
    for a in 0..d {
        let s = ((x[a] - grid.lower(a)) / h - 0.5).clamp(0.0, (m - 1) as f64);
        let j = (s.floor() as usize).min(m - 2);
        base[a] = j;
        frac[a] = s - j as f64;
    }
    let stride = [1, m, m * m];
    let origin: usize = (0..d).map(|a| base[a] * stride[a]).sum();
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = origin;
        for a in 0..d {
            if corner >> a & 1 == 1 {
                w *= frac[a];
                idx += stride[a];
            } else {
                w *= 1.0 - frac[a];
            }
        }
        acc += w * values[idx];
    }
    acc
}

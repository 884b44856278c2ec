//! Cell-centered lattice discretization of a centered cube `y + [-L/2, L/2]^d`.

use serde::{Deserialize, Serialize};

use crate::error::{PamError, Result};

/// Maximum supported spatial dimension.
pub const MAX_DIM: usize = 3;

const INTEGRALITY_TOL: f64 = 1e-9;

/// A centered cube discretized at spacing `h` with `m = L/h` cells per axis.
///
/// Grid points sit at cell centers `x_j = y - L/2 + (j + 1/2) h`, and the flat
/// index runs with axis 0 fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeBox {
    center: Vec<f64>,
    side: f64,
    spacing: f64,
    m: usize,
}

/// Build a box centered at `y` with side `side` and spacing `h`; `d` must match `y`.
pub fn make_box(y: &[f64], side: f64, h: f64, d: usize) -> Result<LatticeBox> {
    if y.len() != d {
        return Err(PamError::Geometry(format!(
            "center has {} coordinates but d = {d}",
            y.len()
        )));
    }
    LatticeBox::new(y, side, h)
}

impl LatticeBox {
    pub fn new(center: &[f64], side: f64, spacing: f64) -> Result<Self> {
        let d = center.len();
        if !(2..=MAX_DIM).contains(&d) {
            return Err(PamError::Geometry(format!("dimension {d} not in {{2,3}}")));
        }
        if !(side > 0.0 && side.is_finite()) {
            return Err(PamError::Geometry(format!("side {side} must be positive")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(PamError::Geometry(format!("spacing {spacing} must be positive")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(PamError::Geometry("center must be finite".into()));
        }
        let ratio = side / spacing;
        let m = ratio.round();
        if (ratio - m).abs() > INTEGRALITY_TOL * ratio.max(1.0) {
            return Err(PamError::Geometry(format!(
                "L/h = {ratio} is not an integer (L = {side}, h = {spacing})"
            )));
        }
        if m < 2.0 {
            return Err(PamError::Geometry(format!("L/h = {m} must be at least 2")));
        }
        Ok(Self {
            center: center.to_vec(),
            side,
            spacing,
            m: m as usize,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Number of cells per axis.
    pub fn per_axis(&self) -> usize {
        self.m
    }

    /// Total number of grid points, `m^d`.
    pub fn len(&self) -> usize {
        self.m.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^d` of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim() as i32)
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.center[axis] - 0.5 * self.side
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.center[axis] + 0.5 * self.side
    }

    /// Coordinate of the `j`-th cell center along `axis`.
    pub fn coord(&self, axis: usize, j: usize) -> f64 {
        self.lower(axis) + (j as f64 + 0.5) * self.spacing
    }

    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0usize; MAX_DIM];
        let mut rest = idx;
        for slot in out.iter_mut().take(self.dim()) {
            *slot = rest % self.m;
            rest /= self.m;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .take(self.dim())
            .rev()
            .fold(0, |acc, &j| acc * self.m + j)
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mi = self.multi_index(idx);
        (0..self.dim()).map(|a| self.coord(a, mi[a])).collect()
    }

    /// Closed-box membership `x ∈ y + [-L/2, L/2]^d`.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .enumerate()
                .all(|(a, &xi)| xi >= self.lower(a) - 1e-12 && xi <= self.upper(a) + 1e-12)
    }

    /// Index of the grid point nearest to `x`, if `x` lies in the box.
    pub fn nearest_index(&self, x: &[f64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let mut multi = [0usize; MAX_DIM];
        for a in 0..self.dim() {
            let s = (x[a] - self.lower(a)) / self.spacing - 0.5;
            multi[a] = s.round().clamp(0.0, (self.m - 1) as f64) as usize;
        }
        Some(self.flat_index(&multi[..self.dim()]))
    }

    /// Same box at `factor`-times finer spacing.
    pub fn refined(&self, factor: usize) -> Result<LatticeBox> {
        if factor == 0 {
            return Err(PamError::param("factor", "must be positive"));
        }
        LatticeBox::new(&self.center, self.side, self.spacing / factor as f64)
    }

    /// Aligned sub-box of `self` with the given center and side.
    pub fn sub_box(&self, center: &[f64], side: f64) -> Result<LatticeBox> {
        let sub = LatticeBox::new(center, side, self.spacing)?;
        sub.offset_in(self)?;
        Ok(sub)
    }

    /// Cell offset of `self` inside `big`, checking containment and alignment.
    pub fn offset_in(&self, big: &LatticeBox) -> Result<[usize; MAX_DIM]> {
        if self.dim() != big.dim() {
            return Err(PamError::Misaligned("dimension mismatch".into()));
        }
        let rel = (self.spacing - big.spacing).abs() / big.spacing;
        if rel > INTEGRALITY_TOL {
            return Err(PamError::Misaligned(format!(
                "spacings differ: {} vs {}",
                self.spacing, big.spacing
            )));
        }
        let mut off = [0usize; MAX_DIM];
        for (a, slot) in off.iter_mut().enumerate().take(self.dim()) {
            let shift = (self.lower(a) - big.lower(a)) / big.spacing;
            let k = shift.round();
            if (shift - k).abs() > 1e-7 {
                return Err(PamError::Misaligned(format!(
                    "axis {a}: offset {shift} cells is not integral"
                )));
            }
            if k < 0.0 || k as usize + self.m > big.m {
                return Err(PamError::Misaligned(format!(
                    "axis {a}: sub-box is not contained in the enclosing box"
                )));
            }
            *slot = k as usize;
        }
        Ok(off)
    }

    /// Map a flat index of `self` to the flat index of the same point in `big`.
    pub(crate) fn embed_index(&self, idx: usize, off: &[usize; MAX_DIM], big: &LatticeBox) -> usize {
        let mut mi = self.multi_index(idx);
        for a in 0..self.dim() {
            mi[a] += off[a];
        }
        big.flat_index(&mi[..self.dim()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_spacing_box_points() {
        let b = make_box(&[0.0, 0.0], 4.0, 1.0, 2).unwrap();
        assert_eq!(b.per_axis(), 4);
        assert_eq!(b.len(), 16);
        let xs: Vec<f64> = (0..4).map(|j| b.coord(0, j)).collect();
        assert_eq!(xs, vec![-1.5, -0.5, 0.5, 1.5]);
        assert_eq!(b.point(5), vec![-0.5, -0.5]);
    }

    #[test]
    fn shifted_box_inside_bounds() {
        let b = make_box(&[10.0, 10.0], 2.0, 0.5, 2).unwrap();
        assert_eq!(b.len(), 16);
        for i in 0..b.len() {
            let p = b.point(i);
            assert!(p.iter().all(|&c| (9.0..=11.0).contains(&c)));
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(make_box(&[0.0, 0.0], 3.0, 2.0, 2).is_err());
        assert!(make_box(&[0.0], 4.0, 1.0, 1).is_err());
        assert!(make_box(&[0.0; 4], 4.0, 1.0, 4).is_err());
        assert!(make_box(&[0.0, 0.0], 4.0, 1.0, 3).is_err());
        assert!(make_box(&[0.0, 0.0], 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn index_maps_are_inverse() {
        let b = make_box(&[0.3, -1.0, 2.0], 2.0, 0.25, 3).unwrap();
        for i in 0..b.len() {
            let mi = b.multi_index(i);
            assert_eq!(b.flat_index(&mi[..3]), i);
            assert_eq!(b.nearest_index(&b.point(i)), Some(i));
        }
    }

    #[test]
    fn alignment_checks() {
        let big = make_box(&[0.0, 0.0], 4.0, 0.25, 2).unwrap();
        let sub = big.sub_box(&[0.5, -0.5], 2.0).unwrap();
        let off = sub.offset_in(&big).unwrap();
        assert_eq!(&off[..2], &[6, 2]);
        assert!(big.sub_box(&[0.1, 0.0], 2.0).is_err());
        assert!(big.sub_box(&[1.5, 0.0], 2.0).is_err());
        for i in 0..sub.len() {
            let j = sub.embed_index(i, &off, &big);
            assert_eq!(sub.point(i), big.point(j));
        }
    }
}

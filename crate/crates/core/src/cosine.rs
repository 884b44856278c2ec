//! Neumann cosine basis on a centered cube and separable matrix transforms.
//!
//! Per axis the basis is `φ_0 = L^{-1/2}`, `φ_k(x) = (2/L)^{1/2} cos(πk(x - lo)/L)`.
//! On the cell-centered grid the sampled family is a scaled DCT-II, so the
//! discrete `h`-weighted inner products are exactly orthonormal below Nyquist.

use std::f64::consts::PI;

use crate::error::{PamError, Result};
use crate::lattice::{LatticeBox, MAX_DIM};

/// One-dimensional basis function.
pub fn basis_1d(k: usize, lo: f64, side: f64, x: f64) -> f64 {
    if k == 0 {
        side.powf(-0.5)
    } else {
        (2.0 / side).sqrt() * (PI * k as f64 * (x - lo) / side).cos()
    }
}

/// Derivative of [`basis_1d`] in `x`.
pub fn basis_1d_deriv(k: usize, lo: f64, side: f64, x: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        let w = PI * k as f64 / side;
        -(2.0 / side).sqrt() * w * (w * (x - lo)).sin()
    }
}

/// Tensor-product basis function `𝔫_k(x)`; `x` must lie in the closed box.
pub fn neumann_basis_eval(k: &[usize], grid: &LatticeBox, x: &[f64]) -> Result<f64> {
    if k.len() != grid.dim() {
        return Err(PamError::param("k", "length must equal the box dimension"));
    }
    if !grid.contains(x) {
        return Err(PamError::OutsideBox { point: x.to_vec() });
    }
    Ok((0..grid.dim())
        .map(|a| basis_1d(k[a], grid.lower(a), grid.side(), x[a]))
        .product())
}

/// Laplacian eigenvalue magnitude `π²|k/L|²` of mode `k`.
pub fn mode_wavenumber_sq(k: &[usize], side: f64) -> f64 {
    k.iter()
        .map(|&ki| (PI * ki as f64 / side).powi(2))
        .sum()
}

/// Dense row-major matrix used as a one-axis transform.
#[derive(Clone, Debug)]
pub(crate) struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    fn transpose_scaled(&self, s: f64) -> Mat {
        let mut data = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = s * self.data[r * self.cols + c];
            }
        }
        Mat {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

/// Apply `mat` along `axis` of a tensor with shape `dims` (axis 0 fastest).
pub(crate) fn apply_axis(input: &[f64], dims: &[usize], axis: usize, mat: &Mat) -> Vec<f64> {
    debug_assert_eq!(dims[axis], mat.cols);
    let stride: usize = dims[..axis].iter().product();
    let outer: usize = dims[axis + 1..].iter().product();
    let mut out = vec![0.0; stride * mat.rows * outer];
    for o in 0..outer {
        let in_base = o * mat.cols * stride;
        let out_base = o * mat.rows * stride;
        for r in 0..mat.rows {
            let row = &mat.data[r * mat.cols..(r + 1) * mat.cols];
            let dst = &mut out[out_base + r * stride..out_base + (r + 1) * stride];
            for (c, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let src = &input[in_base + c * stride..in_base + (c + 1) * stride];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    out
}

/// Apply one matrix per axis in sequence.
pub(crate) fn apply_separable(input: &[f64], dims_in: &[usize], mats: &[&Mat]) -> Vec<f64> {
    let mut dims = dims_in.to_vec();
    let mut cur = input.to_vec();
    for (axis, mat) in mats.iter().enumerate() {
        cur = apply_axis(&cur, &dims, axis, mat);
        dims[axis] = mat.rows;
    }
    cur
}

/// Sampled basis and derivative tables for `n` modes on the grid of a box.
#[derive(Clone, Debug)]
pub(crate) struct CosineTables {
    /// `m × n`, entry `(j, k) = φ_k(x_j)`.
    pub synth: Mat,
    /// `m × n`, entry `(j, k) = φ_k'(x_j)`.
    pub deriv: Mat,
    /// `n × m`, entry `(k, j) = h φ_k(x_j)`.
    pub analysis: Mat,
}

impl CosineTables {
    pub fn new(grid: &LatticeBox, n: usize) -> Self {
        let m = grid.per_axis();
        let lo = grid.lower(0);
        let side = grid.side();
        let mut synth = vec![0.0; m * n];
        let mut deriv = vec![0.0; m * n];
        for j in 0..m {
            let x = grid.coord(0, j);
            for k in 0..n {
                synth[j * n + k] = basis_1d(k, lo, side, x);
                deriv[j * n + k] = basis_1d_deriv(k, lo, side, x);
            }
        }
        let synth = Mat {
            rows: m,
            cols: n,
            data: synth,
        };
        let analysis = synth.transpose_scaled(grid.spacing());
        Self {
            synth,
            deriv: Mat {
                rows: m,
                cols: n,
                data: deriv,
            },
            analysis,
        }
    }
}

/// A finite cosine expansion `Σ_k a_k 𝔫_k` over modes `k ∈ [0, n)^d`,
/// stored densely with axis 0 fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct CosineSeries {
    pub(crate) domain: LatticeBox,
    pub(crate) n: usize,
    pub(crate) coeffs: Vec<f64>,
}

impl CosineSeries {
    pub fn new(domain: LatticeBox, n: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != n.pow(domain.dim() as u32) {
            return Err(PamError::Format(format!(
                "expected {} coefficients, got {}",
                n.pow(domain.dim() as u32),
                coeffs.len()
            )));
        }
        Ok(Self { domain, n, coeffs })
    }

    pub fn domain(&self) -> &LatticeBox {
        &self.domain
    }

    pub fn modes_per_axis(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn mode(&self, flat: usize) -> [usize; MAX_DIM] {
        let mut k = [0usize; MAX_DIM];
        let mut rest = flat;
        for slot in k.iter_mut().take(self.domain.dim()) {
            *slot = rest % self.n;
            rest /= self.n;
        }
        k
    }

    /// Coefficient-wise multiplier `a_k ↦ f(k) a_k`.
    pub fn map_modes(&self, f: impl Fn(&[usize]) -> f64) -> CosineSeries {
        let d = self.domain.dim();
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if c == 0.0 {
                    0.0
                } else {
                    c * f(&self.mode(i)[..d])
                }
            })
            .collect();
        CosineSeries {
            domain: self.domain.clone(),
            n: self.n,
            coeffs,
        }
    }

    /// Apply `(η - ½Δ)^{-1}` in the Neumann sense.
    pub fn resolvent(&self, eta: f64) -> CosineSeries {
        let side = self.domain.side();
        self.map_modes(|k| 1.0 / (eta + 0.5 * mode_wavenumber_sq(k, side)))
    }

    fn check_grid(&self, grid: &LatticeBox) -> Result<()> {
        let same_center = grid
            .center()
            .iter()
            .zip(self.domain.center())
            .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        if grid.dim() != self.domain.dim()
            || !same_center
            || (grid.side() - self.domain.side()).abs() > 1e-12 * self.domain.side()
        {
            return Err(PamError::Misaligned(
                "synthesis grid must discretize the expansion's box".into(),
            ));
        }
        Ok(())
    }

    /// Pointwise values on the cell centers of `grid` (any resolution of the same box).
    pub fn synthesize(&self, grid: &LatticeBox) -> Result<Vec<f64>> {
        self.check_grid(grid)?;
        let t = CosineTables::new(grid, self.n);
        let d = grid.dim();
        let mats: Vec<&Mat> = vec![&t.synth; d];
        Ok(apply_separable(&self.coeffs, &vec![self.n; d], &mats))
    }

    /// Partial derivative along `axis` sampled on `grid`.
    pub fn derivative(&self, grid: &LatticeBox, axis: usize) -> Result<Vec<f64>> {
        self.check_grid(grid)?;
        let t = CosineTables::new(grid, self.n);
        let d = grid.dim();
        let mats: Vec<&Mat> = (0..d)
            .map(|a| if a == axis { &t.deriv } else { &t.synth })
            .collect();
        Ok(apply_separable(&self.coeffs, &vec![self.n; d], &mats))
    }

    /// All partial derivatives, sharing one set of tables.
    pub fn gradient(&self, grid: &LatticeBox) -> Result<Vec<Vec<f64>>> {
        self.check_grid(grid)?;
        let t = CosineTables::new(grid, self.n);
        let d = grid.dim();
        Ok((0..d)
            .map(|axis| {
                let mats: Vec<&Mat> = (0..d)
                    .map(|a| if a == axis { &t.deriv } else { &t.synth })
                    .collect();
                apply_separable(&self.coeffs, &vec![self.n; d], &mats)
            })
            .collect())
    }

    /// Discrete projection of grid values onto the first `n` modes per axis.
    ///
    /// Exact inverse of [`CosineSeries::synthesize`] when `n ≤ m`.
    pub fn analyze(grid: &LatticeBox, values: &[f64], n: usize) -> Result<CosineSeries> {
        if values.len() != grid.len() {
            return Err(PamError::Format("value count does not match grid".into()));
        }
        let t = CosineTables::new(grid, n);
        let d = grid.dim();
        let mats: Vec<&Mat> = vec![&t.analysis; d];
        let coeffs = apply_separable(values, &vec![grid.per_axis(); d], &mats);
        CosineSeries::new(grid.clone(), n, coeffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_box;

    #[test]
    fn constant_mode_value() {
        let b = make_box(&[0.0, 0.0], 4.0, 1.0, 2).unwrap();
        for i in 0..b.len() {
            let v = neumann_basis_eval(&[0, 0], &b, &b.point(i)).unwrap();
            assert!((v - 0.25).abs() < 1e-15);
        }
        assert!(neumann_basis_eval(&[0, 0], &b, &[3.0, 0.0]).is_err());
    }

    #[test]
    fn left_face_value() {
        let b = make_box(&[0.0, 0.0], 2.0, 0.5, 2).unwrap();
        let v = neumann_basis_eval(&[1, 0], &b, &[-1.0 + 1e-9, 0.3]).unwrap();
        assert!((v - 2f64.sqrt() / 2.0).abs() < 1e-8);
    }

    #[test]
    fn discrete_orthonormality_by_direct_summation() {
        let b = make_box(&[0.3, -0.2], 3.0, 0.5, 2).unwrap();
        let m = b.per_axis();
        let samples: Vec<Vec<f64>> = (0..m * m)
            .map(|f| {
                let k = [f % m, f / m];
                (0..b.len())
                    .map(|i| neumann_basis_eval(&k, &b, &b.point(i)).unwrap())
                    .collect()
            })
            .collect();
        let w = b.cell_volume();
        for (p, u) in samples.iter().enumerate() {
            for (q, v) in samples.iter().enumerate() {
                let ip: f64 = w * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
                let want = if p == q { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-12, "({p},{q}) -> {ip}");
            }
        }
    }

    #[test]
    fn synthesis_matches_pointwise_evaluation() {
        let b = make_box(&[1.0, 2.0, -1.0], 2.0, 0.5, 3).unwrap();
        let n = 3;
        let coeffs: Vec<f64> = (0..27).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let s = CosineSeries::new(b.clone(), n, coeffs.clone()).unwrap();
        let vals = s.synthesize(&b).unwrap();
        for (i, &v) in vals.iter().enumerate() {
            let x = b.point(i);
            let want: f64 = (0..27)
                .map(|f| {
                    let k = s.mode(f);
                    coeffs[f] * neumann_basis_eval(&k, &b, &x).unwrap()
                })
                .sum();
            assert!((v - want).abs() < 1e-12);
        }
        let back = CosineSeries::analyze(&b, &vals, n).unwrap();
        for (a, c) in back.coeffs().iter().zip(&coeffs) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let b = make_box(&[0.0, 0.0], 2.0, 0.25, 2).unwrap();
        let s = CosineSeries::new(b.clone(), 4, (0..16).map(|i| (i as f64).sin()).collect())
            .unwrap();
        let fine = b.refined(8).unwrap();
        let vals = s.synthesize(&fine).unwrap();
        let dx = s.derivative(&fine, 0).unwrap();
        let m = fine.per_axis();
        let h = fine.spacing();
        for j in 1..m - 1 {
            let row = 5 * m;
            let fd = (vals[row + j + 1] - vals[row + j - 1]) / (2.0 * h);
            assert!((fd - dx[row + j]).abs() < 1e-2);
        }
    }
}

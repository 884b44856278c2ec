//! Renormalized discrete Anderson Hamiltonian `½Δ_h + (ξ_ε - c_ε)` with
//! Dirichlet (zero ghost) boundary.

use nalgebra::DMatrix;

use crate::error::{PamError, Result};
use crate::field::{FieldLabel, GridField};
use crate::lattice::LatticeBox;
use crate::noise::{renorm_constant, NoiseField};

#[derive(Clone, Debug)]
pub struct HamiltonianOperator {
    potential: GridField,
    kinetic: f64,
}

/// `H = ½Δ_h + realize(nf) - c_ε`.
pub fn assemble(nf: &NoiseField) -> HamiltonianOperator {
    let shift = renorm_constant(nf.epsilon(), nf.dim());
    let potential = nf.realize().shifted(-shift).with_label(FieldLabel::Potential);
    HamiltonianOperator::new(potential)
}

impl HamiltonianOperator {
    pub fn new(potential: GridField) -> Self {
        Self {
            potential: potential.with_label(FieldLabel::Potential),
            kinetic: 1.0,
        }
    }

    /// Multiplication by the potential only, with the Laplacian switched off.
    pub fn potential_only(potential: GridField) -> Self {
        Self {
            potential: potential.with_label(FieldLabel::Potential),
            kinetic: 0.0,
        }
    }

    pub fn grid(&self) -> &LatticeBox {
        self.potential.grid()
    }

    pub fn potential(&self) -> &GridField {
        &self.potential
    }

    pub fn len(&self) -> usize {
        self.potential.values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kinetic_factor(&self) -> f64 {
        self.kinetic
    }

    /// `H + cI`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            potential: self.potential.shifted(c),
            kinetic: self.kinetic,
        }
    }

    /// Same operator on an aligned sub-box, with the potential restricted.
    pub fn restrict(&self, sub: &LatticeBox) -> Result<Self> {
        Ok(Self {
            potential: self.potential.restrict(sub)?,
            kinetic: self.kinetic,
        })
    }

    /// `out = H v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let grid = self.potential.grid();
        let d = grid.dim();
        let m = grid.per_axis();
        let pot = self.potential.values();
        let c = self.kinetic * 0.5 / (grid.spacing() * grid.spacing());
        let stride = [1, m, m * m];
        let diag = -2.0 * d as f64 * c;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = (pot[i] + diag) * v[i];
            if c != 0.0 {
                for s in stride.iter().take(d) {
                    let j = (i / s) % m;
                    let mut nb = 0.0;
                    if j > 0 {
                        nb += v[i - s];
                    }
                    if j + 1 < m {
                        nb += v[i + s];
                    }
                    acc += c * nb;
                }
            }
            *o = acc;
        }
    }

    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.apply(v, &mut out);
        out
    }

    pub fn apply_field(&self, f: &GridField) -> Result<GridField> {
        if f.grid() != self.grid() {
            return Err(PamError::Misaligned("field and operator boxes differ".into()));
        }
        GridField::new(self.grid().clone(), self.apply_vec(f.values()), f.label().clone())
    }

    /// Dense matrix, for oracle use on small grids.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut a = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                a[(i, j)] = col[i];
            }
        }
        a
    }

    /// Gershgorin bounds `(lo, hi)` on the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let grid = self.grid();
        let c = self.kinetic * 0.5 / (grid.spacing() * grid.spacing());
        let band = 2.0 * grid.dim() as f64 * c;
        (self.potential.min() - 2.0 * band, self.potential.max())
    }
}

/// Analytic top eigenvalue of `½Δ_h` with zero ghost values on an `m^d` grid.
pub fn discrete_dirichlet_ground(grid: &LatticeBox) -> f64 {
    let h = grid.spacing();
    let d = grid.dim() as f64;
    -(d / (h * h)) * (1.0 - (std::f64::consts::PI * h / (grid.side() + h)).cos())
}

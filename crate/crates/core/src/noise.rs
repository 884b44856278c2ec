//! Mollified white noise expanded in the Neumann cosine basis of a box.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand_distr::{Distribution, StandardNormal};

use crate::cosine::CosineSeries;
use crate::error::{param, PamError, Result};
use crate::field::{FieldLabel, GridField};
use crate::io::{read_container, write_container, ContainerHeader, ContainerKind};
use crate::lattice::{LatticeBox, MAX_DIM};
use crate::seed::rng_from_seed;

/// Even smooth cutoff: 1 on `|r| ≤ ½`, a `C^∞` bump down to 0 at `|r| = 1`.
pub fn tau(r: f64) -> f64 {
    let r = r.abs();
    if r <= 0.5 {
        1.0
    } else if r < 1.0 {
        let s = 2.0 * r - 1.0;
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// `c_ε = (1/2π) log(1/ε)` in d = 2; zero in the d = 3 lattice mode.
pub fn renorm_constant(epsilon: f64, d: usize) -> f64 {
    if d == 2 {
        (1.0 / epsilon).ln() / (2.0 * PI)
    } else {
        0.0
    }
}

/// Largest per-axis index with `τ(εk/L) > 0`.
fn k_max_for(side: f64, epsilon: f64) -> usize {
    let r = side / epsilon;
    let rr = r.round();
    if (r - rr).abs() <= 1e-9 * r.max(1.0) {
        (rr as usize).saturating_sub(1)
    } else {
        r.floor() as usize
    }
}

/// Gaussian coefficients of `ξ_ε = Σ τ(εk/L) c_k 𝔫_k` on a box.
///
/// The raw draws `c_k` are stored; `τ` is applied on realization. Modes with
/// `τ(εk/L) = 0` carry no coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseField {
    grid: LatticeBox,
    epsilon: f64,
    seed: u64,
    n: usize,
    raw: Vec<f64>,
    support: Vec<bool>,
}

impl NoiseField {
    fn empty(grid: &LatticeBox, epsilon: f64, seed: u64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(param("epsilon", format!("{epsilon} not in (0, 1]")));
        }
        let d = grid.dim();
        let n = k_max_for(grid.side(), epsilon) + 1;
        let len = n.pow(d as u32);
        let mut support = vec![false; len];
        for (f, s) in support.iter_mut().enumerate() {
            let k = flat_to_mode(f, n, d);
            *s = tau(epsilon * norm(&k[..d]) / grid.side()) > 0.0;
        }
        Ok(Self {
            grid: grid.clone(),
            epsilon,
            seed,
            n,
            raw: vec![0.0; len],
            support,
        })
    }

    /// A noise with every coefficient zero.
    pub fn zero(grid: &LatticeBox, epsilon: f64) -> Result<Self> {
        Self::empty(grid, epsilon, 0)
    }

    /// Build from an explicit rule for the raw coefficient of each supported mode.
    pub fn from_modes(grid: &LatticeBox, epsilon: f64, f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        let mut nf = Self::empty(grid, epsilon, 0)?;
        let d = grid.dim();
        for i in 0..nf.raw.len() {
            if nf.support[i] {
                nf.raw[i] = f(&flat_to_mode(i, nf.n, d)[..d]);
            }
        }
        Ok(nf)
    }

    pub fn grid(&self) -> &LatticeBox {
        &self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn k_max(&self) -> usize {
        self.n - 1
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Number of modes carrying a coefficient.
    pub fn support_len(&self) -> usize {
        self.support.iter().filter(|&&s| s).count()
    }

    /// Raw coefficient `c_k`, or `None` when `τ(εk/L) = 0`.
    pub fn coefficient(&self, k: &[usize]) -> Option<f64> {
        if k.len() != self.dim() || k.iter().any(|&ki| ki >= self.n) {
            return None;
        }
        let f = k.iter().rev().fold(0, |acc, &ki| acc * self.n + ki);
        self.support[f].then_some(self.raw[f])
    }

    /// Cutoff weight `τ(εk/L)`.
    pub fn profile(&self, k: &[usize]) -> f64 {
        tau(self.epsilon * norm(k) / self.grid.side())
    }

    /// `(k, c_k)` for every supported mode, in flat mode order.
    pub fn modes(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        let d = self.dim();
        (0..self.raw.len())
            .filter(|&i| self.support[i])
            .map(move |i| (flat_to_mode(i, self.n, d)[..d].to_vec(), self.raw[i]))
    }

    /// Mollified expansion with coefficients `τ(εk/L) c_k`.
    pub fn series(&self) -> CosineSeries {
        let d = self.dim();
        let coeffs = self
            .raw
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if c == 0.0 {
                    0.0
                } else {
                    c * self.profile(&flat_to_mode(i, self.n, d)[..d])
                }
            })
            .collect();
        CosineSeries::new(self.grid.clone(), self.n, coeffs).expect("dense mode table")
    }

    pub fn add(&self, other: &NoiseField) -> Result<NoiseField> {
        if self.grid != other.grid || self.epsilon != other.epsilon {
            return Err(PamError::Misaligned("noise fields on different boxes or ε".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.raw.iter_mut().zip(&other.raw) {
            *a += b;
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> NoiseField {
        let mut out = self.clone();
        out.raw.iter_mut().for_each(|c| *c *= s);
        out
    }

    /// Pointwise values on the box's own grid.
    pub fn realize(&self) -> GridField {
        self.realize_on(&self.grid).expect("own grid")
    }

    /// Values of the same continuous realization on another grid of the same box.
    pub fn realize_on(&self, grid: &LatticeBox) -> Result<GridField> {
        let values = self.series().synthesize(grid)?;
        GridField::new(grid.clone(), values, FieldLabel::Noise)
    }

    /// The realized field restricted to an aligned sub-box (no resampling).
    pub fn restrict(&self, sub: &LatticeBox) -> Result<GridField> {
        sub.offset_in(&self.grid)?;
        self.realize().restrict(sub)
    }

    /// Expansion of `Z = (η - ½Δ)^{-1} ξ_ε`.
    pub fn z_series(&self, eta: f64) -> Result<CosineSeries> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(param("eta", format!("{eta} must be positive")));
        }
        Ok(self.series().resolvent(eta))
    }

    /// `Z` sampled on the box's grid.
    pub fn compute_z(&self, eta: f64) -> Result<GridField> {
        let values = self.z_series(eta)?.synthesize(&self.grid)?;
        GridField::new(self.grid.clone(), values, FieldLabel::Resolvent)
    }

    fn header(&self) -> ContainerHeader {
        ContainerHeader {
            kind: ContainerKind::NoiseCoefficients,
            grid: self.grid.clone(),
            epsilon: self.epsilon,
            seed: self.seed,
            k_max: self.k_max() as u64,
            time: f64::NAN,
        }
    }

    /// Binary container; the payload lists supported raw coefficients in flat mode order.
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let payload: Vec<f64> = self.modes().map(|(_, c)| c).collect();
        write_container(w, &self.header(), &payload)
    }

    pub fn read_binary<R: Read>(r: R) -> Result<NoiseField> {
        let (h, payload) = read_container(r)?;
        if h.kind != ContainerKind::NoiseCoefficients {
            return Err(PamError::Format("container does not hold noise coefficients".into()));
        }
        let mut nf = Self::empty(&h.grid, h.epsilon, h.seed)?;
        if nf.k_max() as u64 != h.k_max || nf.support_len() != payload.len() {
            return Err(PamError::Format("coefficient table does not match header".into()));
        }
        let mut it = payload.into_iter();
        for i in 0..nf.raw.len() {
            if nf.support[i] {
                nf.raw[i] = it.next().expect("length checked");
            }
        }
        Ok(nf)
    }

    /// CSV with columns `k0,…,k{d-1},coefficient,tau`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dim();
        let cols: Vec<String> = (0..d).map(|a| format!("k{a}")).collect();
        writeln!(w, "{},coefficient,tau", cols.join(","))?;
        for (k, c) in self.modes() {
            let ks: Vec<String> = k.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{:e},{:e}", ks.join(","), c, self.profile(&k))?;
        }
        Ok(())
    }
}

/// Draw i.i.d. standard Gaussians for every supported mode, in flat mode order.
pub fn sample_noise(grid: &LatticeBox, epsilon: f64, seed: u64) -> Result<NoiseField> {
    let mut nf = NoiseField::empty(grid, epsilon, seed)?;
    let mut rng = rng_from_seed(seed);
    for i in 0..nf.raw.len() {
        if nf.support[i] {
            nf.raw[i] = StandardNormal.sample(&mut rng);
        }
    }
    Ok(nf)
}

/// Neumann solve of `(η - ½Δ)Z = ξ_ε`, sampled on the noise grid.
pub fn compute_z(nf: &NoiseField, eta: f64) -> Result<GridField> {
    nf.compute_z(eta)
}

fn norm(k: &[usize]) -> f64 {
    k.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt()
}

fn flat_to_mode(f: usize, n: usize, d: usize) -> [usize; MAX_DIM] {
    let mut k = [0usize; MAX_DIM];
    let mut rest = f;
    for slot in k.iter_mut().take(d) {
        *slot = rest % n;
        rest /= n;
    }
    k
}

//! Localized PAM evolution: spectral sums, a Crank–Nicolson oracle, Krylov
//! exponentials, the annular series expansion and peak-set extraction.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{param, PamError, Result};
use crate::field::{FieldLabel, GridField};
use crate::hamiltonian::{assemble, HamiltonianOperator};
use crate::io::{write_container, ContainerHeader, ContainerKind};
use crate::lanczos::krylov_expv;
use crate::lattice::{make_box, LatticeBox};
use crate::noise::{sample_noise, NoiseField};
use crate::parallel::par_map;
use crate::seed::{label_hash, seed_derive};
use crate::spectrum::{principal_eigenvalue, Spectrum};

/// Initial condition of the localized problem.
#[derive(Clone, Debug)]
pub enum InitialData {
    Flat,
    /// Unit mass `h^{-d}` at the grid point nearest to `z`.
    Delta(Vec<f64>),
    Custom(GridField),
}

impl InitialData {
    pub fn on_grid(&self, grid: &LatticeBox) -> Result<Vec<f64>> {
        match self {
            InitialData::Flat => Ok(vec![1.0; grid.len()]),
            InitialData::Delta(z) => {
                let i = grid
                    .nearest_index(z)
                    .ok_or_else(|| PamError::OutsideBox { point: z.clone() })?;
                let mut v = vec![0.0; grid.len()];
                v[i] = 1.0 / grid.cell_volume();
                Ok(v)
            }
            InitialData::Custom(f) => {
                if f.grid() != grid {
                    return Err(PamError::Misaligned("initial field lives on another box".into()));
                }
                Ok(f.values().to_vec())
            }
        }
    }
}

/// Default relative tolerance on the discarded spectral tail.
pub const DEFAULT_RTOL: f64 = 1e-6;

pub fn evolve_spectral(spec: &Spectrum, phi: &InitialData, t: f64) -> Result<GridField> {
    evolve_spectral_with(spec, phi, t, DEFAULT_RTOL)
}

/// `Σ_n e^{tλ_n}⟨v_n, φ⟩ v_n` over the retained pairs.
///
/// Fails when `e^{tλ_K}‖φ_⊥‖` exceeds `rtol‖u‖`, where `φ_⊥` is the part of
/// `φ` outside the retained span.
pub fn evolve_spectral_with(spec: &Spectrum, phi: &InitialData, t: f64, rtol: f64) -> Result<GridField> {
    if t < 0.0 {
        return Err(param("t", "must be nonnegative"));
    }
    let grid = &spec.grid;
    let phi = GridField::new(grid.clone(), phi.on_grid(grid)?, FieldLabel::Solution)?;
    let mut u = vec![0.0; grid.len()];
    let mut rest = phi.values().to_vec();
    for (lam, v) in spec.eigenvalues.iter().zip(&spec.eigenvectors) {
        let a = phi.dot(v)?;
        let g = (t * lam).exp() * a;
        for ((ui, ri), vi) in u.iter_mut().zip(rest.iter_mut()).zip(v.values()) {
            *ui += g * vi;
            *ri -= a * vi;
        }
    }
    let out = GridField::new(grid.clone(), u, FieldLabel::Solution)?;
    let perp = (grid.cell_volume() * rest.iter().map(|x| x * x).sum::<f64>()).sqrt();
    let lam_k = *spec.eigenvalues.last().expect("nonempty spectrum");
    let bound = (t * lam_k).exp() * perp;
    let allowed = rtol * out.norm_l2();
    if bound > allowed && perp > 1e-10 * phi.norm_l2() {
        return Err(PamError::Truncation { bound, allowed });
    }
    Ok(out)
}

/// Largest `dt` keeping the explicit half of the Crank–Nicolson step nonnegative,
/// which makes the scheme positivity preserving.
pub fn cn_positivity_threshold(h: &HamiltonianOperator) -> f64 {
    let g = h.grid();
    let hh = g.spacing() * g.spacing();
    let k = h.kinetic_factor();
    let vmin = h.potential().min();
    2.0 * hh / (k * g.dim() as f64 + hh * (-vmin).max(0.0))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CgStats {
    pub steps: usize,
    pub max_iterations: usize,
}

/// Solve `(I - s H) x = b` by conjugate gradients, starting from `x`.
fn cg_shifted(h: &HamiltonianOperator, s: f64, b: &[f64], x: &mut [f64], tol: f64) -> Result<usize> {
    let n = b.len();
    let op = |v: &[f64], out: &mut [f64]| {
        h.apply(v, out);
        for i in 0..n {
            out[i] = v[i] - s * out[i];
        }
    };
    let mut ax = vec![0.0; n];
    op(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let mut ap = vec![0.0; n];
    let max_it = 10 * n + 100;
    for it in 0..max_it {
        if rr.sqrt() <= tol * bnorm {
            return Ok(it);
        }
        op(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(PamError::CgNotConverged {
                iterations: it,
                residual: rr.sqrt() / bnorm,
            });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(PamError::CgNotConverged {
        iterations: max_it,
        residual: rr.sqrt() / bnorm,
    })
}

/// `(I - dt/2 H) u_{n+1} = (I + dt/2 H) u_n`, `⌈t/dt⌉` steps of equal length.
pub fn evolve_crank_nicolson(h: &HamiltonianOperator, phi: &InitialData, t: f64, dt: f64) -> Result<GridField> {
    evolve_crank_nicolson_stats(h, phi, t, dt).map(|(u, _)| u)
}

pub fn evolve_crank_nicolson_stats(
    h: &HamiltonianOperator,
    phi: &InitialData,
    t: f64,
    dt: f64,
) -> Result<(GridField, CgStats)> {
    if !(dt > 0.0) || t < 0.0 {
        return Err(param("dt", "need dt > 0 and t ≥ 0"));
    }
    let steps = ((t / dt) - 1e-9).ceil().max(0.0) as usize;
    let mut u = phi.on_grid(h.grid())?;
    let mut stats = CgStats {
        steps,
        max_iterations: 0,
    };
    if steps == 0 {
        return Ok((GridField::new(h.grid().clone(), u, FieldLabel::Solution)?, stats));
    }
    let tau = t / steps as f64;
    let s = 0.5 * tau;
    let vmax = h.potential().max();
    if s * vmax >= 1.0 {
        return Err(PamError::TimeStep { dt: tau, bound: 2.0 / vmax });
    }
    let mut hu = vec![0.0; u.len()];
    for _ in 0..steps {
        h.apply(&u, &mut hu);
        let rhs: Vec<f64> = u.iter().zip(&hu).map(|(a, b)| a + s * b).collect();
        let its = cg_shifted(h, s, &rhs, &mut u, 1e-10)?;
        stats.max_iterations = stats.max_iterations.max(its);
    }
    Ok((GridField::new(h.grid().clone(), u, FieldLabel::Solution)?, stats))
}

/// `e^{tH}φ` by a Lanczos exponential (no eigenpairs needed).
pub fn evolve_krylov(h: &HamiltonianOperator, phi: &InitialData, t: f64, tol: f64) -> Result<GridField> {
    let v = phi.on_grid(h.grid())?;
    let u = krylov_expv(|x, out| h.apply(x, out), &v, t, tol, 120)?;
    GridField::new(h.grid().clone(), u, FieldLabel::Solution)
}

/// Nested-box annular expansion of the whole-space flat-data solution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesSolution {
    pub center: Vec<f64>,
    pub scale: f64,
    pub probes: Vec<Vec<f64>>,
    /// `terms[k][p]`: term `k` at probe `p`.
    pub terms: Vec<Vec<f64>>,
    /// Amount removed by clamping negative differences, per term.
    pub clamped: Vec<f64>,
    /// Ratio of the last two terms (max over probes), used for the tail estimate.
    pub decay: Option<f64>,
    pub tail_bound: Option<f64>,
}

impl SeriesSolution {
    pub fn partial_sums(&self, probe: usize) -> Vec<f64> {
        let mut acc = 0.0;
        self.terms
            .iter()
            .map(|t| {
                acc += t[probe];
                acc
            })
            .collect()
    }

    pub fn total(&self, probe: usize) -> f64 {
        self.terms.iter().map(|t| t[probe]).sum()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesConfig {
    /// Exponent `b` in `L_t = ⌊t^b⌋`.
    pub b: f64,
    /// Replaces `⌊t^b⌋` when set (needed at small `t`, where `⌊t^b⌋ < 2`).
    pub base_scale: Option<f64>,
    pub tol: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            b: 1.5,
            base_scale: None,
            tol: 1e-10,
        }
    }
}

/// Annulus scale `L_t`.
pub fn annulus_scale(t: f64, cfg: &SeriesConfig) -> Result<f64> {
    let s = cfg.base_scale.unwrap_or_else(|| t.powf(cfg.b).floor());
    if s < 2.0 {
        return Err(param("L_t", format!("{s} < 2; set a base scale")));
    }
    Ok(s)
}

/// Terms `𝒰_k = u_{L^{k+1}} - u_{L^k}` (clamped at 0), `𝒰_0 = u_L`, from flat data on
/// nested Dirichlet boxes sharing `master`'s realization. `master` must contain
/// the box of side `L^{K+1}` around `y`.
pub fn series_expansion(
    master: &NoiseField,
    y: &[f64],
    t: f64,
    k_max: usize,
    probes: &[Vec<f64>],
    cfg: &SeriesConfig,
) -> Result<SeriesSolution> {
    let scale = annulus_scale(t, cfg)?;
    let h = master.grid().spacing();
    let first = LatticeBox::new(y, scale, h)?;
    for p in probes {
        if !first.contains(p) {
            return Err(PamError::OutsideBox { point: p.clone() });
        }
    }
    let h_master = assemble(master);
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let side = scale.powi(k as i32 + 1);
        let sub = h_master.grid().sub_box(y, side)?;
        let op = h_master.restrict(&sub)?;
        let u = evolve_krylov(&op, &InitialData::Flat, t, cfg.tol)?;
        values.push(probes.iter().map(|p| u.interpolate(p)).collect());
    }
    let mut terms = Vec::with_capacity(k_max + 1);
    let mut clamped = Vec::with_capacity(k_max + 1);
    terms.push(values[0].clone());
    clamped.push(0.0);
    for k in 1..=k_max {
        let mut c = 0.0f64;
        let row = values[k]
            .iter()
            .zip(&values[k - 1])
            .map(|(a, b)| {
                let d = a - b;
                if d < 0.0 {
                    c = c.max(-d);
                    0.0
                } else {
                    d
                }
            })
            .collect();
        terms.push(row);
        clamped.push(c);
    }
    let decay = (k_max >= 2).then(|| {
        (0..probes.len())
            .map(|p| {
                let prev = terms[k_max - 1][p];
                if prev > 0.0 {
                    terms[k_max][p] / prev
                } else {
                    0.0
                }
            })
            .fold(0.0f64, f64::max)
    });
    let tail_bound = decay.and_then(|q| {
        (q < 1.0).then(|| {
            let last = terms[k_max].iter().copied().fold(0.0f64, f64::max);
            last * q / (1.0 - q)
        })
    });
    Ok(SeriesSolution {
        center: y.to_vec(),
        scale,
        probes: probes.to_vec(),
        terms,
        clamped,
        decay,
        tail_bound,
    })
}

/// Exponent `2/(4-d)` of the spatial peak threshold.
pub fn spatial_exponent(d: usize) -> f64 {
    2.0 / (4.0 - d as f64)
}

/// Grid points with `|x| > e` and `u(t,x) ≥ exp(α t (log|x|)^{2/(4-d)})`.
pub fn peak_set_spatial(u: &GridField, t: f64, alpha: f64) -> Vec<Vec<f64>> {
    let g = u.grid();
    let p = spatial_exponent(g.dim());
    (0..g.len())
        .filter_map(|i| {
            let x = g.point(i);
            let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            (r > std::f64::consts::E && u.values()[i] >= (alpha * t * r.ln().powf(p)).exp()).then_some(x)
        })
        .collect()
}

/// Chart points `(e^{t/v}, x)` where `u(t,x) ≥ exp(β t^{(6-d)/(4-d)})`.
pub fn peak_set_spatiotemporal(snapshots: &[(f64, GridField)], beta: f64, v: f64) -> Result<Vec<(f64, Vec<f64>)>> {
    if snapshots.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(param("snapshots", "times must be sorted"));
    }
    if !(beta > 0.0 && v > 0.0) {
        return Err(param("beta", "β and v must be positive"));
    }
    let mut out = Vec::new();
    for (t, u) in snapshots {
        let d = u.grid().dim() as f64;
        let level = (beta * t.powf((6.0 - d) / (4.0 - d))).exp();
        let s = (t / v).exp();
        for (i, &val) in u.values().iter().enumerate() {
            if val >= level {
                out.push((s, u.grid().point(i)));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShellStatistic {
    pub n: usize,
    /// Max of `log₊u / (log|x|)^{2/(4-d)}` over grid points in the shell.
    pub value: f64,
    /// `value / ((d/𝔠_d)^{2/(4-d)} t)`.
    pub ratio: f64,
    pub points: usize,
}

/// Per-shell normalized log-height, with shells `[−e^n, e^n)^d \ [−e^{n−1}, e^{n−1})^d`.
pub fn asymptotics_statistic(u: &GridField, t: f64, c_d: f64, shells: std::ops::RangeInclusive<usize>) -> Vec<ShellStatistic> {
    let g = u.grid();
    let d = g.dim();
    let p = spatial_exponent(d);
    let predicted = (d as f64 / c_d).powf(p) * t;
    shells
        .map(|n| {
            let mut best = 0.0f64;
            let mut count = 0;
            for i in 0..g.len() {
                let x = g.point(i);
                if crate::fractal::shell_index(&x) != n {
                    continue;
                }
                let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                if r <= 1.0 {
                    continue;
                }
                count += 1;
                let lu = u.values()[i].ln().max(0.0);
                best = best.max(lu / r.ln().powf(p));
            }
            ShellStatistic {
                n,
                value: best,
                ratio: best / predicted,
                points: count,
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalAsymptoticsRow {
    pub t: f64,
    pub side: f64,
    pub lambda1: f64,
    pub sup_log_u: f64,
    /// `None` when `λ₁ ≤ 0` (row skipped).
    pub ratio: Option<f64>,
}

/// `sup_{B(y,1)} log u_{L_t}(t,·) / (t λ₁(Q_{L_t}))` along `t_grid`, with box sides
/// from `side_of(t)`; all boxes are carved from `master`.
pub fn local_asymptotics_check(
    master: &NoiseField,
    y: &[f64],
    t_grid: &[f64],
    side_of: impl Fn(f64) -> f64,
) -> Result<Vec<LocalAsymptoticsRow>> {
    let h_master = assemble(master);
    let mut rows = Vec::new();
    for &t in t_grid {
        let side = side_of(t);
        let sub = h_master.grid().sub_box(y, side)?;
        let op = h_master.restrict(&sub)?;
        let lambda1 = principal_eigenvalue(&op)?;
        let u = evolve_krylov(&op, &InitialData::Flat, t, 1e-10)?;
        let mut sup = f64::NEG_INFINITY;
        for i in 0..sub.len() {
            let x = sub.point(i);
            let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
            if r2 <= 1.0 {
                sup = sup.max(u.values()[i].ln());
            }
        }
        rows.push(LocalAsymptoticsRow {
            t,
            side,
            lambda1,
            sup_log_u: sup,
            ratio: (lambda1 > 0.0).then(|| sup / (t * lambda1)),
        });
    }
    Ok(rows)
}

/// Flat-data solution values at integer lattice points of a large region,
/// assembled from independent tiles.
#[derive(Clone, Debug)]
pub struct LatticeSamples {
    pub d: usize,
    /// Flattened integer coordinates, `d` per point.
    pub coords: Vec<i64>,
    pub values: Vec<f64>,
}

impl LatticeSamples {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[i64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    /// Integer points with `|x| > e` above the spatial threshold for `α`.
    pub fn peak_set(&self, t: f64, alpha: f64) -> Vec<Vec<i64>> {
        let p = spatial_exponent(self.d);
        (0..self.len())
            .filter_map(|i| {
                let x = self.point(i);
                let r = x.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
                (r > std::f64::consts::E && self.values[i] >= (alpha * t * r.ln().powf(p)).exp())
                    .then(|| x.to_vec())
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TileConfig {
    pub d: usize,
    /// Tile side; a multiple of 1 so integer points tile exactly.
    pub side: f64,
    pub h: f64,
    pub epsilon: f64,
    pub t: f64,
    /// Region `[-extent, extent)^d` in integer coordinates.
    pub extent: i64,
    pub seed: u64,
}

/// Tile the region with independent boxes (own noise each) and evaluate the
/// flat-data Dirichlet solution at the integer points of every tile.
pub fn tiled_solution(cfg: &TileConfig) -> Result<LatticeSamples> {
    let d = cfg.d;
    let side = cfg.side.round() as i64;
    if side < 1 || (cfg.side - side as f64).abs() > 1e-12 {
        return Err(param("side", "tile side must be a positive integer"));
    }
    let cells_per_unit = (1.0 / cfg.h).round() as i64;
    if cells_per_unit < 1 || (cells_per_unit as f64 * cfg.h - 1.0).abs() > 1e-9 {
        return Err(param("h", "1/h must be an integer so integer points are grid points"));
    }
    let per_axis = (2 * cfg.extent + side - 1) / side;
    let n_tiles = (per_axis as usize).pow(d as u32);
    let label = label_hash("tile");
    let results = par_map((0..n_tiles).collect(), |ti| -> Result<(Vec<i64>, Vec<f64>)> {
        let mut lo = vec![0i64; d];
        let mut rest = ti as i64;
        for slot in lo.iter_mut() {
            *slot = -cfg.extent + (rest % per_axis) * side;
            rest /= per_axis;
        }
        // Integer points lo..lo+side-1 are cell centers of a box shifted by h/2.
        let center: Vec<f64> = lo
            .iter()
            .map(|&l| l as f64 - 0.5 * cfg.h + 0.5 * side as f64)
            .collect();
        let grid = make_box(&center, side as f64, cfg.h, d)?;
        let nf = sample_noise(&grid, cfg.epsilon, seed_derive(cfg.seed, &[label, ti as u64]))?;
        let u = evolve_krylov(&assemble(&nf), &InitialData::Flat, cfg.t, 1e-10)?;
        let mut coords = Vec::new();
        let mut values = Vec::new();
        for i in 0..grid.len() {
            let x = grid.point(i);
            let ints: Vec<i64> = x.iter().map(|c| c.round() as i64).collect();
            let on_lattice = x.iter().zip(&ints).all(|(c, &k)| (c - k as f64).abs() < 1e-9);
            if on_lattice && ints.iter().all(|&k| k >= -cfg.extent && k < cfg.extent) {
                coords.extend_from_slice(&ints);
                values.push(u.values()[i]);
            }
        }
        Ok((coords, values))
    });
    let mut out = LatticeSamples {
        d,
        coords: Vec::new(),
        values: Vec::new(),
    };
    for r in results {
        let (c, v) = r?;
        out.coords.extend(c);
        out.values.extend(v);
    }
    Ok(out)
}

/// Solution snapshot in the shared binary container; `t` goes in the header.
pub fn write_snapshot<W: Write>(u: &GridField, t: f64, epsilon: f64, seed: u64, w: W) -> Result<()> {
    let header = ContainerHeader {
        kind: ContainerKind::GridValues,
        grid: u.grid().clone(),
        epsilon,
        seed,
        k_max: 0,
        time: t,
    };
    write_container(w, &header, u.values())
}

pub fn read_snapshot<R: std::io::Read>(r: R) -> Result<(GridField, f64)> {
    let (h, payload) = crate::io::read_container(r)?;
    if h.kind != ContainerKind::GridValues {
        return Err(PamError::Format("container does not hold grid values".into()));
    }
    Ok((GridField::new(h.grid, payload, FieldLabel::Solution)?, h.time))
}

/// Probe CSV: `x0,…,value` per row.
pub fn write_probes_csv<W: Write>(u: &GridField, probes: &[Vec<f64>], mut w: W) -> Result<()> {
    let d = u.grid().dim();
    let cols: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    writeln!(w, "{},value", cols.join(","))?;
    for p in probes {
        let xs: Vec<String> = p.iter().map(|c| c.to_string()).collect();
        writeln!(w, "{},{:e}", xs.join(","), u.interpolate(p))?;
    }
    Ok(())
}

/// Peak-set CSV; the leading `s` column is present for spatio-temporal sets.
pub fn write_peak_csv<W: Write>(points: &[(Option<f64>, Vec<f64>)], mut w: W) -> Result<()> {
    let Some((s0, x0)) = points.first() else {
        writeln!(w, "x0")?;
        return Ok(());
    };
    let mut header: Vec<String> = (0..x0.len()).map(|a| format!("x{a}")).collect();
    if s0.is_some() {
        header.insert(0, "s".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for (s, x) in points {
        let mut cols: Vec<String> = x.iter().map(|c| c.to_string()).collect();
        if let Some(s) = s {
            cols.insert(0, s.to_string());
        }
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{dense_eigenpairs, top_eigenpairs};

    fn small_problem() -> HamiltonianOperator {
        let b = make_box(&[0.0, 0.0], 2.0, 0.25, 2).unwrap();
        assemble(&sample_noise(&b, 0.25, 3).unwrap())
    }

    #[test]
    fn eigenvector_evolves_by_exponential() {
        let h = small_problem();
        let s = top_eigenpairs(&h, 4, None).unwrap();
        let v1 = s.eigenvectors[0].clone();
        let u = evolve_spectral(&s, &InitialData::Custom(v1.clone()), 0.7).unwrap();
        let g = (0.7 * s.lambda1()).exp();
        for (a, b) in u.values().iter().zip(v1.values()) {
            assert!((a - g * b).abs() < 1e-8 * g.max(1.0) * v1.sup_norm());
        }
    }

    #[test]
    fn truncation_is_detected() {
        let h = small_problem();
        let s = top_eigenpairs(&h, 2, None).unwrap();
        assert!(matches!(
            evolve_spectral(&s, &InitialData::Flat, 0.01),
            Err(PamError::Truncation { .. })
        ));
    }

    #[test]
    fn spectral_and_krylov_and_cn_agree() {
        let h = small_problem();
        let s = dense_eigenpairs(&h, h.len()).unwrap();
        let a = evolve_spectral(&s, &InitialData::Flat, 0.5).unwrap();
        let b = evolve_krylov(&h, &InitialData::Flat, 0.5, 1e-12).unwrap();
        let c = evolve_crank_nicolson(&h, &InitialData::Flat, 0.5, 1e-3).unwrap();
        let scale = a.sup_norm();
        assert!(a.sub(&b).unwrap().sup_norm() < 1e-8 * scale);
        assert!(a.sub(&c).unwrap().sup_norm() < 1e-4 * scale);
    }

    #[test]
    fn scalar_ode_with_potential_only() {
        let b = make_box(&[0.0, 0.0], 2.0, 0.5, 2).unwrap();
        let h = HamiltonianOperator::potential_only(GridField::constant(b, 0.8, FieldLabel::Potential));
        let u = evolve_crank_nicolson(&h, &InitialData::Flat, 1.0, 0.01).unwrap();
        for v in u.values() {
            assert!((v - 0.8f64.exp()).abs() < 1e-4);
        }
    }

    #[test]
    fn delta_has_unit_mass() {
        let b = make_box(&[0.0, 0.0], 2.0, 0.25, 2).unwrap();
        let v = InitialData::Delta(vec![0.1, -0.3]).on_grid(&b).unwrap();
        assert!((v.iter().sum::<f64>() * b.cell_volume() - 1.0).abs() < 1e-14);
        assert!(InitialData::Delta(vec![5.0, 0.0]).on_grid(&b).is_err());
    }

    #[test]
    fn peak_set_boundary_inclusion_and_vacuity() {
        let b = make_box(&[10.0, 10.0], 4.0, 1.0, 2).unwrap();
        let t = 1.0;
        let alpha = 0.5;
        let u = GridField::from_fn(b.clone(), FieldLabel::Solution, |x| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            (alpha * t * r.ln()).exp()
        });
        assert_eq!(peak_set_spatial(&u, t, alpha).len(), b.len());
        assert!(peak_set_spatial(&u, t, 10.0).is_empty());
    }

    #[test]
    fn chart_time_at_v_is_e() {
        let b = make_box(&[0.0, 0.0], 2.0, 1.0, 2).unwrap();
        let u = GridField::constant(b, 1e9, FieldLabel::Solution);
        let pts = peak_set_spatiotemporal(&[(2.0, u.clone())], 0.1, 2.0).unwrap();
        assert!((pts[0].0 - std::f64::consts::E).abs() < 1e-12);
        assert!(peak_set_spatiotemporal(&[(2.0, u.clone()), (1.0, u)], 0.1, 2.0).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let h = small_problem();
        let u = evolve_krylov(&h, &InitialData::Flat, 0.3, 1e-10).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&u, 0.3, 0.25, 3, &mut buf).unwrap();
        let (v, t) = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(v.values(), u.values());
        assert_eq!(t, 0.3);
    }
}

//! Modified Feynman–Kac representation at mollified level: the resolvent
//! equation for `Y`, the drifted diffusion, the Girsanov-corrected weight and
//! empirical kernel and escape statistics.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cosine::{mode_wavenumber_sq, CosineSeries};
use crate::error::{param, PamError, Result};
use crate::evolution::InitialData;
use crate::field::{FieldLabel, GridField};
use crate::io::{write_container, ContainerHeader, ContainerKind};
use crate::lattice::LatticeBox;
use crate::noise::{renorm_constant, NoiseField};
use crate::parallel::par_map;
use crate::seed::stream_rng;
use crate::stats::{linear_fit, mean_stderr, normal_cdf, wilson_interval};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolventOptions {
    /// Sup-norm residual of the equation at the grid points.
    pub tol: f64,
    pub eta_max: f64,
    pub max_iter: usize,
    /// Relaxation weight of the Picard update, in `(0, 1]`.
    pub damping: f64,
    /// Successive-difference ratio above which `η` is doubled.
    pub ratio_limit: f64,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            eta_max: 1e8,
            max_iter: 400,
            damping: 1.0,
            ratio_limit: 0.9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ResolventSolution {
    pub y: GridField,
    pub eta: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Successive-difference ratios of the accepted run.
    pub ratios: Vec<f64>,
    /// Largest ratio of each abandoned `η`.
    pub rejected: Vec<(f64, f64)>,
}

/// Solve `(η − ½Δ)Y = ½|∇Z|² + ∇Y·∇Z + ½|∇Y|²` on the grid of `z`, with
/// spectral (Neumann cosine) derivatives.
pub fn solve_resolvent_y(z: &GridField, eta0: f64, opts: &ResolventOptions) -> Result<ResolventSolution> {
    let grid = z.grid();
    let series = CosineSeries::analyze(grid, z.values(), grid.per_axis())?;
    let grad = series.gradient(grid)?;
    solve_resolvent_grad(grid, &grad, eta0, opts)
}

/// As [`solve_resolvent_y`] with `∇Z` supplied directly on the grid.
pub fn solve_resolvent_grad(
    grid: &LatticeBox,
    grad_z: &[Vec<f64>],
    eta0: f64,
    opts: &ResolventOptions,
) -> Result<ResolventSolution> {
    if !(eta0 > 0.0 && eta0.is_finite()) {
        return Err(param("eta0", "must be positive"));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(param("damping", "must lie in (0, 1]"));
    }
    if grad_z.len() != grid.dim() || grad_z.iter().any(|g| g.len() != grid.len() || g.iter().any(|v| !v.is_finite())) {
        return Err(param("grad_z", "must hold d finite components on the grid"));
    }
    let mut eta = eta0;
    let mut rejected = Vec::new();
    loop {
        match picard(grid, grad_z, eta, opts)? {
            Ok(sol) => {
                return Ok(ResolventSolution { rejected, ..sol });
            }
            Err(worst) => {
                rejected.push((eta, worst));
                eta *= 2.0;
                if eta > opts.eta_max {
                    return Err(PamError::ResolventNotContracting {
                        eta,
                        ratios: rejected.iter().map(|r| r.1).collect(),
                    });
                }
            }
        }
    }
}

/// One Picard run at fixed `η`; the inner `Err` carries the offending ratio.
fn picard(
    grid: &LatticeBox,
    grad_z: &[Vec<f64>],
    eta: f64,
    opts: &ResolventOptions,
) -> Result<std::result::Result<ResolventSolution, f64>> {
    let m = grid.per_axis();
    let n = grid.len();
    let side = grid.side();
    let gz2: Vec<f64> = (0..n).map(|i| 0.5 * grad_z.iter().map(|g| g[i] * g[i]).sum::<f64>()).collect();
    let mut y = vec![0.0; n];
    let mut ratios = Vec::new();
    let mut prev_diff = f64::NAN;
    for it in 0..opts.max_iter {
        let ys = CosineSeries::analyze(grid, &y, m)?;
        let gy = ys.gradient(grid)?;
        let ly = ys
            .map_modes(|k| eta + 0.5 * mode_wavenumber_sq(k, side))
            .synthesize(grid)?;
        let r: Vec<f64> = (0..n)
            .map(|i| {
                let mut rhs = gz2[i];
                for (a, b) in gy.iter().zip(grad_z) {
                    rhs += a[i] * b[i] + 0.5 * a[i] * a[i];
                }
                ly[i] - rhs
            })
            .collect();
        let residual = r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if !residual.is_finite() {
            return Ok(Err(f64::INFINITY));
        }
        if residual <= opts.tol {
            return Ok(Ok(ResolventSolution {
                y: GridField::new(grid.clone(), y, FieldLabel::Correction)?,
                eta,
                residual,
                iterations: it,
                ratios,
                rejected: Vec::new(),
            }));
        }
        let step = CosineSeries::analyze(grid, &r, m)?.resolvent(eta).synthesize(grid)?;
        let mut diff = 0.0f64;
        for (v, s) in y.iter_mut().zip(&step) {
            let dv = opts.damping * s;
            *v -= dv;
            diff = diff.max(dv.abs());
        }
        if prev_diff.is_finite() && prev_diff > 0.0 {
            let ratio = diff / prev_diff;
            ratios.push(ratio);
            if ratio > opts.ratio_limit && diff > 1e3 * opts.tol {
                return Ok(Err(ratio));
            }
        }
        prev_diff = diff;
    }
    Ok(Err(ratios.last().copied().unwrap_or(f64::INFINITY)))
}

/// `Z`, `Y`, `η` and the drift `∇(Z+Y)` with an off-grid evaluator.
#[derive(Clone, Debug)]
pub struct DriftPackage {
    pub z: GridField,
    pub y: GridField,
    pub eta: f64,
    pub drift: Vec<GridField>,
    pub residual: f64,
    pub ratios: Vec<f64>,
    /// Paths are killed on leaving `[lo, hi]^d` of this half-width around the center.
    pub kill_half_width: f64,
    /// Per grid point: `Z + ηY`, `Z + Y`, then the drift components.
    packed: Vec<f64>,
}

/// Values of the package at a point.
#[derive(Clone, Copy, Debug)]
pub struct DriftSample {
    pub potential: f64,
    pub w: f64,
    pub drift: [f64; 3],
}

impl DriftPackage {
    pub fn from_parts(z: GridField, y: GridField, eta: f64, drift: Vec<GridField>) -> Result<Self> {
        let grid = z.grid().clone();
        if y.grid() != &grid || drift.len() != grid.dim() || drift.iter().any(|g| g.grid() != &grid) {
            return Err(PamError::Misaligned("drift package fields must share one grid".into()));
        }
        let d = grid.dim();
        let stride = 2 + d;
        let mut packed = vec![0.0; grid.len() * stride];
        for i in 0..grid.len() {
            packed[i * stride] = z.values()[i] + eta * y.values()[i];
            packed[i * stride + 1] = z.values()[i] + y.values()[i];
            for a in 0..d {
                packed[i * stride + 2 + a] = drift[a].values()[i];
            }
        }
        Ok(Self {
            kill_half_width: grid.side() / 2.0 + grid.spacing() / 2.0,
            z,
            y,
            eta,
            drift,
            residual: 0.0,
            ratios: Vec::new(),
            packed,
        })
    }

    /// `Z = Y = 0`: plain Brownian motion killed at the box.
    pub fn zero(grid: &LatticeBox) -> Self {
        let z = GridField::zeros(grid.clone(), FieldLabel::Resolvent);
        let y = GridField::zeros(grid.clone(), FieldLabel::Correction);
        let drift = (0..grid.dim()).map(|a| GridField::zeros(grid.clone(), FieldLabel::Drift(a))).collect();
        Self::from_parts(z, y, 1.0, drift).expect("fields share the grid")
    }

    /// Package for a given `Z` on its grid; `Y` from the resolvent equation.
    pub fn from_z(z: GridField, eta0: f64, opts: &ResolventOptions) -> Result<Self> {
        let grid = z.grid().clone();
        let zs = CosineSeries::analyze(&grid, z.values(), grid.per_axis())?;
        let gz = zs.gradient(&grid)?;
        Self::assemble(z, &gz, eta0, opts)
    }

    /// Package for the renormalized potential `ξ_ε − c_ε` of `nf`, on the
    /// noise box refined by `refine`: `Z = (1 − ½Δ)^{-1}(ξ_ε − c_ε)`.
    pub fn from_noise(nf: &NoiseField, refine: usize, eta0: f64, opts: &ResolventOptions) -> Result<Self> {
        let grid = nf.grid().refined(refine)?;
        let zs = nf.z_series(1.0)?;
        let shift = renorm_constant(nf.epsilon(), nf.dim());
        let zv: Vec<f64> = zs.synthesize(&grid)?.into_iter().map(|v| v - shift).collect();
        let gz = zs.gradient(&grid)?;
        Self::assemble(GridField::new(grid, zv, FieldLabel::Resolvent)?, &gz, eta0, opts)
    }

    fn assemble(z: GridField, gz: &[Vec<f64>], eta0: f64, opts: &ResolventOptions) -> Result<Self> {
        let grid = z.grid().clone();
        let sol = solve_resolvent_grad(&grid, gz, eta0, opts)?;
        let gy = CosineSeries::analyze(&grid, sol.y.values(), grid.per_axis())?.gradient(&grid)?;
        let drift = (0..grid.dim())
            .map(|a| {
                let v = gz[a].iter().zip(&gy[a]).map(|(p, q)| p + q).collect();
                GridField::new(grid.clone(), v, FieldLabel::Drift(a))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut dp = Self::from_parts(z, sol.y, sol.eta, drift)?;
        dp.residual = sol.residual;
        dp.ratios = sol.ratios;
        Ok(dp)
    }

    pub fn grid(&self) -> &LatticeBox {
        self.z.grid()
    }

    pub fn dim(&self) -> usize {
        self.grid().dim()
    }

    /// `‖Z + Y‖_∞`.
    pub fn u_sup(&self) -> f64 {
        let stride = 2 + self.dim();
        self.packed.iter().skip(1).step_by(stride).fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `‖∇(Z+Y)‖_∞` (Euclidean norm per point).
    pub fn drift_sup(&self) -> f64 {
        (0..self.grid().len())
            .map(|i| self.drift.iter().map(|g| g.values()[i].powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Largest step with `dt ‖∇(Z+Y)‖_∞ ≤ h`.
    pub fn dt_max(&self) -> f64 {
        let s = self.drift_sup();
        if s == 0.0 {
            f64::INFINITY
        } else {
            self.grid().spacing() / s
        }
    }

    /// Multilinear interpolation of all channels, constant beyond the outer cell centers.
    pub fn sample(&self, x: &[f64]) -> DriftSample {
        let grid = self.grid();
        let d = grid.dim();
        let m = grid.per_axis();
        let h = grid.spacing();
        let stride = 2 + d;
        let mut base = 0usize;
        let mut frac = [0.0f64; 3];
        let mut mul = 1usize;
        let mut steps = [0usize; 3];
        for a in 0..d {
            let s = ((x[a] - grid.lower(a)) / h - 0.5).clamp(0.0, (m - 1) as f64);
            let i = (s.floor() as usize).min(m.saturating_sub(2));
            frac[a] = s - i as f64;
            base += i * mul;
            steps[a] = if m > 1 { mul } else { 0 };
            mul *= m;
        }
        let mut acc = [0.0f64; 5];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = base;
            for a in 0..d {
                if corner >> a & 1 == 1 {
                    w *= frac[a];
                    idx += steps[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            let p = &self.packed[idx * stride..idx * stride + stride];
            for (c, v) in acc.iter_mut().zip(p) {
                *c += w * v;
            }
        }
        let mut drift = [0.0; 3];
        drift[..d].copy_from_slice(&acc[2..2 + d]);
        DriftSample {
            potential: acc[0],
            w: acc[1],
            drift,
        }
    }

    /// Sup-norm residual of the resolvent equation, recomputed from `Z`, `Y`.
    pub fn resolvent_residual(&self) -> Result<f64> {
        let grid = self.grid();
        let m = grid.per_axis();
        let side = grid.side();
        let zs = CosineSeries::analyze(grid, self.z.values(), m)?;
        let ys = CosineSeries::analyze(grid, self.y.values(), m)?;
        let gz = zs.gradient(grid)?;
        let gy = ys.gradient(grid)?;
        let eta = self.eta;
        let ly = ys.map_modes(|k| eta + 0.5 * mode_wavenumber_sq(k, side)).synthesize(grid)?;
        Ok((0..grid.len())
            .map(|i| {
                let rhs: f64 = (0..grid.dim())
                    .map(|a| 0.5 * gz[a][i].powi(2) + gy[a][i] * gz[a][i] + 0.5 * gy[a][i].powi(2))
                    .sum();
                (ly[i] - rhs).abs()
            })
            .fold(0.0, f64::max))
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "eta": self.eta,
            "residual": self.residual,
            "u_sup": self.u_sup(),
            "drift_sup": self.drift_sup(),
            "grid_points": self.grid().len(),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathConfig {
    pub t: f64,
    pub dt: f64,
    pub n: usize,
    pub seed: u64,
    /// Freeze paths at the first exit from the killing box.
    pub kill: bool,
    /// Brownian-bridge correction of the exit test between steps.
    pub bridge: bool,
}

impl PathConfig {
    pub fn new(t: f64, dt: f64, n: usize, seed: u64) -> Self {
        Self {
            t,
            dt,
            n,
            seed,
            kill: true,
            bridge: true,
        }
    }
}

/// Per-path outcome of the drifted diffusion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub d: usize,
    pub n_paths: usize,
    pub dt: f64,
    pub steps: usize,
    pub t: f64,
    pub x0: Vec<f64>,
    pub seed: u64,
    /// `(Z+Y)(x₀)`.
    pub w_start: f64,
    /// Flattened final positions, `d` per path.
    pub final_pos: Vec<f64>,
    pub exited: Vec<bool>,
    /// Bridge survival weight in `[0, 1]`; 1 without the bridge correction.
    pub survival: Vec<f64>,
    /// `∫_0^t (Z + ηY)(X_s) ds`, trapezoidal.
    pub integral: Vec<f64>,
    pub w_end: Vec<f64>,
    /// `sup_s |X_s − x₀|` (Euclidean) and `sup_s |X_s − x₀|_∞`.
    pub max_disp: Vec<f64>,
    pub max_disp_sup: Vec<f64>,
}

struct PathRecord {
    pos: [f64; 3],
    exited: bool,
    survival: f64,
    integral: f64,
    w_end: f64,
    max_disp: f64,
    max_disp_sup: f64,
}

const CHUNK: usize = 256;

pub fn simulate_paths(dp: &DriftPackage, x0: &[f64], t: f64, dt: f64, n: usize, seed: u64) -> Result<PathEnsemble> {
    simulate_paths_with(dp, x0, &PathConfig::new(t, dt, n, seed))
}

/// Euler–Maruyama for `dX = ∇(Z+Y)(X)dt + dB`; path `i` draws from stream `i`
/// of `seed`, so results do not depend on scheduling.
pub fn simulate_paths_with(dp: &DriftPackage, x0: &[f64], cfg: &PathConfig) -> Result<PathEnsemble> {
    let d = dp.dim();
    if x0.len() != d {
        return Err(param("x0", "dimension mismatch"));
    }
    let c = dp.grid().center();
    let hw = dp.kill_half_width;
    if x0.iter().zip(c).any(|(x, m)| (x - m).abs() >= hw) {
        return Err(PamError::OutsideBox { point: x0.to_vec() });
    }
    if !(cfg.t >= 0.0) || !(cfg.dt > 0.0) || cfg.n == 0 {
        return Err(param("paths", "need t ≥ 0, dt > 0 and n ≥ 1"));
    }
    let bound = dp.dt_max();
    if cfg.dt > bound {
        return Err(PamError::TimeStep { dt: cfg.dt, bound });
    }
    let steps = (cfg.t / cfg.dt).ceil().max(if cfg.t > 0.0 { 1.0 } else { 0.0 }) as usize;
    let dt = if steps > 0 { cfg.t / steps as f64 } else { cfg.dt };
    let start = dp.sample(x0);
    let chunks: Vec<usize> = (0..cfg.n.div_ceil(CHUNK)).collect();
    let records: Vec<Vec<PathRecord>> = par_map(chunks, |ci| {
        let lo = ci * CHUNK;
        let hi = (lo + CHUNK).min(cfg.n);
        (lo..hi).map(|i| run_path(dp, x0, start, steps, dt, cfg, i as u64)).collect()
    });
    let mut ens = PathEnsemble {
        d,
        n_paths: cfg.n,
        dt,
        steps,
        t: cfg.t,
        x0: x0.to_vec(),
        seed: cfg.seed,
        w_start: start.w,
        final_pos: Vec::with_capacity(cfg.n * d),
        exited: Vec::with_capacity(cfg.n),
        survival: Vec::with_capacity(cfg.n),
        integral: Vec::with_capacity(cfg.n),
        w_end: Vec::with_capacity(cfg.n),
        max_disp: Vec::with_capacity(cfg.n),
        max_disp_sup: Vec::with_capacity(cfg.n),
    };
    for r in records.into_iter().flatten() {
        ens.final_pos.extend_from_slice(&r.pos[..d]);
        ens.exited.push(r.exited);
        ens.survival.push(r.survival);
        ens.integral.push(r.integral);
        ens.w_end.push(r.w_end);
        ens.max_disp.push(r.max_disp);
        ens.max_disp_sup.push(r.max_disp_sup);
    }
    Ok(ens)
}

fn run_path(
    dp: &DriftPackage,
    x0: &[f64],
    start: DriftSample,
    steps: usize,
    dt: f64,
    cfg: &PathConfig,
    index: u64,
) -> PathRecord {
    let d = x0.len();
    let mut rng = stream_rng(cfg.seed, index);
    let center = dp.grid().center();
    let hw = dp.kill_half_width;
    let sq = dt.sqrt();
    let mut x = [0.0f64; 3];
    x[..d].copy_from_slice(x0);
    let mut cur = start;
    let mut integral = 0.0;
    let mut survival = 1.0;
    let mut exited = false;
    let (mut md, mut mds) = (0.0f64, 0.0f64);
    for _ in 0..steps {
        let mut next = [0.0f64; 3];
        for a in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            next[a] = x[a] + cur.drift[a] * dt + sq * z;
        }
        let out = (0..d).any(|a| (next[a] - center[a]).abs() >= hw);
        if cfg.kill && out {
            exited = true;
            x = next;
            break;
        }
        if cfg.kill && cfg.bridge {
            for a in 0..d {
                for face in [center[a] - hw, center[a] + hw] {
                    let p = (-2.0 * (x[a] - face) * (next[a] - face) / dt).exp();
                    survival *= 1.0 - p.min(1.0);
                }
            }
        }
        let s = dp.sample(&next[..d]);
        integral += 0.5 * dt * (cur.potential + s.potential);
        x = next;
        cur = s;
        let mut e2 = 0.0;
        let mut es = 0.0f64;
        for a in 0..d {
            let v = x[a] - x0[a];
            e2 += v * v;
            es = es.max(v.abs());
        }
        md = md.max(e2.sqrt());
        mds = mds.max(es);
    }
    if exited {
        survival = 0.0;
        let mut e2 = 0.0;
        let mut es = 0.0f64;
        for a in 0..d {
            let v = x[a] - x0[a];
            e2 += v * v;
            es = es.max(v.abs());
        }
        md = md.max(e2.sqrt());
        mds = mds.max(es);
    }
    PathRecord {
        pos: x,
        exited,
        survival,
        integral,
        w_end: cur.w,
        max_disp: md,
        max_disp_sup: mds,
    }
}

impl PathEnsemble {
    pub fn position(&self, i: usize) -> &[f64] {
        &self.final_pos[i * self.d..(i + 1) * self.d]
    }

    pub fn exit_fraction(&self) -> f64 {
        self.exited.iter().filter(|e| **e).count() as f64 / self.n_paths as f64
    }

    /// Compact trace: per path `x…, exited, survival, integral, w_end`.
    pub fn write_trace<W: Write>(&self, grid: &LatticeBox, w: W) -> Result<()> {
        let mut payload = Vec::with_capacity(self.n_paths * (self.d + 4));
        for i in 0..self.n_paths {
            payload.extend_from_slice(self.position(i));
            payload.push(if self.exited[i] { 1.0 } else { 0.0 });
            payload.push(self.survival[i]);
            payload.push(self.integral[i]);
            payload.push(self.w_end[i]);
        }
        let header = ContainerHeader {
            kind: ContainerKind::PathTrace,
            grid: grid.clone(),
            epsilon: f64::NAN,
            seed: self.seed,
            k_max: self.n_paths as u64,
            time: self.t,
        };
        write_container(w, &header, &payload)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FkEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub exit_fraction: f64,
    /// Every path left the box.
    pub degenerate: bool,
    pub n: usize,
    pub eta: f64,
    pub residual: f64,
}

/// Monte Carlo mean of `𝒟(0,t) φ(X_t) 𝟙{no exit}` with
/// `𝒟 = exp(∫(Z+ηY)(X_s)ds + (Z+Y)(x) − (Z+Y)(X_t))`.
pub fn fk_estimate(dp: &DriftPackage, phi: &InitialData, x: &[f64], paths: &PathEnsemble) -> Result<FkEstimate> {
    if paths.x0.iter().zip(x).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(param("paths", "ensemble was started at another point"));
    }
    let weights: Vec<f64> = (0..paths.n_paths)
        .map(|i| {
            if paths.exited[i] {
                return Ok(0.0);
            }
            let pos = paths.position(i);
            let f = match phi {
                InitialData::Flat => 1.0,
                InitialData::Custom(g) => g.interpolate(pos),
                InitialData::Delta(_) => {
                    return Err(param("phi", "point masses have no pathwise value"));
                }
            };
            Ok(paths.survival[i] * (paths.integral[i] + paths.w_start - paths.w_end[i]).exp() * f)
        })
        .collect::<Result<_>>()?;
    let ms = mean_stderr(&weights);
    let exit_fraction = paths.exit_fraction();
    Ok(FkEstimate {
        mean: ms.mean,
        stderr: ms.stderr,
        exit_fraction,
        degenerate: exit_fraction == 1.0,
        n: paths.n_paths,
        eta: dp.eta,
        residual: dp.residual,
    })
}

/// Square bins of `X_t − x₀` on `[−half_width, half_width]^d`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub half_width: f64,
    pub bins_per_axis: usize,
    /// Bins below this count are flagged and left out of the bound reports.
    pub min_hits: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelHistogram {
    pub d: usize,
    pub t: f64,
    pub x0: Vec<f64>,
    pub spec: HistogramSpec,
    pub n: usize,
    pub counts: Vec<u64>,
    /// `‖Z + Y‖_∞` of the generating package.
    pub u_sup: f64,
}

/// Empirical density of `X_t` under the drift alone (no weight, no killing).
pub fn kernel_histogram(
    dp: &DriftPackage,
    x0: &[f64],
    t: f64,
    dt: f64,
    n: usize,
    seed: u64,
    spec: HistogramSpec,
) -> Result<KernelHistogram> {
    if spec.bins_per_axis == 0 || !(spec.half_width > 0.0) {
        return Err(param("bins", "need at least one bin and a positive width"));
    }
    let cfg = PathConfig {
        t,
        dt,
        n,
        seed,
        kill: false,
        bridge: false,
    };
    let ens = simulate_paths_with(dp, x0, &cfg)?;
    let d = dp.dim();
    let b = spec.bins_per_axis;
    let w = 2.0 * spec.half_width / b as f64;
    let mut counts = vec![0u64; b.pow(d as u32)];
    for i in 0..n {
        let p = ens.position(i);
        let mut idx = 0usize;
        let mut mul = 1usize;
        let mut inside = true;
        for a in 0..d {
            let s = (p[a] - x0[a] + spec.half_width) / w;
            if !(s >= 0.0 && s < b as f64) {
                inside = false;
                break;
            }
            idx += (s as usize) * mul;
            mul *= b;
        }
        if inside {
            counts[idx] += 1;
        }
    }
    Ok(KernelHistogram {
        d,
        t,
        x0: x0.to_vec(),
        spec,
        n,
        counts,
        u_sup: dp.u_sup(),
    })
}

/// One bin of a [`KernelHistogram`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelBin {
    /// Offset of the bin center from `x₀`.
    pub offset: Vec<f64>,
    pub count: u64,
    pub density: f64,
    pub filled: bool,
    /// `log Γ̂ + |y−x₀|²/(4t) + (d/2) log t`.
    pub upper_slack: f64,
    /// `−log Γ̂ − (d/2) log t`.
    pub lower_deficit: f64,
}

/// Constants fitted to the two kernel bound shapes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelFit {
    pub u_sup: f64,
    pub max_upper_slack: f64,
    /// Smallest `C₂, C₃ ≥ 0` (with `C₂` from bins within `|y−x₀|² ≤ t`).
    pub c2: f64,
    pub c3: f64,
    pub filled_bins: usize,
    pub underfilled_bins: usize,
}

impl KernelHistogram {
    fn bin_width(&self) -> f64 {
        2.0 * self.spec.half_width / self.spec.bins_per_axis as f64
    }

    pub fn bins(&self) -> Vec<KernelBin> {
        let d = self.d;
        let b = self.spec.bins_per_axis;
        let w = self.bin_width();
        let vol = w.powi(d as i32);
        let half_log_t = 0.5 * d as f64 * self.t.ln();
        (0..self.counts.len())
            .map(|f| {
                let mut rest = f;
                let offset: Vec<f64> = (0..d)
                    .map(|_| {
                        let j = rest % b;
                        rest /= b;
                        -self.spec.half_width + (j as f64 + 0.5) * w
                    })
                    .collect();
                let count = self.counts[f];
                let density = count as f64 / (self.n as f64 * vol);
                let r2: f64 = offset.iter().map(|v| v * v).sum();
                KernelBin {
                    offset,
                    count,
                    density,
                    filled: count >= self.spec.min_hits,
                    upper_slack: density.ln() + r2 / (4.0 * self.t) + half_log_t,
                    lower_deficit: -density.ln() - half_log_t,
                }
            })
            .collect()
    }

    /// Largest `|log(Γ̂ / Γ)|` over filled bins against the Gaussian kernel
    /// integrated over each bin.
    pub fn gaussian_log_ratio(&self) -> Option<f64> {
        let w = self.bin_width();
        let s = self.t.sqrt();
        self.bins()
            .into_iter()
            .filter(|b| b.filled)
            .map(|b| {
                let p: f64 = b
                    .offset
                    .iter()
                    .map(|&c| normal_cdf((c + w / 2.0) / s) - normal_cdf((c - w / 2.0) / s))
                    .product();
                (b.count as f64 / self.n as f64 / p).ln().abs()
            })
            .reduce(f64::max)
    }

    pub fn fit(&self) -> KernelFit {
        let bins = self.bins();
        let filled: Vec<&KernelBin> = bins.iter().filter(|b| b.filled).collect();
        let u = self.u_sup.max(1e-300);
        let max_upper_slack = filled.iter().map(|b| b.upper_slack).fold(f64::NEG_INFINITY, f64::max);
        let r2 = |b: &KernelBin| b.offset.iter().map(|v| v * v).sum::<f64>() / self.t;
        let c2 = filled
            .iter()
            .filter(|b| r2(b) <= 1.0)
            .map(|b| b.lower_deficit / u)
            .fold(0.0, f64::max);
        let c3 = filled
            .iter()
            .filter(|b| r2(b) > 0.0)
            .map(|b| (b.lower_deficit / u - c2) / r2(b))
            .fold(0.0, f64::max);
        KernelFit {
            u_sup: self.u_sup,
            max_upper_slack,
            c2,
            c3,
            filled_bins: filled.len(),
            underfilled_bins: bins.len() - filled.len(),
        }
    }

    /// Standardized excess of `Σ|h(y) − h(−y)|` over its value under mirror symmetry.
    pub fn mirror_z(&self) -> f64 {
        let d = self.d;
        let b = self.spec.bins_per_axis;
        let (mut obs, mut mean, mut var) = (0.0, 0.0, 0.0);
        for f in 0..self.counts.len() {
            let mut rest = f;
            let mut g = 0usize;
            let mut mul = 1usize;
            for _ in 0..d {
                let j = rest % b;
                rest /= b;
                g += (b - 1 - j) * mul;
                mul *= b;
            }
            if g <= f {
                continue;
            }
            let (p, q) = (self.counts[f] as f64, self.counts[g] as f64);
            let s = p + q;
            if s == 0.0 {
                continue;
            }
            obs += (p - q).abs();
            // |N(0, s)|: mean √(2s/π), variance s(1 − 2/π).
            mean += (2.0 * s / std::f64::consts::PI).sqrt();
            var += s * (1.0 - 2.0 / std::f64::consts::PI);
        }
        if var == 0.0 {
            0.0
        } else {
            (obs - mean) / var.sqrt()
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.d;
        let head: Vec<String> = (0..d).map(|a| format!("y{a}")).collect();
        writeln!(w, "{},count,density,filled,upper_slack,lower_deficit", head.join(","))?;
        for b in self.bins() {
            let ys: Vec<String> = b.offset.iter().zip(&self.x0).map(|(o, x)| format!("{}", x + o)).collect();
            writeln!(
                w,
                "{},{},{:e},{},{},{}",
                ys.join(","),
                b.count,
                b.density,
                b.filled,
                b.upper_slack,
                b.lower_deficit
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EscapeReport {
    pub ks: Vec<f64>,
    pub t: f64,
    pub n: usize,
    pub p_hat: Vec<f64>,
    pub wilson: Vec<(f64, f64)>,
    /// Slope of `log P̂` against `K²` over `K > 0` with `P̂ > 0`.
    pub slope_k2: Option<f64>,
}

/// `P̂(sup_{s≤T} |X_s − x₀| ≥ K)` for each `K`, from one unkilled ensemble.
pub fn escape_probability(
    dp: &DriftPackage,
    x0: &[f64],
    ks: &[f64],
    t: f64,
    dt: f64,
    n: usize,
    seed: u64,
) -> Result<EscapeReport> {
    let cfg = PathConfig {
        t,
        dt,
        n,
        seed,
        kill: false,
        bridge: false,
    };
    let ens = simulate_paths_with(dp, x0, &cfg)?;
    Ok(escape_from_ensemble(&ens.max_disp, ks, t))
}

pub fn escape_from_ensemble(max_disp: &[f64], ks: &[f64], t: f64) -> EscapeReport {
    let n = max_disp.len();
    let hits: Vec<usize> = ks.iter().map(|&k| max_disp.iter().filter(|&&m| m >= k).count()).collect();
    let p_hat: Vec<f64> = hits.iter().map(|&h| h as f64 / n as f64).collect();
    let wilson = hits.iter().map(|&h| wilson_interval(h, n, 1.96)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = ks
        .iter()
        .zip(&p_hat)
        .filter(|(k, p)| **k > 0.0 && **p > 0.0)
        .map(|(k, p)| (k * k, p.ln()))
        .unzip();
    EscapeReport {
        ks: ks.to_vec(),
        t,
        n,
        p_hat,
        wilson,
        slope_k2: linear_fit(&xs, &ys).map(|f| f.slope),
    }
}

/// Brownian bound `2d · P(|N(0,T)| ≥ K/√d)` on `P(sup_{s≤T}|B_s| ≥ K)`.
pub fn reflection_bound(k: f64, t: f64, d: usize) -> f64 {
    let z = k / (d as f64).sqrt() / t.sqrt();
    (2.0 * d as f64 * 2.0 * (1.0 - normal_cdf(z))).min(1.0)
}

//! Leading eigenpairs of the Anderson Hamiltonian and the eigenvalue-law studies.

use std::io::Write;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{param, PamError, Result};
use crate::field::{FieldLabel, GridField};
use crate::hamiltonian::{assemble, HamiltonianOperator};
use crate::io::{write_container, ContainerHeader, ContainerKind};
use crate::lanczos::{top_eigenpairs_op, LanczosOptions};
use crate::lattice::{make_box, LatticeBox};
use crate::noise::{sample_noise, NoiseField};
use crate::parallel::par_map;
use crate::seed::{label_hash, seed_derive};
use crate::stats::{linear_fit, mean_stderr, pearson, LinearFit};

/// Descending eigenvalues with `h^d`-orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub grid: LatticeBox,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<GridField>,
    pub residuals: Vec<f64>,
}

/// Default absolute residual tolerance; never looser than `1e-8·max(1, |λ₁|)`.
pub const DEFAULT_TOL: f64 = 1e-8;

fn finish(grid: &LatticeBox, values: Vec<f64>, vectors: Vec<Vec<f64>>, residuals: Vec<f64>) -> Spectrum {
    let scale = grid.cell_volume().powf(-0.5);
    let eigenvectors = vectors
        .into_iter()
        .enumerate()
        .map(|(i, mut v)| {
            let sign = if v.iter().sum::<f64>() < 0.0 { -scale } else { scale };
            v.iter_mut().for_each(|x| *x *= sign);
            GridField::new(grid.clone(), v, FieldLabel::Eigenvector(i + 1)).expect("grid length")
        })
        .collect();
    Spectrum {
        grid: grid.clone(),
        eigenvalues: values,
        eigenvectors,
        residuals,
    }
}

/// `K` largest eigenpairs by thick-restart Lanczos with a seeded start vector.
pub fn top_eigenpairs(h: &HamiltonianOperator, k: usize, tol: Option<f64>) -> Result<Spectrum> {
    let n = h.len();
    if k == 0 || k > n {
        return Err(param("K", format!("{k} not in 1..={n}")));
    }
    let opts = LanczosOptions::for_k(k, tol.unwrap_or(DEFAULT_TOL));
    let r = top_eigenpairs_op(n, k, &opts, |v, out| h.apply(v, out))?;
    Ok(finish(h.grid(), r.values, r.vectors, r.residuals))
}

/// Dense eigendecomposition oracle.
pub fn dense_eigenpairs(h: &HamiltonianOperator, k: usize) -> Result<Spectrum> {
    let n = h.len();
    if k == 0 || k > n {
        return Err(param("K", format!("{k} not in 1..={n}")));
    }
    let a = h.to_dense();
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let values: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    let residuals = vectors
        .iter()
        .zip(&values)
        .map(|(v, &l)| {
            let hv = h.apply_vec(v);
            hv.iter().zip(v).map(|(a, b)| (a - l * b).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    Ok(finish(h.grid(), values, vectors, residuals))
}

impl Spectrum {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// `max |⟨v_i, v_j⟩_h - δ_ij|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.eigenvectors.iter().enumerate() {
            for (j, b) in self.eigenvectors.iter().enumerate().skip(i) {
                let ip = a.dot(b).expect("same grid");
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - want).abs());
            }
        }
        worst
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "box": {
                "center": self.grid.center(),
                "side": self.grid.side(),
                "spacing": self.grid.spacing(),
                "d": self.grid.dim(),
            },
            "K": self.k(),
            "eigenvalues": self.eigenvalues,
            "residuals": self.residuals,
        })
    }

    /// Eigenvector `i` (0-based) as a binary grid container; `time` holds λ.
    pub fn write_eigenvector<W: Write>(&self, i: usize, w: W, epsilon: f64, seed: u64) -> Result<()> {
        let v = self
            .eigenvectors
            .get(i)
            .ok_or_else(|| param("index", format!("{i} ≥ K")))?;
        let header = ContainerHeader {
            kind: ContainerKind::GridValues,
            grid: self.grid.clone(),
            epsilon,
            seed,
            k_max: i as u64,
            time: self.eigenvalues[i],
        };
        write_container(w, &header, v.values())
    }
}

/// Top eigenvalue of the Hamiltonian built from `nf`.
pub fn principal_eigenvalue(h: &HamiltonianOperator) -> Result<f64> {
    Ok(top_eigenpairs(h, 1, None)?.lambda1())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MonotonicityOutcome {
    pub lambda_sub: f64,
    pub lambda_big: f64,
    pub holds: bool,
}

/// Compare λ₁ on an aligned sub-box (restricted potential) with λ₁ on the full box.
pub fn monotonicity_check(nf_big: &NoiseField, sub: &LatticeBox) -> Result<MonotonicityOutcome> {
    monotonicity_check_op(&assemble(nf_big), sub)
}

pub fn monotonicity_check_op(h_big: &HamiltonianOperator, sub: &LatticeBox) -> Result<MonotonicityOutcome> {
    let h_sub = h_big.restrict(sub)?;
    let lambda_sub = principal_eigenvalue(&h_sub)?;
    let lambda_big = principal_eigenvalue(h_big)?;
    Ok(MonotonicityOutcome {
        lambda_sub,
        lambda_big,
        holds: lambda_sub <= lambda_big + 1e-8,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub side: f64,
    pub separation: f64,
    pub correlation: f64,
    pub n_pairs: usize,
    /// Fewer than 30 pairs.
    pub few_pairs: bool,
    /// Center distance at least three box sides.
    pub separated: bool,
    pub lambda_first: Vec<f64>,
    pub lambda_second: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyGrid {
    pub h: f64,
    pub epsilon: f64,
    pub d: usize,
}

/// Correlation of λ₁ over two boxes of side `side` centred at `±separation/2` on
/// axis 0, both carved from one master realization per replicate.
pub fn independence_study(
    side: f64,
    separation: f64,
    n_pairs: usize,
    grid: &StudyGrid,
    base_seed: u64,
) -> Result<IndependenceReport> {
    if n_pairs < 2 {
        return Err(param("n_pairs", "need at least 2 replicates"));
    }
    let d = grid.d;
    let master = make_box(&vec![0.0; d], separation + side, grid.h, d)?;
    let mut c1 = vec![0.0; d];
    let mut c2 = vec![0.0; d];
    c1[0] = -separation / 2.0;
    c2[0] = separation / 2.0;
    let b1 = master.sub_box(&c1, side)?;
    let b2 = master.sub_box(&c2, side)?;
    let label = label_hash("independence");
    let pairs = par_map((0..n_pairs as u64).collect(), |r| -> Result<(f64, f64)> {
        let nf = sample_noise(&master, grid.epsilon, seed_derive(base_seed, &[label, r]))?;
        let h = assemble(&nf);
        let l1 = principal_eigenvalue(&h.restrict(&b1)?)?;
        let l2 = principal_eigenvalue(&h.restrict(&b2)?)?;
        Ok((l1, l2))
    });
    let pairs: Vec<(f64, f64)> = pairs.into_iter().collect::<Result<_>>()?;
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(IndependenceReport {
        side,
        separation,
        correlation: pearson(&a, &b),
        n_pairs,
        few_pairs: n_pairs < 30,
        separated: separation >= 3.0 * side,
        lambda_first: a,
        lambda_second: b,
    })
}

/// λ₁ for `n` independent noise realizations on the centred box of side `side`.
pub fn lambda1_samples(side: f64, grid: &StudyGrid, n: usize, base_seed: u64, label: &str) -> Result<Vec<f64>> {
    let b = make_box(&vec![0.0; grid.d], side, grid.h, grid.d)?;
    let tag = label_hash(label);
    let out = par_map((0..n as u64).collect(), |r| -> Result<f64> {
        let nf = sample_noise(&b, grid.epsilon, seed_derive(base_seed, &[tag, r]))?;
        principal_eigenvalue(&assemble(&nf))
    });
    out.into_iter().collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailReport {
    pub side: f64,
    pub grid: StudyGrid,
    pub n_samples: usize,
    pub base_seed: u64,
    pub s_grid: Vec<f64>,
    pub survival: Vec<f64>,
    pub counts: Vec<usize>,
    /// Slope of `log P̂` against `s^{2-d/2}` over the window `10 ≤ count ≤ n/10`.
    pub slope: Option<f64>,
    pub fit: Option<LinearFit>,
    pub window: Option<(f64, f64)>,
    pub samples: Vec<f64>,
}

/// Empirical survival function of λ₁ and its tail slope.
pub fn eigenvalue_tail_mc(
    side: f64,
    grid: &StudyGrid,
    s_grid: Option<Vec<f64>>,
    n_samples: usize,
    base_seed: u64,
) -> Result<TailReport> {
    if n_samples < 100 {
        return Err(param("n_samples", "need at least 100 samples"));
    }
    let samples = lambda1_samples(side, grid, n_samples, base_seed, "tails")?;
    Ok(tail_from_samples(side, grid, samples, s_grid, base_seed))
}

/// Tail table and windowed fit for precomputed λ₁ samples.
pub fn tail_from_samples(
    side: f64,
    grid: &StudyGrid,
    samples: Vec<f64>,
    s_grid: Option<Vec<f64>>,
    base_seed: u64,
) -> TailReport {
    let n = samples.len();
    let s_grid = s_grid.unwrap_or_else(|| {
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..=60).map(|i| lo + (hi - lo) * i as f64 / 60.0).collect()
    });
    let counts: Vec<usize> = s_grid
        .iter()
        .map(|&s| samples.iter().filter(|&&l| l >= s).count())
        .collect();
    let survival: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let expo = 2.0 - grid.d as f64 / 2.0;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, &c) in counts.iter().enumerate() {
        if c >= 10 && c * 10 <= n && s_grid[i] > 0.0 {
            xs.push(s_grid[i].powf(expo));
            ys.push(survival[i].ln());
        }
    }
    let fit = linear_fit(&xs, &ys);
    let window = (!xs.is_empty()).then(|| {
        (
            xs.iter().copied().fold(f64::INFINITY, f64::min),
            xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    });
    TailReport {
        side,
        grid: grid.clone(),
        n_samples: n,
        base_seed,
        s_grid,
        survival,
        counts,
        slope: fit.map(|f| f.slope),
        fit,
        window,
        samples,
    }
}

impl TailReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# L={},h={},eps={},d={},n={},seed_base={}",
            self.side, self.grid.h, self.grid.epsilon, self.grid.d, self.n_samples, self.base_seed
        )?;
        writeln!(w, "s,survival,count")?;
        for i in 0..self.s_grid.len() {
            writeln!(w, "{},{},{}", self.s_grid[i], self.survival[i], self.counts[i])?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthRow {
    pub side: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthReport {
    pub grid: StudyGrid,
    pub base_seed: u64,
    pub rows: Vec<GrowthRow>,
    /// Fit of mean λ₁ against `(log L)^{2/(2-d/2)}`.
    pub fit: Option<LinearFit>,
    /// Fit against `(log L)^{2/(4-d)}`, reported for comparison.
    pub fit_alt: Option<LinearFit>,
}

/// Ensemble mean of λ₁ per box side and its regression on the `log L` rate.
pub fn growth_study(sides: &[f64], grid: &StudyGrid, n_samples: usize, base_seed: u64) -> Result<GrowthReport> {
    if sides.len() < 4 || sides.windows(2).any(|w| w[1] <= w[0]) {
        return Err(param("L_grid", "need at least 4 increasing sides"));
    }
    let mut rows = Vec::new();
    for &side in sides {
        let samples = lambda1_samples(side, grid, n_samples, base_seed, &format!("growth-{side}"))?;
        let ms = mean_stderr(&samples);
        rows.push(GrowthRow {
            side,
            mean: ms.mean,
            stderr: ms.stderr,
            n: ms.n,
        });
    }
    Ok(growth_from_rows(rows, grid, base_seed))
}

pub fn growth_from_rows(rows: Vec<GrowthRow>, grid: &StudyGrid, base_seed: u64) -> GrowthReport {
    let d = grid.d as f64;
    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let x = |p: f64| -> Vec<f64> { rows.iter().map(|r| r.side.ln().powf(p)).collect() };
    let fit = linear_fit(&x(2.0 / (2.0 - d / 2.0)), &means);
    let fit_alt = linear_fit(&x(2.0 / (4.0 - d)), &means);
    GrowthReport {
        grid: grid.clone(),
        base_seed,
        rows,
        fit,
        fit_alt,
    }
}

impl GrowthReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# h={},eps={},d={},seed_base={}",
            self.grid.h, self.grid.epsilon, self.grid.d, self.base_seed
        )?;
        writeln!(w, "L,mean_lambda1,stderr,n")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.side, r.mean, r.stderr, r.n)?;
        }
        Ok(())
    }
}

/// Guard used by callers that need a positive principal eigenvalue.
pub fn require_positive(lambda: f64) -> Result<f64> {
    if lambda > 0.0 {
        Ok(lambda)
    } else {
        Err(PamError::param("lambda1", format!("{lambda} is not positive")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::discrete_dirichlet_ground;

    #[test]
    fn zero_potential_top_eigenvalue() {
        let b = make_box(&[0.0, 0.0], 4.0, 0.25, 2).unwrap();
        let h = HamiltonianOperator::new(GridField::zeros(b.clone(), FieldLabel::Potential));
        let s = top_eigenpairs(&h, 3, Some(1e-11)).unwrap();
        assert!((s.lambda1() - discrete_dirichlet_ground(&b)).abs() < 1e-10);
        assert!(s.eigenvectors[0].values().iter().all(|&v| v > 0.0));
        assert!(s.orthonormality_defect() < 1e-8);
    }

    #[test]
    fn iterative_matches_dense_on_small_grid() {
        let b = make_box(&[0.0, 0.0], 2.0, 0.5, 2).unwrap();
        let h = assemble(&sample_noise(&b, 0.5, 9).unwrap());
        let it = top_eigenpairs(&h, 5, None).unwrap();
        let de = dense_eigenpairs(&h, 5).unwrap();
        for (a, b) in it.eigenvalues.iter().zip(&de.eigenvalues) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn shift_covariance() {
        let b = make_box(&[0.0, 0.0], 4.0, 0.5, 2).unwrap();
        let h = assemble(&sample_noise(&b, 0.5, 2).unwrap());
        let s0 = top_eigenpairs(&h, 3, None).unwrap();
        let s1 = top_eigenpairs(&h.shifted(2.5), 3, None).unwrap();
        for i in 0..3 {
            assert!((s1.eigenvalues[i] - s0.eigenvalues[i] - 2.5).abs() < 1e-8);
        }
        let overlap = s0.eigenvectors[0].dot(&s1.eigenvectors[0]).unwrap();
        assert!((overlap.abs() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identical_boxes_correlate_perfectly() {
        let g = StudyGrid { h: 0.5, epsilon: 0.5, d: 2 };
        let r = independence_study(2.0, 0.0, 8, &g, 1).unwrap();
        assert!((r.correlation - 1.0).abs() < 1e-9);
        assert!(r.few_pairs && !r.separated);
    }

    #[test]
    fn tail_survival_is_monotone() {
        let g = StudyGrid { h: 0.5, epsilon: 0.5, d: 2 };
        let samples: Vec<f64> = (0..500).map(|i| ((i * 37 % 500) as f64) / 50.0).collect();
        let r = tail_from_samples(4.0, &g, samples, None, 0);
        assert_eq!(r.survival[0], 1.0);
        assert!(r.survival.windows(2).all(|w| w[1] <= w[0]));
    }
}

//! Gagliardo–Nirenberg constant `κ_d`, the derived constant `𝔠_d` and the
//! predicted peak-set dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / libm::tgamma(h)
}

/// `‖f‖_4 / (‖∇f‖^{d/4} ‖f‖^{1−d/4})` from the three radial integrals
/// `∫f², ∫|f'|², ∫f⁴` (each without the sphere factor).
fn quotient_from_integrals(d: usize, f2: f64, g2: f64, f4: f64) -> f64 {
    let w = sphere_area(d);
    let df = d as f64;
    let l4 = (w * f4).powf(0.25);
    let grad = (w * g2).sqrt();
    let l2 = (w * f2).sqrt();
    l4 / (grad.powf(df / 4.0) * l2.powf(1.0 - df / 4.0))
}

/// Quotient of a radial profile given analytically, by composite Simpson on
/// `[0, r_max]` with `n` (even) intervals.
pub fn gn_quotient_fn(d: usize, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, r_max: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = r_max / n as f64;
    let (mut f2, mut g2, mut f4) = (0.0, 0.0, 0.0);
    for i in 0..=n {
        let r = i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let jac = r.powi(d as i32 - 1);
        let v = f(r);
        let g = df(r);
        f2 += w * jac * v * v;
        g2 += w * jac * g * g;
        f4 += w * jac * v.powi(4);
    }
    quotient_from_integrals(d, f2 * h / 3.0, g2 * h / 3.0, f4 * h / 3.0)
}

/// Cell-centered radial profile on `(0, r_max)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialProfile {
    pub d: usize,
    pub dr: f64,
    pub values: Vec<f64>,
}

impl RadialProfile {
    pub fn radius(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dr
    }

    /// Discrete quotient; the gradient lives on faces, with `f = 0` beyond the last cell.
    pub fn quotient(&self) -> f64 {
        let d = self.d as i32;
        let n = self.values.len();
        let (mut f2, mut g2, mut f4) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let jac = self.radius(i).powi(d - 1);
            let v = self.values[i];
            f2 += jac * v * v;
            f4 += jac * v.powi(4);
            let next = if i + 1 < n { self.values[i + 1] } else { -v };
            let face = (i as f64 + 1.0) * self.dr;
            let g = (next - v) / self.dr;
            g2 += face.powi(d - 1) * g * g;
        }
        quotient_from_integrals(self.d, f2 * self.dr, g2 * self.dr, f4 * self.dr)
    }
}

/// Tridiagonal `(−Δ_r + 1)` on the cell-centered radial grid, symmetric form
/// scaled by `r^{d−1}`: returns `(lower, diag, upper, weights)`.
fn radial_operator(d: usize, n: usize, dr: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = d as i32 - 1;
    let w: Vec<f64> = (0..n).map(|i| ((i as f64 + 0.5) * dr).powi(p)).collect();
    let face: Vec<f64> = (0..=n).map(|i| (i as f64 * dr).powi(p) / (dr * dr)).collect();
    let mut lo = vec![0.0; n];
    let mut di = vec![0.0; n];
    let mut up = vec![0.0; n];
    for i in 0..n {
        let left = if i > 0 { face[i] } else { 0.0 };
        // Ghost value −f at the outer face imposes f(r_max) = 0.
        let right = if i + 1 < n { face[i + 1] } else { 2.0 * face[n] };
        di[i] = (left + right) / w[i] + 1.0;
        if i > 0 {
            lo[i] = -face[i] / w[i];
        }
        if i + 1 < n {
            up[i] = -face[i + 1] / w[i];
        }
    }
    (lo, di, up, w)
}

fn thomas(lo: &[f64], di: &[f64], up: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = di.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut m = di[0];
    c[0] = up[0] / m;
    x[0] = rhs[0] / m;
    for i in 1..n {
        m = di[i] - lo[i] * c[i - 1];
        c[i] = up[i] / m;
        x[i] = (rhs[i] - lo[i] * x[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KappaResult {
    pub d: usize,
    pub kappa: f64,
    pub iterations: usize,
    /// Relative change of the stabilizing factor at the last step.
    pub residual: f64,
    pub profile: RadialProfile,
}

/// Radius of the truncated domain used by [`kappa_d`].
pub const KAPPA_RADIUS: f64 = 24.0;

/// Optimal Gagliardo–Nirenberg constant, from the ground state of
/// `−ΔQ + Q = Q³` computed by Petviashvili iteration on `n` radial cells.
pub fn kappa_d(d: usize, n: usize) -> Result<KappaResult> {
    if !(1..=3).contains(&d) {
        return Err(param("d", "must be 1, 2 or 3"));
    }
    if n < 16 {
        return Err(param("n", "need at least 16 radial cells"));
    }
    let dr = KAPPA_RADIUS / n as f64;
    let (lo, di, up, w) = radial_operator(d, n, dr);
    let mut q: Vec<f64> = (0..n).map(|i| 2.0 * (-((i as f64 + 0.5) * dr).powi(2) / 2.0).exp()).collect();
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut s = di[i] * v[i];
                if i > 0 {
                    s += lo[i] * v[i - 1];
                }
                if i + 1 < n {
                    s += up[i] * v[i + 1];
                }
                s
            })
            .collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(&w).map(|((x, y), z)| x * y * z).sum::<f64>();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..2000 {
        iterations = it + 1;
        let cube: Vec<f64> = q.iter().map(|v| v * v * v).collect();
        let m = dot(&apply(&q), &q) / dot(&cube, &q);
        let next = thomas(&lo, &di, &up, &cube);
        let factor = m.powf(1.5);
        q = next.iter().map(|v| factor * v).collect();
        residual = (m - 1.0).abs();
        if residual < 1e-13 {
            break;
        }
    }
    let profile = RadialProfile { d, dr, values: q };
    Ok(KappaResult {
        d,
        kappa: profile.quotient(),
        iterations,
        residual,
        profile,
    })
}

/// `𝔠_d = 8 / (d^{d/2} (4−d)^{2−d/2} κ⁴)`.
pub fn c_d(kappa: f64, d: usize) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(param("kappa", "must be positive"));
    }
    if !(1..=3).contains(&d) {
        return Err(param("d", "must be 1, 2 or 3"));
    }
    let df = d as f64;
    Ok(8.0 / (df.powf(df / 2.0) * (4.0 - df).powf(2.0 - df / 2.0) * kappa.powi(4)))
}

/// `(d − α^{(4−d)/2} 𝔠_d) ∨ 0`.
pub fn spatial_dimension(alpha: f64, d: usize, c: f64) -> f64 {
    let df = d as f64;
    (df - alpha.powf((4.0 - df) / 2.0) * c).max(0.0)
}

/// `(d + 1 − β^{(4−d)/2} v 𝔠_d) ∨ d`.
pub fn spatiotemporal_dimension(beta: f64, v: f64, d: usize, c: f64) -> f64 {
    let df = d as f64;
    (df + 1.0 - beta.powf((4.0 - df) / 2.0) * v * c).max(df)
}

/// Threshold `(d/𝔠_d)^{2/(4−d)}` where the spatial dimension vanishes; it is
/// also the almost-sure growth constant per unit time.
pub fn vanishing_alpha(d: usize, c: f64) -> f64 {
    let df = d as f64;
    (df / c).powf(2.0 / (4.0 - df))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub d: usize,
    pub grid: usize,
    pub kappa: f64,
    pub kappa_refined: f64,
    pub c_d: f64,
    pub alpha_zero: f64,
    pub spatial: Vec<(f64, f64)>,
}

/// `κ̂_d` on `n` and `2n` cells, `𝔠̂_d`, and the spatial dimension over `alphas`.
pub fn constants_report(d: usize, n: usize, alphas: &[f64]) -> Result<ConstantsReport> {
    let k = kappa_d(d, n)?;
    let k2 = kappa_d(d, 2 * n)?;
    let c = c_d(k2.kappa, d)?;
    Ok(ConstantsReport {
        d,
        grid: n,
        kappa: k.kappa,
        kappa_refined: k2.kappa,
        c_d: c,
        alpha_zero: vanishing_alpha(d, c),
        spatial: alphas.iter().map(|&a| (a, spatial_dimension(a, d, c))).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_quotient(d: usize, lambda: f64, mu: f64) -> f64 {
        gn_quotient_fn(
            d,
            |r| lambda * (-(mu * r).powi(2) / 2.0).exp(),
            |r| -lambda * mu * mu * r * (-(mu * r).powi(2) / 2.0).exp(),
            14.0 / mu,
            40_000,
        )
    }

    #[test]
    fn quotient_scale_invariance() {
        for d in 1..=3 {
            let base = gaussian_quotient(d, 1.0, 1.0);
            assert!((gaussian_quotient(d, 3.7, 1.0) - base).abs() < 1e-10);
            assert!((gaussian_quotient(d, 1.0, 2.3) - base).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_closed_form_in_two_dimensions() {
        // κ⁴ ≥ (π/2) / (π · π).
        let q = gaussian_quotient(2, 1.0, 1.0);
        assert!((q.powi(4) - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-10);
    }

    #[test]
    fn closed_form_constants() {
        assert!((c_d(1.0, 2).unwrap() - 2.0).abs() < 1e-15);
        assert!((c_d(1.0, 3).unwrap() - 8.0 / 3f64.powf(1.5)).abs() < 1e-15);
        assert!(c_d(0.0, 2).is_err());
    }

    #[test]
    fn one_dimensional_ground_state_is_sech() {
        // Q = √2 sech r.
        let sech = |r: f64| 2f64.sqrt() / r.cosh();
        let dsech = |r: f64| -2f64.sqrt() * r.tanh() / r.cosh();
        let exact = gn_quotient_fn(1, sech, dsech, 40.0, 80_000);
        let k = kappa_d(1, 4000).unwrap();
        assert!((k.kappa - exact).abs() < 1e-4, "{} vs {}", k.kappa, exact);
    }

    #[test]
    fn vanishing_threshold_is_a_root() {
        for d in [2usize, 3] {
            let c = 1.7;
            let a = vanishing_alpha(d, c);
            let df = d as f64;
            assert!((df - a.powf((4.0 - df) / 2.0) * c).abs() < 1e-12);
            assert_eq!(spatial_dimension(a * 1.01, d, c), 0.0);
            assert!(spatial_dimension(a * 0.99, d, c) > 0.0);
        }
    }
}

//! Thick-restart Lanczos for the top of a symmetric spectrum and a Lanczos
//! approximation of `exp(tA) v`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PamError, Result};
use crate::seed::rng_from_seed;

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    /// Absolute residual tolerance `‖Ax - θx‖₂` for unit `x`.
    pub tol: f64,
    /// Maximum basis size before a restart.
    pub max_basis: usize,
    pub max_restarts: usize,
    pub seed: u64,
}

impl LanczosOptions {
    pub fn for_k(k: usize, tol: f64) -> Self {
        Self {
            tol,
            max_basis: (2 * k + 30).max(50),
            max_restarts: 400,
            seed: 0x5EED_1A2C,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LanczosResult {
    /// Descending Ritz values.
    pub values: Vec<f64>,
    /// Unit-norm (Euclidean) Ritz vectors.
    pub vectors: Vec<Vec<f64>>,
    /// Explicit residuals `‖Ax - θx‖₂`.
    pub residuals: Vec<f64>,
    pub matvecs: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthogonalize `w` against `basis` twice; returns the accumulated coefficients.
fn reorthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut coef = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (c, v) in coef.iter_mut().zip(basis) {
            let p = dot(v, w);
            axpy(-p, v, w);
            *c += p;
        }
    }
    coef
}

fn random_unit(n: usize, rng: &mut impl rand::Rng, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        reorthogonalize(basis, &mut v);
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

/// Sorted (descending) eigen-decomposition of a small symmetric matrix.
fn sorted_eigen(t: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = t.nrows();
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Largest `k` eigenpairs of the symmetric operator `apply` on `R^n`.
pub fn top_eigenpairs_op<F>(n: usize, k: usize, opts: &LanczosOptions, apply: F) -> Result<LanczosResult>
where
    F: Fn(&[f64], &mut [f64]),
{
    if k == 0 || k > n {
        return Err(PamError::param("K", format!("must be in 1..={n}")));
    }
    let max_basis = opts.max_basis.max(k + 2).min(n);
    let keep = ((k + max_basis) / 2).max(k).min(max_basis.saturating_sub(1)).max(k);
    let mut rng = rng_from_seed(opts.seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_basis + 1);
    let mut t = DMatrix::<f64>::zeros(max_basis, max_basis);
    let mut next = random_unit(n, &mut rng, &basis).expect("nonzero start");
    let mut w = vec![0.0; n];
    let mut matvecs = 0;
    let mut best: Vec<f64> = vec![f64::INFINITY; k];

    for _restart in 0..=opts.max_restarts {
        let mut beta = 0.0;
        while basis.len() < max_basis {
            let j = basis.len();
            basis.push(next.clone());
            apply(&basis[j], &mut w);
            matvecs += 1;
            let coef = reorthogonalize(&basis, &mut w);
            for (i, &c) in coef.iter().enumerate() {
                t[(i, j)] = c;
                t[(j, i)] = c;
            }
            beta = norm(&w);
            if basis.len() == n {
                break;
            }
            let scale = coef.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1.0);
            if beta <= 1e-12 * scale {
                beta = 0.0;
                next = match random_unit(n, &mut rng, &basis) {
                    Some(v) => v,
                    None => break,
                };
            } else {
                next = w.iter().map(|x| x / beta).collect();
            }
        }
        let j = basis.len();
        let tj = t.view((0, 0), (j, j)).into_owned();
        let sym = (&tj + tj.transpose()) * 0.5;
        let (theta, y) = sorted_eigen(sym);
        let est: Vec<f64> = (0..k).map(|i| (beta * y[(j - 1, i)]).abs()).collect();
        let done = j == n || est.iter().all(|&r| r <= 0.5 * opts.tol);

        if done {
            let vectors: Vec<Vec<f64>> = (0..k).map(|i| combine(&basis, &y, i)).collect();
            let mut residuals = Vec::with_capacity(k);
            let mut ax = vec![0.0; n];
            for (i, x) in vectors.iter().enumerate() {
                apply(x, &mut ax);
                matvecs += 1;
                axpy(-theta[i], x, &mut ax);
                residuals.push(norm(&ax));
            }
            if residuals.iter().all(|&r| r <= opts.tol) || j == n {
                return Ok(LanczosResult {
                    values: theta[..k].to_vec(),
                    vectors,
                    residuals,
                    matvecs,
                });
            }
            best = residuals;
        } else {
            best = est;
        }

        // Thick restart: keep the leading Ritz vectors, continue from the residual direction.
        let kept: Vec<Vec<f64>> = (0..keep).map(|i| combine(&basis, &y, i)).collect();
        basis = kept;
        t.fill(0.0);
        for (i, &th) in theta.iter().take(keep).enumerate() {
            t[(i, i)] = th;
        }
        if beta == 0.0 {
            next = match random_unit(n, &mut rng, &basis) {
                Some(v) => v,
                None => break,
            };
        } else {
            reorthogonalize(&basis, &mut next);
            let nn = norm(&next);
            next.iter_mut().for_each(|x| *x /= nn);
        }
    }
    Err(PamError::EigenNotConverged {
        iterations: matvecs,
        residuals: best,
    })
}

fn combine(basis: &[Vec<f64>], y: &DMatrix<f64>, col: usize) -> Vec<f64> {
    let n = basis[0].len();
    let mut x = vec![0.0; n];
    for (r, v) in basis.iter().enumerate() {
        axpy(y[(r, col)], v, &mut x);
    }
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    x
}

/// Lanczos approximation of `exp(t A) v` with an a-posteriori error estimate.
///
/// The step is split into sub-steps until each converges within `max_dim`
/// Krylov vectors to relative accuracy `tol`.
pub fn krylov_expv<F>(apply: F, v: &[f64], t: f64, tol: f64, max_dim: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut u = v.to_vec();
    let mut remaining = t;
    let mut step = t;
    let mut guard = 0;
    while remaining > 0.0 {
        guard += 1;
        if guard > 10_000 {
            return Err(PamError::EigenNotConverged {
                iterations: guard,
                residuals: vec![remaining],
            });
        }
        let tau = step.min(remaining);
        match expv_step(&apply, &u, tau, tol, max_dim) {
            Some(next) => {
                u = next;
                remaining -= tau;
                if remaining < 1e-14 * t {
                    break;
                }
            }
            None => step = tau / 2.0,
        }
    }
    Ok(u)
}

fn expv_step<F>(apply: &F, v: &[f64], t: f64, tol: f64, max_dim: usize) -> Option<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = v.len();
    let nv = norm(v);
    if nv == 0.0 || t == 0.0 {
        return Some(v.to_vec());
    }
    let max_dim = max_dim.min(n).max(1);
    let mut basis: Vec<Vec<f64>> = vec![v.iter().map(|x| x / nv).collect()];
    let mut alpha = Vec::new();
    let mut betas = Vec::new();
    let mut w = vec![0.0; n];
    loop {
        let j = basis.len() - 1;
        apply(&basis[j], &mut w);
        let coef = reorthogonalize(&basis, &mut w);
        alpha.push(coef[j]);
        let beta = norm(&w);
        let dim = alpha.len();
        let mut tm = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            tm[(i, i)] = alpha[i];
            if i + 1 < dim {
                tm[(i, i + 1)] = betas[i];
                tm[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(tm);
        let shift = eig.eigenvalues.max();
        // exp(tT) e1 computed with the top eigenvalue factored out to avoid overflow.
        let mut coeff = DVector::zeros(dim);
        for i in 0..dim {
            let q = eig.eigenvectors.column(i);
            coeff += q * (q[0] * (t * (eig.eigenvalues[i] - shift)).exp());
        }
        let err = beta * coeff[dim - 1].abs();
        let scale = coeff.norm();
        if beta <= 1e-13 * alpha.iter().fold(1.0f64, |m, a| m.max(a.abs())) || err <= tol * scale {
            let growth = (t * shift).exp() * nv;
            let mut out = vec![0.0; n];
            for (i, b) in basis.iter().enumerate() {
                axpy(coeff[i] * growth, b, &mut out);
            }
            return Some(out);
        }
        if dim >= max_dim {
            return None;
        }
        betas.push(beta);
        basis.push(w.iter().map(|x| x / beta).collect());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_op(d: Vec<f64>) -> impl Fn(&[f64], &mut [f64]) {
        move |v, out| {
            for i in 0..v.len() {
                out[i] = d[i] * v[i];
            }
        }
    }

    #[test]
    fn finds_top_of_diagonal() {
        let d: Vec<f64> = (0..300).map(|i| -(i as f64) * 0.1).collect();
        let r = top_eigenpairs_op(300, 4, &LanczosOptions::for_k(4, 1e-10), diag_op(d)).unwrap();
        for (i, v) in r.values.iter().enumerate() {
            assert!((v + 0.1 * i as f64).abs() < 1e-9);
        }
        assert!(r.residuals.iter().all(|&x| x <= 1e-10));
    }

    #[test]
    fn handles_degenerate_and_tiny_spaces() {
        let d = vec![1.0, 1.0, 0.5, -2.0];
        let r = top_eigenpairs_op(4, 4, &LanczosOptions::for_k(4, 1e-12), diag_op(d)).unwrap();
        let want = [1.0, 1.0, 0.5, -2.0];
        for (a, b) in r.values.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn expv_matches_diagonal_exponential() {
        let d: Vec<f64> = (0..200).map(|i| 1.0 - (i as f64) * 0.7).collect();
        let v: Vec<f64> = (0..200).map(|i| 1.0 + (i % 3) as f64).collect();
        let got = krylov_expv(diag_op(d.clone()), &v, 1.3, 1e-12, 60).unwrap();
        for i in 0..200 {
            let want = (1.3 * d[i]).exp() * v[i];
            assert!((got[i] - want).abs() < 1e-9 * (1.3f64).exp() * 3.0);
        }
    }
}

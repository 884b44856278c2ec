use nalgebra::{DMatrix, DVector};
use pamlab::cosine::{basis_1d, basis_1d_deriv, CosineSeries};
use pamlab::fk::{solve_resolvent_grad, solve_resolvent_y, DriftPackage, ResolventOptions};
use pamlab::lattice::make_box;
use pamlab::{sample_noise, FieldLabel, GridField, LatticeBox, PamError};
use std::f64::consts::PI;

/// Dense one-axis operators: gradient and Laplacian through the cosine basis.
fn axis_operators(grid: &LatticeBox) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = grid.per_axis();
    let (lo, side, h) = (grid.lower(0), grid.side(), grid.spacing());
    let xs: Vec<f64> = (0..m).map(|j| grid.coord(0, j)).collect();
    let analysis = DMatrix::from_fn(m, m, |k, i| h * basis_1d(k, lo, side, xs[i]));
    let synth = DMatrix::from_fn(m, m, |i, k| basis_1d(k, lo, side, xs[i]));
    let deriv = DMatrix::from_fn(m, m, |i, k| basis_1d_deriv(k, lo, side, xs[i]));
    let lam = DMatrix::from_diagonal(&DVector::from_fn(m, |k, _| -(PI * k as f64 / side).powi(2)));
    (&deriv * &analysis, &synth * lam * &analysis)
}

/// Newton's method on `F(Y) = (η − ½Δ)Y − ½|∇Z + ∇Y|²` with dense operators.
fn newton_solve(grid: &LatticeBox, z: &[f64], eta: f64) -> Vec<f64> {
    let m = grid.per_axis();
    let n = m * m;
    let (g1, l1) = axis_operators(grid);
    let id = DMatrix::<f64>::identity(m, m);
    let gx = id.kronecker(&g1);
    let gy = g1.kronecker(&id);
    let lap = id.kronecker(&l1) + l1.kronecker(&id);
    let lin = DMatrix::<f64>::identity(n, n) * eta - lap * 0.5;
    let zv = DVector::from_column_slice(z);
    let (gzx, gzy) = (&gx * &zv, &gy * &zv);
    let mut y = DVector::<f64>::zeros(n);
    for _ in 0..50 {
        let wx = &gzx + &gx * &y;
        let wy = &gzy + &gy * &y;
        let f = &lin * &y - (wx.component_mul(&wx) + wy.component_mul(&wy)) * 0.5;
        if f.amax() < 1e-14 {
            break;
        }
        let jac = &lin - DMatrix::from_diagonal(&wx) * &gx - DMatrix::from_diagonal(&wy) * &gy;
        let step = jac.lu().solve(&f).expect("nonsingular Jacobian");
        y -= step;
    }
    y.as_slice().to_vec()
}

fn cos_mode_z(grid: &LatticeBox, amp: f64) -> GridField {
    let (lo0, lo1, side) = (grid.lower(0), grid.lower(1), grid.side());
    GridField::from_fn(grid.clone(), FieldLabel::Resolvent, |x| {
        amp * basis_1d(1, lo0, side, x[0]) * basis_1d(2, lo1, side, x[1]) + 0.3 * basis_1d(3, lo0, side, x[0])
    })
}

#[test]
fn picard_matches_dense_newton_on_16_by_16() {
    let grid = make_box(&[0.0, 0.0], 2.0, 0.125, 2).unwrap();
    assert_eq!(grid.per_axis(), 16);
    let z = cos_mode_z(&grid, 0.8);
    let opts = ResolventOptions { tol: 1e-13, ..Default::default() };
    let sol = solve_resolvent_y(&z, 1.0, &opts).unwrap();
    let oracle = newton_solve(&grid, z.values(), sol.eta);
    let diff = sol
        .y
        .values()
        .iter()
        .zip(&oracle)
        .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    assert!(diff <= 1e-8, "Picard vs Newton sup difference {diff:e}");
    assert!(sol.y.sup_norm() > 1e-3, "fixture should produce a nontrivial correction");
}

#[test]
fn picard_residual_on_noise_package() {
    let grid = make_box(&[0.0, 0.0], 4.0, 0.125, 2).unwrap();
    let nf = sample_noise(&grid, 0.125, 21).unwrap();
    let dp = DriftPackage::from_noise(&nf, 1, 1.0, &ResolventOptions::default()).unwrap();
    assert!(dp.residual <= 1e-8);
    assert!(dp.resolvent_residual().unwrap() <= 1e-8);
    let tail: Vec<f64> = dp.ratios.iter().rev().take(5).copied().collect();
    assert!(tail.iter().all(|&r| r <= 0.9), "final ratios {tail:?}");
}

#[test]
fn drift_is_spectral_gradient_of_w() {
    let grid = make_box(&[0.0, 0.0], 4.0, 0.25, 2).unwrap();
    let nf = sample_noise(&grid, 0.25, 5).unwrap();
    let dp = DriftPackage::from_noise(&nf, 2, 1.0, &ResolventOptions::default()).unwrap();
    let w = dp.z.add(&dp.y).unwrap();
    let g = dp.grid().clone();
    let grad = CosineSeries::analyze(&g, w.values(), g.per_axis()).unwrap().gradient(&g).unwrap();
    for (a, comp) in grad.iter().enumerate() {
        let err = comp
            .iter()
            .zip(dp.drift[a].values())
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        assert!(err <= 1e-8, "axis {a}: {err:e}");
    }
}

#[test]
fn constant_gradient_gives_constant_correction() {
    let grid = make_box(&[0.0, 0.0], 3.0, 0.25, 2).unwrap();
    let a = [0.7, -0.4];
    let grad: Vec<Vec<f64>> = a.iter().map(|&c| vec![c; grid.len()]).collect();
    for eta in [0.5, 2.0, 9.0] {
        let sol = solve_resolvent_grad(&grid, &grad, eta, &ResolventOptions::default()).unwrap();
        let want = (a[0] * a[0] + a[1] * a[1]) / (2.0 * sol.eta);
        let err = sol.y.values().iter().fold(0.0f64, |m, v| m.max((v - want).abs()));
        assert!(err <= 1e-10, "eta {eta}: {err:e}");
    }
}

#[test]
fn large_z_raises_eta() {
    let grid = make_box(&[0.0, 0.0], 2.0, 0.125, 2).unwrap();
    let z = cos_mode_z(&grid, 6.0);
    let sol = solve_resolvent_y(&z, 0.25, &ResolventOptions::default()).unwrap();
    assert!(sol.eta > 0.25);
    assert!(!sol.rejected.is_empty());
    assert!(sol.residual <= 1e-10);
}

#[test]
fn eta_cap_reports_ratio_trace() {
    let grid = make_box(&[0.0, 0.0], 2.0, 0.125, 2).unwrap();
    let z = cos_mode_z(&grid, 6.0);
    let opts = ResolventOptions { eta_max: 0.3, ..Default::default() };
    match solve_resolvent_y(&z, 0.25, &opts) {
        Err(PamError::ResolventNotContracting { ratios, .. }) => assert!(!ratios.is_empty()),
        other => panic!("expected contraction failure, got {other:?}"),
    }
}

use pamlab::evolution::InitialData;
use pamlab::fk::*;
use pamlab::lattice::make_box;
use pamlab::{FieldLabel, GridField};
use proptest::prelude::*;

fn unkilled(t: f64, dt: f64, n: usize, seed: u64) -> PathConfig {
    PathConfig {
        kill: false,
        bridge: false,
        ..PathConfig::new(t, dt, n, seed)
    }
}

#[test]
fn brownian_mean_square_displacement() {
    let g = make_box(&[0.0, 0.0], 400.0, 25.0, 2).unwrap();
    let dp = DriftPackage::zero(&g);
    let t = 0.7;
    let ens = simulate_paths_with(&dp, &[0.0, 0.0], &unkilled(t, 0.05, 10_000, 3)).unwrap();
    let r2: Vec<f64> = (0..ens.n_paths)
        .map(|i| ens.position(i).iter().map(|v| v * v).sum())
        .collect();
    let ms = pamlab::stats::mean_stderr(&r2);
    assert!((ms.mean - 2.0 * t).abs() <= 3.0 * ms.stderr, "{} ± {}", ms.mean, ms.stderr);
}

#[test]
fn huge_box_flat_data_is_pure_survival() {
    let g = make_box(&[0.0, 0.0], 400.0, 25.0, 2).unwrap();
    let dp = DriftPackage::zero(&g);
    let ens = simulate_paths(&dp, &[1.0, -2.0], 1.0, 0.01, 2000, 9).unwrap();
    assert_eq!(ens.exit_fraction(), 0.0);
    let est = fk_estimate(&dp, &InitialData::Flat, &[1.0, -2.0], &ens).unwrap();
    assert!((est.mean - 1.0).abs() < 1e-12);
    assert!(!est.degenerate);
}

#[test]
fn constant_z_factorizes_as_exponential() {
    let g = make_box(&[0.0, 0.0], 400.0, 25.0, 2).unwrap();
    let c = 0.8;
    let dp = DriftPackage::from_z(GridField::constant(g, c, FieldLabel::Resolvent), 1.0, &ResolventOptions::default()).unwrap();
    assert!(dp.y.sup_norm() < 1e-12);
    let t = 0.6;
    let ens = simulate_paths(&dp, &[0.0, 0.0], t, 0.01, 500, 4).unwrap();
    let est = fk_estimate(&dp, &InitialData::Flat, &[0.0, 0.0], &ens).unwrap();
    let survival = 1.0 - ens.exit_fraction();
    assert!((est.mean - (c * t).exp() * survival).abs() < 1e-10);
}

#[test]
fn all_paths_exiting_is_flagged() {
    let g = make_box(&[0.0, 0.0], 0.5, 0.125, 2).unwrap();
    let dp = DriftPackage::zero(&g);
    let ens = simulate_paths(&dp, &[0.0, 0.0], 5.0, 0.01, 200, 2).unwrap();
    let est = fk_estimate(&dp, &InitialData::Flat, &[0.0, 0.0], &ens).unwrap();
    assert!(est.degenerate);
    assert_eq!(est.mean, 0.0);
}

#[test]
fn oversized_step_is_rejected_with_bound() {
    let g = make_box(&[0.0, 0.0], 2.0, 0.125, 2).unwrap();
    let z = GridField::from_fn(g, FieldLabel::Resolvent, |x| 0.5 * (x[0] * 2.0).cos());
    let dp = DriftPackage::from_z(z, 1.0, &ResolventOptions::default()).unwrap();
    let too_big = dp.dt_max() * 1.5;
    match simulate_paths(&dp, &[0.0, 0.0], 0.1, too_big, 10, 1) {
        Err(pamlab::PamError::TimeStep { bound, .. }) => assert!((bound - dp.dt_max()).abs() < 1e-15),
        other => panic!("expected time-step rejection, got {other:?}"),
    }
}

#[test]
fn no_exit_probability_matches_escape_complement() {
    let side = 2.0;
    let g = make_box(&[0.0, 0.0], side, 0.125, 2).unwrap();
    let dp = DriftPackage::zero(&g);
    let (t, dt, n) = (0.3, 1e-3, 20_000);
    let killed = simulate_paths_with(
        &dp,
        &[0.0, 0.0],
        &PathConfig {
            bridge: false,
            ..PathConfig::new(t, dt, n, 31)
        },
    )
    .unwrap();
    let est = fk_estimate(&dp, &InitialData::Flat, &[0.0, 0.0], &killed).unwrap();
    let free = simulate_paths_with(&dp, &[0.0, 0.0], &unkilled(t, dt, n, 32)).unwrap();
    let esc = escape_from_ensemble(&free.max_disp_sup, &[dp.kill_half_width], t);
    let p = 1.0 - esc.p_hat[0];
    let sigma = (est.stderr.powi(2) + p * (1.0 - p) / n as f64).sqrt();
    assert!((est.mean - p).abs() <= 3.0 * sigma, "{} vs {} (σ {sigma})", est.mean, p);
}

#[test]
fn escape_is_nonincreasing_and_below_reflection_bound() {
    let g = make_box(&[0.0, 0.0], 400.0, 25.0, 2).unwrap();
    let dp = DriftPackage::zero(&g);
    let ks: Vec<f64> = (0..12).map(|i| i as f64 * 0.25).collect();
    let t = 1.0;
    let rep = escape_probability(&dp, &[0.0, 0.0], &ks, t, 0.01, 20_000, 6).unwrap();
    assert_eq!(rep.p_hat[0], 1.0);
    for w in rep.p_hat.windows(2) {
        assert!(w[1] <= w[0]);
    }
    for (k, p) in ks.iter().zip(&rep.p_hat) {
        let bound = reflection_bound(*k, t, 2);
        assert!(*p <= bound * 1.05 + 3.0 * (bound / 20_000.0).sqrt(), "K {k}: {p} > {bound}");
    }
    assert!(rep.slope_k2.unwrap() < 0.0);
}

#[test]
fn zero_drift_histogram_matches_gaussian() {
    let g = make_box(&[0.0, 0.0], 400.0, 25.0, 2).unwrap();
    let dp = DriftPackage::zero(&g);
    let t: f64 = 0.5;
    let spec = HistogramSpec {
        half_width: 2.0 * t.sqrt(),
        bins_per_axis: 6,
        min_hits: 100,
    };
    let h = kernel_histogram(&dp, &[0.0, 0.0], t, t / 5.0, 200_000, 8, spec).unwrap();
    assert!(h.gaussian_log_ratio().unwrap() <= 0.1);
    assert!(h.mirror_z().abs() <= 3.0);
    assert!(h.fit().max_upper_slack < 0.0);
    let mut buf = Vec::new();
    h.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 36);
}

#[test]
fn trace_round_trips_through_container() {
    let g = make_box(&[0.0, 0.0], 2.0, 0.25, 2).unwrap();
    let dp = DriftPackage::zero(&g);
    let ens = simulate_paths(&dp, &[0.1, 0.2], 0.2, 0.01, 17, 5).unwrap();
    let mut buf = Vec::new();
    ens.write_trace(&g, &mut buf).unwrap();
    let (head, payload) = pamlab::io::read_container(&buf[..]).unwrap();
    assert_eq!(head.k_max, 17);
    assert_eq!(payload.len(), 17 * 6);
    assert_eq!(payload[0], ens.position(0)[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ensembles_are_deterministic_and_batch_invariant(seed in any::<u64>(), n in 1usize..700, extra in 1usize..300) {
        let g = make_box(&[0.0, 0.0], 2.0, 0.25, 2).unwrap();
        let z = GridField::from_fn(g, FieldLabel::Resolvent, |x| 0.3 * x[0].sin() * x[1].cos());
        let dp = DriftPackage::from_z(z, 1.0, &ResolventOptions::default()).unwrap();
        let a = simulate_paths(&dp, &[0.2, -0.1], 0.05, 0.005, n, seed).unwrap();
        let b = simulate_paths(&dp, &[0.2, -0.1], 0.05, 0.005, n, seed).unwrap();
        let c = simulate_paths(&dp, &[0.2, -0.1], 0.05, 0.005, n + extra, seed).unwrap();
        prop_assert_eq!(&a.final_pos, &b.final_pos);
        prop_assert_eq!(&a.integral, &b.integral);
        prop_assert_eq!(&a.final_pos[..], &c.final_pos[..2 * n]);
        prop_assert_eq!(&a.survival[..], &c.survival[..n]);
        let ea = fk_estimate(&dp, &InitialData::Flat, &[0.2, -0.1], &a).unwrap();
        let eb = fk_estimate(&dp, &InitialData::Flat, &[0.2, -0.1], &b).unwrap();
        prop_assert_eq!(ea.mean.to_bits(), eb.mean.to_bits());
    }

    #[test]
    fn escape_probability_is_nonincreasing(seed in any::<u64>()) {
        let g = make_box(&[0.0, 0.0], 400.0, 25.0, 2).unwrap();
        let dp = DriftPackage::zero(&g);
        let ks = [0.0, 0.3, 0.6, 1.0, 1.5, 2.5];
        let rep = escape_probability(&dp, &[0.0, 0.0], &ks, 0.5, 0.05, 500, seed).unwrap();
        prop_assert_eq!(rep.p_hat[0], 1.0);
        for w in rep.p_hat.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }
}

use pamlab::evolution::*;
use pamlab::hamiltonian::discrete_dirichlet_ground;
use pamlab::spectrum::*;
use pamlab::*;
use proptest::prelude::*;

fn small_box(m: usize) -> LatticeBox {
    make_box(&[0.0, 0.0], m as f64 * 0.25, 0.25, 2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn noise_is_linear_and_seed_deterministic(s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0f64..3.0) {
        let g = small_box(12);
        let x = sample_noise(&g, 0.25, s1).unwrap();
        let y = sample_noise(&g, 0.25, s2).unwrap();
        let again = sample_noise(&g, 0.25, s1).unwrap();
        prop_assert_eq!(x.realize().values().to_vec(), again.realize().values().to_vec());
        let lhs = x.scaled(a).add(&y).unwrap().realize();
        let (rx, ry) = (x.realize(), y.realize());
        for i in 0..g.len() {
            let want = a * rx.values()[i] + ry.values()[i];
            prop_assert!((lhs.values()[i] - want).abs() <= 1e-10 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn z_map_is_bounded(seed in any::<u64>(), eta in 0.2f64..4.0) {
        let g = small_box(16);
        let nf = sample_noise(&g, 0.25, seed).unwrap();
        let z = compute_z(&nf, eta).unwrap();
        prop_assert!(z.norm_l2() <= nf.realize().norm_l2() / eta * (1.0 + 1e-10));
    }

    #[test]
    fn constant_shift_moves_every_eigenvalue(seed in any::<u64>(), c in -5.0f64..5.0) {
        let g = small_box(10);
        let h = assemble(&sample_noise(&g, 0.25, seed).unwrap());
        let a = top_eigenpairs(&h, 4, None).unwrap();
        let b = top_eigenpairs(&h.shifted(c), 4, None).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            prop_assert!((y - x - c).abs() <= 1e-8);
        }
        let overlap = a.eigenvectors[0].dot(&b.eigenvectors[0]).unwrap().abs();
        prop_assert!((overlap - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn sub_box_eigenvalue_never_exceeds_big_box(seed in any::<u64>(), ix in -4i32..=4, iy in -4i32..=4) {
        let big = make_box(&[0.0, 0.0], 4.0, 0.25, 2).unwrap();
        let nf = sample_noise(&big, 0.25, seed).unwrap();
        let sub = big.sub_box(&[0.25 * ix as f64, 0.25 * iy as f64], 2.0).unwrap();
        let out = monotonicity_check(&nf, &sub).unwrap();
        prop_assert!(out.holds, "{} > {}", out.lambda_sub, out.lambda_big);
    }

    #[test]
    fn spectral_semigroup_and_positivity(seed in any::<u64>(), t1 in 0.05f64..0.5, t2 in 0.05f64..0.5) {
        let g = small_box(8);
        let h = assemble(&sample_noise(&g, 0.25, seed).unwrap());
        let spec = dense_eigenpairs(&h, g.len()).unwrap();
        let whole = evolve_spectral(&spec, &InitialData::Flat, t1 + t2).unwrap();
        let half = evolve_spectral(&spec, &InitialData::Flat, t1).unwrap();
        let two = evolve_spectral(&spec, &InitialData::Custom(half), t2).unwrap();
        let scale = whole.sup_norm();
        for (a, b) in whole.values().iter().zip(two.values()) {
            prop_assert!((a - b).abs() <= 1e-8 * scale);
        }
        prop_assert!(whole.min() >= -1e-8 * scale);
    }

    #[test]
    fn peak_sets_shrink_as_the_level_rises(seed in any::<u64>(), a1 in 0.0f64..0.3, da in 0.0f64..0.3) {
        let cfg = TileConfig { d: 2, side: 4.0, h: 0.5, epsilon: 0.5, t: 1.0, extent: 12, seed };
        let s = tiled_solution(&cfg).unwrap();
        let lo = s.peak_set(cfg.t, a1);
        let hi = s.peak_set(cfg.t, a1 + da);
        prop_assert!(hi.iter().all(|p| lo.contains(p)));
    }
}

#[test]
fn iterative_matches_dense_up_to_400_unknowns() {
    for m in [6usize, 12, 20] {
        let g = small_box(m);
        for seed in 0..4u64 {
            let h = assemble(&sample_noise(&g, 0.25, seed).unwrap());
            let it = top_eigenpairs(&h, 5, None).unwrap();
            let de = dense_eigenpairs(&h, 5).unwrap();
            for (a, b) in it.eigenvalues.iter().zip(&de.eigenvalues) {
                assert!((a - b).abs() <= 1e-8, "m {m} seed {seed}: {a} vs {b}");
            }
            assert!(it.orthonormality_defect() <= 1e-8);
        }
    }
}

#[test]
fn zero_potential_matches_discrete_dirichlet_value() {
    let g = make_box(&[0.0, 0.0], 3.0, 0.25, 2).unwrap();
    let h = HamiltonianOperator::new(GridField::zeros(g.clone(), FieldLabel::Potential));
    let l1 = top_eigenpairs(&h, 1, None).unwrap().lambda1();
    assert!((l1 - discrete_dirichlet_ground(&g)).abs() <= 1e-10);
}

#[test]
fn crank_nicolson_tracks_spectral_solution() {
    let g = make_box(&[0.0, 0.0], 4.0, 0.25, 2).unwrap();
    let h = assemble(&sample_noise(&g, 0.25, 17).unwrap());
    let spec = dense_eigenpairs(&h, g.len()).unwrap();
    let a = evolve_spectral(&spec, &InitialData::Flat, 0.5).unwrap();
    let b = evolve_crank_nicolson(&h, &InitialData::Flat, 0.5, 1e-3).unwrap();
    let c = evolve_krylov(&h, &InitialData::Flat, 0.5, 1e-12).unwrap();
    let scale = a.sup_norm();
    assert!(a.sub(&b).unwrap().sup_norm() / scale <= 1e-3);
    assert!(a.sub(&c).unwrap().sup_norm() / scale <= 1e-8);
}

#[test]
fn tail_survival_is_a_survival_function() {
    let grid = StudyGrid { h: 0.5, epsilon: 0.5, d: 2 };
    let rep = eigenvalue_tail_mc(4.0, &grid, None, 200, 3).unwrap();
    assert_eq!(rep.survival[0], 1.0);
    for w in rep.survival.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn swapping_boxes_keeps_the_correlation() {
    let grid = StudyGrid { h: 0.5, epsilon: 0.5, d: 2 };
    let rep = independence_study(2.0, 6.0, 40, &grid, 8).unwrap();
    let swapped = pamlab::stats::pearson(&rep.lambda_second, &rep.lambda_first);
    assert!((swapped - rep.correlation).abs() < 1e-14);
    assert!(rep.separated && !rep.few_pairs);
}

#[test]
fn growth_of_zero_potential_is_deterministic() {
    let sides = [2.0, 4.0, 8.0, 16.0];
    let rows: Vec<GrowthRow> = sides
        .iter()
        .map(|&s| {
            let g = make_box(&[0.0, 0.0], s, 0.5, 2).unwrap();
            GrowthRow {
                side: s,
                mean: discrete_dirichlet_ground(&g),
                stderr: 0.0,
                n: 1,
            }
        })
        .collect();
    for w in rows.windows(2) {
        assert!(w[1].mean > w[0].mean);
    }
    let rep = growth_from_rows(rows, &StudyGrid { h: 0.5, epsilon: 0.5, d: 2 }, 0);
    assert!(rep.fit.unwrap().slope.abs() < 0.5);
}

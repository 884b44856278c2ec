use pamlab::spectrum::dense_eigenpairs;
use pamlab::{assemble, make_box, sample_noise};
use pamlab_web::*;

#[test]
fn potential_map_is_the_assembled_potential() {
    let v = potential_map(2.0, 0.125, 7).unwrap();
    assert_eq!(v.len(), 16 * 16);
    let g = make_box(&[0.0, 0.0], 2.0, 0.125, 2).unwrap();
    let op = assemble(&sample_noise(&g, 0.125, 7).unwrap());
    assert_eq!(v, op.potential().values());
    assert_ne!(v, potential_map(2.0, 0.125, 8).unwrap());
}

#[test]
fn eigenvalues_match_the_dense_oracle() {
    let got = top_eigenvalues(2.0, 0.25, 3, 4).unwrap();
    let g = make_box(&[0.0, 0.0], 2.0, 0.25, 2).unwrap();
    let want = dense_eigenpairs(&assemble(&sample_noise(&g, 0.25, 3).unwrap()), 4).unwrap();
    for (a, b) in got.iter().zip(&want.eigenvalues) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
    assert!(got.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn oversized_and_misaligned_grids_are_refused() {
    assert!(top_eigenvalues(16.0, 0.125, 1, 1).unwrap_err().contains("limit"));
    assert!(potential_map(1.0, 0.3, 1).is_err());
}

#[test]
fn skeleton_dimension_is_near_two_one_minus_theta() {
    let d = skeleton_dimension(0.5, 10).unwrap();
    assert!((d - 1.0).abs() <= 0.1, "{d}");
}

#[test]
fn predicted_dimensions_fall_from_two_to_zero() {
    let alphas = [0.0, 0.05, 0.1, 0.15, 0.3];
    let dims = predicted_dimensions(alphas.to_vec()).unwrap();
    assert_eq!(dims[0], 2.0);
    assert!(dims.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*dims.last().unwrap(), 0.0);
}

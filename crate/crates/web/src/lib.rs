//! Three small pamlab operations for the browser page in `www/`.

use pamlab::constants::{c_d, kappa_d, spatial_dimension};
use pamlab::fractal::{default_rho_grid, dim_estimate, skeleton};
use pamlab::{assemble, make_box, sample_noise, top_eigenpairs};
use wasm_bindgen::prelude::*;

/// Largest grid side (in cells) the page may request.
pub const MAX_CELLS: usize = 96;

fn operator(side: f64, h: f64, seed: u32) -> Result<pamlab::HamiltonianOperator, String> {
    let g = make_box(&[0.0, 0.0], side, h, 2).map_err(|e| e.to_string())?;
    if g.per_axis() > MAX_CELLS {
        return Err(format!("grid has {} cells per side, limit is {MAX_CELLS}", g.per_axis()));
    }
    let nf = sample_noise(&g, h, seed as u64).map_err(|e| e.to_string())?;
    Ok(assemble(&nf))
}

/// Renormalized potential on the box grid, row-major with x fastest.
#[wasm_bindgen]
pub fn potential_map(side: f64, h: f64, seed: u32) -> Result<Vec<f64>, String> {
    Ok(operator(side, h, seed)?.potential().values().to_vec())
}

/// Top `k` eigenvalues of the Anderson Hamiltonian, descending.
#[wasm_bindgen]
pub fn top_eigenvalues(side: f64, h: f64, seed: u32, k: u32) -> Result<Vec<f64>, String> {
    let op = operator(side, h, seed)?;
    let k = (k as usize).clamp(1, op.len());
    top_eigenpairs(&op, k, None).map(|s| s.eigenvalues).map_err(|e| e.to_string())
}

/// Estimated macroscopic dimension of the θ-skeleton on shells `3..=n_max`.
#[wasm_bindgen]
pub fn skeleton_dimension(theta: f64, n_max: u32) -> Result<f64, String> {
    let n_max = (n_max as usize).clamp(5, 11);
    let sk = skeleton(theta, 2, 1..=n_max).map_err(|e| e.to_string())?;
    dim_estimate(&sk, &default_rho_grid(2), 3..=n_max)
        .estimate
        .ok_or_else(|| "no dimension read-out on these shells".to_string())
}

/// Predicted spatial dimension of the d = 2 peak sets for each α.
#[wasm_bindgen]
pub fn predicted_dimensions(alphas: Vec<f64>) -> Result<Vec<f64>, String> {
    let kappa = kappa_d(2, 512).map_err(|e| e.to_string())?.kappa;
    let c = c_d(kappa, 2).map_err(|e| e.to_string())?;
    Ok(alphas.iter().map(|&a| spatial_dimension(a, 2, c)).collect())
}

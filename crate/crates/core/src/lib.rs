//! Numerical laboratory for the parabolic Anderson model with white-noise
//! potential on boxes in d = 2 (and a lattice mode in d = 3).

pub mod constants;
pub mod cosine;
pub mod error;
pub mod evolution;
pub mod field;
pub mod fk;
pub mod fractal;
pub mod hamiltonian;
pub mod io;
pub mod lanczos;
pub mod lattice;
pub mod noise;
pub mod parallel;
pub mod seed;
pub mod spectrum;
pub mod stats;

pub use error::{PamError, Result};
pub use field::{FieldLabel, GridField};
pub use lattice::{make_box, LatticeBox};
pub use noise::{compute_z, renorm_constant, sample_noise, tau, NoiseField};
pub use hamiltonian::{assemble, HamiltonianOperator};
pub use spectrum::{top_eigenpairs, Spectrum};

//! Dense real linear algebra used throughout the crate.
//!
//! Everything here operates on [`Matrix`] values and is free of shared state.

mod eig;
mod expm;
pub mod lu;
mod matrix;
mod svd;

pub use eig::{eigenvalues, lambda_max, spectral_radius, sym_eig, SymEig};
pub use expm::mat_exp;
pub use lu::{inverse, solve};
pub use matrix::Matrix;
pub use svd::{default_rtol, null_space, pinv, pinv_from_svd, rank_tol, svd, SvdResult};

/// Euclidean norm of a vector.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

//! Tolerances shared by the linear algebra routines.

/// Single record holding every numerical knob used by `linalg`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    /// Relative off-diagonal threshold at which Jacobi sweeps stop.
    pub jacobi_tol: f64,
    /// Sweep cap for the one-sided and two-sided Jacobi iterations.
    pub jacobi_max_sweeps: usize,
    /// Relative asymmetry accepted by `sym_eig`.
    pub symmetry_tol: f64,
    /// Iteration cap for the Hessenberg QR eigenvalue iteration (per eigenvalue).
    pub qr_max_iters: usize,
    /// Target one-norm after scaling in `mat_exp`.
    pub expm_scaled_norm: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        NUMERICS
    }
}

pub const NUMERICS: Numerics = Numerics {
    jacobi_tol: f64::EPSILON,
    jacobi_max_sweeps: 100,
    symmetry_tol: 1e-12,
    qr_max_iters: 60,
    expm_scaled_norm: 0.5,
};

/// Scaled-epsilon rank threshold: `max(rows, cols) * eps * sigma_max`.
pub fn rank_threshold(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

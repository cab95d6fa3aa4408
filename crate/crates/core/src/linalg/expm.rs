use super::{lu, Matrix};
use crate::error::{Error, Result};
use crate::numerics::NUMERICS;

const PADE_ORDER: usize = 6;

/// Coefficients of the diagonal `[q/q]` Padé approximant of `e^x`:
/// `c_k = (2q-k)! q! / ((2q)! k! (q-k)!)`.
fn pade_coefficients() -> [f64; PADE_ORDER + 1] {
    let mut c = [0.0; PADE_ORDER + 1];
    c[0] = 1.0;
    let q = PADE_ORDER as f64;
    for k in 1..=PADE_ORDER {
        let kf = k as f64;
        c[k] = c[k - 1] * (q - kf + 1.0) / (kf * (2.0 * q - kf + 1.0));
    }
    c
}

/// Matrix exponential by scaling and squaring around a degree-6 Padé approximant.
pub fn mat_exp(a: &Matrix) -> Result<Matrix> {
    a.ensure_square()?;
    let n = a.rows();
    let norm = a.norm1();
    if !norm.is_finite() {
        return Err(Error::NumericalFailure {
            op: "mat_exp (non-finite input norm)",
            iterations: 0,
        });
    }
    let mut squarings = 0u32;
    if norm > NUMERICS.expm_scaled_norm {
        squarings = (norm / NUMERICS.expm_scaled_norm).log2().ceil().max(0.0) as u32;
    }
    if squarings > 1000 {
        return Err(Error::NumericalFailure {
            op: "mat_exp (norm beyond representable range)",
            iterations: squarings as usize,
        });
    }
    let scaled = a.scale(0.5f64.powi(squarings as i32));

    let c = pade_coefficients();
    let mut num = Matrix::identity(n);
    let mut den = Matrix::identity(n);
    let mut power = Matrix::identity(n);
    for (k, &ck) in c.iter().enumerate().skip(1) {
        power = &power * &scaled;
        num.add_scaled(ck, &power);
        den.add_scaled(if k % 2 == 0 { ck } else { -ck }, &power);
    }
    let mut result = lu::solve(&den, &num)?;
    for step in 0..squarings {
        result = &result * &result;
        if !result.is_finite() {
            return Err(Error::NumericalFailure {
                op: "mat_exp (overflow while squaring)",
                iterations: step as usize + 1,
            });
        }
    }
    Ok(result)
}

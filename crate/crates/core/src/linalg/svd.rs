//! One-sided (Hestenes) Jacobi SVD and the routines built on it.

use super::Matrix;
use crate::error::{Error, Result};
use crate::numerics::{rank_threshold, NUMERICS};

/// Thin SVD `A = U diag(sigma) Vt` with `k = min(rows, cols)` singular triplets.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub vt: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for j in 0..self.sigma.len() {
            for i in 0..us.rows() {
                us[(i, j)] *= self.sigma[j];
            }
        }
        &us * &self.vt
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    /// Smallest retained singular value (`sigma[k-1]`).
    pub fn sigma_min(&self) -> f64 {
        self.sigma.last().copied().unwrap_or(0.0)
    }
}

pub fn svd(a: &Matrix) -> Result<SvdResult> {
    if a.is_empty() {
        return Err(Error::InvalidParameter("svd of an empty matrix".into()));
    }
    if a.rows() >= a.cols() {
        tall_svd(a)
    } else {
        let t = tall_svd(&a.transpose())?;
        Ok(SvdResult {
            u: t.vt.transpose(),
            sigma: t.sigma,
            vt: t.u.transpose(),
        })
    }
}

fn tall_svd(a: &Matrix) -> Result<SvdResult> {
    let (m, n) = a.shape();
    // column-major working copies
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = NUMERICS.jacobi_tol * (m as f64).sqrt();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < NUMERICS.jacobi_max_sweeps {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha: f64 = w[p].iter().map(|x| x * x).sum();
                let beta: f64 = w[q].iter().map(|x| x * x).sum();
                let gamma: f64 = w[p].iter().zip(&w[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericalFailure {
            op: "svd (one-sided Jacobi)",
            iterations: sweeps,
        });
    }

    let mut order: Vec<(f64, usize)> = w
        .iter()
        .enumerate()
        .map(|(j, col)| (col.iter().map(|x| x * x).sum::<f64>().sqrt(), j))
        .collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

    let sigma: Vec<f64> = order.iter().map(|o| o.0).collect();
    let floor = rank_threshold(m, n, sigma[0]);
    let mut u = Matrix::zeros(m, n);
    let mut vt = Matrix::zeros(n, n);
    let mut missing = Vec::new();
    for (k, &(s, j)) in order.iter().enumerate() {
        if s > floor && s > 0.0 {
            for i in 0..m {
                u[(i, k)] = w[j][i] / s;
            }
        } else {
            missing.push(k);
        }
        for i in 0..n {
            vt[(k, i)] = v[j][i];
        }
    }
    if !missing.is_empty() {
        complete_orthonormal_columns(&mut u, &missing);
    }
    Ok(SvdResult { u, sigma, vt })
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all other columns.
fn complete_orthonormal_columns(u: &mut Matrix, missing: &[usize]) {
    let m = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|k| !missing.contains(k)).collect();
    let mut candidate = 0;
    for &k in missing {
        while candidate < m {
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            // two passes of Gram-Schmidt
            for _ in 0..2 {
                for &f in &filled {
                    let d: f64 = (0..m).map(|i| u[(i, f)] * e[i]).sum();
                    for (i, ei) in e.iter_mut().enumerate() {
                        *ei -= d * u[(i, f)];
                    }
                }
            }
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for (i, ei) in e.iter().enumerate() {
                    u[(i, k)] = ei / norm;
                }
                filled.push(k);
                break;
            }
        }
    }
}

/// Number of singular values above the scaled-epsilon threshold.
pub fn rank_tol(a: &Matrix) -> Result<usize> {
    let s = svd(a)?;
    let thr = rank_threshold(a.rows(), a.cols(), s.sigma_max());
    Ok(s.sigma.iter().filter(|&&x| x > thr).count())
}

/// Default relative cutoff for [`pinv`], matching the rank rule.
pub fn default_rtol(a: &Matrix) -> f64 {
    a.rows().max(a.cols()) as f64 * f64::EPSILON
}

/// Moore-Penrose pseudoinverse; singular values `<= rtol * sigma_max` are dropped.
pub fn pinv(a: &Matrix, rtol: f64) -> Result<Matrix> {
    let s = svd(a)?;
    Ok(pinv_from_svd(&s, rtol))
}

pub fn pinv_from_svd(s: &SvdResult, rtol: f64) -> Matrix {
    let cutoff = rtol * s.sigma_max();
    let (m, n) = (s.u.rows(), s.vt.cols());
    let mut out = Matrix::zeros(n, m);
    for (k, &sk) in s.sigma.iter().enumerate() {
        if sk <= cutoff || sk == 0.0 {
            continue;
        }
        let inv = 1.0 / sk;
        for i in 0..n {
            let vik = s.vt[(k, i)] * inv;
            if vik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[(i, j)] += vik * s.u[(j, k)];
            }
        }
    }
    out
}

/// Orthonormal basis (as columns) of the null space of `a`.
pub fn null_space(a: &Matrix) -> Result<Matrix> {
    let n = a.cols();
    if a.rows() == 0 {
        return Ok(Matrix::identity(n));
    }
    let s = svd(a)?;
    let thr = rank_threshold(a.rows(), a.cols(), s.sigma_max());
    let r = s.sigma.iter().filter(|&&x| x > thr).count();
    if r == n {
        return Ok(Matrix::zeros(n, 0));
    }
    // Householder QR of the row-space basis; trailing columns of Q span the complement.
    let mut basis = Matrix::from_fn(n, r, |i, k| s.vt[(k, i)]);
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(r);
    for k in 0..r {
        let mut x: Vec<f64> = (k..n).map(|i| basis[(i, k)]).collect();
        let alpha = -x[0].signum() * x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x[0] -= alpha;
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            x.iter_mut().for_each(|v| *v /= norm);
        }
        for j in k..r {
            let d: f64 = (k..n).map(|i| x[i - k] * basis[(i, j)]).sum();
            for i in k..n {
                basis[(i, j)] -= 2.0 * d * x[i - k];
            }
        }
        reflectors.push(x);
    }
    let mut out = Matrix::zeros(n, n - r);
    for (c, j) in (r..n).enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        for (k, x) in reflectors.iter().enumerate().rev() {
            let d: f64 = (k..n).map(|i| x[i - k] * e[i]).sum();
            for i in k..n {
                e[i] -= 2.0 * d * x[i - k];
            }
        }
        out.set_column(c, &e);
    }
    Ok(out)
}

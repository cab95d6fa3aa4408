//! Data-only descriptions of a subsystem.
//!
//! With `Y = [U; Phi; X0]` of full row rank, `X1 Y^+` recovers `[B G A]` exactly and
//! any closed loop with decentralized gains can be written through matrices `H1`, `H2`
//! satisfying `Y H1 = [K; 0; I]` and `Y H2 = [0; I; 0]`.

use crate::error::{Error, Result};
use crate::experiment::{check_rank_condition, SubsystemData};
use crate::linalg::{default_rtol, norm2, pinv, Matrix};

/// `Y = [U; Phi; X0]` together with its block sizes.
#[derive(Debug, Clone)]
pub struct StackedData {
    pub y: Matrix,
    pub inputs: usize,
    pub interconnections: usize,
    pub states: usize,
}

impl StackedData {
    pub fn new(data: &SubsystemData) -> Self {
        Self {
            y: data.stacked(),
            inputs: data.inputs(),
            interconnections: data.interconnections(),
            states: data.states(),
        }
    }

    pub fn pinv(&self) -> Result<Matrix> {
        pinv(&self.y, default_rtol(&self.y))
    }

    /// `(m + l + n) x width` selector with identity in the block starting at `row`.
    fn selector(&self, row: usize, width: usize) -> Matrix {
        let mut e = Matrix::zeros(self.y.rows(), width);
        for k in 0..width {
            e[(row + k, k)] = 1.0;
        }
        e
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub b_star: Matrix,
    pub g_star: Matrix,
    pub a_star: Matrix,
    /// `||X1 - [B* G* A*] Y||_F`
    pub residual: f64,
    /// Set when the rank condition failed; the split need not equal the true plant.
    pub rank_deficient: bool,
}

impl Reconstruction {
    pub fn operator(&self) -> Matrix {
        Matrix::hstack(&[&self.b_star, &self.g_star, &self.a_star]).expect("shared height")
    }

    /// `x+ = B* u + G* phi + A* x`
    pub fn predict(&self, u: &[f64], phi: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let z = stack_triplet(
            u,
            phi,
            x,
            self.b_star.cols(),
            self.g_star.cols(),
            self.a_star.cols(),
        )?;
        Ok(self.operator().mul_vec(&z))
    }
}

fn stack_triplet(
    u: &[f64],
    phi: &[f64],
    x: &[f64],
    m: usize,
    l: usize,
    n: usize,
) -> Result<Vec<f64>> {
    if u.len() != m || phi.len() != l || x.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "(u, phi, x) lengths ({}, {}, {}) vs ({m}, {l}, {n})",
            u.len(),
            phi.len(),
            x.len()
        )));
    }
    Ok(u.iter().chain(phi).chain(x).copied().collect())
}

/// Least-squares solution `Xi* = X1 Y^+`, split into `B*`, `G*`, `A*`.
pub fn reconstruct(data: &SubsystemData) -> Result<Reconstruction> {
    let stacked = StackedData::new(data);
    let xi = &data.x1 * &stacked.pinv()?;
    let residual = (&data.x1 - &(&xi * &stacked.y)).frobenius_norm();
    let (m, l, n) = (stacked.inputs, stacked.interconnections, stacked.states);
    Ok(Reconstruction {
        b_star: xi.block(0, 0, n, m),
        g_star: xi.block(0, m, n, l),
        a_star: xi.block(0, m + l, n, n),
        residual,
        rank_deficient: !check_rank_condition(data)?,
    })
}

/// Minimum-norm `H2` with `Y H2 = [0; I; 0]` (`T x l`).
pub fn solve_h2(data: &SubsystemData) -> Result<Matrix> {
    if !check_rank_condition(data)? {
        let required = data.inputs() + data.interconnections() + data.states();
        return Err(Error::RankDeficient {
            rank: crate::experiment::data_rank(data)?,
            required,
        });
    }
    let stacked = StackedData::new(data);
    let e = stacked.selector(stacked.inputs, stacked.interconnections);
    Ok(&stacked.pinv()? * &e)
}

/// `||Y H1 - [K; 0; I]||_F`
pub fn verify_h1(data: &SubsystemData, h1: &Matrix, k: &Matrix) -> Result<f64> {
    let (m, l, n) = (data.inputs(), data.interconnections(), data.states());
    if h1.shape() != (data.samples(), n) || k.shape() != (m, n) {
        return Err(Error::DimensionMismatch(format!(
            "H1 {:?} / K {:?} for T={}, n={n}, m={m}",
            h1.shape(),
            k.shape(),
            data.samples()
        )));
    }
    let target = Matrix::vstack(&[k, &Matrix::zeros(l, n), &Matrix::identity(n)])?;
    Ok((&(&data.stacked() * h1) - &target).frobenius_norm())
}

/// `x+ = X1 Y^+ [u; phi; x]`, evaluated straight from data.
pub fn predict(data: &SubsystemData, u: &[f64], phi: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let z = stack_triplet(
        u,
        phi,
        x,
        data.inputs(),
        data.interconnections(),
        data.states(),
    )?;
    let coeffs = StackedData::new(data).pinv()?.mul_vec(&z);
    let out = data.x1.mul_vec(&coeffs);
    debug_assert!(norm2(&out).is_finite());
    Ok(out)
}

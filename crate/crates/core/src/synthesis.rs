//! Per-subsystem stabilizing gain synthesis from data.
//!
//! For subsystem `i` the decision variable is `Q` (`T x n`), restricted to
//! `Phi Q = 0` with `S = X0 Q` symmetric. The block matrix
//!
//! ```text
//! [ -S     0      Q'X1'   S W' ]
//! [  0    -I      H2'X1'  0    ]
//! [ X1 Q  X1 H2   -S      0    ]
//! [ W S    0      0      -I    ]
//! ```
//!
//! must be negative definite, after which `K = U Q S^-1` stabilizes the interconnected
//! closed loop with Lyapunov matrix `S^-1`.

use crate::error::{Error, Result};
use crate::experiment::{check_rank_condition, data_rank, SubsystemData};
use crate::linalg::{inverse, lambda_max, null_space, sym_eig, Matrix};
use crate::plant::BoundSet;
use crate::representation::solve_h2;
use crate::sdp::{minimize_lmax, AffineFamily, SolverConfig};

/// Tolerance for the equality constraints on a candidate `Q`.
const CONSTRAINT_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LmiProblem {
    pub data: SubsystemData,
    pub h2: Matrix,
    /// `W_ji` stacked over every `j` that reads subsystem `i`'s state (`p x n`).
    pub w_stack: Matrix,
    /// Frobenius-orthonormal basis of `{N : Phi N = 0, X0 N symmetric}`.
    pub basis: Vec<Matrix>,
    pub offset: Matrix,
}

impl LmiProblem {
    pub fn states(&self) -> usize {
        self.data.states()
    }

    pub fn interconnections(&self) -> usize {
        self.data.interconnections()
    }

    pub fn bound_rows(&self) -> usize {
        self.w_stack.rows()
    }

    /// Side length `2n + l + p` of the LMI.
    pub fn lmi_size(&self) -> usize {
        2 * self.states() + self.interconnections() + self.bound_rows()
    }

    /// `offset + sum_k z_k basis[k]`
    pub fn q_from_coordinates(&self, z: &[f64]) -> Matrix {
        assert_eq!(z.len(), self.basis.len());
        let mut q = self.offset.clone();
        for (zk, n) in z.iter().zip(&self.basis) {
            q.add_scaled(*zk, n);
        }
        q
    }
}

/// Matrix of the linear map `vec(Q) -> (vec(Phi Q), {(X0 Q)_ab - (X0 Q)_ba : a < b})`,
/// with `vec` row-major over the `T x n` entries of `Q`.
fn constraint_operator(data: &SubsystemData) -> Matrix {
    let (t, n, l) = (data.samples(), data.states(), data.interconnections());
    let rows = l * n + n * n.saturating_sub(1) / 2;
    let mut op = Matrix::zeros(rows, t * n);
    let mut r = 0;
    for p in 0..l {
        for c in 0..n {
            for s in 0..t {
                op[(r, s * n + c)] = data.phi[(p, s)];
            }
            r += 1;
        }
    }
    for a in 0..n {
        for b in (a + 1)..n {
            for s in 0..t {
                op[(r, s * n + b)] += data.x0[(a, s)];
                op[(r, s * n + a)] -= data.x0[(b, s)];
            }
            r += 1;
        }
    }
    op
}

pub fn build_problem(data: &SubsystemData, bounds: &BoundSet, i: usize) -> Result<LmiProblem> {
    if !check_rank_condition(data)? {
        return Err(Error::RankDeficient {
            rank: data_rank(data)?,
            required: data.inputs() + data.interconnections() + data.states(),
        });
    }
    let (t, n) = (data.samples(), data.states());
    let h2 = solve_h2(data)?;
    let w_stack = bounds.outgoing_stack(i, n);
    if w_stack.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "bounds for subsystem {i} act on {} states, data has {n}",
            w_stack.cols()
        )));
    }
    let null = null_space(&constraint_operator(data))?;
    if null.cols() == 0 {
        return Err(Error::EmptyFeasibleSpace {
            samples: t,
            states: n,
            interconnections: data.interconnections(),
        });
    }
    let basis = (0..null.cols())
        .map(|k| Matrix::from_fn(t, n, |s, c| null[(s * n + c, k)]))
        .collect();
    Ok(LmiProblem {
        data: data.clone(),
        h2,
        w_stack,
        basis,
        offset: Matrix::zeros(t, n),
    })
}

/// Puts the lower-triangular blocks into a symmetric matrix and mirrors them.
fn mirror_blocks(size: usize, lower: &[(usize, usize, &Matrix)]) -> Matrix {
    let mut m = Matrix::zeros(size, size);
    for &(r0, c0, blk) in lower {
        m.set_block(r0, c0, blk);
        if r0 != c0 {
            m.set_block(c0, r0, &blk.transpose());
        }
    }
    m
}

fn lmi_constant(p: &LmiProblem) -> Matrix {
    let (n, l, q) = (p.states(), p.interconnections(), p.bound_rows());
    let x1h2 = &p.data.x1 * &p.h2;
    let minus_il = Matrix::identity(l).scale(-1.0);
    let minus_iq = Matrix::identity(q).scale(-1.0);
    mirror_blocks(
        p.lmi_size(),
        &[
            (n, n, &minus_il),
            (n + l, n, &x1h2),
            (2 * n + l, 2 * n + l, &minus_iq),
        ],
    )
}

fn lmi_linear(p: &LmiProblem, q: &Matrix) -> Matrix {
    let (n, l) = (p.states(), p.interconnections());
    let s = (&p.data.x0 * q).symmetrize();
    let minus_s = s.scale(-1.0);
    let x1q = &p.data.x1 * q;
    let ws = &p.w_stack * &s;
    mirror_blocks(
        p.lmi_size(),
        &[
            (0, 0, &minus_s),
            (n + l, 0, &x1q),
            (n + l, n + l, &minus_s),
            (2 * n + l, 0, &ws),
        ],
    )
}

fn check_admissible(p: &LmiProblem, q: &Matrix) -> Result<()> {
    if q.shape() != (p.data.samples(), p.states()) {
        return Err(Error::DimensionMismatch(format!(
            "Q is {:?}, expected {}x{}",
            q.shape(),
            p.data.samples(),
            p.states()
        )));
    }
    let phi_q = (&p.data.phi * q).frobenius_norm();
    let phi_scale = 1.0 + p.data.phi.frobenius_norm() * q.frobenius_norm();
    if phi_q > CONSTRAINT_TOL * phi_scale {
        return Err(Error::ConstraintViolation(format!(
            "||Phi Q||_F = {phi_q:e}"
        )));
    }
    let s = &p.data.x0 * q;
    let asym = (&s - &s.transpose()).frobenius_norm();
    let s_scale = 1.0 + p.data.x0.frobenius_norm() * q.frobenius_norm();
    if asym > CONSTRAINT_TOL * s_scale {
        return Err(Error::ConstraintViolation(format!(
            "||S - S^T||_F = {asym:e}"
        )));
    }
    Ok(())
}

/// The LMI block matrix at `Q`; exactly symmetric.
pub fn assemble_lmi(p: &LmiProblem, q: &Matrix) -> Result<Matrix> {
    check_admissible(p, q)?;
    let mut m = lmi_constant(p);
    m.add_scaled(1.0, &lmi_linear(p, q));
    Ok(m)
}

/// The LMI as an affine family over the basis coordinates.
pub fn affine_family(p: &LmiProblem) -> Result<AffineFamily> {
    let mut constant = lmi_constant(p);
    constant.add_scaled(1.0, &lmi_linear(p, &p.offset));
    let directions = p.basis.iter().map(|n| lmi_linear(p, n)).collect();
    AffineFamily::new(constant, directions)
}

/// Default strictness margin for `M(Q) < 0`.
///
/// A common positive scaling of the data maps admissible `Q` to `Q / c` and leaves
/// every block of `M` unchanged, so the margin carries no data scale.
pub const DEFAULT_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateStatus {
    Feasible,
    InfeasibleAtTolerance,
}

#[derive(Debug, Clone)]
pub struct SynthesisCertificate {
    pub q: Matrix,
    pub s: Matrix,
    pub k: Matrix,
    pub lambda_max: f64,
    pub lambda_min_s: f64,
    pub epsilon_margin: f64,
    pub iterations: usize,
    pub status: CertificateStatus,
}

impl SynthesisCertificate {
    pub fn is_feasible(&self) -> bool {
        self.status == CertificateStatus::Feasible
    }

    /// `H1 = Q S^-1`
    pub fn h1(&self) -> Result<Matrix> {
        Ok(&self.q * &inverse(&self.s)?)
    }
}

pub fn synthesize(p: &LmiProblem, cfg: &SolverConfig) -> Result<SynthesisCertificate> {
    let family = affine_family(p)?;
    let sol = minimize_lmax(&family, cfg)?;
    let q = p.q_from_coordinates(&sol.z);
    let s = (&p.data.x0 * &q).symmetrize();
    let lmi_max = lambda_max(&assemble_lmi(p, &q)?)?;
    let lambda_min_s = sym_eig(&s)?.min();
    let floor = 1e-8 * p.data.x0.frobenius_norm() * q.frobenius_norm();
    let feasible = lmi_max <= -cfg.epsilon_margin;
    if feasible && lambda_min_s <= floor {
        return Err(Error::SingularS {
            lambda_min: lambda_min_s,
            floor,
        });
    }
    let k = if lambda_min_s > floor {
        &(&p.data.u * &q) * &inverse(&s)?
    } else {
        Matrix::zeros(p.data.inputs(), p.states())
    };
    Ok(SynthesisCertificate {
        q,
        s,
        k,
        lambda_max: lmi_max,
        lambda_min_s,
        epsilon_margin: cfg.epsilon_margin,
        iterations: sol.iterations,
        status: if feasible {
            CertificateStatus::Feasible
        } else {
            CertificateStatus::InfeasibleAtTolerance
        },
    })
}

/// `[[Z1 + W'W, Z2], [Z2', Z3 - I]]` with `P = S^-1`, `H1 = Q P` and
/// `Z1 = H1'X1'P X1 H1 - P`, `Z2 = H1'X1'P X1 H2`, `Z3 = H2'X1'P X1 H2`.
pub fn condensed_schur_matrix(p: &LmiProblem, cert: &SynthesisCertificate) -> Result<Matrix> {
    let pm = inverse(&cert.s)?.symmetrize();
    let h1 = &cert.q * &pm;
    let a_cl = &p.data.x1 * &h1;
    let g = &p.data.x1 * &p.h2;
    let z1 = &(&(&a_cl.transpose() * &pm) * &a_cl) - &pm;
    let z2 = &(&a_cl.transpose() * &pm) * &g;
    let z3 = &(&g.transpose() * &pm) * &g;
    let z1w = &z1 + &(&p.w_stack.transpose() * &p.w_stack);
    let z3i = &z3 - &Matrix::identity(p.interconnections());
    let n = p.states();
    let l = p.interconnections();
    let mut out = Matrix::zeros(n + l, n + l);
    out.set_block(0, 0, &z1w);
    out.set_block(0, n, &z2);
    out.set_block(n, 0, &z2.transpose());
    out.set_block(n, n, &z3i);
    Ok(out.symmetrize())
}

//! Largest-eigenvalue minimization over an affine symmetric matrix family.
//!
//! `f(z) = lambda_max(C + sum_k z_k D_k)` is convex; a unit leading eigenvector `v`
//! gives the subgradient `g_k = v^T D_k v`. The solver runs Polyak-step subgradient
//! descent toward the target `-2 * epsilon_margin` and stops as soon as
//! `f(z) <= -epsilon_margin`.
//!
//! Directions are whitened first (Frobenius Gram matrix, zero modes dropped), so the
//! descent runs in coordinates where the family is isotropic. Returned points are
//! always expressed in the caller's original coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, Matrix};
use crate::numerics::NUMERICS;

/// `M(z) = constant + sum_k z_k * directions[k]`
#[derive(Debug, Clone)]
pub struct AffineFamily {
    constant: Matrix,
    directions: Vec<Matrix>,
}

impl AffineFamily {
    pub fn new(constant: Matrix, directions: Vec<Matrix>) -> Result<Self> {
        constant.ensure_square()?;
        if constant.is_empty() {
            return Err(Error::InvalidParameter("empty affine family".into()));
        }
        for m in std::iter::once(&constant).chain(&directions) {
            if m.shape() != constant.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "family member {:?} vs {:?}",
                    m.shape(),
                    constant.shape()
                )));
            }
            let asym = m.asymmetry();
            if asym > NUMERICS.symmetry_tol {
                return Err(Error::NotSymmetric { asymmetry: asym });
            }
        }
        Ok(Self {
            constant,
            directions,
        })
    }

    pub fn size(&self) -> usize {
        self.constant.rows()
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    pub fn constant(&self) -> &Matrix {
        &self.constant
    }

    pub fn directions(&self) -> &[Matrix] {
        &self.directions
    }

    pub fn eval(&self, z: &[f64]) -> Matrix {
        assert_eq!(z.len(), self.dim(), "coordinate length mismatch");
        let mut m = self.constant.clone();
        for (zk, d) in z.iter().zip(&self.directions) {
            if *zk != 0.0 {
                m.add_scaled(*zk, d);
            }
        }
        m
    }

    pub fn lambda_max(&self, z: &[f64]) -> Result<f64> {
        Ok(sym_eig(&self.eval(z).symmetrize())?.max())
    }

    /// `(f(z), g)` with `g_k = v^T D_k v` for the first leading eigenvector `v`.
    pub fn value_and_subgradient(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let eig = sym_eig(&self.eval(z).symmetrize())?;
        let v = eig.leading_vector();
        let g = self
            .directions
            .iter()
            .map(|d| quadratic_form(d, &v))
            .collect();
        Ok((eig.max(), g))
    }
}

fn quadratic_form(a: &Matrix, v: &[f64]) -> f64 {
    let av = a.mul_vec(v);
    av.iter().zip(v).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// `z <- z - (f(z) - target) / ||g||^2 * g`
    PolyakWithTarget,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Iteration cap per start.
    pub max_iters: usize,
    pub epsilon_margin: f64,
    /// Random starts tried after the start at `z = 0`.
    pub restarts: usize,
    pub seed: u64,
    pub step_rule: StepRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            epsilon_margin: 1e-6,
            restarts: 8,
            seed: 0,
            step_rule: StepRule::PolyakWithTarget,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.epsilon_margin > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "solver config max_iters={} epsilon_margin={}",
                self.max_iters, self.epsilon_margin
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmaxSolution {
    pub z: Vec<f64>,
    pub lambda_max: f64,
    /// Total iterations across all starts.
    pub iterations: usize,
    /// `lambda_max <= -epsilon_margin` was reached.
    pub reached_margin: bool,
}

/// Linear change of variables `z = T w` under which the directions are Frobenius-orthonormal.
struct Whitening {
    transform: Matrix,
    family: AffineFamily,
}

fn whiten(family: &AffineFamily) -> Result<Whitening> {
    let d = family.dim();
    if d == 0 {
        return Ok(Whitening {
            transform: Matrix::zeros(0, 0),
            family: family.clone(),
        });
    }
    let dirs = family.directions();
    let gram = Matrix::from_fn(d, d, |i, j| dirs[i].dot(&dirs[j])).symmetrize();
    let eig = sym_eig(&gram)?;
    let top = eig.max();
    let keep: Vec<usize> = if top > 0.0 {
        (0..d)
            .filter(|&k| eig.values[k] > top * 1e-13 * d as f64)
            .collect()
    } else {
        Vec::new()
    };
    let transform = Matrix::from_fn(d, keep.len(), |i, j| {
        eig.vectors[(i, keep[j])] / eig.values[keep[j]].sqrt()
    });
    let size = family.size();
    let reduced = (0..keep.len())
        .map(|j| {
            let mut e = Matrix::zeros(size, size);
            for (k, dk) in dirs.iter().enumerate() {
                let c = transform[(k, j)];
                if c != 0.0 {
                    e.add_scaled(c, dk);
                }
            }
            e.symmetrize()
        })
        .collect();
    Ok(Whitening {
        transform,
        family: AffineFamily {
            constant: family.constant.clone(),
            directions: reduced,
        },
    })
}

struct Run {
    w: Vec<f64>,
    value: f64,
    iterations: usize,
}

fn polyak_descent(family: &AffineFamily, start: Vec<f64>, cfg: &SolverConfig) -> Result<Run> {
    let target = -2.0 * cfg.epsilon_margin;
    let mut w = start;
    let (mut f, mut g) = family.value_and_subgradient(&w)?;
    let mut best = Run {
        w: w.clone(),
        value: f,
        iterations: 0,
    };
    for it in 1..=cfg.max_iters {
        if best.value <= -cfg.epsilon_margin {
            break;
        }
        let gg: f64 = g.iter().map(|x| x * x).sum();
        if gg == 0.0 {
            // zero subgradient: w minimizes f
            break;
        }
        let step = match cfg.step_rule {
            StepRule::PolyakWithTarget => (f - target) / gg,
        };
        for (wk, gk) in w.iter_mut().zip(&g) {
            *wk -= step * gk;
        }
        (f, g) = family.value_and_subgradient(&w)?;
        best.iterations = it;
        if f < best.value {
            best.value = f;
            best.w.clone_from(&w);
        }
    }
    Ok(best)
}

/// Minimizes `lambda_max(M(z))` from `z = 0` and `cfg.restarts` seeded random starts.
pub fn minimize_lmax(family: &AffineFamily, cfg: &SolverConfig) -> Result<LmaxSolution> {
    cfg.validate()?;
    let white = whiten(family)?;
    let r = white.family.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best: Option<Run> = None;
    let mut iterations = 0;
    for start in 0..=cfg.restarts {
        let w0 = if start == 0 {
            vec![0.0; r]
        } else {
            (0..r).map(|_| rng.gen_range(-1.0..=1.0)).collect()
        };
        let run = polyak_descent(&white.family, w0, cfg)?;
        iterations += run.iterations;
        // strict comparison keeps the earliest start on ties
        if best.as_ref().is_none_or(|b| run.value < b.value) {
            best = Some(run);
        }
        let b = best.as_ref().expect("set above");
        if b.value <= -cfg.epsilon_margin || r == 0 {
            break;
        }
    }
    let best = best.expect("at least one start");
    let z = if family.dim() == 0 {
        Vec::new()
    } else {
        white.transform.mul_vec(&best.w)
    };
    // re-evaluate in original coordinates so the report matches `certify`
    let lambda_max = family.lambda_max(&z)?;
    Ok(LmaxSolution {
        z,
        lambda_max,
        iterations,
        reached_margin: lambda_max <= -cfg.epsilon_margin,
    })
}

/// Independent check: `lambda_max(M(z)) <= -epsilon`.
pub fn certify(family: &AffineFamily, z: &[f64], epsilon: f64) -> Result<bool> {
    if z.len() != family.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} coordinates for a {}-dimensional family",
            z.len(),
            family.dim()
        )));
    }
    Ok(family.lambda_max(z)? <= -epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d() -> AffineFamily {
        AffineFamily::new(
            Matrix::from_diag(&[-1.0, -1.0]),
            vec![Matrix::from_diag(&[1.0, -1.0])],
        )
        .unwrap()
    }

    #[test]
    fn one_dimensional_optimum() {
        let cfg = SolverConfig {
            epsilon_margin: 0.999,
            restarts: 0,
            max_iters: 200,
            ..Default::default()
        };
        let sol = minimize_lmax(&one_d(), &cfg).unwrap();
        assert!(sol.lambda_max <= -0.99);
        assert!(sol.z[0].abs() < 1e-2);
    }

    #[test]
    fn one_dimensional_from_far_start() {
        // shift so that z = 0 is far from the optimum at z = 5
        let fam = AffineFamily::new(
            Matrix::from_diag(&[-6.0, 4.0]),
            vec![Matrix::from_diag(&[1.0, -1.0])],
        )
        .unwrap();
        let cfg = SolverConfig {
            epsilon_margin: 0.5,
            restarts: 0,
            max_iters: 200,
            ..Default::default()
        };
        let sol = minimize_lmax(&fam, &cfg).unwrap();
        assert!(sol.lambda_max <= -0.99, "{}", sol.lambda_max);
        assert!(sol.iterations <= 200);
    }

    #[test]
    fn constant_families() {
        let neg = AffineFamily::new(Matrix::identity(3).scale(-1.0), vec![]).unwrap();
        let sol = minimize_lmax(&neg, &SolverConfig::default()).unwrap();
        assert_eq!(sol.lambda_max, -1.0);
        assert!(sol.reached_margin);
        assert_eq!(sol.iterations, 0);

        let pos = AffineFamily::new(Matrix::identity(2), vec![Matrix::zeros(2, 2)]).unwrap();
        let sol = minimize_lmax(
            &pos,
            &SolverConfig {
                max_iters: 50,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(sol.lambda_max, 1.0);
        assert!(!sol.reached_margin);
    }

    #[test]
    fn certify_cases() {
        let zero = AffineFamily::new(Matrix::zeros(2, 2), vec![Matrix::identity(2)]).unwrap();
        assert!(!certify(&zero, &[0.0], 1e-9).unwrap());
        assert!(certify(&zero, &[-1.0], 0.5).unwrap());
        assert!(certify(&zero, &[], 0.5).is_err());
    }

    #[test]
    fn rejects_asymmetric_members() {
        let bad = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]);
        assert!(AffineFamily::new(Matrix::zeros(2, 2), vec![bad]).is_err());
    }

    #[test]
    fn degenerate_directions_are_handled() {
        // two identical directions plus a zero one; optimum -1 along their sum
        let d = Matrix::from_diag(&[1.0, -1.0]);
        let fam = AffineFamily::new(
            Matrix::from_diag(&[-3.0, 1.0]),
            vec![d.clone(), d, Matrix::zeros(2, 2)],
        )
        .unwrap();
        let cfg = SolverConfig {
            epsilon_margin: 0.45,
            ..Default::default()
        };
        let sol = minimize_lmax(&fam, &cfg).unwrap();
        assert!(sol.reached_margin, "{}", sol.lambda_max);
        assert!(certify(&fam, &sol.z, 0.45).unwrap());
    }
}

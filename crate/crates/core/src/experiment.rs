//! Open-loop excitation experiments and the per-subsystem data matrices they produce.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{norm2, rank_tol, Matrix};
use crate::plant::{PlantModel, TimeDomain};

/// State norm beyond which a rollout is declared divergent.
pub const OVERFLOW_GUARD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationPlan {
    pub samples: usize,
    pub amplitude: f64,
    pub seed: u64,
}

impl ExcitationPlan {
    /// `(m + l)(n + 1) + n`, the sample count needed for excitation of order `n + 1`.
    pub fn min_samples(n: usize, m: usize, l: usize) -> usize {
        (m + l) * (n + 1) + n
    }

    pub fn is_long_enough_for(&self, plant: &PlantModel) -> bool {
        plant.subsystems().iter().all(|s| {
            self.samples >= Self::min_samples(s.states(), s.inputs(), s.interconnections())
        })
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, amplitude: f64) -> Matrix {
    if amplitude == 0.0 {
        return Matrix::zeros(rows, cols);
    }
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-amplitude..=amplitude))
}

/// Seeded i.i.d. inputs, uniform on `[-amplitude, amplitude]`, shape `m x T`.
pub fn generate_excitation(plan: &ExcitationPlan, inputs: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    uniform_matrix(&mut rng, inputs, plan.samples, plan.amplitude)
}

/// One input matrix per subsystem, drawn from a single seeded stream in subsystem order.
pub fn generate_inputs(plan: &ExcitationPlan, plant: &PlantModel) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    plant
        .subsystems()
        .iter()
        .map(|s| uniform_matrix(&mut rng, s.inputs(), plan.samples, plan.amplitude))
        .collect()
}

/// Seeded initial state with every entry uniform on `[lo, hi]`.
pub fn random_state(seed: u64, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(lo..=hi)).collect()
}

/// Experiment record of one subsystem over `T` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemData {
    pub u: Matrix,
    pub phi: Matrix,
    pub x0: Matrix,
    pub x1: Matrix,
}

impl SubsystemData {
    pub fn new(u: Matrix, phi: Matrix, x0: Matrix, x1: Matrix) -> Result<Self> {
        let t = u.cols();
        if phi.cols() != t || x0.cols() != t || x1.cols() != t {
            return Err(Error::DimensionMismatch(format!(
                "data column counts U {} Phi {} X0 {} X1 {}",
                t,
                phi.cols(),
                x0.cols(),
                x1.cols()
            )));
        }
        if x0.rows() != x1.rows() {
            return Err(Error::DimensionMismatch(format!(
                "X0 has {} rows, X1 has {}",
                x0.rows(),
                x1.rows()
            )));
        }
        Ok(Self { u, phi, x0, x1 })
    }

    pub fn states(&self) -> usize {
        self.x0.rows()
    }

    pub fn inputs(&self) -> usize {
        self.u.rows()
    }

    pub fn interconnections(&self) -> usize {
        self.phi.rows()
    }

    pub fn samples(&self) -> usize {
        self.u.cols()
    }

    /// `[U; Phi; X0]`
    pub fn stacked(&self) -> Matrix {
        Matrix::vstack(&[&self.u, &self.phi, &self.x0]).expect("validated widths")
    }

    /// Multiplies every recorded matrix by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            u: self.u.scale(factor),
            phi: self.phi.scale(factor),
            x0: self.x0.scale(factor),
            x1: self.x1.scale(factor),
        }
    }
}

/// Rolls the discrete plant forward `T` steps and records per-subsystem data.
pub fn collect(
    plant: &PlantModel,
    inputs: &[Matrix],
    x_init: &[f64],
    samples: usize,
) -> Result<Vec<SubsystemData>> {
    if !matches!(plant.domain(), TimeDomain::Discrete { .. }) {
        return Err(Error::InvalidParameter(
            "data collection needs a discrete plant".into(),
        ));
    }
    if inputs.len() != plant.len() {
        return Err(Error::InvalidParameter(format!(
            "{} input matrices for {} subsystems",
            inputs.len(),
            plant.len()
        )));
    }
    for (i, (u, s)) in inputs.iter().zip(plant.subsystems()).enumerate() {
        if u.rows() != s.inputs() || u.cols() < samples {
            return Err(Error::InvalidParameter(format!(
                "subsystem {i}: input matrix {:?} cannot cover {samples} samples of {} inputs",
                u.shape(),
                s.inputs()
            )));
        }
    }
    if x_init.len() != plant.total_states() {
        return Err(Error::InvalidParameter(format!(
            "initial state length {} vs {} states",
            x_init.len(),
            plant.total_states()
        )));
    }

    let mut u_rec: Vec<Matrix> = plant
        .subsystems()
        .iter()
        .map(|s| Matrix::zeros(s.inputs(), samples))
        .collect();
    let mut phi_rec: Vec<Matrix> = plant
        .subsystems()
        .iter()
        .map(|s| Matrix::zeros(s.interconnections(), samples))
        .collect();
    let mut x0_rec: Vec<Matrix> = plant
        .subsystems()
        .iter()
        .map(|s| Matrix::zeros(s.states(), samples))
        .collect();
    let mut x1_rec = x0_rec.clone();

    let mut x = x_init.to_vec();
    let mut u_full = vec![0.0; plant.total_inputs()];
    for k in 0..samples {
        for i in 0..plant.len() {
            let off = plant.input_offset(i);
            for r in 0..inputs[i].rows() {
                u_full[off + r] = inputs[i][(r, k)];
                u_rec[i][(r, k)] = inputs[i][(r, k)];
            }
            for (r, v) in plant.eval_phi(i, &x)?.into_iter().enumerate() {
                phi_rec[i][(r, k)] = v;
            }
            for (r, &v) in plant.local_state(i, &x).iter().enumerate() {
                x0_rec[i][(r, k)] = v;
            }
        }
        x = plant.advance(&x, &u_full)?;
        let norm = norm2(&x);
        if !(norm <= OVERFLOW_GUARD) {
            return Err(Error::UnstableRollout { step: k + 1, norm });
        }
        for (i, rec) in x1_rec.iter_mut().enumerate() {
            for (r, &v) in plant.local_state(i, &x).iter().enumerate() {
                rec[(r, k)] = v;
            }
        }
    }

    u_rec
        .into_iter()
        .zip(phi_rec)
        .zip(x0_rec)
        .zip(x1_rec)
        .map(|(((u, phi), x0), x1)| SubsystemData::new(u, phi, x0, x1))
        .collect()
}

/// Block-Hankel matrix of depth `L`: block row `r` holds `s(r), ..., s(r + T - L)`.
pub fn hankel(signal: &Matrix, depth: usize) -> Result<Matrix> {
    let (n, t) = signal.shape();
    if depth == 0 || depth > t {
        return Err(Error::InvalidParameter(format!(
            "Hankel depth {depth} for a signal of length {t}"
        )));
    }
    let cols = t - depth + 1;
    Ok(Matrix::from_fn(n * depth, cols, |r, c| {
        signal[(r % n, c + r / n)]
    }))
}

/// Persistency of excitation of order `L`: the depth-`L` Hankel matrix has full row rank.
pub fn check_pe(signal: &Matrix, depth: usize) -> Result<bool> {
    let h = hankel(signal, depth)?;
    if h.rows() > h.cols() || h.max_abs() == 0.0 {
        return Ok(false);
    }
    Ok(rank_tol(&h)? == h.rows())
}

/// Rank of `[U; Phi; X0]`.
pub fn data_rank(data: &SubsystemData) -> Result<usize> {
    let y = data.stacked();
    if y.max_abs() == 0.0 {
        return Ok(0);
    }
    rank_tol(&y)
}

/// `rank [U; Phi; X0] == n + l + m`.
pub fn check_rank_condition(data: &SubsystemData) -> Result<bool> {
    let required = data.inputs() + data.interconnections() + data.states();
    if data.samples() < required {
        return Ok(false);
    }
    Ok(data_rank(data)? == required)
}

/// Successful excitation run: the data plus the seed and attempt count that produced it.
#[derive(Debug, Clone)]
pub struct Collection {
    pub data: Vec<SubsystemData>,
    pub inputs: Vec<Matrix>,
    pub seed: u64,
    pub attempts: usize,
}

/// Excite, collect and check the rank condition; on failure retry with the next seed.
/// Plans shorter than `(m + l)(n + 1) + n` for any subsystem are refused up front.
pub fn collect_with_retry(
    plant: &PlantModel,
    plan: &ExcitationPlan,
    x_init: &[f64],
    max_retries: usize,
) -> Result<Collection> {
    for (i, s) in plant.subsystems().iter().enumerate() {
        let required = ExcitationPlan::min_samples(s.states(), s.inputs(), s.interconnections());
        if plan.samples < required {
            return Err(Error::InsufficientSamples {
                samples: plan.samples,
                required,
                subsystem: i,
            });
        }
    }
    let mut failing = Vec::new();
    for attempt in 0..=max_retries {
        let seed = plan.seed.wrapping_add(attempt as u64);
        let trial = ExcitationPlan { seed, ..*plan };
        let inputs = generate_inputs(&trial, plant);
        let data = collect(plant, &inputs, x_init, plan.samples)?;
        failing.clear();
        for (i, d) in data.iter().enumerate() {
            if !check_rank_condition(d)? {
                failing.push(i);
            }
        }
        if failing.is_empty() {
            return Ok(Collection {
                data,
                inputs,
                seed,
                attempts: attempt + 1,
            });
        }
    }
    Err(Error::RankConditionNotMet {
        attempts: max_retries + 1,
        failing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{build_spring_mass_chain, discretize_zoh, ChainParams};

    fn chain() -> PlantModel {
        discretize_zoh(
            &build_spring_mass_chain(ChainParams::default()).unwrap(),
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn excitation_is_deterministic_and_bounded() {
        let plan = ExcitationPlan {
            samples: 40,
            amplitude: 1.0,
            seed: 7,
        };
        let a = generate_excitation(&plan, 2);
        assert_eq!(a, generate_excitation(&plan, 2));
        assert!(a.max_abs() <= 1.0);
        let zero = generate_excitation(
            &ExcitationPlan {
                amplitude: 0.0,
                ..plan
            },
            1,
        );
        assert_eq!(zero, Matrix::zeros(1, 40));
    }

    #[test]
    fn random_signal_is_pe_of_order_three() {
        for seed in 0..20 {
            let plan = ExcitationPlan {
                samples: 40,
                amplitude: 1.0,
                seed,
            };
            assert!(check_pe(&generate_excitation(&plan, 1), 3).unwrap());
        }
        let plan = ExcitationPlan {
            samples: 20,
            amplitude: 1.0,
            seed: 3,
        };
        assert!(check_pe(&generate_excitation(&plan, 1), 3).unwrap());
    }

    #[test]
    fn hankel_layouts() {
        let s = Matrix::row_vector(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            hankel(&s, 2).unwrap(),
            Matrix::from_rows(&[[1.0, 2.0, 3.0], [2.0, 3.0, 4.0]])
        );
        assert_eq!(hankel(&s, 1).unwrap(), s);
        assert_eq!(
            hankel(&s, 4).unwrap(),
            Matrix::column_vector(&[1.0, 2.0, 3.0, 4.0])
        );
        assert!(hankel(&s, 5).is_err());
        let two = Matrix::from_rows(&[[1.0, 2.0, 3.0], [10.0, 20.0, 30.0]]);
        assert_eq!(hankel(&two, 2).unwrap().rows(), 4);
    }

    #[test]
    fn pe_negative_cases() {
        let constant = Matrix::row_vector(&[2.0; 10]);
        assert!(!check_pe(&constant, 2).unwrap());
        let zero = Matrix::zeros(1, 10);
        for l in 1..5 {
            assert!(!check_pe(&zero, l).unwrap());
        }
    }

    #[test]
    fn equilibrium_rollout_is_all_zero() {
        let p = chain();
        let inputs: Vec<Matrix> = (0..5).map(|_| Matrix::zeros(1, 12)).collect();
        let data = collect(&p, &inputs, &[0.0; 10], 12).unwrap();
        for d in &data {
            assert_eq!(d.stacked().max_abs(), 0.0);
            assert_eq!(d.x1.max_abs(), 0.0);
            assert!(!check_rank_condition(d).unwrap());
        }
    }

    #[test]
    fn short_records_fail_rank() {
        let p = chain();
        let plan = ExcitationPlan {
            samples: 4,
            amplitude: 1.0,
            seed: 1,
        };
        let x0 = random_state(1, 10, 49.0, 51.0);
        let data = collect(&p, &generate_inputs(&plan, &p), &x0, 4).unwrap();
        assert!(!check_rank_condition(&data[2]).unwrap());
        assert!(matches!(
            collect_with_retry(&p, &plan, &x0, 10),
            Err(Error::InsufficientSamples {
                samples: 4,
                required: 8,
                subsystem: 0
            })
        ));
    }

    #[test]
    fn degenerate_excitation_exhausts_retries() {
        let p = chain();
        let plan = ExcitationPlan {
            samples: 40,
            amplitude: 0.0,
            seed: 1,
        };
        assert!(matches!(
            collect_with_retry(&p, &plan, &[0.0; 10], 3),
            Err(Error::RankConditionNotMet { attempts: 4, .. })
        ));
    }

    #[test]
    fn rollout_guard_trips() {
        let p = chain();
        let inputs: Vec<Matrix> = (0..5).map(|_| Matrix::zeros(1, 3)).collect();
        let err = collect(&p, &inputs, &[1e13; 10], 3).unwrap_err();
        assert!(matches!(err, Error::UnstableRollout { step: 1, .. }));
    }

    #[test]
    fn collect_rejects_continuous_plant() {
        let p = build_spring_mass_chain(ChainParams::default()).unwrap();
        let inputs: Vec<Matrix> = (0..5).map(|_| Matrix::zeros(1, 3)).collect();
        assert!(collect(&p, &inputs, &[0.0; 10], 3).is_err());
    }
}

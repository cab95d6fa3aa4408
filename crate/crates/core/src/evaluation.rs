//! Closed-loop certification and tracking simulation.

use crate::error::{Error, Result};
use crate::experiment::OVERFLOW_GUARD;
use crate::linalg::{inverse, norm2, spectral_radius, sym_eig, Matrix};
use crate::plant::{BoundSet, PlantModel, TimeDomain};

/// Discrete plant under decentralized feedback `u_i = K_i x_i`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub plant: PlantModel,
    pub gains: Vec<Matrix>,
    pub s_blocks: Vec<Matrix>,
}

impl ClosedLoop {
    pub fn new(plant: PlantModel, gains: Vec<Matrix>, s_blocks: Vec<Matrix>) -> Result<Self> {
        if plant.domain() == TimeDomain::Continuous {
            return Err(Error::InvalidParameter(
                "closed loop requires a discrete plant".into(),
            ));
        }
        check_gains(&plant, &gains)?;
        if s_blocks.len() != plant.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} S blocks for {} subsystems",
                s_blocks.len(),
                plant.len()
            )));
        }
        for (i, (s, sub)) in s_blocks.iter().zip(plant.subsystems()).enumerate() {
            if s.shape() != (sub.states(), sub.states()) {
                return Err(Error::DimensionMismatch(format!(
                    "S_{i} is {:?}, subsystem has {} states",
                    s.shape(),
                    sub.states()
                )));
            }
        }
        Ok(Self {
            plant,
            gains,
            s_blocks,
        })
    }

    /// Stacked input `[K_1 e_1; ...; K_M e_M]`.
    pub fn control(&self, error: &[f64]) -> Vec<f64> {
        self.plant
            .split_state(error)
            .into_iter()
            .zip(&self.gains)
            .flat_map(|(e, k)| k.mul_vec(e))
            .collect()
    }
}

fn check_gains(plant: &PlantModel, gains: &[Matrix]) -> Result<()> {
    if gains.len() != plant.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gains for {} subsystems",
            gains.len(),
            plant.len()
        )));
    }
    for (i, (k, s)) in gains.iter().zip(plant.subsystems()).enumerate() {
        if k.shape() != (s.inputs(), s.states()) {
            return Err(Error::DimensionMismatch(format!(
                "K_{i} is {:?}, expected {}x{}",
                k.shape(),
                s.inputs(),
                s.states()
            )));
        }
    }
    Ok(())
}

/// Global closed-loop matrix with blocks `A_i + B_i K_i` and `G_ij J_ij`.
pub fn assemble_closed_loop_matrix(plant: &PlantModel, gains: &[Matrix]) -> Result<Matrix> {
    check_gains(plant, gains)?;
    let n = plant.total_states();
    let mut out = Matrix::zeros(n, n);
    for (i, (s, k)) in plant.subsystems().iter().zip(gains).enumerate() {
        let oi = plant.state_offset(i);
        out.set_block(oi, oi, &(&s.a + &(&s.b * k)));
        for ((&j, g), map) in s.neighbors.iter().zip(&s.g_blocks).zip(&s.g_maps) {
            let jac = map
                .jacobian()
                .ok_or(Error::NonlinearInterconnection { from: j, to: i })?;
            let oj = plant.state_offset(j);
            let blk = &out.block(oi, oj, s.states(), plant.subsystem(j).states()) + &(g * jac);
            out.set_block(oi, oj, &blk);
        }
    }
    Ok(out)
}

/// `rho(A_i + B_i K_i)` for each subsystem in isolation.
pub fn local_spectral_radii(plant: &PlantModel, gains: &[Matrix]) -> Result<Vec<f64>> {
    check_gains(plant, gains)?;
    plant
        .subsystems()
        .iter()
        .zip(gains)
        .map(|(s, k)| spectral_radius(&(&s.a + &(&s.b * k))))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub errors: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub phis: Vec<Vec<f64>>,
    /// `V = sum_i e_i' S_i^-1 e_i`
    pub lyapunov: Vec<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// First time after which every velocity error stays within `tol`.
    /// Velocity is taken as the second state of each subsystem.
    pub fn settling_time(&self, plant: &PlantModel, tol: f64) -> Option<f64> {
        let within = |e: &Vec<f64>| {
            plant
                .split_state(e)
                .iter()
                .all(|ei| ei.len() < 2 || ei[1].abs() <= tol)
        };
        let last_bad = self.errors.iter().rposition(|e| !within(e));
        match last_bad {
            None => self.times.first().copied(),
            Some(k) if k + 1 < self.len() => Some(self.times[k + 1]),
            Some(_) => None,
        }
    }
}

fn lyapunov_weights(s_blocks: &[Matrix]) -> Result<Vec<Matrix>> {
    s_blocks
        .iter()
        .map(|s| {
            let lmin = sym_eig(s)?.min();
            if !(lmin > 0.0) {
                return Err(Error::SingularS {
                    lambda_min: lmin,
                    floor: 0.0,
                });
            }
            Ok(inverse(s)?.symmetrize())
        })
        .collect()
}

fn lyapunov_value(plant: &PlantModel, weights: &[Matrix], e: &[f64]) -> f64 {
    plant
        .split_state(e)
        .into_iter()
        .zip(weights)
        .map(|(ei, p)| {
            ei.iter()
                .zip(p.mul_vec(ei))
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .sum()
}

/// Runs the loop for `round(duration / Ts)` steps against the ramp
/// `s_r(k) = s_r(0) + v_r k Ts`, with `s_r(0)` the mean initial position.
///
/// Each subsystem's first state is its position and second its velocity; error
/// components beyond the second are regulated to zero.
pub fn simulate_tracking(
    cl: &ClosedLoop,
    v_r: f64,
    x_init: &[f64],
    duration: f64,
) -> Result<Trace> {
    let plant = &cl.plant;
    let ts = plant
        .sampling_time()
        .ok_or_else(|| Error::InvalidParameter("closed loop requires a discrete plant".into()))?;
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::InvalidParameter(format!("duration {duration}")));
    }
    if !v_r.is_finite() {
        return Err(Error::InvalidParameter(format!("reference velocity {v_r}")));
    }
    if x_init.len() != plant.total_states() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has length {}, plant has {} states",
            x_init.len(),
            plant.total_states()
        )));
    }
    let weights = lyapunov_weights(&cl.s_blocks)?;
    let positions: Vec<f64> = plant
        .split_state(x_init)
        .iter()
        .filter_map(|x| x.first().copied())
        .collect();
    let s_r0 = positions.iter().sum::<f64>() / positions.len().max(1) as f64;
    let steps = (duration / ts).round() as usize;

    let mut trace = Trace::default();
    let mut x = x_init.to_vec();
    for k in 0..=steps {
        let s_r = s_r0 + v_r * k as f64 * ts;
        let mut e = Vec::with_capacity(x.len());
        for xi in plant.split_state(&x) {
            for (c, v) in xi.iter().enumerate() {
                e.push(match c {
                    0 => v - s_r,
                    1 => v - v_r,
                    _ => *v,
                });
            }
        }
        let u = cl.control(&e);
        let phi = (0..plant.len())
            .map(|i| plant.eval_phi(i, &x))
            .collect::<Result<Vec<_>>>()?
            .concat();
        trace.times.push(k as f64 * ts);
        trace.lyapunov.push(lyapunov_value(plant, &weights, &e));
        trace.states.push(x.clone());
        trace.errors.push(e);
        trace.phis.push(phi);
        if k < steps {
            let next = plant.advance(&x, &u)?;
            let norm = norm2(&next);
            if !(norm <= OVERFLOW_GUARD) {
                return Err(Error::UnstableRollout { step: k + 1, norm });
            }
            x = next;
        }
        trace.inputs.push(u);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovReport {
    /// Largest `V(k+1) - V(k)` over steps whose error norm exceeds the floor.
    pub max_delta: f64,
    /// Steps with `dV >= 0` and error norm above the floor.
    pub violations: usize,
    /// Steps skipped because the error norm is at or below the floor.
    pub boundary: usize,
}

/// Error-norm floor below which strict decrease is not required.
pub const LYAPUNOV_FLOOR: f64 = 1e-9;

/// Recomputes `V` along the error trajectory and counts non-decreasing steps.
pub fn lyapunov_check(
    trace: &Trace,
    plant: &PlantModel,
    s_blocks: &[Matrix],
) -> Result<LyapunovReport> {
    let weights = lyapunov_weights(s_blocks)?;
    let values: Vec<f64> = trace
        .errors
        .iter()
        .map(|e| lyapunov_value(plant, &weights, e))
        .collect();
    let mut report = LyapunovReport {
        max_delta: f64::NEG_INFINITY,
        violations: 0,
        boundary: 0,
    };
    for k in 0..values.len().saturating_sub(1) {
        if norm2(&trace.errors[k]) <= LYAPUNOV_FLOOR {
            report.boundary += 1;
            continue;
        }
        let dv = values[k + 1] - values[k];
        report.max_delta = report.max_delta.max(dv);
        if dv >= 0.0 {
            report.violations += 1;
        }
    }
    Ok(report)
}

fn squared(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

/// `Theta_i(k) = sum_j ||W_ij x_j||^2 - ||phi_i||^2` for every subsystem.
pub fn theta(plant: &PlantModel, bounds: &BoundSet, x: &[f64], phi: &[f64]) -> Result<Vec<f64>> {
    let mut off = 0;
    let mut out = Vec::with_capacity(plant.len());
    for (i, s) in plant.subsystems().iter().enumerate() {
        let l = s.interconnections();
        let mut bound = 0.0;
        for &j in &s.neighbors {
            let w = bounds.get(i, j).ok_or_else(|| {
                Error::InvalidParameter(format!("no bound for interconnection {j} -> {i}"))
            })?;
            bound += squared(&w.mul_vec(plant.local_state(j, x)));
        }
        out.push(bound - squared(&phi[off..off + l]));
        off += l;
    }
    Ok(out)
}

/// `Theta_hat_i(k) = ||W_i x_i||^2 - ||phi_i||^2` with `W_i` the outgoing stack.
pub fn theta_hat(
    plant: &PlantModel,
    bounds: &BoundSet,
    x: &[f64],
    phi: &[f64],
) -> Result<Vec<f64>> {
    let mut off = 0;
    let mut out = Vec::with_capacity(plant.len());
    for (i, s) in plant.subsystems().iter().enumerate() {
        let l = s.interconnections();
        let w = bounds.outgoing_stack(i, s.states());
        out.push(squared(&w.mul_vec(plant.local_state(i, x))) - squared(&phi[off..off + l]));
        off += l;
    }
    Ok(out)
}

/// Counts `(i, k)` with `Theta_i(k) < -1e-9`.
pub fn theta_check(trace: &Trace, plant: &PlantModel, bounds: &BoundSet) -> Result<usize> {
    let mut violations = 0;
    for (x, phi) in trace.states.iter().zip(&trace.phis) {
        violations += theta(plant, bounds, x, phi)?
            .into_iter()
            .filter(|t| *t < -1e-9)
            .count();
    }
    Ok(violations)
}

/// Writes `time, s_1..s_M, v_1..v_M, u_1..u_M, V`, one row per step.
pub fn write_trace_csv<W: std::io::Write>(
    out: &mut W,
    trace: &Trace,
    plant: &PlantModel,
) -> Result<()> {
    if plant.subsystems().iter().any(|s| s.states() != 2) {
        return Err(Error::DimensionMismatch(
            "trace export expects position/velocity subsystems".into(),
        ));
    }
    let m = plant.len();
    let mut header = vec!["time".to_string()];
    header.extend((1..=m).map(|i| format!("s_{i}")));
    header.extend((1..=m).map(|i| format!("v_{i}")));
    let inputs = plant.total_inputs();
    if inputs == m {
        header.extend((1..=m).map(|i| format!("u_{i}")));
    } else {
        header.extend((1..=inputs).map(|i| format!("u_{i}")));
    }
    header.push("V".into());
    writeln!(out, "{}", header.join(","))?;
    for k in 0..trace.len() {
        let x = &trace.states[k];
        let mut row = vec![trace.times[k].to_string()];
        row.extend((0..m).map(|i| x[2 * i].to_string()));
        row.extend((0..m).map(|i| x[2 * i + 1].to_string()));
        row.extend(trace.inputs[k].iter().map(f64::to_string));
        row.push(trace.lyapunov[k].to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
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

    fn identity_s(plant: &PlantModel) -> Vec<Matrix> {
        plant
            .subsystems()
            .iter()
            .map(|s| Matrix::identity(s.states()))
            .collect()
    }

    fn pd_gains(plant: &PlantModel) -> Vec<Matrix> {
        plant
            .subsystems()
            .iter()
            .map(|_| Matrix::from_rows(&[[-400.0, -90.0]]))
            .collect()
    }

    #[test]
    fn open_loop_is_unstable() {
        let plant = chain();
        let zero: Vec<Matrix> = (0..5).map(|_| Matrix::zeros(1, 2)).collect();
        let a = assemble_closed_loop_matrix(&plant, &zero).unwrap();
        assert_eq!(a.shape(), (10, 10));
        assert!(spectral_radius(&a).unwrap() > 1.0);

        let free = discretize_zoh(
            &build_spring_mass_chain(ChainParams {
                spring: 0.0,
                ..Default::default()
            })
            .unwrap(),
            0.01,
        )
        .unwrap();
        let a = assemble_closed_loop_matrix(&free, &zero).unwrap();
        let rho = spectral_radius(&a).unwrap();
        assert!((rho - 0.001f64.exp()).abs() < 1e-12, "{rho}");
    }

    #[test]
    fn equilibrium_stays_on_reference() {
        let plant = chain();
        let cl = ClosedLoop::new(plant.clone(), pd_gains(&plant), identity_s(&plant)).unwrap();
        let x: Vec<f64> = (0..5).flat_map(|_| [3.0, 0.0]).collect();
        let tr = simulate_tracking(&cl, 0.0, &x, 1.0).unwrap();
        assert_eq!(tr.len(), 101);
        for (e, u) in tr.errors.iter().zip(&tr.inputs) {
            assert!(norm2(e) < 1e-12);
            assert!(norm2(u) < 1e-9);
        }
        let rep = lyapunov_check(&tr, &plant, &identity_s(&plant)).unwrap();
        assert_eq!(rep.violations, 0);
        assert_eq!(rep.boundary, 100);
    }

    #[test]
    fn regulation_brings_velocities_to_rest() {
        let plant = chain();
        let cl = ClosedLoop::new(plant.clone(), pd_gains(&plant), identity_s(&plant)).unwrap();
        let x: Vec<f64> = (0..10).map(|k| (k as f64 * 0.7).sin()).collect();
        let tr = simulate_tracking(&cl, 0.0, &x, 8.0).unwrap();
        let last = tr.states.last().unwrap();
        for i in 0..5 {
            assert!(last[2 * i + 1].abs() < 1e-6);
        }
        assert!(tr.settling_time(&plant, 1e-3).unwrap() < 8.0);
    }

    #[test]
    fn negated_gains_violate_decrease() {
        let plant = chain();
        let gains: Vec<Matrix> = pd_gains(&plant).iter().map(|k| k.scale(-1.0)).collect();
        let cl = ClosedLoop::new(plant.clone(), gains, identity_s(&plant)).unwrap();
        let x: Vec<f64> = (0..10).map(|k| 0.1 * (k as f64).cos()).collect();
        let tr = simulate_tracking(&cl, 0.0, &x, 0.1).unwrap();
        assert!(
            lyapunov_check(&tr, &plant, &identity_s(&plant))
                .unwrap()
                .violations
                > 0
        );
    }

    #[test]
    fn divergence_is_reported() {
        let plant = chain();
        let gains: Vec<Matrix> = (0..5).map(|_| Matrix::from_rows(&[[1e4, 1e4]])).collect();
        let cl = ClosedLoop::new(plant.clone(), gains, identity_s(&plant)).unwrap();
        let x = vec![1.0; 10];
        assert!(matches!(
            simulate_tracking(&cl, 0.0, &x, 100.0),
            Err(Error::UnstableRollout { .. })
        ));
    }

    #[test]
    fn theta_identities() {
        let plant = chain();
        let bounds = BoundSet::from_linear_maps(&plant).unwrap();
        let cl = ClosedLoop::new(plant.clone(), pd_gains(&plant), identity_s(&plant)).unwrap();
        let x: Vec<f64> = (0..10).map(|k| 49.0 + 0.2 * k as f64).collect();
        let tr = simulate_tracking(&cl, 50.0, &x, 2.0).unwrap();
        assert_eq!(theta_check(&tr, &plant, &bounds).unwrap(), 0);
        assert!(theta_check(&tr, &plant, &bounds.scaled(0.5)).unwrap() > 0);
        for (x, phi) in tr.states.iter().zip(&tr.phis) {
            let a: f64 = theta(&plant, &bounds, x, phi).unwrap().iter().sum();
            let b: f64 = theta_hat(&plant, &bounds, x, phi).unwrap().iter().sum();
            assert!((a - b).abs() <= 1e-10 * (1.0 + squared(x)), "{a} vs {b}");
        }
    }

    #[test]
    fn singular_s_is_refused() {
        let plant = chain();
        let mut s = identity_s(&plant);
        s[2] = Matrix::zeros(2, 2);
        let cl = ClosedLoop::new(plant.clone(), pd_gains(&plant), s).unwrap();
        assert!(matches!(
            simulate_tracking(&cl, 0.0, &[0.0; 10], 1.0),
            Err(Error::SingularS { .. })
        ));
    }

    #[test]
    fn trace_csv_layout() {
        let plant = chain();
        let cl = ClosedLoop::new(plant.clone(), pd_gains(&plant), identity_s(&plant)).unwrap();
        let tr = simulate_tracking(&cl, 1.0, &[0.5; 10], 0.03).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &tr, &plant).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "time,s_1,s_2,s_3,s_4,s_5,v_1,v_2,v_3,v_4,v_5,u_1,u_2,u_3,u_4,u_5,V"
        );
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,0.5,"));
        assert_eq!(lines[2].split(',').count(), 17);
    }

    #[test]
    fn continuous_plant_rejected() {
        let cont = build_spring_mass_chain(ChainParams::default()).unwrap();
        let s: Vec<Matrix> = (0..5).map(|_| Matrix::identity(2)).collect();
        let k: Vec<Matrix> = (0..5).map(|_| Matrix::zeros(1, 2)).collect();
        assert!(ClosedLoop::new(cont, k, s).is_err());
    }
}

//! Interconnected plant models: `x_i(k+1) = A_i x_i + B_i u_i + sum_j G_ij g_ij(x_j)`.
//!
//! A [`PlantModel`] is a list of subsystems. Each subsystem lists the neighbors whose
//! state enters through an interconnection map `g_ij`; the stacked signal of those
//! maps (in neighbor-list order) is the interconnection input `phi_i`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{mat_exp, norm2, Matrix};

type MapFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Interconnection map `x_j -> g_ij(x_j)`.
#[derive(Clone)]
pub enum CouplingMap {
    /// `g(x) = J x`.
    Linear(Matrix),
    /// Arbitrary map with output dimension `dim`; must vanish at the origin.
    Nonlinear { dim: usize, f: Arc<MapFn> },
}

impl CouplingMap {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            CouplingMap::Linear(j) => j.mul_vec(x),
            CouplingMap::Nonlinear { f, .. } => f(x),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            CouplingMap::Linear(j) => j.rows(),
            CouplingMap::Nonlinear { dim, .. } => *dim,
        }
    }

    pub fn jacobian(&self) -> Option<&Matrix> {
        match self {
            CouplingMap::Linear(j) => Some(j),
            CouplingMap::Nonlinear { .. } => None,
        }
    }
}

impl fmt::Debug for CouplingMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CouplingMap::Linear(j) => f.debug_tuple("Linear").field(j).finish(),
            CouplingMap::Nonlinear { dim, .. } => write!(f, "Nonlinear {{ dim: {dim} }}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubsystemModel {
    pub a: Matrix,
    pub b: Matrix,
    pub neighbors: Vec<usize>,
    /// `G_ij`, one per neighbor, each `n_i x q_ij`.
    pub g_blocks: Vec<Matrix>,
    pub g_maps: Vec<CouplingMap>,
}

impl SubsystemModel {
    pub fn states(&self) -> usize {
        self.a.rows()
    }

    pub fn inputs(&self) -> usize {
        self.b.cols()
    }

    /// `l_i = sum_j q_ij`.
    pub fn interconnections(&self) -> usize {
        self.g_blocks.iter().map(Matrix::cols).sum()
    }

    /// `[G_ij ...]` in neighbor order (`n_i x l_i`).
    pub fn stacked_g(&self) -> Matrix {
        if self.g_blocks.is_empty() {
            return Matrix::zeros(self.states(), 0);
        }
        let refs: Vec<&Matrix> = self.g_blocks.iter().collect();
        Matrix::hstack(&refs).expect("validated block heights")
    }

    /// `[B G A]`, the matrix that maps `[u; phi; x]` to the successor state.
    pub fn data_operator(&self) -> Matrix {
        Matrix::hstack(&[&self.b, &self.stacked_g(), &self.a]).expect("validated heights")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeDomain {
    Continuous,
    Discrete { ts: f64 },
}

#[derive(Debug, Clone)]
pub struct PlantModel {
    subsystems: Vec<SubsystemModel>,
    domain: TimeDomain,
}

impl PlantModel {
    pub fn new(subsystems: Vec<SubsystemModel>, domain: TimeDomain) -> Result<Self> {
        let count = subsystems.len();
        for (i, s) in subsystems.iter().enumerate() {
            let n = s.states();
            if !s.a.is_square() || s.b.rows() != n {
                return Err(Error::InvalidParameter(format!(
                    "subsystem {i}: A {:?}, B {:?}",
                    s.a.shape(),
                    s.b.shape()
                )));
            }
            if s.g_blocks.len() != s.neighbors.len() || s.g_maps.len() != s.neighbors.len() {
                return Err(Error::InvalidParameter(format!(
                    "subsystem {i}: neighbor list, G blocks and maps differ in length"
                )));
            }
            for ((&j, g), map) in s.neighbors.iter().zip(&s.g_blocks).zip(&s.g_maps) {
                if j >= count || j == i {
                    return Err(Error::InvalidParameter(format!(
                        "subsystem {i}: invalid neighbor index {j}"
                    )));
                }
                if g.rows() != n || g.cols() != map.output_dim() {
                    return Err(Error::InvalidParameter(format!(
                        "subsystem {i}: G_{i}{j} is {:?}, expected {n}x{}",
                        g.shape(),
                        map.output_dim()
                    )));
                }
                let nj = subsystems[j].states();
                if let CouplingMap::Linear(jac) = map {
                    if jac.cols() != nj {
                        return Err(Error::InvalidParameter(format!(
                            "subsystem {i}: g_{i}{j} takes {} states, neighbor has {nj}",
                            jac.cols()
                        )));
                    }
                }
                let at_zero = map.eval(&vec![0.0; nj]);
                if at_zero.len() != map.output_dim() || norm2(&at_zero) > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "subsystem {i}: g_{i}{j}(0) must vanish"
                    )));
                }
            }
        }
        if let TimeDomain::Discrete { ts } = domain {
            if !(ts > 0.0) {
                return Err(Error::InvalidParameter(format!("sampling time {ts}")));
            }
        }
        Ok(Self { subsystems, domain })
    }

    pub fn subsystems(&self) -> &[SubsystemModel] {
        &self.subsystems
    }

    pub fn subsystem(&self, i: usize) -> &SubsystemModel {
        &self.subsystems[i]
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn domain(&self) -> TimeDomain {
        self.domain
    }

    pub fn sampling_time(&self) -> Option<f64> {
        match self.domain {
            TimeDomain::Discrete { ts } => Some(ts),
            TimeDomain::Continuous => None,
        }
    }

    pub fn total_states(&self) -> usize {
        self.subsystems.iter().map(SubsystemModel::states).sum()
    }

    pub fn total_inputs(&self) -> usize {
        self.subsystems.iter().map(SubsystemModel::inputs).sum()
    }

    pub fn total_interconnections(&self) -> usize {
        self.subsystems
            .iter()
            .map(SubsystemModel::interconnections)
            .sum()
    }

    /// Offset of subsystem `i` inside the stacked state vector.
    pub fn state_offset(&self, i: usize) -> usize {
        self.subsystems[..i]
            .iter()
            .map(SubsystemModel::states)
            .sum()
    }

    pub fn input_offset(&self, i: usize) -> usize {
        self.subsystems[..i]
            .iter()
            .map(SubsystemModel::inputs)
            .sum()
    }

    pub fn local_state<'a>(&self, i: usize, full: &'a [f64]) -> &'a [f64] {
        let off = self.state_offset(i);
        &full[off..off + self.subsystems[i].states()]
    }

    /// Splits a stacked vector into per-subsystem state slices.
    pub fn split_state<'a>(&self, full: &'a [f64]) -> Vec<&'a [f64]> {
        let mut out = Vec::with_capacity(self.len());
        let mut off = 0;
        for s in &self.subsystems {
            out.push(&full[off..off + s.states()]);
            off += s.states();
        }
        out
    }

    fn check_state_len(&self, full: &[f64]) -> Result<()> {
        if full.len() != self.total_states() {
            return Err(Error::InvalidParameter(format!(
                "state vector has length {}, plant has {} states",
                full.len(),
                self.total_states()
            )));
        }
        Ok(())
    }

    /// Stacked interconnection signal `phi_i` for subsystem `i`.
    pub fn eval_phi(&self, i: usize, full_state: &[f64]) -> Result<Vec<f64>> {
        if i >= self.len() {
            return Err(Error::InvalidParameter(format!("no subsystem {i}")));
        }
        self.check_state_len(full_state)?;
        let s = &self.subsystems[i];
        let mut phi = Vec::with_capacity(s.interconnections());
        for (&j, map) in s.neighbors.iter().zip(&s.g_maps) {
            phi.extend(map.eval(self.local_state(j, full_state)));
        }
        Ok(phi)
    }

    /// One step of the discrete dynamics; for a continuous plant returns the state derivative.
    pub fn advance(&self, full_state: &[f64], inputs: &[f64]) -> Result<Vec<f64>> {
        self.check_state_len(full_state)?;
        if inputs.len() != self.total_inputs() {
            return Err(Error::InvalidParameter(format!(
                "input vector has length {}, plant has {} inputs",
                inputs.len(),
                self.total_inputs()
            )));
        }
        let mut next = Vec::with_capacity(full_state.len());
        for (i, s) in self.subsystems.iter().enumerate() {
            let x = self.local_state(i, full_state);
            let uoff = self.input_offset(i);
            let u = &inputs[uoff..uoff + s.inputs()];
            let mut xi = s.a.mul_vec(x);
            for (r, v) in s.b.mul_vec(u).into_iter().enumerate() {
                xi[r] += v;
            }
            for ((&j, g), map) in s.neighbors.iter().zip(&s.g_blocks).zip(&s.g_maps) {
                let gj = map.eval(self.local_state(j, full_state));
                for (r, v) in g.mul_vec(&gj).into_iter().enumerate() {
                    xi[r] += v;
                }
            }
            next.extend(xi);
        }
        Ok(next)
    }
}

/// Physical parameters of a uniform spring-mass chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainParams {
    pub masses: usize,
    pub mass: f64,
    pub spring: f64,
    pub drag: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            masses: 5,
            mass: 1.0,
            spring: 0.1,
            drag: -0.1,
        }
    }
}

/// Continuous-time spring-mass chain with per-mass state `[s_i, v_i]`.
///
/// Each neighbor contributes the scalar `g_ij(x_j) = s_j` through `G_ij = [0; k/m]`;
/// the `-c_i k/m s_i` self-coupling lives in `A_i`. With `k == 0` no interconnections
/// are created.
pub fn build_spring_mass_chain(p: ChainParams) -> Result<PlantModel> {
    if p.masses < 2 {
        return Err(Error::InvalidParameter(format!(
            "chain needs at least 2 masses, got {}",
            p.masses
        )));
    }
    if !(p.mass > 0.0) || !p.spring.is_finite() || !p.drag.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "mass {} spring {} drag {}",
            p.mass, p.spring, p.drag
        )));
    }
    let km = p.spring / p.mass;
    let subsystems = (0..p.masses)
        .map(|i| {
            let neighbors: Vec<usize> = if p.spring == 0.0 {
                Vec::new()
            } else {
                [i.checked_sub(1), Some(i + 1).filter(|&j| j < p.masses)]
                    .into_iter()
                    .flatten()
                    .collect()
            };
            let links = if i == 0 || i + 1 == p.masses {
                1.0
            } else {
                2.0
            };
            SubsystemModel {
                a: Matrix::from_rows(&[[0.0, 1.0], [-links * km, -p.drag]]),
                b: Matrix::from_rows(&[[0.0], [1.0 / p.mass]]),
                g_blocks: neighbors
                    .iter()
                    .map(|_| Matrix::from_rows(&[[0.0], [km]]))
                    .collect(),
                g_maps: neighbors
                    .iter()
                    .map(|_| CouplingMap::Linear(Matrix::from_rows(&[[1.0, 0.0]])))
                    .collect(),
                neighbors,
            }
        })
        .collect();
    PlantModel::new(subsystems, TimeDomain::Continuous)
}

/// Exact zero-order-hold discretization of every subsystem.
///
/// `[A B G; 0 0 0]` is exponentiated over one period; the first block row yields
/// `A_d` and `[B_d G_d]`. Interconnection maps are carried over unchanged.
pub fn discretize_zoh(plant: &PlantModel, ts: f64) -> Result<PlantModel> {
    if plant.domain() != TimeDomain::Continuous {
        return Err(Error::InvalidParameter("plant is already discrete".into()));
    }
    if !(ts > 0.0) || !ts.is_finite() {
        return Err(Error::InvalidParameter(format!("sampling time {ts}")));
    }
    let subsystems = plant
        .subsystems()
        .iter()
        .map(|s| {
            let n = s.states();
            let g = s.stacked_g();
            let inputs = Matrix::hstack(&[&s.b, &g])?;
            let w = inputs.cols();
            let mut aug = Matrix::zeros(n + w, n + w);
            aug.set_block(0, 0, &s.a);
            aug.set_block(0, n, &inputs);
            let e = mat_exp(&aug.scale(ts))?;
            let m = s.inputs();
            let mut col = n + m;
            let g_blocks = s
                .g_blocks
                .iter()
                .map(|blk| {
                    let out = e.block(0, col, n, blk.cols());
                    col += blk.cols();
                    out
                })
                .collect();
            Ok(SubsystemModel {
                a: e.block(0, 0, n, n),
                b: e.block(0, n, n, m),
                neighbors: s.neighbors.clone(),
                g_blocks,
                g_maps: s.g_maps.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PlantModel::new(subsystems, TimeDomain::Discrete { ts })
}

/// Bound matrices `W_ij` with `||g_ij(x_j)|| <= ||W_ij x_j||`, keyed by `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSet {
    pub w: BTreeMap<(usize, usize), Matrix>,
    pub safety_factor: f64,
}

impl BoundSet {
    /// Exact bounds for linear maps: `W_ij = J_ij`, so equality holds everywhere.
    pub fn from_linear_maps(plant: &PlantModel) -> Result<Self> {
        let mut w = BTreeMap::new();
        for (i, s) in plant.subsystems().iter().enumerate() {
            for (&j, map) in s.neighbors.iter().zip(&s.g_maps) {
                let jac = map
                    .jacobian()
                    .ok_or(Error::NonlinearInterconnection { from: j, to: i })?;
                w.insert((i, j), jac.clone());
            }
        }
        Ok(Self {
            w,
            safety_factor: 1.0,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&Matrix> {
        self.w.get(&(i, j))
    }

    /// `[W_ji; ...]` over every `j` that receives a signal from subsystem `i`, ascending `j`.
    pub fn outgoing_stack(&self, i: usize, n_i: usize) -> Matrix {
        let parts: Vec<&Matrix> = self
            .w
            .iter()
            .filter(|((_, src), _)| *src == i)
            .map(|(_, m)| m)
            .collect();
        if parts.is_empty() {
            return Matrix::zeros(0, n_i);
        }
        Matrix::vstack(&parts).expect("bound blocks share the source dimension")
    }

    /// Returns a copy with every `W_ij` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            w: self.w.iter().map(|(k, m)| (*k, m.scale(factor))).collect(),
            safety_factor: self.safety_factor * factor,
        }
    }
}

/// Estimates `W_ij = w_ij * I` (`n_j x n_j`) from sampled states, with
/// `w_ij = safety_factor * max ||g_ij(x_j)|| / ||x_j||`, so `||W_ij x|| = w_ij ||x||`
/// dominates `||g_ij(x)||` on every sample.
pub fn estimate_bounds(
    plant: &PlantModel,
    samples: &[Vec<f64>],
    safety_factor: f64,
) -> Result<BoundSet> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(safety_factor >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "safety factor {safety_factor} must be >= 1"
        )));
    }
    for x in samples {
        plant.check_state_len(x)?;
    }
    let mut w = BTreeMap::new();
    for (i, s) in plant.subsystems().iter().enumerate() {
        for (&j, map) in s.neighbors.iter().zip(&s.g_maps) {
            let mut ratio: f64 = 0.0;
            let mut used = 0;
            for x in samples {
                let xj = plant.local_state(j, x);
                let nx = norm2(xj);
                if nx == 0.0 {
                    continue;
                }
                used += 1;
                ratio = ratio.max(norm2(&map.eval(xj)) / nx);
            }
            if used == 0 {
                return Err(Error::InvalidParameter(format!(
                    "every sample has x_{j} = 0; cannot estimate W_{i}{j}"
                )));
            }
            let nj = plant.subsystem(j).states();
            let wbar = safety_factor * ratio;
            w.insert((i, j), Matrix::identity(nj).scale(wbar));
        }
    }
    Ok(BoundSet { w, safety_factor })
}

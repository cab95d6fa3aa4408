//! End-to-end design run on the spring-mass chain: build, discretize, excite and
//! collect, reconstruct, synthesize, and track.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::evaluation::{
    assemble_closed_loop_matrix, local_spectral_radii, lyapunov_check, simulate_tracking,
    theta_check, write_trace_csv, ClosedLoop, LyapunovReport, Trace,
};
use crate::experiment::{
    check_rank_condition, collect_with_retry, data_rank, random_state, ExcitationPlan,
    SubsystemData,
};
use crate::io::{load_data, read_matrix, save_data, write_matrix};
use crate::linalg::{lambda_max, spectral_radius, sym_eig, Matrix};
use crate::plant::{
    build_spring_mass_chain, discretize_zoh, estimate_bounds, BoundSet, ChainParams, PlantModel,
};
use crate::representation::reconstruct;
use crate::sdp::{SolverConfig, StepRule};
use crate::synthesis::{
    assemble_lmi, build_problem, synthesize, SynthesisCertificate, DEFAULT_MARGIN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMode {
    Analytic,
    Estimated,
}

impl std::str::FromStr for BoundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "estimated" => Ok(Self::Estimated),
            other => Err(Error::InvalidParameter(format!(
                "bound mode {other:?} (expected analytic or estimated)"
            ))),
        }
    }
}

impl std::fmt::Display for BoundMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Analytic => "analytic",
            Self::Estimated => "estimated",
        })
    }
}

/// Flat run configuration; every key is optional in the TOML file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub masses: usize,
    pub mass: f64,
    pub spring: f64,
    pub drag: f64,
    pub ts: f64,
    pub samples: usize,
    pub amplitude: f64,
    pub seed: u64,
    /// Seed for the tracking initial state; defaults to `seed + 1`.
    pub track_seed: Option<u64>,
    pub init_low: f64,
    pub init_high: f64,
    pub max_retries: usize,
    pub v_r: f64,
    pub duration: f64,
    pub max_iters: usize,
    pub restarts: usize,
    /// Overrides the data-scaled default margin when set.
    pub epsilon_margin: Option<f64>,
    pub bounds: BoundMode,
    pub safety_factor: f64,
    /// Worker threads for synthesis; 0 uses every core.
    pub jobs: usize,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            masses: 5,
            mass: 1.0,
            spring: 0.1,
            drag: -0.1,
            ts: 0.01,
            samples: 40,
            amplitude: 1.0,
            seed: 0,
            track_seed: None,
            init_low: 49.0,
            init_high: 51.0,
            max_retries: 10,
            v_r: 50.0,
            duration: 10.0,
            max_iters: 20_000,
            restarts: 8,
            epsilon_margin: None,
            bounds: BoundMode::Estimated,
            safety_factor: 1.05,
            jobs: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?, path)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParameter(what));
        if !(self.ts > 0.0) || !self.ts.is_finite() {
            return bad(format!("ts = {}", self.ts));
        }
        if self.samples < 1 {
            return bad("samples must be at least 1".into());
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return bad(format!("duration = {}", self.duration));
        }
        if !(self.init_low <= self.init_high) {
            return bad(format!(
                "init range [{}, {}]",
                self.init_low, self.init_high
            ));
        }
        if !(self.safety_factor >= 1.0) {
            return bad(format!("safety_factor = {}", self.safety_factor));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if let Some(eps) = self.epsilon_margin {
            if !(eps > 0.0) {
                return bad(format!("epsilon_margin = {eps}"));
            }
        }
        Ok(())
    }

    pub fn chain_params(&self) -> ChainParams {
        ChainParams {
            masses: self.masses,
            mass: self.mass,
            spring: self.spring,
            drag: self.drag,
        }
    }

    pub fn plan(&self) -> ExcitationPlan {
        ExcitationPlan {
            samples: self.samples,
            amplitude: self.amplitude,
            seed: self.seed,
        }
    }

    pub fn solver(&self, i: usize) -> SolverConfig {
        SolverConfig {
            max_iters: self.max_iters,
            epsilon_margin: self.epsilon_margin.unwrap_or(DEFAULT_MARGIN),
            restarts: self.restarts,
            seed: self.seed.wrapping_add(i as u64),
            step_rule: StepRule::PolyakWithTarget,
        }
    }

    pub fn tracking_seed(&self) -> u64 {
        self.track_seed.unwrap_or(self.seed.wrapping_add(1))
    }
}

/// Process exit status for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Other = 1,
    RankFailure = 2,
    Infeasible = 3,
    Divergence = 4,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn of_error(e: &Error) -> Self {
        match e {
            Error::RankDeficient { .. }
            | Error::RankConditionNotMet { .. }
            | Error::InsufficientSamples { .. } => Self::RankFailure,
            Error::EmptyFeasibleSpace { .. } | Error::SingularS { .. } => Self::Infeasible,
            Error::UnstableRollout { .. } => Self::Divergence,
            _ => Self::Other,
        }
    }
}

/// An error tagged with the step that produced it.
#[derive(Debug)]
pub struct StepError {
    pub step: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StepError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.step, self.error)
    }
}

impl std::error::Error for StepError {}

impl StepError {
    pub fn status(&self) -> Status {
        Status::of_error(&self.error)
    }
}

trait AtStep<T> {
    fn at(self, step: &'static str) -> std::result::Result<T, StepError>;
}

impl<T, E: Into<Error>> AtStep<T> for std::result::Result<T, E> {
    fn at(self, step: &'static str) -> std::result::Result<T, StepError> {
        self.map_err(|e| StepError {
            step,
            error: e.into(),
        })
    }
}

pub type StepResult<T> = std::result::Result<T, StepError>;

pub const STEP_BUILD: &str = "step 1 (build plant)";
pub const STEP_DISCRETIZE: &str = "step 2 (discretize)";
pub const STEP_COLLECT: &str = "step 3 (excite and collect)";
pub const STEP_CHECK: &str = "step 4 (rank check and reconstruction)";
pub const STEP_SYNTHESIZE: &str = "step 5 (synthesize gains)";
pub const STEP_TRACK: &str = "step 6 (track reference)";
pub const STEP_OUTPUT: &str = "writing outputs";

pub fn discrete_plant(cfg: &PipelineConfig) -> StepResult<PlantModel> {
    cfg.validate().at(STEP_BUILD)?;
    let cont = build_spring_mass_chain(cfg.chain_params()).at(STEP_BUILD)?;
    discretize_zoh(&cont, cfg.ts).at(STEP_DISCRETIZE)
}

/// Per-subsystem diagnostics from step 4.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCheck {
    pub samples: usize,
    pub rank: usize,
    pub required: usize,
    pub rank_ok: bool,
    /// `||X1 - Xi* Y||_F / (1 + ||X1||_F)`
    pub residual: f64,
}

pub fn check_data(data: &[SubsystemData]) -> Result<Vec<DataCheck>> {
    data.iter()
        .map(|d| {
            let r = reconstruct(d)?;
            Ok(DataCheck {
                samples: d.samples(),
                rank: data_rank(d)?,
                required: d.inputs() + d.interconnections() + d.states(),
                rank_ok: check_rank_condition(d)?,
                residual: r.residual / (1.0 + d.x1.frobenius_norm()),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CollectOutcome {
    pub data: Vec<SubsystemData>,
    pub seed: u64,
    pub attempts: usize,
}

/// Steps 3 and 4: excite from a random initial state, retrying on rank failure.
pub fn run_collect(cfg: &PipelineConfig, plant: &PlantModel) -> StepResult<CollectOutcome> {
    let x_init = random_state(cfg.seed, plant.total_states(), cfg.init_low, cfg.init_high);
    let col = collect_with_retry(plant, &cfg.plan(), &x_init, cfg.max_retries).map_err(|e| {
        let step = if matches!(
            e,
            Error::RankConditionNotMet { .. } | Error::InsufficientSamples { .. }
        ) {
            STEP_CHECK
        } else {
            STEP_COLLECT
        };
        StepError { step, error: e }
    })?;
    Ok(CollectOutcome {
        data: col.data,
        seed: col.seed,
        attempts: col.attempts,
    })
}

/// Full-state samples `x(0..=T)` rebuilt from per-subsystem data.
pub fn state_samples(data: &[SubsystemData]) -> Vec<Vec<f64>> {
    let t = data.first().map_or(0, SubsystemData::samples);
    (0..=t)
        .map(|k| {
            data.iter()
                .flat_map(|d| {
                    if k < t {
                        d.x0.column(k)
                    } else {
                        d.x1.column(t - 1)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn bound_set(
    cfg: &PipelineConfig,
    plant: &PlantModel,
    data: &[SubsystemData],
) -> Result<BoundSet> {
    match cfg.bounds {
        BoundMode::Analytic => BoundSet::from_linear_maps(plant),
        BoundMode::Estimated => estimate_bounds(plant, &state_samples(data), cfg.safety_factor),
    }
}

/// Step 5 for every subsystem, on `cfg.jobs` threads.
pub fn run_synthesis(
    cfg: &PipelineConfig,
    bounds: &BoundSet,
    data: &[SubsystemData],
) -> StepResult<Vec<SynthesisCertificate>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| StepError {
            step: STEP_SYNTHESIZE,
            error: Error::InvalidParameter(format!("thread pool: {e}")),
        })?;
    pool.install(|| {
        data.par_iter()
            .enumerate()
            .map(|(i, d)| {
                let problem = build_problem(d, bounds, i)?;
                synthesize(&problem, &cfg.solver(i))
            })
            .collect::<Result<Vec<_>>>()
    })
    .at(STEP_SYNTHESIZE)
}

#[derive(Debug, Clone)]
pub struct TrackingOutcome {
    pub closed_loop_radius: f64,
    pub local_radii: Vec<f64>,
    pub trace: Trace,
    pub settling_time: Option<f64>,
    pub regulation: LyapunovReport,
    pub theta_violations: usize,
}

/// Step 6: certify the assembled loop and run the tracking simulation.
pub fn run_tracking(
    cfg: &PipelineConfig,
    plant: &PlantModel,
    bounds: &BoundSet,
    gains: Vec<Matrix>,
    s_blocks: Vec<Matrix>,
) -> StepResult<TrackingOutcome> {
    let a_cl = assemble_closed_loop_matrix(plant, &gains).at(STEP_TRACK)?;
    let closed_loop_radius = spectral_radius(&a_cl).at(STEP_TRACK)?;
    let local_radii = local_spectral_radii(plant, &gains).at(STEP_TRACK)?;
    let cl = ClosedLoop::new(plant.clone(), gains, s_blocks).at(STEP_TRACK)?;
    let x_init = random_state(
        cfg.tracking_seed(),
        plant.total_states(),
        cfg.init_low,
        cfg.init_high,
    );
    let trace = simulate_tracking(&cl, cfg.v_r, &x_init, cfg.duration).at(STEP_TRACK)?;
    let settling_time = trace.settling_time(plant, 0.5);
    let reg = simulate_tracking(&cl, 0.0, &x_init, cfg.duration).at(STEP_TRACK)?;
    let regulation = lyapunov_check(&reg, plant, &cl.s_blocks).at(STEP_TRACK)?;
    let theta_violations = theta_check(&trace, plant, bounds).at(STEP_TRACK)?;
    Ok(TrackingOutcome {
        closed_loop_radius,
        local_radii,
        trace,
        settling_time,
        regulation,
        theta_violations,
    })
}

fn fmt_row(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

pub fn format_report(
    cfg: &PipelineConfig,
    collected: Option<(u64, usize)>,
    checks: &[DataCheck],
    certs: &[SynthesisCertificate],
    tracking: Option<&TrackingOutcome>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "ddctl design report");
    let _ = writeln!(
        s,
        "chain: masses={} mass={} spring={} drag={} ts={}",
        cfg.masses, cfg.mass, cfg.spring, cfg.drag, cfg.ts
    );
    let _ = writeln!(s, "bounds: {}", cfg.bounds);
    if let Some((seed, attempts)) = collected {
        let _ = writeln!(s, "excitation: seed={seed} attempts={attempts}");
    }
    for (i, c) in checks.iter().enumerate() {
        let _ = writeln!(s, "\nsubsystem {}", i + 1);
        let _ = writeln!(s, "  T = {}", c.samples);
        let _ = writeln!(
            s,
            "  rank [U;Phi;X0] = {} / {} ({})",
            c.rank,
            c.required,
            if c.rank_ok { "ok" } else { "FAILED" }
        );
        let _ = writeln!(s, "  reconstruction residual = {:e}", c.residual);
        if let Some(cert) = certs.get(i) {
            let _ = writeln!(
                s,
                "  status = {}",
                if cert.is_feasible() {
                    "feasible"
                } else {
                    "infeasible-at-tolerance"
                }
            );
            let _ = writeln!(s, "  lambda_max(M) = {:e}", cert.lambda_max);
            let _ = writeln!(s, "  epsilon_margin = {:e}", cert.epsilon_margin);
            let _ = writeln!(s, "  lambda_min(S) = {:e}", cert.lambda_min_s);
            let _ = writeln!(s, "  iterations = {}", cert.iterations);
            let _ = writeln!(s, "  K = [{}]", fmt_row(cert.k.as_slice()));
        }
    }
    if let Some(t) = tracking {
        let _ = writeln!(s, "\nclosed loop");
        let _ = writeln!(s, "  spectral radius = {}", t.closed_loop_radius);
        let _ = writeln!(s, "  local radii = [{}]", fmt_row(&t.local_radii));
        let _ = writeln!(
            s,
            "  regulation Lyapunov check: violations={} max dV={:e}",
            t.regulation.violations, t.regulation.max_delta
        );
        let _ = writeln!(
            s,
            "  interconnection bound violations = {}",
            t.theta_violations
        );
        let _ = writeln!(s, "\ntracking v_r={} duration={}", cfg.v_r, cfg.duration);
        match t.settling_time {
            Some(ts) => {
                let _ = writeln!(s, "  all |v_i - v_r| <= 0.5 from t = {ts} s");
            }
            None => {
                let _ = writeln!(s, "  velocities did not settle within 0.5");
            }
        }
    }
    s
}

pub fn data_dir(out: &Path) -> PathBuf {
    out.join("data")
}

pub fn certificate_dir(out: &Path) -> PathBuf {
    out.join("certificates")
}

pub fn save_certificates(dir: &Path, certs: &[SynthesisCertificate]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, c) in certs.iter().enumerate() {
        write_matrix(&dir.join(format!("K_{}.csv", i + 1)), &c.k)?;
        write_matrix(&dir.join(format!("S_{}.csv", i + 1)), &c.s)?;
        write_matrix(&dir.join(format!("Q_{}.csv", i + 1)), &c.q)?;
    }
    let mut summary =
        String::from("subsystem,status,lambda_max,epsilon_margin,lambda_min_s,iterations\n");
    for (i, c) in certs.iter().enumerate() {
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{}",
            i + 1,
            if c.is_feasible() {
                "feasible"
            } else {
                "infeasible"
            },
            c.lambda_max,
            c.epsilon_margin,
            c.lambda_min_s,
            c.iterations
        );
    }
    fs::write(dir.join("summary.csv"), summary)?;
    Ok(())
}

/// Reads `K_i.csv` and `S_i.csv` for `count` subsystems.
pub fn load_gains(dir: &Path, count: usize) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
    let mut gains = Vec::with_capacity(count);
    let mut s_blocks = Vec::with_capacity(count);
    for i in 1..=count {
        gains.push(read_matrix(&dir.join(format!("K_{i}.csv")))?);
        s_blocks.push(read_matrix(&dir.join(format!("S_{i}.csv")))?);
    }
    Ok((gains, s_blocks))
}

pub fn write_trace(path: &Path, trace: &Trace, plant: &PlantModel) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write_trace_csv(&mut f, trace, plant)?;
    std::io::Write::flush(&mut f)?;
    Ok(())
}

/// Result of a full run.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub status: Status,
    pub report: String,
    pub certificates: Vec<SynthesisCertificate>,
    pub tracking: Option<TrackingOutcome>,
}

/// Runs every step, writing `data/`, `certificates/`, `report.txt` and `trace.csv`
/// under `cfg.out`. Infeasible subsystems stop the run before tracking.
pub fn run_pipeline(cfg: &PipelineConfig) -> StepResult<PipelineOutcome> {
    let plant = discrete_plant(cfg)?;
    let collected = run_collect(cfg, &plant)?;
    fs::create_dir_all(&cfg.out).at(STEP_OUTPUT)?;
    save_data(&data_dir(&cfg.out), &collected.data).at(STEP_OUTPUT)?;
    let checks = check_data(&collected.data).at(STEP_CHECK)?;
    let bounds = bound_set(cfg, &plant, &collected.data).at(STEP_SYNTHESIZE)?;
    let certs = run_synthesis(cfg, &bounds, &collected.data)?;
    save_certificates(&certificate_dir(&cfg.out), &certs).at(STEP_OUTPUT)?;
    let meta = Some((collected.seed, collected.attempts));

    if certs.iter().any(|c| !c.is_feasible()) {
        let report = format_report(cfg, meta, &checks, &certs, None);
        fs::write(cfg.out.join("report.txt"), &report).at(STEP_OUTPUT)?;
        return Ok(PipelineOutcome {
            status: Status::Infeasible,
            report,
            certificates: certs,
            tracking: None,
        });
    }

    let gains = certs.iter().map(|c| c.k.clone()).collect();
    let s_blocks = certs.iter().map(|c| c.s.clone()).collect();
    let tracking = match run_tracking(cfg, &plant, &bounds, gains, s_blocks) {
        Ok(t) => t,
        Err(e) => {
            let mut report = format_report(cfg, meta, &checks, &certs, None);
            let _ = writeln!(report, "\n{e}");
            fs::write(cfg.out.join("report.txt"), &report).at(STEP_OUTPUT)?;
            return Err(e);
        }
    };
    write_trace(&cfg.out.join("trace.csv"), &tracking.trace, &plant).at(STEP_OUTPUT)?;
    let report = format_report(cfg, meta, &checks, &certs, Some(&tracking));
    fs::write(cfg.out.join("report.txt"), &report).at(STEP_OUTPUT)?;
    Ok(PipelineOutcome {
        status: Status::Success,
        report,
        certificates: certs,
        tracking: Some(tracking),
    })
}

/// Loads data written by a previous collection and checks it against the plant shape.
pub fn load_collected(dir: &Path, plant: &PlantModel) -> StepResult<Vec<SubsystemData>> {
    let data = load_data(dir).at(STEP_COLLECT)?;
    if data.len() != plant.len() {
        return Err(StepError {
            step: STEP_COLLECT,
            error: Error::DimensionMismatch(format!(
                "{} subsystems in {}, plant has {}",
                data.len(),
                dir.display(),
                plant.len()
            )),
        });
    }
    for (i, (d, s)) in data.iter().zip(plant.subsystems()).enumerate() {
        if (d.inputs(), d.interconnections(), d.states())
            != (s.inputs(), s.interconnections(), s.states())
        {
            return Err(StepError {
                step: STEP_COLLECT,
                error: Error::DimensionMismatch(format!(
                    "subsystem {}: data dims do not match the plant",
                    i + 1
                )),
            });
        }
    }
    Ok(data)
}

/// One line of a verification run.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Reported only; does not affect the exit status.
    pub advisory: bool,
    pub detail: String,
}

/// Re-derives every certificate from saved data and gains without trusting the solver.
pub fn run_verify(cfg: &PipelineConfig) -> StepResult<(Status, Vec<Check>)> {
    let plant = discrete_plant(cfg)?;
    let data = load_collected(&data_dir(&cfg.out), &plant)?;
    let dir = certificate_dir(&cfg.out);
    let bounds = bound_set(cfg, &plant, &data).at(STEP_SYNTHESIZE)?;
    let mut checks = Vec::new();
    let mut status = Status::Success;
    let mut gains = Vec::new();
    let mut s_blocks = Vec::new();
    for (i, d) in data.iter().enumerate() {
        let n = i + 1;
        let q = read_matrix(&dir.join(format!("Q_{n}.csv"))).at(STEP_OUTPUT)?;
        let k = read_matrix(&dir.join(format!("K_{n}.csv"))).at(STEP_OUTPUT)?;
        let problem = build_problem(d, &bounds, i).at(STEP_SYNTHESIZE)?;
        let m = assemble_lmi(&problem, &q).at(STEP_SYNTHESIZE)?;
        let lmax = lambda_max(&m).at(STEP_SYNTHESIZE)?;
        let eps = cfg.solver(i).epsilon_margin;
        let s = (&d.x0 * &q).symmetrize();
        let smin = sym_eig(&s).at(STEP_SYNTHESIZE)?.min();
        let ok = lmax <= -eps && smin > 0.0;
        checks.push(Check {
            name: format!("subsystem {n} LMI"),
            passed: ok,
            advisory: false,
            detail: format!("lambda_max = {lmax:e} (margin {eps:e}), lambda_min(S) = {smin:e}"),
        });
        if !ok {
            status = Status::Infeasible;
        }
        let rec = reconstruct(d).at(STEP_CHECK)?;
        let rho = spectral_radius(&(&rec.a_star + &(&rec.b_star * &k))).at(STEP_CHECK)?;
        checks.push(Check {
            name: format!("subsystem {n} local radius"),
            passed: rho < 1.0,
            advisory: false,
            detail: format!("rho(A* + B* K) = {rho}"),
        });
        if rho >= 1.0 && status == Status::Success {
            status = Status::Divergence;
        }
        gains.push(k);
        s_blocks.push(s);
    }
    if status == Status::Infeasible {
        return Ok((status, checks));
    }
    let a_cl = assemble_closed_loop_matrix(&plant, &gains).at(STEP_TRACK)?;
    let rho = spectral_radius(&a_cl).at(STEP_TRACK)?;
    checks.push(Check {
        name: "closed-loop radius".into(),
        passed: rho < 1.0 - 1e-6,
        advisory: false,
        detail: format!("rho = {rho}"),
    });
    let cl = ClosedLoop::new(plant.clone(), gains, s_blocks).at(STEP_TRACK)?;
    let x_init = random_state(
        cfg.tracking_seed(),
        plant.total_states(),
        cfg.init_low,
        cfg.init_high,
    );
    let (lyap, theta) = match simulate_tracking(&cl, 0.0, &x_init, cfg.duration) {
        Ok(reg) => (
            lyapunov_check(&reg, &plant, &cl.s_blocks).at(STEP_TRACK)?,
            theta_check(&reg, &plant, &bounds).at(STEP_TRACK)?,
        ),
        Err(e) => return Err(e).at(STEP_TRACK),
    };
    checks.push(Check {
        name: "Lyapunov decrease".into(),
        passed: lyap.violations == 0,
        advisory: false,
        detail: format!(
            "violations = {}, max dV = {:e}",
            lyap.violations, lyap.max_delta
        ),
    });
    checks.push(Check {
        name: "interconnection bounds".into(),
        passed: theta == 0,
        advisory: true,
        detail: format!("violations = {theta}"),
    });
    let stability_failed = checks.iter().any(|c| !c.passed && !c.advisory);
    if status == Status::Success && stability_failed {
        status = Status::Divergence;
    }
    Ok((status, checks))
}

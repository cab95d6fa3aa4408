//! Python bindings: configure a run, design gains, simulate the closed loop.

use std::path::PathBuf;

use ddctl::evaluation::{
    assemble_closed_loop_matrix, local_spectral_radii, simulate_tracking, ClosedLoop,
};
use ddctl::experiment::{random_state, SubsystemData};
use ddctl::linalg::{default_rtol, mat_exp, pinv, spectral_radius, Matrix};
use ddctl::pipeline::{
    bound_set, discrete_plant, run_collect, run_pipeline, run_synthesis, BoundMode, PipelineConfig,
    StepError, STEP_SYNTHESIZE,
};
use ddctl::plant::PlantModel;
use ddctl::representation::reconstruct;
use ddctl::synthesis::SynthesisCertificate;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(pyddctl, DdctlError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    DdctlError::new_err(e.to_string())
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let n = rows.len();
    Matrix::new(n, cols, rows.into_iter().flatten().collect()).map_err(err)
}

/// Run configuration. Keyword arguments and TOML use the same keys as the CLI config file.
#[pyclass(module = "pyddctl", from_py_object)]
#[derive(Clone)]
struct Config {
    inner: PipelineConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut cfg = Config {
            inner: PipelineConfig::default(),
        };
        if let Some(kw) = kwargs {
            for (key, value) in kw.iter() {
                let key: String = key.extract()?;
                cfg.set(&key, &value)?;
            }
        }
        cfg.inner.validate().map_err(err)?;
        Ok(cfg)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner =
            PipelineConfig::from_toml_str(text, std::path::Path::new("<string>")).map_err(err)?;
        Ok(Config { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = PipelineConfig::load(&path).map_err(err)?;
        Ok(Config { inner })
    }

    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let c = &mut self.inner;
        match key {
            "masses" => c.masses = value.extract()?,
            "mass" => c.mass = value.extract()?,
            "spring" => c.spring = value.extract()?,
            "drag" => c.drag = value.extract()?,
            "ts" => c.ts = value.extract()?,
            "samples" => c.samples = value.extract()?,
            "amplitude" => c.amplitude = value.extract()?,
            "seed" => c.seed = value.extract()?,
            "track_seed" => c.track_seed = value.extract()?,
            "init_low" => c.init_low = value.extract()?,
            "init_high" => c.init_high = value.extract()?,
            "max_retries" => c.max_retries = value.extract()?,
            "v_r" => c.v_r = value.extract()?,
            "duration" => c.duration = value.extract()?,
            "max_iters" => c.max_iters = value.extract()?,
            "restarts" => c.restarts = value.extract()?,
            "epsilon_margin" => c.epsilon_margin = value.extract()?,
            "bounds" => {
                let s: String = value.extract()?;
                c.bounds = s.parse::<BoundMode>().map_err(err)?;
            }
            "safety_factor" => c.safety_factor = value.extract()?,
            "jobs" => c.jobs = value.extract()?,
            "out" => c.out = value.extract()?,
            _ => return Err(PyValueError::new_err(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn samples(&self) -> usize {
        self.inner.samples
    }

    #[getter]
    fn bounds(&self) -> String {
        self.inner.bounds.to_string()
    }

    #[getter]
    fn out(&self) -> PathBuf {
        self.inner.out.clone()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Collected data, bounds and certified gains for one configuration.
#[pyclass(module = "pyddctl")]
struct Design {
    cfg: PipelineConfig,
    plant: PlantModel,
    data: Vec<SubsystemData>,
    certs: Vec<SynthesisCertificate>,
}

impl Design {
    fn gain_matrices(&self) -> Vec<Matrix> {
        self.certs.iter().map(|c| c.k.clone()).collect()
    }
}

#[pymethods]
impl Design {
    /// Builds the plant, excites it and synthesizes one gain per subsystem.
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(py: Python<'_>, config: Option<Config>) -> PyResult<Self> {
        let cfg = config.map_or_else(PipelineConfig::default, |c| c.inner);
        py.detach(|| -> ddctl::pipeline::StepResult<Design> {
            let plant = discrete_plant(&cfg)?;
            let data = run_collect(&cfg, &plant)?.data;
            let bounds = bound_set(&cfg, &plant, &data).map_err(|error| StepError {
                step: STEP_SYNTHESIZE,
                error,
            })?;
            let certs = run_synthesis(&cfg, &bounds, &data)?;
            Ok(Design {
                cfg,
                plant,
                data,
                certs,
            })
        })
        .map_err(err)
    }

    #[getter]
    fn feasible(&self) -> bool {
        self.certs.iter().all(SynthesisCertificate::is_feasible)
    }

    #[getter]
    fn gains(&self) -> Vec<Vec<Vec<f64>>> {
        self.certs.iter().map(|c| to_rows(&c.k)).collect()
    }

    /// One dict per subsystem with `K`, `S`, `Q`, `lambda_max`, `lambda_min_s`,
    /// `epsilon_margin`, `iterations` and `feasible`.
    fn certificates<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.certs
            .iter()
            .map(|c| {
                let d = PyDict::new(py);
                d.set_item("K", to_rows(&c.k))?;
                d.set_item("S", to_rows(&c.s))?;
                d.set_item("Q", to_rows(&c.q))?;
                d.set_item("lambda_max", c.lambda_max)?;
                d.set_item("lambda_min_s", c.lambda_min_s)?;
                d.set_item("epsilon_margin", c.epsilon_margin)?;
                d.set_item("iterations", c.iterations)?;
                d.set_item("feasible", c.is_feasible())?;
                Ok(d)
            })
            .collect()
    }

    /// Recorded data of subsystem `i` (0-based) as a dict of `U`, `Phi`, `X0`, `X1`.
    fn data<'py>(&self, py: Python<'py>, i: usize) -> PyResult<Bound<'py, PyDict>> {
        let d = self
            .data
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("no subsystem {i}")))?;
        let out = PyDict::new(py);
        out.set_item("U", to_rows(&d.u))?;
        out.set_item("Phi", to_rows(&d.phi))?;
        out.set_item("X0", to_rows(&d.x0))?;
        out.set_item("X1", to_rows(&d.x1))?;
        Ok(out)
    }

    /// `(A*, B*)` identified from the data of subsystem `i`.
    fn reconstruct(&self, i: usize) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let d = self
            .data
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("no subsystem {i}")))?;
        let r = reconstruct(d).map_err(err)?;
        Ok((to_rows(&r.a_star), to_rows(&r.b_star)))
    }

    fn closed_loop_radius(&self) -> PyResult<f64> {
        let a = assemble_closed_loop_matrix(&self.plant, &self.gain_matrices()).map_err(err)?;
        spectral_radius(&a).map_err(err)
    }

    fn local_radii(&self) -> PyResult<Vec<f64>> {
        local_spectral_radii(&self.plant, &self.gain_matrices()).map_err(err)
    }

    /// Simulates velocity tracking. Returns a dict with `times`, `states`, `errors`,
    /// `inputs`, `lyapunov` and `settling_time` (None if the 0.5 band is never held).
    #[pyo3(signature = (v_r=None, x0=None, duration=None))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        v_r: Option<f64>,
        x0: Option<Vec<f64>>,
        duration: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        if !self.feasible() {
            return Err(err("design has infeasible subsystems"));
        }
        let cl = ClosedLoop::new(
            self.plant.clone(),
            self.gain_matrices(),
            self.certs.iter().map(|c| c.s.clone()).collect(),
        )
        .map_err(err)?;
        let x0 = x0.unwrap_or_else(|| {
            random_state(
                self.cfg.tracking_seed(),
                self.plant.total_states(),
                self.cfg.init_low,
                self.cfg.init_high,
            )
        });
        let v_r = v_r.unwrap_or(self.cfg.v_r);
        let duration = duration.unwrap_or(self.cfg.duration);
        let tr = py
            .detach(|| simulate_tracking(&cl, v_r, &x0, duration))
            .map_err(err)?;
        let out = PyDict::new(py);
        out.set_item("settling_time", tr.settling_time(&self.plant, 0.5))?;
        out.set_item("times", tr.times)?;
        out.set_item("states", tr.states)?;
        out.set_item("errors", tr.errors)?;
        out.set_item("inputs", tr.inputs)?;
        out.set_item("lyapunov", tr.lyapunov)?;
        Ok(out)
    }

    fn __len__(&self) -> usize {
        self.certs.len()
    }
}

/// Runs the full pipeline, writing outputs under `config.out`. Returns `(exit_code, report)`.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn pipeline(py: Python<'_>, config: Option<Config>) -> PyResult<(u8, String)> {
    let cfg = config.map_or_else(PipelineConfig::default, |c| c.inner);
    match py.detach(|| run_pipeline(&cfg)) {
        Ok(o) => Ok((o.status.code() as u8, o.report)),
        Err(e) => Err(err(e)),
    }
}

/// Moore-Penrose pseudoinverse.
#[pyfunction]
fn pseudo_inverse(a: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let a = from_rows(a)?;
    Ok(to_rows(&pinv(&a, default_rtol(&a)).map_err(err)?))
}

/// Matrix exponential.
#[pyfunction]
fn expm(a: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(to_rows(&mat_exp(&from_rows(a)?).map_err(err)?))
}

#[pyfunction(name = "spectral_radius")]
fn radius(a: Vec<Vec<f64>>) -> PyResult<f64> {
    spectral_radius(&from_rows(a)?).map_err(err)
}

#[pymodule]
fn pyddctl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<Design>()?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(pseudo_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(expm, m)?)?;
    m.add_function(wrap_pyfunction!(radius, m)?)?;
    m.add("DdctlError", m.py().get_type::<DdctlError>())?;
    Ok(())
}

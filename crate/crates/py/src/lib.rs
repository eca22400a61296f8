//! Python bindings: scenario catalog, guidance-field evaluation,
//! equilibrium sampling, trajectory batches and the verification suites,
//! driven in-process from Python.
//!
//! Build with `cargo build -p zigzag-py --release`; the resulting
//! `libzigzag_py.so` imports as the module `zigzag_py` once renamed to
//! `zigzag_py.so` (python/smoke_test.py automates this).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use zigzag_core::guidance::{Chirality, GuidanceEngine, GuidanceSample, ParticleConfig};
use zigzag_core::integrator::{run_batch, RecordOptions, TrajectoryRecord};
use zigzag_core::sampling::sample_initial;
use zigzag_core::scenarios::{catalog, effective_collapse_check, find, CollapseReport};
use zigzag_core::states::SpinorState;
use zigzag_core::suite::{criterion_by_id, DEFAULT_SUITE_SEED, SUITES};

fn chi_from_int(v: i8) -> PyResult<Chirality> {
    match v {
        1 => Ok(Chirality::Plus),
        -1 => Ok(Chirality::Minus),
        other => Err(PyValueError::new_err(format!("chirality must be +1 or -1, got {other}"))),
    }
}

fn chi_to_int(c: Chirality) -> i8 {
    match c {
        Chirality::Plus => 1,
        Chirality::Minus => -1,
    }
}

/// One finished trajectory: sampled rows plus chirality-jump events.
#[pyclass]
struct Trajectory {
    record: TrajectoryRecord,
}

#[pymethods]
impl Trajectory {
    /// Times of the recorded rows.
    fn times(&self) -> Vec<f64> {
        self.record.samples.iter().map(|r| r.t).collect()
    }

    /// Positions of particle k (0-based) at the recorded rows.
    fn positions(&self, k: usize) -> PyResult<Vec<(f64, f64, f64)>> {
        self.check_particle(k)?;
        Ok(self
            .record
            .samples
            .iter()
            .map(|r| (r.positions[k][0], r.positions[k][1], r.positions[k][2]))
            .collect())
    }

    /// Spin vectors of particle k at the recorded rows.
    fn spins(&self, k: usize) -> PyResult<Vec<(f64, f64, f64)>> {
        self.check_particle(k)?;
        Ok(self
            .record
            .samples
            .iter()
            .map(|r| (r.spins[k][0], r.spins[k][1], r.spins[k][2]))
            .collect())
    }

    /// Chirality (±1) of particle k at the recorded rows.
    fn chiralities(&self, k: usize) -> PyResult<Vec<i8>> {
        self.check_particle(k)?;
        Ok(self.record.samples.iter().map(|r| chi_to_int(r.chiralities[k])).collect())
    }

    /// Jump events as (time, particle, (x, y, z), chi_before, s_z).
    fn events(&self) -> Vec<(f64, usize, (f64, f64, f64), i8, f64)> {
        self.record
            .events
            .iter()
            .map(|e| {
                (
                    e.time,
                    e.particle,
                    (e.position[0], e.position[1], e.position[2]),
                    chi_to_int(e.before),
                    e.spin[2],
                )
            })
            .collect()
    }

    fn final_position(&self, k: usize) -> PyResult<(f64, f64, f64)> {
        self.check_particle(k)?;
        let p = self.record.final_row().positions[k];
        Ok((p[0], p[1], p[2]))
    }

    #[getter]
    fn n_particles(&self) -> usize {
        self.record.final_row().positions.len()
    }

    #[getter]
    fn n_events(&self) -> usize {
        self.record.events.len()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.record.seed
    }

    #[getter]
    fn stream(&self) -> u64 {
        self.record.stream
    }

    fn __repr__(&self) -> String {
        format!(
            "Trajectory(rows={}, events={}, T={}, stream={})",
            self.record.samples.len(),
            self.record.events.len(),
            self.record.final_row().t,
            self.record.stream
        )
    }
}

impl Trajectory {
    fn check_particle(&self, k: usize) -> PyResult<()> {
        let n = self.record.final_row().positions.len();
        if k >= n {
            return Err(PyValueError::new_err(format!("particle {k} out of range (n={n})")));
        }
        Ok(())
    }
}

/// A configured scenario: immutable state plus integrator settings.
#[pyclass]
struct Simulation {
    spec: zigzag_core::scenarios::ScenarioSpec,
    state: SpinorState,
}

#[pymethods]
impl Simulation {
    /// Load a catalog scenario. Optional overrides: seed, t_total,
    /// stride_time (row thinning), keep_events, sample_at.
    #[new]
    #[pyo3(signature = (scenario, seed=0, t_total=None, stride_time=0.0, keep_events=true, sample_at=None))]
    fn new(
        scenario: &str,
        seed: u64,
        t_total: Option<f64>,
        stride_time: f64,
        keep_events: bool,
        sample_at: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let mut spec = find(scenario).ok_or_else(|| {
            PyValueError::new_err(format!(
                "unknown scenario `{scenario}`; available: {}",
                catalog().iter().map(|s| s.id.clone()).collect::<Vec<_>>().join(", ")
            ))
        })?;
        if let Some(t) = t_total {
            spec.t_total = t;
            spec.settings.t_final = t;
        }
        spec.settings.rng_seed = seed;
        spec.settings.record = RecordOptions {
            stride_time,
            sample_at: sample_at.unwrap_or_default(),
            keep_events,
        };
        let state = spec
            .build_state()
            .map_err(|e| PyValueError::new_err(format!("building state: {e}")))?;
        Ok(Self { spec, state })
    }

    #[getter]
    fn scenario(&self) -> String {
        self.spec.id.clone()
    }

    #[getter]
    fn n_particles(&self) -> usize {
        self.spec.n_particles()
    }

    #[getter]
    fn t_total(&self) -> f64 {
        self.spec.t_total
    }

    /// Field switch times (t_i, t_f).
    fn field_window(&self) -> (f64, f64) {
        (self.spec.field.t_i, self.spec.field.t_f)
    }

    /// Draw n equilibrium initial configurations:
    /// (positions, chiralities) per configuration.
    #[pyo3(signature = (n, seed=None))]
    fn sample_initial(
        &self,
        n: usize,
        seed: Option<u64>,
    ) -> PyResult<Vec<(Vec<(f64, f64, f64)>, Vec<i8>)>> {
        let seed = seed.unwrap_or(self.spec.settings.rng_seed);
        let configs = sample_initial(&self.state, n, seed)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(configs
            .into_iter()
            .map(|c| {
                (
                    c.positions.iter().map(|p| (p[0], p[1], p[2])).collect(),
                    c.chiralities.iter().map(|&x| chi_to_int(x)).collect(),
                )
            })
            .collect())
    }

    /// Guidance fields at a configuration: returns
    /// (velocities, flip_rates, spins, density), with velocities for the
    /// given chiralities and flip rates toward the opposite ones.
    #[allow(clippy::type_complexity)]
    fn guidance(
        &self,
        positions: Vec<(f64, f64, f64)>,
        chiralities: Vec<i8>,
        t: f64,
    ) -> PyResult<(Vec<(f64, f64, f64)>, Vec<f64>, Vec<(f64, f64, f64)>, f64)> {
        let n = self.spec.n_particles();
        if positions.len() != n || chiralities.len() != n {
            return Err(PyValueError::new_err(format!("expected {n} particles")));
        }
        let pos: Vec<[f64; 3]> = positions.iter().map(|p| [p.0, p.1, p.2]).collect();
        let chis: Vec<Chirality> =
            chiralities.iter().map(|&c| chi_from_int(c)).collect::<PyResult<_>>()?;
        let mut engine = GuidanceEngine::new(&self.state);
        let mut sample = GuidanceSample::default();
        engine
            .sample_into(&pos, t, &mut sample)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let mut velocities = Vec::with_capacity(n);
        let mut flip_rates = Vec::with_capacity(n);
        let mut spins = Vec::with_capacity(n);
        for k in 0..n {
            let v = sample.velocity(k, chis[k]);
            velocities.push((v[0], v[1], v[2]));
            flip_rates.push(sample.flip_rate(k, chis[k]));
            let s = sample.spins[k];
            spins.push((s[0], s[1], s[2]));
        }
        Ok((velocities, flip_rates, spins, sample.density))
    }

    /// Run a batch of n trajectories from equilibrium initial conditions.
    #[pyo3(signature = (n, workers=0))]
    fn run(&self, py: Python<'_>, n: usize, workers: usize) -> PyResult<Vec<Trajectory>> {
        let inits = sample_initial(&self.state, n, self.spec.settings.rng_seed)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let batch = py.detach(|| run_batch(&self.state, &inits, &self.spec.settings, workers));
        batch
            .outcomes
            .into_iter()
            .map(|o| {
                o.map(|record| Trajectory { record })
                    .map_err(|e| PyRuntimeError::new_err(e.to_string()))
            })
            .collect()
    }

    /// Run a single trajectory from an explicit initial configuration.
    #[pyo3(signature = (positions, chiralities, stream=0))]
    fn run_one(
        &self,
        py: Python<'_>,
        positions: Vec<(f64, f64, f64)>,
        chiralities: Vec<i8>,
        stream: u64,
    ) -> PyResult<Trajectory> {
        let pos: Vec<[f64; 3]> = positions.iter().map(|p| [p.0, p.1, p.2]).collect();
        let chis: Vec<Chirality> =
            chiralities.iter().map(|&c| chi_from_int(c)).collect::<PyResult<_>>()?;
        let init = ParticleConfig::new(0.0, pos, chis);
        let record = py
            .detach(|| {
                zigzag_core::integrator::run_trajectory(&self.state, &init, &self.spec.settings, stream)
            })
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(Trajectory { record })
    }

    /// Effective-collapse comparison for a finished two-particle
    /// trajectory: returns (conclusive, details).
    fn collapse_check(&self, trajectory: &Trajectory) -> (bool, String) {
        match effective_collapse_check(&self.spec, &trajectory.record, None) {
            CollapseReport::Conclusive { max_divergence, passed, branch, .. } => (
                true,
                format!("branch {branch:?}, divergence {max_divergence:.3e}, passed {passed}"),
            ),
            CollapseReport::Inconclusive { reason } => (false, reason),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Simulation(scenario={}, particles={}, T={})",
            self.spec.id,
            self.spec.n_particles(),
            self.spec.t_total
        )
    }
}

/// Names of the catalog scenarios.
#[pyfunction]
fn list_scenarios() -> Vec<String> {
    catalog().into_iter().map(|s| s.id).collect()
}

/// Names of the verification suites.
#[pyfunction]
fn list_suites() -> Vec<&'static str> {
    SUITES.iter().map(|(id, _)| *id).collect()
}

/// Run one verification suite; returns (passed, details).
#[pyfunction]
#[pyo3(signature = (suite, seed=DEFAULT_SUITE_SEED))]
fn verify(py: Python<'_>, suite: &str, seed: u64) -> PyResult<(bool, String)> {
    let f = criterion_by_id(suite).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown suite `{suite}`; available: {}",
            SUITES.iter().map(|(s, _)| *s).collect::<Vec<_>>().join(", ")
        ))
    })?;
    let report = py.detach(|| f(seed));
    Ok((report.passed, report.details))
}

#[pymodule]
fn zigzag_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Simulation>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(list_suites, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}

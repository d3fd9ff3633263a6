//! Python bindings: scenario loading, gain design, linear-covariance
//! prediction and Monte Carlo ensembles.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use entry_guidance::cli::synthesis_options;
use entry_guidance::error::Error;
use entry_guidance::gains::design::{design_apollo, design_stochastic, design_zero, Design, DesignContext, TriggerKind};
use entry_guidance::montecarlo::{run_ensemble, Ensemble, TrialSetup, QUANTITIES};
use entry_guidance::scenario::Scenario;

pyo3::create_exception!(entry_guidance, InfeasibleError, PyRuntimeError);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        Error::Infeasible(_) => InfeasibleError::new_err(err.to_string()),
        Error::Argument(_) | Error::Config(_) | Error::Domain(_) => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn trigger_kind(name: &str) -> PyResult<TriggerKind> {
    match name {
        "time" => Ok(TriggerKind::Time),
        "velocity" => Ok(TriggerKind::Velocity),
        _ => Err(PyValueError::new_err(format!("unknown trigger {name:?}; expected 'time' or 'velocity'"))),
    }
}

/// A loaded scenario with its reference trajectory and linear model.
#[pyclass(name = "Scenario", frozen)]
struct PyScenario {
    scenario: Scenario,
    ctx: DesignContext,
}

#[pymethods]
impl PyScenario {
    /// Loads a scenario TOML; the bundled Mars scenario when `path` is None.
    #[staticmethod]
    #[pyo3(signature = (path=None))]
    fn load(path: Option<PathBuf>) -> PyResult<Self> {
        let path = path.unwrap_or_else(Scenario::default_path);
        let (scenario, _) = Scenario::load(path).map_err(to_py)?;
        let ctx = DesignContext::new(&scenario).map_err(to_py)?;
        Ok(Self { scenario, ctx })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.scenario.seed
    }

    #[getter]
    fn trials(&self) -> usize {
        self.scenario.trials
    }

    /// Nominal final time of the reference trajectory (s).
    #[getter]
    fn final_time(&self) -> f64 {
        self.ctx.reference.final_time()
    }

    /// Partition times of the gain schedules (s).
    #[getter]
    fn partition_times(&self) -> Vec<f64> {
        self.ctx.partition.times.clone()
    }

    /// Reference trajectory as columns: t, r, V, gamma, range, rho, cos_bank.
    fn reference(&self) -> Vec<(String, Vec<f64>)> {
        let nodes = &self.ctx.reference.nodes;
        let col = |f: &dyn Fn(&entry_guidance::flight::FlightNode) -> f64| nodes.iter().map(f).collect::<Vec<_>>();
        vec![
            ("t".into(), col(&|n| n.t)),
            ("r".into(), col(&|n| n.x[0])),
            ("V".into(), col(&|n| n.x[1])),
            ("gamma".into(), col(&|n| n.x[2])),
            ("range".into(), col(&|n| n.x[3])),
            ("rho".into(), col(&|n| n.x[4])),
            ("cos_bank".into(), col(&|n| n.u_nominal)),
        ]
    }

    /// Designs a gain schedule. `method` is "apollo", "stochastic" or
    /// "zero"; `trigger` is "time" or "velocity".
    fn design(&self, py: Python<'_>, method: &str, trigger: &str) -> PyResult<PyDesign> {
        let kind = trigger_kind(trigger)?;
        let (s, ctx) = (&self.scenario, &self.ctx);
        let design = py
            .detach(|| match method {
                "apollo" => design_apollo(ctx, s, kind),
                "stochastic" => design_stochastic(ctx, s, kind, &synthesis_options(s)),
                "zero" => design_zero(ctx, s, kind),
                _ => Err(Error::Argument(format!(
                    "unknown method {method:?}; expected 'apollo', 'stochastic' or 'zero'"
                ))),
            })
            .map_err(to_py)?;
        Ok(PyDesign { design })
    }

    /// Runs `trials` dispersed trials of `design` and returns the ensemble.
    #[pyo3(signature = (design, trials, seed=None, workers=1))]
    fn monte_carlo(
        &self,
        py: Python<'_>,
        design: &PyDesign,
        trials: usize,
        seed: Option<u64>,
        workers: usize,
    ) -> PyResult<PyEnsemble> {
        let setup = TrialSetup {
            scenario: &self.scenario,
            reference: &self.ctx.reference,
            dispersions: &self.scenario.dispersions,
            seed: seed.unwrap_or(self.scenario.seed),
            record_times: &self.ctx.partition.times,
        };
        let ensemble = py
            .detach(|| run_ensemble(&setup, &design.design.schedule, trials, workers))
            .map_err(to_py)?;
        Ok(PyEnsemble { ensemble })
    }
}

/// A designed gain schedule and its predicted closed-loop covariance.
#[pyclass(name = "Design", frozen)]
struct PyDesign {
    design: Design,
}

#[pymethods]
impl PyDesign {
    #[getter]
    fn trigger(&self) -> &'static str {
        self.design.kind.as_str()
    }

    /// Gain rows `[K_r, K_V, K_gamma, K_R, K_rho]` in schedule order.
    #[getter]
    fn gains(&self) -> Vec<[f64; 5]> {
        self.design
            .schedule
            .rows
            .iter()
            .map(|r| [r.gain[0], r.gain[1], r.gain[2], r.gain[3], r.gain[4]])
            .collect()
    }

    /// Schedule index values: times (s) or speeds (m/s).
    #[getter]
    fn index_values(&self) -> Vec<f64> {
        self.design.schedule.rows.iter().map(|r| r.index_value).collect()
    }

    /// Predicted standard deviation of state `index` at the trigger.
    fn terminal_sigma(&self, index: usize) -> PyResult<f64> {
        if index >= 5 {
            return Err(PyValueError::new_err("state index must be below 5"));
        }
        Ok(self.design.terminal_sigma(index))
    }

    /// Predicted correlation of states `i` and `j` at the nominal final time.
    fn final_correlation(&self, i: usize, j: usize) -> PyResult<f64> {
        if i >= 5 || j >= 5 {
            return Err(PyValueError::new_err("state index must be below 5"));
        }
        Ok(self.design.final_correlation(i, j))
    }

    /// Predicted standard deviation of the bank-cosine correction per step.
    fn control_sigma(&self) -> Vec<f64> {
        self.design
            .covariance
            .control_variance
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect()
    }

    /// Writes the schedule CSV read by the command-line tool.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        self.design.schedule.write_csv(std::io::BufWriter::new(file)).map_err(to_py)
    }
}

/// Trial results and summary statistics of one Monte Carlo ensemble.
#[pyclass(name = "Ensemble", frozen)]
struct PyEnsemble {
    ensemble: Ensemble,
}

#[pymethods]
impl PyEnsemble {
    #[getter]
    fn completed(&self) -> usize {
        self.ensemble.stats.completed
    }

    #[getter]
    fn flagged(&self) -> usize {
        self.ensemble.stats.flagged
    }

    #[getter]
    fn saturation_frequency(&self) -> f64 {
        self.ensemble.stats.saturation_frequency
    }

    /// 1st, 50th and 99th percentiles of a final-error quantity such as
    /// "range_m" or "velocity_mps".
    fn percentiles(&self, quantity: &str) -> PyResult<(f64, f64, f64)> {
        let q = self
            .ensemble
            .stats
            .quantity(quantity)
            .ok_or_else(|| PyValueError::new_err(format!("unknown quantity {quantity:?}")))?;
        Ok((q.percentiles.p01, q.percentiles.p50, q.percentiles.p99))
    }

    /// Final errors of every completed trial for `quantity`.
    fn errors(&self, quantity: &str) -> PyResult<Vec<f64>> {
        let (_, pick) = QUANTITIES
            .iter()
            .find(|(n, _)| *n == quantity)
            .ok_or_else(|| PyValueError::new_err(format!("unknown quantity {quantity:?}")))?;
        Ok(self
            .ensemble
            .trials
            .iter()
            .filter(|t| t.completed())
            .map(|t| pick(&t.errors))
            .collect())
    }

    /// Fraction of completed trials with `|error| <= limit`.
    fn fraction_within(&self, quantity: &str, limit: f64) -> f64 {
        self.ensemble.fraction_within(quantity, limit)
    }
}

#[pymodule]
fn entry_guidance_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyDesign>()?;
    m.add_class::<PyEnsemble>()?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

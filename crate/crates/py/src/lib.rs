//! Python bindings: load cases, build and solve SCUC models, plan
//! reductions, compute metrics and run pipeline stages.

use std::collections::{BTreeMap, BTreeSet};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use scuc_core::metrics;
use scuc_core::milp::{export_mps, solve, MilpModel, SolveOptions};
use scuc_core::pipeline::{run_stage, RunConfig, Stage, StageOptions};
use scuc_core::power_model::{compute_ptdf, Network};
use scuc_core::reduction::{self, Thresholds};
use scuc_core::scuc::{build, BuildOptions, Formulation, Schedule};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Network", frozen)]
struct PyNetwork {
    inner: Network,
}

#[pymethods]
impl PyNetwork {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyNetwork {
            inner: Network::load(path).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyNetwork {
            inner: Network::from_case_json(text).map_err(value_err)?,
        })
    }

    #[getter]
    fn n_buses(&self) -> usize {
        self.inner.n_buses()
    }

    #[getter]
    fn n_generators(&self) -> usize {
        self.inner.n_generators()
    }

    #[getter]
    fn n_lines(&self) -> usize {
        self.inner.n_lines()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn base_demand(&self) -> Vec<Vec<f64>> {
        self.inner.base_demand.clone()
    }

    /// `(from_bus, to_bus, limit)` of each merged line.
    #[getter]
    fn lines(&self) -> Vec<(usize, usize, f64)> {
        self.inner.lines.iter().map(|l| (l.from_bus, l.to_bus, l.limit)).collect()
    }

    /// Line-by-bus PTDF matrix.
    fn ptdf(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(compute_ptdf(&self.inner).map_err(value_err)?.values)
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(buses={}, generators={}, lines={}, T={})",
            self.inner.n_buses(),
            self.inner.n_generators(),
            self.inner.n_lines(),
            self.inner.horizon()
        )
    }
}

#[pyclass(name = "Model", frozen)]
struct PyModel {
    network: Network,
    inner: MilpModel,
}

#[pymethods]
impl PyModel {
    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = self.inner.stats();
        let d = PyDict::new(py);
        d.set_item("binaries", s.n_binaries)?;
        d.set_item("continuous", s.n_continuous)?;
        d.set_item("constraints", s.n_constraints)?;
        Ok(d)
    }

    fn to_mps(&self) -> String {
        export_mps(&self.inner)
    }

    /// Solves the model; the GIL is released while branch and bound runs.
    #[pyo3(signature = (mip_gap=0.001, time_limit=600.0))]
    fn solve<'py>(&self, py: Python<'py>, mip_gap: f64, time_limit: f64) -> PyResult<Bound<'py, PyDict>> {
        let opts = SolveOptions {
            mip_gap,
            time_limit,
            ..SolveOptions::default()
        };
        let sol = py.detach(|| solve(&self.inner, &opts));
        let d = PyDict::new(py);
        d.set_item("status", format!("{:?}", sol.status))?;
        d.set_item("node_count", sol.node_count)?;
        d.set_item("solve_time", sol.solve_time)?;
        if sol.has_solution() {
            let s = Schedule::extract(&self.network, &self.inner, &sol);
            d.set_item("objective", sol.objective)?;
            d.set_item("commitment", s.commitment)?;
            d.set_item("dispatch", s.dispatch)?;
            d.set_item("flows", s.flows)?;
        } else {
            d.set_item("objective", py.None())?;
        }
        Ok(d)
    }
}

/// Builds an SCUC model. `fixed` maps `(g, t)` to a commitment value;
/// `inactive_lines` lists lines whose thermal limits are dropped.
#[pyfunction]
#[pyo3(signature = (network, demand=None, formulation="ptdf", reserve=true, fixed=None, inactive_lines=None))]
fn build_model(
    network: &PyNetwork,
    demand: Option<Vec<Vec<f64>>>,
    formulation: &str,
    reserve: bool,
    fixed: Option<BTreeMap<(usize, usize), bool>>,
    inactive_lines: Option<BTreeSet<usize>>,
) -> PyResult<PyModel> {
    let formulation: Formulation = formulation.parse().map_err(PyValueError::new_err)?;
    let mut opts = BuildOptions::new(formulation);
    opts.reserve_enabled = reserve;
    opts.fixed_commitments = fixed.unwrap_or_default();
    opts.inactive_thermal = inactive_lines.unwrap_or_default();
    let demand = demand.unwrap_or_else(|| network.inner.base_demand.clone());
    let model = build(&network.inner, &demand, &opts).map_err(value_err)?;
    Ok(PyModel {
        network: network.inner.clone(),
        inner: model,
    })
}

/// Splits commitment probabilities into fixings and warm starts.
/// Returns `(fixed, warm)`, each a dict `(g, t) -> bool`.
#[pyfunction]
#[pyo3(signature = (probs, fix_on=0.9, fix_off=0.1, warm_on=0.5))]
#[allow(clippy::type_complexity)]
fn plan_variable_reduction(
    probs: Vec<Vec<f64>>,
    fix_on: f64,
    fix_off: f64,
    warm_on: f64,
) -> PyResult<(BTreeMap<(usize, usize), bool>, BTreeMap<(usize, usize), bool>)> {
    let th = Thresholds {
        fix_on,
        fix_off,
        warm_on,
        ..Thresholds::default()
    };
    th.validate().map_err(value_err)?;
    let plan = reduction::plan_variable_reduction(&probs, &th).map_err(value_err)?;
    Ok((plan.fixed, plan.warm))
}

/// Lines whose probability stays below `line_active` in every period.
#[pyfunction]
#[pyo3(signature = (probs, line_active=0.5))]
fn plan_constraint_reduction(probs: Vec<Vec<f64>>, line_active: f64) -> PyResult<BTreeSet<usize>> {
    let th = Thresholds {
        line_active,
        ..Thresholds::default()
    };
    reduction::plan_constraint_reduction(&probs, &th).map_err(value_err)
}

#[pyfunction]
fn accuracy(pred: Vec<Vec<Vec<u8>>>, truth: Vec<Vec<Vec<u8>>>) -> PyResult<f64> {
    metrics::accuracy(&pred, &truth).map_err(value_err)
}

#[pyfunction]
fn bnc(base_cost: f64, reduced_cost: f64) -> PyResult<f64> {
    metrics::bnc(base_cost, reduced_cost).map_err(value_err)
}

#[pyfunction]
fn bnts(base_time: f64, reduced_time: f64) -> PyResult<f64> {
    metrics::bnts(base_time, reduced_time).map_err(value_err)
}

/// Runs one pipeline stage. `config` is a JSON document in the same format
/// as the CLI's `--config` file.
#[pyfunction]
#[pyo3(signature = (stage, config, oracle=false, variant=None, allow_mixed=false))]
fn run_pipeline_stage(
    py: Python<'_>,
    stage: &str,
    config: &str,
    oracle: bool,
    variant: Option<&str>,
    allow_mixed: bool,
) -> PyResult<()> {
    let stage = Stage::ALL
        .into_iter()
        .find(|s| s.name() == stage)
        .ok_or_else(|| PyValueError::new_err(format!("unknown stage {stage:?}")))?;
    let cfg: RunConfig = serde_json::from_str(config).map_err(value_err)?;
    let opts = StageOptions {
        variant: variant.map(str::parse).transpose().map_err(PyValueError::new_err)?,
        allow_mixed,
        oracle,
    };
    py.detach(|| run_stage(stage, &cfg, &opts))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn scuc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(build_model, m)?)?;
    m.add_function(wrap_pyfunction!(plan_variable_reduction, m)?)?;
    m.add_function(wrap_pyfunction!(plan_constraint_reduction, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(bnc, m)?)?;
    m.add_function(wrap_pyfunction!(bnts, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline_stage, m)?)?;
    Ok(())
}

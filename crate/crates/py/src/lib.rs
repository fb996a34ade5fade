//! Python bindings: datasets, DDR ensembles, ECDFs, the KS test and the
//! experiment drivers.

// pyo3 0.22 macro expansion trips this lint on every PyResult method
#![allow(clippy::useless_conversion)]

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ddr_core::dataset::{self as ds, CsvOptions, OutputColumn};
use ddr_core::ddr::{self as core_ddr, DivisionSchedule, SlidingWindowSpec};
use ddr_core::experiments;
use ddr_core::learner::Model;
use ddr_core::persist;
use ddr_core::stats;
use ddr_core::LearnerSpec;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// `"ka"`, `"linear"` or a JSON learner object such as
/// `{"kind": "ka", "mu": 0.002, "passes": 4}`.
fn learner_spec(s: &str) -> PyResult<LearnerSpec> {
    match s.trim() {
        "ka" => Ok(LearnerSpec::default()),
        "linear" => Ok(LearnerSpec::Linear(Default::default())),
        json => serde_json::from_str(json).map_err(err),
    }
}

#[pyclass(name = "Dataset", module = "ddr")]
#[derive(Clone)]
struct PyDataset {
    inner: ds::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(dim: usize) -> Self {
        Self {
            inner: ds::Dataset::new(dim),
        }
    }

    /// Builds a dataset from a list of input rows and a list of outputs.
    #[staticmethod]
    fn from_rows(inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> PyResult<Self> {
        if inputs.len() != outputs.len() {
            return Err(err(format!(
                "{} input rows but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        let dim = inputs.first().map_or(0, Vec::len);
        let mut d = ds::Dataset::with_capacity(dim, inputs.len());
        for (x, y) in inputs.iter().zip(outputs) {
            d.push(x, y).map_err(err)?;
        }
        Ok(Self { inner: d })
    }

    /// Loads a CSV file; the last column is the output.
    #[staticmethod]
    #[pyo3(signature = (path, delimiter = ",", has_header = true))]
    fn load_csv(path: &str, delimiter: &str, has_header: bool) -> PyResult<Self> {
        let &[delimiter] = delimiter.as_bytes() else {
            return Err(err("delimiter must be a single byte"));
        };
        let opts = CsvOptions {
            delimiter,
            has_header,
            output: OutputColumn::Last,
        };
        Ok(Self {
            inner: ds::load_csv(path.as_ref(), &opts).map_err(err)?,
        })
    }

    fn push(&mut self, inputs: Vec<f64>, output: f64) -> PyResult<()> {
        self.inner.push(&inputs, output).map_err(err)
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv(path.as_ref()).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn input(&self, i: usize) -> PyResult<Vec<f64>> {
        self.check(i)?;
        Ok(self.inner.input(i).to_vec())
    }

    fn output(&self, i: usize) -> PyResult<f64> {
        self.check(i)?;
        Ok(self.inner.output(i))
    }

    fn outputs(&self) -> Vec<f64> {
        self.inner.outputs().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(records={}, dim={})",
            self.inner.len(),
            self.inner.dim()
        )
    }
}

impl PyDataset {
    fn check(&self, i: usize) -> PyResult<()> {
        if i < self.inner.len() {
            Ok(())
        } else {
            Err(pyo3::exceptions::PyIndexError::new_err(format!(
                "record {i} out of range for {} records",
                self.inner.len()
            )))
        }
    }
}

/// Generates `n` records of the five-input stochastic benchmark system.
#[pyfunction]
#[pyo3(signature = (n, noise = 0.4, seed = 1))]
fn synthetic(n: usize, noise: f64, seed: u64) -> PyResult<PyDataset> {
    let spec = ds::SyntheticSpec::new(noise, seed).map_err(err)?;
    Ok(PyDataset {
        inner: spec.generate(n).map_err(err)?,
    })
}

/// Sorted Monte-Carlo sample of the benchmark system's output at `x`.
#[pyfunction]
#[pyo3(signature = (x, n, noise = 0.4, seed = 1))]
fn oracle_sample(x: Vec<f64>, n: usize, noise: f64, seed: u64) -> PyResult<Vec<f64>> {
    let spec = ds::SyntheticSpec::new(noise, seed).map_err(err)?;
    spec.oracle_sample(&x, n, seed).map_err(err)
}

#[pyclass(name = "Ensemble", module = "ddr")]
struct PyEnsemble {
    inner: core_ddr::Ensemble<Model>,
}

#[pymethods]
impl PyEnsemble {
    /// Sorted outputs of every model at `x`.
    fn predict_sample(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.predict_sample(&x).map_err(err)
    }

    /// Final working order of the records (empty for loaded ensembles).
    #[getter]
    fn order(&self) -> Vec<usize> {
        self.inner.order.clone()
    }

    /// Mean absolute residual after each division step.
    #[getter]
    fn step_residuals(&self) -> Vec<f64> {
        self.inner
            .steps
            .iter()
            .map(|s| s.mean_abs_residual)
            .collect()
    }

    /// Sliding-window models over this ensemble's final order.
    #[pyo3(signature = (data, length, stride, learner = "ka", seed = 1))]
    fn sliding(
        &self,
        data: &PyDataset,
        length: usize,
        stride: usize,
        learner: &str,
        seed: u64,
    ) -> PyResult<Self> {
        let window = SlidingWindowSpec::new(length, stride).map_err(err)?;
        let spec = learner_spec(learner)?;
        let inner =
            core_ddr::build_sliding_ensemble(&data.inner, &self.inner.order, window, &spec, seed)
                .map_err(err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        persist::save_models(path.as_ref(), &self.inner.models).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core_ddr::Ensemble {
                models: persist::load_models(path.as_ref()).map_err(err)?,
                order: Vec::new(),
                steps: Vec::new(),
            },
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Ensemble(models={})", self.inner.len())
    }
}

/// Trains a DDR ensemble; `schedule` lists the cluster count of each step.
#[pyfunction]
#[pyo3(signature = (data, schedule = None, learner = "ka", seed = 1))]
fn build_ensemble(
    py: Python<'_>,
    data: &PyDataset,
    schedule: Option<Vec<usize>>,
    learner: &str,
    seed: u64,
) -> PyResult<PyEnsemble> {
    let schedule = match schedule {
        Some(s) => DivisionSchedule::new(s).map_err(err)?,
        None => DivisionSchedule::reference(),
    };
    let spec = learner_spec(learner)?;
    let inner = py
        .allow_threads(|| core_ddr::build_ensemble(&data.inner, &schedule, &spec, seed))
        .map_err(err)?;
    Ok(PyEnsemble { inner })
}

/// The bagging-style baseline: `w` models on disjoint random subsets.
#[pyfunction]
#[pyo3(signature = (data, w, learner = "ka", seed = 1))]
fn build_random_disjoint(
    py: Python<'_>,
    data: &PyDataset,
    w: usize,
    learner: &str,
    seed: u64,
) -> PyResult<PyEnsemble> {
    let spec = learner_spec(learner)?;
    let inner = py
        .allow_threads(|| core_ddr::build_random_disjoint_ensemble(&data.inner, w, &spec, seed))
        .map_err(err)?;
    Ok(PyEnsemble { inner })
}

#[pyclass(name = "ExpectationVariance", module = "ddr")]
struct PyExpectationVariance {
    inner: core_ddr::ExpectationVariance<Model>,
}

#[pymethods]
impl PyExpectationVariance {
    fn predict_mean(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.predict_mean(&x).map_err(err)
    }

    fn predict_variance(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.predict_variance(&x).map_err(err)
    }

    #[getter]
    fn clamped_fraction(&self) -> f64 {
        self.inner.clamped_fraction
    }
}

/// Expectation model plus a variance model fitted to squared residuals.
#[pyfunction]
#[pyo3(signature = (data, learner = "ka", seed = 1))]
fn fit_expectation_variance(
    py: Python<'_>,
    data: &PyDataset,
    learner: &str,
    seed: u64,
) -> PyResult<PyExpectationVariance> {
    let spec = learner_spec(learner)?;
    let inner = py
        .allow_threads(|| core_ddr::fit_expectation_variance(&data.inner, &spec, seed))
        .map_err(err)?;
    Ok(PyExpectationVariance { inner })
}

#[pyclass(name = "Ecdf", module = "ddr")]
struct PyEcdf {
    inner: stats::Ecdf,
}

#[pymethods]
impl PyEcdf {
    #[new]
    fn new(sample: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: stats::Ecdf::new(sample).map_err(err)?,
        })
    }

    /// Fraction of the sample that is `<= t`.
    fn __call__(&self, t: f64) -> f64 {
        self.inner.eval(t)
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    /// `(value, cumulative_probability)` at each distinct value.
    fn steps(&self) -> Vec<(f64, f64)> {
        self.inner.steps()
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv(path.as_ref()).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Two-sample Kolmogorov-Smirnov test: `(statistic, critical, passed)`.
#[pyfunction]
#[pyo3(signature = (a, b, alpha = 0.05))]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>, alpha: f64) -> PyResult<(f64, f64, bool)> {
    let o = stats::ks_two_sample(&a, &b, alpha).map_err(err)?;
    Ok((o.statistic, o.critical, o.pass))
}

#[pyfunction]
fn pearson(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    stats::pearson(&u, &v).map_err(err)
}

#[pyfunction]
fn rmse(predicted: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    stats::rmse(&predicted, &actual).map_err(err)
}

/// Runs the distribution benchmark; `config` and the result are JSON text.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn run_benchmark(py: Python<'_>, config: Option<&str>) -> PyResult<String> {
    let cfg: experiments::BenchmarkConfig = match config {
        Some(c) => serde_json::from_str(c).map_err(err)?,
        None => Default::default(),
    };
    let report = py
        .allow_threads(|| experiments::run_benchmark(&cfg))
        .map_err(err)?;
    serde_json::to_string(&report).map_err(err)
}

/// Runs the variance-accuracy experiment; `config` and the result are JSON.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn run_variance(py: Python<'_>, config: Option<&str>) -> PyResult<String> {
    let cfg: experiments::VarianceConfig = match config {
        Some(c) => serde_json::from_str(c).map_err(err)?,
        None => Default::default(),
    };
    let report = py
        .allow_threads(|| experiments::run_variance(&cfg))
        .map_err(err)?;
    serde_json::to_string(&report).map_err(err)
}

#[pymodule]
fn ddr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_class::<PyExpectationVariance>()?;
    m.add_class::<PyEcdf>()?;
    m.add_function(wrap_pyfunction!(synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_sample, m)?)?;
    m.add_function(wrap_pyfunction!(build_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(build_random_disjoint, m)?)?;
    m.add_function(wrap_pyfunction!(fit_expectation_variance, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(run_variance, m)?)?;
    Ok(())
}

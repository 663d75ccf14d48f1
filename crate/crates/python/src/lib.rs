//! Python bindings: datasets, scenario generation, network training, the
//! spline baseline and MISPE evaluation.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use fosdnn::evaluation::{self, Fitted, LinearConfig, MethodConfig};
use fosdnn::network::{count_params as count, NetworkShape};
use fosdnn::numerics::{QuadratureMode, RngStream, TimeGrid};
use fosdnn::scenarios::{self, Scenario, ScenarioSpec, XType};
use fosdnn::training::{self, CurvePredictor, FunctionalDataset, FunctionalSample, OptimizerKind};

fn to_py(e: fosdnn::Error) -> PyErr {
    match e {
        fosdnn::Error::Io(io) => PyOSError::new_err(io.to_string()),
        e if e.exit_code() == 2 => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn xtype(v: u8) -> PyResult<XType> {
    match v {
        1 => Ok(XType::Uniform),
        2 => Ok(XType::Normal01),
        3 => Ok(XType::Normal05),
        _ => Err(PyValueError::new_err(format!("xtype must be 1, 2 or 3, got {v}"))),
    }
}

fn scenario(name: &str) -> PyResult<Scenario> {
    name.parse().map_err(to_py)
}

/// A set of response curves with their covariates.
#[pyclass(name = "Dataset", from_py_object)]
#[derive(Clone)]
pub struct PyDataset {
    inner: FunctionalDataset,
}

#[pymethods]
impl PyDataset {
    /// Build from covariate rows, one shared time grid and response rows.
    #[new]
    fn new(x: Vec<Vec<f64>>, grid: Vec<f64>, y: Vec<Vec<f64>>) -> PyResult<Self> {
        if x.len() != y.len() {
            return Err(PyValueError::new_err("x and y must have the same number of rows"));
        }
        let d = x.first().map_or(0, Vec::len);
        let grid = TimeGrid::new(grid).map_err(to_py)?;
        let samples = x
            .into_iter()
            .zip(y)
            .map(|(xi, yi)| FunctionalSample::new(xi, grid.clone(), yi))
            .collect::<fosdnn::Result<Vec<_>>>()
            .map_err(to_py)?;
        Ok(Self {
            inner: FunctionalDataset::new(d, samples).map_err(to_py)?,
        })
    }

    /// Read the covariate and long-format response CSVs.
    #[staticmethod]
    #[pyo3(signature = (covariates, responses, normalize=false))]
    fn load(covariates: PathBuf, responses: PathBuf, normalize: bool) -> PyResult<Self> {
        let mut loaded = fosdnn::io::load_dataset(&covariates, &responses).map_err(to_py)?;
        if normalize {
            fosdnn::io::Normalization::fit(&loaded.data)
                .apply(&mut loaded.data)
                .map_err(to_py)?;
        }
        Ok(Self { inner: loaded.data })
    }

    fn save(&self, covariates: PathBuf, responses: PathBuf) -> PyResult<()> {
        fosdnn::io::save_dataset(&self.inner, &covariates, &responses).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn x(&self) -> Vec<Vec<f64>> {
        self.inner.samples().iter().map(|s| s.x().to_vec()).collect()
    }

    fn y(&self) -> Vec<Vec<f64>> {
        self.inner.samples().iter().map(|s| s.y().to_vec()).collect()
    }

    fn grids(&self) -> Vec<Vec<f64>> {
        self.inner
            .samples()
            .iter()
            .map(|s| s.grid().points().to_vec())
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, d={})", self.inner.n(), self.inner.d())
    }
}

/// Network training settings; every argument has the library default.
#[pyclass(name = "TrainConfig", from_py_object)]
#[derive(Clone)]
pub struct PyTrainConfig {
    inner: training::TrainConfig,
}

#[pymethods]
impl PyTrainConfig {
    #[new]
    #[pyo3(signature = (width=32, depth=6, alpha=1e-3, learning_rate=1e-3, batch_size=64, epochs=500,
                        optimizer="adam", seed=0, quadrature="paper-literal", clip=false, clip_bound=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        width: usize,
        depth: usize,
        alpha: f64,
        learning_rate: f64,
        batch_size: usize,
        epochs: usize,
        optimizer: &str,
        seed: u64,
        quadrature: &str,
        clip: bool,
        clip_bound: Option<f64>,
    ) -> PyResult<Self> {
        let inner = training::TrainConfig {
            width,
            depth,
            alpha,
            learning_rate,
            batch_size,
            epochs,
            optimizer: optimizer.parse::<OptimizerKind>().map_err(to_py)?,
            seed,
            quadrature: quadrature.parse::<QuadratureMode>().map_err(to_py)?,
            clip,
            clip_bound,
            ..training::TrainConfig::default()
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: training::TrainConfig =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "TrainConfig(width={}, depth={}, alpha={}, epochs={})",
            c.width, c.depth, c.alpha, c.epochs
        )
    }
}

/// A fitted network or spline baseline.
#[pyclass(name = "Model", from_py_object)]
#[derive(Clone)]
pub struct PyModel {
    inner: Fitted,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner {
            Fitted::Fosdnn(_) => "fosdnn",
            Fitted::Linear(_) => "linear",
        }
    }

    /// Mean minibatch objective per epoch; `None` for the baseline.
    #[getter]
    fn loss_trace(&self) -> Option<Vec<f64>> {
        match &self.inner {
            Fitted::Fosdnn(m) => Some(m.loss_trace.clone()),
            Fitted::Linear(_) => None,
        }
    }

    #[getter]
    fn param_count(&self) -> usize {
        match &self.inner {
            Fitted::Fosdnn(m) => count(m.shape()),
            Fitted::Linear(m) => m.coefficients().len(),
        }
    }

    fn predict(&self, x: Vec<f64>, grid: Vec<f64>) -> PyResult<Vec<f64>> {
        let grid = TimeGrid::new(grid).map_err(to_py)?;
        self.inner.predict_curve(&x, &grid).map_err(to_py)
    }

    fn predict_dataset(&self, data: &PyDataset) -> PyResult<Vec<Vec<f64>>> {
        self.inner.predict_dataset(&data.inner).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        fosdnn::io::save_model(&self.inner, &path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: fosdnn::io::load_model(&path).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Model(kind={}, params={})", self.kind(), self.param_count())
    }
}

#[pyfunction]
fn count_params(d: usize, width: usize, depth: usize) -> PyResult<usize> {
    Ok(count(&NetworkShape::new(d, width, depth).map_err(to_py)?))
}

/// Unscaled true regression function of a benchmark scenario.
#[pyfunction]
fn true_function(scenario_name: &str, model: u8, x: Vec<f64>, t: f64) -> PyResult<f64> {
    scenarios::true_function(scenario(scenario_name)?, model, &x, t).map_err(to_py)
}

#[allow(clippy::too_many_arguments)]
fn make_spec(
    scenario_name: &str,
    model: u8,
    xt: u8,
    n_train: Option<usize>,
    n_test: Option<usize>,
    grid_size: Option<usize>,
    noise_sd: Option<f64>,
    seed: u64,
) -> PyResult<ScenarioSpec> {
    let mut spec = ScenarioSpec::new(scenario(scenario_name)?, model, xtype(xt)?).map_err(to_py)?;
    spec.n_train = n_train.unwrap_or(spec.n_train);
    spec.n_test = n_test.unwrap_or(spec.n_test);
    spec.grid_size = grid_size.unwrap_or(spec.grid_size);
    spec.noise_sd = noise_sd.unwrap_or(spec.noise_sd);
    spec.seed = seed;
    spec.validate().map_err(to_py)?;
    Ok(spec)
}

/// Simulate `(train, test, c)` for a scenario setting.
#[pyfunction]
#[pyo3(signature = (scenario, model=1, xtype=1, n_train=None, n_test=None, grid_size=None, noise_sd=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn generate_dataset(
    py: Python<'_>,
    scenario: &str,
    model: u8,
    xtype: u8,
    n_train: Option<usize>,
    n_test: Option<usize>,
    grid_size: Option<usize>,
    noise_sd: Option<f64>,
    seed: u64,
) -> PyResult<(PyDataset, PyDataset, f64)> {
    let spec = make_spec(scenario, model, xtype, n_train, n_test, grid_size, noise_sd, seed)?;
    let (train, test, signal) = py
        .detach(|| scenarios::generate_dataset(&spec, &RngStream::new(seed)))
        .map_err(to_py)?;
    Ok((PyDataset { inner: train }, PyDataset { inner: test }, signal.c))
}

#[pyfunction]
#[pyo3(signature = (data, config=None))]
fn train(py: Python<'_>, data: &PyDataset, config: Option<&PyTrainConfig>) -> PyResult<PyModel> {
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    let inner = data.inner.clone();
    let fitted = py.detach(|| training::train(&inner, &cfg)).map_err(to_py)?;
    Ok(PyModel {
        inner: Fitted::Fosdnn(fitted),
    })
}

/// Ridge-penalised cubic B-spline baseline with `k` basis functions.
#[pyfunction]
#[pyo3(signature = (data, k=15, lam=1e-6))]
fn fit_linear(data: &PyDataset, k: usize, lam: f64) -> PyResult<PyModel> {
    let m = fosdnn::baseline::fit_linear_fos(&data.inner, k, lam).map_err(to_py)?;
    Ok(PyModel {
        inner: Fitted::Linear(m),
    })
}

#[pyfunction]
#[pyo3(signature = (predictions, data, dt=evaluation::MISPE_DT))]
fn mispe(predictions: Vec<Vec<f64>>, data: &PyDataset, dt: f64) -> PyResult<f64> {
    evaluation::mispe(&predictions, &data.inner, dt).map_err(to_py)
}

/// Replicated experiment; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (scenario, model=1, xtype=1, method="fosdnn", reps=1, seed=0, n_train=None, n_test=None,
                    grid_size=None, noise_sd=None, config=None, k=None, lam=None))]
#[allow(clippy::too_many_arguments)]
fn replicate_experiment<'py>(
    py: Python<'py>,
    scenario: &str,
    model: u8,
    xtype: u8,
    method: &str,
    reps: usize,
    seed: u64,
    n_train: Option<usize>,
    n_test: Option<usize>,
    grid_size: Option<usize>,
    noise_sd: Option<f64>,
    config: Option<&PyTrainConfig>,
    k: Option<usize>,
    lam: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = make_spec(scenario, model, xtype, n_train, n_test, grid_size, noise_sd, seed)?;
    let method = match method {
        "fosdnn" => MethodConfig::Fosdnn(config.map(|c| c.inner.clone()).unwrap_or_else(|| {
            let (width, depth, alpha) = spec.scenario.default_network();
            training::TrainConfig {
                width,
                depth,
                alpha,
                ..Default::default()
            }
        })),
        "linear" => MethodConfig::Linear(LinearConfig {
            k: k.unwrap_or(spec.scenario.default_basis_size()),
            lambda: lam.unwrap_or(LinearConfig::default().lambda),
            ..LinearConfig::default()
        }),
        other => {
            return Err(PyValueError::new_err(format!(
                "method must be 'fosdnn' or 'linear', got {other:?}"
            )))
        }
    };
    let report = py
        .detach(|| evaluation::replicate_experiment(&spec, &method, reps, &RngStream::new(seed)))
        .map_err(to_py)?;
    json_to_py(py, &report)
}

#[pymodule]
pub fn fosdnn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(count_params, m)?)?;
    m.add_function(wrap_pyfunction!(true_function, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(fit_linear, m)?)?;
    m.add_function(wrap_pyfunction!(mispe, m)?)?;
    m.add_function(wrap_pyfunction!(replicate_experiment, m)?)?;
    m.add("MISPE_DT", evaluation::MISPE_DT)?;
    Ok(())
}

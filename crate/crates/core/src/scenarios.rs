//! Synthetic benchmark problems: true regression functions, predictor
//! distributions, signal scaling to unit integrated variance, and noisy
//! curve generation.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use ndarray::Array2;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    riemann_weights, sample_equicorr_normal, sample_uniform_cube, QuadratureMode, RngStream, TimeGrid,
};
use crate::training::{FunctionalDataset, FunctionalSample};

/// Monte Carlo sample size behind the cached scaling constants.
pub const SCALE_MC_SAMPLES: usize = 100_000;
const SCALE_SEED: u64 = 0x5CA1_E0F5_D11A_2024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "s1")]
    S1,
    #[serde(rename = "s1a")]
    S1A,
    #[serde(rename = "s2")]
    S2,
    #[serde(rename = "s3")]
    S3,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::S1, Scenario::S1A, Scenario::S2, Scenario::S3];

    pub fn d(self) -> usize {
        match self {
            Scenario::S1 => 3,
            Scenario::S1A | Scenario::S2 => 5,
            Scenario::S3 => 10,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::S1 => "S1",
            Scenario::S1A => "S1A",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
        }
    }

    /// Default training size of each scenario.
    pub fn default_n_train(self) -> usize {
        match self {
            Scenario::S1 | Scenario::S1A => 200,
            Scenario::S2 => 5000,
            Scenario::S3 => 10_000,
        }
    }

    /// Candidate `(widths, depths)` searched by cross-validation.
    pub fn cv_candidates(self) -> (Vec<usize>, Vec<usize>) {
        match self {
            Scenario::S1 => (vec![8, 16, 32], vec![5, 6, 7]),
            _ => (vec![16, 32, 64], vec![6, 7, 8]),
        }
    }

    /// Default network setting `(W, L, α)`.
    pub fn default_network(self) -> (usize, usize, f64) {
        match self {
            Scenario::S1 | Scenario::S1A => (32, 6, 1e-3),
            Scenario::S2 => (32, 6, 1e-5),
            Scenario::S3 => (32, 7, 1e-3),
        }
    }

    /// Spline basis size of the linear baseline; the inhomogeneous scenarios
    /// add ten functions to the default fifteen.
    pub fn default_basis_size(self) -> usize {
        match self {
            Scenario::S1 | Scenario::S1A => 15,
            Scenario::S2 | Scenario::S3 => 25,
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "1" => Ok(Scenario::S1),
            "s1a" | "s1-a" | "1a" | "1-a" => Ok(Scenario::S1A),
            "s2" | "2" => Ok(Scenario::S2),
            "s3" | "3" => Ok(Scenario::S3),
            other => Err(Error::config(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Joint distribution of the predictors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum XType {
    /// `Unif([-1, 1]^d)`
    Uniform,
    /// `N_d(0, Σ_0.1)`
    Normal01,
    /// `N_d(0, Σ_0.5)`
    Normal05,
}

impl XType {
    pub const ALL: [XType; 3] = [XType::Uniform, XType::Normal01, XType::Normal05];

    pub fn index(self) -> u8 {
        match self {
            XType::Uniform => 1,
            XType::Normal01 => 2,
            XType::Normal05 => 3,
        }
    }

    pub fn sample(self, rng: &mut RngStream, n: usize, d: usize) -> Result<Array2<f64>> {
        match self {
            XType::Uniform => sample_uniform_cube(rng, n, d, -1.0, 1.0),
            XType::Normal01 => sample_equicorr_normal(rng, n, d, 0.1),
            XType::Normal05 => sample_equicorr_normal(rng, n, d, 0.5),
        }
    }
}

impl TryFrom<u8> for XType {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(XType::Uniform),
            2 => Ok(XType::Normal01),
            3 => Ok(XType::Normal05),
            other => Err(Error::config(format!("xtype must be 1, 2 or 3, got {other}"))),
        }
    }
}

impl From<XType> for u8 {
    fn from(x: XType) -> u8 {
        x.index()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub model: u8,
    pub xtype: XType,
    pub n_train: usize,
    pub n_test: usize,
    pub grid_size: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Defaults: the scenario's headline training size, 1000 test curves,
    /// 100 grid points and noise standard deviation 0.1.
    pub fn new(scenario: Scenario, model: u8, xtype: XType) -> Result<Self> {
        let spec = Self {
            scenario,
            model,
            xtype,
            n_train: scenario.default_n_train(),
            n_test: 1000,
            grid_size: 100,
            noise_sd: 0.1,
            seed: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.model) {
            return Err(Error::config(format!("model must be 1, 2 or 3, got {}", self.model)));
        }
        if self.grid_size == 0 {
            return Err(Error::config("grid_size must be >= 1"));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::config(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.scenario.d()
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::equispaced(self.grid_size)
    }

    pub fn label(&self) -> String {
        format!("{}/M{}/X{}", self.scenario.label(), self.model, self.xtype.index())
    }
}

pub mod activation {
    pub fn tanh(x: f64) -> f64 {
        x.tanh()
    }

    pub fn gaussian(x: f64) -> f64 {
        (-x * x).exp()
    }

    pub fn relu(x: f64) -> f64 {
        x.max(0.0)
    }

    /// The logistic sigmoid `1 / (1 + e^{-x})`.
    pub fn logistic(x: f64) -> f64 {
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    }
}

use activation::{gaussian, logistic, relu, tanh};

/// Spiky component in one coordinate shared by Scenarios 2 and 3.
fn spike_exp_sin(decay: f64, a: f64, s: f64) -> f64 {
    (-decay * tanh(a - 0.5).powi(2) * s).exp() * (50.0 * (gaussian(tanh(a)) - 0.5).powi(2)).sin()
}

/// Variant with the `- 1/2` shift inside the gaussian, used by the first
/// and fifth terms of Scenario 3 Model 3.
fn spike_exp_sin_inner_shift(decay: f64, a: f64, s: f64) -> f64 {
    (-decay * tanh(a - 0.5).powi(2) * s).exp() * (50.0 * gaussian(tanh(a) - 0.5).powi(2)).sin()
}

fn spike_gauss_cos(x: f64, s: f64) -> f64 {
    let a = x.abs();
    gaussian(-50.0 * tanh(a - 0.5).powi(2) * s) * ((gaussian(x).exp() - 0.5).powi(2)).cos()
}

fn s1(model: u8, x: &[f64], t: f64) -> f64 {
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    match model {
        1 => x1 * (4.0 * t).sin() / (x1 * x1 + 1.0) + (-(x2 - 2.0).powi(2) / 2.0).exp() + (1.0 + t * x3.cos()),
        2 => s1_model2(x1, x2, x3, t),
        _ => (x1 * t * t + x2 * t - x3).powi(2) / (1.0 + x1 * x1 * t + x2 * x2 * t.sin().powi(2) + x3 * x3),
    }
}

/// The log term reads `log(1 + X₂² + X₃² + t²)`.
fn s1_model2(x1: f64, x2: f64, x3: f64, t: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    (x1 * x2 * (tau * t).cos() + (1.0 + x2 * x2 + x3 * x3 + t * t).ln()) * (-(x1 * x1 + x2 * x2 + x3 * x3) / 10.0).exp()
}

fn s1a(model: u8, x: &[f64], t: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let (x1, x2, x3, x4, x5) = (x[0], x[1], x[2], x[3], x[4]);
    match model {
        1 => {
            (x1 + t).sin()
                + (x2 + t).powi(2) / (x2 * x2 + 1.0)
                + (x3 * t).exp() / (1.0 + x3.exp())
                + (1.0 + x4 * x4 + t * t).ln()
                + x5 * (1.0 - t) * (tau * t).cos()
        }
        2 => (x1 - 2.0 * x2 + x3).cos() * t * t + (x4 + x5).sin() * t.exp(),
        _ => (x1 - x2 * t + 2.0 * x3 * t * t) / (1.0 + 2.0 * x4 * x4 + 4.0 * x5 * x5 * (tau * t).cos().powi(2)),
    }
}

fn s2(model: u8, x: &[f64], t: f64) -> f64 {
    let a: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let s = t + 1.0;
    let high1 = spike_exp_sin(15.0, a[0], s);
    match model {
        1 => {
            let inner = relu(a[0]) + tanh(a[1] + a[2]) + gaussian(a[3] + a[4]);
            high1 + (1.0 + inner * inner * s).ln()
        }
        2 => high1 + spike_gauss_cos(a[1], s) + (a[0] + a[1] * s) / (1.0 + (x[2] + x[3] + x[4]).abs() * s * s),
        _ => {
            high1 + spike_gauss_cos(a[1], s)
                - tanh(-80.0 * tanh(a[2] - 0.5).powi(2) * s) * ((relu(a[2].exp()) - 0.5).powi(2)).sin()
                + (-(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]) / 10.0).exp() * (1.0 + (a[3] * a[3] + a[4] * a[4]) * s)
        }
    }
}

fn s3_logistic_term(a3: f64, s: f64) -> f64 {
    logistic(-80.0 * tanh(a3 - 0.5).powi(2) * s) * (5.0 * (relu(a3.exp()) - 0.5).powi(2)).sin()
}

fn s3(model: u8, x: &[f64], t: f64) -> f64 {
    let a: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let s = t + 1.0;
    match model {
        1 => {
            let inner = relu(a[0..4].iter().sum()) + tanh(a[4..7].iter().sum()) + gaussian(a[7..10].iter().sum());
            spike_exp_sin(15.0, a[0], s) + (1.0 + inner * inner).ln() * s
        }
        2 => {
            spike_exp_sin(15.0, a[0], s)
                + spike_gauss_cos(x[1], s)
                + s3_logistic_term(a[2], s)
                + (a[0] + a[1] + a[2] + (a[3] + a[4]) * s) / (1.0 + x[5..10].iter().sum::<f64>().abs() * s * s)
        }
        _ => {
            let near: f64 = a[0..5].iter().map(|v| v * v).sum();
            let far: f64 = a[5..10].iter().map(|v| v * v).sum();
            spike_exp_sin_inner_shift(15.0, a[0], s) + spike_gauss_cos(x[1], s) + s3_logistic_term(a[2], s)
                - spike_gauss_cos(x[3], s)
                - spike_exp_sin_inner_shift(30.0, a[4], s)
                + (-near / 10.0).exp() * (1.0 + far * s)
        }
    }
}

/// Evaluate the unscaled true function `f°(x, t)` for a scenario and model.
pub fn true_function(scenario: Scenario, model: u8, x: &[f64], t: f64) -> Result<f64> {
    if x.len() != scenario.d() {
        return Err(Error::shape(format!(
            "{} expects {} predictors, got {}",
            scenario.label(),
            scenario.d(),
            x.len()
        )));
    }
    if !(1..=3).contains(&model) {
        return Err(Error::config(format!("model must be 1, 2 or 3, got {model}")));
    }
    Ok(match scenario {
        Scenario::S1 => s1(model, x, t),
        Scenario::S1A => s1a(model, x, t),
        Scenario::S2 => s2(model, x, t),
        Scenario::S3 => s3(model, x, t),
    })
}

/// Scaling constant `c` that gives `c · f°` unit integrated variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledSignal {
    pub c: f64,
    pub mc_samples: usize,
    /// Integrated variance of the unscaled signal.
    pub integrated_variance: f64,
}

/// `∫ Var_X f(X, t) dt` by Monte Carlo over the rows of `xs` and trapezoid
/// quadrature over `grid`.
pub fn integrated_variance<F>(f: F, xs: &Array2<f64>, grid: &TimeGrid) -> Result<f64>
where
    F: Fn(&[f64], f64) -> f64,
{
    let g = grid.len();
    let n = xs.nrows();
    if n < 2 {
        return Err(Error::config("integrated variance needs at least two draws"));
    }
    let mut mean = vec![0.0; g];
    let mut m2 = vec![0.0; g];
    let mut row = vec![0.0; xs.ncols()];
    for (i, x) in xs.rows().into_iter().enumerate() {
        row.iter_mut().zip(x.iter()).for_each(|(r, v)| *r = *v);
        let k = (i + 1) as f64;
        for (j, &t) in grid.points().iter().enumerate() {
            let v = f(&row, t);
            let delta = v - mean[j];
            mean[j] += delta / k;
            m2[j] += delta * (v - mean[j]);
        }
    }
    let weights = riemann_weights(grid, QuadratureMode::Trapezoid);
    let var: Vec<f64> = m2.iter().map(|s| s / (n as f64 - 1.0)).collect();
    crate::numerics::quad_integrate(&var, &weights)
}

/// Estimate `c = 1 / sqrt(V)` for an arbitrary signal.
pub fn estimate_scale_with<F>(
    f: F,
    xtype: XType,
    d: usize,
    grid: &TimeGrid,
    n_mc: usize,
    rng: &mut RngStream,
) -> Result<ScaledSignal>
where
    F: Fn(&[f64], f64) -> f64,
{
    if n_mc < 1000 {
        return Err(Error::config(format!("n_mc must be >= 1000, got {n_mc}")));
    }
    let xs = xtype.sample(rng, n_mc, d)?;
    let v = integrated_variance(f, &xs, grid)?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::numeric(format!(
            "signal has integrated variance {v}; cannot rescale"
        )));
    }
    Ok(ScaledSignal {
        c: 1.0 / v.sqrt(),
        mc_samples: n_mc,
        integrated_variance: v,
    })
}

pub fn estimate_scale(spec: &ScenarioSpec, n_mc: usize, rng: &mut RngStream) -> Result<ScaledSignal> {
    spec.validate()?;
    let (scenario, model) = (spec.scenario, spec.model);
    estimate_scale_with(
        |x, t| true_function(scenario, model, x, t).expect("dimension checked by sampler"),
        spec.xtype,
        spec.d(),
        &spec.grid()?,
        n_mc,
        rng,
    )
}

type ScaleKey = (Scenario, u8, XType, usize);

fn scale_cache() -> &'static Mutex<HashMap<ScaleKey, ScaledSignal>> {
    static CACHE: OnceLock<Mutex<HashMap<ScaleKey, ScaledSignal>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Scaling constant for a `(scenario, model, xtype, grid)` combination,
/// estimated once from a fixed seed with [`SCALE_MC_SAMPLES`] draws and
/// cached for the life of the process.
pub fn signal_scale(spec: &ScenarioSpec) -> Result<ScaledSignal> {
    let key = (spec.scenario, spec.model, spec.xtype, spec.grid_size);
    if let Some(s) = scale_cache().lock().expect("scale cache poisoned").get(&key) {
        return Ok(*s);
    }
    let stream = (spec.scenario as u64) << 24 | (spec.model as u64) << 16 | (spec.xtype.index() as u64) << 8;
    let mut rng = RngStream::new(SCALE_SEED).substream(stream ^ spec.grid_size as u64);
    let scaled = estimate_scale(spec, SCALE_MC_SAMPLES, &mut rng)?;
    scale_cache().lock().expect("scale cache poisoned").insert(key, scaled);
    Ok(scaled)
}

fn draw_dataset(
    spec: &ScenarioSpec,
    c: f64,
    n: usize,
    grid: &TimeGrid,
    rng: &mut RngStream,
) -> Result<FunctionalDataset> {
    let d = spec.d();
    if n == 0 {
        return FunctionalDataset::new(d, Vec::new());
    }
    let xs = spec.xtype.sample(rng, n, d)?;
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::config(e.to_string()))?;
    let samples = xs
        .rows()
        .into_iter()
        .map(|row| {
            let x = row.to_vec();
            let y = grid
                .points()
                .iter()
                .map(|&t| {
                    let signal = c * true_function(spec.scenario, spec.model, &x, t)?;
                    Ok(if spec.noise_sd > 0.0 {
                        signal + noise.sample(rng)
                    } else {
                        signal
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            FunctionalSample::new(x, grid.clone(), y)
        })
        .collect::<Result<Vec<_>>>()?;
    FunctionalDataset::new(d, samples)
}

/// Draw a training and a test set: `Y(t_j) = c · f°(X, t_j) + ε_j` with
/// i.i.d. `N(0, noise_sd²)` errors at every grid point of both sets.
pub fn generate_dataset(
    spec: &ScenarioSpec,
    rng: &RngStream,
) -> Result<(FunctionalDataset, FunctionalDataset, ScaledSignal)> {
    spec.validate()?;
    let signal = signal_scale(spec)?;
    let grid = spec.grid()?;
    let train = draw_dataset(spec, signal.c, spec.n_train, &grid, &mut rng.substream(0))?;
    let test = draw_dataset(spec, signal.c, spec.n_test, &grid, &mut rng.substream(1))?;
    Ok((train, test, signal))
}

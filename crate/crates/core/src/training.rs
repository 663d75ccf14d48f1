//! Functional datasets and the minibatch fit of the network to them.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{clip, forward_batch, init_params, loss_and_grad, Batch, ClipBound, NetworkParams, NetworkShape};
use crate::numerics::{riemann_weights, QuadratureMode, RngStream, TimeGrid};

/// One subject: scalar predictors and a response curve observed on `grid`.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalSample {
    x: Vec<f64>,
    grid: TimeGrid,
    y: Vec<f64>,
}

impl FunctionalSample {
    pub fn new(x: Vec<f64>, grid: TimeGrid, y: Vec<f64>) -> Result<Self> {
        if grid.len() != y.len() {
            return Err(Error::shape(format!(
                "grid has {} points but {} responses",
                grid.len(),
                y.len()
            )));
        }
        if let Some(v) = x.iter().chain(&y).find(|v| !v.is_finite()) {
            return Err(Error::config(format!("non-finite value {v} in sample")));
        }
        Ok(Self { x, grid, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub(crate) fn x_mut(&mut self) -> &mut [f64] {
        &mut self.x
    }
}

/// Samples sharing a predictor dimension `d`; grids may differ per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalDataset {
    d: usize,
    samples: Vec<FunctionalSample>,
}

impl FunctionalDataset {
    pub fn new(d: usize, samples: Vec<FunctionalSample>) -> Result<Self> {
        if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.x.len() != d) {
            return Err(Error::shape(format!(
                "sample {i} has {} predictors, dataset has d = {d}",
                s.x.len()
            )));
        }
        Ok(Self { d, samples })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[FunctionalSample] {
        &self.samples
    }

    pub(crate) fn samples_mut(&mut self) -> &mut [FunctionalSample] {
        &mut self.samples
    }

    pub fn subset(&self, indices: &[usize]) -> FunctionalDataset {
        FunctionalDataset {
            d: self.d,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn total_points(&self) -> usize {
        self.samples.iter().map(|s| s.y.len()).sum()
    }

    pub fn max_abs_response(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.y.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Self::Adam),
            "sgd" => Ok(Self::Sgd),
            other => Err(Error::config(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub width: usize,
    pub depth: usize,
    pub alpha: f64,
    pub learning_rate: f64,
    /// Number of curves per minibatch; clamped to the dataset size.
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub quadrature: QuadratureMode,
    pub clip: bool,
    /// Explicit clip bound; `1 + max|Y|` over the training data when absent.
    pub clip_bound: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            width: 32,
            depth: 6,
            alpha: 1e-3,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 500,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            quadrature: QuadratureMode::PaperLiteral,
            clip: false,
            clip_bound: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        positive("epsilon", self.epsilon)?;
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        if let Some(b) = self.clip_bound {
            ClipBound::new(b)?;
        }
        NetworkShape::new(1, self.width, self.depth)?;
        Ok(())
    }

    pub fn shape(&self, d: usize) -> Result<NetworkShape> {
        NetworkShape::new(d, self.width, self.depth)
    }
}

/// Something that maps a predictor vector and a time grid to a curve.
pub trait CurvePredictor {
    fn d(&self) -> usize;

    fn predict_curve(&self, x: &[f64], grid: &TimeGrid) -> Result<Vec<f64>>;

    /// Predicted curve for every sample, each on that sample's own grid.
    fn predict_dataset(&self, data: &FunctionalDataset) -> Result<Vec<Vec<f64>>> {
        data.samples()
            .iter()
            .map(|s| self.predict_curve(s.x(), s.grid()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FittedModel {
    pub params: NetworkParams,
    pub config: TrainConfig,
    /// Mean minibatch objective over each epoch.
    pub loss_trace: Vec<f64>,
    pub clip: Option<ClipBound>,
}

impl FittedModel {
    pub fn shape(&self) -> &NetworkShape {
        self.params.shape()
    }

    pub fn sidecar(&self) -> TrainingSidecar {
        TrainingSidecar {
            config: self.config.clone(),
            loss_trace: self.loss_trace.clone(),
            clip_bound: self.clip.map(|c| c.value()),
        }
    }

    pub fn from_parts(params: NetworkParams, sidecar: TrainingSidecar) -> Result<Self> {
        let clip = sidecar.clip_bound.map(ClipBound::new).transpose()?;
        Ok(Self {
            params,
            config: sidecar.config,
            loss_trace: sidecar.loss_trace,
            clip,
        })
    }
}

/// Training metadata stored next to the network parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSidecar {
    pub config: TrainConfig,
    pub loss_trace: Vec<f64>,
    #[serde(default)]
    pub clip_bound: Option<f64>,
}

impl CurvePredictor for FittedModel {
    fn d(&self) -> usize {
        self.shape().d()
    }

    fn predict_curve(&self, x: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
        predict_curve(self, x, grid)
    }
}

fn curve_inputs(x: &[f64], grid: &TimeGrid) -> Array2<f64> {
    let d = x.len();
    let mut z = Array2::<f64>::zeros((grid.len(), d + 1));
    for (j, &t) in grid.points().iter().enumerate() {
        let mut row = z.row_mut(j);
        for (k, &v) in x.iter().enumerate() {
            row[k] = v;
        }
        row[d] = t;
    }
    z
}

pub fn predict_curve(model: &FittedModel, x: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
    let d = model.shape().d();
    if x.len() != d {
        return Err(Error::shape(format!(
            "predictor has length {}, model expects {d}",
            x.len()
        )));
    }
    let out = forward_batch(&model.params, curve_inputs(x, grid).view())?;
    Ok(match model.clip {
        Some(b) => out.iter().map(|&v| clip(v, b)).collect(),
        None => out.to_vec(),
    })
}

/// All `(x_i, t_ij)` rows of a dataset with targets and quadrature weights,
/// plus the row range of each sample.
struct Design {
    inputs: Array2<f64>,
    targets: Array1<f64>,
    weights: Array1<f64>,
    offsets: Vec<usize>,
}

impl Design {
    fn new(data: &FunctionalDataset, mode: QuadratureMode) -> Self {
        let rows = data.total_points();
        let d = data.d();
        let mut inputs = Array2::<f64>::zeros((rows, d + 1));
        let mut targets = Array1::<f64>::zeros(rows);
        let mut weights = Array1::<f64>::zeros(rows);
        let mut offsets = Vec::with_capacity(data.n() + 1);
        let mut r = 0;
        for s in data.samples() {
            offsets.push(r);
            let w = riemann_weights(s.grid(), mode);
            for (j, &t) in s.grid().points().iter().enumerate() {
                let mut row = inputs.row_mut(r);
                for (k, &v) in s.x().iter().enumerate() {
                    row[k] = v;
                }
                row[d] = t;
                targets[r] = s.y()[j];
                weights[r] = w[j];
                r += 1;
            }
        }
        offsets.push(r);
        Self {
            inputs,
            targets,
            weights,
            offsets,
        }
    }

    /// Rows of the given samples, with weights scaled by `1 / samples.len()`.
    fn gather(&self, samples: &[usize]) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let rows: usize = samples.iter().map(|&i| self.offsets[i + 1] - self.offsets[i]).sum();
        let cols = self.inputs.ncols();
        let scale = 1.0 / samples.len() as f64;
        let mut z = Array2::<f64>::zeros((rows, cols));
        let mut y = Array1::<f64>::zeros(rows);
        let mut w = Array1::<f64>::zeros(rows);
        let mut r = 0;
        for &i in samples {
            for src in self.offsets[i]..self.offsets[i + 1] {
                z.row_mut(r).assign(&self.inputs.row(src));
                y[r] = self.targets[src];
                w[r] = self.weights[src] * scale;
                r += 1;
            }
        }
        (z, y, w)
    }
}

/// `(1/n) Σ_i Σ_j w_ij (Y_i(t_ij) − f(X_i, t_ij))² + alpha · ‖θ‖²`.
pub fn objective(params: &NetworkParams, data: &FunctionalDataset, alpha: f64, mode: QuadratureMode) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::config("objective of an empty dataset"));
    }
    if data.d() != params.shape().d() {
        return Err(Error::shape(format!(
            "dataset has d = {}, network expects {}",
            data.d(),
            params.shape().d()
        )));
    }
    if !(alpha >= 0.0) {
        return Err(Error::config(format!("alpha must be >= 0, got {alpha}")));
    }
    let design = Design::new(data, mode);
    let pred = forward_batch(params, design.inputs.view())?;
    let n = data.n() as f64;
    let data_term: f64 = pred
        .iter()
        .zip(design.targets.iter())
        .zip(design.weights.iter())
        .map(|((f, y), w)| w * (y - f).powi(2))
        .sum();
    Ok(data_term / n + alpha * params.squared_norm())
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

/// Fit a network by shuffled minibatch passes over the curves.
///
/// Each minibatch holds whole curves. The run is a pure function of
/// `(data, config)`.
pub fn train(data: &FunctionalDataset, config: &TrainConfig) -> Result<FittedModel> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::config("cannot train on an empty dataset"));
    }
    let shape = config.shape(data.d())?;
    let root = RngStream::new(config.seed);
    let mut params = init_params(&shape, &mut root.substream(0));
    let mut shuffle_rng = root.substream(1);

    let clip_bound = if config.clip {
        Some(ClipBound::new(
            config.clip_bound.unwrap_or(1.0 + data.max_abs_response()),
        )?)
    } else {
        None
    };

    let design = Design::new(data, config.quadrature);
    let n = data.n();
    let batch_size = config.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = Adam {
        m: vec![0.0; crate::network::count_params(&shape)],
        v: vec![0.0; crate::network::count_params(&shape)],
        step: 0,
    };
    let mut loss_trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            let (z, y, w) = design.gather(chunk);
            let batch = Batch {
                inputs: z.view(),
                targets: y.view(),
                weights: w.view(),
            };
            let (loss, grad) =
                loss_and_grad(&params, &batch, config.alpha, clip_bound).map_err(|e| Error::Diverged {
                    epoch,
                    reason: e.to_string(),
                })?;
            epoch_loss += loss * chunk.len() as f64;
            apply_update(&mut params, &grad, config, &mut adam);
        }
        let epoch_loss = epoch_loss / n as f64;
        if !epoch_loss.is_finite() || !params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: format!("epoch loss {epoch_loss}"),
            });
        }
        loss_trace.push(epoch_loss);
    }

    Ok(FittedModel {
        params,
        config: config.clone(),
        loss_trace,
        clip: clip_bound,
    })
}

fn apply_update(params: &mut NetworkParams, grad: &NetworkParams, cfg: &TrainConfig, adam: &mut Adam) {
    let lr = cfg.learning_rate;
    match cfg.optimizer {
        OptimizerKind::Sgd => {
            for (p, g) in params.values_mut().zip(grad.values()) {
                *p -= lr * g;
            }
        }
        OptimizerKind::Adam => {
            adam.step += 1;
            let bc1 = 1.0 - cfg.beta1.powi(adam.step);
            let bc2 = 1.0 - cfg.beta2.powi(adam.step);
            let slots = adam.m.iter_mut().zip(adam.v.iter_mut());
            for ((p, g), (m, v)) in params.values_mut().zip(grad.values()).zip(slots) {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
    }
}

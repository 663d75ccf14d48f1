//! Dense ReLU perceptron over `(x₁, …, x_d, t)` with a scalar output.
//!
//! A network of depth `L` has the width vector `(d+1, W, …, W, 1)` of length
//! `L` and therefore `L − 1` affine maps; ReLU follows every map except the
//! last. Gradients are computed by hand-written reverse mode.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ShapeRepr", into = "ShapeRepr")]
pub struct NetworkShape {
    d: usize,
    width: usize,
    depth: usize,
}

#[derive(Serialize, Deserialize)]
struct ShapeRepr {
    d: usize,
    #[serde(rename = "W")]
    width: usize,
    #[serde(rename = "L")]
    depth: usize,
}

impl TryFrom<ShapeRepr> for NetworkShape {
    type Error = Error;

    fn try_from(r: ShapeRepr) -> Result<Self> {
        NetworkShape::new(r.d, r.width, r.depth)
    }
}

impl From<NetworkShape> for ShapeRepr {
    fn from(s: NetworkShape) -> Self {
        ShapeRepr {
            d: s.d,
            width: s.width,
            depth: s.depth,
        }
    }
}

impl NetworkShape {
    /// Shape for `d` scalar predictors (input dimension `d + 1`).
    pub fn new(d: usize, width: usize, depth: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("network needs at least one predictor"));
        }
        if width == 0 {
            return Err(Error::config("network width must be >= 1"));
        }
        if depth < 2 {
            return Err(Error::config(format!("network depth must be >= 2, got {depth}")));
        }
        Ok(Self { d, width, depth })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn input_dim(&self) -> usize {
        self.d + 1
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `(c₁, …, c_L)` with `c₁ = d + 1`, `c_L = 1` and `W` in between.
    pub fn width_vector(&self) -> Vec<usize> {
        (0..self.depth)
            .map(|l| match l {
                0 => self.input_dim(),
                l if l == self.depth - 1 => 1,
                _ => self.width,
            })
            .collect()
    }

    /// `(fan_out, fan_in)` for each of the `L − 1` affine maps.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        self.width_vector().windows(2).map(|c| (c[1], c[0])).collect()
    }
}

pub fn count_params(shape: &NetworkShape) -> usize {
    shape.layer_dims().iter().map(|&(out, inp)| out * inp + out).sum()
}

/// One affine map: `weights` is `fan_out × fan_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    shape: NetworkShape,
    layers: Vec<Layer>,
}

impl NetworkParams {
    pub fn zeros(shape: NetworkShape) -> Self {
        let layers = shape
            .layer_dims()
            .into_iter()
            .map(|(out, inp)| Layer {
                weights: Array2::zeros((out, inp)),
                bias: Array1::zeros(out),
            })
            .collect();
        Self { shape, layers }
    }

    pub fn from_layers(shape: NetworkShape, layers: Vec<Layer>) -> Result<Self> {
        let dims = shape.layer_dims();
        if dims.len() != layers.len() {
            return Err(Error::shape(format!(
                "shape implies {} layers, got {}",
                dims.len(),
                layers.len()
            )));
        }
        for (l, (layer, &(out, inp))) in layers.iter().zip(&dims).enumerate() {
            if layer.weights.dim() != (out, inp) || layer.bias.len() != out {
                return Err(Error::shape(format!(
                    "layer {l}: expected {out}x{inp} weights and {out} biases, got {:?} and {}",
                    layer.weights.dim(),
                    layer.bias.len()
                )));
            }
            let finite = layer.weights.iter().chain(layer.bias.iter()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::numeric(format!("layer {l} has non-finite entries")));
            }
        }
        Ok(Self { shape, layers })
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn squared_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum()
    }

    /// Parameters in vec order: each layer's weights row by row, then its bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }
}

/// Weights from `N(0, 2 / fan_in)`, biases zero.
pub fn init_params(shape: &NetworkShape, rng: &mut RngStream) -> NetworkParams {
    let mut params = NetworkParams::zeros(*shape);
    for layer in params.layers_mut() {
        let fan_in = layer.weights.ncols() as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("fan-in is positive");
        layer.weights.mapv_inplace(|_| normal.sample(rng));
    }
    params
}

pub fn forward(params: &NetworkParams, z: &[f64]) -> Result<f64> {
    let dim = params.shape.input_dim();
    if z.len() != dim {
        return Err(Error::shape(format!(
            "input has length {}, network expects {dim}",
            z.len()
        )));
    }
    let mut h = z.to_vec();
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        let mut next: Vec<f64> = layer
            .weights
            .rows()
            .into_iter()
            .zip(layer.bias.iter())
            .map(|(row, b)| row.iter().zip(&h).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect();
        if l < last {
            next.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        h = next;
    }
    Ok(h[0])
}

fn check_batch_dim(params: &NetworkParams, z: &ArrayView2<'_, f64>) -> Result<()> {
    let dim = params.shape.input_dim();
    if z.ncols() != dim {
        return Err(Error::shape(format!(
            "input matrix has {} columns, network expects {dim}",
            z.ncols()
        )));
    }
    Ok(())
}

/// Post-activation outputs of every layer; the first entry is the input and
/// the last the `m × 1` network output.
fn activations(params: &NetworkParams, z: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
    let mut acts = Vec::with_capacity(params.layers.len() + 1);
    acts.push(z.to_owned());
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        let mut a = acts[l].dot(&layer.weights.t());
        a += &layer.bias;
        if l < last {
            a.mapv_inplace(|v| v.max(0.0));
        }
        acts.push(a);
    }
    acts
}

pub fn forward_batch(params: &NetworkParams, z: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    check_batch_dim(params, &z)?;
    let out = activations(params, z).pop().expect("at least one layer");
    Ok(out.index_axis_move(Axis(1), 0))
}

/// Output bound `F ≥ 1` for the clipped estimator `min(max(f, −F), F)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ClipBound(f64);

impl ClipBound {
    pub fn new(bound: f64) -> Result<Self> {
        if !(bound >= 1.0) || !bound.is_finite() {
            return Err(Error::config(format!(
                "clip bound must be finite and >= 1, got {bound}"
            )));
        }
        Ok(Self(bound))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ClipBound {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        ClipBound::new(v)
    }
}

impl From<ClipBound> for f64 {
    fn from(c: ClipBound) -> f64 {
        c.0
    }
}

pub fn clip(value: f64, bound: ClipBound) -> f64 {
    value.max(-bound.0).min(bound.0)
}

/// Rows of `(x, t)` inputs with targets and per-row loss weights. The loss
/// is `Σ_r weights[r] · (targets[r] − f(inputs[r]))²`, so any `1/n`
/// normalisation belongs in the weights.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub targets: ArrayView1<'a, f64>,
    pub weights: ArrayView1<'a, f64>,
}

impl Batch<'_> {
    fn validate(&self, params: &NetworkParams) -> Result<()> {
        check_batch_dim(params, &self.inputs)?;
        let m = self.inputs.nrows();
        if self.targets.len() != m || self.weights.len() != m {
            return Err(Error::shape(format!(
                "batch has {m} inputs, {} targets and {} weights",
                self.targets.len(),
                self.weights.len()
            )));
        }
        Ok(())
    }
}

/// Weighted squared-error loss plus `alpha · ‖θ‖²`, and its exact gradient.
///
/// With `clip` set the loss is taken on the clipped output; rows clipped
/// strictly beyond the bound contribute no gradient. The ReLU derivative at
/// zero is zero.
pub fn loss_and_grad(
    params: &NetworkParams,
    batch: &Batch<'_>,
    alpha: f64,
    clip_bound: Option<ClipBound>,
) -> Result<(f64, NetworkParams)> {
    batch.validate(params)?;
    if !(alpha >= 0.0) {
        return Err(Error::config(format!("L2 strength must be >= 0, got {alpha}")));
    }
    let acts = activations(params, batch.inputs);
    let out = acts.last().expect("output layer").column(0);
    let m = out.len();

    let mut data_loss = 0.0;
    let mut delta = Array2::<f64>::zeros((m, 1));
    for r in 0..m {
        let raw = out[r];
        let (pred, pass) = match clip_bound {
            Some(b) if raw.abs() > b.0 => (clip(raw, b), 0.0),
            _ => (raw, 1.0),
        };
        let resid = batch.targets[r] - pred;
        data_loss += batch.weights[r] * resid * resid;
        delta[[r, 0]] = -2.0 * batch.weights[r] * resid * pass;
    }
    let loss = data_loss + alpha * params.squared_norm();
    if !loss.is_finite() {
        return Err(Error::numeric(format!("loss evaluated to {loss}")));
    }

    let mut grad = NetworkParams::zeros(params.shape);
    for l in (0..params.layers.len()).rev() {
        let g = &mut grad.layers[l];
        g.weights = delta.t().dot(&acts[l]);
        g.bias = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&params.layers[l].weights);
            back.zip_mut_with(&acts[l], |d, &h| {
                if h <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
    }
    if alpha > 0.0 {
        for (g, p) in grad.values_mut().zip(params.values()) {
            *g += 2.0 * alpha * p;
        }
    }
    if !grad.is_finite() {
        return Err(Error::numeric("gradient has non-finite entries"));
    }
    Ok((loss, grad))
}

pub fn grad_loss(params: &NetworkParams, batch: &Batch<'_>, alpha: f64) -> Result<NetworkParams> {
    loss_and_grad(params, batch, alpha, None).map(|(_, g)| g)
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    shape: NetworkShape,
    layers: Vec<LayerRepr>,
}

impl Serialize for NetworkParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ParamsRepr {
            shape: self.shape,
            layers: self
                .layers
                .iter()
                .map(|l| LayerRepr {
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NetworkParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = ParamsRepr::deserialize(d)?;
        let dims = repr.shape.layer_dims();
        if dims.len() != repr.layers.len() {
            return Err(D::Error::custom(format!(
                "shape implies {} layers, found {}",
                dims.len(),
                repr.layers.len()
            )));
        }
        let layers = repr
            .layers
            .into_iter()
            .zip(dims)
            .map(|(l, (out, inp))| {
                let weights = Array2::from_shape_vec((out, inp), l.weights)
                    .map_err(|e| D::Error::custom(format!("weights: {e}")))?;
                Ok(Layer {
                    weights,
                    bias: Array1::from(l.bias),
                })
            })
            .collect::<std::result::Result<Vec<_>, D::Error>>()?;
        NetworkParams::from_layers(repr.shape, layers).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn width_vector_and_layer_shapes() {
        let shape = NetworkShape::new(2, 32, 6).unwrap();
        assert_eq!(shape.width_vector(), vec![3, 32, 32, 32, 32, 1]);
        let params = init_params(&shape, &mut RngStream::new(0));
        let dims: Vec<_> = params.layers().iter().map(|l| l.weights.dim()).collect();
        assert_eq!(dims, vec![(32, 3), (32, 32), (32, 32), (32, 32), (1, 32)]);
    }

    #[test]
    fn reference_parameter_counts() {
        assert_eq!(count_params(&NetworkShape::new(10, 32, 7).unwrap()), 4641);
        assert_eq!(count_params(&NetworkShape::new(25, 32, 7).unwrap()), 5121);
        assert_eq!(count_params(&NetworkShape::new(1, 1, 2).unwrap()), 3);
    }

    #[test]
    fn shape_rejects_degenerate() {
        assert!(NetworkShape::new(3, 0, 4).is_err());
        assert!(NetworkShape::new(3, 8, 1).is_err());
        assert!(NetworkShape::new(0, 8, 3).is_err());
    }

    #[test]
    fn init_is_deterministic_with_he_variance() {
        let shape = NetworkShape::new(2, 1024, 3).unwrap();
        let a = init_params(&shape, &mut RngStream::new(42));
        let b = init_params(&shape, &mut RngStream::new(42));
        assert_eq!(a, b);
        let w = &a.layers()[0].weights;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = 2.0 / 3.0;
        assert!((var - target).abs() < 0.1 * target, "variance {var}");
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let params = NetworkParams::zeros(NetworkShape::new(3, 5, 4).unwrap());
        assert_eq!(forward(&params, &[0.3, -1.0, 2.0, 0.5]).unwrap(), 0.0);
        let z = Array2::from_elem((7, 4), 1.5);
        assert!(forward_batch(&params, z.view()).unwrap().iter().all(|&v| v == 0.0));
    }

    fn single_unit() -> NetworkParams {
        // Width vector (1, 1, 1) but the input layer carries (x, t); use a
        // d = 1 shape and zero the t column so the net is ReLU(x).
        let shape = NetworkShape::new(1, 1, 3).unwrap();
        NetworkParams::from_layers(
            shape,
            vec![
                Layer {
                    weights: array![[1.0, 0.0]],
                    bias: array![0.0],
                },
                Layer {
                    weights: array![[1.0]],
                    bias: array![0.0],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn hand_forward_pass() {
        let p = single_unit();
        assert_eq!(forward(&p, &[-2.0, 0.0]).unwrap(), 0.0);
        assert_eq!(forward(&p, &[3.0, 0.0]).unwrap(), 3.0);
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let p = single_unit();
        assert!(matches!(forward(&p, &[1.0]), Err(Error::Shape(_))));
        let z = Array2::zeros((2, 3));
        assert!(matches!(forward_batch(&p, z.view()), Err(Error::Shape(_))));
    }

    #[test]
    fn batch_matches_loop() {
        let shape = NetworkShape::new(3, 8, 4).unwrap();
        let mut rng = RngStream::new(8);
        let mut p = init_params(&shape, &mut rng);
        for b in p.values_mut() {
            *b += 0.01;
        }
        let z = crate::numerics::sample_uniform_cube(&mut rng, 100, 4, -1.0, 1.0).unwrap();
        let batch = forward_batch(&p, z.view()).unwrap();
        for (r, row) in z.rows().into_iter().enumerate() {
            let single = forward(&p, row.as_slice().unwrap()).unwrap();
            assert!((batch[r] - single).abs() <= 1e-12 * single.abs().max(1.0));
        }
        let one = forward_batch(&p, z.slice(ndarray::s![0..1, ..])).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn clip_examples() {
        let one = ClipBound::new(1.0).unwrap();
        let two = ClipBound::new(2.0).unwrap();
        assert_eq!(clip(0.5, one), 0.5);
        assert_eq!(clip(-7.0, two), -2.0);
        assert_eq!(clip(2.0, two), 2.0);
        assert!(ClipBound::new(0.5).is_err());
    }

    #[test]
    fn zero_residual_zero_gradient() {
        let shape = NetworkShape::new(2, 4, 3).unwrap();
        let p = init_params(&shape, &mut RngStream::new(1));
        let z = array![[0.1, 0.2, 0.3], [-0.5, 0.4, 0.9]];
        let y = forward_batch(&p, z.view()).unwrap();
        let w = array![0.5, 0.5];
        let batch = Batch {
            inputs: z.view(),
            targets: y.view(),
            weights: w.view(),
        };
        let g = grad_loss(&p, &batch, 0.0).unwrap();
        assert!(g.values().all(|&v| v == 0.0));

        let g = grad_loss(&p, &batch, 0.3).unwrap();
        for (gv, pv) in g.values().zip(p.values()) {
            assert_abs_diff_eq!(*gv, 0.6 * pv, epsilon = 1e-15);
        }
    }

    #[test]
    fn clipped_rows_carry_no_gradient() {
        let shape = NetworkShape::new(1, 1, 3).unwrap();
        let p = NetworkParams::from_layers(
            shape,
            vec![
                Layer {
                    weights: array![[1.0, 0.0]],
                    bias: array![0.0],
                },
                Layer {
                    weights: array![[3.0]],
                    bias: array![0.0],
                },
            ],
        )
        .unwrap();
        let z = array![[1.0, 0.0]];
        let y = array![0.0];
        let w = array![1.0];
        let batch = Batch {
            inputs: z.view(),
            targets: y.view(),
            weights: w.view(),
        };
        let bound = ClipBound::new(2.0).unwrap();
        let (loss, g) = loss_and_grad(&p, &batch, 0.0, Some(bound)).unwrap();
        assert_eq!(loss, 4.0);
        assert!(g.values().all(|&v| v == 0.0));
    }

    #[test]
    fn first_layer_positive_homogeneity() {
        let shape = NetworkShape::new(2, 6, 4).unwrap();
        let mut rng = RngStream::new(77);
        let p = init_params(&shape, &mut rng);
        let lambda = 2.5;
        let mut scaled = p.clone();
        scaled.layers_mut()[0].weights.mapv_inplace(|v| v * lambda);
        scaled.layers_mut()[0].bias.mapv_inplace(|v| v * lambda);
        let z = crate::numerics::sample_uniform_cube(&mut rng, 20, 3, -1.0, 1.0).unwrap();
        let a = forward_batch(&p, z.view()).unwrap();
        let b = forward_batch(&scaled, z.view()).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!(lambda * x, *y, epsilon = 1e-12);
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let shape = NetworkShape::new(3, 5, 4).unwrap();
        let p = init_params(&shape, &mut RngStream::new(13));
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.starts_with(r#"{"shape":{"d":3,"W":5,"L":4},"layers":[{"weights":["#));
        let back: NetworkParams = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn json_rejects_inconsistent_layers() {
        let text = r#"{"shape":{"d":1,"W":1,"L":2},"layers":[{"weights":[1.0],"bias":[0.0]}]}"#;
        assert!(serde_json::from_str::<NetworkParams>(text).is_err());
    }
}

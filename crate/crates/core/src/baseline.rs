//! Linear function-on-scalar baseline: `Y(t) ≈ β₀(t) + Σ_p X_p β_p(t)` with
//! every coefficient curve in a cubic B-spline basis, fitted by
//! quadrature-weighted ridge least squares.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky, cholesky_solve, riemann_weights, QuadratureMode, TimeGrid};
use crate::training::{CurvePredictor, FunctionalDataset};

pub const SPLINE_DEGREE: usize = 3;

/// Cubic B-splines on equispaced knots over `[0, 1]`, clamped at both ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    k: usize,
    knots: Vec<f64>,
}

impl SplineBasis {
    pub fn new(k: usize) -> Result<Self> {
        if k < SPLINE_DEGREE + 1 {
            return Err(Error::config(format!("cubic basis needs K >= 4, got {k}")));
        }
        let segments = k - SPLINE_DEGREE;
        let mut knots = vec![0.0; SPLINE_DEGREE + 1];
        knots.extend((1..segments).map(|i| i as f64 / segments as f64));
        knots.extend(std::iter::repeat_n(1.0, SPLINE_DEGREE + 1));
        Ok(Self { k, knots })
    }

    fn from_knots(k: usize, knots: Vec<f64>) -> Result<Self> {
        let expected = Self::new(k)?;
        if expected.knots.len() != knots.len() || expected.knots.iter().zip(&knots).any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(Error::config("knot vector does not match an equispaced clamped basis"));
        }
        Ok(expected)
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
}

/// All `K` basis values at `t` via the Cox–de Boor recursion.
pub fn bspline_eval(basis: &SplineBasis, t: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("spline argument {t} outside [0, 1]")));
    }
    let knots = &basis.knots;
    let k = basis.k;
    // Span index: the last non-degenerate interval [knots[i], knots[i+1]) holding t,
    // with t = 1 assigned to the final interval.
    let span = if t >= 1.0 {
        k - 1
    } else {
        (SPLINE_DEGREE..k)
            .rev()
            .find(|&i| knots[i] <= t)
            .expect("t >= 0 = knots[degree]")
    };
    let mut n = vec![0.0; knots.len() - 1];
    n[span] = 1.0;
    for p in 1..=SPLINE_DEGREE {
        for i in 0..knots.len() - 1 - p {
            let left_den = knots[i + p] - knots[i];
            let right_den = knots[i + p + 1] - knots[i + 1];
            let left = if left_den > 0.0 {
                (t - knots[i]) / left_den * n[i]
            } else {
                0.0
            };
            let right = if right_den > 0.0 {
                (knots[i + p + 1] - t) / right_den * n[i + 1]
            } else {
                0.0
            };
            n[i] = left + right;
        }
    }
    n.truncate(k);
    Ok(n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearFosModel {
    basis: SplineBasis,
    lambda: f64,
    /// `(d + 1) × K`; row 0 is the intercept curve.
    coefficients: Array2<f64>,
}

impl LinearFosModel {
    pub fn new(basis: SplineBasis, lambda: f64, coefficients: Array2<f64>) -> Result<Self> {
        if coefficients.ncols() != basis.len() || coefficients.nrows() < 1 {
            return Err(Error::shape(format!(
                "coefficients are {:?}, basis has K = {}",
                coefficients.dim(),
                basis.len()
            )));
        }
        if coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite spline coefficient"));
        }
        Ok(Self {
            basis,
            lambda,
            coefficients,
        })
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn coefficients(&self) -> &Array2<f64> {
        &self.coefficients
    }

    pub fn d(&self) -> usize {
        self.coefficients.nrows() - 1
    }

    /// Coefficient curve `β_p` on a grid; `p = 0` is the intercept.
    pub fn coefficient_curve(&self, p: usize, grid: &TimeGrid) -> Result<Vec<f64>> {
        let row = self.coefficients.row(p);
        grid.points()
            .iter()
            .map(|&t| {
                Ok(bspline_eval(&self.basis, t)?
                    .iter()
                    .zip(row.iter())
                    .map(|(b, c)| b * c)
                    .sum())
            })
            .collect()
    }
}

impl CurvePredictor for LinearFosModel {
    fn d(&self) -> usize {
        LinearFosModel::d(self)
    }

    fn predict_curve(&self, x: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
        predict_linear(self, x, grid)
    }
}

pub fn fit_linear_fos(data: &FunctionalDataset, k: usize, lambda: f64) -> Result<LinearFosModel> {
    fit_linear_fos_with(data, k, lambda, QuadratureMode::PaperLiteral)
}

/// Minimise `(1/n) Σ_i Σ_j w_ij (Y_ij − (1, X_i)ᵀ C b(t_ij))² + λ ‖C‖²` over
/// the `(d+1) × K` coefficient matrix `C` via the normal equations.
pub fn fit_linear_fos_with(
    data: &FunctionalDataset,
    k: usize,
    lambda: f64,
    mode: QuadratureMode,
) -> Result<LinearFosModel> {
    if data.is_empty() {
        return Err(Error::config("cannot fit the linear baseline to an empty dataset"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::config(format!("lambda must be >= 0, got {lambda}")));
    }
    let basis = SplineBasis::new(k)?;
    let p = data.d() + 1;
    let dim = p * k;
    let inv_n = 1.0 / data.n() as f64;

    let mut gram = Array2::<f64>::zeros((dim, dim));
    let mut rhs = Array1::<f64>::zeros(dim);
    let mut g = Array2::<f64>::zeros((k, k));
    let mut h = Array1::<f64>::zeros(k);
    let mut z = vec![1.0; p];
    for s in data.samples() {
        z[1..].copy_from_slice(s.x());
        g.fill(0.0);
        h.fill(0.0);
        let w = riemann_weights(s.grid(), mode);
        for ((&t, &y), &wj) in s.grid().points().iter().zip(s.y()).zip(&w) {
            let b = bspline_eval(&basis, t)?;
            for a in 0..k {
                let wb = wj * b[a];
                h[a] += wb * y;
                for c in 0..k {
                    g[[a, c]] += wb * b[c];
                }
            }
        }
        for p1 in 0..p {
            let zp1 = z[p1] * inv_n;
            for a in 0..k {
                rhs[p1 * k + a] += zp1 * h[a];
            }
            for p2 in 0..p {
                let zz = zp1 * z[p2];
                if zz == 0.0 {
                    continue;
                }
                for a in 0..k {
                    for c in 0..k {
                        gram[[p1 * k + a, p2 * k + c]] += zz * g[[a, c]];
                    }
                }
            }
        }
    }
    for i in 0..dim {
        gram[[i, i]] += lambda;
    }

    let factor = match cholesky(&gram) {
        Ok(l) => l,
        Err(_) if lambda == 0.0 => {
            return Err(Error::numeric(
                "normal equations are singular at lambda = 0; use a positive ridge strength",
            ))
        }
        Err(_) => {
            let scale = (0..dim).map(|i| gram[[i, i]]).fold(0.0, f64::max).max(1.0);
            for i in 0..dim {
                gram[[i, i]] += 1e-10 * scale;
            }
            cholesky(&gram)?
        }
    };
    let theta = cholesky_solve(&factor, rhs.view())?;
    let coefficients = theta
        .into_shape_with_order((p, k))
        .map_err(|e| Error::shape(e.to_string()))?;
    LinearFosModel::new(basis, lambda, coefficients)
}

pub fn predict_linear(model: &LinearFosModel, x: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
    let d = model.d();
    if x.len() != d {
        return Err(Error::shape(format!(
            "predictor has length {}, model expects {d}",
            x.len()
        )));
    }
    let c = &model.coefficients;
    // Curve coefficients for this subject: (1, x)ᵀ C.
    let mut beta = c.row(0).to_owned();
    for (p, &xp) in x.iter().enumerate() {
        beta.scaled_add(xp, &c.row(p + 1));
    }
    grid.points()
        .iter()
        .map(|&t| {
            Ok(bspline_eval(&model.basis, t)?
                .iter()
                .zip(beta.iter())
                .map(|(b, v)| b * v)
                .sum())
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearRepr {
    #[serde(rename = "K")]
    k: usize,
    degree: usize,
    knots: Vec<f64>,
    lambda: f64,
    coefficients: Vec<Vec<f64>>,
}

impl Serialize for LinearFosModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LinearRepr {
            k: self.basis.k,
            degree: SPLINE_DEGREE,
            knots: self.basis.knots.clone(),
            lambda: self.lambda,
            coefficients: self.coefficients.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LinearFosModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = LinearRepr::deserialize(d)?;
        if r.degree != SPLINE_DEGREE {
            return Err(D::Error::custom(format!(
                "only cubic splines are supported, got degree {}",
                r.degree
            )));
        }
        let basis = SplineBasis::from_knots(r.k, r.knots).map_err(D::Error::custom)?;
        let rows = r.coefficients.len();
        let flat: Vec<f64> = r.coefficients.into_iter().flatten().collect();
        let coefficients = Array2::from_shape_vec((rows, r.k), flat).map_err(D::Error::custom)?;
        LinearFosModel::new(basis, r.lambda, coefficients).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use crate::training::FunctionalSample;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn bezier_segment_at_half() {
        let b = bspline_eval(&SplineBasis::new(4).unwrap(), 0.5).unwrap();
        let expected = [0.125, 0.375, 0.375, 0.125];
        for (v, e) in b.iter().zip(expected) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn clamped_ends() {
        let basis = SplineBasis::new(15).unwrap();
        let b0 = bspline_eval(&basis, 0.0).unwrap();
        assert_eq!(b0[0], 1.0);
        assert!(b0[1..].iter().all(|&v| v == 0.0));
        let b1 = bspline_eval(&basis, 1.0).unwrap();
        assert_eq!(b1[14], 1.0);
        assert!(b1[..14].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn partition_of_unity_and_nonnegative() {
        let basis = SplineBasis::new(11).unwrap();
        let mut rng = RngStream::new(2);
        for _ in 0..500 {
            let t = rng.next_f64();
            let b = bspline_eval(&basis, t).unwrap();
            assert!(b.iter().all(|&v| v >= 0.0));
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for knot in basis.knots() {
            let b = bspline_eval(&basis, *knot).unwrap();
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn domain_checked() {
        let basis = SplineBasis::new(6).unwrap();
        assert!(matches!(bspline_eval(&basis, 1.01), Err(Error::Domain(_))));
        assert!(matches!(bspline_eval(&basis, -0.1), Err(Error::Domain(_))));
        assert!(SplineBasis::new(3).is_err());
    }

    fn linear_data(n: usize, curve: &dyn Fn(f64) -> f64, noise: f64, seed: u64) -> FunctionalDataset {
        let grid = TimeGrid::equispaced(100).unwrap();
        let mut rng = RngStream::new(seed);
        let normal = Normal::new(0.0, noise).unwrap();
        let samples = (0..n)
            .map(|_| {
                let x = vec![rng.next_f64() * 2.0 - 1.0, rng.next_f64() * 2.0 - 1.0];
                let y = grid
                    .points()
                    .iter()
                    .map(|&t| x[0] * curve(t) + normal.sample(&mut rng))
                    .collect();
                FunctionalSample::new(x, grid.clone(), y).unwrap()
            })
            .collect();
        FunctionalDataset::new(2, samples).unwrap()
    }

    #[test]
    fn recovers_coefficient_curve_in_span() {
        let basis = SplineBasis::new(8).unwrap();
        let truth = [0.2, -0.5, 1.0, 0.3, -0.8, 0.6, 1.2, -0.1];
        let curve = |t: f64| {
            bspline_eval(&basis, t)
                .unwrap()
                .iter()
                .zip(truth)
                .map(|(b, c)| b * c)
                .sum::<f64>()
        };
        let data = linear_data(500, &curve, 0.1, 5);
        let model = fit_linear_fos(&data, 8, 1e-8).unwrap();
        let fine = TimeGrid::equispaced(201).unwrap();
        let beta1 = model.coefficient_curve(1, &fine).unwrap();
        let sup = fine
            .points()
            .iter()
            .zip(&beta1)
            .map(|(&t, b)| (b - curve(t)).abs())
            .fold(0.0, f64::max);
        assert!(sup < 0.05, "sup-norm error {sup}");
    }

    #[test]
    fn intercept_only_matches_mean_smoother() {
        let grid = TimeGrid::equispaced(40).unwrap();
        let mut rng = RngStream::new(8);
        let samples: Vec<_> = (0..6)
            .map(|_| {
                let y = grid.points().iter().map(|t| t.sin() + rng.next_f64()).collect();
                FunctionalSample::new(vec![0.0, 0.0], grid.clone(), y).unwrap()
            })
            .collect();
        let data = FunctionalDataset::new(2, samples).unwrap();
        let lambda = 1e-9;
        let model = fit_linear_fos(&data, 7, lambda).unwrap();

        // Oracle: weighted spline smoother of the pointwise mean curve.
        let basis = SplineBasis::new(7).unwrap();
        let w = riemann_weights(&grid, QuadratureMode::PaperLiteral);
        let mean: Vec<f64> = (0..grid.len())
            .map(|j| data.samples().iter().map(|s| s.y()[j]).sum::<f64>() / 6.0)
            .collect();
        let mut a = Array2::<f64>::zeros((7, 7));
        let mut r = Array1::<f64>::zeros(7);
        for (j, &t) in grid.points().iter().enumerate() {
            let b = bspline_eval(&basis, t).unwrap();
            for p in 0..7 {
                r[p] += w[j] * b[p] * mean[j];
                for q in 0..7 {
                    a[[p, q]] += w[j] * b[p] * b[q];
                }
            }
        }
        for p in 0..7 {
            a[[p, p]] += lambda;
        }
        let coef = cholesky_solve(&cholesky(&a).unwrap(), r.view()).unwrap();
        for p in 0..7 {
            assert_abs_diff_eq!(model.coefficients()[[0, p]], coef[p], epsilon = 1e-8);
        }
        let c1 = predict_linear(&model, &[0.3, -0.4], &grid).unwrap();
        let c2 = predict_linear(&model, &[0.0, 0.0], &grid).unwrap();
        for (u, v) in c1.iter().zip(&c2) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-6);
        }
    }

    #[test]
    fn singular_without_ridge() {
        let grid = TimeGrid::equispaced(10).unwrap();
        let s = FunctionalSample::new(vec![0.0], grid.clone(), vec![1.0; 10]).unwrap();
        let data = FunctionalDataset::new(1, vec![s]).unwrap();
        assert!(matches!(fit_linear_fos(&data, 4, 0.0), Err(Error::Numeric(_))));
        assert!(fit_linear_fos(&data, 4, 1e-6).is_ok());
    }

    #[test]
    fn ridge_shrinks_coefficients() {
        let data = linear_data(60, &|t| (3.0 * t).sin(), 0.3, 9);
        let mut last = f64::INFINITY;
        for lambda in [0.0, 1e-4, 1e-2, 1e-1, 1.0, 10.0] {
            let m = fit_linear_fos(&data, 10, lambda).unwrap();
            let norm = m.coefficients().iter().map(|v| v * v).sum::<f64>();
            assert!(norm <= last * (1.0 + 1e-10), "lambda {lambda}: {norm} > {last}");
            last = norm;
        }
    }

    #[test]
    fn hand_prediction_and_zero_model() {
        let basis = SplineBasis::new(4).unwrap();
        let coef = ndarray::array![[1.0, 0.0, 0.0, 2.0], [0.0, 4.0, 0.0, 0.0]];
        let model = LinearFosModel::new(basis, 0.0, coef).unwrap();
        let grid = TimeGrid::new(vec![0.5]).unwrap();
        // (1, x=0.5) · C = (1, 2, 0, 2); Bernstein values at 1/2: (1, 3, 3, 1)/8.
        let v = predict_linear(&model, &[0.5], &grid).unwrap();
        assert_abs_diff_eq!(v[0], (1.0 + 2.0 * 3.0 + 2.0) / 8.0, epsilon = 1e-15);
        assert!(predict_linear(&model, &[0.5, 1.0], &grid).is_err());

        let zero = LinearFosModel::new(SplineBasis::new(5).unwrap(), 0.0, Array2::zeros((3, 5))).unwrap();
        let c = predict_linear(&zero, &[0.3, 0.1], &TimeGrid::equispaced(9).unwrap()).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn json_round_trip() {
        let data = linear_data(20, &|t| t, 0.1, 1);
        let m = fit_linear_fos(&data, 6, 1e-3).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains(r#""K":6"#) && text.contains(r#""degree":3"#));
        let back: LinearFosModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}

use ndarray::Array2;
use rand::distr::{Distribution, Uniform};
use rand_distr::StandardNormal;

use super::linalg::cholesky;
use super::rng::RngStream;
use crate::error::{Error, Result};

/// `n × d` matrix of i.i.d. draws from `Unif[lo, hi]`.
pub fn sample_uniform_cube(rng: &mut RngStream, n: usize, d: usize, lo: f64, hi: f64) -> Result<Array2<f64>> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::config(format!(
            "uniform bounds must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    if n == 0 || d == 0 {
        return Err(Error::config("uniform sample needs n >= 1 and d >= 1"));
    }
    let dist = Uniform::new_inclusive(lo, hi).map_err(|e| Error::config(e.to_string()))?;
    Ok(Array2::from_shape_simple_fn((n, d), || dist.sample(rng)))
}

/// Equicorrelation matrix: unit diagonal, `rho` everywhere else.
pub fn equicorrelation(d: usize, rho: f64) -> Array2<f64> {
    Array2::from_shape_fn((d, d), |(i, j)| if i == j { 1.0 } else { rho })
}

/// Rows drawn i.i.d. from `N(0, L Lᵀ)` given the lower Cholesky factor `L`.
pub fn sample_mvn(rng: &mut RngStream, n: usize, factor: &Array2<f64>) -> Array2<f64> {
    let d = factor.nrows();
    let z = Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(rng));
    z.dot(&factor.t())
}

/// Rows i.i.d. `N_d(0, Σ_ρ)` with `Σ_ρ` the equicorrelation matrix.
pub fn sample_equicorr_normal(rng: &mut RngStream, n: usize, d: usize, rho: f64) -> Result<Array2<f64>> {
    if n == 0 || d == 0 {
        return Err(Error::config("normal sample needs n >= 1 and d >= 1"));
    }
    let lower = if d > 1 {
        -1.0 / (d as f64 - 1.0)
    } else {
        f64::NEG_INFINITY
    };
    if !(rho > lower && rho < 1.0) {
        return Err(Error::config(format!(
            "rho = {rho} outside the positive-definite range ({lower}, 1) for d = {d}"
        )));
    }
    let factor = cholesky(&equicorrelation(d, rho))?;
    Ok(sample_mvn(rng, n, &factor))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
        let n = xs.clone().count() as f64;
        let mean = xs.clone().sum::<f64>() / n;
        let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    fn corr(x: &Array2<f64>, a: usize, b: usize) -> f64 {
        let (ma, va) = mean_var(x.column(a).iter().copied());
        let (mb, vb) = mean_var(x.column(b).iter().copied());
        let n = x.nrows() as f64;
        let cov = x
            .column(a)
            .iter()
            .zip(x.column(b).iter())
            .map(|(p, q)| (p - ma) * (q - mb))
            .sum::<f64>()
            / (n - 1.0);
        cov / (va * vb).sqrt()
    }

    #[test]
    fn uniform_range_and_determinism() {
        let a = sample_uniform_cube(&mut RngStream::new(5), 3, 2, -1.0, 1.0).unwrap();
        let b = sample_uniform_cube(&mut RngStream::new(5), 3, 2, -1.0, 1.0).unwrap();
        assert_eq!(a.dim(), (3, 2));
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_moments() {
        let x = sample_uniform_cube(&mut RngStream::new(9), 100_000, 1, -1.0, 1.0).unwrap();
        let (m, v) = mean_var(x.iter().copied());
        assert!(m.abs() < 0.02, "mean {m}");
        assert!((v - 1.0 / 3.0).abs() < 0.02, "var {v}");
    }

    #[test]
    fn uniform_rejects_bad_bounds() {
        let mut r = RngStream::new(1);
        assert!(matches!(
            sample_uniform_cube(&mut r, 3, 2, 1.0, 1.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            sample_uniform_cube(&mut r, 3, 2, 2.0, -1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn independent_normals_at_rho_zero() {
        let x = sample_equicorr_normal(&mut RngStream::new(3), 100_000, 3, 0.0).unwrap();
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            assert!(corr(&x, a, b).abs() < 0.02);
        }
        let (m, v) = mean_var(x.column(0).iter().copied());
        assert!(m.abs() < 0.02 && (v - 1.0).abs() < 0.02);
    }

    #[test]
    fn equicorrelated_half() {
        let x = sample_equicorr_normal(&mut RngStream::new(4), 100_000, 3, 0.5).unwrap();
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let r = corr(&x, a, b);
            assert!((r - 0.5).abs() < 0.02, "corr({a},{b}) = {r}");
        }
    }

    #[test]
    fn rho_range_checked() {
        let mut r = RngStream::new(1);
        assert!(sample_equicorr_normal(&mut r, 10, 3, -0.5).is_err());
        assert!(sample_equicorr_normal(&mut r, 10, 3, 1.0).is_err());
        assert!(sample_equicorr_normal(&mut r, 10, 3, -0.49).is_ok());
    }
}

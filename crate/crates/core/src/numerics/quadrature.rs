use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing observation times inside `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::config("time grid is empty"));
        }
        for (j, &t) in points.iter().enumerate() {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::config(format!("time point {j} = {t} lies outside [0, 1]")));
            }
        }
        if let Some(j) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::config(format!(
                "time grid not strictly increasing at index {}: {} then {}",
                j + 1,
                points[j],
                points[j + 1]
            )));
        }
        Ok(Self(points))
    }

    /// `size` equally spaced points from 0 to 1 inclusive. A single point is
    /// placed at 1.
    pub fn equispaced(size: usize) -> Result<Self> {
        match size {
            0 => Err(Error::config("grid size must be at least 1")),
            1 => Ok(Self(vec![1.0])),
            _ => {
                let step = (size - 1) as f64;
                let mut pts: Vec<f64> = (0..size).map(|j| j as f64 / step).collect();
                pts[size - 1] = 1.0;
                Ok(Self(pts))
            }
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        TimeGrid::new(points)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(grid: TimeGrid) -> Self {
        grid.0
    }
}

/// How per-point quadrature weights are derived from a time grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureMode {
    /// Right-endpoint Riemann sum anchored at zero: `w_j = t_j - t_{j-1}`
    /// with `t_0 = 0`.
    #[default]
    PaperLiteral,
    /// Composite trapezoid rule over `[t_1, t_N]`. A one-point grid falls
    /// back to the right-endpoint weight `t_1`.
    Trapezoid,
}

impl std::str::FromStr for QuadratureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-literal" | "riemann" => Ok(Self::PaperLiteral),
            "trapezoid" => Ok(Self::Trapezoid),
            other => Err(Error::config(format!("unknown quadrature mode '{other}'"))),
        }
    }
}

pub fn riemann_weights(grid: &TimeGrid, mode: QuadratureMode) -> Vec<f64> {
    let t = grid.points();
    let n = t.len();
    match mode {
        QuadratureMode::PaperLiteral => {
            let mut prev = 0.0;
            t.iter()
                .map(|&tj| {
                    let w = tj - prev;
                    prev = tj;
                    w
                })
                .collect()
        }
        QuadratureMode::Trapezoid if n == 1 => vec![t[0]],
        QuadratureMode::Trapezoid => {
            let mut w = vec![0.0; n];
            for j in 0..n - 1 {
                let half = 0.5 * (t[j + 1] - t[j]);
                w[j] += half;
                w[j + 1] += half;
            }
            w
        }
    }
}

pub fn quad_integrate(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::shape(format!(
            "{} values against {} quadrature weights",
            values.len(),
            weights.len()
        )));
    }
    if values.is_empty() {
        return Err(Error::shape("nothing to integrate"));
    }
    Ok(values.iter().zip(weights).map(|(v, w)| v * w).sum())
}

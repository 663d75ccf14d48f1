//! Prediction error, cross-validation, replicated experiments and the
//! sample-size rate probe.

use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{fit_linear_fos_with, LinearFosModel};
use crate::error::{Error, Result};
use crate::network::count_params;
use crate::numerics::{QuadratureMode, RngStream, TimeGrid};
use crate::scenarios::{generate_dataset, ScenarioSpec};
use crate::training::{train, CurvePredictor, FittedModel, FunctionalDataset, TrainConfig};

/// Constant time step of the MISPE sum.
pub const MISPE_DT: f64 = 0.01;

/// `(1/N) Σ_i Σ_j (Y_i(t_j) − f̂_i(t_j))² · dt`.
pub fn mispe(predictions: &[Vec<f64>], test: &FunctionalDataset, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::config(format!("dt must be positive, got {dt}")));
    }
    if predictions.len() != test.n() {
        return Err(Error::shape(format!(
            "{} predicted curves for {} test samples",
            predictions.len(),
            test.n()
        )));
    }
    if test.is_empty() {
        return Err(Error::shape("MISPE of an empty test set"));
    }
    let mut total = 0.0;
    for (i, (pred, s)) in predictions.iter().zip(test.samples()).enumerate() {
        if pred.len() != s.y().len() {
            return Err(Error::shape(format!(
                "sample {i}: {} predictions for {} observations",
                pred.len(),
                s.y().len()
            )));
        }
        total += pred.iter().zip(s.y()).map(|(f, y)| (y - f).powi(2)).sum::<f64>() * dt;
    }
    Ok(total / test.n() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MispeReport {
    pub method: String,
    pub spec: String,
    pub per_replicate: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; zero for a single replicate.
    pub std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

impl MispeReport {
    pub fn from_values(method: impl Into<String>, spec: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("report needs at least one replicate"));
        }
        let (mean, std) = mean_std(&values);
        Ok(Self {
            method: method.into(),
            spec: spec.into(),
            per_replicate: values,
            mean,
            std,
        })
    }

    /// Stored summary agrees with the per-replicate values.
    pub fn is_consistent(&self) -> bool {
        if self.per_replicate.is_empty() {
            return false;
        }
        let (mean, std) = mean_std(&self.per_replicate);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
        close(mean, self.mean) && close(std, self.std)
    }
}

/// Aligned text table, one row per setting and one column per method, with
/// cells formatted as `mean (std)`.
pub fn render_table(reports: &[MispeReport]) -> String {
    let mut specs: Vec<&str> = Vec::new();
    let mut methods: Vec<&str> = Vec::new();
    for r in reports {
        if !specs.contains(&r.spec.as_str()) {
            specs.push(&r.spec);
        }
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let cell = |spec: &str, method: &str| {
        reports
            .iter()
            .find(|r| r.spec == spec && r.method == method)
            .map(|r| format!("{:.3} ({:.3})", r.mean, r.std))
            .unwrap_or_else(|| "-".to_string())
    };
    let mut rows = vec![std::iter::once("setting".to_string())
        .chain(methods.iter().map(|m| m.to_string()))
        .collect::<Vec<_>>()];
    for s in &specs {
        rows.push(
            std::iter::once(s.to_string())
                .chain(methods.iter().map(|m| cell(s, m)))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub lambda: f64,
    pub quadrature: QuadratureMode,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            k: 15,
            lambda: 1e-6,
            quadrature: QuadratureMode::PaperLiteral,
        }
    }
}

/// A fully specified estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum MethodConfig {
    Fosdnn(TrainConfig),
    Linear(LinearConfig),
}

impl MethodConfig {
    pub fn label(&self) -> &'static str {
        match self {
            MethodConfig::Fosdnn(_) => "fosdnn",
            MethodConfig::Linear(_) => "linear",
        }
    }

    pub fn param_count(&self, d: usize) -> Result<usize> {
        match self {
            MethodConfig::Fosdnn(c) => Ok(count_params(&c.shape(d)?)),
            MethodConfig::Linear(c) => Ok((d + 1) * c.k),
        }
    }

    /// L2 strength: `alpha` for the network, `lambda` for the baseline.
    pub fn penalty(&self) -> f64 {
        match self {
            MethodConfig::Fosdnn(c) => c.alpha,
            MethodConfig::Linear(c) => c.lambda,
        }
    }

    /// Fit with the network's seed replaced by `seed`.
    pub fn fit(&self, data: &FunctionalDataset, seed: u64) -> Result<Fitted> {
        match self {
            MethodConfig::Fosdnn(c) => {
                let cfg = TrainConfig { seed, ..c.clone() };
                Ok(Fitted::Fosdnn(train(data, &cfg)?))
            }
            MethodConfig::Linear(c) => Ok(Fitted::Linear(fit_linear_fos_with(data, c.k, c.lambda, c.quadrature)?)),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Fitted {
    Fosdnn(FittedModel),
    Linear(LinearFosModel),
}

impl CurvePredictor for Fitted {
    fn d(&self) -> usize {
        match self {
            Fitted::Fosdnn(m) => m.d(),
            Fitted::Linear(m) => m.d(),
        }
    }

    fn predict_curve(&self, x: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
        match self {
            Fitted::Fosdnn(m) => m.predict_curve(x, grid),
            Fitted::Linear(m) => m.predict_curve(x, grid),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub config: MethodConfig,
    pub param_count: usize,
    pub fold_losses: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvTable {
    pub k: usize,
    pub rows: Vec<CvRow>,
    pub selected: usize,
}

impl CvTable {
    pub fn selected_config(&self) -> &MethodConfig {
        &self.rows[self.selected].config
    }
}

/// Index of the row with the smallest mean loss; ties go to the smaller
/// parameter count, then the smaller penalty.
pub fn select_row(rows: &[CvRow]) -> Option<usize> {
    (0..rows.len()).min_by(|&a, &b| {
        let (ra, rb) = (&rows[a], &rows[b]);
        ra.mean
            .total_cmp(&rb.mean)
            .then(ra.param_count.cmp(&rb.param_count))
            .then(ra.config.penalty().total_cmp(&rb.config.penalty()))
    })
}

/// Shuffled partition of `0..n` into `k` folds whose sizes differ by at most one.
pub fn kfold_partition(n: usize, k: usize, rng: &mut RngStream) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::config(format!("k-fold CV needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::config(format!("{n} samples cannot fill {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Held-out MISPE of every candidate across `k` folds.
pub fn kfold_cv(data: &FunctionalDataset, grid: &[MethodConfig], k: usize, rng: &RngStream) -> Result<CvTable> {
    if grid.is_empty() {
        return Err(Error::config("cross-validation grid is empty"));
    }
    let folds = kfold_partition(data.n(), k, &mut rng.substream(0))?;
    let fold_seeds: Vec<u64> = (0..k)
        .map(|f| rng.substream(1).substream(f as u64).next_u64())
        .collect();
    let splits: Vec<(FunctionalDataset, FunctionalDataset)> = folds
        .iter()
        .map(|held| {
            let train_idx: Vec<usize> = (0..data.n()).filter(|i| !held.contains(i)).collect();
            (data.subset(&train_idx), data.subset(held))
        })
        .collect();

    let cells: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let losses = cells
        .par_iter()
        .map(|&(c, f)| {
            let (train_set, held_out) = &splits[f];
            let model = grid[c].fit(train_set, fold_seeds[f])?;
            mispe(&model.predict_dataset(held_out)?, held_out, MISPE_DT)
        })
        .collect::<Result<Vec<f64>>>()?;

    let rows = grid
        .iter()
        .enumerate()
        .map(|(c, config)| {
            let fold_losses = losses[c * k..(c + 1) * k].to_vec();
            let (mean, std) = mean_std(&fold_losses);
            Ok(CvRow {
                config: config.clone(),
                param_count: config.param_count(data.d())?,
                fold_losses,
                mean,
                std,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let selected = select_row(&rows).expect("grid is non-empty");
    Ok(CvTable { k, rows, selected })
}

/// The width/depth/α grid searched for a scenario, on top of `base`.
pub fn scenario_cv_grid(spec: &ScenarioSpec, base: &TrainConfig) -> Vec<MethodConfig> {
    let (widths, depths) = spec.scenario.cv_candidates();
    let alphas = [1e-9, 1e-7, 1e-5, 1e-3, 1e-1];
    let mut grid = Vec::new();
    for &width in &widths {
        for &depth in &depths {
            for &alpha in &alphas {
                grid.push(MethodConfig::Fosdnn(TrainConfig {
                    width,
                    depth,
                    alpha,
                    ..base.clone()
                }));
            }
        }
    }
    grid
}

/// Where cross-validation happens in a replicated experiment.
#[derive(Clone, Debug, PartialEq)]
pub enum Tuning {
    /// Use the configuration as given.
    Fixed(MethodConfig),
    /// Tune once on a separate training set, then reuse the winner for
    /// every replicate.
    OncePerScenario { grid: Vec<MethodConfig>, k: usize },
    /// Tune on each replicate's own training set.
    PerReplicate { grid: Vec<MethodConfig>, k: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub report: MispeReport,
    pub cv_tables: Vec<CvTable>,
}

/// Replicate `(generate → fit → MISPE)` `reps` times on independent substreams.
pub fn replicate_experiment(
    spec: &ScenarioSpec,
    method: &MethodConfig,
    reps: usize,
    rng: &RngStream,
) -> Result<MispeReport> {
    replicate_experiment_tuned(spec, &Tuning::Fixed(method.clone()), reps, rng).map(|o| o.report)
}

pub fn replicate_experiment_tuned(
    spec: &ScenarioSpec,
    tuning: &Tuning,
    reps: usize,
    rng: &RngStream,
) -> Result<ExperimentOutcome> {
    if reps == 0 {
        return Err(Error::config("reps must be >= 1"));
    }
    spec.validate()?;
    let mut cv_tables = Vec::new();
    let fixed = match tuning {
        Tuning::Fixed(m) => Some(m.clone()),
        Tuning::OncePerScenario { grid, k } => {
            let tune_rng = rng.substream(u64::MAX);
            let (train_set, _, _) = generate_dataset(
                &ScenarioSpec {
                    n_test: 0,
                    ..spec.clone()
                },
                &tune_rng,
            )?;
            let table = kfold_cv(&train_set, grid, *k, &tune_rng.substream(2))?;
            let chosen = table.selected_config().clone();
            cv_tables.push(table);
            Some(chosen)
        }
        Tuning::PerReplicate { .. } => None,
    };

    let results = (0..reps)
        .into_par_iter()
        .map(|r| {
            run_replicate(spec, tuning, fixed.as_ref(), &rng.substream(r as u64)).map_err(|e| Error::Replicate {
                replicate: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut values = Vec::with_capacity(reps);
    for (loss, table) in results {
        values.push(loss);
        cv_tables.extend(table);
    }
    let label = match (&fixed, tuning) {
        (Some(m), _) => m.label(),
        (None, Tuning::PerReplicate { grid, .. }) => grid.first().map_or("tuned", |m| m.label()),
        _ => "tuned",
    };
    let report = MispeReport::from_values(label, spec.label(), values)?;
    Ok(ExperimentOutcome { report, cv_tables })
}

fn run_replicate(
    spec: &ScenarioSpec,
    tuning: &Tuning,
    fixed: Option<&MethodConfig>,
    rng: &RngStream,
) -> Result<(f64, Option<CvTable>)> {
    let (train_set, test_set, _) = generate_dataset(spec, &rng.substream(0))?;
    let (method, table) = match (fixed, tuning) {
        (Some(m), _) => (m.clone(), None),
        (None, Tuning::PerReplicate { grid, k }) => {
            let table = kfold_cv(&train_set, grid, *k, &rng.substream(2))?;
            (table.selected_config().clone(), Some(table))
        }
        _ => unreachable!("fixed method resolved for non per-replicate tuning"),
    };
    let seed = rng.substream(1).next_u64();
    let model = method.fit(&train_set, seed)?;
    let loss = mispe(&model.predict_dataset(&test_set)?, &test_set, MISPE_DT)?;
    Ok((loss, table))
}

/// Least-squares slope of `log(error)` against `log(n)`.
///
/// Non-positive errors are dropped with a warning; fewer than two usable
/// points is a numeric error.
pub fn loglog_slope(ns: &[usize], errors: &[f64]) -> Result<f64> {
    if ns.len() != errors.len() {
        return Err(Error::shape("sample sizes and errors differ in length"));
    }
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(errors)
        .filter_map(|(&n, &e)| {
            if e > 0.0 && e.is_finite() {
                Some(((n as f64).ln(), e.ln()))
            } else {
                log::warn!("dropping n = {n}: excess error {e} is not positive");
                None
            }
        })
        .collect();
    if pts.len() < 2 {
        return Err(Error::numeric("fewer than two positive excess errors; slope undefined"));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::numeric("all usable sample sizes are equal"));
    }
    Ok(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub mean_mispe: f64,
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateProbe {
    pub spec: String,
    pub noise_floor: f64,
    pub points: Vec<RatePoint>,
    pub slope: f64,
}

/// Mean MISPE at each training size, minus the noise floor, and the log-log
/// slope of that excess against `n`.
pub fn rate_probe(
    spec: &ScenarioSpec,
    n_list: &[usize],
    method: &MethodConfig,
    reps: usize,
    rng: &RngStream,
) -> Result<RateProbe> {
    if n_list.len() < 2 || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("n_list needs at least two strictly increasing sizes"));
    }
    let noise_floor = spec.noise_sd * spec.noise_sd;
    let mut points = Vec::with_capacity(n_list.len());
    for (i, &n) in n_list.iter().enumerate() {
        let s = ScenarioSpec {
            n_train: n,
            ..spec.clone()
        };
        let report = replicate_experiment(&s, method, reps, &rng.substream(i as u64))?;
        points.push(RatePoint {
            n,
            mean_mispe: report.mean,
            excess: report.mean - noise_floor,
        });
    }
    let excess: Vec<f64> = points.iter().map(|p| p.excess).collect();
    let slope = loglog_slope(n_list, &excess)?;
    Ok(RateProbe {
        spec: spec.label(),
        noise_floor,
        points,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{Scenario, XType};
    use crate::training::FunctionalSample;
    use approx::assert_abs_diff_eq;

    fn ones_dataset(n: usize) -> FunctionalDataset {
        let grid = TimeGrid::equispaced(100).unwrap();
        let samples = (0..n)
            .map(|i| FunctionalSample::new(vec![i as f64], grid.clone(), vec![1.0; 100]).unwrap())
            .collect();
        FunctionalDataset::new(1, samples).unwrap()
    }

    #[test]
    fn mispe_examples() {
        let data = ones_dataset(3);
        let zeros = vec![vec![0.0; 100]; 3];
        assert_abs_diff_eq!(mispe(&zeros, &data, 0.01).unwrap(), 1.0, epsilon = 1e-12);
        let exact = vec![vec![1.0; 100]; 3];
        assert_eq!(mispe(&exact, &data, 0.01).unwrap(), 0.0);
        assert!(matches!(mispe(&zeros[..2], &data, 0.01), Err(Error::Shape(_))));
        let short = vec![vec![0.0; 99]; 3];
        assert!(matches!(mispe(&short, &data, 0.01), Err(Error::Shape(_))));
    }

    #[test]
    fn mispe_scales_quadratically() {
        let data = ones_dataset(2);
        let preds = vec![vec![0.5; 100], vec![0.8; 100]];
        let base = mispe(&preds, &data, MISPE_DT).unwrap();
        let gamma = 3.0;
        let scaled: Vec<Vec<f64>> = preds
            .iter()
            .map(|p| p.iter().map(|v| 1.0 - gamma * (1.0 - v)).collect())
            .collect();
        assert_abs_diff_eq!(
            mispe(&scaled, &data, MISPE_DT).unwrap(),
            gamma * gamma * base,
            epsilon = 1e-12
        );
    }

    #[test]
    fn report_summary() {
        let r = MispeReport::from_values("fosdnn", "S1/M1/X1", vec![0.5]).unwrap();
        assert_eq!(r.std, 0.0);
        assert!(r.is_consistent());
        let r = MispeReport::from_values("fosdnn", "S1/M1/X1", vec![1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(r.mean, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.std, 1.0, epsilon = 1e-15);
        assert!(MispeReport::from_values("x", "y", vec![]).is_err());
    }

    #[test]
    fn table_layout() {
        let reports = vec![
            MispeReport::from_values("fosdnn", "S1/M1/X1", vec![0.014, 0.016]).unwrap(),
            MispeReport::from_values("linear", "S1/M1/X1", vec![0.126]).unwrap(),
            MispeReport::from_values("fosdnn", "S1/M2/X1", vec![0.027]).unwrap(),
        ];
        let text = render_table(&reports);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains("setting") && lines[0].contains("linear"));
        assert!(lines[2].contains("0.015 (0.001)") && lines[2].contains("0.126 (0.000)"));
        assert!(lines[3].ends_with('-'));
    }

    #[test]
    fn partition_covers_indices() {
        let folds = kfold_partition(9, 3, &mut RngStream::new(1)).unwrap();
        assert!(folds.iter().all(|f| f.len() == 3));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..9).collect::<Vec<_>>());
        let folds = kfold_partition(11, 3, &mut RngStream::new(1)).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
        assert!(kfold_partition(2, 3, &mut RngStream::new(1)).is_err());
        assert!(kfold_partition(5, 1, &mut RngStream::new(1)).is_err());
    }

    fn row(mean: f64, width: usize, alpha: f64) -> CvRow {
        let cfg = TrainConfig {
            width,
            depth: 3,
            alpha,
            ..Default::default()
        };
        let config = MethodConfig::Fosdnn(cfg);
        CvRow {
            param_count: config.param_count(3).unwrap(),
            config,
            fold_losses: vec![mean],
            mean,
            std: 0.0,
        }
    }

    #[test]
    fn selection_tie_breaks() {
        let rows = vec![
            row(0.2, 8, 1e-3),
            row(0.1, 16, 1e-3),
            row(0.1, 8, 1e-3),
            row(0.1, 8, 1e-5),
        ];
        assert_eq!(select_row(&rows), Some(3));
        let mut more = rows.clone();
        let best = &rows[3];
        more.push(CvRow {
            mean: best.mean + 1.0,
            ..best.clone()
        });
        assert_eq!(select_row(&more), Some(3));
    }

    #[test]
    fn cv_single_config_and_empty_grid() {
        let mut spec = ScenarioSpec::new(Scenario::S1, 2, XType::Uniform).unwrap();
        spec.n_train = 12;
        spec.n_test = 0;
        spec.grid_size = 20;
        let (train_set, _, _) = generate_dataset(&spec, &RngStream::new(3)).unwrap();
        let grid = vec![MethodConfig::Linear(LinearConfig {
            k: 5,
            ..Default::default()
        })];
        let table = kfold_cv(&train_set, &grid, 3, &RngStream::new(4)).unwrap();
        assert_eq!(table.selected, 0);
        assert_eq!(table.rows[0].fold_losses.len(), 3);
        assert!(kfold_cv(&train_set, &[], 3, &RngStream::new(4)).is_err());
    }

    #[test]
    fn single_replicate_report() {
        let mut spec = ScenarioSpec::new(Scenario::S1, 2, XType::Uniform).unwrap();
        spec.n_train = 30;
        spec.n_test = 20;
        let method = MethodConfig::Linear(LinearConfig::default());
        let r = replicate_experiment(&spec, &method, 1, &RngStream::new(5)).unwrap();
        assert_eq!(r.per_replicate.len(), 1);
        assert_eq!(r.std, 0.0);
        assert_eq!(r.spec, "S1/M2/X1");
        assert_eq!(r.method, "linear");
        let again = replicate_experiment(&spec, &method, 1, &RngStream::new(5)).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn replicate_errors_carry_index() {
        let mut spec = ScenarioSpec::new(Scenario::S1, 1, XType::Uniform).unwrap();
        spec.n_train = 5;
        spec.n_test = 5;
        let method = MethodConfig::Fosdnn(TrainConfig {
            learning_rate: -1.0,
            ..Default::default()
        });
        match replicate_experiment(&spec, &method, 2, &RngStream::new(1)) {
            Err(Error::Replicate { replicate, source }) => {
                assert_eq!(replicate, 0);
                assert_eq!(source.exit_code(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn slope_of_power_law() {
        let ns = [100, 400, 1600, 6400];
        let errs: Vec<f64> = ns.iter().map(|&n| (n as f64).powf(-0.5)).collect();
        assert_abs_diff_eq!(loglog_slope(&ns, &errs).unwrap(), -0.5, epsilon = 1e-12);
        assert_eq!(loglog_slope(&[200, 1000], &[0.3, 0.3]).unwrap(), 0.0);
        // A non-positive point is dropped, leaving a two-point line.
        let s = loglog_slope(&[10, 100, 1000], &[0.1, -0.01, 0.001]).unwrap();
        assert_abs_diff_eq!(s, -1.0, epsilon = 1e-12);
        assert!(loglog_slope(&[10, 100], &[0.1, 0.0]).is_err());
    }

    #[test]
    fn rate_probe_validates_sizes() {
        let spec = ScenarioSpec::new(Scenario::S1, 2, XType::Uniform).unwrap();
        let m = MethodConfig::Linear(LinearConfig::default());
        assert!(rate_probe(&spec, &[200], &m, 1, &RngStream::new(1)).is_err());
        assert!(rate_probe(&spec, &[200, 100], &m, 1, &RngStream::new(1)).is_err());
    }

    #[test]
    fn method_config_json() {
        let m: MethodConfig = serde_json::from_str(r#"{"method": "linear", "K": 12}"#).unwrap();
        assert_eq!(
            m,
            MethodConfig::Linear(LinearConfig {
                k: 12,
                ..Default::default()
            })
        );
        let m: MethodConfig = serde_json::from_str(r#"{"method": "fosdnn", "width": 16}"#).unwrap();
        assert_eq!(m.label(), "fosdnn");
        assert_eq!(
            m.param_count(3).unwrap(),
            count_params(&crate::network::NetworkShape::new(3, 16, 6).unwrap())
        );
    }
}

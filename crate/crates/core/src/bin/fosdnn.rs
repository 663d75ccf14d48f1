use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use fosdnn::evaluation::{
    kfold_cv, mispe, rate_probe, render_table, replicate_experiment_tuned, scenario_cv_grid, LinearConfig,
    MethodConfig, MispeReport, Tuning, MISPE_DT,
};
use fosdnn::io::{
    load_covariates, load_dataset, load_model, read_json, save_dataset, save_model, save_predictions, write_atomic,
    write_json_atomic, LoadedData, Normalization,
};
use fosdnn::numerics::{RngStream, TimeGrid};
use fosdnn::scenarios::{generate_dataset, Scenario, ScenarioSpec, XType};
use fosdnn::training::{CurvePredictor, FunctionalDataset, TrainConfig};
use fosdnn::{Error, Result};

#[derive(Parser)]
#[command(
    name = "fosdnn",
    version,
    about = "Function-on-scalar regression with deep ReLU networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write train/test CSVs plus metadata.
    Generate(GenerateArgs),
    /// Fit a model to a dataset on disk.
    Train(TrainArgs),
    /// Write predicted curves for a set of covariates.
    Predict(PredictArgs),
    /// MISPE of a saved model on a labelled dataset.
    Evaluate(EvaluateArgs),
    /// k-fold cross-validation over a candidate grid.
    Cv(CvArgs),
    /// Replicated simulation experiment for one scenario setting.
    Experiment(ExperimentArgs),
    /// Log-log slope of excess MISPE against training size.
    Rate(RateArgs),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "fosdnn-out")]
    out: PathBuf,
    /// Worker threads; 1 runs single-threaded.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct ScenarioFlags {
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    model: Option<u8>,
    #[arg(long)]
    xtype: Option<u8>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum MethodKind {
    Fosdnn,
    Linear,
}

#[derive(Args, Clone, Default)]
struct MethodFlags {
    #[arg(long, value_enum)]
    method: Option<MethodKind>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Spline basis size of the linear baseline.
    #[arg(long = "basis-size")]
    basis_size: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args, Clone, Default)]
struct DataFlags {
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long)]
    responses: Option<PathBuf>,
    /// Z-score covariates (default for data read from disk).
    #[arg(long, overrides_with = "no_normalize")]
    normalize: bool,
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    scenario: ScenarioFlags,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    method: MethodFlags,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    /// Model file written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Responses whose time points define the prediction grid.
    #[arg(long)]
    responses: Option<PathBuf>,
    /// Equispaced prediction grid when no responses are given.
    #[arg(long, default_value_t = 100)]
    grid_size: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    data: DataFlags,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    scenario: ScenarioFlags,
    #[command(flatten)]
    data: DataFlags,
    #[arg(long)]
    k: Option<usize>,
    /// Override the training length of every candidate.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum TuningKind {
    Fixed,
    Once,
    PerReplicate,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    scenario: ScenarioFlags,
    #[command(flatten)]
    method: MethodFlags,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_enum)]
    tuning: Option<TuningKind>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct RateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    scenario: ScenarioFlags,
    #[command(flatten)]
    method: MethodFlags,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated, strictly increasing training sizes.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
}

/// JSON run configuration. Every key is optional; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    scenario: Option<Scenario>,
    model: Option<u8>,
    xtype: Option<u8>,
    n_train: Option<usize>,
    n_test: Option<usize>,
    grid_size: Option<usize>,
    noise_sd: Option<f64>,
    method: Option<MethodKind>,
    train: Option<TrainConfig>,
    linear: Option<LinearConfig>,
    data: Option<DatasetFiles>,
    model_path: Option<PathBuf>,
    reps: Option<usize>,
    k: Option<usize>,
    tuning: Option<TuningKind>,
    grid: Option<Vec<MethodConfig>>,
    n_list: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFiles {
    covariates: PathBuf,
    responses: PathBuf,
    #[serde(default)]
    normalize: Option<bool>,
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
        let mut paths: Vec<&Path> = cfg.model_path.iter().map(PathBuf::as_path).collect();
        if let Some(d) = &cfg.data {
            paths.push(&d.covariates);
            paths.push(&d.responses);
        }
        if let Some(missing) = paths.into_iter().find(|p| !p.exists()) {
            return Err(Error::Config(format!(
                "config references missing path {}",
                missing.display()
            )));
        }
        Ok(cfg)
    }
}

fn xtype_from(v: u8) -> Result<XType> {
    match v {
        1 => Ok(XType::Uniform),
        2 => Ok(XType::Normal01),
        3 => Ok(XType::Normal05),
        _ => Err(Error::Config(format!("xtype must be 1, 2 or 3, got {v}"))),
    }
}

fn scenario_spec(flags: &ScenarioFlags, cfg: &RunConfig, seed: u64) -> Result<ScenarioSpec> {
    let scenario = flags
        .scenario
        .or(cfg.scenario)
        .ok_or_else(|| Error::Config("--scenario is required".into()))?;
    let model = flags.model.or(cfg.model).unwrap_or(1);
    let xtype = xtype_from(flags.xtype.or(cfg.xtype).unwrap_or(1))?;
    let mut spec = ScenarioSpec::new(scenario, model, xtype)?;
    if let Some(n) = flags.n_train.or(cfg.n_train) {
        spec.n_train = n;
    }
    if let Some(n) = flags.n_test.or(cfg.n_test) {
        spec.n_test = n;
    }
    if let Some(g) = flags.grid_size.or(cfg.grid_size) {
        spec.grid_size = g;
    }
    if let Some(s) = flags.noise_sd.or(cfg.noise_sd) {
        spec.noise_sd = s;
    }
    spec.seed = seed;
    spec.validate()?;
    Ok(spec)
}

fn method_config(flags: &MethodFlags, cfg: &RunConfig, scenario: Option<Scenario>, seed: u64) -> Result<MethodConfig> {
    match flags.method.or(cfg.method).unwrap_or(MethodKind::Fosdnn) {
        MethodKind::Fosdnn => {
            let mut c = cfg.train.clone().unwrap_or_else(|| match scenario {
                Some(s) => {
                    let (width, depth, alpha) = s.default_network();
                    TrainConfig {
                        width,
                        depth,
                        alpha,
                        ..TrainConfig::default()
                    }
                }
                None => TrainConfig::default(),
            });
            c.width = flags.width.unwrap_or(c.width);
            c.depth = flags.depth.unwrap_or(c.depth);
            c.alpha = flags.alpha.unwrap_or(c.alpha);
            c.epochs = flags.epochs.unwrap_or(c.epochs);
            c.learning_rate = flags.learning_rate.unwrap_or(c.learning_rate);
            c.batch_size = flags.batch_size.unwrap_or(c.batch_size);
            c.seed = seed;
            c.validate()?;
            Ok(MethodConfig::Fosdnn(c))
        }
        MethodKind::Linear => {
            let mut c = cfg.linear.clone().unwrap_or_else(|| LinearConfig {
                k: scenario.map_or(15, Scenario::default_basis_size),
                ..LinearConfig::default()
            });
            c.k = flags.basis_size.unwrap_or(c.k);
            c.lambda = flags.lambda.unwrap_or(c.lambda);
            Ok(MethodConfig::Linear(c))
        }
    }
}

/// Dataset from flags or config, with the fitted normalization when enabled.
fn dataset(flags: &DataFlags, cfg: &RunConfig) -> Result<Option<(LoadedData, Option<Normalization>)>> {
    let (cov, resp) = match (&flags.covariates, &flags.responses, &cfg.data) {
        (Some(c), Some(r), _) => (c.clone(), r.clone()),
        (None, None, Some(d)) => (d.covariates.clone(), d.responses.clone()),
        (None, None, None) => return Ok(None),
        _ => {
            return Err(Error::Config(
                "--covariates and --responses must be given together".into(),
            ))
        }
    };
    let normalize = if flags.no_normalize {
        false
    } else {
        flags.normalize || cfg.data.as_ref().and_then(|d| d.normalize).unwrap_or(true)
    };
    let mut loaded = load_dataset(&cov, &resp)?;
    let norm = if normalize {
        let n = Normalization::fit(&loaded.data);
        n.apply(&mut loaded.data)?;
        Some(n)
    } else {
        None
    };
    Ok(Some((loaded, norm)))
}

fn normalization_path(model: &Path) -> PathBuf {
    model.with_extension("normalization.json")
}

fn model_path(flag: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.model_path.clone())
        .ok_or_else(|| Error::Config("--model is required".into()))
}

fn run(cli: Cli) -> Result<Value> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Cv(a) => cv(a),
        Command::Experiment(a) => experiment(a),
        Command::Rate(a) => rate(a),
    }
}

fn setup(common: &Common) -> Result<RunConfig> {
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    RunConfig::load(common.config.as_deref())
}

fn generate(a: GenerateArgs) -> Result<Value> {
    let cfg = setup(&a.common)?;
    let spec = scenario_spec(&a.scenario, &cfg, a.common.seed)?;
    let (train, test, signal) = generate_dataset(&spec, &RngStream::new(a.common.seed))?;
    let out = &a.common.out;
    let files = [
        "train_covariates.csv",
        "train_responses.csv",
        "test_covariates.csv",
        "test_responses.csv",
        "metadata.json",
    ];
    save_dataset(&train, &out.join(files[0]), &out.join(files[1]))?;
    save_dataset(&test, &out.join(files[2]), &out.join(files[3]))?;
    let metadata = json!({
        "spec": spec,
        "d": spec.d(),
        "n_train": train.n(),
        "n_test": test.n(),
        "grid": {"kind": "equispaced", "size": spec.grid_size, "points": spec.grid()?.points()},
        "signal": signal,
    });
    write_json_atomic(&out.join(files[4]), &metadata)?;
    Ok(json!({"command": "generate", "out": out, "files": files, "spec": spec.label(), "c": signal.c}))
}

fn train_cmd(a: TrainArgs) -> Result<Value> {
    let cfg = setup(&a.common)?;
    let (loaded, norm) =
        dataset(&a.data, &cfg)?.ok_or_else(|| Error::Config("train needs --covariates and --responses".into()))?;
    let method = method_config(&a.method, &cfg, None, a.common.seed)?;
    let fitted = method.fit(&loaded.data, a.common.seed)?;
    let path = a.common.out.join("model.json");
    save_model(&fitted, &path)?;
    if let Some(n) = &norm {
        write_json_atomic(&normalization_path(&path), n)?;
    }
    let final_loss = match &fitted {
        fosdnn::evaluation::Fitted::Fosdnn(m) => m.loss_trace.last().copied(),
        fosdnn::evaluation::Fitted::Linear(_) => None,
    };
    Ok(json!({
        "command": "train",
        "method": method.label(),
        "model": path,
        "n": loaded.data.n(),
        "d": loaded.data.d(),
        "param_count": method.param_count(loaded.data.d())?,
        "normalized": norm.is_some(),
        "final_loss": final_loss,
    }))
}

fn load_with_normalization(path: &Path) -> Result<(fosdnn::evaluation::Fitted, Option<Normalization>)> {
    let model = load_model(path)?;
    let np = normalization_path(path);
    let norm = if np.exists() {
        Some(read_json::<Normalization>(&np)?)
    } else {
        None
    };
    Ok((model, norm))
}

fn predict(a: PredictArgs) -> Result<Value> {
    let cfg = setup(&a.common)?;
    let mpath = model_path(&a.model, &cfg)?;
    let (model, norm) = load_with_normalization(&mpath)?;
    let cov = a
        .covariates
        .clone()
        .or_else(|| cfg.data.as_ref().map(|d| d.covariates.clone()))
        .ok_or_else(|| Error::Config("predict needs --covariates".into()))?;
    let (ids, mut xs, grids) = match a
        .responses
        .clone()
        .or_else(|| cfg.data.as_ref().map(|d| d.responses.clone()))
    {
        Some(resp) => {
            let loaded = load_dataset(&cov, &resp)?;
            let xs = loaded.data.samples().iter().map(|s| s.x().to_vec()).collect::<Vec<_>>();
            let grids = loaded
                .data
                .samples()
                .iter()
                .map(|s| s.grid().clone())
                .collect::<Vec<_>>();
            (loaded.ids, xs, grids)
        }
        None => {
            let (ids, xs, _) = load_covariates(&cov)?;
            let grid = TimeGrid::equispaced(a.grid_size)?;
            let grids = vec![grid; ids.len()];
            (ids, xs, grids)
        }
    };
    if let Some(n) = &norm {
        for x in &mut xs {
            n.transform(x)?;
        }
    }
    let preds = xs
        .iter()
        .zip(&grids)
        .map(|(x, g)| model.predict_curve(x, g))
        .collect::<Result<Vec<_>>>()?;
    let path = a.common.out.join("predictions.csv");
    save_predictions(&ids, &grids, &preds, &path)?;
    Ok(json!({"command": "predict", "predictions": path, "n": ids.len()}))
}

fn evaluate(a: EvaluateArgs) -> Result<Value> {
    let cfg = setup(&a.common)?;
    let mpath = model_path(&a.model, &cfg)?;
    let (model, norm) = load_with_normalization(&mpath)?;
    let flags = DataFlags {
        no_normalize: true,
        normalize: false,
        ..a.data.clone()
    };
    let (mut loaded, _) =
        dataset(&flags, &cfg)?.ok_or_else(|| Error::Config("evaluate needs --covariates and --responses".into()))?;
    if let Some(n) = &norm {
        n.apply(&mut loaded.data)?;
    }
    let preds = model.predict_dataset(&loaded.data)?;
    let value = mispe(&preds, &loaded.data, MISPE_DT)?;
    let method = match model {
        fosdnn::evaluation::Fitted::Fosdnn(_) => "fosdnn",
        fosdnn::evaluation::Fitted::Linear(_) => "linear",
    };
    let report = MispeReport::from_values(method, mpath.display().to_string(), vec![value])?;
    let path = a.common.out.join("report.json");
    write_json_atomic(&path, &report)?;
    Ok(json!({"command": "evaluate", "report": path, "mispe": value}))
}

fn cv(a: CvArgs) -> Result<Value> {
    let cfg = setup(&a.common)?;
    let seed = a.common.seed;
    let k = a.k.or(cfg.k).unwrap_or(3);
    let (data, grid): (FunctionalDataset, Vec<MethodConfig>) = match dataset(&a.data, &cfg)? {
        Some((loaded, _)) => {
            let grid = match &cfg.grid {
                Some(g) => g.clone(),
                None => scenario_cv_grid(
                    &ScenarioSpec::new(
                        a.scenario.scenario.or(cfg.scenario).unwrap_or(Scenario::S2),
                        1,
                        XType::Uniform,
                    )?,
                    &TrainConfig::default(),
                ),
            };
            (loaded.data, grid)
        }
        None => {
            let spec = scenario_spec(&a.scenario, &cfg, seed)?;
            let spec = ScenarioSpec { n_test: 0, ..spec };
            let (train, _, _) = generate_dataset(&spec, &RngStream::new(seed))?;
            let grid = match &cfg.grid {
                Some(g) => g.clone(),
                None => scenario_cv_grid(&spec, &cfg.train.clone().unwrap_or_default()),
            };
            (train, grid)
        }
    };
    let grid: Vec<MethodConfig> = grid
        .into_iter()
        .map(|m| match (m, a.epochs) {
            (MethodConfig::Fosdnn(c), Some(e)) => MethodConfig::Fosdnn(TrainConfig { epochs: e, ..c }),
            (m, _) => m,
        })
        .collect();
    let table = kfold_cv(&data, &grid, k, &RngStream::new(seed).substream(2))?;
    let path = a.common.out.join("cv_table.json");
    write_json_atomic(&path, &table)?;
    let best = &table.rows[table.selected];
    Ok(json!({
        "command": "cv",
        "cv_table": path,
        "k": k,
        "candidates": table.rows.len(),
        "selected": table.selected,
        "selected_config": best.config,
        "mean": best.mean,
        "std": best.std,
    }))
}

fn experiment(a: ExperimentArgs) -> Result<Value> {
    let cfg = setup(&a.common)?;
    let seed = a.common.seed;
    let spec = scenario_spec(&a.scenario, &cfg, seed)?;
    let method = method_config(&a.method, &cfg, Some(spec.scenario), seed)?;
    let reps = a.reps.or(cfg.reps).unwrap_or(5);
    let k = a.k.or(cfg.k).unwrap_or(3);
    let grid = || match (&cfg.grid, &method) {
        (Some(g), _) => g.clone(),
        (None, MethodConfig::Fosdnn(c)) => scenario_cv_grid(&spec, c),
        (None, m) => vec![m.clone()],
    };
    // Tune once per scenario whenever there is more than one candidate.
    let has_grid = cfg.grid.is_some() || matches!(method, MethodConfig::Fosdnn(_));
    let default_tuning = if has_grid { TuningKind::Once } else { TuningKind::Fixed };
    let tuning_kind = a.tuning.or(cfg.tuning).unwrap_or(default_tuning);
    let tuning = match tuning_kind {
        TuningKind::Fixed => Tuning::Fixed(method.clone()),
        TuningKind::Once => Tuning::OncePerScenario { grid: grid(), k },
        TuningKind::PerReplicate => Tuning::PerReplicate { grid: grid(), k },
    };
    let outcome = replicate_experiment_tuned(&spec, &tuning, reps, &RngStream::new(seed))?;
    let out = &a.common.out;
    write_json_atomic(&out.join("report.json"), &outcome.report)?;
    write_atomic(
        &out.join("report.txt"),
        render_table(std::slice::from_ref(&outcome.report)).as_bytes(),
    )?;
    if !outcome.cv_tables.is_empty() {
        write_json_atomic(&out.join("cv_tables.json"), &outcome.cv_tables)?;
    }
    Ok(json!({
        "command": "experiment",
        "report": out.join("report.json"),
        "spec": outcome.report.spec,
        "method": outcome.report.method,
        "reps": reps,
        "tuning": tuning_kind,
        "per_replicate": outcome.report.per_replicate,
        "mean": outcome.report.mean,
        "std": outcome.report.std,
    }))
}

fn rate(a: RateArgs) -> Result<Value> {
    let cfg = setup(&a.common)?;
    let seed = a.common.seed;
    let spec = scenario_spec(&a.scenario, &cfg, seed)?;
    let method = method_config(&a.method, &cfg, Some(spec.scenario), seed)?;
    let reps = a.reps.or(cfg.reps).unwrap_or(3);
    let n_list = a
        .n_list
        .clone()
        .or(cfg.n_list.clone())
        .unwrap_or_else(|| vec![200, 1000]);
    let probe = rate_probe(&spec, &n_list, &method, reps, &RngStream::new(seed))?;
    let path = a.common.out.join("rate.json");
    write_json_atomic(&path, &probe)?;
    Ok(json!({"command": "rate", "rate": path, "slope": probe.slope, "points": probe.points}))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

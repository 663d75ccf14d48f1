//! CSV datasets, model files and atomic writes.
//!
//! Covariates are wide (`sample_id,x1,…,xd`); responses are long
//! (`sample_id,t,y`), one row per observation with `t` strictly increasing
//! within a sample.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::LinearFosModel;
use crate::error::{Error, Result};
use crate::evaluation::Fitted;
use crate::network::NetworkParams;
use crate::numerics::TimeGrid;
use crate::training::{FittedModel, FunctionalDataset, FunctionalSample, TrainingSidecar};

/// Write `bytes` to a temporary file beside `path`, then rename over it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Per-column z-score. Constant columns keep mean 0 and scale 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn fit(data: &FunctionalDataset) -> Self {
        let d = data.d();
        let n = data.n().max(1) as f64;
        let mut mean = vec![0.0; d];
        for s in data.samples() {
            for (m, v) in mean.iter_mut().zip(s.x()) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for s in data.samples() {
            for ((acc, v), m) in scale.iter_mut().zip(s.x()).zip(&mean) {
                *acc += (v - m).powi(2) / n;
            }
        }
        for (j, sd) in scale.iter_mut().enumerate() {
            *sd = sd.sqrt();
            if !(*sd > 0.0) {
                log::warn!("covariate x{} is constant; left unnormalized", j + 1);
                *sd = 1.0;
                mean[j] = 0.0;
            }
        }
        Self { mean, scale }
    }

    pub fn transform(&self, x: &mut [f64]) -> Result<()> {
        if x.len() != self.mean.len() {
            return Err(Error::shape(format!(
                "normalization fitted for d = {}, got {} covariates",
                self.mean.len(),
                x.len()
            )));
        }
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
        Ok(())
    }

    pub fn apply(&self, data: &mut FunctionalDataset) -> Result<()> {
        for s in data.samples_mut() {
            self.transform(s.x_mut())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedData {
    pub ids: Vec<String>,
    pub data: FunctionalDataset,
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::ingestion(format!("{}: {e}", path.display())))
}

fn parse_num(field: &str, path: &Path, row: usize, column: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::ingestion(format!(
            "{} row {row}: column {column} has non-numeric value {field:?}",
            path.display()
        ))),
    }
}

/// Wide covariate table: ids in file order, one row of values each, and `d`
/// from the header.
pub fn load_covariates(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>, usize)> {
    let mut rdr = reader(path)?;
    let header = rdr
        .headers()
        .map_err(|e| Error::ingestion(format!("{}: {e}", path.display())))?
        .clone();
    if header.len() < 2 || &header[0] != "sample_id" {
        return Err(Error::ingestion(format!(
            "{}: header must be sample_id,x1,...,xd",
            path.display()
        )));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashMap::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::ingestion(format!("{} row {row}: {e}", path.display())))?;
        if record.len() != header.len() {
            return Err(Error::ingestion(format!(
                "{} row {row}: expected {} fields, found {}",
                path.display(),
                header.len(),
                record.len()
            )));
        }
        let id = record[0].to_string();
        if seen.insert(id.clone(), row).is_some() {
            return Err(Error::ingestion(format!(
                "{} row {row}: duplicate sample_id {id:?}",
                path.display()
            )));
        }
        let x = columns
            .iter()
            .enumerate()
            .map(|(j, c)| parse_num(&record[j + 1], path, row, c))
            .collect::<Result<Vec<_>>>()?;
        ids.push(id);
        rows.push(x);
    }
    Ok((ids, rows, columns.len()))
}

/// Join covariates and long-format responses on `sample_id`.
pub fn load_dataset(covariates: &Path, responses: &Path) -> Result<LoadedData> {
    let (ids, xs, d) = load_covariates(covariates)?;
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut curves: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); ids.len()];

    let mut rdr = reader(responses)?;
    let header = rdr
        .headers()
        .map_err(|e| Error::ingestion(format!("{}: {e}", responses.display())))?
        .clone();
    if header.iter().collect::<Vec<_>>() != ["sample_id", "t", "y"] {
        return Err(Error::ingestion(format!(
            "{}: header must be sample_id,t,y",
            responses.display()
        )));
    }
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::ingestion(format!("{} row {row}: {e}", responses.display())))?;
        if record.len() != 3 {
            return Err(Error::ingestion(format!(
                "{} row {row}: expected 3 fields",
                responses.display()
            )));
        }
        let id = &record[0];
        let Some(&k) = index.get(id) else {
            return Err(Error::ingestion(format!(
                "{} row {row}: sample_id {id:?} has no covariates",
                responses.display()
            )));
        };
        let t = parse_num(&record[1], responses, row, "t")?;
        let y = parse_num(&record[2], responses, row, "y")?;
        let (ts, ys) = &mut curves[k];
        if let Some(&prev) = ts.last() {
            if t <= prev {
                return Err(Error::ingestion(format!(
                    "{} row {row}: t = {t} does not increase for sample_id {id:?} (previous {prev})",
                    responses.display()
                )));
            }
        }
        ts.push(t);
        ys.push(y);
    }

    let mut samples = Vec::with_capacity(ids.len());
    for ((id, x), (ts, ys)) in ids.iter().zip(xs).zip(curves) {
        if ts.is_empty() {
            return Err(Error::ingestion(format!(
                "sample_id {id:?} has covariates but no responses"
            )));
        }
        let grid = TimeGrid::new(ts).map_err(|e| Error::ingestion(format!("sample_id {id:?}: {e}")))?;
        samples.push(FunctionalSample::new(x, grid, ys)?);
    }
    Ok(LoadedData {
        ids,
        data: FunctionalDataset::new(d, samples)?,
    })
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_bytes(rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).map_err(|e| Error::Io(e.into()))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Write `data` as a covariate table and a long response table; sample ids
/// are the row indices.
pub fn save_dataset(data: &FunctionalDataset, covariates: &Path, responses: &Path) -> Result<()> {
    let header = std::iter::once("sample_id".to_string()).chain((1..=data.d()).map(|j| format!("x{j}")));
    let cov = std::iter::once(header.collect()).chain(data.samples().iter().enumerate().map(|(i, s)| {
        std::iter::once(i.to_string())
            .chain(s.x().iter().map(|&v| format_float(v)))
            .collect()
    }));
    write_atomic(covariates, &csv_bytes(cov)?)?;
    let resp = std::iter::once(vec!["sample_id".into(), "t".into(), "y".into()]).chain(
        data.samples().iter().enumerate().flat_map(|(i, s)| {
            s.grid()
                .points()
                .iter()
                .zip(s.y())
                .map(move |(&t, &y)| vec![i.to_string(), format_float(t), format_float(y)])
        }),
    );
    write_atomic(responses, &csv_bytes(resp)?)
}

/// Long table `sample_id,t,y_hat`.
pub fn save_predictions(ids: &[String], grids: &[TimeGrid], predictions: &[Vec<f64>], path: &Path) -> Result<()> {
    if ids.len() != predictions.len() || grids.len() != predictions.len() {
        return Err(Error::shape("ids, grids and predictions differ in length"));
    }
    let rows = std::iter::once(vec!["sample_id".into(), "t".into(), "y_hat".into()]).chain(
        ids.iter().zip(grids).zip(predictions).flat_map(|((id, g), p)| {
            g.points()
                .iter()
                .zip(p)
                .map(move |(&t, &y)| vec![id.clone(), format_float(t), format_float(y)])
        }),
    );
    write_atomic(path, &csv_bytes(rows)?)
}

/// On-disk model: the network parameters or the spline baseline.
#[derive(Deserialize)]
#[serde(untagged)]
enum ModelRepr {
    Network(NetworkParams),
    Linear(LinearFosModel),
}

/// Path of the training sidecar that accompanies a network file.
pub fn sidecar_path(model: &Path) -> PathBuf {
    model.with_extension("train.json")
}

/// Network models also write `<stem>.train.json` with the config and loss trace.
pub fn save_model(model: &Fitted, path: &Path) -> Result<()> {
    match model {
        Fitted::Fosdnn(m) => {
            write_json_atomic(path, &m.params)?;
            write_json_atomic(&sidecar_path(path), &m.sidecar())
        }
        Fitted::Linear(m) => write_json_atomic(path, m),
    }
}

pub fn load_model(path: &Path) -> Result<Fitted> {
    let text = fs::read_to_string(path)?;
    let repr: ModelRepr = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("{}: not a network or linear model file ({e})", path.display())))?;
    match repr {
        ModelRepr::Linear(m) => Ok(Fitted::Linear(m)),
        ModelRepr::Network(params) => {
            let side = sidecar_path(path);
            let sidecar: TrainingSidecar = read_json(&side)
                .map_err(|e| Error::config(format!("{}: missing or invalid sidecar ({e})", side.display())))?;
            Ok(Fitted::Fosdnn(FittedModel::from_parts(params, sidecar)?))
        }
    }
}

//! Dataset files: a CSV with header `y,x1,…,xp` and a JSON sidecar holding
//! the generating spec and the true coefficients.

use std::fs;
use std::path::{Path, PathBuf};

use dbess::datagen::{DesignSpec, SyntheticDataset};
use dbess::quadratic::IndexSet;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n_total: usize,
    pub p: usize,
    pub s_star: usize,
    pub seed: u64,
    pub design: DesignSpec,
    pub support: Vec<usize>,
    pub signs: Vec<f64>,
    pub noise_sd: f64,
    pub config_hash: String,
}

impl DatasetMeta {
    pub fn of(data: &SyntheticDataset, config_hash: String) -> Self {
        let support = data.support();
        DatasetMeta {
            n_total: data.y.len(),
            p: data.theta_star.len(),
            s_star: support.len(),
            seed: data.seed,
            design: data.design.clone(),
            signs: support.iter().map(|&j| data.theta_star[j]).collect(),
            support,
            noise_sd: data.noise_sd,
            config_hash,
        }
    }

    pub fn theta_star(&self) -> CliResult<DVector<f64>> {
        if self.support.len() != self.signs.len() {
            return Err(CliError::Dataset("metadata support and signs differ in length".into()));
        }
        IndexSet::new(self.support.clone(), self.p)?;
        let mut theta = DVector::zeros(self.p);
        for (&j, &v) in self.support.iter().zip(&self.signs) {
            theta[j] = v;
        }
        Ok(theta)
    }
}

/// The sidecar path for a dataset CSV: same stem, `.json` extension.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_csv(path: &Path, x: &DMatrix<f64>, y: &DVector<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = std::iter::once("y".to_string()).chain((1..=x.ncols()).map(|j| format!("x{j}"))).collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let mut row = Vec::with_capacity(x.ncols() + 1);
    for i in 0..x.nrows() {
        row.clear();
        row.push(fmt_f64(y[i]));
        row.extend(x.row(i).iter().map(|v| fmt_f64(*v)));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_csv(path: &Path) -> CliResult<(DMatrix<f64>, DVector<f64>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let p = header.len().saturating_sub(1);
    let expected = std::iter::once("y".to_string()).chain((1..=p).map(|j| format!("x{j}")));
    if p == 0 || !header.iter().map(str::to_string).eq(expected) {
        return Err(CliError::Dataset(format!("{}: header must be y,x1,...,xp", path.display())));
    }
    let mut values = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Dataset(format!("{}: row {}: cannot parse {field:?}", path.display(), line + 2))
            })?;
            values.push(v);
        }
    }
    let rows = values.len() / (p + 1);
    if rows == 0 {
        return Err(CliError::Dataset(format!("{}: no observations", path.display())));
    }
    let all = DMatrix::from_row_slice(rows, p + 1, &values);
    let y = all.column(0).into_owned();
    let x = all.columns(1, p).into_owned();
    Ok((x, y))
}

pub fn write_meta(path: &Path, meta: &DatasetMeta) -> CliResult<()> {
    let text = serde_json::to_string_pretty(meta).expect("metadata serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// Reads the sidecar if it exists.
pub fn read_meta(path: &Path) -> CliResult<Option<DatasetMeta>> {
    match fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Dataset(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(CliError::io(path, e)),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Dataset(format!("{}: {other:?}", path.display())),
    }
}

//! Dataset CSVs (`x1,x2,...` header, one point per row) and the metadata
//! sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::model_io::StandardizationDoc;

pub const TRAIN_FILE: &str = "train.csv";
pub const VAL_FILE: &str = "val.csv";
pub const TEST_FILE: &str = "test.csv";
pub const META_FILE: &str = "dataset.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitDoc {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub seed: u64,
    pub dim: usize,
    pub split: SplitDoc,
    pub standardization: StandardizationDoc,
}

pub struct DatasetFiles {
    pub dir: PathBuf,
}

impl DatasetFiles {
    pub fn new(output_dir: &Path) -> Self {
        DatasetFiles { dir: output_dir.join("data") }
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    pub fn read_meta(&self) -> CliResult<DatasetMeta> {
        let p = self.path(META_FILE);
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::io(&p, e))
    }
}

pub fn write_points(path: &Path, points: &[Vec<f64>]) -> CliResult<()> {
    let dim = points.first().map(|p| p.len()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    for p in points {
        w.write_record(p.iter().map(|v| v.to_string())).map_err(|e| CliError::io(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(path, e))?;
    crate::write_file(path, &bytes)
}

pub fn read_points(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let dim = r.headers().map_err(|e| CliError::io(path, e))?.len();
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        if rec.len() != dim {
            return Err(CliError::io(path, format!("row {} has {} fields, expected {dim}", row + 1, rec.len())));
        }
        let p = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::io(path, format!("row {}: {e}", row + 1)))?;
        out.push(p);
    }
    Ok(out)
}

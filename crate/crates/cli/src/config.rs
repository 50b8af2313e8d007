//! Experiment configuration: one TOML document plus `--set key=value`
//! overrides applied on the parsed table before typing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vtpc_core::data::{DatasetName, SplitSpec};
use vtpc_core::training::{CertifyConfig, SoftGateConfig, TrainConfig};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Baseline,
    Vt,
    Hfv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VtreeKind {
    LeftLinear,
    RandomBinary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub name: String,
    pub seed: u64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let s = SplitSpec::default();
        DatasetSection { name: "pinwheel".into(), seed: 0, train: s.train, val: s.val, test: s.test }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub vtree: VtreeKind,
    pub vtree_seed: u64,
    /// Input and sum units per region; 5 in 2D and 10 otherwise when unset.
    pub units: Option<usize>,
    /// Centroids per VT node, or per variable for HFV.
    pub cells: usize,
    pub joint_cap: usize,
    pub kmeans_iters: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: ModelKind::Vt,
            vtree: VtreeKind::RandomBinary,
            vtree_seed: 0,
            units: None,
            cells: 5,
            joint_cap: 4096,
            kmeans_iters: 100,
        }
    }
}

impl ModelSection {
    pub fn units_for(&self, dim: usize) -> usize {
        self.units.unwrap_or(if dim == 2 { 5 } else { 10 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub snapshot_stride: usize,
    /// Certified hard-gated validation bounds at snapshot epochs.
    pub certify_snapshots: bool,
    pub snapshot_iters: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let c = t.certify.expect("certification is on by default");
        TrainSection {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: t.seed,
            alpha_start: t.gate.alpha_start,
            alpha_end: t.gate.alpha_end,
            snapshot_stride: t.snapshot_stride,
            certify_snapshots: true,
            snapshot_iters: c.max_iters,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySection {
    /// Padding of the data bounding box, in standardized units.
    pub padding: f64,
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for CertifySection {
    fn default() -> Self {
        CertifySection { padding: 0.5, epsilon: 1e-3, max_iters: 10_000 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub certify: CertifySection,
    pub output_dir: Option<PathBuf>,
}

pub const OUTPUT_ROOT_ENV: &str = "VTPC_OUTPUT_ROOT";

impl ExperimentConfig {
    /// Reads `path` (if any), applies the overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                text.parse::<toml::Table>().map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig =
            toml::Value::Table(table).try_into().map_err(|e| CliError::usage(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.dataset_name()?;
        let bad = |m: &str| Err(CliError::usage(m.to_string()));
        if self.dataset.train == 0 || self.dataset.val == 0 || self.dataset.test == 0 {
            return bad("dataset split counts must be positive");
        }
        if self.model.units == Some(0) || self.model.cells == 0 {
            return bad("model.units and model.cells must be positive");
        }
        if !(self.train.learning_rate >= 0.0) || self.train.batch_size == 0 || self.train.epochs == 0 {
            return bad("train.learning_rate must be >= 0, batch_size and epochs positive");
        }
        if !(self.train.alpha_start > 0.0) || self.train.alpha_end < self.train.alpha_start {
            return bad("train.alpha_start must be positive and not above alpha_end");
        }
        if !(self.certify.padding >= 0.0) || !(self.certify.epsilon > 0.0) {
            return bad("certify.padding must be >= 0 and certify.epsilon positive");
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> CliResult<DatasetName> {
        self.dataset.name.parse().map_err(|e: vtpc_core::Error| CliError::usage(e.to_string()))
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec { train: self.dataset.train, val: self.dataset.val, test: self.dataset.test }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed: self.train.seed,
            gate: SoftGateConfig { alpha_start: self.train.alpha_start, alpha_end: self.train.alpha_end },
            snapshot_stride: self.train.snapshot_stride,
            certify: self
                .train
                .certify_snapshots
                .then_some(CertifyConfig { padding: self.certify.padding, max_iters: self.train.snapshot_iters }),
        }
    }

    /// Output directory: config, then the environment, then `runs`.
    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

/// Applies `a.b.c=value`. The value is read as a TOML literal when it parses
/// as one, else as a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> CliResult<()> {
    let (key, raw) =
        spec.split_once('=').ok_or_else(|| CliError::usage(format!("--set expects key=value, got '{spec}'")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::usage(format!("bad key '{key}'")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut cur = table;
    for p in &path[..path.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| CliError::usage(format!("'{p}' in '{key}' is not a table")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

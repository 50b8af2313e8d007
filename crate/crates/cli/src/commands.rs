//! Subcommand implementations. Each returns its report so tests can inspect
//! it without parsing files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use vtpc_core::builder::{build_baseline, build_vt, data_leaf_init};
use vtpc_core::certified::{Integrator, Refiner, Region};
use vtpc_core::circuit::{Circuit, GateMode, Node};
use vtpc_core::data::{generate, standardize_and_split};
use vtpc_core::hfv::{build_hfv, Vtree};
use vtpc_core::rng::{stream, SeededRng};
use vtpc_core::training::{kmeans_1d_sorted, kmeans_init, mean_log_likelihood, train};

use crate::config::{ExperimentConfig, ModelKind, VtreeKind};
use crate::datasets::{self, DatasetFiles, DatasetMeta, SplitDoc, META_FILE, TEST_FILE, TRAIN_FILE, VAL_FILE};
use crate::error::{CliError, CliResult};
use crate::export;
use crate::manifest::RunManifest;
use crate::model_io::{bounds_of, ModelMeta, SavedModel, StandardizationDoc};
use crate::traces;

pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_TRACE_FILE: &str = "train_trace.csv";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const CERTIFY_FILE: &str = "certify.json";
pub const REFINE_TRACE_FILE: &str = "refine_trace.csv";
pub const EVAL_FILE: &str = "eval.json";
pub const GRID_FILE: &str = "grid.csv";
pub const OVERLAY_FILE: &str = "tessellation.json";

#[derive(Debug, Parser)]
#[command(
    name = "vtpc",
    version,
    about = "Voronoi-gated probabilistic circuits: datasets, training, certified bounds and exports"
)]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set train.epochs=30`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (default: config `output_dir`, then $VTPC_OUTPUT_ROOT, then `runs`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate, split and standardize a synthetic dataset.
    Generate {
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build and train a model on the generated dataset.
    Train,
    /// Certified bounds on the partition function of a model.
    Certify {
        #[command(flatten)]
        model: ModelArg,
        /// Padding around the training-data bounding box (overrides `certify.padding`).
        #[arg(long)]
        padding: Option<f64>,
        /// Target gap `z_hi - z_lo` (overrides `certify.epsilon`).
        #[arg(long)]
        epsilon: Option<f64>,
        /// Refinement budget in box splits (overrides `certify.max_iters`).
        #[arg(long)]
        max_iters: Option<usize>,
        /// Cross-check against midpoint quadrature (2D only).
        #[arg(long)]
        quadrature: bool,
    },
    /// Mean log-likelihood of a CSV file under a model.
    Eval {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        data: PathBuf,
        /// `hard` or `soft:<alpha>`.
        #[arg(long, default_value = "hard")]
        mode: String,
    },
    /// Log-density on a regular 2D grid over the model domain.
    ExportGrid {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        #[arg(long, default_value = "hard")]
        mode: String,
        #[arg(long)]
        padding: Option<f64>,
    },
    /// Cell polygons, centroids and inner/outer boxes of a 2D model.
    ExportTessellation {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        padding: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model file (default: `model.json` in the output directory).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

impl ModelArg {
    fn path(&self, out: &Path) -> PathBuf {
        self.model.clone().unwrap_or_else(|| out.join(MODEL_FILE))
    }
}

pub fn parse_mode(s: &str) -> CliResult<GateMode> {
    if s == "hard" {
        return Ok(GateMode::Hard);
    }
    if let Some(a) = s.strip_prefix("soft:") {
        if let Ok(alpha) = a.parse::<f64>() {
            if alpha > 0.0 && alpha.is_finite() {
                return Ok(GateMode::Soft(alpha));
            }
        }
    }
    Err(CliError::usage(format!("mode must be 'hard' or 'soft:<alpha>' with alpha > 0, got '{s}'")))
}

/// Runs one command and merges its artifacts into the output manifest.
pub fn run(cli: &Cli) -> CliResult<()> {
    let mut overrides = cli.overrides.clone();
    if let Command::Generate { dataset, seed } = &cli.command {
        if let Some(d) = dataset {
            overrides.push(format!("dataset.name={}", toml::Value::String(d.clone())));
        }
        if let Some(s) = seed {
            overrides.push(format!("dataset.seed={s}"));
        }
    }
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir());
    let start = Instant::now();
    let (phase, result) = match &cli.command {
        Command::Generate { .. } => ("generate", cmd_generate(&cfg, &out).map(|_| ())),
        Command::Train => ("train", cmd_train(&cfg, &out).map(|_| ())),
        Command::Certify { model, padding, epsilon, max_iters, quadrature } => {
            let mut c = cfg.certify.clone();
            c.padding = padding.unwrap_or(c.padding);
            c.epsilon = epsilon.unwrap_or(c.epsilon);
            c.max_iters = max_iters.unwrap_or(c.max_iters);
            ("certify", cmd_certify(&model.path(&out), &c, *quadrature, &out).map(|_| ()))
        }
        Command::Eval { model, data, mode } => (
            "eval",
            parse_mode(mode).and_then(|m| cmd_eval(&model.path(&out), data, m, &cfg.certify, &out)).map(|_| ()),
        ),
        Command::ExportGrid { model, resolution, mode, padding } => (
            "export-grid",
            parse_mode(mode)
                .and_then(|m| {
                    cmd_export_grid(&model.path(&out), *resolution, m, padding.unwrap_or(cfg.certify.padding), &out)
                })
                .map(|_| ()),
        ),
        Command::ExportTessellation { model, padding } => (
            "export-tessellation",
            cmd_export_tessellation(&model.path(&out), padding.unwrap_or(cfg.certify.padding), &out).map(|_| ()),
        ),
    };
    // Partial outputs (e.g. an aborted training trace) are still recorded.
    if out.is_dir() {
        let hash = matches!(cli.command, Command::Generate { .. } | Command::Train).then(|| cfg.hash());
        let m = RunManifest::update(&out, phase, hash, start.elapsed().as_secs_f64());
        result?;
        m?;
        return Ok(());
    }
    result
}

pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> CliResult<DatasetMeta> {
    let name = cfg.dataset_name()?;
    let split = cfg.split();
    let raw = generate(name, split.total(), cfg.dataset.seed)?;
    let s = standardize_and_split(&raw, split, cfg.dataset.seed)?;
    let files = DatasetFiles::new(out);
    datasets::write_points(&files.path(TRAIN_FILE), &s.train)?;
    datasets::write_points(&files.path(VAL_FILE), &s.val)?;
    datasets::write_points(&files.path(TEST_FILE), &s.test)?;
    let meta = DatasetMeta {
        name: name.to_string(),
        seed: cfg.dataset.seed,
        dim: name.dim(),
        split: SplitDoc { train: split.train, val: split.val, test: split.test },
        standardization: StandardizationDoc::from(&s.standardization),
    };
    crate::write_json(&files.path(META_FILE), &meta)?;
    Ok(meta)
}

fn make_vtree(cfg: &ExperimentConfig, dim: usize) -> CliResult<Vtree> {
    Ok(match cfg.model.vtree {
        VtreeKind::LeftLinear => Vtree::left_linear(dim)?,
        VtreeKind::RandomBinary => {
            Vtree::random_binary(dim, &mut SeededRng::with_stream(cfg.model.vtree_seed, stream::VTREE))?
        }
    })
}

/// Initial circuit for the configured model kind: k-means centroids, leaf
/// means drawn from training points, uniform mixture weights.
pub fn build_model(cfg: &ExperimentConfig, train_data: &[Vec<f64>]) -> CliResult<Circuit> {
    let dim = train_data.first().map(|p| p.len()).ok_or_else(|| CliError::usage("empty training data"))?;
    let units = cfg.model.units_for(dim);
    let vtree = make_vtree(cfg, dim)?;
    let seed = cfg.train.seed;
    let mut rng = SeededRng::with_stream(seed, stream::LEAF_INIT);
    let mut init = data_leaf_init(train_data, &mut rng);
    let k = cfg.model.cells;
    Ok(match cfg.model.kind {
        ModelKind::Baseline => build_baseline(&vtree, units, &mut init)?,
        ModelKind::Vt => {
            let centroids = kmeans_init(train_data, k, cfg.model.kmeans_iters, seed)?;
            build_vt(&vtree, units, &centroids, &mut init)?
        }
        ModelKind::Hfv => {
            let per_var = (0..dim)
                .map(|v| kmeans_1d_sorted(train_data, v, k, cfg.model.kmeans_iters, seed))
                .collect::<vtpc_core::Result<Vec<_>>>()?;
            build_hfv(&vtree, units, &per_var, cfg.model.joint_cap, &mut init)?
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub kind: ModelKind,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub best_val_ll_soft: Option<f64>,
    pub aborted: Option<String>,
}

pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> CliResult<TrainReport> {
    let files = DatasetFiles::new(out);
    let meta = files.read_meta()?;
    let train_data = datasets::read_points(&files.path(TRAIN_FILE))?;
    let val_data = datasets::read_points(&files.path(VAL_FILE))?;
    let initial = build_model(cfg, &train_data)?;
    let outcome = train(&initial, &train_data, &val_data, &cfg.train_config())?;
    traces::write_train_trace(&out.join(TRAIN_TRACE_FILE), &outcome.trace)?;
    let saved = SavedModel::new(
        outcome.model,
        ModelMeta {
            kind: serde_json::to_value(cfg.model.kind)
                .expect("enum serializes")
                .as_str()
                .unwrap_or_default()
                .to_string(),
            dataset: Some(meta.name.clone()),
            data_bounds: bounds_of(&train_data),
            standardization: Some(meta.standardization.clone()),
        },
    );
    saved.save(&out.join(MODEL_FILE))?;
    let report = TrainReport {
        kind: cfg.model.kind,
        epochs_run: outcome.trace.len(),
        best_epoch: outcome.best_epoch,
        best_val_ll_soft: outcome.best_epoch.map(|e| outcome.trace[e].val_ll_soft),
        aborted: outcome.aborted.as_ref().map(|e| e.to_string()),
    };
    crate::write_json(&out.join(TRAIN_REPORT_FILE), &report)?;
    if let Some(e) = outcome.aborted {
        return Err(CliError::Numeric(format!("training stopped at epoch {}: {e}", report.epochs_run)));
    }
    Ok(report)
}

fn has_multi_cell_vt(c: &Circuit) -> bool {
    c.nodes().iter().any(|n| matches!(n, Node::Vt(v) if v.experts.len() > 1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureCheck {
    pub value: f64,
    pub inside: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub z_lo: f64,
    pub z_hi: f64,
    pub gap: f64,
    pub iters: usize,
    pub converged: bool,
    /// True when the model has no multi-cell VT node and Z is exact.
    pub exact: bool,
    pub hi_without_tail: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureCheck>,
}

pub const QUADRATURE_GRID: usize = 400;
pub const QUADRATURE_MARGIN: f64 = 10.0;

pub fn cmd_certify(
    model_path: &Path,
    c: &crate::config::CertifySection,
    quadrature: bool,
    out: &Path,
) -> CliResult<CertifyReport> {
    let m = SavedModel::load(model_path)?;
    let circuit = &m.circuit;
    let domain = m.domain(c.padding)?;
    let (bounds, hi_without_tail, iters, trace, exact) = if has_multi_cell_vt(circuit) {
        let r = Refiner::new(circuit, &domain)?.run(c.epsilon, c.max_iters)?;
        (r.bounds, r.hi_without_tail, r.iters, r.trace, false)
    } else {
        let z = Integrator::exact(circuit).integrate(circuit.root(), &Region::full(circuit.num_vars()))?;
        let row = vtpc_core::certified::TraceRow {
            iter: 0,
            z_lo: z.lo,
            z_hi: z.hi,
            gap: z.gap(),
            boxes_total: 0,
            boxes_boundary: 0,
        };
        (z, z.hi, 0, vec![row], true)
    };
    let quadrature = if quadrature {
        let value = export::quadrature_2d(circuit, &domain.bounds, QUADRATURE_GRID, QUADRATURE_MARGIN)?;
        Some(QuadratureCheck { value, inside: bounds.lo <= value && value <= bounds.hi })
    } else {
        None
    };
    let report = CertifyReport {
        z_lo: bounds.lo,
        z_hi: bounds.hi,
        gap: bounds.gap(),
        iters,
        converged: bounds.gap() <= c.epsilon,
        exact,
        hi_without_tail,
        epsilon: c.epsilon,
        max_iters: c.max_iters,
        domain_lower: domain.bounds.lower.clone(),
        domain_upper: domain.bounds.upper.clone(),
        quadrature,
    };
    traces::write_refine_trace(&out.join(REFINE_TRACE_FILE), &trace)?;
    crate::write_json(&out.join(CERTIFY_FILE), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub mode: String,
    /// Mean log of the unnormalized (gated) density.
    pub mean_log_density: f64,
    /// Certified interval on the normalized mean log-likelihood (hard mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ll_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ll_hi: Option<f64>,
}

pub fn cmd_eval(
    model_path: &Path,
    data: &Path,
    mode: GateMode,
    c: &crate::config::CertifySection,
    out: &Path,
) -> CliResult<EvalReport> {
    let m = SavedModel::load(model_path)?;
    let points = datasets::read_points(data)?;
    if points.is_empty() {
        return Err(CliError::usage(format!("{} has no rows", data.display())));
    }
    let mean = mean_log_likelihood(&m.circuit, &points, mode)?;
    let (ll_lo, ll_hi) = match mode {
        GateMode::Hard if has_multi_cell_vt(&m.circuit) => {
            let (lo, hi) =
                vtpc_core::training::hard_ll_bounds(&m.circuit, &points, &m.domain(c.padding)?, c.max_iters)?;
            (Some(lo), Some(hi))
        }
        GateMode::Hard => {
            let (lo, hi) = vtpc_core::training::hard_ll_bounds(
                &m.circuit,
                &points,
                &vtpc_core::certified::DomainSpec::fixed(vtpc_core::geometry::AxisBox::cube(
                    m.circuit.num_vars(),
                    -1.0,
                    1.0,
                ))?,
                0,
            )?;
            (Some(lo), Some(hi))
        }
        GateMode::Soft(_) => (None, None),
    };
    let report = EvalReport {
        n: points.len(),
        mode: match mode {
            GateMode::Hard => "hard".into(),
            GateMode::Soft(a) => format!("soft:{a}"),
        },
        mean_log_density: mean,
        ll_lo,
        ll_hi,
    };
    crate::write_json(&out.join(EVAL_FILE), &report)?;
    Ok(report)
}

pub fn cmd_export_grid(
    model_path: &Path,
    resolution: usize,
    mode: GateMode,
    padding: f64,
    out: &Path,
) -> CliResult<usize> {
    let m = SavedModel::load(model_path)?;
    let domain = m.domain(padding)?;
    let rows = export::density_grid(&m.circuit, &domain.bounds, resolution, mode)?;
    export::write_grid(&out.join(GRID_FILE), &rows)?;
    Ok(rows.len())
}

pub fn cmd_export_tessellation(model_path: &Path, padding: f64, out: &Path) -> CliResult<export::TessellationOverlay> {
    let m = SavedModel::load(model_path)?;
    let domain = m.domain(padding)?;
    let overlay = export::tessellation_overlay(&m.circuit, &domain.bounds)?;
    let path = out.join(OVERLAY_FILE);
    crate::write_json(&path, &overlay)?;
    // Re-read what was written and re-verify the boxes against the cells.
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let back: export::TessellationOverlay = serde_json::from_str(&text).map_err(|e| CliError::io(&path, e))?;
    export::verify_overlay(&back).map_err(|e| CliError::Numeric(format!("overlay verification failed: {e}")))?;
    Ok(back)
}

//! JSON model documents. Floats are written in shortest round-trip form, so
//! save -> load -> save is byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vtpc_core::certified::DomainSpec;
use vtpc_core::circuit::{Circuit, GaussianLeaf, HfvBlock, HfvSumNode, Node, NodeId, ProductNode, SumNode, VtSumNode};
use vtpc_core::data::Standardization;
use vtpc_core::geometry::{AxisBox, Tessellation};

use crate::error::{CliError, CliResult};

pub const FORMAT: &str = "vtpc-model";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NodeDoc {
    Leaf { var: usize, mean: f64, stddev: f64 },
    Product { children: Vec<usize> },
    Sum { children: Vec<usize>, log_weights: Vec<f64> },
    Vt { centroids: Vec<Vec<f64>>, log_mixture: Vec<f64>, experts: Vec<usize> },
    Hfv { blocks: Vec<BlockDoc>, log_joint: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDoc {
    pub vars: Vec<usize>,
    /// Sorted centroid list per variable of the block.
    pub centroids: Vec<Vec<f64>>,
    pub factor_cells: Vec<usize>,
    pub factor_experts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsDoc {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandardizationDoc {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

/// Descriptive fields stored next to the circuit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    /// Unpadded per-variable min/max of the training split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_bounds: Option<BoundsDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<StandardizationDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    version: u32,
    #[serde(flatten)]
    meta: ModelMeta,
    num_vars: usize,
    root: usize,
    nodes: Vec<NodeDoc>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SavedModel {
    pub circuit: Circuit,
    pub meta: ModelMeta,
}

impl SavedModel {
    pub fn new(circuit: Circuit, meta: ModelMeta) -> Self {
        SavedModel { circuit, meta }
    }

    pub fn to_json(&self) -> String {
        let c = &self.circuit;
        let doc = ModelDocument {
            format: FORMAT.into(),
            version: VERSION,
            meta: self.meta.clone(),
            num_vars: c.num_vars(),
            root: c.root().0,
            nodes: c.nodes().iter().map(node_doc).collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| CliError::usage(format!("invalid model document: {e}")))?;
        if doc.format != FORMAT || doc.version != VERSION {
            return Err(CliError::usage(format!("unsupported model format {} v{}", doc.format, doc.version)));
        }
        let nodes = doc.nodes.iter().map(node_from_doc).collect::<CliResult<Vec<_>>>()?;
        let circuit = Circuit::new(doc.num_vars, nodes, NodeId(doc.root))?;
        Ok(SavedModel { circuit, meta: doc.meta })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        crate::write_file(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Data bounding box padded by `padding`; errors when the model carries
    /// no data bounds (the certified path needs a bounded domain).
    pub fn domain(&self, padding: f64) -> CliResult<DomainSpec> {
        let b =
            self.meta.data_bounds.as_ref().ok_or_else(|| {
                CliError::usage("model has no data bounds; the certified path needs a bounded domain")
            })?;
        Ok(DomainSpec::from_data(&[b.lower.clone(), b.upper.clone()], padding)?)
    }
}

pub fn bounds_of(points: &[Vec<f64>]) -> Option<BoundsDoc> {
    let d = points.first()?.len();
    let mut lower = vec![f64::INFINITY; d];
    let mut upper = vec![f64::NEG_INFINITY; d];
    for p in points {
        for i in 0..d {
            lower[i] = lower[i].min(p[i]);
            upper[i] = upper[i].max(p[i]);
        }
    }
    Some(BoundsDoc { lower, upper })
}

impl From<&Standardization> for StandardizationDoc {
    fn from(s: &Standardization) -> Self {
        StandardizationDoc { mean: s.mean.clone(), stddev: s.stddev.clone() }
    }
}

impl BoundsDoc {
    pub fn to_box(&self) -> AxisBox {
        AxisBox { lower: self.lower.clone(), upper: self.upper.clone() }
    }
}

fn ids(v: &[NodeId]) -> Vec<usize> {
    v.iter().map(|n| n.0).collect()
}

fn node_ids(v: &[usize]) -> Vec<NodeId> {
    v.iter().map(|&n| NodeId(n)).collect()
}

fn node_doc(n: &Node) -> NodeDoc {
    match n {
        Node::Leaf(l) => NodeDoc::Leaf { var: l.var, mean: l.mean, stddev: l.stddev },
        Node::Product(p) => NodeDoc::Product { children: ids(&p.children) },
        Node::Sum(s) => NodeDoc::Sum { children: ids(&s.children), log_weights: s.log_weights.clone() },
        Node::Vt(v) => NodeDoc::Vt {
            centroids: v.tessellation.to_rows(),
            log_mixture: v.log_mixture.clone(),
            experts: ids(&v.experts),
        },
        Node::Hfv(h) => NodeDoc::Hfv {
            blocks: h
                .blocks
                .iter()
                .map(|b| BlockDoc {
                    vars: b.vars().to_vec(),
                    centroids: b.centroids().to_vec(),
                    factor_cells: b.factor_cells().to_vec(),
                    factor_experts: ids(b.factor_experts()),
                })
                .collect(),
            log_joint: h.log_joint.clone(),
        },
    }
}

fn node_from_doc(d: &NodeDoc) -> CliResult<Node> {
    Ok(match d {
        NodeDoc::Leaf { var, mean, stddev } => Node::Leaf(GaussianLeaf { var: *var, mean: *mean, stddev: *stddev }),
        NodeDoc::Product { children } => Node::Product(ProductNode { children: node_ids(children) }),
        NodeDoc::Sum { children, log_weights } => {
            Node::Sum(SumNode { children: node_ids(children), log_weights: log_weights.clone() })
        }
        NodeDoc::Vt { centroids, log_mixture, experts } => Node::Vt(VtSumNode {
            tessellation: Tessellation::new(centroids)?,
            log_mixture: log_mixture.clone(),
            experts: node_ids(experts),
        }),
        NodeDoc::Hfv { blocks, log_joint } => Node::Hfv(HfvSumNode {
            blocks: blocks
                .iter()
                .map(|b| {
                    HfvBlock::new(
                        b.vars.clone(),
                        b.centroids.clone(),
                        b.factor_cells.clone(),
                        node_ids(&b.factor_experts),
                    )
                })
                .collect::<vtpc_core::Result<Vec<_>>>()?,
            log_joint: log_joint.clone(),
        }),
    })
}

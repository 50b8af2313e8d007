//! Region-graph style circuit templates over a vtree: a plain smooth
//! decomposable baseline, a root VT-gated variant and the HFV variant.

use alloc::vec;
use alloc::vec::Vec;

use crate::circuit::{Circuit, GaussianLeaf, HfvBlock, HfvSumNode, Node, NodeId, ProductNode, SumNode, VtSumNode};
use crate::error::{arg, Error, Result};
use crate::geometry::Tessellation;
use crate::hfv::Vtree;
use crate::rng::{stream, SeededRng};
use crate::training::{ParamClass, Params};

/// Supplies `(mean, stddev)` for the leaf of `(variable, unit)`.
pub type LeafInit<'a> = dyn FnMut(usize, usize) -> (f64, f64) + 'a;

pub enum Gating<'a> {
    None,
    /// VT node at the root with one expert per centroid (rows over all vars).
    RootVt {
        centroids: &'a [Vec<f64>],
    },
    Hfv {
        per_var_centroids: &'a [Vec<f64>],
        joint_cap: usize,
    },
}

/// Leaf means drawn from random training points, unit stddev.
pub fn data_leaf_init<'a>(data: &'a [Vec<f64>], rng: &'a mut SeededRng) -> impl FnMut(usize, usize) -> (f64, f64) + 'a {
    move |var, _unit| (data[rng.below(data.len())][var], 1.0)
}

pub fn build_baseline(vtree: &Vtree, units: usize, leaf_init: &mut LeafInit<'_>) -> Result<Circuit> {
    build(vtree, units, &Gating::None, leaf_init)
}

/// Baseline template whose root sum is replaced by a VT node over `K`
/// expert sums sharing the root's product layer.
pub fn build_vt(vtree: &Vtree, units: usize, centroids: &[Vec<f64>], leaf_init: &mut LeafInit<'_>) -> Result<Circuit> {
    build(vtree, units, &Gating::RootVt { centroids }, leaf_init)
}

pub(crate) fn build(vtree: &Vtree, units: usize, gating: &Gating<'_>, leaf_init: &mut LeafInit<'_>) -> Result<Circuit> {
    if units == 0 {
        return arg("units must be positive");
    }
    let vars = vtree.vars();
    let d = vars.len();
    vtree.validate(d)?;
    if let Gating::Hfv { per_var_centroids, .. } = gating {
        if per_var_centroids.len() != d || per_var_centroids.iter().any(|c| c.is_empty()) {
            return arg("every variable needs at least one centroid");
        }
    }
    let mut b = Builder { nodes: Vec::new(), leaf_init };
    let root = b.region(vtree, units, gating, true)?;
    Circuit::new(d, b.nodes, root[0])
}

struct Builder<'a, 'b> {
    nodes: Vec<Node>,
    leaf_init: &'a mut LeafInit<'b>,
}

fn uniform(n: usize) -> Vec<f64> {
    vec![-libm::log(n as f64); n]
}

impl Builder<'_, '_> {
    fn push(&mut self, n: Node) -> NodeId {
        self.nodes.push(n);
        NodeId(self.nodes.len() - 1)
    }

    fn region(&mut self, v: &Vtree, units: usize, gating: &Gating<'_>, is_root: bool) -> Result<Vec<NodeId>> {
        match v {
            Vtree::Leaf(var) => {
                let leaves: Vec<NodeId> = (0..units)
                    .map(|u| {
                        let (mean, stddev) = (self.leaf_init)(*var, u);
                        self.push(Node::Leaf(GaussianLeaf { var: *var, mean, stddev }))
                    })
                    .collect();
                if is_root {
                    return self.root_over(leaves, gating, &[v]);
                }
                Ok(leaves)
            }
            Vtree::Node(l, r) => {
                let left = self.region(l, units, gating, false)?;
                let right = self.region(r, units, gating, false)?;
                if let Gating::Hfv { per_var_centroids, joint_cap } = gating {
                    let n_out = if is_root { 1 } else { units };
                    return self.hfv_units(&[(l, &left), (r, &right)], per_var_centroids, *joint_cap, n_out);
                }
                let mut products = Vec::with_capacity(left.len() * right.len());
                for &a in &left {
                    for &c in &right {
                        products.push(self.push(Node::Product(ProductNode { children: vec![a, c] })));
                    }
                }
                if is_root {
                    return self.root_over(products, gating, &[l, r]);
                }
                Ok((0..units)
                    .map(|_| {
                        self.push(Node::Sum(SumNode {
                            children: products.clone(),
                            log_weights: uniform(products.len()),
                        }))
                    })
                    .collect())
            }
        }
    }

    fn root_over(&mut self, children: Vec<NodeId>, gating: &Gating<'_>, parts: &[&Vtree]) -> Result<Vec<NodeId>> {
        match gating {
            Gating::None => Ok(vec![self.push(Node::Sum(SumNode { log_weights: uniform(children.len()), children }))]),
            Gating::RootVt { centroids } => {
                let tessellation = Tessellation::new(centroids)?;
                let k = tessellation.num_cells();
                let experts: Vec<NodeId> = (0..k)
                    .map(|_| {
                        self.push(Node::Sum(SumNode {
                            children: children.clone(),
                            log_weights: uniform(children.len()),
                        }))
                    })
                    .collect();
                Ok(vec![self.push(Node::Vt(VtSumNode { tessellation, log_mixture: uniform(k), experts }))])
            }
            Gating::Hfv { per_var_centroids, joint_cap } => {
                // Single-variable root: one block over the leaves.
                self.hfv_units(&[(parts[0], &children)], per_var_centroids, *joint_cap, 1)
            }
        }
    }

    fn hfv_units(
        &mut self,
        blocks: &[(&Vtree, &Vec<NodeId>)],
        per_var_centroids: &[Vec<f64>],
        joint_cap: usize,
        n_out: usize,
    ) -> Result<Vec<NodeId>> {
        let mut made = Vec::with_capacity(blocks.len());
        for (t, experts) in blocks {
            let vars = t.vars();
            let centroids: Vec<Vec<f64>> = vars.iter().map(|&v| per_var_centroids[v].clone()).collect();
            let cells: usize = centroids.iter().map(|c| c.len()).product();
            let mut factor_cells = Vec::with_capacity(cells * experts.len());
            let mut factor_experts = Vec::with_capacity(cells * experts.len());
            for cell in 0..cells {
                for &e in experts.iter() {
                    factor_cells.push(cell);
                    factor_experts.push(e);
                }
            }
            made.push(HfvBlock::new(vars, centroids, factor_cells, factor_experts)?);
        }
        let joint_cells: usize = made.iter().map(|b| b.num_cells()).product();
        if joint_cells > joint_cap {
            return Err(Error::JointCap { node: self.nodes.len(), count: joint_cells, cap: joint_cap });
        }
        let joint_len: usize = made.iter().map(|b| b.num_factors()).product();
        Ok((0..n_out)
            .map(|_| self.push(Node::Hfv(HfvSumNode { blocks: made.clone(), log_joint: uniform(joint_len) })))
            .collect())
    }
}

/// Randomly parameterized circuits for tests and benchmarks: leaf means in
/// `[-spread, spread]`, stddevs in `[0.4, 1.5]`, standard-normal logits.
pub struct RandomSpec {
    pub dim: usize,
    pub units: usize,
    pub spread: f64,
    pub seed: u64,
}

fn random_leaves(rng: &mut SeededRng, spread: f64) -> impl FnMut(usize, usize) -> (f64, f64) + '_ {
    move |_, _| (rng.uniform_range(-spread, spread), rng.uniform_range(0.4, 1.5))
}

fn randomize_logits(c: &mut Circuit, rng: &mut SeededRng) -> Result<()> {
    let mut p = Params::extract(c);
    for (v, cl) in p.values.iter_mut().zip(&p.classes) {
        if *cl == ParamClass::MixtureLogit {
            *v = rng.normal();
        }
    }
    p.apply(c)
}

/// Root-VT circuit with `k` centroids drawn uniformly in the spread box.
pub fn random_vt(spec: &RandomSpec, k: usize) -> Result<Circuit> {
    let mut rng = SeededRng::with_stream(spec.seed, stream::RANDOM_CIRCUIT);
    let vt = Vtree::random_binary(spec.dim, &mut rng)?;
    let centroids: Vec<Vec<f64>> =
        (0..k).map(|_| (0..spec.dim).map(|_| rng.uniform_range(-spec.spread, spec.spread)).collect()).collect();
    let mut c = build_vt(&vt, spec.units, &centroids, &mut random_leaves(&mut rng, spec.spread))?;
    randomize_logits(&mut c, &mut rng)?;
    Ok(c)
}

/// HFV circuit with `cells[v]` sorted random centroids on variable `v`.
pub fn random_hfv(spec: &RandomSpec, cells: &[usize]) -> Result<Circuit> {
    if cells.len() != spec.dim {
        return arg("one cell count per variable");
    }
    let mut rng = SeededRng::with_stream(spec.seed, stream::RANDOM_CIRCUIT);
    let vt = Vtree::random_binary(spec.dim, &mut rng)?;
    let per_var: Vec<Vec<f64>> = cells
        .iter()
        .map(|&n| {
            let mut c: Vec<f64> = (0..n).map(|_| rng.uniform_range(-spec.spread, spec.spread)).collect();
            c.sort_by(f64::total_cmp);
            c
        })
        .collect();
    let mut c = build(
        &vt,
        spec.units,
        &Gating::Hfv { per_var_centroids: &per_var, joint_cap: usize::MAX },
        &mut random_leaves(&mut rng, spec.spread),
    )?;
    randomize_logits(&mut c, &mut rng)?;
    Ok(c)
}

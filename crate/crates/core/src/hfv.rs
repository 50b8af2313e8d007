//! Hierarchical factorized Voronoi circuits: vtrees, construction and exact
//! inference.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::builder::{build, Gating, LeafInit};
use crate::certified::{Integrator, Region};
use crate::circuit::Circuit;
use crate::error::{arg, Error, Result};
use crate::rng::SeededRng;

/// Binary variable tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Vtree {
    Leaf(usize),
    Node(Box<Vtree>, Box<Vtree>),
}

impl Vtree {
    /// `(((0, 1), 2), ..., d-1)`.
    pub fn left_linear(d: usize) -> Result<Vtree> {
        if d == 0 {
            return arg("vtree needs at least one variable");
        }
        let mut t = Vtree::Leaf(0);
        for v in 1..d {
            t = Vtree::Node(Box::new(t), Box::new(Vtree::Leaf(v)));
        }
        Ok(t)
    }

    /// Random balanced-or-not binary tree: variables are shuffled and every
    /// internal node splits its list at a uniformly chosen point.
    pub fn random_binary(d: usize, rng: &mut SeededRng) -> Result<Vtree> {
        if d == 0 {
            return arg("vtree needs at least one variable");
        }
        let mut vars: Vec<usize> = (0..d).collect();
        rng.shuffle(&mut vars);
        Ok(Self::split(&vars, rng))
    }

    fn split(vars: &[usize], rng: &mut SeededRng) -> Vtree {
        if vars.len() == 1 {
            return Vtree::Leaf(vars[0]);
        }
        let cut = 1 + rng.below(vars.len() - 1);
        Vtree::Node(Box::new(Self::split(&vars[..cut], rng)), Box::new(Self::split(&vars[cut..], rng)))
    }

    /// Variables under this node, sorted.
    pub fn vars(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out.sort_unstable();
        out
    }

    fn collect(&self, out: &mut Vec<usize>) {
        match self {
            Vtree::Leaf(v) => out.push(*v),
            Vtree::Node(l, r) => {
                l.collect(out);
                r.collect(out);
            }
        }
    }

    /// Checks that the leaves are exactly `0..d`, each once.
    pub fn validate(&self, d: usize) -> Result<()> {
        let vars = self.vars();
        if vars.len() != d || vars.iter().enumerate().any(|(i, &v)| i != v) {
            return arg(format!("vtree leaves {vars:?} do not partition 0..{d}"));
        }
        Ok(())
    }

    pub fn internal_count(&self) -> usize {
        match self {
            Vtree::Leaf(_) => 0,
            Vtree::Node(l, r) => 1 + l.internal_count() + r.internal_count(),
        }
    }
}

/// HFV circuit over `vtree`: at every internal vtree node each of `units`
/// outputs is an HFV node with a left and a right block. A block's cells are
/// products of the per-variable intervals from `per_var_centroids`; its
/// factors pair every cell with every unit of the child region. Joint weights
/// start uniform. Fails if a node has more than `joint_cap` joint cells.
pub fn build_hfv(
    vtree: &Vtree,
    units: usize,
    per_var_centroids: &[Vec<f64>],
    joint_cap: usize,
    leaf_init: &mut LeafInit<'_>,
) -> Result<Circuit> {
    build(vtree, units, &Gating::Hfv { per_var_centroids, joint_cap }, leaf_init)
}

/// Exact partition function of a circuit whose gates all factorize.
pub fn hfv_partition_function(circuit: &Circuit) -> Result<f64> {
    Ok(Integrator::exact(circuit).integrate(circuit.root(), &Region::full(circuit.num_vars()))?.lo)
}

/// Exact marginal density of the observed variables.
pub fn hfv_marginal(circuit: &Circuit, evidence: &[(usize, f64)]) -> Result<f64> {
    let region = Region::with_evidence(circuit.num_vars(), evidence)?;
    Ok(Integrator::exact(circuit).integrate(circuit.root(), &region)?.lo)
}

/// `p(target | evidence)` as a ratio of exact marginals.
pub fn hfv_conditional(circuit: &Circuit, target: &[(usize, f64)], evidence: &[(usize, f64)]) -> Result<f64> {
    if target.iter().any(|(v, _)| evidence.iter().any(|(w, _)| v == w)) {
        return arg("target and evidence overlap");
    }
    let denom = hfv_marginal(circuit, evidence)?;
    if !(denom > 0.0) {
        return Err(Error::UndefinedBound("evidence has zero marginal density".into()));
    }
    let joint: Vec<(usize, f64)> = target.iter().chain(evidence).copied().collect();
    Ok(hfv_marginal(circuit, &joint)? / denom)
}

//! Circuit representation, structural checks and log-domain evaluation.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg, Error, Result};
use crate::geometry::{univariate_cells_unsorted, Interval, Tessellation};
use crate::math::{gaussian_log_pdf, gaussian_mass, log_sum_exp, sq_dist};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianLeaf {
    pub var: usize,
    pub mean: f64,
    pub stddev: f64,
}

impl GaussianLeaf {
    pub fn log_density(&self, x: f64) -> f64 {
        gaussian_log_pdf(x, self.mean, self.stddev)
    }

    /// Mass on `[a, b]`; infinite endpoints allowed.
    pub fn interval_mass(&self, a: f64, b: f64) -> Result<f64> {
        if a.is_nan() || b.is_nan() || a > b {
            return arg(format!("invalid interval [{a}, {b}]"));
        }
        Ok(gaussian_mass(self.mean, self.stddev, a, b))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductNode {
    pub children: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SumNode {
    pub children: Vec<NodeId>,
    pub log_weights: Vec<f64>,
}

/// Sum node gated by the Voronoi cell of the input restricted to the node
/// scope. Centroid coordinates follow the sorted scope order.
#[derive(Clone, Debug, PartialEq)]
pub struct VtSumNode {
    pub tessellation: Tessellation,
    pub log_mixture: Vec<f64>,
    pub experts: Vec<NodeId>,
}

/// One block of an HFV node. Cells are products of per-variable 1D Voronoi
/// intervals; cell indices are mixed-radix over `vars` with the first
/// variable most significant. Each factor index pairs a cell with an expert
/// over the block's variables.
#[derive(Clone, Debug, PartialEq)]
pub struct HfvBlock {
    vars: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    intervals: Vec<Vec<Interval>>,
    factor_cells: Vec<usize>,
    factor_experts: Vec<NodeId>,
}

impl HfvBlock {
    pub fn new(
        vars: Vec<usize>,
        centroids: Vec<Vec<f64>>,
        factor_cells: Vec<usize>,
        factor_experts: Vec<NodeId>,
    ) -> Result<Self> {
        if vars.is_empty() || vars.len() != centroids.len() {
            return arg("block needs one centroid list per variable");
        }
        if factor_cells.is_empty() || factor_cells.len() != factor_experts.len() {
            return arg("block needs matching, non-empty factor cell and expert lists");
        }
        let intervals = centroids.iter().map(|c| univariate_cells_unsorted(c)).collect::<Result<Vec<_>>>()?;
        let b = HfvBlock { vars, centroids, intervals, factor_cells, factor_experts };
        if b.factor_cells.iter().any(|&c| c >= b.num_cells()) {
            return arg("factor cell index out of range");
        }
        Ok(b)
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn intervals(&self) -> &[Vec<Interval>] {
        &self.intervals
    }

    pub fn factor_cells(&self) -> &[usize] {
        &self.factor_cells
    }

    pub fn factor_experts(&self) -> &[NodeId] {
        &self.factor_experts
    }

    pub fn num_factors(&self) -> usize {
        self.factor_cells.len()
    }

    pub fn num_cells(&self) -> usize {
        self.centroids.iter().map(|c| c.len()).product()
    }

    /// Per-variable interval indices of a mixed-radix cell index.
    pub fn cell_digits(&self, mut cell: usize) -> Vec<usize> {
        let mut digits = vec![0; self.vars.len()];
        for (i, c) in self.centroids.iter().enumerate().rev() {
            digits[i] = cell % c.len();
            cell /= c.len();
        }
        digits
    }

    /// Index of the interval of variable slot `i` containing `x`.
    pub fn interval_of(&self, i: usize, x: f64) -> usize {
        self.intervals[i].iter().position(|iv| iv.contains(x)).unwrap_or(0)
    }

    /// Hard cell of a full input vector.
    pub fn cell_of(&self, x: &[f64]) -> usize {
        let mut cell = 0;
        for (i, &v) in self.vars.iter().enumerate() {
            cell = cell * self.centroids[i].len() + self.interval_of(i, x[v]);
        }
        cell
    }

    pub(crate) fn set_centroids(&mut self, centroids: Vec<Vec<f64>>) -> Result<()> {
        let intervals = centroids.iter().map(|c| univariate_cells_unsorted(c)).collect::<Result<Vec<_>>>()?;
        if centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("HFV centroid became non-finite".into()));
        }
        self.centroids = centroids;
        self.intervals = intervals;
        Ok(())
    }
}

/// Sum node whose gate is a product of per-block gates over a partition of
/// its scope. `log_joint` is row-major over the blocks' factor indices.
#[derive(Clone, Debug, PartialEq)]
pub struct HfvSumNode {
    pub blocks: Vec<HfvBlock>,
    pub log_joint: Vec<f64>,
}

impl HfvSumNode {
    pub fn joint_len(&self) -> usize {
        self.blocks.iter().map(|b| b.num_factors()).product()
    }

    pub fn joint_cells(&self) -> usize {
        self.blocks.iter().map(|b| b.num_cells()).product()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Leaf(GaussianLeaf),
    Product(ProductNode),
    Sum(SumNode),
    Vt(VtSumNode),
    Hfv(HfvSumNode),
}

impl Node {
    pub fn children(&self) -> Vec<NodeId> {
        match self {
            Node::Leaf(_) => Vec::new(),
            Node::Product(p) => p.children.clone(),
            Node::Sum(s) => s.children.clone(),
            Node::Vt(v) => v.experts.clone(),
            Node::Hfv(h) => h.blocks.iter().flat_map(|b| b.factor_experts.iter().copied()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateMode {
    Hard,
    Soft(f64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructureReport {
    pub smooth: bool,
    pub decomposable: bool,
    pub non_smooth: Vec<NodeId>,
    pub non_decomposable: Vec<NodeId>,
    pub scopes: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Determinism {
    pub deterministic: bool,
    /// Gated nodes whose input sat exactly on a cell boundary.
    pub boundary_hits: Vec<NodeId>,
}

const WEIGHT_TOL: f64 = 1e-9;

/// Immutable circuit: node arena, root, cached scopes and topological order.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    num_vars: usize,
    nodes: Vec<Node>,
    root: NodeId,
    scopes: Vec<Vec<usize>>,
    order: Vec<usize>,
}

fn check_normalized(what: &str, node: usize, logw: &[f64]) -> Result<()> {
    if logw.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::Structure(format!("{what} weights of node {node} are not finite")));
    }
    let s: f64 = logw.iter().map(|w| libm::exp(*w)).sum();
    if (s - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::Structure(format!("{what} weights of node {node} sum to {s}")));
    }
    Ok(())
}

impl Circuit {
    pub fn new(num_vars: usize, nodes: Vec<Node>, root: NodeId) -> Result<Self> {
        let n = nodes.len();
        if root.0 >= n {
            return Err(Error::Structure(format!("root {} out of range", root.0)));
        }
        for (i, node) in nodes.iter().enumerate() {
            for c in node.children() {
                if c.0 >= n {
                    return Err(Error::DanglingChild { node: i, child: c.0 });
                }
            }
        }
        let topo = topological_order(&nodes)?;
        let mut scopes: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &i in &topo {
            let scope: BTreeSet<usize> = match &nodes[i] {
                Node::Leaf(l) => {
                    if l.var >= num_vars {
                        return Err(Error::Structure(format!("leaf {i} uses variable {} of {num_vars}", l.var)));
                    }
                    if !(l.stddev > 0.0) || !l.stddev.is_finite() || !l.mean.is_finite() {
                        return Err(Error::Structure(format!("leaf {i} has invalid parameters")));
                    }
                    [l.var].into_iter().collect()
                }
                Node::Hfv(h) => h.blocks.iter().flat_map(|b| b.vars.iter().copied()).collect(),
                other => other.children().iter().flat_map(|c| scopes[c.0].iter().copied()).collect(),
            };
            scopes[i] = scope.into_iter().collect();
            match &nodes[i] {
                Node::Leaf(_) => {}
                Node::Product(p) => {
                    if p.children.is_empty() {
                        return Err(Error::Structure(format!("product {i} has no children")));
                    }
                }
                Node::Sum(s) => {
                    if s.children.is_empty() || s.children.len() != s.log_weights.len() {
                        return Err(Error::Structure(format!("sum {i} needs one weight per child")));
                    }
                    check_normalized("sum", i, &s.log_weights)?;
                }
                Node::Vt(v) => {
                    let k = v.tessellation.num_cells();
                    if v.experts.len() != k || v.log_mixture.len() != k {
                        return Err(Error::Structure(format!("VT node {i} needs one expert and weight per cell")));
                    }
                    if v.tessellation.dim() != scopes[i].len() {
                        return Err(Error::Structure(format!(
                            "VT node {i} centroid dimension differs from scope size"
                        )));
                    }
                    check_normalized("VT", i, &v.log_mixture)?;
                }
                Node::Hfv(h) => {
                    if h.blocks.is_empty() {
                        return Err(Error::Structure(format!("HFV node {i} has no blocks")));
                    }
                    let declared: usize = h.blocks.iter().map(|b| b.vars.len()).sum();
                    if declared != scopes[i].len() {
                        return Err(Error::Structure(format!("HFV node {i} blocks overlap")));
                    }
                    if h.blocks.iter().flat_map(|b| &b.vars).any(|&v| v >= num_vars) {
                        return Err(Error::Structure(format!("HFV node {i} uses an unknown variable")));
                    }
                    if h.log_joint.len() != h.joint_len() {
                        return Err(Error::Structure(format!("HFV node {i} joint tensor has wrong size")));
                    }
                    check_normalized("HFV", i, &h.log_joint)?;
                }
            }
        }
        if scopes[root.0].len() != num_vars {
            return Err(Error::Structure(format!(
                "root scope covers {} of {num_vars} variables",
                scopes[root.0].len()
            )));
        }
        let mut reachable = vec![false; n];
        reachable[root.0] = true;
        for &i in topo.iter().rev() {
            if reachable[i] {
                for c in nodes[i].children() {
                    reachable[c.0] = true;
                }
            }
        }
        let order = topo.into_iter().filter(|&i| reachable[i]).collect();
        Ok(Circuit { num_vars, nodes, root, scopes, order })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id.0]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn scope(&self, id: NodeId) -> &[usize] {
        &self.scopes[id.0]
    }

    /// Reachable node indices, children before parents.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn has_gates(&self) -> bool {
        self.order.iter().any(|&i| matches!(self.nodes[i], Node::Vt(_) | Node::Hfv(_)))
    }

    pub fn structure_report(&self) -> StructureReport {
        let mut non_smooth = Vec::new();
        let mut non_decomposable = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            let scope = &self.scopes[i];
            match node {
                Node::Leaf(_) => {}
                Node::Product(p) => {
                    let total: usize = p.children.iter().map(|c| self.scopes[c.0].len()).sum();
                    if total != scope.len() {
                        non_decomposable.push(NodeId(i));
                    }
                }
                Node::Sum(s) => {
                    if s.children.iter().any(|c| &self.scopes[c.0] != scope) {
                        non_smooth.push(NodeId(i));
                    }
                }
                Node::Vt(v) => {
                    if v.experts.iter().any(|c| &self.scopes[c.0] != scope) {
                        non_smooth.push(NodeId(i));
                    }
                }
                Node::Hfv(h) => {
                    let bad = h.blocks.iter().any(|b| {
                        let mut vars = b.vars.clone();
                        vars.sort_unstable();
                        b.factor_experts.iter().any(|e| self.scopes[e.0] != vars)
                    });
                    if bad {
                        non_smooth.push(NodeId(i));
                    }
                }
            }
        }
        StructureReport {
            smooth: non_smooth.is_empty(),
            decomposable: non_decomposable.is_empty(),
            non_smooth,
            non_decomposable,
            scopes: self.scopes.clone(),
        }
    }

    pub fn log_density(&self, x: &[f64], mode: GateMode) -> Result<f64> {
        let mut values = vec![0.0; self.nodes.len()];
        self.forward(x, mode, &mut values)?;
        Ok(values[self.root.0])
    }

    /// Fills `values` with the log value of every reachable node.
    pub fn forward(&self, x: &[f64], mode: GateMode, values: &mut [f64]) -> Result<()> {
        if x.len() != self.num_vars {
            return arg(format!("input has {} values, circuit has {} variables", x.len(), self.num_vars));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return arg("input is not finite");
        }
        if let GateMode::Soft(a) = mode {
            if !(a > 0.0) || !a.is_finite() {
                return arg("soft gate temperature must be positive");
            }
        }
        let mut terms = Vec::new();
        let mut u = Vec::new();
        let mut gates = Vec::new();
        for &i in &self.order {
            let v = match &self.nodes[i] {
                Node::Leaf(l) => l.log_density(x[l.var]),
                Node::Product(p) => {
                    let mut acc = values[p.children[0].0];
                    for c in &p.children[1..] {
                        acc += values[c.0];
                    }
                    acc
                }
                Node::Sum(s) => {
                    terms.clear();
                    terms.extend(s.children.iter().zip(&s.log_weights).map(|(c, w)| w + values[c.0]));
                    log_sum_exp(&terms)
                }
                Node::Vt(vt) => {
                    gather(x, &self.scopes[i], &mut u);
                    match mode {
                        GateMode::Hard => {
                            let k = vt.tessellation.nearest(&u).nearest;
                            vt.log_mixture[k] + values[vt.experts[k].0]
                        }
                        GateMode::Soft(alpha) => {
                            log_soft_weights(&vt.tessellation, &u, alpha, &mut gates);
                            terms.clear();
                            for k in 0..vt.experts.len() {
                                terms.push((gates[k] + vt.log_mixture[k]) + values[vt.experts[k].0]);
                            }
                            log_sum_exp(&terms)
                        }
                    }
                }
                Node::Hfv(h) => {
                    let parts: Vec<Vec<f64>> =
                        h.blocks.iter().map(|b| block_factor_values(b, x, mode, values)).collect();
                    hfv_combine(h, &parts, &mut terms)
                }
            };
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::NonFinite { node: i });
            }
            values[i] = v;
        }
        Ok(())
    }

    /// Hard-mode determinism check along the active evaluation path.
    pub fn determinism_at(&self, x: &[f64]) -> Result<Determinism> {
        let mut values = vec![0.0; self.nodes.len()];
        self.forward(x, GateMode::Hard, &mut values)?;
        let mut active = vec![false; self.nodes.len()];
        active[self.root.0] = true;
        let mut deterministic = true;
        let mut hits = Vec::new();
        let mut u = Vec::new();
        for &i in self.order.iter().rev() {
            if !active[i] {
                continue;
            }
            match &self.nodes[i] {
                Node::Leaf(_) => {}
                Node::Product(p) => p.children.iter().for_each(|c| active[c.0] = true),
                Node::Sum(s) => {
                    let positive = s.children.iter().filter(|c| values[c.0] > f64::NEG_INFINITY).count();
                    if positive > 1 {
                        deterministic = false;
                    }
                    s.children.iter().for_each(|c| active[c.0] = true);
                }
                Node::Vt(vt) => {
                    gather(x, &self.scopes[i], &mut u);
                    let m = vt.tessellation.nearest(&u);
                    if m.gamma == 0.0 {
                        hits.push(NodeId(i));
                    }
                    active[vt.experts[m.nearest].0] = true;
                }
                Node::Hfv(h) => {
                    let mut hit = false;
                    for b in &h.blocks {
                        for (s, &v) in b.vars.iter().enumerate() {
                            if b.intervals[s].iter().any(|iv| iv.hi == x[v]) {
                                hit = true;
                            }
                        }
                        let cell = b.cell_of(x);
                        for (f, &e) in b.factor_experts.iter().enumerate() {
                            if b.factor_cells[f] == cell {
                                active[e.0] = true;
                            }
                        }
                    }
                    if hit {
                        hits.push(NodeId(i));
                    }
                }
            }
        }
        Ok(Determinism { deterministic, boundary_hits: hits })
    }

    /// Equivalent circuit without gates, available when every VT node has
    /// one cell and every HFV block has one cell. VT nodes become sums with a
    /// single child; HFV nodes become sums over products of their factors.
    pub fn ungated(&self) -> Result<Circuit> {
        let mut nodes = self.nodes.clone();
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Vt(v) => {
                    if v.experts.len() != 1 {
                        return arg(format!("VT node {i} has more than one cell"));
                    }
                    nodes[i] = Node::Sum(SumNode { children: v.experts.clone(), log_weights: v.log_mixture.clone() });
                }
                Node::Hfv(h) => {
                    if h.blocks.iter().any(|b| b.num_cells() != 1) {
                        return arg(format!("HFV node {i} has more than one cell"));
                    }
                    let mut children = Vec::with_capacity(h.log_joint.len());
                    for j in 0..h.log_joint.len() {
                        let idx = unravel(h, j);
                        let kids = h.blocks.iter().zip(&idx).map(|(b, &f)| b.factor_experts[f]).collect();
                        children.push(NodeId(nodes.len()));
                        nodes.push(Node::Product(ProductNode { children: kids }));
                    }
                    nodes[i] = Node::Sum(SumNode { children, log_weights: h.log_joint.clone() });
                }
                _ => {}
            }
        }
        Circuit::new(self.num_vars, nodes, self.root)
    }
}

/// Splits a row-major joint index into per-block factor indices.
pub fn unravel(h: &HfvSumNode, mut j: usize) -> Vec<usize> {
    let mut idx = vec![0; h.blocks.len()];
    for (i, b) in h.blocks.iter().enumerate().rev() {
        idx[i] = j % b.num_factors();
        j /= b.num_factors();
    }
    idx
}

pub(crate) fn gather(x: &[f64], scope: &[usize], out: &mut Vec<f64>) {
    out.clear();
    out.extend(scope.iter().map(|&v| x[v]));
}

/// Log soft gate weights `log softmax(-alpha * |u - c_k|^2)`.
pub fn log_soft_weights(t: &Tessellation, u: &[f64], alpha: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..t.num_cells()).map(|k| sq_dist(u, t.centroid(k))));
    shifted_log_softmax(out, alpha);
}

/// Turns squared distances into `log softmax(-alpha * d)`, shifting by the
/// smallest distance first.
fn shifted_log_softmax(d: &mut [f64], alpha: f64) {
    let m = d.iter().copied().fold(f64::INFINITY, f64::min);
    for v in d.iter_mut() {
        *v = -alpha * (*v - m);
    }
    let z = log_sum_exp(d);
    for v in d.iter_mut() {
        *v -= z;
    }
}

/// Log soft weights of a 1D centroid list.
pub(crate) fn log_soft_weights_1d(centroids: &[f64], x: f64, alpha: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend(centroids.iter().map(|c| (x - c) * (x - c)));
    shifted_log_softmax(out, alpha);
}

/// Per-block log gate of each cell for the given input.
pub(crate) fn block_log_gates(b: &HfvBlock, x: &[f64], mode: GateMode) -> Vec<f64> {
    match mode {
        GateMode::Hard => {
            let cell = b.cell_of(x);
            let mut g = vec![f64::NEG_INFINITY; b.num_cells()];
            g[cell] = 0.0;
            g
        }
        GateMode::Soft(alpha) => {
            let per_var: Vec<Vec<f64>> = b
                .vars
                .iter()
                .zip(&b.centroids)
                .map(|(&v, c)| {
                    let mut w = Vec::new();
                    log_soft_weights_1d(c, x[v], alpha, &mut w);
                    w
                })
                .collect();
            (0..b.num_cells())
                .map(|cell| {
                    let digits = b.cell_digits(cell);
                    let mut acc = per_var[0][digits[0]];
                    for s in 1..digits.len() {
                        acc += per_var[s][digits[s]];
                    }
                    acc
                })
                .collect()
        }
    }
}

/// `gate(cell(j)) + value(expert(j))` for every factor index of a block.
pub(crate) fn block_factor_values(b: &HfvBlock, x: &[f64], mode: GateMode, values: &[f64]) -> Vec<f64> {
    let gates = block_log_gates(b, x, mode);
    b.factor_cells.iter().zip(&b.factor_experts).map(|(&c, e)| gates[c] + values[e.0]).collect()
}

/// `log sum_j exp(log_joint[j] + sum_i parts[i][j_i])`, blocks summed left to right.
pub(crate) fn hfv_combine(h: &HfvSumNode, parts: &[Vec<f64>], terms: &mut Vec<f64>) -> f64 {
    terms.clear();
    let mut idx = vec![0usize; parts.len()];
    for &w in &h.log_joint {
        let mut acc = parts[0][idx[0]];
        for i in 1..parts.len() {
            acc += parts[i][idx[i]];
        }
        terms.push(w + acc);
        // Row-major odometer, last block fastest.
        for i in (0..idx.len()).rev() {
            idx[i] += 1;
            if idx[i] < parts[i].len() {
                break;
            }
            idx[i] = 0;
        }
    }
    log_sum_exp(terms)
}

fn topological_order(nodes: &[Node]) -> Result<Vec<usize>> {
    // 0 = unvisited, 1 = on stack, 2 = done.
    let n = nodes.len();
    let mut state = vec![0u8; n];
    let mut order = Vec::with_capacity(n);
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        state[start] = 1;
        while let Some(top) = stack.last_mut() {
            let (node, next) = *top;
            let children = nodes[node].children();
            if next < children.len() {
                top.1 += 1;
                let c = children[next].0;
                match state[c] {
                    0 => {
                        state[c] = 1;
                        stack.push((c, 0));
                    }
                    1 => return Err(Error::Cycle(c)),
                    _ => {}
                }
            } else {
                state[node] = 2;
                order.push(node);
                stack.pop();
            }
        }
    }
    Ok(order)
}

/// Structural report for a circuit (scopes plus smoothness and
/// decomposability violators).
pub fn validate_structure(c: &Circuit) -> StructureReport {
    c.structure_report()
}

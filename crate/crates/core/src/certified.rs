//! Certified interval bounds on integrals of gated circuits: box-restricted
//! integration, bottom-up bound propagation with inner/outer cell boxes, and
//! anytime refinement by box bisection.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::circuit::{unravel, Circuit, Node, NodeId, VtSumNode};
use crate::error::{arg, Error, Result};
use crate::geometry::{classify_box, AxisBox, CellLabel, HalfSpace};

/// Certified `[lo, hi]` with `0 <= lo <= hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundInterval {
    pub lo: f64,
    pub hi: f64,
}

impl BoundInterval {
    pub const ZERO: BoundInterval = BoundInterval { lo: 0.0, hi: 0.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0) || !(hi >= lo) || !hi.is_finite() {
            return Err(Error::Numeric(format!("invalid bound interval [{lo}, {hi}]")));
        }
        Ok(BoundInterval { lo, hi })
    }

    pub fn point(v: f64) -> Self {
        BoundInterval { lo: v, hi: v }
    }

    pub fn gap(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    fn check(self, node: usize) -> Result<Self> {
        if self.lo.is_nan() || self.hi.is_nan() || self.hi == f64::INFINITY {
            return Err(Error::NonFinite { node });
        }
        Ok(self)
    }
}

/// Conditional bounds `[joint.lo / evidence.hi, joint.hi / evidence.lo]`.
pub fn conditional_bounds(joint: BoundInterval, evidence: BoundInterval) -> Result<BoundInterval> {
    if !(evidence.lo > 0.0) {
        return Err(Error::UndefinedBound("evidence lower bound is zero; refine further before conditioning".into()));
    }
    Ok(BoundInterval { lo: joint.lo / evidence.hi, hi: joint.hi / evidence.lo })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Provenance {
    Fixed,
    DataDerived { padding: f64 },
}

/// Bounded integration domain over all circuit variables.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub bounds: AxisBox,
    pub provenance: Provenance,
}

impl DomainSpec {
    pub fn fixed(bounds: AxisBox) -> Result<Self> {
        if !bounds.is_bounded() || bounds.lower.iter().zip(&bounds.upper).any(|(l, u)| !(l < u)) {
            return arg("domain must be bounded with lower < upper in every dimension");
        }
        Ok(DomainSpec { bounds, provenance: Provenance::Fixed })
    }

    /// Per-variable min/max of `points`, padded on both sides.
    pub fn from_data(points: &[Vec<f64>], padding: f64) -> Result<Self> {
        let Some(first) = points.first() else {
            return arg("cannot derive a domain from no points");
        };
        let d = first.len();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in points {
            for i in 0..d {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let mut spec = DomainSpec::fixed(AxisBox::new(
            lo.iter().map(|v| v - padding).collect(),
            hi.iter().map(|v| v + padding).collect(),
        )?)?;
        spec.provenance = Provenance::DataDerived { padding };
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// The domain restricted to `vars`.
    pub fn project(&self, vars: &[usize]) -> AxisBox {
        AxisBox {
            lower: vars.iter().map(|&v| self.bounds.lower[v]).collect(),
            upper: vars.iter().map(|&v| self.bounds.upper[v]).collect(),
        }
    }
}

/// Integration region: each variable is either observed at a point or
/// integrated over a (possibly infinite) span.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coord {
    Point(f64),
    Span(f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub coords: Vec<Coord>,
}

impl Region {
    pub fn full(num_vars: usize) -> Self {
        Region { coords: vec![Coord::Span(f64::NEG_INFINITY, f64::INFINITY); num_vars] }
    }

    pub fn with_evidence(num_vars: usize, evidence: &[(usize, f64)]) -> Result<Self> {
        let mut r = Region::full(num_vars);
        for &(v, x) in evidence {
            if v >= num_vars || !x.is_finite() {
                return arg(format!("invalid evidence ({v}, {x})"));
            }
            if matches!(r.coords[v], Coord::Point(_)) {
                return arg(format!("variable {v} observed twice"));
            }
            r.coords[v] = Coord::Point(x);
        }
        Ok(r)
    }

    pub fn from_box(b: &AxisBox) -> Self {
        Region { coords: (0..b.dim()).map(|i| Coord::Span(b.lower[i], b.upper[i])).collect() }
    }

    /// Restricts the variables `vars` to `b` (in `vars` order). `None` when
    /// the result is empty.
    pub fn restrict(&self, vars: &[usize], b: &AxisBox) -> Option<Region> {
        if b.is_empty() {
            return None;
        }
        let mut out = self.clone();
        for (t, &v) in vars.iter().enumerate() {
            let (l, u) = (b.lower[t], b.upper[t]);
            out.coords[v] = match self.coords[v] {
                Coord::Point(x) => {
                    if x < l || x > u {
                        return None;
                    }
                    Coord::Point(x)
                }
                Coord::Span(a, c) => {
                    let (a, c) = (a.max(l), c.min(u));
                    if a > c {
                        return None;
                    }
                    Coord::Span(a, c)
                }
            };
        }
        Some(out)
    }

    fn all_points(&self, vars: &[usize]) -> Option<Vec<f64>> {
        vars.iter()
            .map(|&v| match self.coords[v] {
                Coord::Point(x) => Some(x),
                Coord::Span(..) => None,
            })
            .collect()
    }
}

/// Inner and outer box of one Voronoi cell, in the coordinates of the VT
/// node's scope.
#[derive(Clone, Debug, PartialEq)]
pub struct CellBox {
    pub inner: AxisBox,
    pub outer: AxisBox,
}

/// Cell boxes for every VT node of a circuit.
#[derive(Clone, Debug, PartialEq)]
pub struct CellBoxes {
    per_node: Vec<Option<Vec<CellBox>>>,
}

impl CellBoxes {
    pub fn compute(circuit: &Circuit, domain: &DomainSpec) -> Result<Self> {
        if domain.dim() != circuit.num_vars() {
            return arg("domain dimension differs from circuit");
        }
        let mut per_node = vec![None; circuit.nodes().len()];
        for &i in circuit.order() {
            if let Node::Vt(vt) = &circuit.nodes()[i] {
                let dom = domain.project(circuit.scope(NodeId(i)));
                let boxes = (0..vt.tessellation.num_cells())
                    .map(|k| {
                        Ok(CellBox {
                            inner: vt.tessellation.inner_box(k, &dom),
                            outer: vt.tessellation.outer_box(k, &dom)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                per_node[i] = Some(boxes);
            }
        }
        Ok(CellBoxes { per_node })
    }

    pub fn get(&self, node: NodeId) -> Option<&[CellBox]> {
        self.per_node.get(node.0).and_then(|b| b.as_deref())
    }

    /// Replaces the boxes of one cell (for experiments with other valid boxes).
    pub fn set(&mut self, node: NodeId, k: usize, cell: CellBox) -> Result<()> {
        match self.per_node.get_mut(node.0).and_then(|b| b.as_mut()).and_then(|b| b.get_mut(k)) {
            Some(slot) => {
                *slot = cell;
                Ok(())
            }
            None => arg("no such VT cell"),
        }
    }
}

/// Bottom-up interval integration of a circuit over a region.
///
/// Without cell boxes only exactly integrable gates are accepted: HFV nodes,
/// single-cell VT nodes and VT nodes whose whole scope is observed.
pub struct Integrator<'a> {
    circuit: &'a Circuit,
    boxes: Option<(&'a CellBoxes, &'a DomainSpec)>,
    include_tail: bool,
}

impl<'a> Integrator<'a> {
    pub fn exact(circuit: &'a Circuit) -> Self {
        Integrator { circuit, boxes: None, include_tail: true }
    }

    pub fn bounded(circuit: &'a Circuit, boxes: &'a CellBoxes, domain: &'a DomainSpec) -> Self {
        Integrator { circuit, boxes: Some((boxes, domain)), include_tail: true }
    }

    /// Drops the out-of-domain tail term from VT upper bounds. The result then
    /// bounds the integral restricted to the domain rather than the full space.
    pub fn without_tail(mut self) -> Self {
        self.include_tail = false;
        self
    }

    pub fn integrate(&self, node: NodeId, region: &Region) -> Result<BoundInterval> {
        let mut memo = vec![None; self.circuit.nodes().len()];
        self.visit(node.0, region, &mut memo)
    }

    /// Like [`Integrator::integrate`] but with fixed values for some nodes.
    pub fn integrate_with(
        &self,
        node: NodeId,
        region: &Region,
        fixed: &[(NodeId, BoundInterval)],
    ) -> Result<BoundInterval> {
        let mut memo = vec![None; self.circuit.nodes().len()];
        for &(n, b) in fixed {
            memo[n.0] = Some(b);
        }
        self.visit(node.0, region, &mut memo)
    }

    fn visit(&self, i: usize, region: &Region, memo: &mut Vec<Option<BoundInterval>>) -> Result<BoundInterval> {
        if let Some(b) = memo[i] {
            return Ok(b);
        }
        let nodes = self.circuit.nodes();
        let out = match &nodes[i] {
            Node::Leaf(l) => match region.coords[l.var] {
                Coord::Point(x) => BoundInterval::point(libm::exp(l.log_density(x))),
                Coord::Span(a, b) => {
                    if a > b {
                        BoundInterval::ZERO
                    } else {
                        BoundInterval::point(l.interval_mass(a, b)?)
                    }
                }
            },
            Node::Product(p) => {
                let mut acc = BoundInterval::point(1.0);
                for c in &p.children {
                    let b = self.visit(c.0, region, memo)?;
                    acc = BoundInterval { lo: acc.lo * b.lo, hi: acc.hi * b.hi };
                }
                acc
            }
            Node::Sum(s) => {
                let mut acc = BoundInterval::ZERO;
                for (c, w) in s.children.iter().zip(&s.log_weights) {
                    let b = self.visit(c.0, region, memo)?;
                    let w = libm::exp(*w);
                    acc.lo += w * b.lo;
                    acc.hi += w * b.hi;
                }
                acc
            }
            Node::Vt(vt) => self.visit_vt(i, vt, region, memo)?,
            Node::Hfv(h) => {
                let mut factors: Vec<Vec<BoundInterval>> = Vec::with_capacity(h.blocks.len());
                for b in &h.blocks {
                    let mut vals = vec![BoundInterval::ZERO; b.num_factors()];
                    for cell in 0..b.num_cells() {
                        if !b.factor_cells().contains(&cell) {
                            continue;
                        }
                        let digits = b.cell_digits(cell);
                        let Some(sub) = restrict_to_cell(region, b.vars(), b.intervals(), &digits) else {
                            continue;
                        };
                        let mut sub_memo = vec![None; nodes.len()];
                        for (f, e) in b.factor_experts().iter().enumerate() {
                            if b.factor_cells()[f] == cell {
                                vals[f] = self.visit(e.0, &sub, &mut sub_memo)?;
                            }
                        }
                    }
                    factors.push(vals);
                }
                let mut acc = BoundInterval::ZERO;
                for (j, w) in h.log_joint.iter().enumerate() {
                    let idx = unravel(h, j);
                    let w = libm::exp(*w);
                    let (mut lo, mut hi) = (w, w);
                    for (t, f) in idx.iter().enumerate() {
                        lo *= factors[t][*f].lo;
                        hi *= factors[t][*f].hi;
                    }
                    acc.lo += lo;
                    acc.hi += hi;
                }
                acc
            }
        };
        let out = out.check(i)?;
        memo[i] = Some(out);
        Ok(out)
    }

    fn visit_vt(
        &self,
        i: usize,
        vt: &VtSumNode,
        region: &Region,
        memo: &mut Vec<Option<BoundInterval>>,
    ) -> Result<BoundInterval> {
        let scope = self.circuit.scope(NodeId(i));
        let k_cells = vt.tessellation.num_cells();
        // A single cell is the identity gate; exact unless box bounds were
        // asked for, where it reports the out-of-domain mass as its gap.
        if k_cells == 1 && self.boxes.is_none() {
            let b = self.visit(vt.experts[0].0, region, memo)?;
            let w = libm::exp(vt.log_mixture[0]);
            return Ok(BoundInterval { lo: w * b.lo, hi: w * b.hi });
        }
        if let Some(u) = region.all_points(scope) {
            let k = vt.tessellation.nearest(&u).nearest;
            let b = self.visit(vt.experts[k].0, region, memo)?;
            let w = libm::exp(vt.log_mixture[k]);
            return Ok(BoundInterval { lo: w * b.lo, hi: w * b.hi });
        }
        let Some((boxes, domain)) = self.boxes else {
            return Err(Error::Intractable(i));
        };
        let Some(cells) = boxes.get(NodeId(i)) else {
            return Err(Error::Structure(format!("no cell boxes for VT node {i}")));
        };
        let mut acc = BoundInterval::ZERO;
        for (k, cell) in cells.iter().enumerate().take(k_cells) {
            let (lo, hi) = self.cell_warm_bounds(vt, k, scope, cell, domain, region)?;
            let tail = if self.include_tail { self.cell_tail(vt, k, scope, domain, region)? } else { 0.0 };
            let w = libm::exp(vt.log_mixture[k]);
            acc.lo += w * lo;
            acc.hi += w * (hi + tail);
        }
        Ok(acc)
    }

    /// `(lo ∫_{R ∩ inner} p_k, hi ∫_{R ∩ outer} p_k)`.
    fn cell_warm_bounds(
        &self,
        vt: &VtSumNode,
        k: usize,
        scope: &[usize],
        cell: &CellBox,
        domain: &DomainSpec,
        region: &Region,
    ) -> Result<(f64, f64)> {
        let dom = domain.project(scope);
        let e = vt.experts[k];
        let lo = match region.restrict(scope, &cell.inner.intersect(&dom)) {
            Some(r) => self.integrate(e, &r)?.lo,
            None => 0.0,
        };
        let hi = match region.restrict(scope, &cell.outer.intersect(&dom)) {
            Some(r) => self.integrate(e, &r)?.hi,
            None => 0.0,
        };
        Ok((lo, hi))
    }

    /// Mass of expert `k` over the region that lies outside the domain.
    fn cell_tail(
        &self,
        vt: &VtSumNode,
        k: usize,
        scope: &[usize],
        domain: &DomainSpec,
        region: &Region,
    ) -> Result<f64> {
        let e = vt.experts[k];
        let all = self.integrate(e, region)?.hi;
        let inside = match region.restrict(scope, &domain.project(scope)) {
            Some(r) => self.integrate(e, &r)?.lo,
            None => 0.0,
        };
        Ok((all - inside).max(0.0))
    }
}

fn restrict_to_cell(
    region: &Region,
    vars: &[usize],
    intervals: &[Vec<crate::geometry::Interval>],
    digits: &[usize],
) -> Option<Region> {
    let mut out = region.clone();
    for (s, &v) in vars.iter().enumerate() {
        let iv = intervals[s][digits[s]];
        out.coords[v] = match region.coords[v] {
            Coord::Point(x) => {
                if !iv.contains(x) {
                    return None;
                }
                Coord::Point(x)
            }
            Coord::Span(a, b) => {
                let (a, b) = (a.max(iv.lo), b.min(iv.hi));
                if a > b {
                    return None;
                }
                Coord::Span(a, b)
            }
        };
    }
    Some(out)
}

/// Integral of the subcircuit at `node` over a box in its scope coordinates.
pub fn integrate_box(
    circuit: &Circuit,
    cell_boxes: Option<(&CellBoxes, &DomainSpec)>,
    node: NodeId,
    b: &AxisBox,
) -> Result<BoundInterval> {
    let scope = circuit.scope(node);
    if b.dim() != scope.len() {
        return arg(format!("box has {} dims, node scope has {}", b.dim(), scope.len()));
    }
    let Some(region) = Region::full(circuit.num_vars()).restrict(scope, b) else {
        return Ok(BoundInterval::ZERO);
    };
    match cell_boxes {
        Some((cb, d)) => Integrator::bounded(circuit, cb, d).integrate(node, &region),
        None => Integrator::exact(circuit).integrate(node, &region),
    }
}

/// Bounds on the partition function from inner/outer cell boxes alone.
pub fn certified_partition_bounds(
    circuit: &Circuit,
    cell_boxes: &CellBoxes,
    domain: &DomainSpec,
) -> Result<BoundInterval> {
    Integrator::bounded(circuit, cell_boxes, domain).integrate(circuit.root(), &Region::full(circuit.num_vars()))
}

/// Contribution of a Boundary box of cell `k` at a top-level VT node to the
/// global gap: path weight times `pi_k` times the upper mass of expert `k`
/// over the box (scope coordinates).
pub fn gap_contribution(circuit: &Circuit, domain: &DomainSpec, node: NodeId, k: usize, b: &AxisBox) -> Result<f64> {
    let Node::Vt(vt) = circuit.node(node) else {
        return arg(format!("node {} is not a VT node", node.0));
    };
    if b.is_empty() {
        return Ok(0.0);
    }
    let weights = path_weights(circuit);
    let boxes = CellBoxes::compute(circuit, domain)?;
    let mass = integrate_box(circuit, Some((&boxes, domain)), vt.experts[k], b)?;
    Ok(weights[node.0].unwrap_or(0.0) * libm::exp(vt.log_mixture[k]) * mass.hi)
}

/// Path weights of nodes reachable from the root through sum and product
/// nodes only; `None` for everything below a gate.
fn path_weights(circuit: &Circuit) -> Vec<Option<f64>> {
    let mut w: Vec<Option<f64>> = vec![None; circuit.nodes().len()];
    w[circuit.root().0] = Some(1.0);
    for &i in circuit.order().iter().rev() {
        let Some(wi) = w[i] else { continue };
        let mut push = |c: NodeId, v: f64| {
            w[c.0] = Some(w[c.0].unwrap_or(0.0) + v);
        };
        match &circuit.nodes()[i] {
            Node::Product(p) => p.children.iter().for_each(|&c| push(c, wi)),
            Node::Sum(s) => s.children.iter().zip(&s.log_weights).for_each(|(&c, lw)| push(c, wi * libm::exp(*lw))),
            _ => {}
        }
    }
    w
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub z_lo: f64,
    pub z_hi: f64,
    pub gap: f64,
    pub boxes_total: usize,
    pub boxes_boundary: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineOutcome {
    pub bounds: BoundInterval,
    /// Upper bound without the out-of-domain tail term.
    pub hi_without_tail: f64,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub iters: usize,
}

#[derive(Clone, Debug)]
struct PartBox {
    bounds: AxisBox,
    labels: Vec<CellLabel>,
    mass: Vec<BoundInterval>,
    depth: u32,
    alive: bool,
    splittable: bool,
}

impl PartBox {
    fn is_boundary(&self) -> bool {
        self.splittable && self.labels.contains(&CellLabel::Boundary)
    }
}

/// Partition state of one top-level VT node.
struct Gate {
    node: NodeId,
    /// Scope slots integrated over (the rest are observed).
    span_slots: Vec<usize>,
    span_vars: Vec<usize>,
    halfspaces: Vec<Vec<HalfSpace>>,
    pi: Vec<f64>,
    path_weight: f64,
    boxes: Vec<PartBox>,
    inner_sum: Vec<f64>,
    outer_sum: Vec<f64>,
    warm_lo: Vec<f64>,
    warm_hi: Vec<f64>,
    tail: Vec<f64>,
    cell_lo: Vec<f64>,
    cell_hi: Vec<f64>,
}

impl Gate {
    fn interval(&self, with_tail: bool) -> BoundInterval {
        let mut b = BoundInterval::ZERO;
        for k in 0..self.pi.len() {
            b.lo += self.pi[k] * self.cell_lo[k];
            let t = if with_tail { self.tail[k] } else { 0.0 };
            b.hi += self.pi[k] * (self.cell_hi[k] + t);
        }
        b
    }

    fn update_cells(&mut self) {
        for k in 0..self.pi.len() {
            let lo = self.warm_lo[k].max(self.inner_sum[k]);
            let hi = self.warm_hi[k].min(self.outer_sum[k]).max(lo);
            self.cell_lo[k] = self.cell_lo[k].max(lo);
            self.cell_hi[k] = self.cell_hi[k].min(hi);
        }
    }

    fn priority(&self, b: &PartBox) -> f64 {
        let mut p = 0.0;
        for k in 0..self.pi.len() {
            if b.labels[k] == CellLabel::Boundary {
                p += self.pi[k] * b.mass[k].hi;
            }
        }
        self.path_weight * p
    }
}

#[derive(Clone, Copy, Debug)]
struct QueueEntry {
    priority: f64,
    gate: usize,
    index: usize,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueueEntry {}
impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.gate.cmp(&self.gate))
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Anytime refinement of certified bounds for an integral of the circuit over
/// a region (the partition function, or a marginal when variables are
/// observed). Every top-level VT node (one reachable from the root through
/// sum and product nodes only) gets its own box partition of the domain.
pub struct Refiner<'a> {
    circuit: &'a Circuit,
    domain: &'a DomainSpec,
    cell_boxes: CellBoxes,
    region: Region,
    gates: Vec<Gate>,
    queue: BinaryHeap<QueueEntry>,
    iter: usize,
    trace: Vec<TraceRow>,
    current: BoundInterval,
}

impl<'a> Refiner<'a> {
    pub fn new(circuit: &'a Circuit, domain: &'a DomainSpec) -> Result<Self> {
        Self::for_region(circuit, domain, Region::full(circuit.num_vars()))
    }

    pub fn for_evidence(circuit: &'a Circuit, domain: &'a DomainSpec, evidence: &[(usize, f64)]) -> Result<Self> {
        Self::for_region(circuit, domain, Region::with_evidence(circuit.num_vars(), evidence)?)
    }

    fn for_region(circuit: &'a Circuit, domain: &'a DomainSpec, region: Region) -> Result<Self> {
        if domain.dim() != circuit.num_vars() {
            return arg("domain dimension differs from circuit");
        }
        let cell_boxes = CellBoxes::compute(circuit, domain)?;
        let weights = path_weights(circuit);
        let mut r = Refiner {
            circuit,
            domain,
            cell_boxes,
            region,
            gates: Vec::new(),
            queue: BinaryHeap::new(),
            iter: 0,
            trace: Vec::new(),
            current: BoundInterval::ZERO,
        };
        for &i in circuit.order() {
            if let (Node::Vt(vt), Some(w)) = (&circuit.nodes()[i], weights[i]) {
                if let Some(g) = r.make_gate(NodeId(i), vt, w)? {
                    r.gates.push(g);
                }
            }
        }
        for g in 0..r.gates.len() {
            let b = r.gates[g].boxes[0].clone();
            if b.is_boundary() {
                r.queue.push(QueueEntry { priority: r.gates[g].priority(&b), gate: g, index: 0 });
            }
        }
        r.current = r.compute_bounds(true)?;
        r.push_trace();
        Ok(r)
    }

    fn make_gate(&self, node: NodeId, vt: &VtSumNode, path_weight: f64) -> Result<Option<Gate>> {
        let k_cells = vt.tessellation.num_cells();
        let scope = self.circuit.scope(node);
        if k_cells == 1 || self.region.all_points(scope).is_some() {
            return Ok(None);
        }
        let dom = self.domain.project(scope);
        let mut span_slots = Vec::new();
        let mut fixed = vec![0.0; scope.len()];
        let mut part_lo = Vec::new();
        let mut part_hi = Vec::new();
        for (t, &v) in scope.iter().enumerate() {
            match self.region.coords[v] {
                Coord::Point(x) => {
                    if x < dom.lower[t] || x > dom.upper[t] {
                        // Observed outside the domain: nothing to partition.
                        return Ok(None);
                    }
                    fixed[t] = x;
                }
                Coord::Span(a, b) => {
                    span_slots.push(t);
                    part_lo.push(a.max(dom.lower[t]));
                    part_hi.push(b.min(dom.upper[t]));
                }
            }
        }
        let span_vars: Vec<usize> = span_slots.iter().map(|&t| scope[t]).collect();
        let halfspaces: Vec<Vec<HalfSpace>> = (0..k_cells)
            .map(|k| {
                vt.tessellation
                    .halfspaces(k)
                    .into_iter()
                    .map(|h| {
                        let fixed_part: f64 =
                            (0..scope.len()).filter(|t| !span_slots.contains(t)).map(|t| h.normal[t] * fixed[t]).sum();
                        HalfSpace {
                            normal: span_slots.iter().map(|&t| h.normal[t]).collect(),
                            offset: h.offset - fixed_part,
                        }
                    })
                    .collect()
            })
            .collect();
        let integ = Integrator::bounded(self.circuit, &self.cell_boxes, self.domain);
        let cells = self.cell_boxes.get(node).expect("cell boxes exist for every VT node");
        let mut warm_lo = Vec::with_capacity(k_cells);
        let mut warm_hi = Vec::with_capacity(k_cells);
        let mut tail = Vec::with_capacity(k_cells);
        for (k, cell) in cells.iter().enumerate().take(k_cells) {
            let (lo, hi) = integ.cell_warm_bounds(vt, k, scope, cell, self.domain, &self.region)?;
            warm_lo.push(lo);
            warm_hi.push(hi);
            tail.push(integ.cell_tail(vt, k, scope, self.domain, &self.region)?);
        }
        let mut gate = Gate {
            node,
            span_slots,
            span_vars,
            halfspaces,
            pi: vt.log_mixture.iter().map(|w| libm::exp(*w)).collect(),
            path_weight,
            boxes: Vec::new(),
            inner_sum: vec![0.0; k_cells],
            outer_sum: vec![0.0; k_cells],
            warm_lo,
            warm_hi,
            tail,
            cell_lo: vec![0.0; k_cells],
            cell_hi: vec![f64::INFINITY; k_cells],
        };
        let root_box = AxisBox::new(part_lo, part_hi)?;
        let b = self.make_box(&gate, root_box, None, 0)?;
        add_contribution(&mut gate, &b, 1.0);
        gate.boxes.push(b);
        gate.update_cells();
        Ok(Some(gate))
    }

    fn make_box(&self, gate: &Gate, bounds: AxisBox, parent: Option<&[CellLabel]>, depth: u32) -> Result<PartBox> {
        let Node::Vt(vt) = self.circuit.node(gate.node) else { unreachable!() };
        let k_cells = gate.pi.len();
        let mut labels = Vec::with_capacity(k_cells);
        let mut mass = Vec::with_capacity(k_cells);
        let region = self.region.restrict(&gate.span_vars, &bounds);
        let integ = Integrator::bounded(self.circuit, &self.cell_boxes, self.domain);
        for k in 0..k_cells {
            let label = match parent.map(|p| p[k]) {
                Some(CellLabel::Boundary) | None => classify_box(&bounds, &gate.halfspaces[k]),
                Some(l) => l,
            };
            let m = match (&region, label) {
                (Some(r), CellLabel::Inside | CellLabel::Boundary) => integ.integrate(vt.experts[k], r)?,
                _ => BoundInterval::ZERO,
            };
            labels.push(label);
            mass.push(m);
        }
        let splittable = bounds.lower.iter().zip(&bounds.upper).any(|(l, u)| {
            let mid = 0.5 * (l + u);
            *l < mid && mid < *u
        });
        Ok(PartBox { bounds, labels, mass, depth, alive: true, splittable })
    }

    fn compute_bounds(&self, with_tail: bool) -> Result<BoundInterval> {
        let fixed: Vec<(NodeId, BoundInterval)> = self.gates.iter().map(|g| (g.node, g.interval(with_tail))).collect();
        let mut integ = Integrator::bounded(self.circuit, &self.cell_boxes, self.domain);
        if !with_tail {
            integ = integ.without_tail();
        }
        integ.integrate_with(self.circuit.root(), &self.region, &fixed)
    }

    fn push_trace(&mut self) {
        let mut total = 0;
        let mut boundary = 0;
        for g in &self.gates {
            for b in g.boxes.iter().filter(|b| b.alive) {
                total += 1;
                if b.labels.contains(&CellLabel::Boundary) {
                    boundary += 1;
                }
            }
        }
        self.trace.push(TraceRow {
            iter: self.iter,
            z_lo: self.current.lo,
            z_hi: self.current.hi,
            gap: self.current.gap(),
            boxes_total: total,
            boxes_boundary: boundary,
        });
    }

    pub fn bounds(&self) -> BoundInterval {
        self.current
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn iterations(&self) -> usize {
        self.iter
    }

    fn split(&mut self, g: usize, index: usize) -> Result<()> {
        let parent = self.gates[g].boxes[index].clone();
        let dim = parent.bounds.longest_dim();
        let (left, right) = parent.bounds.bisect(dim)?;
        let lb = self.make_box(&self.gates[g], left, Some(&parent.labels), parent.depth + 1)?;
        let rb = self.make_box(&self.gates[g], right, Some(&parent.labels), parent.depth + 1)?;
        let gate = &mut self.gates[g];
        gate.boxes[index].alive = false;
        add_contribution(gate, &parent, -1.0);
        for b in [lb, rb] {
            add_contribution(gate, &b, 1.0);
            let id = gate.boxes.len();
            if b.is_boundary() {
                self.queue.push(QueueEntry { priority: gate.priority(&b), gate: g, index: id });
            }
            gate.boxes.push(b);
        }
        gate.update_cells();
        Ok(())
    }

    /// One adaptive step: split the Boundary box with the largest gap
    /// contribution. Returns `false` when nothing is left to split.
    pub fn step(&mut self) -> Result<bool> {
        loop {
            let Some(e) = self.queue.pop() else {
                return Ok(false);
            };
            if !self.gates[e.gate].boxes[e.index].alive {
                continue;
            }
            self.split(e.gate, e.index)?;
            self.iter += 1;
            self.current = self.compute_bounds(true)?;
            self.push_trace();
            return Ok(true);
        }
    }

    /// Refines until the gap is at most `epsilon` or `max_iters` splits.
    pub fn run(mut self, epsilon: f64, max_iters: usize) -> Result<RefineOutcome> {
        if !(epsilon > 0.0) {
            return arg("epsilon must be positive");
        }
        while self.current.gap() > epsilon && self.iter < max_iters {
            if !self.step()? {
                break;
            }
        }
        self.finish(epsilon)
    }

    /// Uniform refinement: every Boundary box is bisected once per level.
    /// Appends one trace row per completed level.
    pub fn refine_uniform(&mut self, levels: usize) -> Result<()> {
        for _ in 0..levels {
            let mut work = Vec::new();
            for (g, gate) in self.gates.iter().enumerate() {
                for (i, b) in gate.boxes.iter().enumerate() {
                    if b.alive && b.is_boundary() {
                        work.push((g, i));
                    }
                }
            }
            if work.is_empty() {
                break;
            }
            for (g, i) in work {
                self.split(g, i)?;
            }
            self.queue.clear();
            self.iter += 1;
            self.current = self.compute_bounds(true)?;
            self.push_trace();
        }
        Ok(())
    }

    pub fn finish(self, epsilon: f64) -> Result<RefineOutcome> {
        let no_tail = self.compute_bounds(false)?;
        Ok(RefineOutcome {
            bounds: self.current,
            hi_without_tail: no_tail.hi,
            converged: self.current.gap() <= epsilon,
            iters: self.iter,
            trace: self.trace,
        })
    }

    /// Per-cell `(inner, outer)` partition sums recomputed from scratch, for
    /// checking the incremental bookkeeping.
    pub fn recompute_sums(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.gates
            .iter()
            .map(|g| {
                let k_cells = g.pi.len();
                let mut inner = vec![0.0; k_cells];
                let mut outer = vec![0.0; k_cells];
                for b in g.boxes.iter().filter(|b| b.alive) {
                    for k in 0..k_cells {
                        match b.labels[k] {
                            CellLabel::Inside => {
                                inner[k] += b.mass[k].lo;
                                outer[k] += b.mass[k].hi;
                            }
                            CellLabel::Boundary => outer[k] += b.mass[k].hi,
                            CellLabel::Outside => {}
                        }
                    }
                }
                (inner, outer)
            })
            .collect()
    }

    pub fn incremental_sums(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.gates.iter().map(|g| (g.inner_sum.clone(), g.outer_sum.clone())).collect()
    }

    /// Alive boxes of every gate (partition-integrity checks).
    pub fn partitions(&self) -> Vec<Vec<(AxisBox, Vec<CellLabel>)>> {
        self.gates
            .iter()
            .map(|g| g.boxes.iter().filter(|b| b.alive).map(|b| (b.bounds.clone(), b.labels.clone())).collect())
            .collect()
    }

    /// Domain slice that each gate partitions.
    pub fn partition_domains(&self) -> Vec<AxisBox> {
        self.gates.iter().map(|g| g.boxes[0].bounds.clone()).collect()
    }

    /// Halfspaces (restricted to integrated dims) used by each gate.
    pub fn gate_halfspaces(&self) -> Vec<Vec<Vec<HalfSpace>>> {
        self.gates.iter().map(|g| g.halfspaces.clone()).collect()
    }

    pub fn gate_span_slots(&self) -> Vec<Vec<usize>> {
        self.gates.iter().map(|g| g.span_slots.clone()).collect()
    }
}

fn add_contribution(gate: &mut Gate, b: &PartBox, sign: f64) {
    for k in 0..gate.pi.len() {
        match b.labels[k] {
            CellLabel::Inside => {
                gate.inner_sum[k] += sign * b.mass[k].lo;
                gate.outer_sum[k] += sign * b.mass[k].hi;
            }
            CellLabel::Boundary => gate.outer_sum[k] += sign * b.mass[k].hi,
            CellLabel::Outside => {}
        }
        if gate.inner_sum[k] < 0.0 {
            gate.inner_sum[k] = 0.0;
        }
    }
}

/// Certified bounds on the partition function with adaptive refinement.
pub fn refine(circuit: &Circuit, domain: &DomainSpec, epsilon: f64, max_iters: usize) -> Result<RefineOutcome> {
    Refiner::new(circuit, domain)?.run(epsilon, max_iters)
}

/// Certified bounds on the marginal density of the observed variables.
pub fn marginal_bounds(
    circuit: &Circuit,
    evidence: &[(usize, f64)],
    domain: &DomainSpec,
    max_iters: usize,
) -> Result<BoundInterval> {
    let r = Refiner::for_evidence(circuit, domain, evidence)?;
    Ok(r.run(f64::MIN_POSITIVE, max_iters)?.bounds)
}

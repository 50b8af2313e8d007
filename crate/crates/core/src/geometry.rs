//! Voronoi cells as half-space intersections, axis boxes and their
//! classification, inner/outer boxes, univariate cells and a small LP solver.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg, Error, Result};
use crate::math::{dot, sq_dist};

/// Closed half-space `normal . x <= offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HalfSpace {
    pub fn contains(&self, x: &[f64]) -> bool {
        dot(&self.normal, x) <= self.offset
    }

    /// Max of `normal . x` over the box; `+inf` when unbounded in an active dim.
    pub fn max_over(&self, b: &AxisBox) -> f64 {
        let mut s = 0.0;
        for (i, &a) in self.normal.iter().enumerate() {
            if a > 0.0 {
                s += a * b.upper[i];
            } else if a < 0.0 {
                s += a * b.lower[i];
            }
        }
        s
    }

    pub fn min_over(&self, b: &AxisBox) -> f64 {
        let mut s = 0.0;
        for (i, &a) in self.normal.iter().enumerate() {
            if a > 0.0 {
                s += a * b.lower[i];
            } else if a < 0.0 {
                s += a * b.upper[i];
            }
        }
        s
    }
}

/// Axis-aligned box. Bounds may be infinite. An empty box is stored in the
/// canonical form `lower = +inf`, `upper = -inf` in every dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AxisBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return arg("box bounds have different lengths");
        }
        if lower.iter().chain(&upper).any(|v| v.is_nan()) {
            return arg("box bound is NaN");
        }
        let b = AxisBox { lower, upper };
        Ok(if b.lower.iter().zip(&b.upper).any(|(l, u)| l > u) { AxisBox::empty(b.dim()) } else { b })
    }

    pub fn empty(dim: usize) -> Self {
        AxisBox { lower: vec![f64::INFINITY; dim], upper: vec![f64::NEG_INFINITY; dim] }
    }

    pub fn unbounded(dim: usize) -> Self {
        AxisBox { lower: vec![f64::NEG_INFINITY; dim], upper: vec![f64::INFINITY; dim] }
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        AxisBox { lower: vec![lo; dim], upper: vec![hi; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| l > u)
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(i, &v)| self.lower[i] <= v && v <= self.upper[i])
    }

    pub fn contains_box(&self, other: &AxisBox) -> bool {
        other.is_empty() || (0..self.dim()).all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }

    pub fn intersect(&self, other: &AxisBox) -> AxisBox {
        let lower = self.lower.iter().zip(&other.lower).map(|(a, b)| a.max(*b)).collect();
        let upper = self.upper.iter().zip(&other.upper).map(|(a, b)| a.min(*b)).collect();
        AxisBox::new(lower, upper).unwrap_or_else(|_| AxisBox::empty(self.dim()))
    }

    pub fn volume(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    /// Dimension of largest width, lowest index on ties.
    pub fn longest_dim(&self) -> usize {
        let mut best = 0;
        for i in 1..self.dim() {
            if self.width(i) > self.width(best) {
                best = i;
            }
        }
        best
    }

    /// Splits at the midpoint of `dim`. The halves share the cut plane, which
    /// has zero volume.
    pub fn bisect(&self, dim: usize) -> Result<(AxisBox, AxisBox)> {
        if dim >= self.dim() {
            return arg("bisect dimension out of range");
        }
        let (l, u) = (self.lower[dim], self.upper[dim]);
        if !l.is_finite() || !u.is_finite() {
            return arg("cannot bisect an unbounded dimension");
        }
        if !(u > l) {
            return arg("cannot bisect a zero-width dimension");
        }
        let mid = 0.5 * (l + u);
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[dim] = mid;
        right.lower[dim] = mid;
        Ok((left, right))
    }

    /// Point mapping `t` in the unit cube onto the box.
    pub fn lerp(&self, t: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|i| self.lower[i] + t[i] * (self.upper[i] - self.lower[i])).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellLabel {
    Inside,
    Outside,
    Boundary,
}

/// Labels a box against the half-spaces of one cell.
///
/// A box whose overlap with the cell has zero volume (it only touches the
/// cell along a bounding hyperplane) is labelled `Outside`.
pub fn classify_box(b: &AxisBox, halfspaces: &[HalfSpace]) -> CellLabel {
    if b.is_empty() {
        return CellLabel::Outside;
    }
    let mut inside = true;
    for h in halfspaces {
        let lo = h.min_over(b);
        if lo >= h.offset {
            return CellLabel::Outside;
        }
        let hi = h.max_over(b);
        if !(hi <= h.offset) {
            inside = false;
        }
    }
    if inside {
        CellLabel::Inside
    } else {
        CellLabel::Boundary
    }
}

/// Result of a hard nearest-centroid query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Margin {
    pub nearest: usize,
    /// Squared-distance gap to the runner-up; `+inf` when `K = 1`.
    pub gamma: f64,
}

/// Centroids of a Voronoi tessellation, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tessellation {
    dim: usize,
    centroids: Vec<f64>,
}

pub const MIN_CENTROID_SEPARATION: f64 = 1e-9;

impl Tessellation {
    pub fn new(centroids: &[Vec<f64>]) -> Result<Self> {
        let dim = centroids.first().map(|c| c.len()).unwrap_or(0);
        if centroids.iter().any(|c| c.len() != dim) {
            return arg("centroids have inconsistent dimensions");
        }
        Self::from_flat(dim, centroids.concat())
    }

    pub fn from_flat(dim: usize, centroids: Vec<f64>) -> Result<Self> {
        if dim == 0 || centroids.is_empty() || !centroids.len().is_multiple_of(dim) {
            return arg("tessellation needs at least one centroid of positive dimension");
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return arg("centroid coordinate is not finite");
        }
        let t = Tessellation { dim, centroids };
        t.check_distinct()?;
        Ok(t)
    }

    fn check_distinct(&self) -> Result<()> {
        let k = self.num_cells();
        for i in 0..k {
            for j in i + 1..k {
                if libm::sqrt(sq_dist(self.centroid(i), self.centroid(j))) <= MIN_CENTROID_SEPARATION {
                    return Err(Error::DegenerateTessellation(i, j));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_cells(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, k: usize) -> &[f64] {
        &self.centroids[k * self.dim..(k + 1) * self.dim]
    }

    pub fn flat(&self) -> &[f64] {
        &self.centroids
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_cells()).map(|k| self.centroid(k).to_vec()).collect()
    }

    /// Overwrites centroids in place (training), re-checking distinctness.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.centroids.len() {
            return arg("centroid vector has wrong length");
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("centroid became non-finite".into()));
        }
        let old = core::mem::replace(&mut self.centroids, flat.to_vec());
        if let Err(e) = self.check_distinct() {
            self.centroids = old;
            return Err(e);
        }
        Ok(())
    }

    /// The `K - 1` half-spaces bounding cell `k`, in increasing `j`.
    pub fn halfspaces(&self, k: usize) -> Vec<HalfSpace> {
        let ck = self.centroid(k);
        let nk = dot(ck, ck);
        (0..self.num_cells())
            .filter(|&j| j != k)
            .map(|j| {
                let cj = self.centroid(j);
                HalfSpace { normal: cj.iter().zip(ck).map(|(a, b)| a - b).collect(), offset: 0.5 * (dot(cj, cj) - nk) }
            })
            .collect()
    }

    pub fn nearest(&self, u: &[f64]) -> Margin {
        let mut best = 0;
        let mut d1 = f64::INFINITY;
        let mut d2 = f64::INFINITY;
        for k in 0..self.num_cells() {
            let d = sq_dist(u, self.centroid(k));
            if d < d1 {
                d2 = d1;
                d1 = d;
                best = k;
            } else if d < d2 {
                d2 = d;
            }
        }
        Margin { nearest: best, gamma: d2 - d1 }
    }

    /// Half-width of the inner box of cell `k` before clipping.
    pub fn inner_radius(&self, k: usize) -> f64 {
        let ck = self.centroid(k);
        let delta = (0..self.num_cells())
            .filter(|&j| j != k)
            .map(|j| libm::sqrt(sq_dist(ck, self.centroid(j))))
            .fold(f64::INFINITY, f64::min);
        delta / (2.0 * libm::sqrt(self.dim as f64))
    }

    /// Box around the centroid inscribed in the ball of radius half the
    /// nearest-centroid distance, clipped to `domain`.
    pub fn inner_box(&self, k: usize, domain: &AxisBox) -> AxisBox {
        let r = self.inner_radius(k);
        if r.is_infinite() {
            return domain.clone();
        }
        let c = self.centroid(k);
        let b = AxisBox { lower: c.iter().map(|v| v - r).collect(), upper: c.iter().map(|v| v + r).collect() };
        b.intersect(domain)
    }

    /// Tightest axis box around `V_k ∩ domain`, from `2d` linear programs.
    /// Falls back to the domain if the solver fails.
    pub fn outer_box(&self, k: usize, domain: &AxisBox) -> Result<AxisBox> {
        if !domain.is_bounded() {
            return arg("outer box needs a bounded domain");
        }
        if domain.is_empty() {
            return Ok(AxisBox::empty(self.dim));
        }
        let hs = self.halfspaces(k);
        if hs.is_empty() {
            return Ok(domain.clone());
        }
        let mut lower = vec![0.0; self.dim];
        let mut upper = vec![0.0; self.dim];
        for i in 0..self.dim {
            for (dir, slot) in [(Direction::Min, &mut lower[i]), (Direction::Max, &mut upper[i])] {
                match lp_extremum(&hs, domain, i, dir) {
                    Ok(LpOutcome::Optimal(v)) => {
                        let pad = 1e-9 * (1.0 + v.abs());
                        *slot = match dir {
                            Direction::Min => (v - pad).max(domain.lower[i]),
                            Direction::Max => (v + pad).min(domain.upper[i]),
                        };
                    }
                    Ok(LpOutcome::Infeasible) => return Ok(AxisBox::empty(self.dim)),
                    Err(_) => return Ok(domain.clone()),
                }
            }
        }
        AxisBox::new(lower, upper)
    }
}

/// Interval `(lo, hi]`; the first interval of a partition has `lo = -inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x <= self.hi
    }
}

/// Cells of a 1D Voronoi tessellation over strictly increasing centroids.
pub fn univariate_cells(sorted: &[f64]) -> Result<Vec<Interval>> {
    if sorted.is_empty() {
        return arg("need at least one centroid");
    }
    if sorted.windows(2).any(|w| !(w[0] < w[1])) {
        return arg("centroids must be strictly increasing");
    }
    let mut out = Vec::with_capacity(sorted.len());
    let mut lo = f64::NEG_INFINITY;
    for k in 0..sorted.len() {
        let hi = if k + 1 < sorted.len() { 0.5 * (sorted[k] + sorted[k + 1]) } else { f64::INFINITY };
        out.push(Interval { lo, hi });
        lo = hi;
    }
    Ok(out)
}

/// Cells for a centroid list in arbitrary order: entry `k` is the interval of
/// centroid `k`.
pub fn univariate_cells_unsorted(centroids: &[f64]) -> Result<Vec<Interval>> {
    let mut order: Vec<usize> = (0..centroids.len()).collect();
    order.sort_by(|&a, &b| centroids[a].total_cmp(&centroids[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| centroids[i]).collect();
    let cells = univariate_cells(&sorted)?;
    let mut out = vec![Interval { lo: 0.0, hi: 0.0 }; centroids.len()];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = cells[pos];
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Min,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal(f64),
    Infeasible,
}

/// Optimizes `x_dim` over `{x in bounds : h.normal . x <= h.offset for all h}`.
pub fn lp_extremum(halfspaces: &[HalfSpace], bounds: &AxisBox, dim: usize, dir: Direction) -> Result<LpOutcome> {
    let n = bounds.dim();
    if !bounds.is_bounded() {
        return arg("LP box must be bounded");
    }
    if dim >= n {
        return arg("LP objective dimension out of range");
    }
    if bounds.is_empty() {
        return Ok(LpOutcome::Infeasible);
    }
    // Shift x = lower + y with y >= 0.
    let mut rows = Vec::with_capacity(halfspaces.len() + n);
    for h in halfspaces {
        if h.normal.len() != n {
            return arg("half-space dimension mismatch");
        }
        let rhs = h.offset - dot(&h.normal, &bounds.lower);
        rows.push((h.normal.clone(), rhs));
    }
    for i in 0..n {
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        rows.push((a, bounds.upper[i] - bounds.lower[i]));
    }
    let mut c = vec![0.0; n];
    c[dim] = if dir == Direction::Max { 1.0 } else { -1.0 };
    match simplex_max(&c, &rows)? {
        Some(v) => {
            let v = if dir == Direction::Max { v } else { -v };
            Ok(LpOutcome::Optimal(v + bounds.lower[dim]))
        }
        None => Ok(LpOutcome::Infeasible),
    }
}

const LP_EPS: f64 = 1e-11;
const LP_MAX_ITERS: usize = 10_000;

/// Maximizes `c . y` subject to `a . y <= b` for each row and `y >= 0`.
/// Returns `None` if infeasible. Two-phase dense tableau, Bland's rule.
fn simplex_max(c: &[f64], rows: &[(Vec<f64>, f64)]) -> Result<Option<f64>> {
    let n = c.len();
    let m = rows.len();
    let negative: Vec<usize> = (0..m).filter(|&i| rows[i].1 < 0.0).collect();
    let n_art = negative.len();
    let cols = n + m + n_art;
    let width = cols + 1;
    let mut t = vec![0.0; m * width];
    let mut basis = vec![0usize; m];
    let mut art = 0;
    for (i, (a, b)) in rows.iter().enumerate() {
        let row = &mut t[i * width..(i + 1) * width];
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = sign * a[j];
        }
        row[n + i] = sign;
        row[cols] = sign * b;
        if *b < 0.0 {
            row[n + m + art] = 1.0;
            basis[i] = n + m + art;
            art += 1;
        } else {
            basis[i] = n + i;
        }
    }

    let mut iters = 0;
    if n_art > 0 {
        let mut cost = vec![0.0; cols];
        cost[n + m..].fill(-1.0);
        let obj = run_phase(&mut t, &mut basis, m, width, &cost, cols, &mut iters)?;
        if obj < -1e-9 {
            return Ok(None);
        }
        // Pivot remaining artificial variables out of the basis.
        for i in 0..m {
            if basis[i] >= n + m {
                if let Some(j) = (0..n + m).find(|&j| t[i * width + j].abs() > 1e-9) {
                    pivot(&mut t, &mut basis, m, width, i, j);
                }
            }
        }
    }
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    let obj = run_phase(&mut t, &mut basis, m, width, &cost, n + m, &mut iters)?;
    Ok(Some(obj))
}

/// Runs simplex iterations for `cost`; only columns `< allowed` may enter.
fn run_phase(
    t: &mut [f64],
    basis: &mut [usize],
    m: usize,
    width: usize,
    cost: &[f64],
    allowed: usize,
    iters: &mut usize,
) -> Result<f64> {
    let cols = width - 1;
    loop {
        // Reduced costs d_j = c_j - c_B B^-1 A_j.
        let mut d: Vec<f64> = cost.to_vec();
        let mut z = 0.0;
        for i in 0..m {
            let cb = cost[basis[i]];
            if cb != 0.0 {
                let row = &t[i * width..(i + 1) * width];
                for j in 0..cols {
                    d[j] -= cb * row[j];
                }
                z += cb * row[cols];
            }
        }
        let entering = (0..allowed).find(|&j| d[j] > LP_EPS && !basis.contains(&j));
        let Some(col) = entering else {
            return Ok(z);
        };
        *iters += 1;
        if *iters > LP_MAX_ITERS {
            return Err(Error::SolverFailure("iteration cap reached".into()));
        }
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = t[i * width + col];
            if a > LP_EPS {
                let ratio = t[i * width + cols] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && basis[i] < basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = leave else {
            return Err(Error::SolverFailure("objective unbounded".into()));
        };
        pivot(t, basis, m, width, row, col);
    }
}

fn pivot(t: &mut [f64], basis: &mut [usize], m: usize, width: usize, row: usize, col: usize) {
    let p = t[row * width + col];
    for j in 0..width {
        t[row * width + j] /= p;
    }
    let prow: Vec<f64> = t[row * width..(row + 1) * width].to_vec();
    for i in 0..m {
        if i == row {
            continue;
        }
        let f = t[i * width + col];
        if f != 0.0 {
            for j in 0..width {
                t[i * width + j] -= f * prow[j];
            }
        }
    }
    basis[row] = col;
}

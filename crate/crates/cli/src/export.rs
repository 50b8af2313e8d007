//! 2D exports for plotting: density grids and tessellation overlays with
//! clipped cell polygons and the inner/outer boxes used by the bounds.

use serde::{Deserialize, Serialize};
use vtpc_core::circuit::{Circuit, GateMode, Node};
use vtpc_core::geometry::{AxisBox, HalfSpace, Tessellation};

use crate::error::{CliError, CliResult};
use crate::model_io::BoundsDoc;

fn require_2d(c: &Circuit) -> CliResult<()> {
    if c.num_vars() != 2 {
        return Err(CliError::usage(format!(
            "export supports 2D models only, this one has {} variables",
            c.num_vars()
        )));
    }
    Ok(())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// `(x1, x2, log density)` on a `resolution x resolution` lattice spanning
/// the domain, endpoints included; x1 varies slowest.
pub fn density_grid(c: &Circuit, domain: &AxisBox, resolution: usize, mode: GateMode) -> CliResult<Vec<[f64; 3]>> {
    require_2d(c)?;
    if resolution == 0 {
        return Err(CliError::usage("resolution must be positive"));
    }
    let xs = linspace(domain.lower[0], domain.upper[0], resolution);
    let ys = linspace(domain.lower[1], domain.upper[1], resolution);
    let mut values = vec![0.0; c.nodes().len()];
    let mut out = Vec::with_capacity(resolution * resolution);
    for &x in &xs {
        for &y in &ys {
            c.forward(&[x, y], mode, &mut values)?;
            out.push([x, y, values[c.root().0]]);
        }
    }
    Ok(out)
}

pub fn write_grid(path: &std::path::Path, rows: &[[f64; 3]]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x1", "x2", "log_density"]).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string())).map_err(|e| CliError::io(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(path, e))?;
    crate::write_file(path, &bytes)
}

/// Midpoint rule of the hard-gated density: an `n x n` grid over `domain`
/// plus a shell of the same spacing reaching `margin` beyond it.
pub fn quadrature_2d(c: &Circuit, domain: &AxisBox, n: usize, margin: f64) -> CliResult<f64> {
    require_2d(c)?;
    let h = [(domain.upper[0] - domain.lower[0]) / n as f64, (domain.upper[1] - domain.lower[1]) / n as f64];
    let m = [(margin / h[0]).ceil() as usize, (margin / h[1]).ceil() as usize];
    let mut values = vec![0.0; c.nodes().len()];
    let mut s = 0.0;
    for i in 0..n + 2 * m[0] {
        let x = domain.lower[0] + (i as f64 - m[0] as f64 + 0.5) * h[0];
        for j in 0..n + 2 * m[1] {
            let y = domain.lower[1] + (j as f64 - m[1] as f64 + 0.5) * h[1];
            c.forward(&[x, y], GateMode::Hard, &mut values)?;
            s += values[c.root().0].exp();
        }
    }
    Ok(s * h[0] * h[1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Edge {
    /// Part of the bisector with cell `neighbor`.
    Bisector {
        neighbor: usize,
        from: [f64; 2],
        to: [f64; 2],
    },
    Domain {
        from: [f64; 2],
        to: [f64; 2],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellOverlay {
    pub index: usize,
    pub centroid: [f64; 2],
    /// Cell clipped to the domain, counter-clockwise.
    pub polygon: Vec<[f64; 2]>,
    pub edges: Vec<Edge>,
    pub inner_box: BoundsDoc,
    pub outer_box: BoundsDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateOverlay {
    pub node: usize,
    pub cells: Vec<CellOverlay>,
}

/// HFV cell boundaries: interval breakpoints of one variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisLines {
    pub node: usize,
    pub var: usize,
    pub breaks: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TessellationOverlay {
    pub domain: BoundsDoc,
    pub gates: Vec<GateOverlay>,
    pub axis_lines: Vec<AxisLines>,
}

fn clip(poly: &[[f64; 2]], h: &HalfSpace) -> Vec<[f64; 2]> {
    let f = |p: &[f64; 2]| h.normal[0] * p[0] + h.normal[1] * p[1] - h.offset;
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (fa, fb) = (f(&a), f(&b));
        if fa <= 0.0 {
            out.push(a);
        }
        if (fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0) {
            let t = fa / (fa - fb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out.dedup();
    if out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}

fn on_line(h: &HalfSpace, p: &[f64; 2], scale: f64) -> bool {
    (h.normal[0] * p[0] + h.normal[1] * p[1] - h.offset).abs() <= 1e-9 * scale
}

/// Cell `k` of `t` clipped to the 2D domain, with each edge tagged by the
/// bisector (or domain side) it lies on.
pub fn cell_polygon(t: &Tessellation, k: usize, domain: &AxisBox) -> (Vec<[f64; 2]>, Vec<Edge>) {
    let (l, u) = (&domain.lower, &domain.upper);
    let mut poly = vec![[l[0], l[1]], [u[0], l[1]], [u[0], u[1]], [l[0], u[1]]];
    // `halfspaces(k)` skips k itself, so entry j belongs to cell j or j + 1.
    let hs = t.halfspaces(k);
    let cell_of = |j: usize| if j < k { j } else { j + 1 };
    for h in &hs {
        if !poly.is_empty() {
            poly = clip(&poly, h);
        }
    }
    let mut edges = Vec::with_capacity(poly.len());
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let neighbor = (0..hs.len())
            .find(|&j| {
                let h = &hs[j];
                let scale = 1.0 + h.offset.abs() + h.normal[0].abs() + h.normal[1].abs();
                on_line(h, &a, scale) && on_line(h, &b, scale)
            })
            .map(cell_of);
        edges.push(match neighbor {
            Some(neighbor) => Edge::Bisector { neighbor, from: a, to: b },
            None => Edge::Domain { from: a, to: b },
        });
    }
    (poly, edges)
}

fn bounds(b: &AxisBox) -> BoundsDoc {
    BoundsDoc { lower: b.lower.clone(), upper: b.upper.clone() }
}

pub fn tessellation_overlay(c: &Circuit, domain: &AxisBox) -> CliResult<TessellationOverlay> {
    require_2d(c)?;
    let mut gates = Vec::new();
    let mut axis_lines = Vec::new();
    for &i in c.order() {
        match &c.nodes()[i] {
            Node::Vt(vt) => {
                let scope = c.scope(vtpc_core::circuit::NodeId(i));
                if scope != [0, 1] {
                    continue;
                }
                let t = &vt.tessellation;
                let mut cells = Vec::new();
                for k in 0..t.num_cells() {
                    let (polygon, edges) = cell_polygon(t, k, domain);
                    let cen = t.centroid(k);
                    cells.push(CellOverlay {
                        index: k,
                        centroid: [cen[0], cen[1]],
                        polygon,
                        edges,
                        inner_box: bounds(&t.inner_box(k, domain)),
                        outer_box: bounds(&t.outer_box(k, domain)?),
                    });
                }
                gates.push(GateOverlay { node: i, cells });
            }
            Node::Hfv(h) => {
                for b in &h.blocks {
                    for (s, &var) in b.vars().iter().enumerate() {
                        let breaks: Vec<f64> =
                            b.intervals()[s].iter().map(|iv| iv.hi).filter(|v| v.is_finite()).collect();
                        let line = AxisLines { node: i, var, breaks };
                        if !line.breaks.is_empty() && !axis_lines.contains(&line) {
                            axis_lines.push(line);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(TessellationOverlay { domain: bounds(domain), gates, axis_lines })
}

/// Re-checks an overlay against its own centroids: inner boxes lie inside
/// their cell and the domain, outer boxes contain the clipped polygon.
/// Returns the number of checked boxes.
pub fn verify_overlay(o: &TessellationOverlay) -> Result<usize, String> {
    let dom = o.domain.to_box();
    let mut checked = 0;
    for g in &o.gates {
        let cs: Vec<Vec<f64>> = g.cells.iter().map(|c| c.centroid.to_vec()).collect();
        let t = Tessellation::new(&cs).map_err(|e| e.to_string())?;
        for cell in &g.cells {
            let hs = t.halfspaces(cell.index);
            let inner = cell.inner_box.to_box();
            if !dom.contains_box(&inner) {
                return Err(format!("gate {} cell {}: inner box leaves the domain", g.node, cell.index));
            }
            for corner in corners(&inner) {
                for h in &hs {
                    let v = h.normal[0] * corner[0] + h.normal[1] * corner[1] - h.offset;
                    if v > 1e-9 * (1.0 + h.offset.abs()) {
                        return Err(format!(
                            "gate {} cell {}: inner box corner {corner:?} outside the cell",
                            g.node, cell.index
                        ));
                    }
                }
            }
            let outer = cell.outer_box.to_box();
            for p in &cell.polygon {
                let inside = (0..2).all(|d| p[d] >= outer.lower[d] - 1e-9 && p[d] <= outer.upper[d] + 1e-9);
                if !inside {
                    return Err(format!("gate {} cell {}: outer box misses vertex {p:?}", g.node, cell.index));
                }
            }
            checked += 2;
        }
    }
    Ok(checked)
}

fn corners(b: &AxisBox) -> [[f64; 2]; 4] {
    let (l, u) = (&b.lower, &b.upper);
    [[l[0], l[1]], [u[0], l[1]], [u[0], u[1]], [l[0], u[1]]]
}

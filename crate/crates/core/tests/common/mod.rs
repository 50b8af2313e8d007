#![allow(dead_code)]

use vtpc_core::circuit::{Circuit, GateMode, Node};

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on P_n).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

/// 1D rule over `[lo, hi]`: every segment between consecutive breakpoints is
/// cut into pieces no wider than `max_width`, each with an `order`-point rule.
pub fn composite_rule(lo: f64, hi: f64, breaks: &[f64], max_width: f64, order: usize) -> Vec<(f64, f64)> {
    let (gx, gw) = gauss_legendre(order);
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let pieces = ((w[1] - w[0]) / max_width).ceil().max(1.0) as usize;
        let step = (w[1] - w[0]) / pieces as f64;
        for p in 0..pieces {
            let a = w[0] + p as f64 * step;
            let half = 0.5 * step;
            for (x, wt) in gx.iter().zip(&gw) {
                out.push((a + half * (1.0 + x), half * wt));
            }
        }
    }
    out
}

/// Tensor-product quadrature of the hard-gated density.
pub fn tensor_quadrature(c: &Circuit, rules: &[Vec<(f64, f64)>]) -> f64 {
    let d = rules.len();
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut total = 0.0;
    let mut values = vec![0.0; c.nodes().len()];
    loop {
        let mut w = 1.0;
        for t in 0..d {
            x[t] = rules[t][idx[t]].0;
            w *= rules[t][idx[t]].1;
        }
        c.forward(&x, GateMode::Hard, &mut values).unwrap();
        total += w * values[c.root().0].exp();
        let mut t = d;
        loop {
            if t == 0 {
                return total;
            }
            t -= 1;
            idx[t] += 1;
            if idx[t] < rules[t].len() {
                break;
            }
            idx[t] = 0;
        }
    }
}

/// Breakpoints of every HFV interval on variable `v`.
pub fn hfv_breaks(c: &Circuit, v: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for n in c.nodes() {
        if let Node::Hfv(h) = n {
            for b in &h.blocks {
                for (t, &var) in b.vars().iter().enumerate() {
                    if var == v {
                        for iv in &b.intervals()[t] {
                            out.extend([iv.lo, iv.hi].into_iter().filter(|e| e.is_finite()));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Midpoint rule of the hard-gated density over `[lo, hi]^2` with `n` cells
/// per axis.
pub fn midpoint_2d(c: &Circuit, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
            s += c.log_density(&x, GateMode::Hard).unwrap().exp();
        }
    }
    s * h * h
}

/// Midpoint rule over the shell `[-outer, outer]^2 \ [-inner, inner]^2` at
/// the same spacing as an `n`-cell grid on the inner square.
pub fn midpoint_shell_2d(c: &Circuit, inner: f64, outer: f64, n: usize) -> f64 {
    let h = 2.0 * inner / n as f64;
    let m = ((outer - inner) / h).ceil() as usize;
    let lo = -inner - m as f64 * h;
    let total = n + 2 * m;
    let mut s = 0.0;
    for i in 0..total {
        for j in 0..total {
            if (m..m + n).contains(&i) && (m..m + n).contains(&j) {
                continue;
            }
            let x = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
            s += c.log_density(&x, GateMode::Hard).unwrap().exp();
        }
    }
    s * h * h
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

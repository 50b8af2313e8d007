//! Soft-gate maximum likelihood training: flat parameter vectors, analytic
//! reverse-mode gradients, Adam, temperature annealing and k-means seeding.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::certified::{DomainSpec, Refiner};
use crate::circuit::{
    block_log_gates, log_soft_weights, log_soft_weights_1d, unravel, Circuit, GateMode, Node, NodeId,
};
use crate::error::{arg, Error, Result};
use crate::geometry::Tessellation;
use crate::hfv::hfv_partition_function;
use crate::math::{log_sum_exp, sq_dist};
use crate::rng::{stream, SeededRng};

/// Soft gate weights `softmax(-alpha * |u - c_k|^2)`.
pub fn soft_weights(u: &[f64], t: &Tessellation, alpha: f64) -> Vec<f64> {
    let mut w = Vec::new();
    log_soft_weights(t, u, alpha, &mut w);
    w.iter().map(|v| libm::exp(*v)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftGateConfig {
    pub alpha_start: f64,
    pub alpha_end: f64,
}

impl Default for SoftGateConfig {
    fn default() -> Self {
        SoftGateConfig { alpha_start: 1.0, alpha_end: 50.0 }
    }
}

/// Linear schedule from `alpha_start` at epoch 0 to `alpha_end` at the last epoch.
pub fn anneal_alpha(epoch: usize, total_epochs: usize, cfg: &SoftGateConfig) -> f64 {
    if total_epochs <= 1 {
        return cfg.alpha_start;
    }
    cfg.alpha_start + (cfg.alpha_end - cfg.alpha_start) * epoch as f64 / (total_epochs - 1) as f64
}

/// Which kind of parameter a flat index refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParamClass {
    Centroid,
    MixtureLogit,
    LeafMean,
    LeafLogStddev,
}

pub const STDDEV_FLOOR: f64 = 1e-3;

/// All learnable parameters of a circuit as one flat vector. Mixture weights
/// are unconstrained logits, stddevs are logs.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub values: Vec<f64>,
    pub classes: Vec<ParamClass>,
    offsets: Vec<usize>,
}

impl Params {
    pub fn extract(c: &Circuit) -> Params {
        let mut values = Vec::new();
        let mut classes = Vec::new();
        let mut offsets = vec![usize::MAX; c.nodes().len()];
        let mut push = |values: &mut Vec<f64>, v: f64, cl: ParamClass| {
            values.push(v);
            classes.push(cl);
        };
        for &i in c.order() {
            offsets[i] = values.len();
            match &c.nodes()[i] {
                Node::Leaf(l) => {
                    push(&mut values, l.mean, ParamClass::LeafMean);
                    push(&mut values, libm::log(l.stddev), ParamClass::LeafLogStddev);
                }
                Node::Product(_) => {}
                Node::Sum(s) => s.log_weights.iter().for_each(|w| push(&mut values, *w, ParamClass::MixtureLogit)),
                Node::Vt(v) => {
                    v.tessellation.flat().iter().for_each(|x| push(&mut values, *x, ParamClass::Centroid));
                    v.log_mixture.iter().for_each(|w| push(&mut values, *w, ParamClass::MixtureLogit));
                }
                Node::Hfv(h) => {
                    for b in &h.blocks {
                        b.centroids().iter().flatten().for_each(|x| push(&mut values, *x, ParamClass::Centroid));
                    }
                    h.log_joint.iter().for_each(|w| push(&mut values, *w, ParamClass::MixtureLogit));
                }
            }
        }
        Params { values, classes, offsets }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes the parameters into `c` (same structure as at extraction).
    /// Logits are normalized and stddevs floored; the floor is also applied
    /// to `self`.
    pub fn apply(&mut self, c: &mut Circuit) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("parameter became non-finite".into()));
        }
        let order: Vec<usize> = c.order().to_vec();
        for i in order {
            let o = self.offsets[i];
            match c.node_mut(NodeId(i)) {
                Node::Leaf(l) => {
                    let floor = libm::log(STDDEV_FLOOR);
                    if self.values[o + 1] < floor {
                        self.values[o + 1] = floor;
                    }
                    l.mean = self.values[o];
                    l.stddev = libm::exp(self.values[o + 1]).max(STDDEV_FLOOR);
                }
                Node::Product(_) => {}
                Node::Sum(s) => {
                    let n = s.log_weights.len();
                    s.log_weights.copy_from_slice(&self.values[o..o + n]);
                    normalize_logits(&mut s.log_weights);
                }
                Node::Vt(v) => {
                    let n = v.tessellation.flat().len();
                    v.tessellation.set_flat(&self.values[o..o + n])?;
                    let k = v.log_mixture.len();
                    v.log_mixture.copy_from_slice(&self.values[o + n..o + n + k]);
                    normalize_logits(&mut v.log_mixture);
                }
                Node::Hfv(h) => {
                    let mut p = o;
                    for b in h.blocks.iter_mut() {
                        let lists: Vec<Vec<f64>> = b
                            .centroids()
                            .iter()
                            .map(|c| {
                                let s = self.values[p..p + c.len()].to_vec();
                                p += c.len();
                                s
                            })
                            .collect();
                        b.set_centroids(lists)?;
                    }
                    let n = h.log_joint.len();
                    h.log_joint.copy_from_slice(&self.values[p..p + n]);
                    normalize_logits(&mut h.log_joint);
                }
            }
        }
        Ok(())
    }
}

fn normalize_logits(v: &mut [f64]) {
    let z = log_sum_exp(v);
    for x in v.iter_mut() {
        *x -= z;
    }
}

/// Gradient of the batch mean negative log-likelihood, aligned with
/// [`Params::values`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub grads: Vec<f64>,
    pub mean_nll: f64,
}

/// Reverse-mode gradient of the mean NLL of `batch` under soft gating.
pub fn backward(c: &Circuit, params: &Params, batch: &[Vec<f64>], alpha: f64) -> Result<GradientBundle> {
    backward_mode(c, params, batch, GateMode::Soft(alpha))
}

pub fn backward_mode(c: &Circuit, params: &Params, batch: &[Vec<f64>], mode: GateMode) -> Result<GradientBundle> {
    if batch.is_empty() {
        return arg("empty batch");
    }
    let n = c.nodes().len();
    let mut grads = vec![0.0; params.len()];
    let mut values = vec![0.0; n];
    let mut adj = vec![0.0; n];
    let mut nll = 0.0;
    let scale = -1.0 / batch.len() as f64;
    let mut u = Vec::new();
    let mut w = Vec::new();
    for x in batch {
        c.forward(x, mode, &mut values)?;
        let root = values[c.root().0];
        if !root.is_finite() {
            return Err(Error::Numeric(format!("log-likelihood is {root}")));
        }
        nll -= root;
        adj.iter_mut().for_each(|a| *a = 0.0);
        adj[c.root().0] = 1.0;
        for &i in c.order().iter().rev() {
            let a = adj[i];
            let vi = values[i];
            if a == 0.0 || vi == f64::NEG_INFINITY {
                continue;
            }
            let o = params.offsets[i];
            match &c.nodes()[i] {
                Node::Leaf(l) => {
                    let z = (x[l.var] - l.mean) / l.stddev;
                    grads[o] += scale * a * z / l.stddev;
                    grads[o + 1] += scale * a * (z * z - 1.0);
                }
                Node::Product(p) => p.children.iter().for_each(|ch| adj[ch.0] += a),
                Node::Sum(s) => {
                    let mut r = vec![0.0; s.children.len()];
                    for (k, (ch, lw)) in s.children.iter().zip(&s.log_weights).enumerate() {
                        r[k] = libm::exp(lw + values[ch.0] - vi);
                        adj[ch.0] += a * r[k];
                    }
                    logit_grad(&mut grads[o..o + r.len()], &s.log_weights, &r, scale * a);
                }
                Node::Vt(vt) => {
                    let k_cells = vt.experts.len();
                    let dim = vt.tessellation.dim();
                    let mut r = vec![0.0; k_cells];
                    match mode {
                        GateMode::Hard => {
                            crate::circuit::gather(x, c.scope(NodeId(i)), &mut u);
                            r[vt.tessellation.nearest(&u).nearest] = 1.0;
                        }
                        GateMode::Soft(alpha) => {
                            crate::circuit::gather(x, c.scope(NodeId(i)), &mut u);
                            log_soft_weights(&vt.tessellation, &u, alpha, &mut w);
                            for k in 0..k_cells {
                                r[k] = libm::exp((w[k] + vt.log_mixture[k]) + values[vt.experts[k].0] - vi);
                            }
                            for m in 0..k_cells {
                                let cm = vt.tessellation.centroid(m);
                                let f = 2.0 * alpha * (r[m] - libm::exp(w[m]));
                                for t in 0..dim {
                                    grads[o + m * dim + t] += scale * a * f * (u[t] - cm[t]);
                                }
                            }
                        }
                    }
                    for k in 0..k_cells {
                        adj[vt.experts[k].0] += a * r[k];
                    }
                    let lo = o + k_cells * dim;
                    logit_grad(&mut grads[lo..lo + k_cells], &vt.log_mixture, &r, scale * a);
                }
                Node::Hfv(h) => {
                    let gates: Vec<Vec<f64>> = h.blocks.iter().map(|b| block_log_gates(b, x, mode)).collect();
                    let parts: Vec<Vec<f64>> = h
                        .blocks
                        .iter()
                        .zip(&gates)
                        .map(|(b, g)| {
                            b.factor_cells()
                                .iter()
                                .zip(b.factor_experts())
                                .map(|(&cl, e)| g[cl] + values[e.0])
                                .collect()
                        })
                        .collect();
                    let mut r = vec![0.0; h.log_joint.len()];
                    let mut resp: Vec<Vec<f64>> = h.blocks.iter().map(|b| vec![0.0; b.num_factors()]).collect();
                    for (j, lw) in h.log_joint.iter().enumerate() {
                        let idx = unravel(h, j);
                        let mut acc = parts[0][idx[0]];
                        for t in 1..parts.len() {
                            acc += parts[t][idx[t]];
                        }
                        r[j] = libm::exp(lw + acc - vi);
                        for (t, &f) in idx.iter().enumerate() {
                            resp[t][f] += r[j];
                        }
                    }
                    let mut p = o;
                    for (t, b) in h.blocks.iter().enumerate() {
                        for (f, e) in b.factor_experts().iter().enumerate() {
                            adj[e.0] += a * resp[t][f];
                        }
                        let mut cell_resp = vec![0.0; b.num_cells()];
                        for (f, &cl) in b.factor_cells().iter().enumerate() {
                            cell_resp[cl] += resp[t][f];
                        }
                        for (s, (&var, cs)) in b.vars().iter().zip(b.centroids()).enumerate() {
                            if let GateMode::Soft(alpha) = mode {
                                let mut marg = vec![0.0; cs.len()];
                                for (cell, cr) in cell_resp.iter().enumerate() {
                                    marg[b.cell_digits(cell)[s]] += cr;
                                }
                                log_soft_weights_1d(cs, x[var], alpha, &mut w);
                                for m in 0..cs.len() {
                                    let f = 2.0 * alpha * (marg[m] - libm::exp(w[m]));
                                    grads[p + m] += scale * a * f * (x[var] - cs[m]);
                                }
                            }
                            p += cs.len();
                        }
                    }
                    logit_grad(&mut grads[p..p + r.len()], &h.log_joint, &r, scale * a);
                }
            }
        }
    }
    if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("gradient of parameter {bad} ({:?}) is not finite", params.classes[bad])));
    }
    Ok(GradientBundle { grads, mean_nll: nll / batch.len() as f64 })
}

/// `d/d theta_c` of `sum_k r_k * log softmax(theta)_k` scaled by `s`, given
/// responsibilities `r` (which sum to one over the children).
fn logit_grad(out: &mut [f64], log_weights: &[f64], r: &[f64], s: f64) {
    let total: f64 = r.iter().sum();
    for c in 0..out.len() {
        out[c] += s * (r[c] - libm::exp(log_weights[c]) * total);
    }
}

/// Mean log-likelihood of `data` under `mode`.
pub fn mean_log_likelihood(c: &Circuit, data: &[Vec<f64>], mode: GateMode) -> Result<f64> {
    let mut values = vec![0.0; c.nodes().len()];
    let mut s = 0.0;
    for x in data {
        c.forward(x, mode, &mut values)?;
        s += values[c.root().0];
    }
    Ok(s / data.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let b1t = 1.0 - libm::pow(self.beta1, self.t as f64);
        let b2t = 1.0 - libm::pow(self.beta2, self.t as f64);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= lr * mh / (libm::sqrt(vh) + self.eps);
        }
    }
}

/// k-means++ seeding followed by Lloyd iterations. Empty clusters are
/// re-seeded at the point farthest from its centroid.
pub fn kmeans_init(data: &[Vec<f64>], k: usize, iters: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k == 0 || data.len() < k {
        return arg(format!("k-means needs at least {k} points, got {}", data.len()));
    }
    let mut rng = SeededRng::with_stream(seed, stream::KMEANS);
    let mut centers: Vec<Vec<f64>> = vec![data[rng.below(data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let next = data[rng.categorical(&d2)].clone();
        for (p, d) in data.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(p, &next));
        }
        centers.push(next);
    }
    let dim = data[0].len();
    let mut assign = vec![0usize; data.len()];
    for _ in 0..iters {
        let mut changed = false;
        for (i, p) in data.iter().enumerate() {
            let best = nearest_center(&centers, p);
            if best != assign[i] {
                changed = true;
                assign[i] = best;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in data.iter().zip(&assign) {
            counts[a] += 1;
            for t in 0..dim {
                sums[a][t] += p[t];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..data.len())
                    .max_by(|&a, &b| {
                        let da = sq_dist(&data[a], &centers[assign[a]]);
                        let db = sq_dist(&data[b], &centers[assign[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .unwrap_or(0);
                centers[c] = data[far].clone();
                assign[far] = c;
                changed = true;
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    Tessellation::new(&centers)?;
    Ok(centers)
}

fn nearest_center(centers: &[Vec<f64>], p: &[f64]) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (c, x) in centers.iter().enumerate() {
        let d = sq_dist(p, x);
        if d < bd {
            bd = d;
            best = c;
        }
    }
    best
}

/// Sorted 1D k-means centroids of column `var`. Uses fewer centroids when the
/// column has fewer distinct values than `k`.
pub fn kmeans_1d_sorted(data: &[Vec<f64>], var: usize, k: usize, iters: usize, seed: u64) -> Result<Vec<f64>> {
    let col: Vec<Vec<f64>> = data.iter().map(|p| vec![p[var]]).collect();
    let mut c: Vec<f64> =
        kmeans_init(&col, k, iters, seed ^ ((var as u64 + 1) << 32))?.into_iter().map(|v| v[0]).collect();
    c.sort_by(f64::total_cmp);
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifyConfig {
    pub padding: f64,
    pub max_iters: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub gate: SoftGateConfig,
    pub snapshot_stride: usize,
    pub certify: Option<CertifyConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 500,
            epochs: 100,
            seed: 0,
            gate: SoftGateConfig::default(),
            snapshot_stride: 10,
            certify: Some(CertifyConfig { padding: 0.5, max_iters: 500 }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainRecord {
    pub epoch: usize,
    pub alpha: f64,
    pub train_nll: f64,
    pub val_ll_soft: f64,
    /// Certified interval on the hard-gated validation log-likelihood.
    pub val_ll_hard: Option<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Circuit,
    pub trace: Vec<TrainRecord>,
    pub best_epoch: Option<usize>,
    /// Set when training stopped on a numeric failure.
    pub aborted: Option<Error>,
}

/// Certified bounds on the mean hard-gated log-likelihood of `data`:
/// `mean log f_hard - log Z` with `Z` bracketed by refinement (exact when the
/// circuit has no multi-cell VT node).
pub fn hard_ll_bounds(c: &Circuit, data: &[Vec<f64>], domain: &DomainSpec, max_iters: usize) -> Result<(f64, f64)> {
    let mean = mean_log_likelihood(c, data, GateMode::Hard)?;
    let multi_vt = c.order().iter().any(|&i| matches!(&c.nodes()[i], Node::Vt(v) if v.experts.len() > 1));
    if !multi_vt {
        let z = libm::log(hfv_partition_function(c)?);
        return Ok((mean - z, mean - z));
    }
    let out = Refiner::new(c, domain)?.run(f64::MIN_POSITIVE, max_iters)?;
    Ok((mean - libm::log(out.bounds.hi), mean - libm::log(out.bounds.lo)))
}

/// Minibatch Adam on the soft-gated NLL with linear temperature annealing.
/// Keeps the parameters of the epoch with the best soft validation LL.
pub fn train(
    initial: &Circuit,
    train_data: &[Vec<f64>],
    val_data: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if !(cfg.learning_rate >= 0.0) || cfg.batch_size == 0 || cfg.epochs == 0 {
        return arg("invalid training configuration");
    }
    if cfg.gate.alpha_start <= 0.0 || cfg.gate.alpha_end < cfg.gate.alpha_start {
        return arg("invalid temperature schedule");
    }
    if train_data.is_empty() || val_data.is_empty() {
        return arg("training and validation data must be non-empty");
    }
    if train_data.iter().chain(val_data).any(|p| p.len() != initial.num_vars()) {
        return arg("data dimension differs from circuit");
    }
    let domain = match cfg.certify {
        Some(cc) => Some(DomainSpec::from_data(train_data, cc.padding)?),
        None => None,
    };
    let mut model = initial.clone();
    let mut params = Params::extract(&model);
    let mut adam = Adam::new(params.len());
    let mut rng = SeededRng::with_stream(cfg.seed, stream::SHUFFLE);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Circuit)> = None;
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        let alpha = anneal_alpha(epoch, cfg.epochs, &cfg.gate);
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let step = (|| -> Result<()> {
            for chunk in order.chunks(cfg.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| train_data[i].clone()));
                let g = backward(&model, &params, &batch, alpha)?;
                total += g.mean_nll * batch.len() as f64;
                adam.step(&mut params.values, &g.grads, cfg.learning_rate);
                params.apply(&mut model)?;
            }
            Ok(())
        })();
        let val = step.and_then(|_| mean_log_likelihood(&model, val_data, GateMode::Soft(alpha)));
        let val = match val {
            Ok(v) if v.is_finite() => v,
            Ok(v) => return Ok(abort(initial, best, trace, Error::Numeric(format!("validation LL is {v}")))),
            Err(e) => return Ok(abort(initial, best, trace, e)),
        };
        let snapshot = epoch + 1 == cfg.epochs || (cfg.snapshot_stride > 0 && epoch % cfg.snapshot_stride == 0);
        let hard = match (&domain, cfg.certify, snapshot) {
            (Some(d), Some(cc), true) => match hard_ll_bounds(&model, val_data, d, cc.max_iters) {
                Ok(b) => Some(b),
                Err(e) => return Ok(abort(initial, best, trace, e)),
            },
            _ => None,
        };
        trace.push(TrainRecord {
            epoch,
            alpha,
            train_nll: total / train_data.len() as f64,
            val_ll_soft: val,
            val_ll_hard: hard,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val > *b) {
            best = Some((val, epoch, model.clone()));
        }
    }
    let (_, e, m) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { model: m, trace, best_epoch: Some(e), aborted: None })
}

fn abort(initial: &Circuit, best: Option<(f64, usize, Circuit)>, trace: Vec<TrainRecord>, e: Error) -> TrainOutcome {
    match best {
        Some((_, ep, m)) => TrainOutcome { model: m, trace, best_epoch: Some(ep), aborted: Some(e) },
        None => TrainOutcome { model: initial.clone(), trace, best_epoch: None, aborted: Some(e) },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_weight_examples() {
        let t = Tessellation::new(&[vec![0.0], vec![2.0]]).unwrap();
        let w = soft_weights(&[0.0], &t, 1.0);
        assert!((w[0] - 1.0 / (1.0 + (-4.0f64).exp())).abs() < 1e-15);
        let t3 = Tessellation::new(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![5.0, 5.0]]).unwrap();
        // Margin 0.01: |u-c1|^2 - |u-c0|^2 = 1 - 2 u0 = 0.01.
        let u = [0.495, 0.0];
        let m = t3.nearest(&u);
        assert!((m.gamma - 0.01).abs() < 1e-12);
        let w = soft_weights(&u, &t3, 1e4);
        assert!(1.0 - w[0] <= 2.0 * (-100.0f64 * (m.gamma / 0.01)).exp() * 1.0000001);
    }

    #[test]
    fn anneal_examples() {
        let c = SoftGateConfig::default();
        assert_eq!(anneal_alpha(0, 100, &c), 1.0);
        assert_eq!(anneal_alpha(99, 100, &c), 50.0);
        assert_eq!(anneal_alpha(50, 101, &c), 25.5);
        assert_eq!(anneal_alpha(0, 1, &c), 1.0);
    }

    #[test]
    fn kmeans_recovers_distinct_points() {
        let pts = vec![vec![0.0, 0.0], vec![5.0, 1.0], vec![-3.0, 2.0]];
        let mut c = kmeans_init(&pts, 3, 100, 1).unwrap();
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(c, vec![vec![-3.0, 2.0], vec![0.0, 0.0], vec![5.0, 1.0]]);
        assert!(kmeans_init(&pts, 4, 100, 1).is_err());
        let same = vec![vec![1.0, 1.0]; 10];
        assert!(matches!(kmeans_init(&same, 2, 100, 1), Err(Error::DegenerateTessellation(..))));
    }

    #[test]
    fn kmeans_finds_blob_means() {
        for seed in 0..20u64 {
            let mut rng = SeededRng::new(100 + seed);
            let n = 200;
            let mut pts = Vec::new();
            for c in [-4.0, 4.0] {
                for _ in 0..n {
                    pts.push(vec![c + 0.5 * rng.normal(), 0.5 * rng.normal()]);
                }
            }
            let mean = |lo: usize| {
                let s = &pts[lo..lo + n];
                [s.iter().map(|p| p[0]).sum::<f64>() / n as f64, s.iter().map(|p| p[1]).sum::<f64>() / n as f64]
            };
            let mut c = kmeans_init(&pts, 2, 100, seed).unwrap();
            c.sort_by(|a, b| a[0].total_cmp(&b[0]));
            let tol = 3.0 * 0.5 / (n as f64).sqrt();
            for (ci, m) in c.iter().zip([mean(0), mean(n)]) {
                assert!((ci[0] - m[0]).abs() <= tol && (ci[1] - m[1]).abs() <= tol);
            }
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut a = Adam::new(2);
        let mut p = [1.0, -1.0];
        a.step(&mut p, &[0.3, -2.0], 0.01);
        assert!((p[0] - 0.99).abs() < 1e-9 && (p[1] + 0.99).abs() < 1e-9);
    }
}

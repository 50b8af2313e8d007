mod common;

use std::time::Instant;

use common::{composite_rule, hfv_breaks, rel_err, tensor_quadrature};
use vtpc_core::builder::{build_baseline, random_hfv, RandomSpec};
use vtpc_core::circuit::{Circuit, GateMode, Node};
use vtpc_core::hfv::{build_hfv, hfv_conditional, hfv_marginal, hfv_partition_function, Vtree};
use vtpc_core::rng::SeededRng;

fn spec(dim: usize, seed: u64) -> RandomSpec {
    RandomSpec { dim, units: 2, spread: 2.0, seed }
}

fn rules(c: &Circuit, half: f64) -> Vec<Vec<(f64, f64)>> {
    (0..c.num_vars()).map(|v| composite_rule(-half, half, &hfv_breaks(c, v), 1.0, 6)).collect()
}

#[test]
fn partition_function_matches_quadrature_2d() {
    for seed in 0..6 {
        let cells = [1 + seed as usize % 3, 2 + seed as usize % 2];
        let c = random_hfv(&spec(2, seed), &cells).unwrap();
        let z = hfv_partition_function(&c).unwrap();
        let q = tensor_quadrature(&c, &rules(&c, 12.0));
        assert!(rel_err(z, q) <= 1e-7, "seed {seed}: {z} vs {q}");
    }
}

#[test]
fn partition_function_matches_quadrature_3d() {
    for seed in 0..2 {
        let c = random_hfv(&RandomSpec { dim: 3, units: 1, spread: 1.5, seed }, &[2, 3, 2]).unwrap();
        let z = hfv_partition_function(&c).unwrap();
        let q = tensor_quadrature(&c, &rules(&c, 9.0));
        assert!(rel_err(z, q) <= 1e-6, "seed {seed}: {z} vs {q}");
    }
}

#[test]
fn single_cell_z_is_one() {
    let c = random_hfv(&spec(3, 4), &[1, 1, 1]).unwrap();
    assert!((hfv_partition_function(&c).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn concentrated_weights_pick_one_cell() {
    let vt = Vtree::left_linear(2).unwrap();
    let mut init = |v: usize, _u: usize| (0.5 * v as f64, 1.0);
    let mut c = build_hfv(&vt, 1, &[vec![-1.0, 1.0], vec![0.0, 2.0]], 64, &mut init).unwrap();
    let root = c.root();
    let cell_mass = {
        let Node::Hfv(h) = c.node(root) else { panic!() };
        let b0 = &h.blocks[0];
        let b1 = &h.blocks[1];
        // joint index (1, 0): x0 in (0, inf), x1 in (-inf, 1]
        let i0 = b0.intervals()[0][1];
        let i1 = b1.intervals()[0][0];
        let n = vtpc_core::math::normal_cdf;
        (1.0 - n((i0.lo - 0.0) / 1.0)) * n((i1.hi - 0.5) / 1.0)
    };
    let mut p = vtpc_core::training::Params::extract(&c);
    let n = p.values.len();
    for j in 0..4 {
        p.values[n - 4 + j] = if j == 2 { 0.0 } else { -800.0 };
    }
    p.apply(&mut c).unwrap();
    assert!((hfv_partition_function(&c).unwrap() - cell_mass).abs() < 1e-14);
}

#[test]
fn marginal_matches_line_quadrature() {
    let c = random_hfv(&spec(2, 8), &[2, 3]).unwrap();
    let m = hfv_marginal(&c, &[(0, 0.3)]).unwrap();
    let rule = composite_rule(-12.0, 12.0, &hfv_breaks(&c, 1), 0.8, 8);
    let q: f64 = rule.iter().map(|(y, w)| w * c.log_density(&[0.3, *y], GateMode::Hard).unwrap().exp()).sum();
    assert!(rel_err(m, q) <= 1e-6);
    let x = [0.1, -0.4];
    let full = hfv_marginal(&c, &[(0, x[0]), (1, x[1])]).unwrap();
    assert!(rel_err(full, c.log_density(&x, GateMode::Hard).unwrap().exp()) < 1e-12);
    assert_eq!(hfv_marginal(&c, &[]).unwrap(), hfv_partition_function(&c).unwrap());
}

#[test]
fn conditional_identities() {
    let mut rng = SeededRng::new(31);
    for seed in 0..10 {
        let c = random_hfv(&spec(3, 100 + seed), &[2, 2, 3]).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
        let a = [(0, x[0])];
        let b = [(1, x[1]), (2, x[2])];
        let cond = hfv_conditional(&c, &a, &b).unwrap();
        let joint = hfv_marginal(&c, &[a[0], b[0], b[1]]).unwrap();
        assert!(rel_err(cond * hfv_marginal(&c, &b).unwrap(), joint) <= 1e-12);
        assert!(
            rel_err(
                hfv_conditional(&c, &a, &[]).unwrap(),
                hfv_marginal(&c, &a).unwrap() / hfv_partition_function(&c).unwrap()
            ) <= 1e-12
        );
    }
    let c = random_hfv(&spec(2, 3), &[2, 2]).unwrap();
    assert!(hfv_conditional(&c, &[(0, 0.0)], &[(0, 1.0)]).is_err());
}

#[test]
fn any_order_marginalization() {
    let mut rng = SeededRng::new(77);
    for seed in 0..4 {
        let c = random_hfv(&spec(3, 200 + seed), &[3, 2, 2]).unwrap();
        let mut evidence: Vec<(usize, f64)> = (0..3).map(|v| (v, rng.uniform_range(-1.5, 1.5))).collect();
        let mut order: Vec<usize> = (0..3).collect();
        rng.shuffle(&mut order);
        for v in order {
            let before = evidence.clone();
            evidence.retain(|(w, _)| *w != v);
            let exact = hfv_marginal(&c, &evidence).unwrap();
            let rule = composite_rule(-12.0, 12.0, &hfv_breaks(&c, v), 0.8, 8);
            let numeric: f64 = rule
                .iter()
                .map(|(t, w)| {
                    let ev: Vec<(usize, f64)> =
                        before.iter().map(|&(u, x)| if u == v { (u, *t) } else { (u, x) }).collect();
                    w * hfv_marginal(&c, &ev).unwrap()
                })
                .sum();
            assert!(rel_err(exact, numeric) <= 1e-8, "{exact} vs {numeric}");
        }
        assert!(rel_err(hfv_marginal(&c, &evidence).unwrap(), hfv_partition_function(&c).unwrap()) <= 1e-15);
    }
}

#[test]
fn exactly_one_joint_cell_fires() {
    let c = random_hfv(&spec(3, 9), &[3, 2, 4]).unwrap();
    let mut rng = SeededRng::new(5);
    for _ in 0..20_000 {
        let x: Vec<f64> = (0..3).map(|_| rng.uniform_range(-4.0, 4.0)).collect();
        for n in c.nodes() {
            if let Node::Hfv(h) = n {
                let cells: Vec<usize> = h.blocks.iter().map(|b| b.cell_of(&x)).collect();
                for (b, &cell) in h.blocks.iter().zip(&cells) {
                    let digits = b.cell_digits(cell);
                    for (s, &v) in b.vars().iter().enumerate() {
                        let hits = b.intervals()[s].iter().filter(|iv| iv.contains(x[v])).count();
                        assert_eq!(hits, 1);
                        assert!(b.intervals()[s][digits[s]].contains(x[v]));
                    }
                }
            }
        }
        assert!(c.determinism_at(&x).unwrap().deterministic);
    }
}

#[test]
fn single_cell_matches_baseline() {
    let mut rng = SeededRng::new(12);
    let vt = Vtree::random_binary(3, &mut rng).unwrap();
    let mut init = |v: usize, u: usize| (0.2 * v as f64 - 0.3 * u as f64, 0.7 + 0.2 * u as f64);
    let base = build_baseline(&vt, 3, &mut init).unwrap();
    let hfv = build_hfv(&vt, 3, &[vec![0.1], vec![-0.4], vec![2.0]], 4096, &mut init).unwrap();
    for _ in 0..1000 {
        let x: Vec<f64> = (0..3).map(|_| rng.uniform_range(-5.0, 5.0)).collect();
        let a = base.log_density(&x, GateMode::Hard).unwrap();
        let b = hfv.log_density(&x, GateMode::Hard).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn partition_cost_grows_quadratically() {
    let ks = [2usize, 4, 8, 16];
    let mut times = Vec::new();
    for &k in &ks {
        let c = random_hfv(&RandomSpec { dim: 2, units: 1, spread: 2.0, seed: 3 }, &[k, k]).unwrap();
        let mut best = f64::INFINITY;
        for _ in 0..7 {
            let t = Instant::now();
            for _ in 0..20 {
                std::hint::black_box(hfv_partition_function(&c).unwrap());
            }
            best = best.min(t.elapsed().as_secs_f64());
        }
        times.push(best);
    }
    let xs: Vec<f64> = ks.iter().map(|k| (*k as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let mx = xs.iter().sum::<f64>() / 4.0;
    let my = ys.iter().sum::<f64>() / 4.0;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!(slope <= 2.2, "log-log slope {slope}, times {times:?}");
}

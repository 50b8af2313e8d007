use proptest::prelude::*;
use vtpc_core::builder::{random_hfv, random_vt, RandomSpec};
use vtpc_core::certified::{DomainSpec, Refiner};
use vtpc_core::circuit::GateMode;
use vtpc_core::data::{standardize_and_split, SplitSpec};
use vtpc_core::geometry::{classify_box, AxisBox, CellLabel, Tessellation};
use vtpc_core::hfv::{hfv_conditional, hfv_marginal, hfv_partition_function};
use vtpc_core::math::sq_dist;
use vtpc_core::training::{soft_weights, Params};

fn centroids(max_k: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), 2..=max_k).prop_filter("distinct centroids", |cs| {
        cs.iter().enumerate().all(|(i, a)| cs[..i].iter().all(|b| sq_dist(a, b) > 1e-4))
    })
}

fn unit_points(d: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, d), n)
}

/// Strictly nearer to `k` than to every other centroid.
fn strictly_in(t: &Tessellation, k: usize, x: &[f64]) -> bool {
    let dk = sq_dist(x, t.centroid(k));
    (0..t.num_cells()).all(|j| j == k || dk < sq_dist(x, t.centroid(j)))
}

proptest! {
    #[test]
    fn soft_weights_lie_on_simplex_and_obey_margin_bound(
        cs in centroids(6, 2),
        u in prop::collection::vec(-4.0f64..4.0, 2),
        log_alpha in -3.0f64..4.0,
    ) {
        let t = Tessellation::new(&cs).unwrap();
        let alpha = 10f64.powf(log_alpha);
        let w = soft_weights(&u, &t, alpha);
        prop_assert!(w.iter().all(|v| *v >= 0.0 && *v <= 1.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let m = t.nearest(&u);
        if m.gamma > 0.0 {
            let rest: f64 = w.iter().enumerate().filter(|(j, _)| *j != m.nearest).map(|(_, v)| v).sum();
            prop_assert!(rest <= (cs.len() - 1) as f64 * libm::exp(-alpha * m.gamma));
        }
    }

    #[test]
    fn box_labels_agree_with_point_membership(
        cs in centroids(5, 2),
        corner in prop::collection::vec(-4.0f64..3.0, 2),
        width in prop::collection::vec(0.01f64..3.0, 2),
        samples in unit_points(2, 64),
    ) {
        let t = Tessellation::new(&cs).unwrap();
        let b = AxisBox::new(corner.clone(), corner.iter().zip(&width).map(|(c, w)| c + w).collect()).unwrap();
        for k in 0..t.num_cells() {
            let label = classify_box(&b, &t.halfspaces(k));
            for s in &samples {
                let x = b.lerp(s);
                match label {
                    CellLabel::Inside => prop_assert!(!(0..t.num_cells()).any(|j| j != k && strictly_in(&t, j, &x))),
                    CellLabel::Outside => prop_assert!(!strictly_in(&t, k, &x)),
                    CellLabel::Boundary => {}
                }
            }
        }
    }

    #[test]
    fn inner_and_outer_boxes_sandwich_cells(
        d in 2usize..=4,
        seed in 0u64..1000,
        samples in unit_points(4, 200),
    ) {
        let mut rng = vtpc_core::rng::SeededRng::new(seed);
        let k = 2 + rng.below(5);
        let cs: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.uniform_range(-2.0, 2.0)).collect()).collect();
        let t = Tessellation::new(&cs).unwrap();
        let dom = AxisBox::cube(d, -3.0, 3.0);
        for j in 0..k {
            let inner = t.inner_box(j, &dom);
            let outer = t.outer_box(j, &dom).unwrap();
            prop_assert!(outer.contains_box(&inner) || inner.is_empty());
            for s in &samples {
                if !inner.is_empty() {
                    prop_assert_eq!(t.nearest(&inner.lerp(&s[..d])).nearest, j);
                }
                let x = dom.lerp(&s[..d]);
                if t.nearest(&x).nearest == j {
                    prop_assert!(outer.contains(&x));
                }
            }
        }
    }

    #[test]
    fn standardized_train_split_is_centered(
        raw in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 40..80),
        seed in 0u64..100,
    ) {
        let s = standardize_and_split(&raw, SplitSpec { train: 20, val: 10, test: 10 }, seed).unwrap();
        for v in 0..3 {
            let col: Vec<f64> = s.train.iter().map(|p| p[v]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            prop_assert!(mean.abs() <= 1e-9);
            prop_assert!((var.sqrt() - 1.0).abs() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refinement_is_monotone_and_ordered(seed in 0u64..10_000, k in 2usize..=5, steps in 1usize..60) {
        let c = random_vt(&RandomSpec { dim: 2, units: 2, spread: 3.0, seed }, k).unwrap();
        let dom = DomainSpec::fixed(AxisBox::cube(2, -6.0, 6.0)).unwrap();
        let mut r = Refiner::new(&c, &dom).unwrap();
        for _ in 0..steps {
            if !r.step().unwrap() {
                break;
            }
        }
        for w in r.trace().windows(2) {
            prop_assert!(w[1].z_lo >= w[0].z_lo * (1.0 - 1e-12));
            prop_assert!(w[1].z_hi <= w[0].z_hi * (1.0 + 1e-12));
        }
        let b = r.bounds();
        prop_assert!(0.0 <= b.lo && b.lo <= b.hi);
        for (inc, full) in r.incremental_sums().iter().zip(r.recompute_sums()) {
            for (a, e) in inc.0.iter().chain(&inc.1).zip(full.0.iter().chain(&full.1)) {
                prop_assert!((a - e).abs() <= 1e-12 * e.abs().max(1.0));
            }
        }
    }

    #[test]
    fn hfv_conditionals_compose(seed in 0u64..10_000, x in prop::collection::vec(-2.5f64..2.5, 3)) {
        let c = random_hfv(&RandomSpec { dim: 3, units: 2, spread: 2.0, seed }, &[2, 3, 2]).unwrap();
        let z = hfv_partition_function(&c).unwrap();
        prop_assert!(z > 0.0 && z.is_finite());
        let a = [(0, x[0])];
        let b = [(1, x[1]), (2, x[2])];
        let joint = hfv_marginal(&c, &[a[0], b[0], b[1]]).unwrap();
        let density = c.log_density(&x, GateMode::Hard).unwrap().exp();
        prop_assert!((joint - density).abs() <= 1e-12 * density);
        let cond = hfv_conditional(&c, &a, &b).unwrap();
        let pb = hfv_marginal(&c, &b).unwrap();
        prop_assert!((cond * pb - joint).abs() <= 1e-12 * joint);
    }

    #[test]
    fn params_round_trip(seed in 0u64..10_000, k in 1usize..5) {
        let c = random_vt(&RandomSpec { dim: 2, units: 2, spread: 2.0, seed }, k).unwrap();
        let mut m = c.clone();
        let mut p = Params::extract(&c);
        p.apply(&mut m).unwrap();
        let x = [0.3, -0.7];
        let a = c.log_density(&x, GateMode::Soft(2.0)).unwrap();
        let b = m.log_density(&x, GateMode::Soft(2.0)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

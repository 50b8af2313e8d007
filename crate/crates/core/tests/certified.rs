mod common;

use common::{midpoint_2d, midpoint_shell_2d};
use vtpc_core::builder::{random_vt, RandomSpec};
use vtpc_core::certified::{
    conditional_bounds, gap_contribution, integrate_box, marginal_bounds, refine, BoundInterval, CellBoxes, DomainSpec,
    Integrator, Refiner, Region,
};
use vtpc_core::circuit::{Circuit, GateMode, GaussianLeaf, Node, NodeId, ProductNode, VtSumNode};
use vtpc_core::geometry::{classify_box, AxisBox, Tessellation};

fn leaf(var: usize, mean: f64, stddev: f64) -> Node {
    Node::Leaf(GaussianLeaf { var, mean, stddev })
}

/// Two cells with centroids (0,1), (1,0), equal weights and standard
/// factorized Gaussian experts. Z is exactly 1/2.
fn two_cell() -> Circuit {
    let nodes = vec![
        leaf(0, 0.0, 1.0),
        leaf(1, 0.0, 1.0),
        Node::Product(ProductNode { children: vec![NodeId(0), NodeId(1)] }),
        leaf(0, 0.0, 1.0),
        leaf(1, 0.0, 1.0),
        Node::Product(ProductNode { children: vec![NodeId(3), NodeId(4)] }),
        Node::Vt(VtSumNode {
            tessellation: Tessellation::new(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            log_mixture: vec![0.5f64.ln(); 2],
            experts: vec![NodeId(2), NodeId(5)],
        }),
    ];
    Circuit::new(2, nodes, NodeId(6)).unwrap()
}

fn square(h: f64) -> DomainSpec {
    DomainSpec::fixed(AxisBox::cube(2, -h, h)).unwrap()
}

fn spec(seed: u64) -> RandomSpec {
    RandomSpec { dim: 2, units: 2, spread: 3.0, seed }
}

fn oracle(c: &Circuit, half: f64) -> f64 {
    midpoint_2d(c, -half, half, 400) + midpoint_shell_2d(c, half, 14.0, 400)
}

#[test]
fn integrate_box_examples() {
    let nodes =
        vec![leaf(0, 0.0, 1.0), leaf(1, 0.0, 1.0), Node::Product(ProductNode { children: vec![NodeId(0), NodeId(1)] })];
    let c = Circuit::new(2, nodes, NodeId(2)).unwrap();
    let all = integrate_box(&c, None, c.root(), &AxisBox::unbounded(2)).unwrap();
    assert!((all.lo - 1.0).abs() < 1e-15 && all.lo == all.hi);
    let m = integrate_box(&c, None, c.root(), &AxisBox::cube(2, -1.0, 1.0)).unwrap();
    assert!((m.lo - 0.682_689_492_137_085_9f64.powi(2)).abs() < 1e-14);
    let e = integrate_box(&c, None, c.root(), &AxisBox::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap()).unwrap();
    assert_eq!(e, BoundInterval::ZERO);
}

#[test]
fn two_cell_initial_bounds_bracket_half() {
    let c = two_cell();
    let dom = square(4.0);
    let boxes = CellBoxes::compute(&c, &dom).unwrap();
    let b = vtpc_core::certified::certified_partition_bounds(&c, &boxes, &dom).unwrap();
    assert!(b.lo <= 0.5 && 0.5 <= b.hi, "{b:?}");
    let q = oracle(&c, 4.0);
    assert!((q - 0.5).abs() < 1e-4, "{q}");
}

#[test]
fn two_cell_refines_to_1e3() {
    let c = two_cell();
    let dom = square(4.0);
    let out = refine(&c, &dom, 1e-3, 10_000).unwrap();
    assert!(out.converged, "gap {}", out.bounds.gap());
    assert!(out.bounds.contains(0.5));
    let q = oracle(&c, 4.0);
    assert!(out.bounds.lo <= q && q <= out.bounds.hi);
    assert_monotone(&out.trace);
    assert_eq!(out.trace.last().unwrap().gap, out.bounds.gap());
}

fn assert_monotone(trace: &[vtpc_core::certified::TraceRow]) {
    for w in trace.windows(2) {
        let slack_lo = 1e-12 * w[0].z_lo.abs();
        let slack_hi = 1e-12 * w[0].z_hi.abs();
        assert!(w[1].z_lo >= w[0].z_lo - slack_lo, "lo dropped at {}", w[1].iter);
        assert!(w[1].z_hi <= w[0].z_hi + slack_hi, "hi rose at {}", w[1].iter);
    }
}

#[test]
fn random_circuits_sandwich_quadrature() {
    for seed in 0..6 {
        let k = 2 + (seed as usize % 4);
        let c = random_vt(&spec(seed), k).unwrap();
        let out = refine(&c, &square(6.0), 1e-4, 300).unwrap();
        let q = oracle(&c, 6.0);
        assert!(out.bounds.lo <= q && q <= out.bounds.hi, "seed {seed}: {:?} vs {q}", out.bounds);
        assert_monotone(&out.trace);
    }
}

#[test]
fn without_tail_never_exceeds_with_tail() {
    let c = random_vt(&spec(11), 3).unwrap();
    let out = refine(&c, &square(3.0), 1e-4, 100).unwrap();
    assert!(out.hi_without_tail <= out.bounds.hi);
}

#[test]
fn partition_integrity_and_incremental_sums() {
    for seed in 20..24 {
        let c = random_vt(&spec(seed), 4).unwrap();
        let dom = square(6.0);
        let mut r = Refiner::new(&c, &dom).unwrap();
        for _ in 0..120 {
            if !r.step().unwrap() {
                break;
            }
        }
        let domains = r.partition_domains();
        let halfspaces = r.gate_halfspaces();
        for (g, part) in r.partitions().iter().enumerate() {
            let vol: f64 = part.iter().map(|(b, _)| b.volume()).sum();
            assert!((vol - domains[g].volume()).abs() <= 1e-9 * domains[g].volume());
            for (i, (a, la)) in part.iter().enumerate() {
                assert!(domains[g].contains_box(a));
                for (b, _) in &part[i + 1..] {
                    assert_eq!(a.intersect(b).volume(), 0.0);
                }
                for (k, l) in la.iter().enumerate() {
                    assert_eq!(*l, classify_box(a, &halfspaces[g][k]));
                }
            }
        }
        for ((ia, oa), (ib, ob)) in r.incremental_sums().iter().zip(r.recompute_sums()) {
            for (x, y) in ia.iter().zip(&ib).chain(oa.iter().zip(&ob)) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
            }
        }
    }
}

#[test]
fn uniform_refinement_rate() {
    let c = two_cell();
    let dom = square(4.0);
    let mut r = Refiner::new(&c, &dom).unwrap();
    let g0 = r.bounds().gap();
    let mut worst: f64 = 0.0;
    for t in 1..=8 {
        r.refine_uniform(1).unwrap();
        let ratio = r.bounds().gap() / (g0 * 2f64.powf(-(t as f64) / 2.0));
        if t >= 3 {
            worst = worst.max(ratio);
        }
    }
    assert!(worst <= 4.0, "fitted constant {worst}");
}

#[test]
fn single_cell_needs_no_refinement() {
    let mut c = two_cell();
    let nodes: Vec<Node> = c.nodes()[..3].to_vec();
    c = Circuit::new(
        2,
        nodes
            .into_iter()
            .chain([Node::Vt(VtSumNode {
                tessellation: Tessellation::new(&[vec![0.3, 0.3]]).unwrap(),
                log_mixture: vec![0.0],
                experts: vec![NodeId(2)],
            })])
            .collect(),
        NodeId(3),
    )
    .unwrap();
    let dom = square(3.0);
    let out = refine(&c, &dom, 1e-12, 50).unwrap();
    assert_eq!(out.iters, 0);
    let inside = 0.997_300_203_936_739_8f64.powi(2);
    assert!(out.bounds.contains(1.0));
    assert!((out.bounds.gap() - (1.0 - inside)).abs() < 1e-12);
}

#[test]
fn gap_contribution_examples() {
    let c = two_cell();
    let dom = square(4.0);
    let e = AxisBox::empty(2);
    assert_eq!(gap_contribution(&c, &dom, c.root(), 0, &e).unwrap(), 0.0);
    let b = AxisBox::new(vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap();
    let m = integrate_box(&c, None, NodeId(2), &b).unwrap().hi;
    assert!((gap_contribution(&c, &dom, c.root(), 0, &b).unwrap() - 0.5 * m).abs() < 1e-15);
}

#[test]
fn marginal_brackets_line_quadrature() {
    let c = two_cell();
    let dom = square(4.0);
    let b = marginal_bounds(&c, &[(0, 0.0)], &dom, 400).unwrap();
    // f(0, y) integrated over y.
    let n = 20_000;
    let h = 28.0 / n as f64;
    let q: f64 =
        (0..n).map(|i| c.log_density(&[0.0, -14.0 + (i as f64 + 0.5) * h], GateMode::Hard).unwrap().exp() * h).sum();
    assert!(b.lo <= q && q <= b.hi, "{b:?} vs {q}");
    let all = marginal_bounds(&c, &[(0, 0.2), (1, -0.7)], &dom, 10).unwrap();
    let f = c.log_density(&[0.2, -0.7], GateMode::Hard).unwrap().exp();
    assert_eq!(all.lo, all.hi);
    assert!((all.lo - f).abs() <= 1e-15 * f);
}

#[test]
fn conditional_contains_truth() {
    let c = random_vt(&spec(5), 3).unwrap();
    let dom = square(6.0);
    let joint = BoundInterval::point(c.log_density(&[0.4, 0.1], GateMode::Hard).unwrap().exp());
    let ev = marginal_bounds(&c, &[(0, 0.4)], &dom, 500).unwrap();
    let n = 40_000;
    let h = 28.0 / n as f64;
    let truth_ev: f64 =
        (0..n).map(|i| c.log_density(&[0.4, -14.0 + (i as f64 + 0.5) * h], GateMode::Hard).unwrap().exp() * h).sum();
    assert!(ev.contains(truth_ev));
    let cond = conditional_bounds(joint, ev).unwrap();
    assert!(cond.contains(joint.lo / truth_ev));
    let same = conditional_bounds(ev, ev).unwrap();
    assert!(same.contains(1.0));
    assert!(conditional_bounds(joint, BoundInterval::ZERO).is_err());
}

#[test]
fn exact_integrator_on_plain_circuit() {
    let c = random_vt(&spec(3), 1).unwrap();
    let z = Integrator::exact(&c).integrate(c.root(), &Region::full(2)).unwrap();
    assert!((z.lo - 1.0).abs() < 1e-12 && z.lo == z.hi);
}

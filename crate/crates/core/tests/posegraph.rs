use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatpose_core::geometry::{RigidTransform, Vec3};
use splatpose_core::image::Grid;
use splatpose_core::posegraph::{
    detect_loop_closures, edge_residuals, normal_equations, optimize, try_insert_keyframe, DescriptorRetriever, GraphEdge,
    Insertion, Keyframe, KeyframeKind, Match, MatchResult, Matcher, PoseGraph, SolverConfig,
};
use splatpose_core::Error;

fn random_pose(rng: &mut ChaCha8Rng, rot: f64, trans: f64) -> RigidTransform {
    let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
    let t = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
    RigidTransform::from_axis_angle(axis * rot * rng.random_range(0.2..1.0), t * trans * rng.random_range(0.2..1.0))
}

/// Keyframe whose "pixels" are the object points seen from `pose`.
fn keyframe(kind: KeyframeKind, pose: RigidTransform, object: &[Vec3]) -> Keyframe {
    let inv = pose.inverse();
    let pm = Grid::from_fn(object.len(), 1, |x, _| inv.apply(&object[x]));
    Keyframe::new(kind, pose, pm, Grid::filled(object.len(), 1, true), Grid::filled(object.len(), 1, 1.0), vec![1.0], 0).unwrap()
}

struct Synthetic {
    graph: PoseGraph,
    truth: Vec<RigidTransform>,
}

fn synthetic(seed: u64, nodes: usize, diffusion: &[usize]) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let object: Vec<Vec3> = (0..60)
        .map(|_| Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
        .collect();
    let truth: Vec<RigidTransform> = (0..nodes).map(|_| random_pose(&mut rng, 3.0, 0.5)).collect();
    let mut graph = PoseGraph::new();
    for (k, t) in truth.iter().enumerate() {
        let kind = if diffusion.contains(&k) { KeyframeKind::Diffusion } else { KeyframeKind::Real };
        let mut kf = keyframe(kind, *t, &object);
        if kind == KeyframeKind::Real {
            kf.pose = random_pose(&mut rng, 5f64.to_radians(), 0.05).compose(t);
        }
        graph.add_keyframe(kf);
    }
    for i in 0..nodes {
        for j in [i + 1, i + 3] {
            if j < nodes {
                let matches = (0..object.len()).step_by(2).map(|m| Match { i: m, j: m, q: rng.random_range(0.5..1.0) }).collect();
                graph.add_edge(GraphEdge::new(i, j, matches).unwrap()).unwrap();
            }
        }
    }
    Synthetic { graph, truth }
}

#[test]
fn eight_node_zero_noise_recovery() {
    let mut s = synthetic(7, 8, &[0, 5]);
    let fixed_before: Vec<_> = [0, 5].iter().map(|&k| s.graph.keyframe(k).pose).collect();
    let cfg = SolverConfig::default();
    let report = optimize(&mut s.graph, &cfg).unwrap();
    assert!(report.final_cost < 1e-10, "{report:?}");
    assert!(report.final_cost <= report.initial_cost);
    for w in report.costs.windows(2) {
        assert!(w[1] <= w[0]);
    }
    for (k, t) in s.truth.iter().enumerate() {
        let p = s.graph.keyframe(k).pose;
        assert!(p.translation_to(t) < 1e-4, "node {k}");
        assert!(p.angle_to(t).to_degrees() < 0.01, "node {k}");
    }
    for (n, &k) in [0, 5].iter().enumerate() {
        let after = s.graph.keyframe(k).pose;
        assert_eq!(after.rotation.coords, fixed_before[n].rotation.coords);
        assert_eq!(after.translation, fixed_before[n].translation);
    }
}

#[test]
fn sparse_step_equals_dense_step() {
    for seed in 0..5 {
        let s = synthetic(seed, 8, &[2]);
        let ne = normal_equations(&s.graph, &SolverConfig::default()).unwrap();
        let lambda = 1e-3;
        let sparse = ne.solve(lambda).unwrap();
        let mut h = ne.hessian.to_dense();
        for i in 0..h.nrows() {
            h[(i, i)] += lambda * h[(i, i)].max(1e-12);
        }
        let g = DVector::from_iterator(ne.gradient.len(), ne.gradient.iter().map(|v| -v));
        let dense = h.cholesky().unwrap().solve(&g);
        for i in 0..sparse.len() {
            assert!((sparse[i] - dense[i]).abs() < 1e-8, "seed {seed} entry {i}");
        }
    }
}

#[test]
fn stationary_graph_is_unchanged() {
    let mut s = synthetic(3, 5, &[0]);
    for (k, t) in s.truth.iter().enumerate() {
        s.graph.keyframe_mut(k).pose = *t;
    }
    let before = s.graph.poses();
    let report = optimize(&mut s.graph, &SolverConfig::default()).unwrap();
    assert_eq!(report.iterations, 1);
    for (a, b) in s.graph.poses().iter().zip(&before) {
        assert!(a.translation_to(b) < 1e-9 && a.angle_to(b) < 1e-9);
    }
}

#[test]
fn translation_offset_residual_norm() {
    let object = vec![Vec3::new(0.0, 0.0, 0.5), Vec3::new(0.1, 0.0, 0.4), Vec3::new(0.0, 0.1, 0.6)];
    let ki = keyframe(KeyframeKind::Real, RigidTransform::identity(), &object);
    let mut kj = keyframe(KeyframeKind::Real, RigidTransform::from_axis_angle(Vec3::new(0.0, 0.3, 0.0), Vec3::zeros()), &object);
    let edge = GraphEdge::new(0, 1, (0..3).map(|m| Match { i: m, j: m, q: 0.8 }).collect()).unwrap();
    let cfg = SolverConfig::default();
    assert!(edge_residuals(&ki, &kj, &edge, &cfg).iter().all(|r| r.scaled.norm() < 1e-9));
    kj.pose = RigidTransform::from_translation(Vec3::new(0.1, 0.0, 0.0)).compose(&kj.pose);
    let res = edge_residuals(&ki, &kj, &edge, &cfg);
    assert_eq!(res.len(), 3);
    for r in res {
        assert!((r.scaled.norm() - 0.1 / r.weight).abs() < 1e-9);
    }
}

#[test]
fn fully_gated_graph_is_a_no_op() {
    let mut s = synthetic(11, 4, &[]);
    let cfg = SolverConfig { q_min: 1.0, ..SolverConfig::default() };
    let before = s.graph.poses();
    for e in s.graph.edges() {
        let (a, b) = (s.graph.keyframe(e.i), s.graph.keyframe(e.j));
        assert!(edge_residuals(a, b, e, &cfg).is_empty());
    }
    let report = optimize(&mut s.graph, &cfg).unwrap();
    assert_eq!(report.residuals, 0);
    assert_eq!(s.graph.poses(), before);
}

#[derive(Clone, Copy, PartialEq)]
enum Gate {
    LowQ,
    RemoveOne,
    ZeroConfidence,
    RemovePixel,
}

/// Three-node graph where match 3 of edge (0, 1), or every match touching
/// pixel `P` of node 1, is either gated or removed.
fn three_node(gate: Gate) -> PoseGraph {
    const P: usize = 6;
    let s = synthetic(5, 3, &[0]);
    let mut g = PoseGraph::new();
    for kf in s.graph.keyframes() {
        g.add_keyframe(kf.clone());
    }
    if gate == Gate::ZeroConfidence {
        g.keyframe_mut(1).confidence[P] = 0.0;
    }
    for e in s.graph.edges() {
        let mut e = e.clone();
        match gate {
            Gate::LowQ if e.i == 0 && e.j == 1 => e.matches[3].q = 0.1,
            Gate::RemoveOne if e.i == 0 && e.j == 1 => {
                e.matches.remove(3);
            }
            Gate::RemovePixel => e.matches.retain(|m| !((e.i == 1 && m.i == P) || (e.j == 1 && m.j == P))),
            _ => {}
        }
        g.add_edge(e).unwrap();
    }
    g
}

fn assert_bit_identical(a: Gate, b: Gate) {
    let cfg = SolverConfig::default();
    let (mut ga, mut gb) = (three_node(a), three_node(b));
    let ra = optimize(&mut ga, &cfg).unwrap();
    let rb = optimize(&mut gb, &cfg).unwrap();
    assert_eq!(ra.final_cost.to_bits(), rb.final_cost.to_bits());
    assert_eq!(ra.iterations, rb.iterations);
    for (x, y) in ga.poses().iter().zip(gb.poses()) {
        assert_eq!(x.rotation.coords, y.rotation.coords);
        assert_eq!(x.translation, y.translation);
    }
}

#[test]
fn dropped_match_equals_removed_match() {
    assert_bit_identical(Gate::LowQ, Gate::RemoveOne);
    assert_bit_identical(Gate::ZeroConfidence, Gate::RemovePixel);
}

#[test]
fn disconnected_free_node_is_reported() {
    let mut s = synthetic(2, 3, &[0]);
    let object = vec![Vec3::new(0.0, 0.0, 0.5), Vec3::new(0.1, 0.0, 0.4)];
    s.graph.add_keyframe(keyframe(KeyframeKind::Real, RigidTransform::identity(), &object));
    assert!(matches!(optimize(&mut s.graph, &SolverConfig::default()), Err(Error::DisconnectedGraph(3))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn cost_is_gauge_invariant(seed in 0u64..1000, w in prop::array::uniform3(-3.0f64..3.0), t in prop::array::uniform3(-2.0f64..2.0)) {
        let s = synthetic(seed, 4, &[1]);
        let cfg = SolverConfig::default();
        let g = RigidTransform::from_axis_angle(Vec3::new(w[0], w[1], w[2]), Vec3::new(t[0], t[1], t[2]));
        let mut moved = s.graph.clone();
        for k in 0..moved.len() {
            let p = moved.keyframe(k).pose;
            moved.keyframe_mut(k).pose = g.compose(&p);
        }
        let cost = |gr: &PoseGraph| -> f64 {
            gr.edges().iter().flat_map(|e| edge_residuals(gr.keyframe(e.i), gr.keyframe(e.j), e, &cfg)).map(|r| r.cost).sum()
        };
        let (a, b) = (cost(&s.graph), cost(&moved));
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{} vs {}", a, b);
    }
}

struct FixedMatcher(usize);

impl Matcher for FixedMatcher {
    fn match_keyframes(&self, _a: &Keyframe, _b: &Keyframe) -> splatpose_core::Result<MatchResult> {
        Ok(MatchResult { matches: vec![Match { i: 0, j: 0, q: 0.9 }], inliers: self.0 })
    }
}

#[test]
fn insertion_rule() {
    let object = vec![Vec3::new(0.0, 0.0, 0.5)];
    let kf = || keyframe(KeyframeKind::Real, RigidTransform::identity(), &object);
    let mut g = PoseGraph::new();
    let first = try_insert_keyframe(&mut g, kf(), None, &MatchResult::default(), 10).unwrap();
    assert!(matches!(first, Insertion::Inserted { id: 0, edge: None }));
    let r = MatchResult { matches: vec![Match { i: 0, j: 0, q: 0.9 }], inliers: 9 };
    assert!(matches!(try_insert_keyframe(&mut g, kf(), Some(0), &r, 10).unwrap(), Insertion::Inserted { id: 1, edge: Some(_) }));
    let r = MatchResult { inliers: 10, ..r };
    assert_eq!(try_insert_keyframe(&mut g, kf(), Some(1), &r, 10).unwrap(), Insertion::Skipped);
    assert_eq!(g.len(), 2);
    assert_eq!(g.edges().len(), 1);
}

#[test]
fn loop_closure_gating() {
    let object = vec![Vec3::new(0.0, 0.0, 0.5)];
    let kf = || keyframe(KeyframeKind::Real, RigidTransform::identity(), &object);
    let mut g = PoseGraph::new();
    g.add_keyframe(kf());
    assert!(detect_loop_closures(&mut g, 0, &DescriptorRetriever::Cosine, &FixedMatcher(50), 3, 10).unwrap().is_empty());
    g.add_keyframe(kf());
    g.add_keyframe(kf());
    assert!(detect_loop_closures(&mut g, 2, &DescriptorRetriever::Cosine, &FixedMatcher(5), 3, 10).unwrap().is_empty());
    let added = detect_loop_closures(&mut g, 2, &DescriptorRetriever::Cosine, &FixedMatcher(50), 3, 10).unwrap();
    assert_eq!(added.len(), 2);
}

#[test]
fn damping_path_moves_toward_solution() {
    let mut s = synthetic(9, 6, &[0]);
    let cfg = SolverConfig { lm_lambda0: 1e3, ..SolverConfig::default() };
    let report = optimize(&mut s.graph, &cfg).unwrap();
    assert!(report.final_cost < report.initial_cost);
}

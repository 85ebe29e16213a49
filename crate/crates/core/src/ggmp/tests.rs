use rand::Rng;

use super::*;
use crate::biograph::geom::{norm3, RigidMotion};
use crate::biograph::{BioGraph3D, GraphKind, NODE_FEATURE_DIM};
use crate::gradcheck::{compare, param_central_diff, vec_central_diff};
use crate::rng::substream;
use crate::synth::{random_ligand_graph, random_pocket_graph};
use crate::tensornn::{dot, DenseMatrix, Mlp, Parameterized};

fn small_dims() -> LayerDims {
    LayerDims {
        node: 5,
        message: 4,
        hidden: 6,
        hidden_layers: 1,
    }
}

fn random_state(rng: &mut impl Rng, graph: &BioGraph3D, width: usize) -> NodeState {
    NodeState {
        h: (0..graph.node_count())
            .map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect(),
        x: graph.coords.clone(),
        n: graph.directions.clone(),
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn flat3(v: &[[f64; 3]]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

fn two_node_graph() -> BioGraph3D {
    let mut f = vec![0.0; NODE_FEATURE_DIM];
    f[0] = 1.0;
    BioGraph3D::new(
        GraphKind::Ligand,
        vec![[0.0, 0.0, 0.0], [1.0, 2.0, -1.0]],
        vec![f.clone(), f],
        vec![(0, 1), (1, 0)],
        vec![vec![1.0, 0.0, 0.0, 0.0]; 2],
    )
    .unwrap()
}

fn stub_layer(d_h: usize, d_m: usize, lambda: f64) -> GgmpLayer {
    let ones = |n: usize| vec![1.0; n];
    GgmpLayer::from_parts(
        Mlp::constant(2 * d_h + crate::biograph::EDGE_FEATURE_DIM, &ones(d_m)),
        Mlp::constant(2, &ones(d_m)),
        Mlp::constant(d_h + d_m, &ones(d_h)),
        Mlp::constant(d_m, &[1.0]),
        Mlp::constant(d_m, &[1.0]),
        Mlp::constant(d_m, &[1.0]),
        lambda,
    )
    .unwrap()
}

#[test]
fn no_edges_means_empty_aggregation() {
    let mut rng = substream(1, "t");
    let layer = GgmpLayer::new(small_dims(), 0.1, &mut rng).unwrap();
    let mut f = vec![0.0; NODE_FEATURE_DIM];
    f[3] = 1.0;
    let g = BioGraph3D::new(GraphKind::Ligand, vec![[1.0, 2.0, 3.0], [4.0, 0.0, 0.0]], vec![f.clone(), f], vec![], vec![]).unwrap();
    let state = random_state(&mut rng, &g, 5);
    let (out, _) = layer.forward_traced(&g, &state).unwrap();
    for i in 0..2 {
        let mut input = state.h[i].clone();
        input.extend([0.0; 4]);
        assert_eq!(out.h[i], layer.phi_h.predict(&input).unwrap());
        assert_eq!(out.x[i], state.x[i]);
        assert_eq!(out.n[i], state.n[i]);
    }
}

#[test]
fn zero_step_size_keeps_geometry_exactly() {
    let mut rng = substream(2, "t");
    let layer = GgmpLayer::new(small_dims(), 0.0, &mut rng).unwrap();
    let g = random_pocket_graph(&mut rng, 9, 3);
    let state = random_state(&mut rng, &g, 5);
    let (out, _) = layer.forward_traced(&g, &state).unwrap();
    assert_eq!(out.x, state.x);
    assert_eq!(out.n, state.n);
}

#[test]
fn stub_networks_move_positions_by_hand_value() {
    let g = two_node_graph();
    let layer = stub_layer(3, 2, 0.1);
    let out = ggmp_forward(&layer, &g, &[vec![0.0; 3], vec![0.0; 3]]).unwrap();
    let (x0, x1) = (g.coords[0], g.coords[1]);
    for k in 0..3 {
        assert!((out.x[0][k] - (x0[k] + 0.1 * (x0[k] - x1[k]))).abs() < 1e-15);
        assert!((out.x[1][k] - (x1[k] + 0.1 * (x1[k] - x0[k]))).abs() < 1e-15);
    }
    // h' = φ_h(...) = 1 for the constant stub.
    assert_eq!(out.h[0], vec![1.0; 3]);
}

#[test]
fn zero_upstream_gives_zero_parameter_gradients() {
    let mut rng = substream(3, "t");
    let mut layer = GgmpLayer::new(small_dims(), 0.1, &mut rng).unwrap();
    let g = random_pocket_graph(&mut rng, 6, 3);
    let state = random_state(&mut rng, &g, 5);
    layer.forward(&g, &state).unwrap();
    let grads = layer.backward(&g, &NodeState::zeros(6, 5)).unwrap();
    assert!(layer.collect_grads().iter().flatten().all(|&v| v == 0.0));
    assert!(grads.h.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn backward_without_forward_is_usage_error() {
    let mut rng = substream(3, "t");
    let mut layer = GgmpLayer::new(small_dims(), 0.1, &mut rng).unwrap();
    let g = random_pocket_graph(&mut rng, 4, 2);
    assert!(matches!(layer.backward(&g, &NodeState::zeros(4, 5)), Err(crate::Error::Usage(_))));
}

/// Weighted readout of every layer output, used as a scalar test loss.
struct Probe {
    wh: Vec<Vec<f64>>,
    wx: Vec<[f64; 3]>,
    wn: Vec<[f64; 3]>,
}

impl Probe {
    fn random(rng: &mut impl Rng, n: usize, d: usize) -> Self {
        let mut r3 = || [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let wx = (0..n).map(|_| r3()).collect();
        let wn = (0..n).map(|_| r3()).collect();
        Probe {
            wh: (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
            wx,
            wn,
        }
    }

    fn loss(&self, s: &NodeState) -> f64 {
        let mut l = 0.0;
        for i in 0..s.h.len() {
            l += dot(&self.wh[i], &s.h[i]);
            l += crate::biograph::geom::dot3(self.wx[i], s.x[i]);
            l += crate::biograph::geom::dot3(self.wn[i], s.n[i]);
        }
        l
    }

    fn upstream(&self) -> NodeState {
        NodeState {
            h: self.wh.clone(),
            x: self.wx.clone(),
            n: self.wn.clone(),
        }
    }
}

#[test]
fn layer_gradients_match_finite_differences() {
    let mut rng = substream(4, "t");
    for trial in 0..12 {
        let mut layer = GgmpLayer::new(small_dims(), 0.1, &mut rng).unwrap();
        let g = if trial % 2 == 0 {
            random_pocket_graph(&mut rng, 4 + trial % 3, 2)
        } else {
            random_ligand_graph(&mut rng, 5)
        };
        let state = random_state(&mut rng, &g, 5);
        let probe = Probe::random(&mut rng, g.node_count(), 5);
        let f = |l: &GgmpLayer, s: &NodeState| probe.loss(&l.forward_traced(&g, s).unwrap().0);

        layer.zero_grad();
        let (_, cache) = layer.forward_traced(&g, &state).unwrap();
        let input_grad = layer.backward_traced(&g, &cache, &probe.upstream());
        let analytic = layer.collect_grads().concat();
        let numeric = param_central_diff(&layer, 1e-5, |l| f(l, &state)).concat();
        let rep = compare(&analytic, &numeric, 1e-4, 1e-6);
        assert!(rep.passed(), "trial {trial} params: {rep:?}");

        let nx = vec_central_diff(&flat3(&state.x), 1e-5, |xs| {
            let mut s = state.clone();
            s.x = xs.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
            f(&layer, &s)
        });
        assert!(compare(&flat3(&input_grad.x), &nx, 1e-4, 1e-6).passed(), "trial {trial} X");
        let nn = vec_central_diff(&flat3(&state.n), 1e-5, |ns| {
            let mut s = state.clone();
            s.n = ns.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
            f(&layer, &s)
        });
        assert!(compare(&flat3(&input_grad.n), &nn, 1e-4, 1e-6).passed(), "trial {trial} N");
        let nh = vec_central_diff(&state.h.concat(), 1e-5, |hs| {
            let mut s = state.clone();
            s.h = hs.chunks(5).map(<[f64]>::to_vec).collect();
            f(&layer, &s)
        });
        assert!(compare(&input_grad.h.concat(), &nh, 1e-4, 1e-6).passed(), "trial {trial} H");
    }
}

#[test]
fn sum_of_features_loss_matches_finite_differences() {
    let mut rng = substream(5, "t");
    let mut layer = GgmpLayer::new(small_dims(), 0.1, &mut rng).unwrap();
    let g = random_pocket_graph(&mut rng, 4, 3);
    let state = random_state(&mut rng, &g, 5);
    layer.zero_grad();
    let (_, cache) = layer.forward_traced(&g, &state).unwrap();
    let mut up = NodeState::zeros(4, 5);
    up.h.iter_mut().for_each(|h| h.fill(1.0));
    layer.backward_traced(&g, &cache, &up);
    let numeric = param_central_diff(&layer, 1e-5, |l| {
        l.forward_traced(&g, &state).unwrap().0.h.iter().flatten().sum()
    });
    let rep = compare(&layer.collect_grads().concat(), &numeric.concat(), 1e-4, 1e-6);
    assert!(rep.passed(), "{rep:?}");
}

#[test]
fn position_loss_reaches_geometry_networks_only() {
    let mut rng = substream(6, "t");
    let mut layer = GgmpLayer::new(small_dims(), 0.1, &mut rng).unwrap();
    let g = random_pocket_graph(&mut rng, 5, 3);
    let state = random_state(&mut rng, &g, 5);
    layer.zero_grad();
    let (out, cache) = layer.forward_traced(&g, &state).unwrap();
    let mut up = NodeState::zeros(5, 5);
    up.x = out.x.iter().map(|x| [2.0 * x[0], 2.0 * x[1], 2.0 * x[2]]).collect();
    let dstate = layer.backward_traced(&g, &cache, &up);

    let total = |m: &mut Mlp| m.collect_grads().iter().flatten().map(|v| v.abs()).sum::<f64>();
    assert_eq!(total(&mut layer.phi_h), 0.0);
    assert!(total(&mut layer.phi_x) > 0.0);
    assert!(total(&mut layer.u) > 0.0);
    assert!(flat3(&dstate.x).iter().any(|&v| v != 0.0));

    let numeric = param_central_diff(&layer, 1e-5, |l| {
        l.forward_traced(&g, &state).unwrap().0.x.iter().flatten().map(|v| v * v).sum()
    });
    let rep = compare(&layer.collect_grads().concat(), &numeric.concat(), 1e-4, 1e-6);
    assert!(rep.passed(), "{rep:?}");
}

#[test]
fn layer_is_equivariant_under_orthogonal_motions() {
    let mut rng = substream(7, "t");
    for trial in 0..30 {
        let layer = GgmpLayer::new(small_dims(), 0.1, &mut rng).unwrap();
        let g = random_pocket_graph(&mut rng, 10, 4);
        let mut motion = RigidMotion::random(&mut rng, 10.0);
        if trial % 3 == 0 {
            motion = motion.reflected();
        }
        let moved = g.transformed(&motion);
        let state = random_state(&mut rng, &g, 5);
        let moved_state = NodeState {
            x: moved.coords.clone(),
            n: moved.directions.clone(),
            ..state.clone()
        };
        let a = layer.forward_traced(&g, &state).unwrap().0;
        let b = layer.forward_traced(&moved, &moved_state).unwrap().0;
        assert!(rel_err(&b.h.concat(), &a.h.concat()) < 1e-7);
        let ax: Vec<_> = a.x.iter().map(|&x| motion.apply(x)).collect();
        let an: Vec<_> = a.n.iter().map(|&n| motion.rotate(n)).collect();
        assert!(rel_err(&flat3(&b.x), &flat3(&ax)) < 1e-7);
        assert!(rel_err(&flat3(&b.n), &flat3(&an)) < 1e-7);
        for n in &b.n {
            let len = norm3(*n);
            assert!(len == 0.0 || (len - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn layer_is_permutation_equivariant() {
    let mut rng = substream(8, "t");
    let layer = GgmpLayer::new(small_dims(), 0.1, &mut rng).unwrap();
    let g = random_pocket_graph(&mut rng, 8, 3);
    let state = random_state(&mut rng, &g, 5);
    let mut perm: Vec<usize> = (0..8).collect();
    perm.reverse();
    perm.swap(0, 3);
    let pg = g.permuted(&perm);
    let pstate = NodeState {
        h: perm.iter().map(|&o| state.h[o].clone()).collect(),
        x: pg.coords.clone(),
        n: pg.directions.clone(),
    };
    let a = layer.forward_traced(&g, &state).unwrap().0;
    let b = layer.forward_traced(&pg, &pstate).unwrap().0;
    for (p, &o) in perm.iter().enumerate() {
        assert!(rel_err(&b.h[p], &a.h[o]) < 1e-12);
        assert!(rel_err(&b.x[p], &a.x[o]) < 1e-12);
    }
}

fn small_encoder(rng: &mut impl Rng, kind: GraphKind) -> GgmpEncoder {
    let cfg = EncoderConfig {
        depth: 2,
        node_dim: 5,
        message_dim: 4,
        hidden: 6,
        hidden_layers: 1,
        embed_dim: 4,
        lambda: 0.1,
    };
    GgmpEncoder::new(kind, &cfg, rng).unwrap()
}

#[test]
fn embeddings_are_unit_and_invariant() {
    let mut rng = substream(9, "t");
    for trial in 0..20 {
        let enc = small_encoder(&mut rng, GraphKind::Pocket);
        let g = random_pocket_graph(&mut rng, 12, 4);
        let h = enc.encode(&g).unwrap();
        assert!((crate::tensornn::norm(&h) - 1.0).abs() < 1e-9);

        let mut motion = RigidMotion::random(&mut rng, 15.0);
        if trial % 2 == 0 {
            motion = motion.reflected();
        }
        let moved = enc.encode(&g.transformed(&motion)).unwrap();
        assert!(rel_err(&moved, &h) < 1e-7);

        let mut perm: Vec<usize> = (0..12).collect();
        perm.rotate_left(5);
        let permuted = enc.encode(&g.permuted(&perm)).unwrap();
        assert!(rel_err(&permuted, &h) < 1e-9);
    }
}

#[test]
fn encoder_gradients_match_finite_differences() {
    let mut rng = substream(10, "t");
    for kind in [GraphKind::Pocket, GraphKind::Ligand] {
        let mut enc = small_encoder(&mut rng, kind);
        let g = match kind {
            GraphKind::Pocket => random_pocket_graph(&mut rng, 6, 3),
            GraphKind::Ligand => random_ligand_graph(&mut rng, 6),
        };
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        enc.zero_grad();
        let trace = enc.encode_traced(&g).unwrap();
        enc.backward_traced(&g, &trace, &c);
        let numeric = param_central_diff(&enc, 1e-5, |e| dot(&e.encode(&g).unwrap(), &c));
        let rep = compare(&enc.collect_grads().concat(), &numeric.concat(), 1e-4, 1e-6);
        assert!(rep.passed(), "{kind}: {rep:?}");
    }
}

#[test]
fn empty_graph_cannot_be_encoded() {
    let mut rng = substream(11, "t");
    let enc = small_encoder(&mut rng, GraphKind::Ligand);
    let g = BioGraph3D::new(GraphKind::Ligand, vec![], vec![], vec![], vec![]).unwrap();
    assert!(matches!(enc.encode(&g), Err(crate::Error::EmptyGraph)));
}

#[test]
fn energy_examples() {
    let mut rng = substream(12, "t");
    let g = random_pocket_graph(&mut rng, 6, 3);
    let zero_g = EnergyParams::new(
        EnergyParams::random(4, &mut rng).unwrap().u,
        Mlp::constant(2, &[0.0]),
    )
    .unwrap();
    assert_eq!(energy(&g, &zero_g).unwrap(), 0.0);

    let single = BioGraph3D::new(
        GraphKind::Ligand,
        vec![[0.0; 3], [1.0, 0.0, 0.0]],
        vec![vec![0.0; NODE_FEATURE_DIM]; 2],
        vec![(0, 1)],
        vec![vec![0.0; 4]],
    )
    .unwrap();
    let stubs = EnergyParams::new(
        Mlp::constant(2 * NODE_FEATURE_DIM + 4, &[2.0]),
        Mlp::constant(2, &[1.5]),
    )
    .unwrap();
    assert_eq!(energy(&single, &stubs).unwrap(), 3.0);

    let params = EnergyParams::random(5, &mut rng).unwrap();
    let mut brute = 0.0;
    for (&(i, j), e) in g.edges.iter().zip(&g.edge_features) {
        let mut chem = g.node_features[i].clone();
        chem.extend(&g.node_features[j]);
        chem.extend(e);
        let d2: f64 = (0..3).map(|k| (g.coords[i][k] - g.coords[j][k]).powi(2)).sum();
        let cos: f64 = (0..3).map(|k| g.directions[i][k] * g.directions[j][k]).sum();
        brute += params.u.predict(&chem).unwrap()[0] * params.g.predict(&[cos, d2]).unwrap()[0];
    }
    assert!((energy(&g, &params).unwrap() - brute).abs() < 1e-12 * brute.abs().max(1.0));
}

#[test]
fn energy_gradient_examples() {
    let mut rng = substream(13, "t");
    let g = random_pocket_graph(&mut rng, 6, 3);
    let const_g = EnergyParams::new(EnergyParams::random(4, &mut rng).unwrap().u, Mlp::constant(2, &[0.7])).unwrap();
    let (gx, _) = energy_grad_exact(&g, &const_g).unwrap();
    assert!(gx.iter().flatten().all(|&v| v == 0.0));

    // g(cos, d²) = d², u = 1 on both orientations of one bond.
    let pair = two_node_graph();
    let params = EnergyParams::new(
        Mlp::constant(2 * NODE_FEATURE_DIM + 4, &[1.0]),
        Mlp::single(DenseMatrix::from_vec(1, 2, vec![0.0, 1.0]).unwrap(), vec![0.0], crate::tensornn::Activation::Identity).unwrap(),
    )
    .unwrap();
    let (gx, _) = energy_grad_exact(&pair, &params).unwrap();
    let (x0, x1) = (pair.coords[0], pair.coords[1]);
    for k in 0..3 {
        assert_eq!(gx[0][k], 2.0 * (x0[k] - x1[k]) * 2.0);
        assert_eq!(gx[1][k], -gx[0][k]);
    }
}

#[test]
fn energy_gradients_match_finite_differences() {
    let mut rng = substream(14, "t");
    for _ in 0..10 {
        let g = random_pocket_graph(&mut rng, 7, 3);
        let params = EnergyParams::random(6, &mut rng).unwrap();
        let (gx, gn) = energy_grad_exact(&g, &params).unwrap();
        let (nx, nn) = crate::gradcheck::energy_central_diff(&g, &params, 1e-5).unwrap();
        let rep = compare(&flat3(&gx), &flat3(&nx), 1e-5, 1e-9);
        assert!(rep.passed(), "X: {rep:?}");
        let rep = compare(&flat3(&gn), &flat3(&nn), 1e-5, 1e-9);
        assert!(rep.passed(), "N: {rep:?}");
    }
}

//! Central finite-difference oracles and the gradient-verification suite behind
//! `geocon check-grad`.

use rand::Rng;

use crate::biograph::geom::Vec3;
use crate::biograph::BioGraph3D;
use crate::contrast::{loss, ContrastBatch, LossKind, LossParams};
use crate::ggmp::{energy_at, energy_grad_exact, EncoderConfig, EnergyParams, GgmpEncoder, GgmpLayer, LayerDims, NodeState};
use crate::rng::substream;
use crate::synth::{random_ligand_graph, random_pocket_graph};
use crate::tensornn::{dot, Activation, Mlp, Parameterized};
use crate::Result;

/// Outcome of comparing an analytic gradient with a numeric one.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub count: usize,
    pub failures: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub worst_index: Option<usize>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn merge(&mut self, other: &GradReport) {
        self.count += other.count;
        self.failures += other.failures;
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
    }

    pub fn empty() -> Self {
        GradReport {
            count: 0,
            failures: 0,
            max_abs_err: 0.0,
            max_rel_err: 0.0,
            worst_index: None,
        }
    }
}

/// An entry passes when it is within `abs_tol` absolutely or `rel_tol` relatively.
pub fn compare(analytic: &[f64], numeric: &[f64], rel_tol: f64, abs_tol: f64) -> GradReport {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    let mut report = GradReport::empty();
    report.count = analytic.len();
    let mut worst = 0.0;
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let abs = (a - n).abs();
        let scale = a.abs().max(n.abs());
        let rel = if scale > 0.0 { abs / scale } else { 0.0 };
        report.max_abs_err = report.max_abs_err.max(abs);
        if abs > abs_tol {
            report.max_rel_err = report.max_rel_err.max(rel);
        }
        let ok = abs <= abs_tol || rel <= rel_tol;
        if !ok {
            report.failures += 1;
            if rel > worst {
                worst = rel;
                report.worst_index = Some(i);
            }
        }
    }
    report
}

/// Central differences of `f` with respect to every coordinate of `x`.
pub fn vec_central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = probe[k];
            probe[k] = orig + h;
            let fp = f(&probe);
            probe[k] = orig - h;
            let fm = f(&probe);
            probe[k] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn set_param<P: Parameterized>(model: &mut P, tensor: usize, index: usize, value: f64) -> f64 {
    let mut old = f64::NAN;
    let mut t = 0;
    model.visit_params("", &mut |_, p, _| {
        if t == tensor {
            old = p[index];
            p[index] = value;
        }
        t += 1;
    });
    old
}

/// Central differences of `loss` with respect to every parameter of `model`,
/// grouped like [`Parameterized::collect_grads`].
pub fn param_central_diff<P: Parameterized + Clone>(
    model: &P,
    h: f64,
    loss: impl Fn(&P) -> f64,
) -> Vec<Vec<f64>> {
    let mut probe = model.clone();
    let mut sizes = Vec::new();
    probe.visit_params("", &mut |_, p, _| sizes.push(p.len()));
    sizes
        .iter()
        .enumerate()
        .map(|(t, &n)| {
            (0..n)
                .map(|k| {
                    let orig = set_param(&mut probe, t, k, f64::NAN);
                    set_param(&mut probe, t, k, orig + h);
                    let fp = loss(&probe);
                    set_param(&mut probe, t, k, orig - h);
                    let fm = loss(&probe);
                    set_param(&mut probe, t, k, orig);
                    (fp - fm) / (2.0 * h)
                })
                .collect()
        })
        .collect()
}


/// Central differences of the energy in every coordinate and direction
/// component. Only the edges touching the perturbed node are re-summed, which
/// leaves the derivative unchanged and keeps cancellation error small.
pub fn energy_central_diff(graph: &BioGraph3D, params: &EnergyParams, h: f64) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    let n = graph.node_count();
    let (mut gx, mut gn) = (vec![[0.0; 3]; n], vec![[0.0; 3]; n]);
    for node in 0..n {
        let keep: Vec<usize> = (0..graph.edge_count())
            .filter(|&e| graph.edges[e].0 == node || graph.edges[e].1 == node)
            .collect();
        let local = BioGraph3D {
            edges: keep.iter().map(|&e| graph.edges[e]).collect(),
            edge_features: keep.iter().map(|&e| graph.edge_features[e].clone()).collect(),
            ..graph.clone()
        };
        for k in 0..3 {
            let (mut xp, mut xm) = (graph.coords.clone(), graph.coords.clone());
            xp[node][k] += h;
            xm[node][k] -= h;
            gx[node][k] = (energy_at(&local, &xp, &graph.directions, params)?
                - energy_at(&local, &xm, &graph.directions, params)?)
                / (2.0 * h);
            let (mut np, mut nm) = (graph.directions.clone(), graph.directions.clone());
            np[node][k] += h;
            nm[node][k] -= h;
            gn[node][k] = (energy_at(&local, &graph.coords, &np, params)?
                - energy_at(&local, &graph.coords, &nm, params)?)
                / (2.0 * h);
        }
    }
    Ok((gx, gn))
}

/// Sizes of the verification suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub energy_graphs: usize,
    pub cases: usize,
    pub encoder_cases: usize,
}

impl SuiteConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            energy_graphs: 50,
            cases: 200,
            encoder_cases: 20,
        }
    }
}

/// Tolerances: energy 1e-5 relative; everything else 1e-4 relative or 1e-6
/// absolute.
pub const ENERGY_REL_TOL: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_TOL: f64 = 1e-6;
const STEP: f64 = 1e-5;

fn flat(v: &[Vec3]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

fn unflat(v: &[f64]) -> Vec<Vec3> {
    v.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = crate::tensornn::norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

fn random_graph<R: Rng + ?Sized>(rng: &mut R) -> BioGraph3D {
    if rng.random_bool(0.5) {
        let (n, k) = (rng.random_range(3..7), rng.random_range(2..4));
        random_pocket_graph(rng, n, k)
    } else {
        let n = rng.random_range(3..7);
        random_ligand_graph(rng, n)
    }
}

fn check_energy(cfg: &SuiteConfig) -> Result<GradReport> {
    let mut rng = substream(cfg.seed, "suite/energy");
    let mut total = GradReport::empty();
    for _ in 0..cfg.energy_graphs {
        let n = rng.random_range(4..10);
        let g = random_pocket_graph(&mut rng, n, 3);
        let params = EnergyParams::random(6, &mut rng)?;
        let (ax, an) = energy_grad_exact(&g, &params)?;
        let (nx, nn) = energy_central_diff(&g, &params, STEP)?;
        total.merge(&compare(&flat(&ax), &flat(&nx), ENERGY_REL_TOL, 1e-9));
        total.merge(&compare(&flat(&an), &flat(&nn), ENERGY_REL_TOL, 1e-9));
    }
    Ok(total)
}

fn check_loss(cfg: &SuiteConfig, kind: LossKind) -> Result<GradReport> {
    let mut rng = substream(cfg.seed, &format!("suite/loss/{kind}"));
    let mut total = GradReport::empty();
    for _ in 0..cfg.cases {
        let d = rng.random_range(2..9);
        let n = rng.random_range(1..8);
        let params = LossParams {
            gamma: rng.random_range(0.5..3.0),
            tau: rng.random_range(0.0..0.3),
            tau_plus: rng.random_range(0.0..0.3),
            q: rng.random_bool(0.5).then(|| rng.random_range(0.5..4.0)),
            chem_scale: rng.random_range(0.5..2.0),
        };
        let b = ContrastBatch::new(
            random_unit(&mut rng, d),
            random_unit(&mut rng, d),
            (0..n).map(|_| random_unit(&mut rng, d)).collect(),
            (0..n).map(|_| if rng.random_bool(0.2) { 1.0 } else { rng.random_range(0.0..1.0) }).collect(),
            params,
        )?;
        let rep = loss(kind, &b);
        let with = |f: &dyn Fn(&mut ContrastBatch)| {
            let mut c = b.clone();
            f(&mut c);
            loss(kind, &c).loss
        };
        let na = vec_central_diff(&b.anchor, STEP, |v| with(&|c| c.anchor = v.to_vec()));
        total.merge(&compare(&rep.grad_anchor, &na, REL_TOL, ABS_TOL));
        let np = vec_central_diff(&b.positive, STEP, |v| with(&|c| c.positive = v.to_vec()));
        total.merge(&compare(&rep.grad_positive, &np, REL_TOL, ABS_TOL));
        for i in 0..n {
            let nn = vec_central_diff(&b.negatives[i], STEP, |v| with(&|c| c.negatives[i] = v.to_vec()));
            total.merge(&compare(&rep.grad_negatives[i], &nn, REL_TOL, ABS_TOL));
        }
    }
    Ok(total)
}

fn check_mlp(cfg: &SuiteConfig) -> Result<GradReport> {
    let mut rng = substream(cfg.seed, "suite/mlp");
    let mut total = GradReport::empty();
    let smooth = [Activation::Silu, Activation::Tanh];
    let outputs = [Activation::Identity, Activation::Tanh, Activation::Silu];
    for _ in 0..cfg.cases {
        let widths: Vec<usize> = (0..rng.random_range(2..5)).map(|_| rng.random_range(1..7)).collect();
        let hidden = smooth[rng.random_range(0..smooth.len())];
        let out = outputs[rng.random_range(0..outputs.len())];
        let mut net = Mlp::new(&widths, hidden, out, &mut rng)?;
        let x: Vec<f64> = (0..widths[0]).map(|_| rng.random_range(-1.5..1.5)).collect();
        let c: Vec<f64> = (0..*widths.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
        net.zero_grad();
        let (_, trace) = net.forward_traced(&x)?;
        let dx = net.backward_traced(&trace, &c);
        let numeric = param_central_diff(&net, STEP, |m| dot(&m.predict(&x).unwrap(), &c));
        total.merge(&compare(&net.collect_grads().concat(), &numeric.concat(), REL_TOL, ABS_TOL));
        let nx = vec_central_diff(&x, STEP, |v| dot(&net.predict(v).unwrap(), &c));
        total.merge(&compare(&dx, &nx, REL_TOL, ABS_TOL));
    }
    Ok(total)
}

fn check_layer(cfg: &SuiteConfig) -> Result<GradReport> {
    let mut rng = substream(cfg.seed, "suite/ggmp_layer");
    let mut total = GradReport::empty();
    for _ in 0..cfg.cases {
        let dims = LayerDims {
            node: rng.random_range(2..6),
            message: rng.random_range(2..5),
            hidden: rng.random_range(3..7),
            hidden_layers: 1,
        };
        let mut layer = GgmpLayer::new(dims, rng.random_range(0.01..0.3), &mut rng)?;
        let g = random_graph(&mut rng);
        let n = g.node_count();
        let state = NodeState {
            h: (0..n).map(|_| (0..dims.node).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
            x: g.coords.clone(),
            n: g.directions.clone(),
        };
        let mut r = || rng.random_range(-1.0..1.0);
        let up = NodeState {
            h: (0..n).map(|_| (0..dims.node).map(|_| r()).collect()).collect(),
            x: (0..n).map(|_| [r(), r(), r()]).collect(),
            n: (0..n).map(|_| [r(), r(), r()]).collect(),
        };
        let probe = |s: &NodeState| -> f64 {
            (0..n)
                .map(|i| dot(&up.h[i], &s.h[i]) + dot(&up.x[i], &s.x[i]) + dot(&up.n[i], &s.n[i]))
                .sum()
        };
        layer.zero_grad();
        let (_, cache) = layer.forward_traced(&g, &state)?;
        let din = layer.backward_traced(&g, &cache, &up);
        let f = |l: &GgmpLayer, s: &NodeState| probe(&l.forward_traced(&g, s).unwrap().0);
        let numeric = param_central_diff(&layer, STEP, |l| f(l, &state));
        total.merge(&compare(&layer.collect_grads().concat(), &numeric.concat(), REL_TOL, ABS_TOL));
        let nx = vec_central_diff(&flat(&state.x), STEP, |v| f(&layer, &NodeState { x: unflat(v), ..state.clone() }));
        total.merge(&compare(&flat(&din.x), &nx, REL_TOL, ABS_TOL));
        let nn = vec_central_diff(&flat(&state.n), STEP, |v| f(&layer, &NodeState { n: unflat(v), ..state.clone() }));
        total.merge(&compare(&flat(&din.n), &nn, REL_TOL, ABS_TOL));
        let nh = vec_central_diff(&state.h.concat(), STEP, |v| {
            f(&layer, &NodeState { h: v.chunks(dims.node).map(<[f64]>::to_vec).collect(), ..state.clone() })
        });
        total.merge(&compare(&din.h.concat(), &nh, REL_TOL, ABS_TOL));
    }
    Ok(total)
}

fn check_encoder(cfg: &SuiteConfig) -> Result<GradReport> {
    let mut rng = substream(cfg.seed, "suite/encoder");
    let mut total = GradReport::empty();
    for _ in 0..cfg.encoder_cases {
        let g = random_graph(&mut rng);
        let ecfg = EncoderConfig {
            depth: rng.random_range(1..3),
            node_dim: 4,
            message_dim: 3,
            hidden: 4,
            hidden_layers: 1,
            embed_dim: 3,
            lambda: 0.1,
        };
        let mut enc = GgmpEncoder::new(g.kind, &ecfg, &mut rng)?;
        let c = random_unit(&mut rng, 3);
        enc.zero_grad();
        let trace = enc.encode_traced(&g)?;
        enc.backward_traced(&g, &trace, &c);
        let numeric = param_central_diff(&enc, STEP, |e| dot(&e.encode(&g).unwrap(), &c));
        total.merge(&compare(&enc.collect_grads().concat(), &numeric.concat(), REL_TOL, ABS_TOL));
    }
    Ok(total)
}

/// Every analytic gradient in the crate against central differences.
/// Returns one named report per component.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<(String, GradReport)>> {
    let mut out = vec![("energy".to_string(), check_energy(cfg)?)];
    for kind in [LossKind::Uni, LossKind::InfoNce, LossKind::Debiased, LossKind::Chem] {
        out.push((format!("loss/{kind}"), check_loss(cfg, kind)?));
    }
    out.push(("mlp".into(), check_mlp(cfg)?));
    out.push(("ggmp_layer".into(), check_layer(cfg)?));
    out.push(("ggmp_encoder".into(), check_encoder(cfg)?));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_cubic() {
        let g = vec_central_diff(&[2.0, -1.0], 1e-5, |x| x[0].powi(3) + 4.0 * x[1]);
        assert!((g[0] - 12.0).abs() < 1e-8);
        assert!((g[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn compare_counts_failures() {
        let r = compare(&[1.0, 2.0, 0.0], &[1.0, 2.1, 1e-9], 1e-4, 1e-6);
        assert_eq!(r.failures, 1);
        assert_eq!(r.worst_index, Some(1));
    }

    #[test]
    fn reduced_suite_passes() {
        let cfg = SuiteConfig {
            seed: 3,
            energy_graphs: 5,
            cases: 10,
            encoder_cases: 2,
        };
        for (name, rep) in run_suite(&cfg).unwrap() {
            assert!(rep.count > 0, "{name}");
            assert!(rep.passed(), "{name}: {rep:?}");
        }
    }
}

//! Gated geometric message passing.
//!
//! One layer maps `(H, X, N)` to `(H', X', N')` over a fixed edge set:
//!
//! ```text
//! m_ij = φ_m(h_i ‖ h_j ‖ e_ij)
//! g_ij = φ_g(d_ij², ⟨n_i, n_j⟩)
//! h_i' = φ_h(h_i ‖ Σ_j m_ij ⊙ g_ij)
//! x_i' = x_i + λ Σ_j u(m_ij) φ_x(g_ij) (x_i − x_j)
//! n_i' = normalize(n_i + λ Σ_j u(m_ij) φ_n(g_ij) n_j)
//! ```
//!
//! Geometry only enters through squared distances, inner products and linear
//! combinations of relative vectors, so node features are invariant and
//! positions/directions equivariant under any orthogonal motion.

mod encoder;
mod energy;

pub use encoder::{EncoderConfig, EncoderTrace, GgmpEncoder};
pub use energy::{energy, energy_at, energy_grad_exact, EnergyParams};

use rand::Rng;

use crate::biograph::geom::{dot3, Vec3};
use crate::biograph::{BioGraph3D, EDGE_FEATURE_DIM};
use crate::tensornn::{join_name, Activation, Mlp, MlpTrace, Parameterized};
use crate::{Error, Result};

/// Directions shorter than this after the update collapse to the zero vector.
const RENORM_EPS: f64 = 1e-12;

/// Per-node state carried between layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub h: Vec<Vec<f64>>,
    pub x: Vec<Vec3>,
    pub n: Vec<Vec3>,
}

impl NodeState {
    pub fn zeros(nodes: usize, width: usize) -> Self {
        Self {
            h: vec![vec![0.0; width]; nodes],
            x: vec![[0.0; 3]; nodes],
            n: vec![[0.0; 3]; nodes],
        }
    }

    fn first_non_finite(&self) -> Option<usize> {
        (0..self.h.len()).find(|&i| {
            self.h[i].iter().any(|v| !v.is_finite())
                || self.x[i].iter().any(|v| !v.is_finite())
                || self.n[i].iter().any(|v| !v.is_finite())
        })
    }
}

/// Width settings for one layer's sub-networks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerDims {
    /// Node feature width `d_h` (input and output).
    pub node: usize,
    /// Message/gate width `d_m`.
    pub message: usize,
    /// Width of every hidden layer inside the φ networks.
    pub hidden: usize,
    /// Hidden layers per φ network.
    pub hidden_layers: usize,
}

#[derive(Debug, Clone)]
pub struct GgmpLayer {
    pub phi_m: Mlp,
    pub phi_g: Mlp,
    pub phi_h: Mlp,
    pub u: Mlp,
    pub phi_x: Mlp,
    pub phi_n: Mlp,
    pub lambda: f64,
    cache: Option<LayerCache>,
}

#[derive(Debug, Clone)]
struct EdgeCache {
    m: Vec<f64>,
    g: Vec<f64>,
    weight: f64,
    px: f64,
    pn: f64,
    rel: Vec3,
    tr_m: MlpTrace,
    tr_g: MlpTrace,
    tr_u: MlpTrace,
    tr_x: MlpTrace,
    tr_n: MlpTrace,
}

/// Everything the backward pass needs from one forward application.
#[derive(Debug, Clone)]
pub struct LayerCache {
    input: NodeState,
    output_n: Vec<Vec3>,
    edges: Vec<EdgeCache>,
    node_traces: Vec<MlpTrace>,
    /// `|ñ_i|` before renormalization, or 0 when the node collapsed to zero.
    pre_norm: Vec<f64>,
}

impl GgmpLayer {
    pub fn new<R: Rng + ?Sized>(dims: LayerDims, lambda: f64, rng: &mut R) -> Result<Self> {
        let hidden = vec![dims.hidden; dims.hidden_layers];
        let widths = |input: usize, output: usize| -> Vec<usize> {
            let mut w = vec![input];
            w.extend(&hidden);
            w.push(output);
            w
        };
        let act = Activation::Silu;
        Self::from_parts(
            Mlp::new(&widths(2 * dims.node + EDGE_FEATURE_DIM, dims.message), act, act, rng)?,
            Mlp::new(&widths(2, dims.message), act, Activation::Tanh, rng)?,
            Mlp::new(&widths(dims.node + dims.message, dims.node), act, Activation::Identity, rng)?,
            Mlp::new(&widths(dims.message, 1), act, Activation::Tanh, rng)?,
            Mlp::new(&widths(dims.message, 1), act, Activation::Identity, rng)?,
            Mlp::new(&widths(dims.message, 1), act, Activation::Identity, rng)?,
            lambda,
        )
    }

    /// Assembles a layer from explicit sub-networks, checking that widths chain.
    pub fn from_parts(
        phi_m: Mlp,
        phi_g: Mlp,
        phi_h: Mlp,
        u: Mlp,
        phi_x: Mlp,
        phi_n: Mlp,
        lambda: f64,
    ) -> Result<Self> {
        let d_m = phi_m.output_dim();
        let d_h = phi_h.output_dim();
        let checks = [
            (phi_m.input_dim() == 2 * d_h + EDGE_FEATURE_DIM, "φ_m input must be 2·d_h + edge width"),
            (phi_g.input_dim() == 2, "φ_g takes (d², ⟨n_i,n_j⟩)"),
            (phi_g.output_dim() == d_m, "φ_g and φ_m widths differ"),
            (phi_h.input_dim() == d_h + d_m, "φ_h input must be d_h + d_m"),
            (u.input_dim() == d_m && u.output_dim() == 1, "u must map d_m to a scalar"),
            (phi_x.input_dim() == d_m && phi_x.output_dim() == 1, "φ_x must map d_m to a scalar"),
            (phi_n.input_dim() == d_m && phi_n.output_dim() == 1, "φ_n must map d_m to a scalar"),
            (lambda.is_finite() && lambda >= 0.0, "λ must be finite and non-negative"),
        ];
        if let Some((_, msg)) = checks.iter().find(|(ok, _)| !ok) {
            return Err(Error::Config(msg.to_string()));
        }
        Ok(Self {
            phi_m,
            phi_g,
            phi_h,
            u,
            phi_x,
            phi_n,
            lambda,
            cache: None,
        })
    }

    pub fn node_dim(&self) -> usize {
        self.phi_h.output_dim()
    }

    pub fn message_dim(&self) -> usize {
        self.phi_m.output_dim()
    }

    /// Applies the layer to `state` over `graph`'s edges and edge features.
    pub fn forward_traced(
        &self,
        graph: &BioGraph3D,
        state: &NodeState,
    ) -> Result<(NodeState, LayerCache)> {
        let n_nodes = graph.node_count();
        let d_h = self.node_dim();
        let d_m = self.message_dim();
        if state.h.len() != n_nodes || state.x.len() != n_nodes || state.n.len() != n_nodes {
            return Err(Error::Config(format!(
                "node state has {} rows, graph has {n_nodes} nodes",
                state.h.len()
            )));
        }
        if let Some(i) = state.h.iter().position(|h| h.len() != d_h) {
            return Err(Error::Config(format!("node {i} feature width differs from d_h = {d_h}")));
        }

        let mut agg = vec![vec![0.0; d_m]; n_nodes];
        let mut dx = vec![[0.0; 3]; n_nodes];
        let mut dn = vec![[0.0; 3]; n_nodes];
        let mut edges = Vec::with_capacity(graph.edge_count());
        let mut msg_in = Vec::with_capacity(2 * d_h + EDGE_FEATURE_DIM);
        for (&(i, j), e) in graph.edges.iter().zip(&graph.edge_features) {
            msg_in.clear();
            msg_in.extend_from_slice(&state.h[i]);
            msg_in.extend_from_slice(&state.h[j]);
            msg_in.extend_from_slice(e);
            let (m, tr_m) = self.phi_m.forward_traced(&msg_in)?;

            let rel = crate::biograph::geom::sub(state.x[i], state.x[j]);
            let d2 = dot3(rel, rel);
            let cos = dot3(state.n[i], state.n[j]);
            let (g, tr_g) = self.phi_g.forward_traced(&[d2, cos])?;

            for ((a, mk), gk) in agg[i].iter_mut().zip(&m).zip(&g) {
                *a += mk * gk;
            }
            let (wu, tr_u) = self.u.forward_traced(&m)?;
            let (px, tr_x) = self.phi_x.forward_traced(&g)?;
            let (pn, tr_n) = self.phi_n.forward_traced(&g)?;
            let (weight, px, pn) = (wu[0], px[0], pn[0]);
            for k in 0..3 {
                dx[i][k] += weight * px * rel[k];
                dn[i][k] += weight * pn * state.n[j][k];
            }
            edges.push(EdgeCache {
                m,
                g,
                weight,
                px,
                pn,
                rel,
                tr_m,
                tr_g,
                tr_u,
                tr_x,
                tr_n,
            });
        }

        let mut out = NodeState {
            h: Vec::with_capacity(n_nodes),
            x: Vec::with_capacity(n_nodes),
            n: Vec::with_capacity(n_nodes),
        };
        let mut node_traces = Vec::with_capacity(n_nodes);
        let mut pre_norm = vec![1.0; n_nodes];
        let mut upd_in = Vec::with_capacity(d_h + d_m);
        for i in 0..n_nodes {
            upd_in.clear();
            upd_in.extend_from_slice(&state.h[i]);
            upd_in.extend_from_slice(&agg[i]);
            let (h, tr) = self.phi_h.forward_traced(&upd_in)?;
            out.h.push(h);
            node_traces.push(tr);
            if self.lambda == 0.0 {
                out.x.push(state.x[i]);
                out.n.push(state.n[i]);
                continue;
            }
            let lam = self.lambda;
            out.x.push([
                state.x[i][0] + lam * dx[i][0],
                state.x[i][1] + lam * dx[i][1],
                state.x[i][2] + lam * dx[i][2],
            ]);
            let nt = [
                state.n[i][0] + lam * dn[i][0],
                state.n[i][1] + lam * dn[i][1],
                state.n[i][2] + lam * dn[i][2],
            ];
            let len = dot3(nt, nt).sqrt();
            if len > RENORM_EPS {
                pre_norm[i] = len;
                out.n.push([nt[0] / len, nt[1] / len, nt[2] / len]);
            } else {
                pre_norm[i] = 0.0;
                out.n.push([0.0; 3]);
            }
        }

        if let Some(i) = out.first_non_finite() {
            return Err(Error::NumericalFault(format!("non-finite GGMP output at node {i}")));
        }
        let cache = LayerCache {
            input: state.clone(),
            output_n: out.n.clone(),
            edges,
            node_traces,
            pre_norm,
        };
        Ok((out, cache))
    }

    /// Backpropagates `upstream` (gradients w.r.t. `H'`, `X'`, `N'`) through one
    /// cached application. Parameter gradients accumulate into the sub-networks;
    /// the returned state holds gradients w.r.t. the layer inputs `H`, `X`, `N`.
    pub fn backward_traced(
        &mut self,
        graph: &BioGraph3D,
        cache: &LayerCache,
        upstream: &NodeState,
    ) -> NodeState {
        let n_nodes = graph.node_count();
        let d_h = self.node_dim();
        let lam = self.lambda;
        let mut grad = NodeState::zeros(n_nodes, d_h);

        // Gradients w.r.t. the aggregated displacement Δx_i and Δn_i.
        let mut g_dx = vec![[0.0; 3]; n_nodes];
        let mut g_dn = vec![[0.0; 3]; n_nodes];
        let mut g_agg: Vec<Vec<f64>> = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes {
            let d_in = self.phi_h.backward_traced(&cache.node_traces[i], &upstream.h[i]);
            let (dh, dagg) = d_in.split_at(d_h);
            grad.h[i].copy_from_slice(dh);
            g_agg.push(dagg.to_vec());

            grad.x[i] = upstream.x[i];
            if lam == 0.0 {
                grad.n[i] = upstream.n[i];
                continue;
            }
            g_dx[i] = [lam * upstream.x[i][0], lam * upstream.x[i][1], lam * upstream.x[i][2]];
            let s = cache.pre_norm[i];
            let dnt = if s > 0.0 {
                let np = cache.output_n[i];
                let proj = dot3(np, upstream.n[i]);
                [
                    (upstream.n[i][0] - np[0] * proj) / s,
                    (upstream.n[i][1] - np[1] * proj) / s,
                    (upstream.n[i][2] - np[2] * proj) / s,
                ]
            } else {
                [0.0; 3]
            };
            grad.n[i] = dnt;
            g_dn[i] = [lam * dnt[0], lam * dnt[1], lam * dnt[2]];
        }

        let input = &cache.input;
        for (&(i, j), ec) in graph.edges.iter().zip(&cache.edges) {
            let nj = input.n[j];
            let along_x = dot3(g_dx[i], ec.rel);
            let along_n = dot3(g_dn[i], nj);
            let d_weight = ec.px * along_x + ec.pn * along_n;
            let d_px = ec.weight * along_x;
            let d_pn = ec.weight * along_n;
            let wp = ec.weight * ec.px;
            let wn = ec.weight * ec.pn;
            for k in 0..3 {
                grad.x[i][k] += wp * g_dx[i][k];
                grad.x[j][k] -= wp * g_dx[i][k];
                grad.n[j][k] += wn * g_dn[i][k];
            }

            // m ⊙ g aggregation plus the u(m) branch.
            let mut d_m: Vec<f64> = g_agg[i].iter().zip(&ec.g).map(|(a, g)| a * g).collect();
            let mut d_g: Vec<f64> = g_agg[i].iter().zip(&ec.m).map(|(a, m)| a * m).collect();
            if d_weight != 0.0 {
                let from_u = self.u.backward_traced(&ec.tr_u, &[d_weight]);
                d_m.iter_mut().zip(&from_u).for_each(|(a, b)| *a += b);
            }
            if d_px != 0.0 {
                let from_x = self.phi_x.backward_traced(&ec.tr_x, &[d_px]);
                d_g.iter_mut().zip(&from_x).for_each(|(a, b)| *a += b);
            }
            if d_pn != 0.0 {
                let from_n = self.phi_n.backward_traced(&ec.tr_n, &[d_pn]);
                d_g.iter_mut().zip(&from_n).for_each(|(a, b)| *a += b);
            }

            let geo = self.phi_g.backward_traced(&ec.tr_g, &d_g);
            let (d_d2, d_cos) = (geo[0], geo[1]);
            let ni = input.n[i];
            for k in 0..3 {
                let t = 2.0 * d_d2 * ec.rel[k];
                grad.x[i][k] += t;
                grad.x[j][k] -= t;
                grad.n[i][k] += d_cos * nj[k];
                grad.n[j][k] += d_cos * ni[k];
            }

            let d_in = self.phi_m.backward_traced(&ec.tr_m, &d_m);
            for k in 0..d_h {
                grad.h[i][k] += d_in[k];
                grad.h[j][k] += d_in[d_h + k];
            }
        }
        grad
    }

    /// Forward pass that caches its state for [`GgmpLayer::backward`].
    pub fn forward(&mut self, graph: &BioGraph3D, state: &NodeState) -> Result<NodeState> {
        let (out, cache) = self.forward_traced(graph, state)?;
        self.cache = Some(cache);
        Ok(out)
    }

    pub fn backward(&mut self, graph: &BioGraph3D, upstream: &NodeState) -> Result<NodeState> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("GGMP backward called without a cached forward".into()))?;
        if cache.node_traces.len() != graph.node_count() || upstream.h.len() != graph.node_count() {
            return Err(Error::Config("upstream gradient does not match the cached graph".into()));
        }
        Ok(self.backward_traced(graph, &cache, upstream))
    }
}

impl Parameterized for GgmpLayer {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64], &mut [f64])) {
        self.phi_m.visit_params(&join_name(prefix, "phi_m"), f);
        self.phi_g.visit_params(&join_name(prefix, "phi_g"), f);
        self.phi_h.visit_params(&join_name(prefix, "phi_h"), f);
        self.u.visit_params(&join_name(prefix, "u"), f);
        self.phi_x.visit_params(&join_name(prefix, "phi_x"), f);
        self.phi_n.visit_params(&join_name(prefix, "phi_n"), f);
    }
}

/// One layer applied to the graph's own coordinates and directions.
pub fn ggmp_forward(layer: &GgmpLayer, graph: &BioGraph3D, h: &[Vec<f64>]) -> Result<NodeState> {
    let state = NodeState {
        h: h.to_vec(),
        x: graph.coords.clone(),
        n: graph.directions.clone(),
    };
    layer.forward_traced(graph, &state).map(|(out, _)| out)
}

#[cfg(test)]
mod tests;

use rand::Rng;

use super::{GgmpLayer, LayerCache, LayerDims, NodeState};
use crate::biograph::{BioGraph3D, GraphKind, NODE_FEATURE_DIM};
use crate::tensornn::{join_name, norm, Activation, Mlp, MlpTrace, Parameterized};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    /// Number of stacked GGMP layers `T`.
    pub depth: usize,
    /// Node feature width `d_h`.
    pub node_dim: usize,
    /// Message/gate width `d_m`.
    pub message_dim: usize,
    /// Hidden width inside every φ network and the readout.
    pub hidden: usize,
    pub hidden_layers: usize,
    /// Output embedding width.
    pub embed_dim: usize,
    pub lambda: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            node_dim: 64,
            message_dim: 64,
            hidden: 64,
            hidden_layers: 2,
            embed_dim: 64,
            lambda: 0.1,
        }
    }
}

/// Stacked GGMP layers with an input embedding, mean pooling and a readout MLP.
/// Output embeddings are unit length.
#[derive(Debug, Clone)]
pub struct GgmpEncoder {
    pub kind: GraphKind,
    pub embed: Mlp,
    pub layers: Vec<GgmpLayer>,
    pub readout: Mlp,
}

pub struct EncoderTrace {
    embed: Vec<MlpTrace>,
    layers: Vec<LayerCache>,
    readout: MlpTrace,
    output: Vec<f64>,
    raw_norm: f64,
    nodes: usize,
}

impl EncoderTrace {
    pub fn embedding(&self) -> &[f64] {
        &self.output
    }
}

impl GgmpEncoder {
    pub fn new<R: Rng + ?Sized>(kind: GraphKind, cfg: &EncoderConfig, rng: &mut R) -> Result<Self> {
        if cfg.depth == 0 || cfg.embed_dim == 0 {
            return Err(Error::Config("encoder depth and embedding width must be positive".into()));
        }
        let dims = LayerDims {
            node: cfg.node_dim,
            message: cfg.message_dim,
            hidden: cfg.hidden,
            hidden_layers: cfg.hidden_layers,
        };
        let embed = Mlp::new(
            &[NODE_FEATURE_DIM, cfg.node_dim],
            Activation::Silu,
            Activation::Identity,
            rng,
        )?;
        let layers = (0..cfg.depth)
            .map(|_| GgmpLayer::new(dims, cfg.lambda, rng))
            .collect::<Result<Vec<_>>>()?;
        let readout = Mlp::new(
            &[cfg.node_dim, cfg.hidden, cfg.embed_dim],
            Activation::Silu,
            Activation::Identity,
            rng,
        )?;
        Ok(Self {
            kind,
            embed,
            layers,
            readout,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.readout.output_dim()
    }

    pub fn encode(&self, graph: &BioGraph3D) -> Result<Vec<f64>> {
        self.encode_traced(graph).map(|t| t.output)
    }

    pub fn encode_traced(&self, graph: &BioGraph3D) -> Result<EncoderTrace> {
        let n = graph.node_count();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut embed = Vec::with_capacity(n);
        let mut h = Vec::with_capacity(n);
        for v in &graph.node_features {
            let (hi, tr) = self.embed.forward_traced(v)?;
            h.push(hi);
            embed.push(tr);
        }
        let mut state = NodeState {
            h,
            x: graph.coords.clone(),
            n: graph.directions.clone(),
        };
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = layer.forward_traced(graph, &state)?;
            layers.push(cache);
            state = next;
        }
        let width = state.h[0].len();
        let mut pooled = vec![0.0; width];
        for hi in &state.h {
            pooled.iter_mut().zip(hi).for_each(|(p, v)| *p += v);
        }
        pooled.iter_mut().for_each(|p| *p /= n as f64);
        let (z, readout) = self.readout.forward_traced(&pooled)?;
        let raw_norm = norm(&z);
        if !(raw_norm.is_finite() && raw_norm > 0.0) {
            return Err(Error::NumericalFault(format!(
                "readout norm is {raw_norm}; cannot normalize the embedding"
            )));
        }
        Ok(EncoderTrace {
            embed,
            layers,
            readout,
            output: z.iter().map(|v| v / raw_norm).collect(),
            raw_norm,
            nodes: n,
        })
    }

    /// Accumulates parameter gradients for `d_embedding` (gradient of some loss
    /// w.r.t. the unit embedding) and returns the gradients w.r.t. the input
    /// coordinates and directions.
    pub fn backward_traced(
        &mut self,
        graph: &BioGraph3D,
        trace: &EncoderTrace,
        d_embedding: &[f64],
    ) -> NodeState {
        let out = &trace.output;
        let proj: f64 = out.iter().zip(d_embedding).map(|(a, b)| a * b).sum();
        let dz: Vec<f64> = out
            .iter()
            .zip(d_embedding)
            .map(|(o, d)| (d - o * proj) / trace.raw_norm)
            .collect();
        let d_pooled = self.readout.backward_traced(&trace.readout, &dz);
        let per_node: Vec<f64> = d_pooled.iter().map(|v| v / trace.nodes as f64).collect();
        let mut grad = NodeState {
            h: vec![per_node; trace.nodes],
            x: vec![[0.0; 3]; trace.nodes],
            n: vec![[0.0; 3]; trace.nodes],
        };
        for (layer, cache) in self.layers.iter_mut().zip(&trace.layers).rev() {
            grad = layer.backward_traced(graph, cache, &grad);
        }
        for (tr, dh) in trace.embed.iter().zip(&grad.h) {
            self.embed.backward_traced(tr, dh);
        }
        grad
    }
}

impl Parameterized for GgmpEncoder {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64], &mut [f64])) {
        self.embed.visit_params(&join_name(prefix, "embed"), f);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_params(&join_name(prefix, &format!("layer{i}")), f);
        }
        self.readout.visit_params(&join_name(prefix, "readout"), f);
    }
}

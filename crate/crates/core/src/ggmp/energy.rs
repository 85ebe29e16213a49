//! Pairwise energy `E = Σ_(i,j)∈ℰ u(v_i, v_j, e_ij) · g(⟨n_i,n_j⟩, d_ij²)` and its
//! exact gradients with respect to positions and directions. This is the
//! reference the learned position/direction updates approximate; it is used for
//! verification only.

use rand::Rng;

use crate::biograph::geom::{dot3, sub, Vec3};
use crate::biograph::{BioGraph3D, EDGE_FEATURE_DIM, NODE_FEATURE_DIM};
use crate::tensornn::{Activation, Mlp};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct EnergyParams {
    /// Chemical energy over `v_i ‖ v_j ‖ e_ij`, scalar output.
    pub u: Mlp,
    /// Geometric energy over `(⟨n_i,n_j⟩, d_ij²)`, scalar output. Must be smooth.
    pub g: Mlp,
}

impl EnergyParams {
    pub fn new(u: Mlp, g: Mlp) -> Result<Self> {
        if u.input_dim() != 2 * NODE_FEATURE_DIM + EDGE_FEATURE_DIM || u.output_dim() != 1 {
            return Err(Error::Config("u must map v_i ‖ v_j ‖ e_ij to a scalar".into()));
        }
        if g.input_dim() != 2 || g.output_dim() != 1 {
            return Err(Error::Config("g must map (⟨n_i,n_j⟩, d²) to a scalar".into()));
        }
        if !g.is_smooth() {
            return Err(Error::Config("g must use smooth activations".into()));
        }
        Ok(Self { u, g })
    }

    pub fn random<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Result<Self> {
        Self::new(
            Mlp::new(
                &[2 * NODE_FEATURE_DIM + EDGE_FEATURE_DIM, hidden, 1],
                Activation::Tanh,
                Activation::Identity,
                rng,
            )?,
            Mlp::new(&[2, hidden, hidden, 1], Activation::Silu, Activation::Identity, rng)?,
        )
    }
}

fn chem_input(graph: &BioGraph3D, i: usize, j: usize, e: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 * NODE_FEATURE_DIM + EDGE_FEATURE_DIM);
    v.extend_from_slice(&graph.node_features[i]);
    v.extend_from_slice(&graph.node_features[j]);
    v.extend_from_slice(e);
    v
}

fn geo_input(x: &[Vec3], n: &[Vec3], i: usize, j: usize) -> [f64; 2] {
    let r = sub(x[i], x[j]);
    [dot3(n[i], n[j]), dot3(r, r)]
}

/// Energy of `graph` at its own coordinates and directions.
pub fn energy(graph: &BioGraph3D, params: &EnergyParams) -> Result<f64> {
    energy_at(graph, &graph.coords, &graph.directions, params)
}

/// Energy with coordinates and directions substituted.
pub fn energy_at(graph: &BioGraph3D, x: &[Vec3], n: &[Vec3], params: &EnergyParams) -> Result<f64> {
    let mut total = 0.0;
    for (&(i, j), e) in graph.edges.iter().zip(&graph.edge_features) {
        let u = params.u.predict(&chem_input(graph, i, j, e))?[0];
        let g = params.g.predict(&geo_input(x, n, i, j))?[0];
        total += u * g;
    }
    Ok(total)
}

/// `(∂E/∂X, ∂E/∂N)`, both `n × 3`. Every edge contributes to both of its
/// endpoints.
pub fn energy_grad_exact(
    graph: &BioGraph3D,
    params: &EnergyParams,
) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    let n_nodes = graph.node_count();
    let (x, n) = (&graph.coords, &graph.directions);
    let mut gx = vec![[0.0; 3]; n_nodes];
    let mut gn = vec![[0.0; 3]; n_nodes];
    for (&(i, j), e) in graph.edges.iter().zip(&graph.edge_features) {
        let u = params.u.predict(&chem_input(graph, i, j, e))?[0];
        let (_, trace) = params.g.forward_traced(&geo_input(x, n, i, j))?;
        let partial = params.g.input_gradient(&trace, &[1.0]);
        let (dg_dcos, dg_dd2) = (partial[0], partial[1]);
        let r = sub(x[i], x[j]);
        for k in 0..3 {
            let t = 2.0 * u * dg_dd2 * r[k];
            gx[i][k] += t;
            gx[j][k] -= t;
            gn[i][k] += u * dg_dcos * n[j][k];
            gn[j][k] += u * dg_dcos * n[i][k];
        }
    }
    Ok((gx, gn))
}

//! Dense numerical substrate: row-major matrices, small multilayer perceptrons with
//! hand-written forward/backward passes, first-order optimizers and a flat
//! key→array parameter store.
//!
//! Everything is `f64`. Shapes are checked at every public entry point; nothing
//! broadcasts.

mod matrix;
mod mlp;
mod optim;
mod store;

pub use matrix::DenseMatrix;
pub use mlp::{Activation, Dense, Mlp, MlpTrace};
pub use optim::{OptimizerKind, OptimizerState};
pub use store::ParamStore;

/// Anything holding trainable parameters together with same-shaped gradient buffers.
///
/// Visitation order is fixed for a given architecture; optimizers and gradient
/// reduction rely on it.
pub trait Parameterized {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64], &mut [f64]));

    fn zero_grad(&mut self) {
        self.visit_params("", &mut |_, _, g| g.fill(0.0));
    }

    /// Copies every gradient buffer out in visitation order.
    fn collect_grads(&mut self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        self.visit_params("", &mut |_, _, g| out.push(g.to_vec()));
        out
    }

    /// Adds `grads` (as produced by [`Parameterized::collect_grads`] on an
    /// identically shaped object) into this object's gradient buffers.
    fn add_grads(&mut self, grads: &[Vec<f64>]) {
        let mut idx = 0;
        self.visit_params("", &mut |_, _, g| {
            for (dst, src) in g.iter_mut().zip(&grads[idx]) {
                *dst += src;
            }
            idx += 1;
        });
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, p, _| n += p.len());
        n
    }

    fn save_params(&mut self, prefix: &str, store: &mut ParamStore) {
        self.visit_params(prefix, &mut |name, p, _| {
            store.insert(name, p.to_vec());
        });
    }

    fn load_params(&mut self, prefix: &str, store: &ParamStore) -> crate::Result<()> {
        let mut err = None;
        self.visit_params(prefix, &mut |name, p, _| {
            if err.is_some() {
                return;
            }
            match store.get(name) {
                Some(v) if v.len() == p.len() => p.copy_from_slice(v),
                Some(v) => {
                    err = Some(crate::Error::Format(format!(
                        "tensor {name}: expected {} values, found {}",
                        p.len(),
                        v.len()
                    )))
                }
                None => err = Some(crate::Error::Format(format!("missing tensor {name}"))),
            }
        });
        err.map_or(Ok(()), Err)
    }
}

pub(crate) fn join_name(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}/{name}")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

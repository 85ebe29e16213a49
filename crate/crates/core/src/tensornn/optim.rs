use serde::{Deserialize, Serialize};

use super::{ParamStore, Parameterized};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

/// First-order optimizer state. Moment buffers are allocated lazily on the first
/// step and follow the network's parameter visitation order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn sgd(lr: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Result<Self> {
        Self::new(OptimizerKind::Adam, lr)
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step<P: Parameterized + ?Sized>(&mut self, net: &mut P) {
        self.step += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => net.visit_params("", &mut |_, p, g| {
                for (pi, gi) in p.iter_mut().zip(g.iter_mut()) {
                    *pi -= lr * *gi;
                    *gi = 0.0;
                }
            }),
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
                let bc1 = 1.0 - b1.powi(self.step as i32);
                let bc2 = 1.0 - b2.powi(self.step as i32);
                let init = self.first.is_empty();
                let (first, second) = (&mut self.first, &mut self.second);
                let mut idx = 0;
                net.visit_params("", &mut |_, p, g| {
                    if init {
                        first.push(vec![0.0; p.len()]);
                        second.push(vec![0.0; p.len()]);
                    }
                    let (m, v) = (&mut first[idx], &mut second[idx]);
                    for k in 0..p.len() {
                        let gk = g[k];
                        m[k] = b1 * m[k] + (1.0 - b1) * gk;
                        v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                        let mhat = m[k] / bc1;
                        let vhat = v[k] / bc2;
                        p[k] -= lr * mhat / (vhat.sqrt() + eps);
                        g[k] = 0.0;
                    }
                    idx += 1;
                });
            }
        }
    }

    pub fn save(&self, prefix: &str, store: &mut ParamStore) {
        store.set_meta(&format!("{prefix}/kind"), &self.kind.to_string());
        store.insert(
            &format!("{prefix}/hyper"),
            vec![self.lr, self.beta1, self.beta2, self.eps, self.step as f64],
        );
        for (i, (m, v)) in self.first.iter().zip(&self.second).enumerate() {
            store.insert(&format!("{prefix}/m/{i:04}"), m.clone());
            store.insert(&format!("{prefix}/v/{i:04}"), v.clone());
        }
    }

    pub fn load(prefix: &str, store: &ParamStore) -> Result<Self> {
        let kind = store
            .meta(&format!("{prefix}/kind"))
            .ok_or_else(|| Error::Format(format!("missing optimizer {prefix}")))?
            .parse()?;
        let hyper = store
            .get(&format!("{prefix}/hyper"))
            .filter(|h| h.len() == 5)
            .ok_or_else(|| Error::Format(format!("missing optimizer hyperparameters {prefix}")))?;
        let mut state = Self::new(kind, hyper[0])?;
        state.beta1 = hyper[1];
        state.beta2 = hyper[2];
        state.eps = hyper[3];
        state.step = hyper[4] as u64;
        let mut i = 0;
        while let (Some(m), Some(v)) = (
            store.get(&format!("{prefix}/m/{i:04}")),
            store.get(&format!("{prefix}/v/{i:04}")),
        ) {
            state.first.push(m.to_vec());
            state.second.push(v.to_vec());
            i += 1;
        }
        Ok(state)
    }
}

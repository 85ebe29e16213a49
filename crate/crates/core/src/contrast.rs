//! Contrastive losses over one anchor, one positive and `N` negatives, with
//! analytic gradients for every embedding.
//!
//! Similarities are exponentiated cosines `s = exp(γ h·ĥ)`, so every loss is a
//! function of the ratios `r_i = s_i⁻ / s⁺ = exp(γ(h·ĥ_i⁻ − h·ĥ⁺))`.

use std::fmt;
use std::str::FromStr;

use crate::tensornn::{dot, norm};
use crate::{Error, Result};

const UNIT_TOL: f64 = 1e-6;
/// Per-negative floor on the debiased inner sum.
const DEBIASED_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Uni,
    InfoNce,
    Debiased,
    Chem,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uni" => Ok(Self::Uni),
            "infonce" => Ok(Self::InfoNce),
            "debiased" => Ok(Self::Debiased),
            "chem" => Ok(Self::Chem),
            other => Err(Error::Config(format!(
                "unknown loss `{other}` (expected uni, infonce, debiased or chem)"
            ))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uni => "uni",
            Self::InfoNce => "infonce",
            Self::Debiased => "debiased",
            Self::Chem => "chem",
        })
    }
}

/// Loss hyperparameters shared by a whole training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub gamma: f64,
    /// Chemical-similarity threshold τ.
    pub tau: f64,
    /// Class prior τ⁺ of the debiased loss.
    pub tau_plus: f64,
    /// `None` means `Q = N`.
    pub q: Option<f64>,
    /// Scalar in front of the weighted sum of the chem loss.
    pub chem_scale: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            tau: 0.0,
            tau_plus: 0.0,
            q: None,
            chem_scale: 1.0,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad(format!("gamma must be finite and positive, got {}", self.gamma));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return bad(format!("tau must lie in [0, 1), got {}", self.tau));
        }
        if !(0.0..1.0).contains(&self.tau_plus) {
            return bad(format!("tau_plus must lie in [0, 1), got {}", self.tau_plus));
        }
        if let Some(q) = self.q {
            if !(q.is_finite() && q > 0.0) {
                return bad(format!("Q must be finite and positive, got {q}"));
            }
        }
        if !(self.chem_scale.is_finite() && self.chem_scale > 0.0) {
            return bad(format!("chem_scale must be finite and positive, got {}", self.chem_scale));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastBatch {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
    /// Tanimoto similarity of each negative ligand to the positive ligand.
    pub sims: Vec<f64>,
    pub params: LossParams,
}

impl ContrastBatch {
    pub fn new(
        anchor: Vec<f64>,
        positive: Vec<f64>,
        negatives: Vec<Vec<f64>>,
        sims: Vec<f64>,
        params: LossParams,
    ) -> Result<Self> {
        let batch = Self {
            anchor,
            positive,
            negatives,
            sims,
            params,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let d = self.anchor.len();
        if self.negatives.is_empty() {
            return Err(Error::Data("a contrastive batch needs at least one negative".into()));
        }
        if self.sims.len() != self.negatives.len() {
            return Err(Error::Data(format!(
                "{} similarity scores for {} negatives",
                self.sims.len(),
                self.negatives.len()
            )));
        }
        for (name, v) in std::iter::once(("anchor", &self.anchor))
            .chain(std::iter::once(("positive", &self.positive)))
            .chain(self.negatives.iter().map(|v| ("negative", v)))
        {
            if v.len() != d {
                return Err(Error::Data(format!("{name} has width {}, expected {d}", v.len())));
            }
            if (norm(v) - 1.0).abs() > UNIT_TOL {
                return Err(Error::Data(format!("{name} embedding is not unit norm")));
            }
        }
        if let Some(s) = self.sims.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Data(format!("similarity {s} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.negatives.len()
    }

    fn q(&self) -> f64 {
        self.params.q.unwrap_or(self.n() as f64)
    }

    /// `r_i = exp(γ(h·ĥ_i⁻ − h·ĥ⁺))`
    fn ratios(&self) -> Vec<f64> {
        let pos = dot(&self.anchor, &self.positive);
        self.negatives
            .iter()
            .map(|neg| (self.params.gamma * (dot(&self.anchor, neg) - pos)).exp())
            .collect()
    }

    /// Report for `L = ln(1 + S)` where `∂L/∂r_i = coef[i]`.
    fn report(&self, loss: f64, coef: &[f64], ratios: &[f64], weights: Vec<f64>, fallback: bool) -> LossReport {
        let d = self.anchor.len();
        let g = self.params.gamma;
        let mut grad_anchor = vec![0.0; d];
        let mut grad_positive = vec![0.0; d];
        let mut grad_negatives = Vec::with_capacity(self.n());
        let mut total = 0.0;
        for ((neg, &c), &r) in self.negatives.iter().zip(coef).zip(ratios) {
            let c = c * g * r;
            total += c;
            for k in 0..d {
                grad_anchor[k] += c * neg[k];
            }
            grad_negatives.push(self.anchor.iter().map(|a| c * a).collect());
        }
        for k in 0..d {
            grad_anchor[k] -= total * self.positive[k];
            grad_positive[k] = -total * self.anchor[k];
        }
        LossReport {
            loss,
            weights,
            uniform_fallback: fallback,
            grad_anchor,
            grad_positive,
            grad_negatives,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    /// Per-negative weights ρ_i (uniform for the unweighted losses).
    pub weights: Vec<f64>,
    /// The chem weights collapsed to zero and were replaced by uniform ones.
    pub uniform_fallback: bool,
    pub grad_anchor: Vec<f64>,
    pub grad_positive: Vec<f64>,
    pub grad_negatives: Vec<Vec<f64>>,
}

/// `exp(γ h·ĥ)`
pub fn similarity(h: &[f64], h_hat: &[f64], gamma: f64) -> f64 {
    (gamma * dot(h, h_hat)).exp()
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// `ln(1 + (Q/N) Σ r_i)`
pub fn loss_uni(batch: &ContrastBatch) -> LossReport {
    let r = batch.ratios();
    let scale = batch.q() / batch.n() as f64;
    let sum: f64 = r.iter().sum();
    let coef = vec![scale / (1.0 + scale * sum); batch.n()];
    batch.report((scale * sum).ln_1p(), &coef, &r, uniform(batch.n()), false)
}

/// `−ln softmax` of the positive among positive and negatives.
pub fn loss_infonce(batch: &ContrastBatch) -> LossReport {
    let g = batch.params.gamma;
    let pos = g * dot(&batch.anchor, &batch.positive);
    let logits: Vec<f64> = batch.negatives.iter().map(|n| g * dot(&batch.anchor, n)).collect();
    let max = logits.iter().fold(pos, |m, &l| m.max(l));
    let denom = (pos - max).exp() + logits.iter().map(|l| (l - max).exp()).sum::<f64>();
    let loss = max + denom.ln() - pos;
    // ∂L/∂r_i = 1/(1+Σr) = p_pos
    let p_pos = (pos - max).exp() / denom;
    let r: Vec<f64> = logits.iter().map(|l| (l - pos).exp()).collect();
    batch.report(loss, &vec![p_pos; batch.n()], &r, uniform(batch.n()), false)
}

/// `ln(1 + (Q/N)(1/τ⁻) max(Σ(r_i − τ⁺), ε·N))`
pub fn loss_debiased(batch: &ContrastBatch) -> LossReport {
    let r = batch.ratios();
    let n = batch.n() as f64;
    let tau_minus = 1.0 - batch.params.tau_plus;
    let scale = batch.q() / n / tau_minus;
    let inner: f64 = r.iter().map(|ri| ri - batch.params.tau_plus).sum();
    let floor = DEBIASED_EPS * n;
    let (inner, c) = if inner > floor {
        (inner, scale / (1.0 + scale * inner))
    } else {
        (floor, 0.0)
    };
    batch.report((scale * inner).ln_1p(), &vec![c; batch.n()], &r, uniform(batch.n()), false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChemWeights {
    /// `w_i = max(1 − sim_i − τ, 0)`
    pub w: Vec<f64>,
    /// `ρ_i = w_i / Σw`, or uniform when every `w_i` is zero.
    pub rho: Vec<f64>,
    pub uniform_fallback: bool,
}

pub fn chem_weights(sims: &[f64], tau: f64) -> ChemWeights {
    let w: Vec<f64> = sims.iter().map(|s| (1.0 - s - tau).max(0.0)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        ChemWeights {
            rho: w.iter().map(|wi| wi / total).collect(),
            w,
            uniform_fallback: false,
        }
    } else {
        log::warn!("all {} negatives are chemically indistinguishable from the positive; using uniform weights", sims.len());
        ChemWeights {
            rho: uniform(sims.len()),
            w,
            uniform_fallback: true,
        }
    }
}

/// `ln(1 + κ Σ ρ_i r_i)` with ρ held constant.
pub fn loss_chem(batch: &ContrastBatch) -> LossReport {
    let weights = chem_weights(&batch.sims, batch.params.tau);
    let r = batch.ratios();
    let kappa = batch.params.chem_scale;
    let sum: f64 = weights.rho.iter().zip(&r).map(|(p, ri)| p * ri).sum();
    let denom = 1.0 + kappa * sum;
    let coef: Vec<f64> = weights.rho.iter().map(|p| kappa * p / denom).collect();
    batch.report((kappa * sum).ln_1p(), &coef, &r, weights.rho, weights.uniform_fallback)
}

pub fn loss(kind: LossKind, batch: &ContrastBatch) -> LossReport {
    match kind {
        LossKind::Uni => loss_uni(batch),
        LossKind::InfoNce => loss_infonce(batch),
        LossKind::Debiased => loss_debiased(batch),
        LossKind::Chem => loss_chem(batch),
    }
}

use std::fmt::Write as _;
use std::path::Path;

use crate::biograph::{DEFAULT_CUT_RADIUS, DEFAULT_K};
use crate::contrast::{LossKind, LossParams};
use crate::fingerprint::{DEFAULT_RADIUS, DEFAULT_WIDTH};
use crate::ggmp::EncoderConfig;
use crate::tensornn::OptimizerKind;
use crate::{Error, Result};

/// Every knob of a training run. Serialized as flat `key = value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub loss_params: LossParams,
    pub encoder: EncoderConfig,
    pub k: usize,
    pub cut: f64,
    pub fp_radius: usize,
    pub fp_width: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// Write an intermediate checkpoint every this many epochs; 0 disables.
    pub checkpoint_interval: usize,
    /// Average in the ligand→pocket direction.
    pub symmetric: bool,
    /// Draw negatives uniformly from the whole dataset instead of the batch.
    pub global_negatives: bool,
    /// Record per-epoch wall time. Off keeps metrics logs reproducible.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 10,
            batch_size: 32,
            loss: LossKind::Chem,
            loss_params: LossParams::default(),
            encoder: EncoderConfig::default(),
            k: DEFAULT_K,
            cut: DEFAULT_CUT_RADIUS,
            fp_radius: DEFAULT_RADIUS,
            fp_width: DEFAULT_WIDTH,
            lr: 0.01,
            optimizer: OptimizerKind::Adam,
            checkpoint_interval: 0,
            symmetric: false,
            global_negatives: false,
            log_wall_time: false,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "seed", "epochs", "batch_size", "loss", "gamma", "tau", "tau_plus", "q", "chem_scale",
        "lambda", "depth", "node_dim", "message_dim", "hidden", "hidden_layers", "embed_dim", "k",
        "cut", "fp_radius", "fp_width", "lr", "optimizer", "checkpoint_interval", "symmetric",
        "global_negatives", "log_wall_time",
    ];

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let lp = &mut self.loss_params;
        let enc = &mut self.encoder;
        match key.trim() {
            "seed" => self.seed = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "loss" => self.loss = value.parse()?,
            "gamma" => lp.gamma = num(key, value)?,
            "tau" => lp.tau = num(key, value)?,
            "tau_plus" => lp.tau_plus = num(key, value)?,
            "q" => lp.q = if value.eq_ignore_ascii_case("n") { None } else { Some(num(key, value)?) },
            "chem_scale" => lp.chem_scale = num(key, value)?,
            "lambda" => enc.lambda = num(key, value)?,
            "depth" => enc.depth = num(key, value)?,
            "node_dim" => enc.node_dim = num(key, value)?,
            "message_dim" => enc.message_dim = num(key, value)?,
            "hidden" => enc.hidden = num(key, value)?,
            "hidden_layers" => enc.hidden_layers = num(key, value)?,
            "embed_dim" => enc.embed_dim = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "cut" => self.cut = num(key, value)?,
            "fp_radius" => self.fp_radius = num(key, value)?,
            "fp_width" => self.fp_width = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "optimizer" => self.optimizer = value.parse()?,
            "checkpoint_interval" => self.checkpoint_interval = num(key, value)?,
            "symmetric" => self.symmetric = flag(key, value)?,
            "global_negatives" => self.global_negatives = flag(key, value)?,
            "log_wall_time" => self.log_wall_time = flag(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: source.to_string(),
                line: i + 1,
                message: "expected `key = value`".into(),
            })?;
            self.set(key, value).map_err(|e| Error::Parse {
                path: source.to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text, source)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let lp = &self.loss_params;
        let enc = &self.encoder;
        let mut s = String::new();
        let mut put = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        put("seed", self.seed.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("loss", self.loss.to_string());
        put("gamma", lp.gamma.to_string());
        put("tau", lp.tau.to_string());
        put("tau_plus", lp.tau_plus.to_string());
        put("q", lp.q.map_or_else(|| "n".to_string(), |q| q.to_string()));
        put("chem_scale", lp.chem_scale.to_string());
        put("lambda", enc.lambda.to_string());
        put("depth", enc.depth.to_string());
        put("node_dim", enc.node_dim.to_string());
        put("message_dim", enc.message_dim.to_string());
        put("hidden", enc.hidden.to_string());
        put("hidden_layers", enc.hidden_layers.to_string());
        put("embed_dim", enc.embed_dim.to_string());
        put("k", self.k.to_string());
        put("cut", self.cut.to_string());
        put("fp_radius", self.fp_radius.to_string());
        put("fp_width", self.fp_width.to_string());
        put("lr", self.lr.to_string());
        put("optimizer", self.optimizer.to_string());
        put("checkpoint_interval", self.checkpoint_interval.to_string());
        put("symmetric", self.symmetric.to_string());
        put("global_negatives", self.global_negatives.to_string());
        put("log_wall_time", self.log_wall_time.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        self.loss_params.validate()?;
        let enc = &self.encoder;
        if enc.depth == 0 || enc.node_dim == 0 || enc.message_dim == 0 || enc.hidden == 0 || enc.embed_dim == 0 {
            return bad("encoder depth and widths must be positive");
        }
        if !enc.lambda.is_finite() {
            return bad("lambda must be finite");
        }
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !(self.cut.is_finite() && self.cut > 0.0) {
            return bad("cut must be finite and positive");
        }
        if self.fp_width == 0 {
            return bad("fp_width must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be finite and positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.set("gamma", "2.5").unwrap();
        cfg.set("q", "3").unwrap();
        cfg.set("symmetric", "yes").unwrap();
        cfg.set("loss", "debiased").unwrap();
        cfg.set("lr", "0.1").unwrap();
        let back = TrainConfig::from_text(&cfg.to_text(), "x").unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), cfg.to_text());
        assert_eq!(TrainConfig::KEYS.len(), cfg.to_text().lines().count());
    }

    #[test]
    fn later_lines_override_and_errors_name_the_line() {
        let cfg = TrainConfig::from_text("# comment\nepochs = 3\n\nepochs=5  # trailing\n", "c").unwrap();
        assert_eq!(cfg.epochs, 5);
        let err = TrainConfig::from_text("epochs = 3\nwidth = 9\n", "c.cfg").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(TrainConfig::from_text("batch_size = 1", "c").is_err());
        assert!(TrainConfig::from_text("tau_plus = 1", "c").is_err());
        assert!(TrainConfig::from_text("lr = nan", "c").is_err());
    }
}

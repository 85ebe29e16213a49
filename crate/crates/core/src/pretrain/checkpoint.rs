use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::biograph::{BioGraph3D, GraphKind};
use crate::ggmp::GgmpEncoder;
use crate::rng::substream;
use crate::tensornn::{OptimizerState, ParamStore, Parameterized};
use crate::{Error, Result};

const FORMAT_TAG: &str = "geocon-checkpoint-1";

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub pos_cos: f64,
    pub neg_cos: f64,
    pub zero_weight_frac: f64,
    pub wall_ms: Option<f64>,
}

impl EpochMetrics {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub pocket: GgmpEncoder,
    pub ligand: GgmpEncoder,
    pub pocket_opt: OptimizerState,
    pub ligand_opt: OptimizerState,
    /// Epochs completed.
    pub epoch: usize,
    pub metrics: Vec<EpochMetrics>,
}

impl Checkpoint {
    /// Fresh encoders drawn from the seed's `init` stream.
    pub fn init(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(config.seed, "init");
        Ok(Self {
            config: config.clone(),
            pocket: GgmpEncoder::new(GraphKind::Pocket, &config.encoder, &mut rng)?,
            ligand: GgmpEncoder::new(GraphKind::Ligand, &config.encoder, &mut rng)?,
            pocket_opt: OptimizerState::new(config.optimizer, config.lr)?,
            ligand_opt: OptimizerState::new(config.optimizer, config.lr)?,
            epoch: 0,
            metrics: Vec::new(),
        })
    }

    pub fn encoder(&self, kind: GraphKind) -> &GgmpEncoder {
        match kind {
            GraphKind::Pocket => &self.pocket,
            GraphKind::Ligand => &self.ligand,
        }
    }

    pub fn to_store(&self) -> ParamStore {
        let mut store = ParamStore::default();
        store.set_meta("format", FORMAT_TAG);
        store.set_meta("config", &self.config.to_text());
        store.set_meta("epoch", &self.epoch.to_string());
        let log: Vec<String> = self.metrics.iter().map(EpochMetrics::to_json_line).collect();
        store.set_meta("metrics", &log.join("\n"));
        self.pocket.clone().save_params("pocket", &mut store);
        self.ligand.clone().save_params("ligand", &mut store);
        self.pocket_opt.save("opt/pocket", &mut store);
        self.ligand_opt.save("opt/ligand", &mut store);
        store
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let meta = |k: &str| {
            store
                .meta(k)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks `{k}`")))
        };
        if meta("format")? != FORMAT_TAG {
            return Err(Error::Format("not a checkpoint".into()));
        }
        let config = TrainConfig::from_text(meta("config")?, "checkpoint config")?;
        let mut ck = Self::init(&config)?;
        ck.pocket.load_params("pocket", store)?;
        ck.ligand.load_params("ligand", store)?;
        ck.pocket_opt = OptimizerState::load("opt/pocket", store)?;
        ck.ligand_opt = OptimizerState::load("opt/ligand", store)?;
        ck.epoch = meta("epoch")?
            .parse()
            .map_err(|_| Error::Format("bad checkpoint epoch".into()))?;
        ck.metrics = meta("metrics")?
            .lines()
            .map(|l| serde_json::from_str(l).map_err(|e| Error::Format(format!("checkpoint metrics: {e}"))))
            .collect::<Result<_>>()?;
        Ok(ck)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_store().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_store(&ParamStore::from_bytes(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Unit embedding of `graph` under the encoder for `kind`.
pub fn embed(checkpoint: &Checkpoint, graph: &BioGraph3D, kind: GraphKind) -> Result<Vec<f64>> {
    if graph.kind != kind {
        return Err(Error::Usage(format!(
            "cannot embed a {} graph with the {kind} encoder",
            graph.kind
        )));
    }
    checkpoint.encoder(kind).encode(graph)
}

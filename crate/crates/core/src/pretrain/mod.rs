//! Co-supervised pretraining: a pocket encoder and a ligand encoder trained
//! jointly so bound pairs embed close together and unbound pairs apart.

mod checkpoint;
mod config;
mod data;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

pub use checkpoint::{embed, Checkpoint, EpochMetrics};
pub use config::TrainConfig;
pub use data::{load_dataset, make_batches, make_complex, resolve, AnchorPlan, BatchPlan, Complex, ComplexDataset};

use crate::biograph::BioGraph3D;
use crate::contrast::{loss, ContrastBatch};
use crate::ggmp::{EncoderTrace, GgmpEncoder};
use crate::tensornn::{dot, Parameterized};
use crate::{Error, Result};

/// Samples per encoder replica during backpropagation. Fixed so the gradient
/// sum does not depend on the thread count.
const REPLICA_CHUNK: usize = 4;

#[derive(Debug, Default)]
struct BatchStats {
    loss: f64,
    pos_cos: f64,
    pos_count: usize,
    neg_cos: f64,
    neg_count: usize,
    zero_weights: usize,
}

fn encode_all(encoder: &GgmpEncoder, graphs: &[&BioGraph3D]) -> Result<Vec<EncoderTrace>> {
    graphs.par_iter().map(|g| encoder.encode_traced(g)).collect()
}

/// Backpropagates every `(graph, trace, upstream)` job into `encoder`.
fn accumulate(encoder: &mut GgmpEncoder, graphs: &[&BioGraph3D], traces: &[EncoderTrace], upstream: &[Vec<f64>]) {
    let idx: Vec<usize> = (0..graphs.len()).collect();
    let base: &GgmpEncoder = encoder;
    let partials: Vec<Vec<Vec<f64>>> = idx
        .par_chunks(REPLICA_CHUNK)
        .map(|chunk| {
            let mut replica = base.clone();
            replica.zero_grad();
            for &i in chunk {
                replica.backward_traced(graphs[i], &traces[i], &upstream[i]);
            }
            replica.collect_grads()
        })
        .collect();
    for p in &partials {
        encoder.add_grads(p);
    }
}

fn add_scaled(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

/// Adds the batch's loss gradients into both encoders' gradient buffers.
fn batch_gradients(ck: &mut Checkpoint, data: &ComplexDataset, plan: &BatchPlan, epoch: usize) -> Result<BatchStats> {
    let cfg = ck.config.clone();
    let items = data.items();
    let pocket_graphs: Vec<&BioGraph3D> = plan.pockets.iter().map(|&i| &items[i].pocket).collect();
    let ligand_graphs: Vec<&BioGraph3D> = plan.ligands.iter().map(|&i| &items[i].ligand).collect();
    let p_tr = encode_all(&ck.pocket, &pocket_graphs)?;
    let l_tr = encode_all(&ck.ligand, &ligand_graphs)?;
    let p_emb: Vec<&[f64]> = p_tr.iter().map(EncoderTrace::embedding).collect();
    let l_emb: Vec<&[f64]> = l_tr.iter().map(EncoderTrace::embedding).collect();

    let d = cfg.encoder.embed_dim;
    let mut dp = vec![vec![0.0; d]; p_emb.len()];
    let mut dl = vec![vec![0.0; d]; l_emb.len()];
    let directions = if cfg.symmetric { 2.0 } else { 1.0 };
    let scale = 1.0 / (plan.anchors.len() as f64 * directions);
    let mut stats = BatchStats::default();

    let fault = |what: &str| {
        let ids: Vec<&str> = plan.pockets.iter().map(|&i| items[i].id.as_str()).collect();
        Error::NumericalFault(format!(
            "{what} in epoch {epoch} batch {} (complexes: {})",
            plan.id,
            ids.join(", ")
        ))
    };

    for a in &plan.anchors {
        let batch = ContrastBatch::new(
            p_emb[a.pocket].to_vec(),
            l_emb[a.positive].to_vec(),
            a.negatives.iter().map(|&s| l_emb[s].to_vec()).collect(),
            a.sims.clone(),
            cfg.loss_params,
        )?;
        let rep = loss(cfg.loss, &batch);
        if !rep.loss.is_finite() {
            return Err(fault("non-finite loss"));
        }
        stats.loss += rep.loss * scale;
        stats.pos_cos += dot(p_emb[a.pocket], l_emb[a.positive]);
        stats.pos_count += 1;
        for &s in &a.negatives {
            stats.neg_cos += dot(p_emb[a.pocket], l_emb[s]);
        }
        stats.neg_count += a.negatives.len();
        stats.zero_weights += rep.weights.iter().filter(|&&w| w == 0.0).count();
        add_scaled(&mut dp[a.pocket], &rep.grad_anchor, scale);
        add_scaled(&mut dl[a.positive], &rep.grad_positive, scale);
        for (&s, g) in a.negatives.iter().zip(&rep.grad_negatives) {
            add_scaled(&mut dl[s], g, scale);
        }
    }

    if cfg.symmetric {
        // Ligand anchors against the batch's other pockets.
        for a in &plan.anchors {
            let others: Vec<usize> = plan.anchors.iter().map(|b| b.pocket).filter(|&p| p != a.pocket).collect();
            let sims = others
                .iter()
                .map(|&p| crate::fingerprint::tanimoto(&items[plan.ligands[a.positive]].fingerprint, &items[plan.pockets[p]].fingerprint))
                .collect::<Result<_>>()?;
            let batch = ContrastBatch::new(
                l_emb[a.positive].to_vec(),
                p_emb[a.pocket].to_vec(),
                others.iter().map(|&p| p_emb[p].to_vec()).collect(),
                sims,
                cfg.loss_params,
            )?;
            let rep = loss(cfg.loss, &batch);
            if !rep.loss.is_finite() {
                return Err(fault("non-finite loss"));
            }
            stats.loss += rep.loss * scale;
            add_scaled(&mut dl[a.positive], &rep.grad_anchor, scale);
            add_scaled(&mut dp[a.pocket], &rep.grad_positive, scale);
            for (&p, g) in others.iter().zip(&rep.grad_negatives) {
                add_scaled(&mut dp[p], g, scale);
            }
        }
    }

    accumulate(&mut ck.pocket, &pocket_graphs, &p_tr, &dp);
    accumulate(&mut ck.ligand, &ligand_graphs, &l_tr, &dl);
    let mut finite = true;
    for enc in [&mut ck.pocket, &mut ck.ligand] {
        enc.visit_params("", &mut |_, _, g| finite &= g.iter().all(|v| v.is_finite()));
    }
    if !finite {
        return Err(fault("non-finite gradient"));
    }
    Ok(stats)
}

fn run_batch(ck: &mut Checkpoint, data: &ComplexDataset, plan: &BatchPlan, epoch: usize) -> Result<BatchStats> {
    let stats = batch_gradients(ck, data, plan, epoch)?;
    ck.pocket_opt.step(&mut ck.pocket);
    ck.ligand_opt.step(&mut ck.ligand);
    Ok(stats)
}

/// Runs one epoch (numbered `ck.epoch + 1`) and records its metrics.
pub fn train_epoch(ck: &mut Checkpoint, data: &ComplexDataset) -> Result<EpochMetrics> {
    let start = Instant::now();
    let epoch = ck.epoch + 1;
    let plans = make_batches(data, &ck.config, epoch)?;
    let mut total = BatchStats::default();
    for plan in &plans {
        let s = run_batch(ck, data, plan, epoch)?;
        total.loss += s.loss;
        total.pos_cos += s.pos_cos;
        total.pos_count += s.pos_count;
        total.neg_cos += s.neg_cos;
        total.neg_count += s.neg_count;
        total.zero_weights += s.zero_weights;
    }
    let metrics = EpochMetrics {
        epoch,
        loss: total.loss / plans.len() as f64,
        pos_cos: total.pos_cos / total.pos_count as f64,
        neg_cos: total.neg_cos / total.neg_count as f64,
        zero_weight_frac: total.zero_weights as f64 / total.neg_count as f64,
        wall_ms: ck.config.log_wall_time.then(|| start.elapsed().as_secs_f64() * 1e3),
    };
    ck.epoch = epoch;
    ck.metrics.push(metrics.clone());
    Ok(metrics)
}

/// Trains until `ck.epoch == until`, calling `on_epoch` after each epoch.
pub fn resume(
    mut ck: Checkpoint,
    data: &ComplexDataset,
    until: usize,
    on_epoch: &mut dyn FnMut(&EpochMetrics, &Checkpoint) -> Result<()>,
) -> Result<Checkpoint> {
    while ck.epoch < until {
        let m = train_epoch(&mut ck, data)?;
        log::info!(
            "epoch {} loss {:.5} pos_cos {:.4} neg_cos {:.4}",
            m.epoch,
            m.loss,
            m.pos_cos,
            m.neg_cos
        );
        on_epoch(&m, &ck)?;
    }
    Ok(ck)
}

pub fn train(config: &TrainConfig, data: &ComplexDataset) -> Result<Checkpoint> {
    resume(Checkpoint::init(config)?, data, config.epochs, &mut |_, _| Ok(()))
}

/// Trains into `out`: `metrics.jsonl`, `epoch_NNNN.ckpt` every
/// `checkpoint_interval` epochs, and `final.ckpt`.
pub fn train_to_dir(start: Checkpoint, data: &ComplexDataset, out: &Path) -> Result<Checkpoint> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let log_path = out.join("metrics.jsonl");
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let interval = start.config.checkpoint_interval;
    let until = start.config.epochs;
    let ck = resume(start, data, until, &mut |m, ck| {
        writeln!(log, "{}", m.to_json_line()).map_err(|e| Error::io(&log_path, e))?;
        if interval > 0 && m.epoch % interval == 0 {
            ck.save(&out.join(format!("epoch_{:04}.ckpt", m.epoch)))?;
        }
        Ok(())
    })?;
    ck.save(&out.join("final.ckpt"))?;
    Ok(ck)
}

#[cfg(test)]
mod tests;

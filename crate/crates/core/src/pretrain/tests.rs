use std::path::Path;

use super::*;
use crate::biograph::geom::RigidMotion;
use crate::biograph::{write_ligand, write_pocket, GraphKind};
use crate::contrast::{chem_weights, LossKind};
use crate::ggmp::EncoderConfig;
use crate::gradcheck::{compare, param_central_diff};
use crate::rng::substream;
use crate::synth::{generate, SynthConfig};

fn tiny_config() -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        epochs: 2,
        k: 4,
        encoder: EncoderConfig {
            depth: 2,
            node_dim: 8,
            message_dim: 8,
            hidden: 8,
            hidden_layers: 1,
            embed_dim: 8,
            lambda: 0.1,
        },
        ..Default::default()
    }
}

fn synth_dataset(families: usize, per_family: usize, dup: f64, cfg: &TrainConfig) -> ComplexDataset {
    let sc = SynthConfig {
        families,
        per_family,
        seed: 11,
        ligand_atoms: 7,
        pocket_residues: 8,
        duplicate_frac: dup,
        ..Default::default()
    };
    let items = generate(&sc)
        .unwrap()
        .iter()
        .map(|c| make_complex(&c.id, &c.pocket, &c.ligand, cfg).unwrap())
        .collect();
    ComplexDataset::new(items).unwrap()
}

fn write_files(dir: &Path, n: usize) -> Vec<(String, String)> {
    let sc = SynthConfig {
        families: 1,
        per_family: n,
        seed: 3,
        ligand_atoms: 5,
        pocket_residues: 6,
        ..Default::default()
    };
    generate(&sc)
        .unwrap()
        .iter()
        .map(|c| {
            let (p, l) = (format!("{}.pocket", c.id), format!("{}.lig", c.id));
            std::fs::write(dir.join(&p), write_pocket(&c.pocket)).unwrap();
            std::fs::write(dir.join(&l), write_ligand(&c.ligand)).unwrap();
            (p, l)
        })
        .collect()
}

#[test]
fn manifest_loading() {
    let dir = tempfile::tempdir().unwrap();
    let files = write_files(dir.path(), 3);
    let cfg = tiny_config();
    let manifest = dir.path().join("m.txt");

    std::fs::write(&manifest, "# nothing\n\n").unwrap();
    assert!(load_dataset(&manifest, &cfg).is_err());

    let text: String = files.iter().enumerate().map(|(i, (p, l))| format!("c{i} {p} {l}\n")).collect();
    std::fs::write(&manifest, &text).unwrap();
    assert_eq!(load_dataset(&manifest, &cfg).unwrap().len(), 3);

    std::fs::write(&manifest, format!("{text}c3 {} {}\n", files[0].0, files[0].1)).unwrap();
    let ds = load_dataset(&manifest, &cfg).unwrap();
    assert_eq!(ds.items()[0].fingerprint, ds.items()[3].fingerprint);

    std::fs::write(&manifest, format!("{text}c9 missing.pocket {}\n", files[0].1)).unwrap();
    let err = load_dataset(&manifest, &cfg).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");

    std::fs::write(&manifest, format!("{text}c0 {} {}\n", files[1].0, files[1].1)).unwrap();
    assert!(load_dataset(&manifest, &cfg).is_err(), "duplicate id");
}

#[test]
fn batches_are_deterministic_in_batch_contrasts() {
    let mut cfg = tiny_config();
    cfg.batch_size = 2;
    let ds = synth_dataset(2, 3, 0.0, &cfg);
    let plans = make_batches(&ds, &cfg, 1).unwrap();
    assert_eq!(plans, make_batches(&ds, &cfg, 1).unwrap());
    assert_ne!(plans, make_batches(&ds, &cfg, 2).unwrap());
    assert_eq!(plans.len(), 3);
    for plan in &plans {
        for a in &plan.anchors {
            assert_eq!(a.negatives.len(), 1);
            assert_eq!(plan.pockets[a.pocket], plan.ligands[a.positive]);
        }
    }
    cfg.batch_size = 4;
    let plans = make_batches(&ds, &cfg, 1).unwrap();
    assert_eq!(plans.iter().map(|p| p.pockets.len()).collect::<Vec<_>>(), vec![4, 2]);
    cfg.batch_size = 7;
    assert!(make_batches(&ds, &cfg, 1).is_err());
}

#[test]
fn duplicate_ligand_negative_gets_zero_weight() {
    let cfg = tiny_config();
    let ds = synth_dataset(3, 1, 1.0, &cfg);
    let mut silenced = 0;
    for epoch in 1..5 {
        for plan in make_batches(&ds, &cfg, epoch).unwrap() {
            for a in &plan.anchors {
                let w = chem_weights(&a.sims, 0.0);
                for (s, (&neg, rho)) in a.sims.iter().zip(a.negatives.iter().zip(&w.rho)) {
                    let same = ds.items()[plan.ligands[neg]].fingerprint == ds.items()[plan.ligands[a.positive]].fingerprint;
                    assert_eq!(*s == 1.0, same);
                    if same {
                        assert_eq!(*rho, 0.0);
                        silenced += 1;
                    }
                }
            }
        }
    }
    assert!(silenced > 0);
}

#[test]
fn global_negatives_exclude_the_anchor() {
    let mut cfg = tiny_config();
    cfg.global_negatives = true;
    let ds = synth_dataset(2, 4, 0.0, &cfg);
    for plan in make_batches(&ds, &cfg, 1).unwrap() {
        for a in &plan.anchors {
            assert_eq!(a.negatives.len(), plan.pockets.len() - 1);
            assert!(a.negatives.iter().all(|&s| plan.ligands[s] != plan.pockets[a.pocket]));
        }
    }
}

fn check_batch_gradient(cfg: &TrainConfig) {
    let ds = synth_dataset(2, 2, 0.0, cfg);
    let mut ck = Checkpoint::init(cfg).unwrap();
    let plan = make_batches(&ds, cfg, 1).unwrap().remove(0);
    ck.pocket.zero_grad();
    ck.ligand.zero_grad();
    batch_gradients(&mut ck, &ds, &plan, 1).unwrap();
    let probe = |c: &Checkpoint| {
        let mut c = c.clone();
        batch_gradients(&mut c, &ds, &plan, 1).unwrap().loss
    };
    let numeric = param_central_diff(&ck.pocket, 1e-5, |enc| {
        probe(&Checkpoint { pocket: enc.clone(), ..ck.clone() })
    });
    let rep = compare(&ck.pocket.collect_grads().concat(), &numeric.concat(), 1e-4, 1e-6);
    assert!(rep.passed(), "pocket {:?}: {rep:?}", cfg.loss);
    let numeric = param_central_diff(&ck.ligand, 1e-5, |enc| {
        probe(&Checkpoint { ligand: enc.clone(), ..ck.clone() })
    });
    let rep = compare(&ck.ligand.collect_grads().concat(), &numeric.concat(), 1e-4, 1e-6);
    assert!(rep.passed(), "ligand {:?}: {rep:?}", cfg.loss);
}

#[test]
fn batch_gradient_matches_finite_differences() {
    let mut cfg = tiny_config();
    cfg.encoder.depth = 1;
    cfg.encoder.hidden = 4;
    check_batch_gradient(&cfg);
    cfg.symmetric = true;
    cfg.loss = LossKind::Debiased;
    cfg.loss_params.tau_plus = 0.1;
    check_batch_gradient(&cfg);
}

#[test]
fn zero_epochs_and_round_trips() {
    let mut cfg = tiny_config();
    cfg.epochs = 0;
    let ds = synth_dataset(2, 2, 0.0, &cfg);
    let init = Checkpoint::init(&cfg).unwrap();
    let trained = train(&cfg, &ds).unwrap();
    assert_eq!(trained.to_bytes(), init.to_bytes());

    cfg.epochs = 1;
    let one = train(&cfg, &ds).unwrap();
    let bytes = one.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    assert_eq!(back.metrics, one.metrics);
    let resumed = resume(back, &ds, 1, &mut |_, _| Ok(())).unwrap();
    assert_eq!(resumed.to_bytes(), bytes);
}

#[test]
fn training_is_deterministic_and_resumable() {
    let mut cfg = tiny_config();
    cfg.epochs = 3;
    let ds = synth_dataset(2, 4, 0.0, &cfg);
    let a = train(&cfg, &ds).unwrap();
    let b = train(&cfg, &ds).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.to_bytes(), b.to_bytes());

    let mut short = cfg.clone();
    short.epochs = 1;
    let first = Checkpoint::from_bytes(&train(&short, &ds).unwrap().to_bytes()).unwrap();
    let mut cont = resume(first, &ds, 3, &mut |_, _| Ok(())).unwrap();
    cont.config.epochs = 3;
    assert_eq!(cont.to_bytes(), a.to_bytes());
}

#[test]
fn training_separates_two_families() {
    let mut cfg = tiny_config();
    cfg.epochs = 15;
    cfg.encoder.depth = 1;
    let ds = synth_dataset(2, 4, 0.0, &cfg);
    let ck = train(&cfg, &ds).unwrap();
    let (first, last) = (&ck.metrics[0], ck.metrics.last().unwrap());
    assert!(last.loss < first.loss, "{first:?} -> {last:?}");
    assert!(last.pos_cos > last.neg_cos, "{last:?}");
}

#[test]
fn metrics_log_and_checkpoints_on_disk() {
    let mut cfg = tiny_config();
    cfg.checkpoint_interval = 1;
    let ds = synth_dataset(2, 2, 0.0, &cfg);
    let dir = tempfile::tempdir().unwrap();
    let ck = train_to_dir(Checkpoint::init(&cfg).unwrap(), &ds, dir.path()).unwrap();
    let log = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for key in ["epoch", "loss", "pos_cos", "neg_cos", "zero_weight_frac", "wall_ms"] {
        assert!(first.get(key).is_some(), "{key}");
    }
    assert!(dir.path().join("epoch_0001.ckpt").exists());
    let fin = Checkpoint::load(&dir.path().join("final.ckpt")).unwrap();
    assert_eq!(fin.to_bytes(), ck.to_bytes());
}

#[test]
fn embedding_contract() {
    let cfg = tiny_config();
    let ds = synth_dataset(1, 1, 0.0, &cfg);
    let ck = Checkpoint::init(&cfg).unwrap();
    let g = &ds.items()[0].pocket;
    let e = embed(&ck, g, GraphKind::Pocket).unwrap();
    assert_eq!(e, embed(&ck, g, GraphKind::Pocket).unwrap());
    let moved = g.transformed(&RigidMotion::random(&mut substream(1, "m"), 30.0));
    let e2 = embed(&ck, &moved, GraphKind::Pocket).unwrap();
    assert!(e.iter().zip(&e2).all(|(a, b)| (a - b).abs() < 1e-7));
    assert!(matches!(embed(&ck, g, GraphKind::Ligand), Err(Error::Usage(_))));
}

#[test]
fn non_finite_parameters_abort_training() {
    let cfg = tiny_config();
    let ds = synth_dataset(2, 2, 0.0, &cfg);
    let mut ck = Checkpoint::init(&cfg).unwrap();
    ck.ligand.readout.layers_mut()[0].bias[0] = f64::NAN;
    let err = train_epoch(&mut ck, &ds).unwrap_err();
    assert_eq!(err.kind(), crate::ErrorKind::Numerical);
}

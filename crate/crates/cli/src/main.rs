//! `geocon`: pretrain pocket/ligand encoders and evaluate their embeddings.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical fault (including a failed gradient check).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use geocon_core::biograph::GraphKind;
use geocon_core::evalkit::{self, RE_LEVELS};
use geocon_core::gradcheck::{run_suite, SuiteConfig};
use geocon_core::pretrain::{self, embed, load_dataset, Checkpoint, TrainConfig};
use geocon_core::synth::{generate, write_synth, SynthConfig};
use geocon_core::ErrorKind;

#[derive(Parser, Debug)]
#[command(name = "geocon", version, about = "Geometric contrastive pretraining for pockets and ligands")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true, conflicts_with = "quiet")]
    verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pretrain both encoders on a manifest of complexes.
    Train(TrainArgs),
    /// Print the unit embedding of one pocket or ligand file.
    Embed {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        kind: GraphKind,
    },
    /// Pocket-matching ROC-AUC over `pocketA pocketB 0|1` lines.
    Match {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Virtual screening of `ligand 0|1` lines against one pocket.
    Screen {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        pocket: PathBuf,
        #[arg(long)]
        ligands: PathBuf,
        /// Comma-separated FPR levels for RE scores.
        #[arg(long, value_delimiter = ',', default_values_t = RE_LEVELS.to_vec())]
        levels: Vec<f64>,
    },
    /// Compare every analytic gradient with central finite differences.
    CheckGrad {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random cases per loss/network check.
        #[arg(long, default_value_t = 200)]
        cases: usize,
    },
    /// Write a synthetic dataset of pocket/ligand families.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        families: usize,
        #[arg(long, default_value_t = 50)]
        per_family: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Extra complexes duplicating existing ones, as a fraction.
        #[arg(long, default_value_t = 0.0)]
        duplicates: f64,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// `key = value` file; flags below take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Continue from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    /// Any other config key, as `key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_kind(s: &str) -> std::result::Result<GraphKind, String> {
    s.parse::<GraphKind>().map_err(|e| e.to_string())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<geocon_core::Error>().map(geocon_core::Error::kind) {
        Some(ErrorKind::Usage) => 1,
        Some(ErrorKind::Numerical) => 3,
        Some(ErrorKind::Data) | None => 2,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("GEOCON_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| geocon_core::Error::Usage(format!("GEOCON_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")?;
    Ok(())
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text, &path.display().to_string())?;
    }
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            overrides.push((k.to_string(), v));
        }
    };
    put("seed", args.seed.map(|v| v.to_string()));
    put("epochs", args.epochs.map(|v| v.to_string()));
    put("batch_size", args.batch_size.map(|v| v.to_string()));
    put("loss", args.loss.clone());
    put("lr", args.lr.map(|v| v.to_string()));
    for kv in &args.set {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(geocon_core::Error::Usage(format!("--set expects KEY=VALUE, got `{kv}`")).into());
        };
        overrides.push((k.trim().to_string(), v.to_string()));
    }
    for (k, v) in overrides {
        cfg.set(&k, &v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(args: &TrainArgs) -> Result<Value> {
    let cfg = train_config(args)?;
    let start = match &args.resume {
        Some(path) => {
            let mut ck = Checkpoint::load(path)?;
            // Architecture comes from the checkpoint; schedule from this run.
            ck.config.epochs = cfg.epochs;
            ck.config.checkpoint_interval = cfg.checkpoint_interval;
            ck.config.log_wall_time = cfg.log_wall_time;
            ck
        }
        None => Checkpoint::init(&cfg)?,
    };
    let data = load_dataset(&args.manifest, &start.config)?;
    log::info!("loaded {} complexes from {}", data.len(), args.manifest.display());
    let ck = pretrain::train_to_dir(start, &data, &args.out)?;
    Ok(json!({
        "checkpoint": args.out.join("final.ckpt"),
        "metrics": args.out.join("metrics.jsonl"),
        "epochs": ck.epoch,
        "final": ck.metrics.last(),
    }))
}

fn embed_file(ckpt: &Path, input: &Path, kind: GraphKind) -> Result<Value> {
    let ck = Checkpoint::load(ckpt)?;
    let graph = match kind {
        GraphKind::Pocket => evalkit::load_pocket_graph(&ck, input)?,
        GraphKind::Ligand => evalkit::load_ligand_graph(input)?,
    };
    Ok(json!({ "kind": kind.to_string(), "embedding": embed(&ck, &graph, kind)? }))
}

fn check_grad(seed: u64, cases: usize) -> Result<Value> {
    let cfg = SuiteConfig {
        cases,
        ..SuiteConfig::new(seed)
    };
    let reports = run_suite(&cfg)?;
    let passed = reports.iter().all(|(_, r)| r.passed());
    let checks: Vec<Value> = reports
        .iter()
        .map(|(name, r)| {
            json!({
                "name": name,
                "passed": r.passed(),
                "count": r.count,
                "failures": r.failures,
                "max_abs_err": r.max_abs_err,
                "max_rel_err": r.max_rel_err,
            })
        })
        .collect();
    let out = json!({ "passed": passed, "checks": checks });
    if !passed {
        println!("{out}");
        bail!(geocon_core::Error::NumericalFault("gradient check failed".into()));
    }
    Ok(out)
}

fn run(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Train(args) => train(args),
        Command::Embed { ckpt, input, kind } => embed_file(ckpt, input, *kind),
        Command::Match { ckpt, pairs } => {
            let ck = Checkpoint::load(ckpt)?;
            let (set, auc) = evalkit::pocket_match_manifest(&ck, pairs)?;
            let scores: Vec<f64> = set.items().iter().map(|(s, _)| *s).collect();
            Ok(json!({ "auc": auc, "pairs": scores.len(), "scores": scores }))
        }
        Command::Screen { ckpt, pocket, ligands, levels } => {
            let ck = Checkpoint::load(ckpt)?;
            let r = evalkit::screen_manifest(&ck, pocket, ligands, levels)?;
            let re: serde_json::Map<String, Value> = r.re_at.iter().map(|(l, v)| (l.to_string(), json!(v))).collect();
            Ok(json!({ "auc": r.auc, "re": re }))
        }
        Command::CheckGrad { seed, cases } => check_grad(*seed, *cases),
        Command::GenSynth { out, families, per_family, seed, duplicates } => {
            let cfg = SynthConfig {
                families: *families,
                per_family: *per_family,
                seed: *seed,
                duplicate_frac: *duplicates,
                ..Default::default()
            };
            let complexes = generate(&cfg)?;
            let manifest = write_synth(out, &complexes)?;
            Ok(json!({ "manifest": manifest, "complexes": complexes.len() }))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = configure_threads().and_then(|()| run(&cli));
    match result {
        Ok(value) => {
            println!("{value}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

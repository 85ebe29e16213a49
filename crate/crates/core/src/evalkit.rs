//! Evaluation over frozen embeddings: ROC-AUC, enrichment (RE) at fixed
//! false-positive rates, pocket matching, virtual screening and a linear probe.

use std::path::Path;

use rayon::prelude::*;

use crate::biograph::{build_ligand_graph, build_pocket_graph, parse_ligand_file, parse_pocket_file, BioGraph3D, GraphKind};
use crate::pretrain::{embed, resolve, Checkpoint};
use crate::tensornn::dot;
use crate::{Error, Result};

/// FPR levels reported by default for screening.
pub const RE_LEVELS: [f64; 4] = [0.005, 0.01, 0.02, 0.05];

/// Scores with binary labels (`true` = positive).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredPairSet {
    items: Vec<(f64, bool)>,
}

impl ScoredPairSet {
    pub fn new(items: Vec<(f64, bool)>) -> Result<Self> {
        if let Some((s, _)) = items.iter().find(|(s, _)| !s.is_finite()) {
            return Err(Error::Data(format!("non-finite score {s}")));
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[(f64, bool)] {
        &self.items
    }

    pub fn positives(&self) -> usize {
        self.items.iter().filter(|(_, l)| *l).count()
    }

    pub fn negatives(&self) -> usize {
        self.items.len() - self.positives()
    }

    fn require_both(&self) -> Result<(usize, usize)> {
        let (p, n) = (self.positives(), self.negatives());
        if p == 0 || n == 0 {
            return Err(Error::Data(format!(
                "need both classes, got {p} positives and {n} negatives"
            )));
        }
        Ok((p, n))
    }

    /// Items by descending score, grouped by equal score as
    /// `(positives, negatives)` per group.
    fn tie_groups(&self) -> Vec<(usize, usize)> {
        let mut sorted = self.items.clone();
        sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut groups: Vec<(usize, usize)> = Vec::new();
        let mut last = None;
        for (s, l) in sorted {
            if last != Some(s) {
                groups.push((0, 0));
                last = Some(s);
            }
            let g = groups.last_mut().unwrap();
            if l {
                g.0 += 1;
            } else {
                g.1 += 1;
            }
        }
        groups
    }
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn roc_auc(set: &ScoredPairSet) -> Result<f64> {
    let (p, n) = set.require_both()?;
    // Walk from the top: each positive beats every negative below it.
    let mut negatives_above = 0usize;
    let mut wins2 = 0u128; // twice the Mann-Whitney U
    for (gp, gn) in set.tie_groups() {
        let below = (n - negatives_above - gn) as u128;
        wins2 += gp as u128 * (2 * below + gn as u128);
        negatives_above += gn;
    }
    Ok(wins2 as f64 / (2.0 * p as f64 * n as f64))
}

/// TPR / FPR at the highest threshold whose FPR reaches `level`, using the
/// FPR actually achieved there.
pub fn re_score(set: &ScoredPairSet, level: f64) -> Result<f64> {
    let (p, n) = set.require_both()?;
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::Config(format!("FPR level {level} outside (0, 1]")));
    }
    if (n as f64) * level < 1.0 - 1e-9 {
        return Err(Error::Data(format!(
            "FPR level {level} is unrealizable with {n} negatives"
        )));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    for (gp, gn) in set.tie_groups() {
        tp += gp;
        fp += gn;
        let fpr = fp as f64 / n as f64;
        if fpr >= level - 1e-12 {
            return Ok((tp as f64 / p as f64) / fpr);
        }
    }
    unreachable!("FPR reaches 1 at the last group")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenResult {
    pub auc: f64,
    /// `(level, RE)` in the requested order.
    pub re_at: Vec<(f64, f64)>,
}

pub fn screen_scores(set: &ScoredPairSet, levels: &[f64]) -> Result<ScreenResult> {
    Ok(ScreenResult {
        auc: roc_auc(set)?,
        re_at: levels
            .iter()
            .map(|&l| Ok((l, re_score(set, l)?)))
            .collect::<Result<_>>()?,
    })
}

fn embed_all(ck: &Checkpoint, graphs: &[BioGraph3D], kind: GraphKind) -> Result<Vec<Vec<f64>>> {
    graphs.par_iter().map(|g| embed(ck, g, kind)).collect()
}

/// Cosine of the two pocket embeddings for every `(a, b, label)`.
pub fn pocket_match(ck: &Checkpoint, pairs: &[(BioGraph3D, BioGraph3D, bool)]) -> Result<(ScoredPairSet, f64)> {
    let a: Vec<BioGraph3D> = pairs.iter().map(|p| p.0.clone()).collect();
    let b: Vec<BioGraph3D> = pairs.iter().map(|p| p.1.clone()).collect();
    let (ea, eb) = (embed_all(ck, &a, GraphKind::Pocket)?, embed_all(ck, &b, GraphKind::Pocket)?);
    let set = ScoredPairSet::new(
        ea.iter()
            .zip(&eb)
            .zip(pairs)
            .map(|((x, y), p)| (dot(x, y), p.2))
            .collect(),
    )?;
    let auc = roc_auc(&set)?;
    Ok((set, auc))
}

/// Scores every ligand by cosine to the target pocket.
pub fn screen(ck: &Checkpoint, pocket: &BioGraph3D, ligands: &[(BioGraph3D, bool)], levels: &[f64]) -> Result<ScreenResult> {
    let target = embed(ck, pocket, GraphKind::Pocket)?;
    let graphs: Vec<BioGraph3D> = ligands.iter().map(|l| l.0.clone()).collect();
    let emb = embed_all(ck, &graphs, GraphKind::Ligand)?;
    let set = ScoredPairSet::new(emb.iter().zip(ligands).map(|(e, l)| (dot(&target, e), l.1)).collect())?;
    screen_scores(&set, levels)
}

fn parse_label(field: &str) -> Result<bool> {
    match field {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(Error::Format(format!("label must be 0 or 1, got `{other}`"))),
    }
}

/// Data lines of a manifest with their 1-based line numbers.
fn manifest_lines(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim().starts_with('#'))
        .map(|(i, l)| (i + 1, l.split_whitespace().map(str::to_string).collect()))
        .collect())
}

fn at_line(path: &Path, line: usize) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Parse {
        path: path.display().to_string(),
        line,
        message: e.to_string(),
    }
}

pub fn load_pocket_graph(ck: &Checkpoint, path: &Path) -> Result<BioGraph3D> {
    let spec = parse_pocket_file(path)?.with_cut(ck.config.cut, ck.config.k);
    build_pocket_graph(&spec)
}

pub fn load_ligand_graph(path: &Path) -> Result<BioGraph3D> {
    build_ligand_graph(&parse_ligand_file(path)?)
}

/// `pocketA pocketB 0|1` per line.
pub fn pocket_match_manifest(ck: &Checkpoint, manifest: &Path) -> Result<(ScoredPairSet, f64)> {
    let mut pairs = Vec::new();
    for (line, fields) in manifest_lines(manifest)? {
        let err = at_line(manifest, line);
        let [a, b, label] = &fields[..] else {
            return Err(err(Error::Format("expected `pocketA pocketB 0|1`".into())));
        };
        pairs.push((
            load_pocket_graph(ck, &resolve(manifest, a)).map_err(&err)?,
            load_pocket_graph(ck, &resolve(manifest, b)).map_err(&err)?,
            parse_label(label).map_err(&err)?,
        ));
    }
    pocket_match(ck, &pairs)
}

/// Target pocket file plus `ligand 0|1` per manifest line.
pub fn screen_manifest(ck: &Checkpoint, pocket: &Path, manifest: &Path, levels: &[f64]) -> Result<ScreenResult> {
    let target = load_pocket_graph(ck, pocket)?;
    let mut ligands = Vec::new();
    for (line, fields) in manifest_lines(manifest)? {
        let err = at_line(manifest, line);
        let [lig, label] = &fields[..] else {
            return Err(err(Error::Format("expected `ligand 0|1`".into())));
        };
        ligands.push((
            load_ligand_graph(&resolve(manifest, lig)).map_err(&err)?,
            parse_label(label).map_err(&err)?,
        ));
    }
    screen(ck, &target, &ligands, levels)
}

/// Logistic regression on frozen embeddings by full-batch gradient descent.
/// Returns the test-set ROC-AUC.
pub fn linear_probe(train: &[(Vec<f64>, bool)], test: &[(Vec<f64>, bool)], epochs: usize, lr: f64) -> Result<f64> {
    let d = train.first().ok_or_else(|| Error::Data("empty probe training set".into()))?.0.len();
    if train.iter().chain(test).any(|(x, _)| x.len() != d) {
        return Err(Error::Data("probe inputs differ in width".into()));
    }
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp());
    for _ in 0..epochs {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (x, y) in train {
            let err = sigmoid(dot(&w, x) + b) - f64::from(u8::from(*y));
            for (g, xi) in gw.iter_mut().zip(x) {
                *g += err * xi;
            }
            gb += err;
        }
        let m = train.len() as f64;
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * g / m;
        }
        b -= lr * gb / m;
    }
    roc_auc(&ScoredPairSet::new(test.iter().map(|(x, y)| (dot(&w, x) + b, *y)).collect())?)
}

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use super::TrainConfig;
use crate::biograph::{parse_ligand_file, parse_pocket_file};
use crate::biograph::{build_ligand_graph, build_pocket_graph, BioGraph3D, LigandSpec, PocketSpec};
use crate::fingerprint::{fingerprint, tanimoto, Fingerprint};
use crate::rng::substream_indexed;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Complex {
    pub id: String,
    pub pocket: BioGraph3D,
    pub ligand: BioGraph3D,
    pub fingerprint: Fingerprint,
}

#[derive(Debug, Clone, Default)]
pub struct ComplexDataset {
    items: Vec<Complex>,
}

impl ComplexDataset {
    pub fn new(items: Vec<Complex>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &items {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::Data(format!("duplicate complex id `{}`", c.id)));
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[Complex] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Builds one complex from parsed specs under the config's graph settings.
pub fn make_complex(id: &str, pocket: &PocketSpec, ligand: &LigandSpec, config: &TrainConfig) -> Result<Complex> {
    let pocket = pocket.clone().with_cut(config.cut, config.k);
    Ok(Complex {
        id: id.to_string(),
        pocket: build_pocket_graph(&pocket)?,
        ligand: build_ligand_graph(ligand)?,
        fingerprint: fingerprint(ligand, config.fp_radius, config.fp_width)?,
    })
}

/// Resolves a manifest entry relative to the manifest's directory.
pub fn resolve(manifest: &Path, entry: &str) -> PathBuf {
    let p = Path::new(entry);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new("")).join(p)
    }
}

/// Reads `id pocket_file ligand_file` lines. Relative paths resolve against
/// the manifest's directory; blank lines and `#` comments are skipped.
pub fn load_dataset(manifest: &Path, config: &TrainConfig) -> Result<ComplexDataset> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let source = manifest.display().to_string();
    let mut ligands: HashMap<PathBuf, (LigandSpec, Fingerprint)> = HashMap::new();
    let mut items = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at_line = |e: Error| Error::Parse {
            path: source.clone(),
            line: i + 1,
            message: e.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [id, pocket_path, ligand_path] = fields[..] else {
            return Err(at_line(Error::Format(format!(
                "expected `id pocket_file ligand_file`, found {} fields",
                fields.len()
            ))));
        };
        let pocket = parse_pocket_file(resolve(manifest, pocket_path)).map_err(at_line)?;
        let lig_path = resolve(manifest, ligand_path);
        if !ligands.contains_key(&lig_path) {
            let spec = parse_ligand_file(&lig_path).map_err(at_line)?;
            let fp = fingerprint(&spec, config.fp_radius, config.fp_width).map_err(at_line)?;
            ligands.insert(lig_path.clone(), (spec, fp));
        }
        let (spec, fp) = &ligands[&lig_path];
        let pocket = pocket.with_cut(config.cut, config.k);
        items.push(Complex {
            id: id.to_string(),
            pocket: build_pocket_graph(&pocket).map_err(at_line)?,
            ligand: build_ligand_graph(spec).map_err(at_line)?,
            fingerprint: fp.clone(),
        });
    }
    if items.is_empty() {
        return Err(Error::Data(format!("{source}: manifest lists no complexes")));
    }
    ComplexDataset::new(items)
}

/// One anchor pocket contrasted against ligands, all referenced by slot in
/// the enclosing [`BatchPlan`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorPlan {
    pub pocket: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
    /// Tanimoto of each negative ligand to the positive ligand.
    pub sims: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    pub id: usize,
    /// Dataset indices whose pockets are encoded.
    pub pockets: Vec<usize>,
    /// Dataset indices whose ligands are encoded.
    pub ligands: Vec<usize>,
    pub anchors: Vec<AnchorPlan>,
}

/// Shuffles the dataset for `epoch` and cuts it into batches. A trailing
/// single complex joins the previous batch.
pub fn make_batches(dataset: &ComplexDataset, config: &TrainConfig, epoch: usize) -> Result<Vec<BatchPlan>> {
    let n = dataset.len();
    if n < config.batch_size {
        return Err(Error::Config(format!(
            "dataset has {n} complexes, fewer than batch_size {}",
            config.batch_size
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream_indexed(config.seed, "shuffle", epoch as u64));
    let mut groups: Vec<Vec<usize>> = order.chunks(config.batch_size).map(<[usize]>::to_vec).collect();
    if groups.len() > 1 && groups.last().unwrap().len() == 1 {
        let last = groups.pop().unwrap();
        groups.last_mut().unwrap().extend(last);
    }
    let mut neg_rng = substream_indexed(config.seed, "negatives", epoch as u64);
    let fp = |i: usize| &dataset.items[i].fingerprint;
    groups
        .into_iter()
        .enumerate()
        .map(|(id, pockets)| {
            let mut ligands = pockets.clone();
            let mut anchors = Vec::with_capacity(pockets.len());
            for (slot, &item) in pockets.iter().enumerate() {
                let negatives: Vec<usize> = if config.global_negatives {
                    (0..pockets.len() - 1)
                        .map(|_| {
                            let mut j = neg_rng.random_range(0..n - 1);
                            if j >= item {
                                j += 1;
                            }
                            ligands.push(j);
                            ligands.len() - 1
                        })
                        .collect()
                } else {
                    (0..pockets.len()).filter(|&s| s != slot).collect()
                };
                let sims = negatives
                    .iter()
                    .map(|&s| tanimoto(fp(item), fp(ligands[s])))
                    .collect::<Result<_>>()?;
                anchors.push(AnchorPlan {
                    pocket: slot,
                    positive: slot,
                    negatives,
                    sims,
                });
            }
            Ok(BatchPlan {
                id,
                pockets,
                ligands,
                anchors,
            })
        })
        .collect()
}

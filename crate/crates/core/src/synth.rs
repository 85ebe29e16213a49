//! Synthetic data: random graphs for property tests, and pocket/ligand families
//! for desk-scale end-to-end runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::biograph::geom::{add, dist2, norm3, scale, RigidMotion, Vec3};
use crate::biograph::{write_ligand, write_pocket};
use crate::biograph::{
    build_ligand_graph, build_pocket_graph, AminoAcid, Atom, BioGraph3D, Bond, BondOrder, Element,
    LigandSpec, PocketSpec, Residue,
};
use crate::fingerprint::{fingerprint, tanimoto, Fingerprint, DEFAULT_RADIUS, DEFAULT_WIDTH};
use crate::rng::substream;
use crate::{Error, Result};

/// Random pocket graph with `n` residues scattered in a 16 Å box around one
/// ligand atom (all residues survive the cut).
pub fn random_pocket_graph<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> BioGraph3D {
    let residues = (0..n)
        .map(|id| Residue {
            id,
            amino_acid: AminoAcid::from_index(rng.random_range(0..20)).unwrap(),
            ca: [
                rng.random_range(-8.0..8.0),
                rng.random_range(-8.0..8.0),
                rng.random_range(-8.0..8.0),
            ],
        })
        .collect();
    let spec = PocketSpec::new(residues, vec![[0.0; 3]]).with_cut(100.0, k);
    build_pocket_graph(&spec).expect("non-empty pocket")
}

/// Random connected ligand: a random tree plus a few ring-closing bonds.
pub fn random_ligand_spec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> LigandSpec {
    const ELEMS: [&str; 8] = ["C", "C", "C", "N", "O", "S", "F", "Cl"];
    let atoms: Vec<Atom> = (0..n)
        .map(|_| Atom {
            element: Element::from_symbol(ELEMS[rng.random_range(0..ELEMS.len())]).unwrap(),
            coord: [
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
            ],
            charge: 0,
        })
        .collect();
    let order = |rng: &mut R| BondOrder::from_code(rng.random_range(1..=4)).unwrap();
    let mut bonds: Vec<Bond> = (1..n)
        .map(|j| Bond {
            i: rng.random_range(0..j),
            j,
            order: order(rng),
        })
        .collect();
    for _ in 0..n / 4 {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        let exists = bonds
            .iter()
            .any(|b| (b.i == i && b.j == j) || (b.i == j && b.j == i));
        if i != j && !exists {
            bonds.push(Bond {
                i,
                j,
                order: order(rng),
            });
        }
    }
    LigandSpec { atoms, bonds }
}

pub fn random_ligand_graph<R: Rng + ?Sized>(rng: &mut R, n: usize) -> BioGraph3D {
    build_ligand_graph(&random_ligand_spec(rng, n)).expect("valid ligand")
}

/// Settings for [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub families: usize,
    pub per_family: usize,
    pub seed: u64,
    pub ligand_atoms: usize,
    pub pocket_residues: usize,
    /// Coordinate jitter σ in Å applied to every copy.
    pub jitter: f64,
    /// Extra complexes, as a fraction of the base set, that reuse an existing
    /// complex's files under a new id.
    pub duplicate_frac: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            families: 4,
            per_family: 50,
            seed: 0,
            ligand_atoms: 10,
            pocket_residues: 14,
            jitter: 0.3,
            duplicate_frac: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthComplex {
    pub id: String,
    pub family: usize,
    pub pocket: PocketSpec,
    pub ligand: LigandSpec,
    /// Index of the complex this one duplicates, if any.
    pub duplicate_of: Option<usize>,
}

const SCAFFOLD_MAX_TANIMOTO: f64 = 0.5;

fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let v: Vec3 = [
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    ];
    let n = norm3(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Random tree-plus-rings topology laid out by a self-avoiding random walk at
/// 1.5 Å bond length.
fn scaffold<R: Rng + ?Sized>(rng: &mut R, n: usize) -> LigandSpec {
    let mut spec = random_ligand_spec(rng, n);
    let adj = spec.adjacency();
    let mut placed = vec![false; n];
    spec.atoms[0].coord = [0.0; 3];
    placed[0] = true;
    let mut queue = std::collections::VecDeque::from([0]);
    while let Some(a) = queue.pop_front() {
        for &(b, _) in &adj[a] {
            if placed[b] {
                continue;
            }
            let mut best = (f64::NEG_INFINITY, [0.0; 3]);
            for _ in 0..20 {
                let c = add(spec.atoms[a].coord, scale(unit_vector(rng), 1.5));
                let clearance = (0..n)
                    .filter(|&o| placed[o])
                    .map(|o| dist2(c, spec.atoms[o].coord))
                    .fold(f64::INFINITY, f64::min);
                if clearance > best.0 {
                    best = (clearance, c);
                }
            }
            spec.atoms[b].coord = best.1;
            placed[b] = true;
            queue.push_back(b);
        }
    }
    spec
}

/// Residues on a shell 4–7 Å from randomly chosen ligand atoms.
fn pocket_template<R: Rng + ?Sized>(rng: &mut R, ligand: &LigandSpec, residues: usize) -> Vec<Residue> {
    // Each family favours its own handful of residue types.
    let palette: Vec<usize> = (0..5).map(|_| rng.random_range(0..20)).collect();
    (0..residues)
        .map(|id| {
            let anchor = ligand.atoms[rng.random_range(0..ligand.atoms.len())].coord;
            let r = rng.random_range(4.0..7.0);
            let aa = if rng.random_bool(0.8) {
                palette[rng.random_range(0..palette.len())]
            } else {
                rng.random_range(0..20)
            };
            Residue {
                id,
                amino_acid: AminoAcid::from_index(aa).unwrap(),
                ca: add(anchor, scale(unit_vector(rng), r)),
            }
        })
        .collect()
}

fn jittered<R: Rng + ?Sized>(rng: &mut R, p: Vec3, sigma: f64, motion: &RigidMotion) -> Vec3 {
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    motion.apply([p[0] + noise.sample(rng), p[1] + noise.sample(rng), p[2] + noise.sample(rng)])
}

/// Families of noisy, rigidly moved copies of one pocket template and one
/// ligand scaffold each. Scaffolds of different families have Tanimoto below
/// 0.5 under the default fingerprint.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthComplex>> {
    if cfg.families == 0 || cfg.per_family == 0 {
        return Err(Error::Config("families and per_family must be at least 1".into()));
    }
    if cfg.ligand_atoms < 3 || cfg.pocket_residues == 0 {
        return Err(Error::Config("need at least 3 ligand atoms and 1 residue".into()));
    }
    if !(cfg.jitter.is_finite() && cfg.jitter >= 0.0) || !(0.0..=1.0).contains(&cfg.duplicate_frac) {
        return Err(Error::Config("jitter must be non-negative and duplicate_frac in [0, 1]".into()));
    }
    let mut rng = substream(cfg.seed, "synth/templates");
    let mut scaffolds: Vec<(LigandSpec, Fingerprint)> = Vec::new();
    let mut attempts = 0;
    while scaffolds.len() < cfg.families {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::Data("could not find chemically distinct scaffolds".into()));
        }
        let spec = scaffold(&mut rng, cfg.ligand_atoms);
        let fp = fingerprint(&spec, DEFAULT_RADIUS, DEFAULT_WIDTH)?;
        let distinct = scaffolds
            .iter()
            .all(|(_, other)| tanimoto(&fp, other).is_ok_and(|t| t < SCAFFOLD_MAX_TANIMOTO));
        if distinct {
            scaffolds.push((spec, fp));
        }
    }
    let templates: Vec<Vec<Residue>> = scaffolds
        .iter()
        .map(|(lig, _)| pocket_template(&mut rng, lig, cfg.pocket_residues))
        .collect();

    let mut rng = substream(cfg.seed, "synth/copies");
    let mut out = Vec::with_capacity(cfg.families * cfg.per_family);
    for (fam, ((lig, _), residues)) in scaffolds.iter().zip(&templates).enumerate() {
        for c in 0..cfg.per_family {
            let motion = RigidMotion::random(&mut rng, 20.0);
            let mut ligand = lig.clone();
            for atom in &mut ligand.atoms {
                atom.coord = jittered(&mut rng, atom.coord, cfg.jitter, &motion);
            }
            let residues = residues
                .iter()
                .map(|r| Residue {
                    ca: jittered(&mut rng, r.ca, cfg.jitter, &motion),
                    ..r.clone()
                })
                .collect();
            let pocket = PocketSpec::new(residues, ligand.atoms.iter().map(|a| a.coord).collect());
            out.push(SynthComplex {
                id: format!("f{fam}_c{c:03}"),
                family: fam,
                pocket,
                ligand,
                duplicate_of: None,
            });
        }
    }
    let extra = (cfg.duplicate_frac * out.len() as f64).round() as usize;
    let mut rng = substream(cfg.seed, "synth/duplicates");
    let base = out.len();
    for d in 0..extra {
        let src = rng.random_range(0..base);
        out.push(SynthComplex {
            id: format!("{}_dup{d:03}", out[src].id),
            duplicate_of: Some(src),
            ..out[src].clone()
        });
    }
    Ok(out)
}

/// Writes `pockets/`, `ligands/`, `manifest.txt` (`id pocket ligand`) and
/// `families.txt` (`id family`) under `dir`. Duplicates reuse their source's
/// files. Returns the manifest path.
pub fn write_synth(dir: &Path, complexes: &[SynthComplex]) -> Result<PathBuf> {
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    let write = |p: &Path, s: &str| std::fs::write(p, s).map_err(|e| Error::io(p, e));
    mkdir(&dir.join("pockets"))?;
    mkdir(&dir.join("ligands"))?;
    let mut manifest = String::new();
    let mut families = String::new();
    for c in complexes {
        let stem = c.duplicate_of.map_or(c.id.as_str(), |s| complexes[s].id.as_str());
        let pocket = format!("pockets/{stem}.pocket");
        let ligand = format!("ligands/{stem}.lig");
        if c.duplicate_of.is_none() {
            write(&dir.join(&pocket), &write_pocket(&c.pocket))?;
            write(&dir.join(&ligand), &write_ligand(&c.ligand))?;
        }
        writeln!(manifest, "{} {pocket} {ligand}", c.id).unwrap();
        writeln!(families, "{} {}", c.id, c.family).unwrap();
    }
    let path = dir.join("manifest.txt");
    write(&path, &manifest)?;
    write(&dir.join("families.txt"), &families)?;
    Ok(path)
}

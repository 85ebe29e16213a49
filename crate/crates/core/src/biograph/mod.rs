//! 3D graphs for pockets and ligands.
//!
//! Pockets are built from residue Cα positions within a cut radius of the bound
//! ligand, connected by symmetrized k-nearest-neighbour edges. Ligands are
//! heavy-atom graphs whose edges are the covalent bonds. Both carry a per-node
//! direction vector pointing at the centroid of the node's neighbours.
//!
//! Node and edge features are zero-padded to [`NODE_FEATURE_DIM`] and
//! [`EDGE_FEATURE_DIM`] so one encoder body serves both kinds.

mod elements;
pub mod geom;
mod io;

pub use elements::{AminoAcid, Element, AMINO_ACID_COUNT, LIGAND_VOCAB_SIZE};
pub use io::{
    parse_ligand_file, parse_ligand_str, parse_pocket_file, parse_pocket_str, write_ligand,
    write_pocket,
};

use geom::{dist2, norm3, scale, sub, RigidMotion, Vec3};

use crate::{Error, Result};

pub const NODE_FEATURE_DIM: usize = 20;
pub const EDGE_FEATURE_DIM: usize = 4;
pub const DEFAULT_CUT_RADIUS: f64 = 10.0;
pub const DEFAULT_K: usize = 8;

/// Centroids closer than this to the node itself yield a zero direction.
const DIRECTION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphKind {
    Pocket,
    Ligand,
}

impl std::fmt::Display for GraphKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GraphKind::Pocket => "pocket",
            GraphKind::Ligand => "ligand",
        })
    }
}

impl std::str::FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pocket" => Ok(GraphKind::Pocket),
            "ligand" => Ok(GraphKind::Ligand),
            other => Err(Error::Usage(format!("unknown graph kind {other:?}"))),
        }
    }
}

/// Directed edge `(i, j)`: node `j` is a neighbour of node `i`, and the message
/// computed on this edge is aggregated into `i`.
pub type EdgeIndex = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct BioGraph3D {
    pub kind: GraphKind,
    pub coords: Vec<Vec3>,
    pub node_features: Vec<Vec<f64>>,
    pub edges: Vec<EdgeIndex>,
    pub edge_features: Vec<Vec<f64>>,
    pub directions: Vec<Vec3>,
}

impl BioGraph3D {
    /// Assembles a graph and initializes its direction vectors.
    pub fn new(
        kind: GraphKind,
        coords: Vec<Vec3>,
        node_features: Vec<Vec<f64>>,
        edges: Vec<EdgeIndex>,
        edge_features: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = coords.len();
        let graph = Self {
            kind,
            directions: vec![[0.0; 3]; n],
            coords,
            node_features,
            edges,
            edge_features,
        };
        graph.validate()?;
        Ok(init_directions(graph))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.coords.len();
        if self.node_features.len() != n || self.directions.len() != n {
            return Err(Error::Format("per-node arrays disagree on node count".into()));
        }
        if self.edges.len() != self.edge_features.len() {
            return Err(Error::Format("edge list and edge features disagree".into()));
        }
        if self.node_features.iter().any(|f| f.len() != NODE_FEATURE_DIM)
            || self.edge_features.iter().any(|f| f.len() != EDGE_FEATURE_DIM)
        {
            return Err(Error::Format("feature width mismatch".into()));
        }
        for &(i, j) in &self.edges {
            if i >= n || j >= n {
                return Err(Error::Format(format!("edge ({i},{j}) out of range for {n} nodes")));
            }
            if i == j {
                return Err(Error::Format(format!("self-edge on node {i}")));
            }
        }
        if self.coords.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Format("non-finite coordinate".into()));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Applies `motion` to coordinates (rotation + translation) and directions
    /// (rotation only).
    pub fn transformed(&self, motion: &RigidMotion) -> Self {
        let mut g = self.clone();
        g.coords.iter_mut().for_each(|c| *c = motion.apply(*c));
        g.directions.iter_mut().for_each(|d| *d = motion.rotate(*d));
        g
    }

    /// Relabels nodes so that new node `p` is old node `perm[p]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.node_count();
        assert_eq!(perm.len(), n);
        let mut inverse = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut edges: Vec<(EdgeIndex, Vec<f64>)> = self
            .edges
            .iter()
            .zip(&self.edge_features)
            .map(|(&(i, j), f)| ((inverse[i], inverse[j]), f.clone()))
            .collect();
        edges.sort_by(|a, b| a.0.cmp(&b.0));
        Self {
            kind: self.kind,
            coords: perm.iter().map(|&o| self.coords[o]).collect(),
            node_features: perm.iter().map(|&o| self.node_features[o].clone()).collect(),
            directions: perm.iter().map(|&o| self.directions[o]).collect(),
            edge_features: edges.iter().map(|e| e.1.clone()).collect(),
            edges: edges.into_iter().map(|e| e.0).collect(),
        }
    }

    /// Neighbour lists, `neighbors()[i]` = every `j` with an edge `(i, j)`.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for &(i, j) in &self.edges {
            adj[i].push(j);
        }
        adj
    }
}

/// Sets each `n_i` to the unit vector from `x_i` towards the centroid of its
/// neighbours, or to zero when the node is isolated or sits on that centroid.
pub fn init_directions(mut graph: BioGraph3D) -> BioGraph3D {
    let adj = graph.neighbors();
    graph.directions = adj
        .iter()
        .enumerate()
        .map(|(i, nbrs)| {
            if nbrs.is_empty() {
                return [0.0; 3];
            }
            let mut c = [0.0; 3];
            for &j in nbrs {
                for k in 0..3 {
                    c[k] += graph.coords[j][k];
                }
            }
            let centroid = scale(c, 1.0 / nbrs.len() as f64);
            let v = sub(centroid, graph.coords[i]);
            let len = norm3(v);
            if len < DIRECTION_EPS {
                [0.0; 3]
            } else {
                scale(v, 1.0 / len)
            }
        })
        .collect();
    graph
}

/// Symmetrized k-nearest-neighbour edges, sorted lexicographically.
///
/// Each node picks its `k` closest other nodes (ties go to the smaller index);
/// the result keeps both directions whenever either endpoint picked the other.
pub fn knn_edges(coords: &[Vec3], k: usize) -> Vec<EdgeIndex> {
    let n = coords.len();
    let mut picked = vec![false; n * n];
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| (dist2(coords[i], coords[j]), j)));
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in cand.iter().take(k) {
            picked[i * n + j] = true;
            picked[j * n + i] = true;
        }
    }
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| picked[i * n + j])
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residue {
    pub id: usize,
    pub amino_acid: AminoAcid,
    pub ca: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PocketSpec {
    pub residues: Vec<Residue>,
    pub ligand_atoms: Vec<Vec3>,
    pub cut_radius: f64,
    pub k: usize,
}

impl PocketSpec {
    pub fn new(residues: Vec<Residue>, ligand_atoms: Vec<Vec3>) -> Self {
        Self {
            residues,
            ligand_atoms,
            cut_radius: DEFAULT_CUT_RADIUS,
            k: DEFAULT_K,
        }
    }

    pub fn with_cut(mut self, cut_radius: f64, k: usize) -> Self {
        self.cut_radius = cut_radius;
        self.k = k;
        self
    }
}

pub fn build_pocket_graph(spec: &PocketSpec) -> Result<BioGraph3D> {
    if !(spec.cut_radius.is_finite() && spec.cut_radius > 0.0) {
        return Err(Error::Config(format!("cut radius must be positive, got {}", spec.cut_radius)));
    }
    if spec.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let cut2 = spec.cut_radius * spec.cut_radius;
    let kept: Vec<&Residue> = spec
        .residues
        .iter()
        .filter(|r| spec.ligand_atoms.iter().any(|&a| dist2(r.ca, a) <= cut2))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyPocket {
            radius: spec.cut_radius,
        });
    }
    let coords: Vec<Vec3> = kept.iter().map(|r| r.ca).collect();
    let node_features = kept
        .iter()
        .map(|r| one_hot(r.amino_acid.index(), NODE_FEATURE_DIM))
        .collect();
    let edges = knn_edges(&coords, spec.k);
    let edge_features = edges
        .iter()
        .map(|&(i, j)| {
            let mut f = vec![0.0; EDGE_FEATURE_DIM];
            f[0] = dist2(coords[i], coords[j]).sqrt();
            f
        })
        .collect();
    BioGraph3D::new(GraphKind::Pocket, coords, node_features, edges, edge_features)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// File encoding: 1, 2, 3, or 4 for aromatic.
    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(BondOrder::Single),
            2 => Ok(BondOrder::Double),
            3 => Ok(BondOrder::Triple),
            4 => Ok(BondOrder::Aromatic),
            other => Err(Error::Format(format!("unknown bond order {other}"))),
        }
    }

    pub fn code(self) -> u32 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub element: Element,
    pub coord: Vec3,
    pub charge: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub order: BondOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LigandSpec {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
}

impl LigandSpec {
    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::EmptyMolecule);
        }
        if self.atoms.iter().any(|a| a.element.is_hydrogen()) {
            return Err(Error::Format("hydrogens must be removed from ligands".into()));
        }
        let n = self.atoms.len();
        let mut seen = std::collections::HashSet::new();
        for b in &self.bonds {
            if b.i >= n || b.j >= n {
                return Err(Error::Format(format!(
                    "bond {}-{} references a missing atom ({n} atoms)",
                    b.i, b.j
                )));
            }
            if b.i == b.j {
                return Err(Error::Format(format!("bond from atom {} to itself", b.i)));
            }
            if !seen.insert((b.i.min(b.j), b.i.max(b.j))) {
                return Err(Error::Format(format!("duplicate bond {}-{}", b.i, b.j)));
            }
        }
        Ok(())
    }

    /// `(neighbour, bond order)` lists per atom.
    pub fn adjacency(&self) -> Vec<Vec<(usize, BondOrder)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for b in &self.bonds {
            adj[b.i].push((b.j, b.order));
            adj[b.j].push((b.i, b.order));
        }
        adj
    }
}

pub fn build_ligand_graph(spec: &LigandSpec) -> Result<BioGraph3D> {
    spec.validate()?;
    let coords = spec.atoms.iter().map(|a| a.coord).collect();
    let node_features = spec
        .atoms
        .iter()
        .map(|a| one_hot(a.element.vocab_index(), NODE_FEATURE_DIM))
        .collect();
    let mut edges: Vec<(EdgeIndex, BondOrder)> = spec
        .bonds
        .iter()
        .flat_map(|b| [((b.i, b.j), b.order), ((b.j, b.i), b.order)])
        .collect();
    edges.sort_by(|a, b| a.0.cmp(&b.0));
    let edge_features = edges
        .iter()
        .map(|(_, order)| one_hot(order.code() as usize - 1, EDGE_FEATURE_DIM))
        .collect();
    BioGraph3D::new(
        GraphKind::Ligand,
        coords,
        node_features,
        edges.into_iter().map(|e| e.0).collect(),
        edge_features,
    )
}

fn one_hot(index: usize, width: usize) -> Vec<f64> {
    let mut v = vec![0.0; width];
    v[index] = 1.0;
    v
}

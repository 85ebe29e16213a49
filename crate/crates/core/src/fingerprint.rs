//! Hashed circular substructure fingerprints (ECFP-like) and Tanimoto
//! similarity.
//!
//! Each atom contributes one bit per radius `r ≤ radius`: the canonical string
//! of its unrolled `r`-neighbourhood tree (element symbols, bond-order codes,
//! children sorted) hashed with FNV-1a and reduced modulo the width. A radius
//! whose ball adds no atoms over the previous one contributes nothing, so an
//! isolated atom yields a single environment.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::biograph::{BondOrder, LigandSpec};
use crate::{Error, Result};

pub const DEFAULT_WIDTH: usize = 2048;
pub const DEFAULT_RADIUS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    width: usize,
    radius: usize,
    bits: Vec<u32>,
}

impl Fingerprint {
    /// Builds a fingerprint from arbitrary indices (sorted and deduplicated).
    pub fn from_bits(width: usize, radius: usize, bits: impl IntoIterator<Item = u32>) -> Result<Self> {
        let set: BTreeSet<u32> = bits.into_iter().collect();
        if width == 0 || set.iter().next_back().is_some_and(|&b| b as usize >= width) {
            return Err(Error::Config(format!("fingerprint bits must lie below width {width}")));
        }
        Ok(Self {
            width,
            radius,
            bits: set.into_iter().collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Set bit indices, ascending.
    pub fn bits(&self) -> &[u32] {
        &self.bits
    }

    /// `id width b1 b2 …`
    pub fn dump_line(&self, id: &str) -> String {
        let mut s = format!("{id} {}", self.width);
        for b in &self.bits {
            write!(s, " {b}").unwrap();
        }
        s
    }

    /// Inverse of [`Fingerprint::dump_line`]. The radius is not recorded in
    /// the dump and comes back as the default.
    pub fn parse_dump_line(line: &str) -> Result<(String, Self)> {
        let bad = |m: &str| Error::Format(format!("fingerprint dump line `{line}`: {m}"));
        let mut fields = line.split_whitespace();
        let id = fields.next().ok_or_else(|| bad("missing id"))?;
        let width = fields
            .next()
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| bad("missing width"))?;
        let bits = fields
            .map(|b| b.parse::<u32>().map_err(|_| bad("bad bit index")))
            .collect::<Result<Vec<_>>>()?;
        Ok((id.to_string(), Self::from_bits(width, DEFAULT_RADIUS, bits)?))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn bond_symbol(order: BondOrder) -> char {
    match order {
        BondOrder::Single => '-',
        BondOrder::Double => '=',
        BondOrder::Triple => '#',
        BondOrder::Aromatic => ':',
    }
}

struct Env<'a> {
    spec: &'a LigandSpec,
    adj: Vec<Vec<(usize, BondOrder)>>,
}

impl Env<'_> {
    fn atom_label(&self, a: usize) -> String {
        let atom = &self.spec.atoms[a];
        match atom.charge {
            0 => atom.element.symbol().to_string(),
            c => format!("{}{c:+}", atom.element.symbol()),
        }
    }

    /// Canonical unrolled tree of depth `depth` rooted at `a`, not walking
    /// straight back to `parent`.
    fn tree(&self, a: usize, parent: Option<usize>, depth: usize) -> String {
        let mut s = self.atom_label(a);
        if depth == 0 {
            return s;
        }
        let mut children: Vec<String> = self.adj[a]
            .iter()
            .filter(|&&(b, _)| Some(b) != parent)
            .map(|&(b, order)| format!("{}{}", bond_symbol(order), self.tree(b, Some(a), depth - 1)))
            .collect();
        if !children.is_empty() {
            children.sort_unstable();
            s.push('(');
            s.push_str(&children.join(","));
            s.push(')');
        }
        s
    }

    /// Sizes of the graph-distance balls of radius `0..=radius` around `a`.
    fn ball_sizes(&self, a: usize, radius: usize) -> Vec<usize> {
        let mut seen = vec![false; self.adj.len()];
        seen[a] = true;
        let mut frontier = vec![a];
        let mut sizes = vec![1];
        for _ in 0..radius {
            let mut next = Vec::new();
            for &v in &frontier {
                for &(w, _) in &self.adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        next.push(w);
                    }
                }
            }
            sizes.push(sizes.last().unwrap() + next.len());
            frontier = next;
        }
        sizes
    }
}

pub fn fingerprint(ligand: &LigandSpec, radius: usize, width: usize) -> Result<Fingerprint> {
    if ligand.atoms.is_empty() {
        return Err(Error::EmptyMolecule);
    }
    if width == 0 {
        return Err(Error::Config("fingerprint width must be positive".into()));
    }
    let env = Env {
        spec: ligand,
        adj: ligand.adjacency(),
    };
    let mut bits = BTreeSet::new();
    for a in 0..ligand.atoms.len() {
        let sizes = env.ball_sizes(a, radius);
        for r in 0..=radius {
            if r > 0 && sizes[r] == sizes[r - 1] {
                break;
            }
            let key = format!("{r}|{}", env.tree(a, None, r));
            bits.insert((fnv1a(key.as_bytes()) % width as u64) as u32);
        }
    }
    Ok(Fingerprint {
        width,
        radius,
        bits: bits.into_iter().collect(),
    })
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets counting as identical.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64> {
    if a.width != b.width {
        return Err(Error::Config(format!(
            "fingerprint widths differ: {} vs {}",
            a.width, b.width
        )));
    }
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.bits.len() && j < b.bits.len() {
        match a.bits[i].cmp(&b.bits[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.bits.len() + b.bits.len() - common;
    Ok(if union == 0 { 1.0 } else { common as f64 / union as f64 })
}

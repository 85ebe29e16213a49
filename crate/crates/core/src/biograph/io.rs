//! Line-oriented ligand and pocket file formats.
//!
//! Ligand:
//! ```text
//! ATOMS n BONDS m
//! <element> <x> <y> <z> [charge]     (n lines)
//! <i> <j> <order>                    (m lines, 0-indexed, order 1|2|3|4=aromatic)
//! ```
//!
//! Pocket:
//! ```text
//! RESIDUES n LIGATOMS m
//! <aa3> <x> <y> <z>                  (n lines)
//! <x> <y> <z>                        (m lines, ligand atoms for the distance cut)
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Hydrogens are dropped
//! while parsing ligands, along with any bond that touches one.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{Atom, Bond, BondOrder, Element, LigandSpec, PocketSpec, Residue, AminoAcid};
use super::geom::Vec3;
use crate::{Error, Result};

struct Lines<'a> {
    source: &'a str,
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, Vec<&'a str>)> + 'a>>,
    last_line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, source: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, Vec<&'a str>)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
                .map(|(i, l)| (i, l.split_whitespace().collect())),
        );
        Self {
            source,
            inner: it.peekable(),
            last_line: text.lines().count(),
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.to_string(),
            line,
            message: message.into(),
        }
    }

    fn next_record(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        match self.inner.next() {
            Some(r) => Ok(r),
            None => Err(self.err(self.last_line + 1, format!("unexpected end of file, expected {what}"))),
        }
    }

    fn expect_end(&mut self) -> Result<()> {
        match self.inner.next() {
            Some((line, _)) => Err(self.err(line, "unexpected line after the declared records")),
            None => Ok(()),
        }
    }

    fn number<T: FromStr>(&self, line: usize, tok: &str, what: &str) -> Result<T> {
        tok.parse()
            .map_err(|_| self.err(line, format!("invalid {what} {tok:?}")))
    }

    fn coords(&self, line: usize, toks: &[&str]) -> Result<Vec3> {
        let mut c: Vec3 = [0.0; 3];
        for (k, t) in toks.iter().enumerate() {
            c[k] = self.number(line, t, "coordinate")?;
            if !c[k].is_finite() {
                return Err(self.err(line, "non-finite coordinate"));
            }
        }
        Ok(c)
    }

    fn header(&mut self, first: &str, second: &str) -> Result<(usize, usize)> {
        let (line, toks) = self.next_record("header")?;
        if toks.len() != 4 || toks[0] != first || toks[2] != second {
            return Err(self.err(line, format!("expected header `{first} n {second} m`")));
        }
        Ok((
            self.number(line, toks[1], "count")?,
            self.number(line, toks[3], "count")?,
        ))
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_ligand_file(path: impl AsRef<Path>) -> Result<LigandSpec> {
    let path = path.as_ref();
    parse_ligand_str(&read(path)?, &path.display().to_string())
}

pub fn parse_pocket_file(path: impl AsRef<Path>) -> Result<PocketSpec> {
    let path = path.as_ref();
    parse_pocket_str(&read(path)?, &path.display().to_string())
}

pub fn parse_ligand_str(text: &str, source: &str) -> Result<LigandSpec> {
    let mut lines = Lines::new(text, source);
    let (n_atoms, n_bonds) = lines.header("ATOMS", "BONDS")?;

    // Original index -> index after hydrogen removal.
    let mut remap: Vec<Option<usize>> = Vec::with_capacity(n_atoms);
    let mut atoms = Vec::new();
    for _ in 0..n_atoms {
        let (line, toks) = lines.next_record("atom line")?;
        if toks.len() != 4 && toks.len() != 5 {
            return Err(lines.err(line, "atom line must be `element x y z [charge]`"));
        }
        let element = Element::from_symbol(toks[0])
            .map_err(|e| Error::Format(format!("{source}:{line}: {e}")))?;
        let coord = lines.coords(line, &toks[1..4])?;
        let charge = match toks.get(4) {
            Some(t) => lines.number(line, t, "charge")?,
            None => 0,
        };
        if element.is_hydrogen() {
            remap.push(None);
        } else {
            remap.push(Some(atoms.len()));
            atoms.push(Atom {
                element,
                coord,
                charge,
            });
        }
    }

    let mut bonds = Vec::new();
    for _ in 0..n_bonds {
        let (line, toks) = lines.next_record("bond line")?;
        if toks.len() != 3 {
            return Err(lines.err(line, "bond line must be `i j order`"));
        }
        let i: usize = lines.number(line, toks[0], "atom index")?;
        let j: usize = lines.number(line, toks[1], "atom index")?;
        let order = BondOrder::from_code(lines.number(line, toks[2], "bond order")?)
            .map_err(|e| Error::Format(format!("{source}:{line}: {e}")))?;
        let (Some(&ri), Some(&rj)) = (remap.get(i), remap.get(j)) else {
            return Err(Error::Format(format!(
                "{source}:{line}: bond {i}-{j} references a missing atom ({n_atoms} atoms)"
            )));
        };
        if let (Some(i), Some(j)) = (ri, rj) {
            bonds.push(Bond { i, j, order });
        }
    }
    lines.expect_end()?;

    let spec = LigandSpec { atoms, bonds };
    spec.validate()?;
    Ok(spec)
}

pub fn parse_pocket_str(text: &str, source: &str) -> Result<PocketSpec> {
    let mut lines = Lines::new(text, source);
    let (n_res, n_lig) = lines.header("RESIDUES", "LIGATOMS")?;
    let mut residues = Vec::with_capacity(n_res);
    for id in 0..n_res {
        let (line, toks) = lines.next_record("residue line")?;
        if toks.len() != 4 {
            return Err(lines.err(line, "residue line must be `aa3 x y z`"));
        }
        let amino_acid = AminoAcid::from_code(toks[0])
            .map_err(|e| Error::Format(format!("{source}:{line}: {e}")))?;
        residues.push(Residue {
            id,
            amino_acid,
            ca: lines.coords(line, &toks[1..])?,
        });
    }
    let mut ligand_atoms = Vec::with_capacity(n_lig);
    for _ in 0..n_lig {
        let (line, toks) = lines.next_record("ligand atom line")?;
        if toks.len() != 3 {
            return Err(lines.err(line, "ligand atom line must be `x y z`"));
        }
        ligand_atoms.push(lines.coords(line, &toks)?);
    }
    lines.expect_end()?;
    Ok(PocketSpec::new(residues, ligand_atoms))
}

fn fmt_coord(c: &Vec3) -> String {
    format!("{} {} {}", c[0], c[1], c[2])
}

pub fn write_ligand(spec: &LigandSpec) -> String {
    let mut out = format!("ATOMS {} BONDS {}\n", spec.atoms.len(), spec.bonds.len());
    for a in &spec.atoms {
        let _ = write!(out, "{} {}", a.element, fmt_coord(&a.coord));
        if a.charge != 0 {
            let _ = write!(out, " {}", a.charge);
        }
        out.push('\n');
    }
    for b in &spec.bonds {
        let _ = writeln!(out, "{} {} {}", b.i, b.j, b.order.code());
    }
    out
}

pub fn write_pocket(spec: &PocketSpec) -> String {
    let mut out = format!(
        "RESIDUES {} LIGATOMS {}\n",
        spec.residues.len(),
        spec.ligand_atoms.len()
    );
    for r in &spec.residues {
        let _ = writeln!(out, "{} {}", r.amino_acid.code(), fmt_coord(&r.ca));
    }
    for a in &spec.ligand_atoms {
        let _ = writeln!(out, "{}", fmt_coord(a));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ETHANOL: &str = "ATOMS 4 BONDS 3\nC 0 0 0\nC 1.5 0 0\nO 2.1 1.2 0 -1\nH 3 1 0\n0 1 1\n1 2 1\n2 3 1\n";

    fn tokens(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn ligand_counts_and_hydrogen_removal() {
        let two = parse_ligand_str("ATOMS 2 BONDS 1\nC 0 0 0\nN 1.4 0 0\n0 1 2\n", "t").unwrap();
        assert_eq!((two.atoms.len(), two.bonds.len()), (2, 1));
        assert_eq!(two.bonds[0].order, BondOrder::Double);

        let e = parse_ligand_str(ETHANOL, "t").unwrap();
        assert_eq!((e.atoms.len(), e.bonds.len()), (3, 2));
        assert_eq!(e.atoms[2].charge, -1);
    }

    #[test]
    fn ligand_errors_carry_line_numbers() {
        match parse_ligand_str("ATOMS 1 BONDS 0\nC 0 zero 0\n", "f.lig") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_ligand_str("ATOMS 1 BONDS 0\nQq 0 0 0\n", "f"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            parse_ligand_str("ATOMS 1 BONDS 1\nC 0 0 0\n0 4 1\n", "f"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            parse_ligand_str("ATOMS 2 BONDS 0\nC 0 0 0\n", "f"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_ligand_str("ATOMS 1 BONDS 0\nH 0 0 0\n", "f"),
            Err(Error::EmptyMolecule)
        ));
    }

    #[test]
    fn pocket_parsing() {
        let p = parse_pocket_str(
            "# comment\nRESIDUES 2 LIGATOMS 1\nALA 0 0 0\ngly 1 2 3\n\n0.5 0.5 0.5\n",
            "p",
        )
        .unwrap();
        assert_eq!(p.residues.len(), 2);
        assert_eq!(p.residues[1].amino_acid.code(), "GLY");
        assert_eq!(p.ligand_atoms, vec![[0.5, 0.5, 0.5]]);
    }

    #[test]
    fn residue_outside_header_is_parse_error() {
        assert!(matches!(
            parse_pocket_str("ALA 0 0 0\nRESIDUES 1 LIGATOMS 0\nALA 0 0 0\n", "p"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_pocket_str("RESIDUES 1 LIGATOMS 0\nALA 0 0 0\nGLY 1 1 1\n", "p"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn writer_reproduces_canonical_files() {
        let text = "ATOMS 3 BONDS 2\nC 0 0 0\nC 1.5 0 0\nO 2.1 1.2 0 -1\n0 1 1\n1 2 4\n";
        let spec = parse_ligand_str(text, "t").unwrap();
        assert_eq!(tokens(&write_ligand(&spec)), tokens(text));

        let text = "RESIDUES 2 LIGATOMS 1\n  ALA 0.25 -1 3\nTRP 4 5 6\n0 0 0\n";
        let spec = parse_pocket_str(text, "t").unwrap();
        assert_eq!(tokens(&write_pocket(&spec)), tokens(text));
    }

    proptest! {
        #[test]
        fn ligand_round_trip(coords in proptest::collection::vec(proptest::array::uniform3(-1e3f64..1e3), 1..12), order in 1u32..5) {
            let atoms: Vec<Atom> = coords.iter().enumerate().map(|(i, &c)| Atom {
                element: Element::from_symbol(["C", "N", "O", "S", "Fe"][i % 5]).unwrap(),
                coord: c,
                charge: (i as i32 % 3) - 1,
            }).collect();
            let bonds = (1..atoms.len()).map(|i| Bond { i: i - 1, j: i, order: BondOrder::from_code(order).unwrap() }).collect();
            let spec = LigandSpec { atoms, bonds };
            let text = write_ligand(&spec);
            let back = parse_ligand_str(&text, "rt").unwrap();
            prop_assert_eq!(&back, &spec);
            prop_assert_eq!(write_ligand(&back), text);
        }

        #[test]
        fn pocket_round_trip(coords in proptest::collection::vec(proptest::array::uniform3(-1e3f64..1e3), 1..12)) {
            let residues = coords.iter().enumerate().map(|(i, &ca)| Residue {
                id: i,
                amino_acid: AminoAcid::from_index(i % 20).unwrap(),
                ca,
            }).collect();
            let spec = PocketSpec::new(residues, coords.clone());
            let text = write_pocket(&spec);
            let back = parse_pocket_str(&text, "rt").unwrap();
            prop_assert_eq!(&back, &spec);
        }
    }
}

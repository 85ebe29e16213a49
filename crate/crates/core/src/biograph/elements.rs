//! Element symbols, the ligand element vocabulary and amino-acid codes.

use crate::{Error, Result};

const SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Heavy elements with their own one-hot slot; everything else shares the
/// trailing "other" slot.
const LIGAND_VOCAB: [&str; 16] = [
    "C", "N", "O", "F", "P", "S", "Cl", "Br", "I", "B", "Si", "Se", "Na", "K", "Mg", "Zn",
];

pub const LIGAND_VOCAB_SIZE: usize = LIGAND_VOCAB.len() + 1;

/// A chemical element, stored by atomic number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element(u8);

impl Element {
    pub fn from_symbol(sym: &str) -> Result<Self> {
        let mut chars = sym.chars();
        let normalized: String = match chars.next() {
            Some(c) => c
                .to_uppercase()
                .chain(chars.flat_map(char::to_lowercase))
                .collect(),
            None => return Err(Error::Format("empty element symbol".into())),
        };
        SYMBOLS
            .iter()
            .position(|s| *s == normalized)
            .map(|i| Element(i as u8 + 1))
            .ok_or_else(|| Error::Format(format!("unknown element {sym:?}")))
    }

    pub fn atomic_number(self) -> u8 {
        self.0
    }

    pub fn symbol(self) -> &'static str {
        SYMBOLS[self.0 as usize - 1]
    }

    pub fn is_hydrogen(self) -> bool {
        self.0 == 1
    }

    /// Slot in the ligand one-hot encoding.
    pub fn vocab_index(self) -> usize {
        LIGAND_VOCAB
            .iter()
            .position(|s| *s == self.symbol())
            .unwrap_or(LIGAND_VOCAB.len())
    }
}

impl std::fmt::Display for Element {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.symbol())
    }
}

const AMINO_ACIDS: [&str; 20] = [
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE", "LEU", "LYS", "MET",
    "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL",
];

pub const AMINO_ACID_COUNT: usize = AMINO_ACIDS.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AminoAcid(u8);

impl AminoAcid {
    pub fn from_code(code: &str) -> Result<Self> {
        let upper = code.to_ascii_uppercase();
        AMINO_ACIDS
            .iter()
            .position(|a| *a == upper)
            .map(|i| AminoAcid(i as u8))
            .ok_or_else(|| Error::Format(format!("unknown amino acid {code:?}")))
    }

    pub fn from_index(i: usize) -> Option<Self> {
        (i < AMINO_ACID_COUNT).then_some(AminoAcid(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn code(self) -> &'static str {
        AMINO_ACIDS[self.0 as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_lookup() {
        assert_eq!(Element::from_symbol("C").unwrap().atomic_number(), 6);
        assert_eq!(Element::from_symbol("CL").unwrap().symbol(), "Cl");
        assert!(Element::from_symbol("H").unwrap().is_hydrogen());
        assert!(Element::from_symbol("Xx").is_err());
        assert_eq!(Element::from_symbol("Fe").unwrap().vocab_index(), 16);
        assert_eq!(Element::from_symbol("N").unwrap().vocab_index(), 1);
    }

    #[test]
    fn amino_acid_lookup() {
        assert_eq!(AminoAcid::from_code("gly").unwrap().code(), "GLY");
        assert!(AminoAcid::from_code("XYZ").is_err());
    }
}

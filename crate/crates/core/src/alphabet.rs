//! Atom alphabets: the ordered set of atom types a design may use.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlphabetError {
    #[error("alphabet must contain at least one atom type")]
    Empty,
    #[error("duplicate atom symbol {0:?}")]
    DuplicateSymbol(String),
    #[error("atom types {0:?} and {1:?} share element, charge and chirality")]
    AmbiguousSpec(String, String),
    #[error("atom {0:?} has valence 0")]
    ZeroValence(String),
    #[error("unknown atomic number {0}")]
    UnknownElement(u8),
    #[error("max bond order must be between 1 and 3, got {0}")]
    BadBondOrder(u8),
    #[error("unknown alphabet preset {0:?}")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChiralTag {
    #[default]
    None,
    Cw,
    Ccw,
}

/// One atom type. Charged and chiral variants are distinct types with their
/// own valence (maximum total bond order to heavy atoms).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub symbol: String,
    pub atomic_number: u8,
    pub valence: u8,
    #[serde(default)]
    pub formal_charge: i8,
    #[serde(default)]
    pub chiral_tag: ChiralTag,
}

impl AtomSpec {
    pub fn new(symbol: &str, atomic_number: u8, valence: u8) -> Self {
        AtomSpec {
            symbol: symbol.to_string(),
            atomic_number,
            valence,
            formal_charge: 0,
            chiral_tag: ChiralTag::None,
        }
    }

    fn charged(mut self, charge: i8) -> Self {
        self.formal_charge = charge;
        self
    }

    fn chiral(mut self, tag: ChiralTag) -> Self {
        self.chiral_tag = tag;
        self
    }

    /// Element symbol derived from the atomic number.
    pub fn element(&self) -> &'static str {
        element_symbol(self.atomic_number).unwrap_or("?")
    }
}

/// Ordered atom types plus the maximum bond order `y`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAlphabet", into = "RawAlphabet")]
pub struct Alphabet {
    specs: Vec<AtomSpec>,
    max_bond_order: u8,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAlphabet {
    atoms: Vec<AtomSpec>,
    max_bond_order: u8,
}

impl TryFrom<RawAlphabet> for Alphabet {
    type Error = AlphabetError;
    fn try_from(raw: RawAlphabet) -> Result<Self, Self::Error> {
        Alphabet::new(raw.atoms, raw.max_bond_order)
    }
}

impl From<Alphabet> for RawAlphabet {
    fn from(a: Alphabet) -> Self {
        RawAlphabet {
            atoms: a.specs,
            max_bond_order: a.max_bond_order,
        }
    }
}

impl Alphabet {
    pub fn new(specs: Vec<AtomSpec>, max_bond_order: u8) -> Result<Self, AlphabetError> {
        if specs.is_empty() {
            return Err(AlphabetError::Empty);
        }
        if !(1..=3).contains(&max_bond_order) {
            return Err(AlphabetError::BadBondOrder(max_bond_order));
        }
        let mut symbols = HashSet::new();
        for (i, s) in specs.iter().enumerate() {
            if !symbols.insert(s.symbol.as_str()) {
                return Err(AlphabetError::DuplicateSymbol(s.symbol.clone()));
            }
            if s.valence == 0 {
                return Err(AlphabetError::ZeroValence(s.symbol.clone()));
            }
            if element_symbol(s.atomic_number).is_none() {
                return Err(AlphabetError::UnknownElement(s.atomic_number));
            }
            for t in &specs[..i] {
                if t.atomic_number == s.atomic_number
                    && t.formal_charge == s.formal_charge
                    && t.chiral_tag == s.chiral_tag
                {
                    return Err(AlphabetError::AmbiguousSpec(
                        t.symbol.clone(),
                        s.symbol.clone(),
                    ));
                }
            }
        }
        Ok(Alphabet {
            specs,
            max_bond_order,
        })
    }

    /// C, N, O with maximum bond order 3.
    pub fn solvent() -> Self {
        Alphabet::new(
            vec![
                AtomSpec::new("C", 6, 4),
                AtomSpec::new("N", 7, 3),
                AtomSpec::new("O", 8, 2),
            ],
            3,
        )
        .expect("preset")
    }

    /// The full drug-design alphabet with ionized and chiral variants.
    pub fn drug() -> Self {
        use ChiralTag::{Ccw, Cw};
        Alphabet::new(
            vec![
                AtomSpec::new("C", 6, 4),
                AtomSpec::new("C-", 6, 3).charged(-1),
                AtomSpec::new("C+", 6, 5).charged(1),
                AtomSpec::new("C@", 6, 4).chiral(Cw),
                AtomSpec::new("C@@", 6, 4).chiral(Ccw),
                AtomSpec::new("N", 7, 3),
                AtomSpec::new("N-", 7, 2).charged(-1),
                AtomSpec::new("N+", 7, 4).charged(1),
                AtomSpec::new("O", 8, 2),
                AtomSpec::new("O-", 8, 1).charged(-1),
                AtomSpec::new("O+", 8, 3).charged(1),
                AtomSpec::new("F", 9, 1),
                AtomSpec::new("P", 15, 7),
                AtomSpec::new("P-", 15, 6).charged(-1),
                AtomSpec::new("P+", 15, 8).charged(1),
                AtomSpec::new("S", 16, 6),
                AtomSpec::new("S-", 16, 5).charged(-1),
                AtomSpec::new("S+", 16, 7).charged(1),
                AtomSpec::new("S@", 16, 6).chiral(Cw),
                AtomSpec::new("S@@", 16, 6).chiral(Ccw),
                AtomSpec::new("Cl", 17, 1),
                AtomSpec::new("Br", 35, 1),
                AtomSpec::new("I", 53, 1),
            ],
            3,
        )
        .expect("preset")
    }

    /// Named presets: `solvent-CNO` and `drug-full`.
    pub fn preset(name: &str) -> Result<Self, AlphabetError> {
        match name {
            "solvent-CNO" => Ok(Self::solvent()),
            "drug-full" => Ok(Self::drug()),
            other => Err(AlphabetError::UnknownPreset(other.to_string())),
        }
    }

    /// Subset of the solvent preset, handy for small enumerations.
    pub fn from_symbols(symbols: &[&str], max_bond_order: u8) -> Result<Self, AlphabetError> {
        let drug = Self::drug();
        let specs = symbols
            .iter()
            .map(|s| {
                drug.index_of(s)
                    .map(|i| drug.specs[i].clone())
                    .ok_or_else(|| AlphabetError::UnknownPreset(s.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Alphabet::new(specs, max_bond_order)
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn max_bond_order(&self) -> u8 {
        self.max_bond_order
    }

    pub fn specs(&self) -> &[AtomSpec] {
        &self.specs
    }

    pub fn spec(&self, idx: usize) -> &AtomSpec {
        &self.specs[idx]
    }

    pub fn valence(&self, idx: usize) -> u8 {
        self.specs[idx].valence
    }

    pub fn max_valence(&self) -> u8 {
        self.specs.iter().map(|s| s.valence).max().unwrap_or(1)
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.symbol == symbol)
    }

    /// Finds the atom type with the given element, charge and chirality.
    pub fn lookup(&self, atomic_number: u8, charge: i8, chiral: ChiralTag) -> Option<usize> {
        self.specs.iter().position(|s| {
            s.atomic_number == atomic_number && s.formal_charge == charge && s.chiral_tag == chiral
        })
    }

    /// Stable digest used to refuse checkpoints trained on another alphabet.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("alphabet serializes");
        hex::encode(Sha256::digest(&json))
    }
}

const ELEMENTS: [&str; 54] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe",
];

pub fn element_symbol(atomic_number: u8) -> Option<&'static str> {
    (atomic_number as usize)
        .checked_sub(1)
        .and_then(|i| ELEMENTS.get(i).copied())
}

pub fn atomic_number(symbol: &str) -> Option<u8> {
    ELEMENTS
        .iter()
        .position(|&e| e == symbol)
        .map(|i| i as u8 + 1)
}

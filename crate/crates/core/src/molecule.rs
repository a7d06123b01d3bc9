//! Hydrogen-suppressed molecular graphs and the three graph edits.

use crate::alphabet::Alphabet;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InfeasibleAction {
    #[error("atom type {0} is not in the alphabet")]
    UnknownAtomType(usize),
    #[error("atom index {0} out of range")]
    AtomOutOfRange(usize),
    #[error("bond order {0} outside 1..={1}")]
    BondOrder(u8, u8),
    #[error("cannot bond atom {0} to itself")]
    SelfBond(usize),
    #[error("atoms {0} and {1} are already bonded")]
    DuplicateBond(usize, usize),
    #[error("valence of atom {0} exceeded")]
    Valence(usize),
    #[error("molecule already has the maximum of {0} atoms")]
    TooManyAtoms(usize),
    #[error("atom {0} is frozen")]
    FrozenAtom(usize),
    #[error("ring of size {0} is not allowed")]
    RingSize(usize),
    #[error("forbidden pattern {rule} matched at atom {atom}")]
    Pattern { rule: usize, atom: usize },
}

/// `atoms[i]` is an alphabet index; `bonds` is the symmetric `n x n` bond-order
/// matrix stored row-major with zero diagonal.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Molecule {
    atoms: Vec<usize>,
    bonds: Vec<u8>,
}

impl fmt::Debug for Molecule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Molecule{{atoms: {:?}, bonds: [", self.atoms)?;
        for (i, j, o) in self.bond_list() {
            write!(f, " {i}-{j}:{o}")?;
        }
        write!(f, " ]}}")
    }
}

/// A complete graph edit. Indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    DontChange,
    AddAtom {
        atom_type: usize,
        target: usize,
        order: u8,
    },
    AddBond {
        first: usize,
        second: usize,
        order: u8,
    },
}

impl Molecule {
    pub fn single(atom_type: usize) -> Self {
        Molecule {
            atoms: vec![atom_type],
            bonds: vec![0],
        }
    }

    /// Builds a molecule from atom types and an edge list, checking symmetry
    /// and connectivity but not valence.
    pub fn from_edges(atoms: Vec<usize>, edges: &[(usize, usize, u8)]) -> Result<Self, String> {
        let n = atoms.len();
        if n == 0 {
            return Err("molecule has no atoms".into());
        }
        let mut bonds = vec![0u8; n * n];
        for &(i, j, o) in edges {
            if i >= n || j >= n {
                return Err(format!("bond {i}-{j} references a missing atom"));
            }
            if i == j {
                return Err(format!("self bond on atom {i}"));
            }
            if o == 0 {
                return Err(format!("zero-order bond {i}-{j}"));
            }
            if bonds[i * n + j] != 0 {
                return Err(format!("duplicate bond {i}-{j}"));
            }
            bonds[i * n + j] = o;
            bonds[j * n + i] = o;
        }
        let m = Molecule { atoms, bonds };
        if !m.is_connected() {
            return Err("molecule is not connected".into());
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[usize] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> usize {
        self.atoms[i]
    }

    #[inline]
    pub fn bond(&self, i: usize, j: usize) -> u8 {
        self.bonds[i * self.atoms.len() + j]
    }

    pub fn bond_row(&self, i: usize) -> &[u8] {
        let n = self.atoms.len();
        &self.bonds[i * n..(i + 1) * n]
    }

    /// Bonds as `(i, j, order)` with `i < j`.
    pub fn bond_list(&self) -> Vec<(usize, usize, u8)> {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let o = self.bond(i, j);
                if o > 0 {
                    out.push((i, j, o));
                }
            }
        }
        out
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.bond_row(i)
            .iter()
            .enumerate()
            .filter(|(_, &o)| o > 0)
            .map(|(j, &o)| (j, o))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.bond_row(i).iter().filter(|&&o| o > 0).count()
    }

    /// Sum of bond orders at atom `i`.
    pub fn bond_sum(&self, i: usize) -> u32 {
        self.bond_row(i).iter().map(|&o| o as u32).sum()
    }

    /// Remaining bond capacity of atom `i`, i.e. its implicit hydrogen count.
    /// Saturates at zero for molecules that violate valence.
    pub fn valence_slack(&self, alphabet: &Alphabet, i: usize) -> u32 {
        (alphabet.valence(self.atoms[i]) as u32).saturating_sub(self.bond_sum(i))
    }

    pub fn num_bonds(&self) -> usize {
        self.bonds.iter().filter(|&&o| o > 0).count() / 2
    }

    pub fn is_connected(&self) -> bool {
        let n = self.len();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for (v, _) in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }

    pub fn satisfies_valence(&self, alphabet: &Alphabet) -> bool {
        (0..self.len()).all(|i| self.bond_sum(i) <= alphabet.valence(self.atoms[i]) as u32)
    }

    /// Applies an edit after checking its syntax and the valence rule.
    /// Structural constraints are checked by [`crate::DesignSpace::apply`].
    pub fn apply(&self, alphabet: &Alphabet, action: Action) -> Result<Molecule, InfeasibleAction> {
        let n = self.len();
        let y = alphabet.max_bond_order();
        match action {
            Action::DontChange => Ok(self.clone()),
            Action::AddAtom {
                atom_type,
                target,
                order,
            } => {
                if atom_type >= alphabet.len() {
                    return Err(InfeasibleAction::UnknownAtomType(atom_type));
                }
                if target >= n {
                    return Err(InfeasibleAction::AtomOutOfRange(target));
                }
                if order == 0 || order > y {
                    return Err(InfeasibleAction::BondOrder(order, y));
                }
                if order as u32 > self.valence_slack(alphabet, target) {
                    return Err(InfeasibleAction::Valence(target));
                }
                if order > alphabet.valence(atom_type) {
                    return Err(InfeasibleAction::Valence(n));
                }
                Ok(self.with_new_atom(atom_type, target, order))
            }
            Action::AddBond {
                first,
                second,
                order,
            } => {
                if first >= n {
                    return Err(InfeasibleAction::AtomOutOfRange(first));
                }
                if second >= n {
                    return Err(InfeasibleAction::AtomOutOfRange(second));
                }
                if first == second {
                    return Err(InfeasibleAction::SelfBond(first));
                }
                if order == 0 || order > y {
                    return Err(InfeasibleAction::BondOrder(order, y));
                }
                if self.bond(first, second) != 0 {
                    return Err(InfeasibleAction::DuplicateBond(first, second));
                }
                for a in [first, second] {
                    if order as u32 > self.valence_slack(alphabet, a) {
                        return Err(InfeasibleAction::Valence(a));
                    }
                }
                Ok(self.with_bond(first, second, order))
            }
        }
    }

    /// Appends an atom bonded to `target`; performs no checks.
    pub fn with_new_atom(&self, atom_type: usize, target: usize, order: u8) -> Molecule {
        let n = self.len();
        let m = n + 1;
        let mut bonds = vec![0u8; m * m];
        for i in 0..n {
            bonds[i * m..i * m + n].copy_from_slice(self.bond_row(i));
        }
        bonds[n * m + target] = order;
        bonds[target * m + n] = order;
        let mut atoms = self.atoms.clone();
        atoms.push(atom_type);
        Molecule { atoms, bonds }
    }

    /// Sets the bond between two atoms; performs no checks.
    pub fn with_bond(&self, i: usize, j: usize, order: u8) -> Molecule {
        let n = self.len();
        let mut out = self.clone();
        out.bonds[i * n + j] = order;
        out.bonds[j * n + i] = order;
        out
    }

    /// Relabels atoms so that new atom `k` is old atom `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Molecule {
        let n = self.len();
        assert_eq!(perm.len(), n);
        let atoms = perm.iter().map(|&p| self.atoms[p]).collect();
        let mut bonds = vec![0u8; n * n];
        for a in 0..n {
            for b in 0..n {
                bonds[a * n + b] = self.bond(perm[a], perm[b]);
            }
        }
        Molecule { atoms, bonds }
    }

    /// Element counts including implicit hydrogens, keyed by element symbol.
    pub fn formula(&self, alphabet: &Alphabet) -> std::collections::BTreeMap<&'static str, u32> {
        let mut counts = std::collections::BTreeMap::new();
        for i in 0..self.len() {
            *counts.entry(alphabet.spec(self.atoms[i]).element()).or_insert(0) += 1;
            let h = self.valence_slack(alphabet, i);
            if h > 0 {
                *counts.entry("H").or_insert(0) += h;
            }
        }
        counts
    }
}

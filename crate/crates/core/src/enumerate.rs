//! Exhaustive enumeration of every molecule reachable through feasible edits.
//! Used as a brute-force oracle for small sizes.

use crate::alphabet::Alphabet;
use crate::canon::canonical_key;
use crate::constraints::{ConstraintError, Constraints};
use crate::molecule::{Action, Molecule};
use crate::space::DesignSpace;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

pub const MAX_ENUMERATION_ATOMS: usize = 6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnumerateError {
    #[error("enumeration limited to {MAX_ENUMERATION_ATOMS} atoms, got {0}")]
    TooLarge(usize),
    #[error("enumeration visited more than {0} states")]
    BudgetExceeded(usize),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

/// Reachable complete molecules keyed by canonical key. `max_n` overrides
/// the constraints' atom cap; frozen atoms are not supported here.
pub fn enumerate_molecules(
    alphabet: &Alphabet,
    constraints: &Constraints,
    max_n: usize,
    state_cap: usize,
) -> Result<BTreeMap<Vec<u8>, Molecule>, EnumerateError> {
    if max_n > MAX_ENUMERATION_ATOMS {
        return Err(EnumerateError::TooLarge(max_n));
    }
    let mut constraints = constraints.clone();
    constraints.max_atoms = max_n;
    constraints.frozen_atoms.clear();
    let space = DesignSpace::new(alphabet.clone(), constraints, &Molecule::single(0))?;
    let mut seen: BTreeMap<Vec<u8>, Molecule> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for t in 0..alphabet.len() {
        let m = Molecule::single(t);
        if !space.validate(&m).ok {
            continue;
        }
        if seen.insert(canonical_key(&m), m.clone()).is_none() {
            queue.push_back(m);
        }
    }
    while let Some(m) = queue.pop_front() {
        let feasible = space.feasible_actions(&m);
        let children = feasible
            .add_atom
            .iter()
            .map(|&(t, l, o)| Action::AddAtom {
                atom_type: t,
                target: l,
                order: o,
            })
            .chain(feasible.add_bond.iter().map(|&(i, j, o)| Action::AddBond {
                first: i,
                second: j,
                order: o,
            }));
        for action in children {
            let child = space.apply(&m, action).expect("feasible action applies");
            let key = canonical_key(&child);
            if !seen.contains_key(&key) {
                if seen.len() >= state_cap {
                    return Err(EnumerateError::BudgetExceeded(state_cap));
                }
                seen.insert(key, child.clone());
                queue.push_back(child);
            }
        }
    }
    Ok(seen)
}

/// Canonical keys of all reachable complete molecules.
pub fn enumerate_valid(
    alphabet: &Alphabet,
    constraints: &Constraints,
    max_n: usize,
) -> Result<BTreeSet<Vec<u8>>, EnumerateError> {
    Ok(enumerate_molecules(alphabet, constraints, max_n, 1_000_000)?
        .into_keys()
        .collect())
}

//! The design space: alphabet + constraints + initial molecule, with exact
//! feasibility masks for the three sub-action levels.

use crate::alphabet::Alphabet;
use crate::constraints::{self, CompiledRule, ConstraintError, ConstraintReport, Constraints};
use crate::molecule::{Action, InfeasibleAction, Molecule};
use crate::rings;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// First sub-action of a modifying edit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FirstChoice {
    NewAtom(usize),
    Existing(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    L0,
    L1,
    L2,
}

impl Level {
    pub fn index(self) -> usize {
        match self {
            Level::L0 => 0,
            Level::L1 => 1,
            Level::L2 => 2,
        }
    }
}

/// Position inside the decomposition of one edit into up to three sub-actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ActionLevelState {
    pub first: Option<FirstChoice>,
    pub second: Option<usize>,
}

impl ActionLevelState {
    pub fn level(&self) -> Level {
        match (self.first, self.second) {
            (None, _) => Level::L0,
            (Some(_), None) => Level::L1,
            (Some(_), Some(_)) => Level::L2,
        }
    }
}

/// Level-0 choice, in the order used by the policy's level-0 logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level0Choice {
    DontChange,
    NewAtom(usize),
    Existing(usize),
}

impl Level0Choice {
    /// Index into the level-0 logit vector: DontChange, k atom types, n atoms.
    pub fn logit_index(self, k: usize) -> usize {
        match self {
            Level0Choice::DontChange => 0,
            Level0Choice::NewAtom(t) => 1 + t,
            Level0Choice::Existing(i) => 1 + k + i,
        }
    }

    pub fn from_logit_index(idx: usize, k: usize) -> Self {
        if idx == 0 {
            Level0Choice::DontChange
        } else if idx <= k {
            Level0Choice::NewAtom(idx - 1)
        } else {
            Level0Choice::Existing(idx - 1 - k)
        }
    }
}

/// All feasible complete edits for one molecule.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeasibleActions {
    /// `(atom_type, target, order)`
    pub add_atom: Vec<(usize, usize, u8)>,
    /// `(i, j, order)` with `i < j`
    pub add_bond: Vec<(usize, usize, u8)>,
}

impl FeasibleActions {
    pub fn level0(&self) -> BTreeSet<Level0Choice> {
        let mut out = BTreeSet::new();
        out.insert(Level0Choice::DontChange);
        for &(t, _, _) in &self.add_atom {
            out.insert(Level0Choice::NewAtom(t));
        }
        for &(i, j, _) in &self.add_bond {
            out.insert(Level0Choice::Existing(i));
            out.insert(Level0Choice::Existing(j));
        }
        out
    }

    pub fn level1(&self, first: FirstChoice) -> BTreeSet<usize> {
        match first {
            FirstChoice::NewAtom(t) => self
                .add_atom
                .iter()
                .filter(|a| a.0 == t)
                .map(|a| a.1)
                .collect(),
            FirstChoice::Existing(j) => self
                .add_bond
                .iter()
                .filter_map(|&(a, b, _)| {
                    if a == j {
                        Some(b)
                    } else if b == j {
                        Some(a)
                    } else {
                        None
                    }
                })
                .collect(),
        }
    }

    pub fn level2(&self, first: FirstChoice, second: usize) -> BTreeSet<u8> {
        match first {
            FirstChoice::NewAtom(t) => self
                .add_atom
                .iter()
                .filter(|a| a.0 == t && a.1 == second)
                .map(|a| a.2)
                .collect(),
            FirstChoice::Existing(j) => {
                let (a, b) = (j.min(second), j.max(second));
                self.add_bond
                    .iter()
                    .filter(|x| x.0 == a && x.1 == b)
                    .map(|x| x.2)
                    .collect()
            }
        }
    }

    pub fn contains(&self, action: Action) -> bool {
        match action {
            Action::DontChange => true,
            Action::AddAtom {
                atom_type,
                target,
                order,
            } => self.add_atom.contains(&(atom_type, target, order)),
            Action::AddBond {
                first,
                second,
                order,
            } => self
                .add_bond
                .contains(&(first.min(second), first.max(second), order)),
        }
    }

    pub fn len(&self) -> usize {
        1 + self.add_atom.len() + self.add_bond.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
struct FrozenReference {
    atoms: Vec<usize>,
    // (atom index, bond row over the initial atoms)
    rows: Vec<(usize, Vec<u8>)>,
}

/// Immutable context for a design run.
#[derive(Debug, Clone)]
pub struct DesignSpace {
    alphabet: Alphabet,
    constraints: Constraints,
    rules: Vec<CompiledRule>,
    frozen: FrozenReference,
}

impl DesignSpace {
    pub fn new(
        alphabet: Alphabet,
        constraints: Constraints,
        initial: &Molecule,
    ) -> Result<Self, ConstraintError> {
        if constraints.max_atoms == 0 {
            return Err(ConstraintError::ZeroMaxAtoms);
        }
        if constraints.max_atoms < initial.len() {
            return Err(ConstraintError::MaxAtoms {
                max: constraints.max_atoms,
                n: initial.len(),
            });
        }
        if let Some(&f) = constraints.frozen_atoms.iter().find(|&&f| f >= initial.len()) {
            return Err(ConstraintError::FrozenOutOfRange(f));
        }
        let rules = constraints::compile_rules(&constraints.forbidden_patterns, &alphabet)?;
        let frozen = FrozenReference {
            atoms: initial.atoms().to_vec(),
            rows: constraints
                .frozen_atoms
                .iter()
                .map(|&f| (f, initial.bond_row(f).to_vec()))
                .collect(),
        };
        Ok(DesignSpace {
            alphabet,
            constraints,
            rules,
            frozen,
        })
    }

    /// Space without a reference molecule; frozen atoms must be empty.
    pub fn unconstrained(alphabet: Alphabet, max_atoms: usize) -> Self {
        DesignSpace::new(
            alphabet,
            Constraints::with_max_atoms(max_atoms),
            &Molecule::single(0),
        )
        .expect("valid")
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn constraints(&self) -> &Constraints {
        &self.constraints
    }

    fn is_frozen(&self, atom: usize) -> bool {
        self.constraints.frozen_atoms.contains(&atom)
    }

    /// Full check of a molecule, including the frozen-atom reference.
    pub fn validate(&self, m: &Molecule) -> ConstraintReport {
        let mut report = constraints::report(m, &self.alphabet, &self.constraints, &self.rules);
        if !self.frozen_intact(m) {
            report.ok = false;
        }
        report
    }

    pub fn is_valid(&self, m: &Molecule) -> bool {
        self.validate(m).ok && m.is_connected()
    }

    /// True when every frozen atom keeps its type and bonds.
    pub fn frozen_intact(&self, m: &Molecule) -> bool {
        let n0 = self.frozen.atoms.len();
        self.frozen.rows.iter().all(|(f, row)| {
            *f < m.len()
                && m.atom(*f) == self.frozen.atoms[*f]
                && &m.bond_row(*f)[..n0.min(m.len())] == row.as_slice()
                && m.bond_row(*f)[n0.min(m.len())..].iter().all(|&o| o == 0)
        })
    }

    /// Applies an edit, failing if the result breaks any rule. Only the atoms
    /// touched by the edit are re-examined; the input is assumed valid.
    pub fn apply(&self, m: &Molecule, action: Action) -> Result<Molecule, InfeasibleAction> {
        match action {
            Action::DontChange => Ok(m.clone()),
            Action::AddAtom { target, .. } => {
                if self.is_frozen(target) {
                    return Err(InfeasibleAction::FrozenAtom(target));
                }
                if m.len() >= self.constraints.max_atoms {
                    return Err(InfeasibleAction::TooManyAtoms(self.constraints.max_atoms));
                }
                let out = m.apply(&self.alphabet, action)?;
                self.check_patterns(&out, &[target, out.len() - 1])?;
                Ok(out)
            }
            Action::AddBond { first, second, .. } => {
                for a in [first, second] {
                    if self.is_frozen(a) {
                        return Err(InfeasibleAction::FrozenAtom(a));
                    }
                }
                let out = m.apply(&self.alphabet, action)?;
                self.check_rings(m, &out, first, second)?;
                self.check_patterns(&out, &[first, second])?;
                Ok(out)
            }
        }
    }

    fn check_rings(
        &self,
        before: &Molecule,
        after: &Molecule,
        i: usize,
        j: usize,
    ) -> Result<(), InfeasibleAction> {
        let Some(allowed) = &self.constraints.allowed_ring_sizes else {
            return Ok(());
        };
        // The shortest cycle through the new bond is always in a minimum basis.
        if let Some(d) = rings::shortest_path_len(before, i, j) {
            if !allowed.contains(&(d + 1)) {
                return Err(InfeasibleAction::RingSize(d + 1));
            }
        }
        for size in rings::ring_sizes(after) {
            if !allowed.contains(&size) {
                return Err(InfeasibleAction::RingSize(size));
            }
        }
        Ok(())
    }

    fn check_patterns(&self, m: &Molecule, atoms: &[usize]) -> Result<(), InfeasibleAction> {
        for &atom in atoms {
            for (rule, r) in self.rules.iter().enumerate() {
                if r.fires(m, &self.alphabet, atom) {
                    return Err(InfeasibleAction::Pattern { rule, atom });
                }
            }
        }
        Ok(())
    }

    /// Every feasible complete edit of `m`. An invalid `m` admits only
    /// DontChange.
    pub fn feasible_actions(&self, m: &Molecule) -> FeasibleActions {
        let mut out = FeasibleActions::default();
        if !self.validate(m).ok {
            return out;
        }
        let n = m.len();
        let y = self.alphabet.max_bond_order();
        let slack: Vec<u32> = (0..n).map(|i| m.valence_slack(&self.alphabet, i)).collect();
        if n < self.constraints.max_atoms {
            for t in 0..self.alphabet.len() {
                let vt = self.alphabet.valence(t) as u32;
                for l in 0..n {
                    if self.is_frozen(l) {
                        continue;
                    }
                    let top = slack[l].min(vt).min(y as u32) as u8;
                    for o in 1..=top {
                        let action = Action::AddAtom {
                            atom_type: t,
                            target: l,
                            order: o,
                        };
                        if self.apply(m, action).is_ok() {
                            out.add_atom.push((t, l, o));
                        }
                    }
                }
            }
        }
        for i in 0..n {
            if self.is_frozen(i) || slack[i] == 0 {
                continue;
            }
            for j in i + 1..n {
                if self.is_frozen(j) || slack[j] == 0 || m.bond(i, j) != 0 {
                    continue;
                }
                let top = slack[i].min(slack[j]).min(y as u32) as u8;
                for o in 1..=top {
                    let action = Action::AddBond {
                        first: i,
                        second: j,
                        order: o,
                    };
                    if self.apply(m, action).is_ok() {
                        out.add_bond.push((i, j, o));
                    }
                }
            }
        }
        out
    }

    pub fn feasible_level0(&self, m: &Molecule) -> BTreeSet<Level0Choice> {
        self.feasible_actions(m).level0()
    }

    pub fn feasible_level1(&self, m: &Molecule, first: FirstChoice) -> BTreeSet<usize> {
        self.feasible_actions(m).level1(first)
    }

    pub fn feasible_level2(&self, m: &Molecule, first: FirstChoice, second: usize) -> BTreeSet<u8> {
        self.feasible_actions(m).level2(first, second)
    }
}

/// Assembles a complete edit from its sub-action choices.
pub fn compose_action(first: FirstChoice, second: usize, order: u8) -> Action {
    match first {
        FirstChoice::NewAtom(t) => Action::AddAtom {
            atom_type: t,
            target: second,
            order,
        },
        FirstChoice::Existing(j) => Action::AddBond {
            first: j,
            second,
            order,
        },
    }
}

/// Result of choosing one logit at some level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Continue(ActionLevelState),
    Complete(Action),
}

/// Advances `state` by the choice at logit `idx` of its active level.
pub fn advance(state: ActionLevelState, idx: usize, k: usize) -> Step {
    match (state.first, state.second) {
        (None, _) => match Level0Choice::from_logit_index(idx, k) {
            Level0Choice::DontChange => Step::Complete(Action::DontChange),
            Level0Choice::NewAtom(t) => Step::Continue(ActionLevelState {
                first: Some(FirstChoice::NewAtom(t)),
                second: None,
            }),
            Level0Choice::Existing(i) => Step::Continue(ActionLevelState {
                first: Some(FirstChoice::Existing(i)),
                second: None,
            }),
        },
        (Some(first), None) => Step::Continue(ActionLevelState {
            first: Some(first),
            second: Some(idx),
        }),
        (Some(first), Some(second)) => {
            Step::Complete(compose_action(first, second, idx as u8 + 1))
        }
    }
}

/// The `(state, logit index)` pairs that spell out one edit.
pub fn sub_actions(action: Action, k: usize) -> Vec<(ActionLevelState, usize)> {
    let (first, second, order) = match action {
        Action::DontChange => return vec![(ActionLevelState::default(), 0)],
        Action::AddAtom {
            atom_type,
            target,
            order,
        } => (FirstChoice::NewAtom(atom_type), target, order),
        Action::AddBond {
            first,
            second,
            order,
        } => (FirstChoice::Existing(first), second, order),
    };
    let l0 = match first {
        FirstChoice::NewAtom(t) => Level0Choice::NewAtom(t),
        FirstChoice::Existing(i) => Level0Choice::Existing(i),
    };
    vec![
        (ActionLevelState::default(), l0.logit_index(k)),
        (
            ActionLevelState {
                first: Some(first),
                second: None,
            },
            second,
        ),
        (
            ActionLevelState {
                first: Some(first),
                second: Some(second),
            },
            order as usize - 1,
        ),
    ]
}

impl FeasibleActions {
    /// Feasibility of every logit at the active level of `state`, in logit
    /// order (`k+1+n`, `n` or `y` entries).
    pub fn mask(&self, state: &ActionLevelState, n: usize, k: usize, y: u8) -> Vec<bool> {
        match (state.first, state.second) {
            (None, _) => {
                let mut m = vec![false; k + 1 + n];
                for c in self.level0() {
                    m[c.logit_index(k)] = true;
                }
                m
            }
            (Some(first), None) => {
                let mut m = vec![false; n];
                for l in self.level1(first) {
                    m[l] = true;
                }
                m
            }
            (Some(first), Some(second)) => {
                let mut m = vec![false; y as usize];
                for o in self.level2(first, second) {
                    m[o as usize - 1] = true;
                }
                m
            }
        }
    }
}

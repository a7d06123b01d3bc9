//! User-defined structural constraints: size cap, ring sizes, forbidden
//! bonding patterns and frozen atoms.

use crate::alphabet::Alphabet;
use crate::molecule::Molecule;
use crate::rings;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("pattern rule {rule}: symbol {symbol:?} is not in the alphabet")]
    UnknownSymbol { rule: usize, symbol: String },
    #[error("pattern rule {0} has more than 8 atoms")]
    PatternTooLarge(usize),
    #[error("max_atoms {max} is smaller than the initial molecule ({n} atoms)")]
    MaxAtoms { max: usize, n: usize },
    #[error("frozen atom {0} is not part of the initial molecule")]
    FrozenOutOfRange(usize),
    #[error("max_atoms must be positive")]
    ZeroMaxAtoms,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    pub max_atoms: usize,
    /// `None` leaves ring sizes unrestricted.
    #[serde(default)]
    pub allowed_ring_sizes: Option<BTreeSet<usize>>,
    #[serde(default)]
    pub forbidden_patterns: Vec<PatternRule>,
    /// Atom indices of the initial molecule whose bonds and hydrogens are fixed.
    #[serde(default)]
    pub frozen_atoms: BTreeSet<usize>,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints::with_max_atoms(25)
    }
}

impl Constraints {
    pub fn with_max_atoms(max_atoms: usize) -> Self {
        Constraints {
            max_atoms,
            allowed_ring_sizes: None,
            forbidden_patterns: Vec::new(),
            frozen_atoms: BTreeSet::new(),
        }
    }

    /// The solvent-task stability rules: rings of five or six atoms, no N-N
    /// or O-O single bonds, no N-C-N unless the carbon carries a C=O (urea),
    /// and no carbon bearing N, O, one H and one further heavy substituent.
    pub fn solvent_rules(max_atoms: usize) -> Self {
        Constraints {
            max_atoms,
            allowed_ring_sizes: Some([5, 6].into_iter().collect()),
            forbidden_patterns: vec![
                PatternRule::bond("N", "N", 1),
                PatternRule::bond("O", "O", 1),
                PatternRule {
                    center: "C".into(),
                    neighbors: vec![NeighborSpec::new("N", 1), NeighborSpec::new("N", 1)],
                    hydrogens: None,
                    unless: Some(PatternException {
                        neighbors: vec![NeighborSpec::new("O", 2)],
                        hydrogens: None,
                    }),
                },
                PatternRule {
                    center: "C".into(),
                    neighbors: vec![
                        NeighborSpec::new("N", 1),
                        NeighborSpec::new("O", 1),
                        NeighborSpec {
                            symbol: None,
                            order: None,
                        },
                    ],
                    hydrogens: Some(1),
                    unless: None,
                },
            ],
            frozen_atoms: BTreeSet::new(),
        }
    }
}

/// One neighbor requirement: atom symbol (any heavy atom when `None`) and bond
/// order (any when `None`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborSpec {
    #[serde(default)]
    pub symbol: Option<String>,
    #[serde(default)]
    pub order: Option<u8>,
}

impl NeighborSpec {
    pub fn new(symbol: &str, order: u8) -> Self {
        NeighborSpec {
            symbol: Some(symbol.into()),
            order: Some(order),
        }
    }
}

/// A forbidden neighborhood around a center atom. The rule matches when the
/// center has distinct neighbors satisfying every spec (extra neighbors are
/// allowed) and, if given, exactly `hydrogens` implicit hydrogens. A matching
/// `unless` pattern at the same center suppresses the rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternRule {
    pub center: String,
    pub neighbors: Vec<NeighborSpec>,
    #[serde(default)]
    pub hydrogens: Option<u32>,
    #[serde(default)]
    pub unless: Option<PatternException>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternException {
    pub neighbors: Vec<NeighborSpec>,
    #[serde(default)]
    pub hydrogens: Option<u32>,
}

impl PatternRule {
    /// Forbids a bond of `order` between atoms `a` and `b`.
    pub fn bond(a: &str, b: &str, order: u8) -> Self {
        PatternRule {
            center: a.into(),
            neighbors: vec![NeighborSpec::new(b, order)],
            hydrogens: None,
            unless: None,
        }
    }
}

#[derive(Debug, Clone)]
struct CompiledNeighborhood {
    neighbors: Vec<(Option<usize>, Option<u8>)>,
    hydrogens: Option<u32>,
}

impl CompiledNeighborhood {
    fn matches(&self, m: &Molecule, alphabet: &Alphabet, center: usize) -> bool {
        if let Some(h) = self.hydrogens {
            if m.valence_slack(alphabet, center) != h {
                return false;
            }
        }
        let nbrs: Vec<(usize, u8)> = m.neighbors(center).map(|(j, o)| (m.atom(j), o)).collect();
        let mut used = vec![false; nbrs.len()];
        assign(&self.neighbors, &nbrs, &mut used)
    }
}

fn assign(
    specs: &[(Option<usize>, Option<u8>)],
    nbrs: &[(usize, u8)],
    used: &mut [bool],
) -> bool {
    let Some((&(ty, order), rest)) = specs.split_first() else {
        return true;
    };
    for k in 0..nbrs.len() {
        if used[k] {
            continue;
        }
        let (t, o) = nbrs[k];
        if ty.is_some_and(|x| x != t) || order.is_some_and(|x| x != o) {
            continue;
        }
        used[k] = true;
        if assign(rest, nbrs, used) {
            return true;
        }
        used[k] = false;
    }
    false
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledRule {
    center: usize,
    base: CompiledNeighborhood,
    unless: Option<CompiledNeighborhood>,
}

impl CompiledRule {
    pub(crate) fn fires(&self, m: &Molecule, alphabet: &Alphabet, atom: usize) -> bool {
        m.atom(atom) == self.center
            && self.base.matches(m, alphabet, atom)
            && !self
                .unless
                .as_ref()
                .is_some_and(|u| u.matches(m, alphabet, atom))
    }
}

pub(crate) fn compile_rules(
    rules: &[PatternRule],
    alphabet: &Alphabet,
) -> Result<Vec<CompiledRule>, ConstraintError> {
    let resolve = |rule: usize, s: &str| {
        alphabet
            .index_of(s)
            .ok_or_else(|| ConstraintError::UnknownSymbol {
                rule,
                symbol: s.to_string(),
            })
    };
    let nbhd = |rule: usize, specs: &[NeighborSpec], h: Option<u32>| {
        if specs.len() > 7 {
            return Err(ConstraintError::PatternTooLarge(rule));
        }
        let neighbors = specs
            .iter()
            .map(|s| {
                let ty = s.symbol.as_deref().map(|x| resolve(rule, x)).transpose()?;
                Ok((ty, s.order))
            })
            .collect::<Result<Vec<_>, ConstraintError>>()?;
        Ok(CompiledNeighborhood {
            neighbors,
            hydrogens: h,
        })
    };
    rules
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(CompiledRule {
                center: resolve(i, &r.center)?,
                base: nbhd(i, &r.neighbors, r.hydrogens)?,
                unless: r
                    .unless
                    .as_ref()
                    .map(|u| nbhd(i, &u.neighbors, u.hydrogens))
                    .transpose()?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Valence { atom: usize },
    TooManyAtoms { n: usize },
    RingSize { size: usize },
    Pattern { rule: usize, atom: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstraintReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// Checks a whole molecule against valence, size, ring and pattern rules.
/// Frozen atoms need a reference molecule and are checked by
/// [`crate::DesignSpace::validate`].
pub fn check_structural_constraints(
    m: &Molecule,
    alphabet: &Alphabet,
    constraints: &Constraints,
) -> Result<ConstraintReport, ConstraintError> {
    let rules = compile_rules(&constraints.forbidden_patterns, alphabet)?;
    Ok(report(m, alphabet, constraints, &rules))
}

pub(crate) fn report(
    m: &Molecule,
    alphabet: &Alphabet,
    constraints: &Constraints,
    rules: &[CompiledRule],
) -> ConstraintReport {
    let mut violations = Vec::new();
    for i in 0..m.len() {
        if m.bond_sum(i) > alphabet.valence(m.atom(i)) as u32 {
            violations.push(Violation::Valence { atom: i });
        }
    }
    if m.len() > constraints.max_atoms {
        violations.push(Violation::TooManyAtoms { n: m.len() });
    }
    if let Some(allowed) = &constraints.allowed_ring_sizes {
        for size in rings::ring_sizes(m) {
            if !allowed.contains(&size) {
                violations.push(Violation::RingSize { size });
            }
        }
    }
    for atom in 0..m.len() {
        for (rule, r) in rules.iter().enumerate() {
            if r.fires(m, alphabet, atom) {
                violations.push(Violation::Pattern { rule, atom });
            }
        }
    }
    ConstraintReport {
        ok: violations.is_empty(),
        violations,
    }
}

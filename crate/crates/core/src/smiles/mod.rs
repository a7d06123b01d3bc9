//! SMILES subset: parsing (with kekulization of aromatic input), writing,
//! and conversion of molecules into construction traces.
//!
//! Supported: organic-subset and bracket atoms, `-` `=` `#` bonds, branches,
//! ring closures `0-9` and `%nn`, charges, `@`/`@@`, and lowercase aromatic
//! atoms. Stereo bonds, isotopes, atom classes, `.` and `:`/`$` bonds are
//! rejected. Output is always kekulized.

mod parse;
mod trace;
mod write;

use crate::alphabet::Alphabet;
use crate::molecule::Molecule;
use thiserror::Error;

pub use trace::{to_action_trace, ActionTrace, TraceError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SmilesError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("atom {symbol:?} at {pos} is not in the alphabet")]
    UnsupportedAtom { pos: usize, symbol: String },
    #[error("cannot kekulize aromatic system containing the atom at {pos}")]
    Kekulization { pos: usize },
    #[error("valence violation at {pos}: {message}")]
    Valence { pos: usize, message: String },
    #[error("bond order {order} at {pos} exceeds the maximum {max}")]
    BondOrder { pos: usize, order: u8, max: u8 },
}

impl SmilesError {
    pub fn position(&self) -> usize {
        match self {
            SmilesError::Syntax { pos, .. }
            | SmilesError::UnsupportedAtom { pos, .. }
            | SmilesError::Kekulization { pos }
            | SmilesError::Valence { pos, .. }
            | SmilesError::BondOrder { pos, .. } => *pos,
        }
    }
}

/// Parses a SMILES string into a molecule over `alphabet`. Implicit hydrogens
/// are not stored; they follow from each atom type's valence.
pub fn parse(s: &str, alphabet: &Alphabet) -> Result<Molecule, SmilesError> {
    parse::parse(s, alphabet)
}

/// Writes a deterministic SMILES string (canonical atom order, kekulized).
pub fn write(m: &Molecule, alphabet: &Alphabet) -> String {
    write::write(m, alphabet)
}

/// Reads a corpus: one SMILES per line, blank lines and `#` comments skipped.
/// Yields `(line_number, smiles)`.
pub fn corpus_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::canonical_key;

    fn cno() -> Alphabet {
        Alphabet::solvent()
    }

    #[test]
    fn formaldehyde() {
        let m = parse("C=O", &cno()).unwrap();
        assert_eq!(m.atoms(), &[0, 2]);
        assert_eq!(m.bond(0, 1), 2);
    }

    #[test]
    fn methane() {
        let a = cno();
        let m = parse("C", &a).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.valence_slack(&a, 0), 4);
        assert_eq!(write(&m, &a), "C");
    }

    #[test]
    fn benzene_is_kekulized() {
        let a = cno();
        let m = parse("c1ccccc1", &a).unwrap();
        assert_eq!(m.len(), 6);
        let mut doubles = 0;
        for i in 0..6 {
            // each carbon: two ring bonds, one of them double, one hydrogen
            assert_eq!(m.bond_sum(i) + m.valence_slack(&a, i), 4);
            assert_eq!(m.valence_slack(&a, i), 1);
            assert_eq!(m.degree(i), 2);
        }
        for (_, _, o) in m.bond_list() {
            if o == 2 {
                doubles += 1;
            }
        }
        assert_eq!(doubles, 3);
    }

    #[test]
    fn heteroaromatics() {
        let a = Alphabet::drug();
        for s in [
            "c1ccncc1",
            "c1cc[nH]c1",
            "c1ccoc1",
            "c1ccsc1",
            "Cn1cnc2c1c(=O)n(C)c(=O)n2C",
            "C[n+]1ccccc1",
            "O=c1cccc[nH]1",
            "c1ccc2ccccc2c1",
        ] {
            let m = parse(s, &a).unwrap_or_else(|e| panic!("{s}: {e}"));
            assert!(m.satisfies_valence(&a), "{s}");
        }
        assert!(matches!(
            parse("c1cccc1", &a),
            Err(SmilesError::Kekulization { .. })
        ));
    }

    #[test]
    fn writer_round_trips() {
        let a = Alphabet::drug();
        for s in [
            "C=O",
            "C1CCCCC1",
            "CC(=O)Oc1ccccc1C(=O)O",
            "C[N+](=O)[O-]",
            "N[C@@H](C)C(=O)O",
            "C1CC2CCC1CC2",
            "C#N",
            "FC(F)(F)Cl",
        ] {
            let m = parse(s, &a).unwrap();
            let w = write(&m, &a);
            let back = parse(&w, &a).unwrap_or_else(|e| panic!("{s} -> {w}: {e}"));
            assert_eq!(canonical_key(&m), canonical_key(&back), "{s} -> {w}");
            assert_eq!(write(&back, &a), w);
        }
    }

    #[test]
    fn cyclohexane_uses_one_ring_digit() {
        let a = cno();
        let w = write(&parse("C1CCCCC1", &a).unwrap(), &a);
        assert_eq!(w.matches('1').count(), 2);
        assert!(!w.contains('2'));
    }

    #[test]
    fn rejections_carry_positions() {
        let a = cno();
        let cases: &[(&str, usize)] = &[
            ("C(", 1),
            ("C)", 1),
            ("C1CC", 1),
            ("CC.C", 2),
            ("C/C=C/C", 1),
            ("[13CH4]", 1),
            ("C=", 1),
            ("(C)", 0),
            ("C11", 2),
            ("Cx", 1),
            ("[CH4:1]", 4),
        ];
        for &(s, pos) in cases {
            match parse(s, &a) {
                Err(SmilesError::Syntax { pos: p, .. }) => assert_eq!(p, pos, "{s}"),
                other => panic!("{s}: {other:?}"),
            }
        }
        assert!(matches!(
            parse("CCl", &a),
            Err(SmilesError::UnsupportedAtom { pos: 1, .. })
        ));
        assert!(matches!(
            parse("C=O=C", &a),
            Err(SmilesError::Valence { pos: 2, .. })
        ));
        assert!(matches!(parse("[CH2]", &a), Err(SmilesError::Valence { .. })));
        let single = Alphabet::from_symbols(&["C"], 1).unwrap();
        assert!(matches!(
            parse("C=C", &single),
            Err(SmilesError::BondOrder { .. })
        ));
    }

    #[test]
    fn ring_closure_details() {
        let a = cno();
        let m = parse("C=1CCCCC1", &a).unwrap();
        assert_eq!(m.bond(0, 5), 2);
        let m = parse("C%10CCCCC%10", &a).unwrap();
        assert_eq!(m.bond(0, 5), 1);
        assert!(parse("C=1CCCCC#1", &a).is_err());
        assert!(parse("C12CC12", &a).is_err());
    }

    #[test]
    fn corpus_line_filter() {
        let text = "# header\nC\n\n  CC  \n#x\nO\n";
        let lines: Vec<_> = corpus_lines(text).collect();
        assert_eq!(lines, vec![(2, "C"), (4, "CC"), (6, "O")]);
    }
}

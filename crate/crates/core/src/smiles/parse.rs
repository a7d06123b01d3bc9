use super::SmilesError;
use crate::alphabet::{atomic_number, Alphabet, ChiralTag};
use crate::molecule::Molecule;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondKind {
    Unspecified,
    Single,
    Double,
    Triple,
}

impl BondKind {
    fn from_char(c: char) -> Option<Self> {
        match c {
            '-' => Some(BondKind::Single),
            '=' => Some(BondKind::Double),
            '#' => Some(BondKind::Triple),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
struct RawAtom {
    pos: usize,
    symbol: String,
    atomic_number: u8,
    aromatic: bool,
    charge: i8,
    chiral: ChiralTag,
    /// Explicit hydrogen count for bracket atoms.
    hydrogens: Option<u32>,
}

#[derive(Debug, Clone, Copy)]
struct RawBond {
    a: usize,
    b: usize,
    kind: BondKind,
}

struct Parser<'a> {
    chars: Vec<char>,
    i: usize,
    src: &'a str,
    atoms: Vec<RawAtom>,
    bonds: Vec<RawBond>,
    rings: HashMap<u32, (usize, BondKind, usize)>,
}

const ORGANIC: [&str; 10] = ["Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I"];
const AROMATIC: [&str; 6] = ["b", "c", "n", "o", "p", "s"];
const BRACKET_AROMATIC: [&str; 8] = ["se", "as", "b", "c", "n", "o", "p", "s"];

fn syntax(pos: usize, message: impl Into<String>) -> SmilesError {
    SmilesError::Syntax {
        pos,
        message: message.into(),
    }
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            chars: src.chars().collect(),
            i: 0,
            src,
            atoms: Vec::new(),
            bonds: Vec::new(),
            rings: HashMap::new(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).copied()
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars()
            .enumerate()
            .all(|(k, c)| self.chars.get(self.i + k) == Some(&c))
    }

    fn parse(mut self) -> Result<(Vec<RawAtom>, Vec<RawBond>), SmilesError> {
        if self.chars.is_empty() {
            return Err(syntax(0, "empty SMILES"));
        }
        let mut prev: Option<usize> = None;
        let mut branches: Vec<(usize, usize)> = Vec::new();
        let mut pending: Option<(BondKind, usize)> = None;
        while let Some(c) = self.peek() {
            let pos = self.i;
            match c {
                '(' => {
                    let Some(p) = prev else {
                        return Err(syntax(pos, "branch without a preceding atom"));
                    };
                    if pending.is_some() {
                        return Err(syntax(pos, "bond symbol before branch"));
                    }
                    if self.chars.get(self.i + 1) == Some(&')') {
                        return Err(syntax(pos, "empty branch"));
                    }
                    branches.push((p, pos));
                    self.i += 1;
                }
                ')' => {
                    let Some((p, _)) = branches.pop() else {
                        return Err(syntax(pos, "unmatched ')'"));
                    };
                    if pending.is_some() {
                        return Err(syntax(pos, "dangling bond symbol"));
                    }
                    prev = Some(p);
                    self.i += 1;
                }
                '-' | '=' | '#' => {
                    if prev.is_none() {
                        return Err(syntax(pos, "bond symbol without a preceding atom"));
                    }
                    if pending.is_some() {
                        return Err(syntax(pos, "two consecutive bond symbols"));
                    }
                    pending = Some((BondKind::from_char(c).expect("bond char"), pos));
                    self.i += 1;
                }
                '0'..='9' | '%' => {
                    let Some(p) = prev else {
                        return Err(syntax(pos, "ring closure without a preceding atom"));
                    };
                    let label = self.ring_label()?;
                    let kind = pending.take().map(|(k, _)| k).unwrap_or(BondKind::Unspecified);
                    self.ring_bond(p, label, kind, pos)?;
                }
                '[' => {
                    let atom = self.bracket_atom()?;
                    self.push_atom(atom, &mut prev, &mut pending)?;
                }
                '.' => return Err(syntax(pos, "disconnected structures are not supported")),
                '/' | '\\' => return Err(syntax(pos, "stereo bond symbols are not supported")),
                ':' | '$' => return Err(syntax(pos, format!("bond symbol '{c}' is not supported"))),
                _ => {
                    let atom = self.organic_atom()?;
                    self.push_atom(atom, &mut prev, &mut pending)?;
                }
            }
        }
        if let Some((_, pos)) = pending {
            return Err(syntax(pos, "dangling bond symbol"));
        }
        if let Some((_, pos)) = branches.pop() {
            return Err(syntax(pos, "unclosed branch"));
        }
        if let Some((_, _, pos)) = self.rings.values().min_by_key(|r| r.2) {
            return Err(syntax(*pos, "unclosed ring"));
        }
        Ok((self.atoms, self.bonds))
    }

    fn push_atom(
        &mut self,
        atom: RawAtom,
        prev: &mut Option<usize>,
        pending: &mut Option<(BondKind, usize)>,
    ) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(p) = *prev {
            let kind = pending.take().map(|(k, _)| k).unwrap_or(BondKind::Unspecified);
            self.bonds.push(RawBond { a: p, b: idx, kind });
        }
        *prev = Some(idx);
        Ok(())
    }

    fn ring_label(&mut self) -> Result<u32, SmilesError> {
        let pos = self.i;
        if self.peek() == Some('%') {
            let d: String = self.chars.iter().skip(self.i + 1).take(2).collect();
            if d.len() != 2 || !d.chars().all(|c| c.is_ascii_digit()) {
                return Err(syntax(pos, "'%' must be followed by two digits"));
            }
            self.i += 3;
            Ok(d.parse().expect("digits"))
        } else {
            let d = self.peek().and_then(|c| c.to_digit(10)).expect("digit");
            self.i += 1;
            Ok(d)
        }
    }

    fn ring_bond(
        &mut self,
        atom: usize,
        label: u32,
        kind: BondKind,
        pos: usize,
    ) -> Result<(), SmilesError> {
        match self.rings.remove(&label) {
            None => {
                self.rings.insert(label, (atom, kind, pos));
                Ok(())
            }
            Some((other, open_kind, _)) => {
                if other == atom {
                    return Err(syntax(pos, "ring closure to the same atom"));
                }
                let kind = match (open_kind, kind) {
                    (BondKind::Unspecified, k) | (k, BondKind::Unspecified) => k,
                    (a, b) if a == b => a,
                    _ => return Err(syntax(pos, "conflicting ring-closure bond symbols")),
                };
                if self
                    .bonds
                    .iter()
                    .any(|b| (b.a == other && b.b == atom) || (b.a == atom && b.b == other))
                {
                    return Err(syntax(pos, "ring closure duplicates an existing bond"));
                }
                self.bonds.push(RawBond {
                    a: other,
                    b: atom,
                    kind,
                });
                Ok(())
            }
        }
    }

    fn organic_atom(&mut self) -> Result<RawAtom, SmilesError> {
        let pos = self.i;
        for sym in ORGANIC {
            if self.starts_with(sym) {
                self.i += sym.len();
                return Ok(RawAtom {
                    pos,
                    symbol: sym.to_string(),
                    atomic_number: atomic_number(sym).expect("organic"),
                    aromatic: false,
                    charge: 0,
                    chiral: ChiralTag::None,
                    hydrogens: None,
                });
            }
        }
        for sym in AROMATIC {
            if self.starts_with(sym) {
                self.i += sym.len();
                return Ok(RawAtom {
                    pos,
                    symbol: sym.to_string(),
                    atomic_number: atomic_number(&sym.to_uppercase()).expect("aromatic"),
                    aromatic: true,
                    charge: 0,
                    chiral: ChiralTag::None,
                    hydrogens: None,
                });
            }
        }
        let c = self.peek().unwrap_or(' ');
        Err(syntax(pos, format!("unexpected character '{c}'")))
    }

    fn bracket_atom(&mut self) -> Result<RawAtom, SmilesError> {
        let start = self.i;
        self.i += 1;
        if self.peek().is_some_and(|c| c.is_ascii_digit()) {
            return Err(syntax(self.i, "isotopes are not supported"));
        }
        let sym_pos = self.i;
        let (symbol, aromatic) = if let Some(sym) =
            BRACKET_AROMATIC.iter().find(|s| self.starts_with(s))
        {
            self.i += sym.len();
            (sym.to_string(), true)
        } else {
            match self.peek() {
                Some(c) if c.is_ascii_uppercase() => {
                    let mut s = c.to_string();
                    self.i += 1;
                    if let Some(l) = self.peek().filter(|l| l.is_ascii_lowercase()) {
                        let two = format!("{s}{l}");
                        if atomic_number(&two).is_some() {
                            s = two;
                            self.i += 1;
                        }
                    }
                    (s, false)
                }
                _ => return Err(syntax(sym_pos, "expected element symbol")),
            }
        };
        let element = if aromatic {
            let mut cs = symbol.chars();
            let first = cs.next().expect("nonempty").to_ascii_uppercase();
            format!("{first}{}", cs.as_str())
        } else {
            symbol.clone()
        };
        let z = atomic_number(&element)
            .ok_or_else(|| syntax(sym_pos, format!("unknown element '{symbol}'")))?;

        let mut chiral = ChiralTag::None;
        if self.peek() == Some('@') {
            self.i += 1;
            chiral = ChiralTag::Cw;
            if self.peek() == Some('@') {
                self.i += 1;
                chiral = ChiralTag::Ccw;
            }
            if self.peek().is_some_and(|c| c.is_ascii_uppercase() && c != 'H') {
                return Err(syntax(self.i, "extended chirality classes are not supported"));
            }
        }
        let mut hydrogens = 0;
        if self.peek() == Some('H') {
            self.i += 1;
            hydrogens = 1;
            if let Some(d) = self.peek().and_then(|c| c.to_digit(10)) {
                hydrogens = d;
                self.i += 1;
            }
        }
        let mut charge: i32 = 0;
        if let Some(sign @ ('+' | '-')) = self.peek() {
            let unit = if sign == '+' { 1 } else { -1 };
            self.i += 1;
            charge = unit;
            if let Some(d) = self.peek().and_then(|c| c.to_digit(10)) {
                charge = unit * d as i32;
                self.i += 1;
            } else {
                while self.peek() == Some(sign) {
                    charge += unit;
                    self.i += 1;
                }
            }
        }
        match self.peek() {
            Some(']') => self.i += 1,
            Some(':') => return Err(syntax(self.i, "atom classes are not supported")),
            Some(c) => return Err(syntax(self.i, format!("unexpected '{c}' in bracket atom"))),
            None => return Err(syntax(start, "unterminated bracket atom")),
        }
        Ok(RawAtom {
            pos: start,
            symbol: self.src[start..self.i].to_string(),
            atomic_number: z,
            aromatic,
            charge: charge.clamp(-128, 127) as i8,
            chiral,
            hydrogens: Some(hydrogens),
        })
    }
}

/// Valence used to decide whether an aromatic atom contributes a double bond.
fn pi_valence(z: u8, charge: i8) -> i32 {
    let c = charge as i32;
    match z {
        5 => 3 - c,
        6 => 4 - c.abs(),
        7 | 15 => 3 + c,
        8 | 16 | 34 => 2 + c,
        33 => 3 + c,
        _ => 0,
    }
}

fn kekulize(atoms: &[RawAtom], bonds: &[RawBond]) -> Result<Vec<u8>, SmilesError> {
    let n = atoms.len();
    let is_aromatic_bond = |b: &RawBond| {
        b.kind == BondKind::Unspecified && atoms[b.a].aromatic && atoms[b.b].aromatic
    };
    let explicit_order = |b: &RawBond| match b.kind {
        BondKind::Double => 2,
        BondKind::Triple => 3,
        _ => 1,
    };
    let mut sigma = vec![0i32; n];
    for b in bonds {
        let o = if is_aromatic_bond(b) { 1 } else { explicit_order(b) };
        sigma[b.a] += o;
        sigma[b.b] += o;
    }
    let needs: Vec<bool> = (0..n)
        .map(|i| {
            let a = &atoms[i];
            if !a.aromatic {
                return false;
            }
            let h = a.hydrogens.unwrap_or(0) as i32;
            pi_valence(a.atomic_number, a.charge) - sigma[i] - h >= 1
        })
        .collect();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, b) in bonds.iter().enumerate() {
        if is_aromatic_bond(b) && needs[b.a] && needs[b.b] {
            adj[b.a].push((b.b, e));
            adj[b.b].push((b.a, e));
        }
    }
    let mut mate = vec![usize::MAX; n];
    let mut double = vec![false; bonds.len()];
    if !perfect_matching(&needs, &adj, &mut mate, &mut double) {
        let pos = (0..n).find(|&i| needs[i]).map(|i| atoms[i].pos).unwrap_or(0);
        return Err(SmilesError::Kekulization { pos });
    }
    Ok(bonds
        .iter()
        .enumerate()
        .map(|(e, b)| {
            if is_aromatic_bond(b) {
                if double[e] {
                    2
                } else {
                    1
                }
            } else {
                explicit_order(b) as u8
            }
        })
        .collect())
}

fn perfect_matching(
    needs: &[bool],
    adj: &[Vec<(usize, usize)>],
    mate: &mut [usize],
    double: &mut [bool],
) -> bool {
    // most constrained unmatched atom first
    let mut pick: Option<(usize, usize)> = None;
    for i in 0..needs.len() {
        if needs[i] && mate[i] == usize::MAX {
            let options = adj[i].iter().filter(|(j, _)| mate[*j] == usize::MAX).count();
            if options == 0 {
                return false;
            }
            if pick.is_none_or(|(_, best)| options < best) {
                pick = Some((i, options));
            }
        }
    }
    let Some((i, _)) = pick else {
        return true;
    };
    for &(j, e) in &adj[i] {
        if mate[j] != usize::MAX {
            continue;
        }
        mate[i] = j;
        mate[j] = i;
        double[e] = true;
        if perfect_matching(needs, adj, mate, double) {
            return true;
        }
        mate[i] = usize::MAX;
        mate[j] = usize::MAX;
        double[e] = false;
    }
    false
}

pub(super) fn parse(s: &str, alphabet: &Alphabet) -> Result<Molecule, SmilesError> {
    let (atoms, bonds) = Parser::new(s).parse()?;
    let orders = kekulize(&atoms, &bonds)?;
    let y = alphabet.max_bond_order();
    let mut types = Vec::with_capacity(atoms.len());
    for a in &atoms {
        let t = alphabet
            .lookup(a.atomic_number, a.charge, a.chiral)
            .ok_or_else(|| SmilesError::UnsupportedAtom {
                pos: a.pos,
                symbol: a.symbol.clone(),
            })?;
        types.push(t);
    }
    let mut edges = Vec::with_capacity(bonds.len());
    for (b, &o) in bonds.iter().zip(&orders) {
        if o > y {
            return Err(SmilesError::BondOrder {
                pos: atoms[b.b].pos,
                order: o,
                max: y,
            });
        }
        edges.push((b.a, b.b, o));
    }
    let m = Molecule::from_edges(types, &edges).map_err(|message| SmilesError::Syntax {
        pos: 0,
        message,
    })?;
    for (i, a) in atoms.iter().enumerate() {
        let valence = alphabet.valence(m.atom(i)) as u32;
        let sum = m.bond_sum(i);
        if sum > valence {
            return Err(SmilesError::Valence {
                pos: a.pos,
                message: format!("bond order sum {sum} exceeds valence {valence}"),
            });
        }
        if let Some(h) = a.hydrogens {
            if h != valence - sum {
                return Err(SmilesError::Valence {
                    pos: a.pos,
                    message: format!(
                        "{} hydrogens written but the atom type implies {}",
                        h,
                        valence - sum
                    ),
                });
            }
        }
    }
    Ok(m)
}

use crate::alphabet::{Alphabet, ChiralTag};
use crate::canon::canonical_order;
use crate::molecule::Molecule;
use std::fmt::Write as _;

const ORGANIC_ELEMENTS: [u8; 10] = [5, 6, 7, 8, 9, 15, 16, 17, 35, 53];

fn atom_token(m: &Molecule, alphabet: &Alphabet, i: usize) -> String {
    let spec = alphabet.spec(m.atom(i));
    let plain = spec.formal_charge == 0
        && spec.chiral_tag == ChiralTag::None
        && ORGANIC_ELEMENTS.contains(&spec.atomic_number);
    if plain {
        return spec.element().to_string();
    }
    let mut s = String::from("[");
    s.push_str(spec.element());
    match spec.chiral_tag {
        ChiralTag::None => {}
        ChiralTag::Cw => s.push('@'),
        ChiralTag::Ccw => s.push_str("@@"),
    }
    match m.valence_slack(alphabet, i) {
        0 => {}
        1 => s.push('H'),
        h => {
            let _ = write!(s, "H{h}");
        }
    }
    match spec.formal_charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => {
            let _ = write!(s, "+{c}");
        }
        c => {
            let _ = write!(s, "-{}", -c);
        }
    }
    s.push(']');
    s
}

fn bond_token(order: u8) -> &'static str {
    match order {
        2 => "=",
        3 => "#",
        _ => "",
    }
}

fn ring_label(d: usize) -> String {
    if d < 10 {
        d.to_string()
    } else {
        format!("%{d:02}")
    }
}

struct Writer<'a> {
    m: &'a Molecule,
    alphabet: &'a Alphabet,
    rank: Vec<usize>,
    visited: Vec<bool>,
    visit_index: Vec<usize>,
    children: Vec<Vec<usize>>,
    // per atom: (partner, order) of ring-closure bonds
    closures: Vec<Vec<usize>>,
    digits: Vec<Option<usize>>,
    ring_digit: std::collections::HashMap<(usize, usize), usize>,
    out: String,
}

impl<'a> Writer<'a> {
    fn sorted_neighbors(&self, u: usize) -> Vec<usize> {
        let mut nb: Vec<usize> = self.m.neighbors(u).map(|(v, _)| v).collect();
        nb.sort_by_key(|&v| self.rank[v]);
        nb
    }

    fn discover(&mut self, u: usize, parent: Option<usize>, counter: &mut usize) {
        self.visited[u] = true;
        self.visit_index[u] = *counter;
        *counter += 1;
        for v in self.sorted_neighbors(u) {
            if Some(v) == parent {
                continue;
            }
            if self.visited[v] {
                if self.visit_index[v] < self.visit_index[u] && !self.closures[u].contains(&v) {
                    self.closures[u].push(v);
                    self.closures[v].push(u);
                }
            } else {
                self.children[u].push(v);
                self.discover(v, Some(u), counter);
            }
        }
    }

    fn emit(&mut self, u: usize) {
        let token = atom_token(self.m, self.alphabet, u);
        self.out.push_str(&token);
        let mut closures = self.closures[u].clone();
        closures.sort_by_key(|&v| self.visit_index[v]);
        for v in closures {
            let key = (u.min(v), u.max(v));
            if let Some(d) = self.ring_digit.remove(&key) {
                self.digits[d] = None;
                let label = ring_label(d);
                self.out.push_str(&label);
            } else {
                let d = (1..self.digits.len())
                    .find(|&d| self.digits[d].is_none())
                    .expect("fewer than 100 open rings");
                self.digits[d] = Some(u);
                self.ring_digit.insert(key, d);
                let bond = bond_token(self.m.bond(u, v));
                self.out.push_str(bond);
                let label = ring_label(d);
                self.out.push_str(&label);
            }
        }
        let children = self.children[u].clone();
        let last = children.len().saturating_sub(1);
        for (k, v) in children.into_iter().enumerate() {
            let bond = bond_token(self.m.bond(u, v));
            if k < last {
                self.out.push('(');
                self.out.push_str(bond);
                self.emit(v);
                self.out.push(')');
            } else {
                self.out.push_str(bond);
                self.emit(v);
            }
        }
    }
}

pub(super) fn write(m: &Molecule, alphabet: &Alphabet) -> String {
    let n = m.len();
    let order = canonical_order(m);
    let mut rank = vec![0; n];
    for (k, &a) in order.iter().enumerate() {
        rank[a] = k;
    }
    let mut w = Writer {
        m,
        alphabet,
        rank,
        visited: vec![false; n],
        visit_index: vec![0; n],
        children: vec![Vec::new(); n],
        closures: vec![Vec::new(); n],
        digits: vec![None; 100],
        ring_digit: Default::default(),
        out: String::new(),
    };
    let mut counter = 0;
    w.discover(order[0], None, &mut counter);
    w.emit(order[0]);
    w.out
}

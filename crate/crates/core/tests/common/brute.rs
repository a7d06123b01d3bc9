//! Reference implementations that share no code with the library beyond the
//! `Molecule` accessors.

use molgrow_core::Molecule;
use std::collections::{BTreeSet, VecDeque};

/// Atom types and a dense symmetric bond-order matrix.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Graph {
    pub atoms: Vec<usize>,
    pub bonds: Vec<Vec<u8>>,
}

impl Graph {
    pub fn of(m: &Molecule) -> Self {
        let n = m.len();
        Graph {
            atoms: m.atoms().to_vec(),
            bonds: (0..n).map(|i| (0..n).map(|j| m.bond(i, j)).collect()).collect(),
        }
    }

    pub fn single(t: usize) -> Self {
        Graph {
            atoms: vec![t],
            bonds: vec![vec![0]],
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn to_molecule(&self) -> Molecule {
        let mut edges = Vec::new();
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                if self.bonds[i][j] > 0 {
                    edges.push((i, j, self.bonds[i][j]));
                }
            }
        }
        Molecule::from_edges(self.atoms.clone(), &edges).expect("connected")
    }

    pub fn add_atom(&self, t: usize, l: usize, o: u8) -> Graph {
        let mut g = self.clone();
        for row in &mut g.bonds {
            row.push(0);
        }
        g.atoms.push(t);
        g.bonds.push(vec![0; g.atoms.len()]);
        let n = g.len() - 1;
        g.bonds[n][l] = o;
        g.bonds[l][n] = o;
        g
    }

    pub fn add_bond(&self, i: usize, j: usize, o: u8) -> Graph {
        let mut g = self.clone();
        g.bonds[i][j] = o;
        g.bonds[j][i] = o;
        g
    }

    pub fn connected(&self) -> bool {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut q = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = q.pop_front() {
            for v in 0..n {
                if self.bonds[u][v] > 0 && !seen[v] {
                    seen[v] = true;
                    q.push_back(v);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Every atom's bond-order sum within its valence, orders within `1..=y`.
    pub fn valence_ok(&self, valences: &[u32], y: u8) -> bool {
        (0..self.len()).all(|i| {
            self.bonds[i][i] == 0
                && self.bonds[i].iter().all(|&o| o <= y)
                && (0..self.len()).all(|j| self.bonds[i][j] == self.bonds[j][i])
                && self.bonds[i].iter().map(|&o| o as u32).sum::<u32>() <= valences[self.atoms[i]]
        })
    }

    /// Lexicographically smallest relabeling. Factorial; small graphs only.
    pub fn canonical_form(&self) -> (Vec<usize>, Vec<u8>) {
        let n = self.len();
        let mut best: Option<(Vec<usize>, Vec<u8>)> = None;
        let mut perm: Vec<usize> = (0..n).collect();
        permutations(&mut perm, 0, &mut |p| {
            let atoms: Vec<usize> = p.iter().map(|&i| self.atoms[i]).collect();
            let bonds: Vec<u8> = p
                .iter()
                .flat_map(|&i| p.iter().map(move |&j| (i, j)))
                .map(|(i, j)| self.bonds[i][j])
                .collect();
            let cand = (atoms, bonds);
            if best.as_ref().is_none_or(|b| cand < *b) {
                best = Some(cand);
            }
        });
        best.expect("nonempty")
    }
}

fn permutations(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permutations(p, k + 1, f);
        p.swap(k, i);
    }
}

/// Complete edits as `(kind, a, b, order)`: kind 0 adds an atom of type `a`
/// bonded to `b`, kind 1 bonds existing atoms `a < b`.
pub type Edit = (u8, usize, usize, u8);

/// Every syntactically possible edit whose result passes the valence check
/// and the atom cap.
pub fn feasible_edits(g: &Graph, valences: &[u32], y: u8, max_atoms: usize) -> BTreeSet<Edit> {
    let mut out = BTreeSet::new();
    let n = g.len();
    for t in 0..valences.len() {
        for l in 0..n {
            for o in 1..=y {
                if n < max_atoms && g.add_atom(t, l, o).valence_ok(valences, y) {
                    out.insert((0, t, l, o));
                }
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            if g.bonds[i][j] != 0 {
                continue;
            }
            for o in 1..=y {
                if g.add_bond(i, j, o).valence_ok(valences, y) {
                    out.insert((1, i, j, o));
                }
            }
        }
    }
    out
}

pub fn apply_edit(g: &Graph, e: Edit) -> Graph {
    match e.0 {
        0 => g.add_atom(e.1, e.2, e.3),
        _ => g.add_bond(e.1, e.2, e.3),
    }
}

/// Canonical forms of all connected valence-respecting graphs with up to
/// `max_n` atoms, by exhaustive labeled enumeration.
pub fn all_graphs(valences: &[u32], y: u8, max_n: usize) -> BTreeSet<(Vec<usize>, Vec<u8>)> {
    let k = valences.len();
    let mut out = BTreeSet::new();
    for n in 1..=max_n {
        let pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        for ta in 0..k.pow(n as u32) {
            let atoms: Vec<usize> = (0..n).map(|i| ta / k.pow(i as u32) % k).collect();
            let base = y as usize + 1;
            for ba in 0..base.pow(pairs.len() as u32) {
                let mut bonds = vec![vec![0u8; n]; n];
                for (p, &(i, j)) in pairs.iter().enumerate() {
                    let o = (ba / base.pow(p as u32) % base) as u8;
                    bonds[i][j] = o;
                    bonds[j][i] = o;
                }
                let g = Graph {
                    atoms: atoms.clone(),
                    bonds,
                };
                if g.valence_ok(valences, y) && g.connected() {
                    out.insert(g.canonical_form());
                }
            }
        }
    }
    out
}

/// Backtracking isomorphism test with type, degree and bond-order pruning.
pub fn isomorphic(a: &Molecule, b: &Molecule) -> bool {
    let (ga, gb) = (Graph::of(a), Graph::of(b));
    let n = ga.len();
    if n != gb.len() {
        return false;
    }
    let sig = |g: &Graph, i: usize| {
        let mut orders: Vec<u8> = g.bonds[i].iter().copied().filter(|&o| o > 0).collect();
        orders.sort();
        (g.atoms[i], orders)
    };
    let sa: Vec<_> = (0..n).map(|i| sig(&ga, i)).collect();
    let sb: Vec<_> = (0..n).map(|i| sig(&gb, i)).collect();
    let mut ms = sa.clone();
    let mut ns = sb.clone();
    ms.sort();
    ns.sort();
    if ms != ns {
        return false;
    }
    // visit atoms of `a` in BFS order so each new atom touches mapped ones
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            order.push(u);
            for v in 0..n {
                if ga.bonds[u][v] > 0 && !seen[v] {
                    seen[v] = true;
                    q.push_back(v);
                }
            }
        }
    }
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    fn extend(
        k: usize,
        order: &[usize],
        ga: &Graph,
        gb: &Graph,
        sa: &[(usize, Vec<u8>)],
        sb: &[(usize, Vec<u8>)],
        map: &mut [usize],
        used: &mut [bool],
    ) -> bool {
        if k == order.len() {
            return true;
        }
        let u = order[k];
        for v in 0..gb.len() {
            if used[v] || sa[u] != sb[v] {
                continue;
            }
            let consistent = order[..k]
                .iter()
                .all(|&w| ga.bonds[u][w] == gb.bonds[v][map[w]]);
            if !consistent {
                continue;
            }
            map[u] = v;
            used[v] = true;
            if extend(k + 1, order, ga, gb, sa, sb, map, used) {
                return true;
            }
            used[v] = false;
            map[u] = usize::MAX;
        }
        false
    }
    extend(0, &order, &ga, &gb, &sa, &sb, &mut map, &mut used)
}

/// Length of the shortest cycle through bond `i-j`, if any.
pub fn smallest_cycle_through(g: &Graph, i: usize, j: usize) -> Option<usize> {
    let n = g.len();
    let mut dist = vec![usize::MAX; n];
    dist[i] = 0;
    let mut q = VecDeque::from([i]);
    while let Some(u) = q.pop_front() {
        for v in 0..n {
            if g.bonds[u][v] == 0 || (u == i && v == j) || (u == j && v == i) {
                continue;
            }
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    (dist[j] != usize::MAX).then(|| dist[j] + 1)
}

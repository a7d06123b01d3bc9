//! Smallest set of smallest rings via Horton candidates and GF(2) elimination.

use crate::molecule::Molecule;
use std::collections::VecDeque;

type EdgeSet = Vec<u64>;

fn edge_index(m: &Molecule) -> (Vec<(usize, usize)>, Vec<usize>) {
    let n = m.len();
    let mut edges = Vec::new();
    let mut index = vec![usize::MAX; n * n];
    for (i, j, _) in m.bond_list() {
        index[i * n + j] = edges.len();
        index[j * n + i] = edges.len();
        edges.push((i, j));
    }
    (edges, index)
}

fn bfs(m: &Molecule, root: usize) -> (Vec<usize>, Vec<usize>) {
    let n = m.len();
    let mut dist = vec![usize::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    dist[root] = 0;
    queue.push_back(root);
    while let Some(u) = queue.pop_front() {
        for (v, _) in m.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    (dist, parent)
}

/// Number of bonds on a shortest path between two atoms, if connected.
pub fn shortest_path_len(m: &Molecule, from: usize, to: usize) -> Option<usize> {
    let (dist, _) = bfs(m, from);
    (dist[to] != usize::MAX).then_some(dist[to])
}

fn components(m: &Molecule) -> usize {
    let n = m.len();
    let mut seen = vec![false; n];
    let mut count = 0;
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            for (v, _) in m.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    count
}

/// Dimension of the cycle space (`m - n + c`).
pub fn cycle_rank(m: &Molecule) -> usize {
    m.num_bonds() + components(m) - m.len()
}

/// Sizes of the rings in a minimum cycle basis, ascending. The multiset is
/// the same for every minimum basis even when the rings themselves are not.
pub fn ring_sizes(m: &Molecule) -> Vec<usize> {
    smallest_rings(m).into_iter().map(|r| r.len()).collect()
}

/// Rings of a minimum cycle basis, each given as its atom indices.
pub fn smallest_rings(m: &Molecule) -> Vec<Vec<usize>> {
    let rank = cycle_rank(m);
    if rank == 0 {
        return Vec::new();
    }
    let n = m.len();
    let (edges, index) = edge_index(m);
    let words = edges.len().div_ceil(64);
    let mut candidates: Vec<(usize, EdgeSet)> = Vec::new();
    for v in 0..n {
        let (dist, parent) = bfs(m, v);
        let path = |mut x: usize, set: &mut EdgeSet, nodes: &mut Vec<usize>| {
            while x != v {
                let p = parent[x];
                let e = index[x * n + p];
                set[e / 64] |= 1 << (e % 64);
                nodes.push(x);
                x = p;
            }
        };
        for (e, &(x, y)) in edges.iter().enumerate() {
            if dist[x] == usize::MAX || dist[y] == usize::MAX {
                continue;
            }
            let mut px = vec![0u64; words];
            let mut py = vec![0u64; words];
            let mut nx = Vec::new();
            let mut ny = Vec::new();
            path(x, &mut px, &mut nx);
            path(y, &mut py, &mut ny);
            if nx.iter().any(|a| ny.contains(a)) {
                continue;
            }
            if (px[e / 64] | py[e / 64]) & (1 << (e % 64)) != 0 {
                continue;
            }
            let len = dist[x] + dist[y] + 1;
            if len < 3 {
                continue;
            }
            let mut set = px;
            for (a, b) in set.iter_mut().zip(&py) {
                *a |= b;
            }
            set[e / 64] |= 1 << (e % 64);
            candidates.push((len, set));
        }
    }
    candidates.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    candidates.dedup_by(|a, b| a.1 == b.1);

    let mut basis: Vec<(usize, EdgeSet)> = Vec::new();
    let mut chosen = Vec::new();
    for (_, set) in candidates {
        let mut reduced = set.clone();
        for (pivot, row) in &basis {
            if reduced[pivot / 64] & (1 << (pivot % 64)) != 0 {
                for (a, b) in reduced.iter_mut().zip(row) {
                    *a ^= b;
                }
            }
        }
        if let Some(pivot) = first_bit(&reduced) {
            basis.push((pivot, reduced));
            chosen.push(set);
            if chosen.len() == rank {
                break;
            }
        }
    }
    chosen
        .into_iter()
        .map(|set| ring_atoms(&edges, &set))
        .collect()
}

fn first_bit(set: &EdgeSet) -> Option<usize> {
    set.iter()
        .enumerate()
        .find(|(_, w)| **w != 0)
        .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}

fn ring_atoms(edges: &[(usize, usize)], set: &EdgeSet) -> Vec<usize> {
    let mut atoms: Vec<usize> = edges
        .iter()
        .enumerate()
        .filter(|(e, _)| set[e / 64] & (1 << (e % 64)) != 0)
        .flat_map(|(_, &(a, b))| [a, b])
        .collect();
    atoms.sort_unstable();
    atoms.dedup();
    atoms
}

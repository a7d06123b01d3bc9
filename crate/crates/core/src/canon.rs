//! Canonical labeling for deduplication: iterative neighborhood refinement
//! with exhaustive individualization of the remaining ties.

use crate::molecule::Molecule;

/// Isomorphism-invariant byte string (atom types and bond orders included).
pub fn canonical_key(m: &Molecule) -> Vec<u8> {
    canonical_labeling(m).0
}

/// Atom order that realizes the canonical key: `order[k]` is the atom placed
/// at canonical position `k`.
pub fn canonical_order(m: &Molecule) -> Vec<usize> {
    canonical_labeling(m).1
}

pub fn canonical_labeling(m: &Molecule) -> (Vec<u8>, Vec<usize>) {
    let n = m.len();
    let initial: Vec<(usize, usize, u32)> = (0..n)
        .map(|i| (m.atom(i), m.degree(i), m.bond_sum(i)))
        .collect();
    let colors = rank(&initial);
    let mut best: Option<(Vec<u8>, Vec<usize>)> = None;
    search(m, colors, &mut best);
    best.expect("at least one leaf")
}

fn rank<T: Ord + Clone>(sigs: &[T]) -> Vec<u32> {
    let mut sorted: Vec<T> = sigs.to_vec();
    sorted.sort();
    sorted.dedup();
    sigs.iter()
        .map(|s| sorted.binary_search(s).expect("present") as u32)
        .collect()
}

fn count_classes(colors: &[u32]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

fn refine(m: &Molecule, mut colors: Vec<u32>) -> Vec<u32> {
    let n = m.len();
    let mut classes = count_classes(&colors);
    loop {
        let sigs: Vec<(u32, Vec<(u8, u32)>)> = (0..n)
            .map(|i| {
                let mut nb: Vec<(u8, u32)> = m.neighbors(i).map(|(j, o)| (o, colors[j])).collect();
                nb.sort_unstable();
                (colors[i], nb)
            })
            .collect();
        let next = rank(&sigs);
        let next_classes = count_classes(&next);
        colors = next;
        if next_classes == classes {
            return colors;
        }
        classes = next_classes;
    }
}

fn encode(m: &Molecule, order: &[usize]) -> Vec<u8> {
    let n = m.len();
    let mut key = Vec::with_capacity(2 + 2 * n + n * (n - 1) / 2);
    key.extend_from_slice(&(n as u16).to_le_bytes());
    for &a in order {
        key.extend_from_slice(&(m.atom(a) as u16).to_le_bytes());
    }
    for a in 0..n {
        for b in a + 1..n {
            key.push(m.bond(order[a], order[b]));
        }
    }
    key
}

fn are_twins(m: &Molecule, u: usize, v: usize) -> bool {
    let ru = m.bond_row(u);
    let rv = m.bond_row(v);
    (0..m.len())
        .filter(|&k| k != u && k != v)
        .all(|k| ru[k] == rv[k])
}

fn search(m: &Molecule, colors: Vec<u32>, best: &mut Option<(Vec<u8>, Vec<usize>)>) {
    let colors = refine(m, colors);
    let n = m.len();
    let mut cell_sizes = vec![0usize; n];
    for &c in &colors {
        cell_sizes[c as usize] += 1;
    }
    let Some(target) = (0..n).find(|&c| cell_sizes[c] > 1) else {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| colors[i]);
        let key = encode(m, &order);
        if best.as_ref().is_none_or(|(b, _)| key < *b) {
            *best = Some((key, order));
        }
        return;
    };
    let cell: Vec<usize> = (0..n).filter(|&i| colors[i] as usize == target).collect();
    let mut representatives: Vec<usize> = Vec::new();
    for &v in &cell {
        if representatives.iter().all(|&r| !are_twins(m, r, v)) {
            representatives.push(v);
        }
    }
    for v in representatives {
        let individualized: Vec<u32> = (0..n)
            .map(|i| {
                if i == v {
                    2 * colors[i]
                } else {
                    2 * colors[i] + 1
                }
            })
            .collect();
        search(m, individualized, best);
    }
}

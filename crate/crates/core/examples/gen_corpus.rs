//! Regenerates `data/corpus.smi`: random molecules written with a randomized
//! writer (varied roots, branch orders, ring labels, explicit bonds and
//! bracket atoms) plus hand-written aromatic and charged structures.
//!
//! `cargo run -p molgrow-core --example gen_corpus > crates/core/data/corpus.smi`

use molgrow_core::smiles::parse;
use molgrow_core::space::{advance, Step};
use molgrow_core::{ActionLevelState, Action, Alphabet, ChiralTag, Constraints, DesignSpace, Molecule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const AROMATIC: &[&str] = &[
    "c1ccccc1", "Cc1ccccc1", "Oc1ccccc1", "Nc1ccccc1", "c1ccncc1", "c1ccoc1", "c1cc[nH]c1",
    "c1ccsc1", "c1ccc2ccccc2c1", "c1ccc2[nH]ccc2c1", "c1ccc2ncccc2c1", "c1c[nH]cn1",
    "c1cocn1", "c1cscn1", "c1cnccn1", "c1ncncn1", "O=c1cc[nH]cc1", "Cc1ccc(O)cc1",
    "COc1ccccc1", "CC(=O)Oc1ccccc1C(=O)O", "c1ccc(-c2ccccc2)cc1", "Clc1ccccc1",
    "Brc1ccc(F)cc1", "Ic1ccccc1", "FC(F)(F)c1ccccc1", "c1ccc2c(c1)oc1ccccc12",
    "Cn1ccnc1", "c1nc2ccccc2[nH]1", "O=[N+]([O-])c1ccccc1", "c1cc[n+](C)cc1",
    "CC(C)Cc1ccc(C(C)C(=O)O)cc1", "CN1C=NC2=C1C(=O)N(C)C(=O)N2C", "Cn1cnc2c1c(=O)n(C)c(=O)n2C",
    "NS(=O)(=O)c1ccccc1", "c1ccc2c(c1)ccc1ccccc12", "OC(=O)c1ccccc1O", "c1ccc(cc1)P(c1ccccc1)c1ccccc1",
    "C1=CC=CC=C1", "O=C1C=CC(=O)C=C1", "N#Cc1ccccc1", "c1cc2ccc3cccc4ccc(c1)c2c34",
];

const HANDWRITTEN: &[&str] = &[
    "[CH4]", "[NH4+]", "[OH-]", "C[O-]", "C[N+](C)(C)C", "[C-]#N", "C[C@H](N)C(=O)O",
    "C[C@@H](O)CC", "N[C@@H](CC(C)C)C(=O)O", "C[S@H](=O)(C)C", "C[S+](=O)(=O)(C)C", "CS(=O)(=O)O",
    "OP(=O)(O)O", "OP(=O)([O-])O", "FC(F)(F)Cl", "ClCCl", "BrCCBr", "ICI", "C1CC1", "C1CCC1",
    "C1CC2CC1C2", "C12C3C4C1C5C2C3C45", "C%10CCCCC%10", "C1CC%12CCC1CC%12", "O=C=O", "C#C",
    "N#N", "O=O", "C=C=C", "N=[N+]=[N-]", "C[N+]#[C-]", "[O+]#[C-]", "CC(C)(C)C", "OCC(O)CO",
    "NC(=O)N", "CC(=O)N(C)C", "C(C(C(C(C(C)C)C)C)C)C", "CCCCCCCCCCCCCCCCCCCC",
];

fn atom_token(a: &Alphabet, t: usize, hydrogens: u32, rng: &mut ChaCha8Rng) -> String {
    let s = a.spec(t);
    let el = s.element();
    let plain = s.formal_charge == 0 && s.chiral_tag == ChiralTag::None;
    if plain && !rng.random_bool(0.08) {
        return el.to_string();
    }
    let mut out = format!("[{el}");
    match s.chiral_tag {
        ChiralTag::Cw => out.push('@'),
        ChiralTag::Ccw => out.push_str("@@"),
        ChiralTag::None => {}
    }
    match hydrogens {
        0 => {}
        1 => out.push('H'),
        h => out.push_str(&format!("H{h}")),
    }
    match s.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => out.push_str(&format!("+{c}")),
        c => out.push_str(&format!("-{}", -c)),
    }
    out.push(']');
    out
}

fn bond_token(o: u8, rng: &mut ChaCha8Rng) -> &'static str {
    match o {
        1 if rng.random_bool(0.1) => "-",
        1 => "",
        2 => "=",
        _ => "#",
    }
}

fn ring_label(l: usize) -> String {
    if l < 10 {
        l.to_string()
    } else {
        format!("%{l}")
    }
}

/// Depth-first SMILES with random root and neighbor order.
fn random_smiles(m: &Molecule, a: &Alphabet, rng: &mut ChaCha8Rng) -> String {
    let n = m.len();
    let root = rng.random_range(0..n);
    let mut order = vec![usize::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut stack = vec![root];
    let mut next = 0;
    while let Some(u) = stack.pop() {
        if order[u] != usize::MAX {
            continue;
        }
        order[u] = next;
        next += 1;
        if parent[u] != usize::MAX {
            children[parent[u]].push(u);
        }
        let mut nb: Vec<usize> = m.neighbors(u).map(|(v, _)| v).filter(|&v| order[v] == usize::MAX).collect();
        for i in (1..nb.len()).rev() {
            nb.swap(i, rng.random_range(0..=i));
        }
        for v in nb {
            parent[v] = u;
            stack.push(v);
        }
    }
    // ring-closure bonds are the non-tree bonds; each gets a label at both ends
    let offset = if rng.random_bool(0.1) { 10 } else { 1 };
    let mut labels: Vec<Vec<(usize, u8, bool)>> = vec![Vec::new(); n];
    let mut free: Vec<usize> = Vec::new();
    let mut used = 0;
    let mut in_use: Vec<Option<(usize, usize)>> = Vec::new();
    let mut by_order: Vec<usize> = (0..n).collect();
    by_order.sort_by_key(|&u| order[u]);
    for &u in &by_order {
        for (v, o) in m.neighbors(u) {
            if parent[u] == v || parent[v] == u || order[v] < order[u] {
                continue;
            }
            let l = free.pop().unwrap_or_else(|| {
                used += 1;
                used - 1
            });
            if in_use.len() <= l {
                in_use.resize(l + 1, None);
            }
            in_use[l] = Some((u, v));
            labels[u].push((l + offset, o, true));
            labels[v].push((l + offset, o, false));
        }
        for l in 0..in_use.len() {
            if let Some((_, v)) = in_use[l] {
                if v == u {
                    in_use[l] = None;
                    free.push(l);
                }
            }
        }
    }
    let mut out = String::new();
    emit(root, m, a, &children, &labels, rng, &mut out);
    out
}

fn emit(
    u: usize,
    m: &Molecule,
    a: &Alphabet,
    children: &[Vec<usize>],
    labels: &[Vec<(usize, u8, bool)>],
    rng: &mut ChaCha8Rng,
    out: &mut String,
) {
    let h = a.valence(m.atom(u)) as u32 - m.bond_sum(u);
    out.push_str(&atom_token(a, m.atom(u), h, rng));
    for &(l, o, opening) in &labels[u] {
        if opening || rng.random_bool(0.5) {
            out.push_str(bond_token(o, rng));
        } else if o == 1 {
            // closing end may repeat the bond symbol
        }
        out.push_str(&ring_label(l));
    }
    let kids = &children[u];
    for (i, &c) in kids.iter().enumerate() {
        let last = i + 1 == kids.len();
        if !last {
            out.push('(');
        }
        out.push_str(bond_token(m.bond(u, c), rng));
        emit(c, m, a, children, labels, rng, out);
        if !last {
            out.push(')');
        }
    }
}

fn rollout(space: &DesignSpace, rng: &mut ChaCha8Rng, target: usize) -> Molecule {
    let k = space.alphabet().len();
    let y = space.alphabet().max_bond_order();
    let mut m = Molecule::single(rng.random_range(0..k));
    while m.len() < target {
        let fa = space.feasible_actions(&m);
        let mut state = ActionLevelState::default();
        let action = loop {
            let mut mask = fa.mask(&state, m.len(), k, y);
            if state.first.is_none() {
                mask[0] = false;
            }
            let options: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
            if options.is_empty() {
                break Action::DontChange;
            }
            match advance(state, options[rng.random_range(0..options.len())], k) {
                Step::Continue(s) => state = s,
                Step::Complete(a) => break a,
            }
        };
        if action == Action::DontChange {
            break;
        }
        m = space.apply(&m, action).expect("feasible");
    }
    m
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let drug = Alphabet::drug();
    let mut lines: Vec<String> = Vec::new();
    lines.extend(AROMATIC.iter().map(|s| s.to_string()));
    lines.extend(HANDWRITTEN.iter().map(|s| s.to_string()));
    let solvent = DesignSpace::new(Alphabet::solvent(), Constraints::with_max_atoms(24), &Molecule::single(0))
        .expect("space");
    let solvent_rings = DesignSpace::new(Alphabet::solvent(), Constraints::solvent_rules(24), &Molecule::single(0))
        .expect("space");
    let drug_space = DesignSpace::new(drug.clone(), Constraints::with_max_atoms(20), &Molecule::single(0))
        .expect("space");
    for i in 0..1000 {
        let (space, a) = match i % 4 {
            0 | 1 => (&solvent, solvent.alphabet()),
            2 => (&solvent_rings, solvent_rings.alphabet()),
            _ => (&drug_space, &drug),
        };
        let target = rng.random_range(1..=space.constraints().max_atoms);
        let m = rollout(space, &mut rng, target);
        lines.push(random_smiles(&m, a, &mut rng));
    }
    println!("# generated by examples/gen_corpus.rs; parse with the drug-full alphabet");
    let bad: Vec<String> = lines
        .iter()
        .filter_map(|l| parse(l, &drug).err().map(|e| format!("{l}: {e}")))
        .collect();
    assert!(bad.is_empty(), "{bad:#?}");
    for l in &lines {
        println!("{l}");
    }
}

//! Checks shared by the focused test targets and the acceptance runner. Each
//! panics on failure and returns a one-line summary on success.

use super::brute::{self, Graph};
use super::{permutation, random_molecule, random_rollout, Decision};
use molgrow_core::canon::canonical_key;
use molgrow_core::enumerate::{enumerate_molecules, enumerate_valid};
use molgrow_core::learner::{run, Archive, EpochProgress, LearnerConfig, RunOutcome};
use molgrow_core::objectives::{
    build_objective, miscibility_penalty, solvent_iba_objective, solvent_tmb_objective,
    ObjectiveSpec,
};
use molgrow_core::policy::{Logits, NetworkSize, Policy, PolicyConfig, Scalar};
use molgrow_core::sampler::{stochastic_beam_search, SearchSpace};
use molgrow_core::smiles::{corpus_lines, parse, write};
use molgrow_core::space::compose_action;
use molgrow_core::{
    to_action_trace, Action, ActionLevelState, Alphabet, Constraints, DesignSpace, FirstChoice,
    Level0Choice, Molecule,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::time::Instant;

pub fn size(d: usize, layers: usize, heads: usize, ff: usize) -> NetworkSize {
    NetworkSize {
        d,
        n_layers: layers,
        n_heads: heads,
        ff_dim: ff,
        dropout: 0.0,
        max_degree: None,
    }
}

/// Gates and biases start at zero; give them random values so every path
/// through the network carries signal.
pub fn scramble<T: Scalar>(p: &mut Policy<T>, rng: &mut ChaCha8Rng) {
    let tensors: Vec<_> = p
        .layout()
        .tensors()
        .map(|(t, r)| (t.name.clone(), r))
        .collect();
    for (name, r) in tensors {
        let scale = if name.ends_with("rezero") {
            Some((0.3, 1.0))
        } else if name.ends_with("bond_bias") || name.contains(".b") {
            Some((-0.5, 0.5))
        } else {
            None
        };
        if let Some((lo, hi)) = scale {
            for x in &mut p.params_mut()[r] {
                *x = T::from(rng.random_range(lo..hi)).unwrap();
            }
        }
    }
}

fn decisions(space: &DesignSpace, rng: &mut ChaCha8Rng, count: usize) -> Vec<Decision> {
    let mut out: Vec<Decision> = Vec::new();
    while out.len() < count {
        let (_, ds) = random_rollout(space, &Molecule::single(0), rng, 6);
        // keep a mix of levels, skipping forced single-option steps
        out.extend(
            ds.into_iter()
                .filter(|d| d.mask.iter().filter(|&&b| b).count() > 1)
                .step_by(2),
        );
    }
    out.truncate(count);
    out
}

fn batch_loss(p: &Policy<f64>, ds: &[Decision], grad: Option<&mut Vec<f64>>) -> f64 {
    let mut scratch = vec![0.0; p.params().len()];
    let g = match grad {
        Some(g) => g,
        None => &mut scratch,
    };
    let encs: Vec<_> = ds
        .iter()
        .map(|d| p.encode(&d.molecule, &d.state).unwrap())
        .collect();
    let width = encs.iter().map(|e| e.len()).max().unwrap();
    let mut loss = 0.0;
    for (d, e) in ds.iter().zip(&encs) {
        loss += p.nll_grad(e, &d.mask, d.target, width, None, g).unwrap();
    }
    let b = ds.len() as f64;
    g.iter_mut().for_each(|x| *x /= b);
    loss / b
}

/// Analytic gradient of a d=16, two-layer model against central differences
/// in f64 on 200 random coordinates.
pub fn gradient_check() -> String {
    let alphabet = Alphabet::solvent();
    let cfg = PolicyConfig::new(&size(16, 2, 2, 32), &alphabet).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut p = Policy::<f64>::new(cfg, 4).unwrap();
    scramble(&mut p, &mut rng);
    let space = DesignSpace::unconstrained(alphabet, 8);
    let ds = decisions(&space, &mut rng, 12);
    let levels: BTreeSet<_> = ds.iter().map(|d| d.state.level()).collect();
    assert_eq!(levels.len(), 3, "batch covers all three levels");

    let mut grad = vec![0.0; p.params().len()];
    batch_loss(&p, &ds, Some(&mut grad));
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    for _ in 0..200 {
        let i = rng.random_range(0..p.params().len());
        let orig = p.params()[i];
        p.params_mut()[i] = orig + h;
        let up = batch_loss(&p, &ds, None);
        p.params_mut()[i] = orig - h;
        let down = batch_loss(&p, &ds, None);
        p.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = grad[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
        if a.abs() > 1e-7 {
            nonzero += 1;
        }
        assert!(
            rel < 1e-3,
            "coordinate {i}: analytic {a:e}, numeric {numeric:e}, rel {rel:e}"
        );
        worst = worst.max(rel);
    }
    assert!(nonzero > 50, "only {nonzero} sampled coordinates carry gradient");
    format!("200 coordinates, {nonzero} nonzero, worst relative error {worst:.2e}")
}

/// Logits for a permuted molecule, mapped back to the original atom order.
fn equivariance_gap(a: &Logits<f32>, b: &Logits<f32>, perm: &[usize], k: usize) -> f32 {
    let mut gap: f32 = 0.0;
    for j in 0..=k {
        gap = gap.max((a.level0[j] - b.level0[j]).abs());
    }
    for (new, &old) in perm.iter().enumerate() {
        gap = gap.max((a.level0[k + 1 + old] - b.level0[k + 1 + new]).abs());
        gap = gap.max((a.level1[old] - b.level1[new]).abs());
    }
    for (x, y) in a.level2.iter().zip(&b.level2) {
        gap = gap.max((x - y).abs());
    }
    gap
}

/// 100 molecules, 5 permutations each, all three levels, dropout off:
/// per-atom logits permute and the rest are unchanged within 1e-5.
pub fn equivariance_check() -> String {
    let alphabet = Alphabet::solvent();
    let k = alphabet.len();
    let cfg = PolicyConfig::new(&size(64, 4, 4, 256), &alphabet).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut p = Policy::<f32>::new(cfg, 8).unwrap();
    scramble(&mut p, &mut rng);
    let space = DesignSpace::unconstrained(alphabet, 12);
    let mut worst: f32 = 0.0;
    for _ in 0..100 {
        let m = random_molecule(&space, &mut rng, 12);
        let n = m.len();
        let j = rng.random_range(0..n);
        let l = rng.random_range(0..n);
        let t = rng.random_range(0..k);
        let states = [
            ActionLevelState::default(),
            ActionLevelState {
                first: Some(FirstChoice::NewAtom(t)),
                second: None,
            },
            ActionLevelState {
                first: Some(FirstChoice::Existing(j)),
                second: Some(l),
            },
        ];
        for _ in 0..5 {
            let perm = permutation(n, &mut rng);
            let mut inv = vec![0; n];
            for (new, &old) in perm.iter().enumerate() {
                inv[old] = new;
            }
            let pm = m.permuted(&perm);
            for s in states {
                let ps = ActionLevelState {
                    first: s.first.map(|f| match f {
                        FirstChoice::Existing(j) => FirstChoice::Existing(inv[j]),
                        other => other,
                    }),
                    second: s.second.map(|l| inv[l]),
                };
                let a = &p.logits(&[(&m, s)]).unwrap()[0];
                let b = &p.logits(&[(&pm, ps)]).unwrap()[0];
                let gap = equivariance_gap(a, b, &perm, k);
                assert!(gap < 1e-5, "deviation {gap:e} on {m:?} {s:?}");
                worst = worst.max(gap);
            }
        }
    }
    format!("100 molecules x 5 permutations x 3 levels, worst deviation {worst:.2e}")
}

#[derive(Clone, Debug)]
pub enum Tree {
    Leaf,
    Inner(Vec<(f64, Tree)>),
}

pub fn leaves(ps: &[f64]) -> Tree {
    Tree::Inner(ps.iter().map(|&p| (p, Tree::Leaf)).collect())
}

impl Tree {
    fn at(&self, path: &[u32]) -> &Tree {
        path.iter().fold(self, |t, &c| match t {
            Tree::Inner(kids) => &kids[c as usize].1,
            Tree::Leaf => panic!("path past a leaf"),
        })
    }

    /// Every complete sequence with its exact probability.
    pub fn sequences(&self) -> BTreeMap<Vec<u32>, f64> {
        fn walk(t: &Tree, path: &mut Vec<u32>, p: f64, out: &mut BTreeMap<Vec<u32>, f64>) {
            match t {
                Tree::Leaf => {
                    out.insert(path.clone(), p);
                }
                Tree::Inner(kids) => {
                    for (i, (q, k)) in kids.iter().enumerate() {
                        path.push(i as u32);
                        walk(k, path, p * q, out);
                        path.pop();
                    }
                }
            }
        }
        let mut out = BTreeMap::new();
        walk(self, &mut Vec::new(), 1.0, &mut out);
        out
    }
}

impl SearchSpace for Tree {
    type Node = Vec<u32>;

    fn is_terminal(&self, node: &Vec<u32>) -> bool {
        matches!(self.at(node), Tree::Leaf)
    }

    fn children(&self, nodes: &[&Vec<u32>]) -> Vec<Vec<(u32, f64)>> {
        nodes
            .iter()
            .map(|n| match self.at(n) {
                Tree::Inner(kids) => kids
                    .iter()
                    .enumerate()
                    .filter(|(_, (p, _))| *p > 0.0)
                    .map(|(i, (p, _))| (i as u32, p.ln()))
                    .collect(),
                Tree::Leaf => Vec::new(),
            })
            .collect()
    }

    fn step(&self, node: &Vec<u32>, choice: u32) -> Vec<u32> {
        let mut n = node.clone();
        n.push(choice);
        n
    }
}

/// Three toy policies with six complete sequences each.
pub fn toy_policies() -> Vec<Tree> {
    vec![
        Tree::Inner(vec![
            (0.3, leaves(&[0.2, 0.5, 0.3])),
            (0.7, leaves(&[0.6, 0.1, 0.3])),
        ]),
        Tree::Inner(vec![
            (0.5, leaves(&[0.9, 0.1])),
            (0.25, leaves(&[0.5, 0.5])),
            (0.25, leaves(&[0.3, 0.7])),
        ]),
        // uneven depths: complete sequences of length 1, 2 and 3
        Tree::Inner(vec![
            (0.4, Tree::Leaf),
            (
                0.6,
                Tree::Inner(vec![(0.5, Tree::Leaf), (0.5, leaves(&[0.1, 0.2, 0.3, 0.4]))]),
            ),
        ]),
    ]
}

/// A beam at least as wide as the space returns every sequence exactly
/// once, with exact log-probabilities.
pub fn sbs_exhaustion() -> String {
    for (i, tree) in toy_policies().into_iter().enumerate() {
        let exact = tree.sequences();
        assert_eq!(exact.len(), 6);
        for beta in [6, 10] {
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            let out = stochastic_beam_search(&tree, &Vec::new(), &[], beta, &mut rng);
            let got: HashSet<_> = out.iter().map(|s| s.seq.clone()).collect();
            assert_eq!(out.len(), 6);
            assert_eq!(got.len(), 6);
            for s in &out {
                assert!((s.log_prob - exact[&s.seq].ln()).abs() < 1e-12);
                assert!(s.key.is_finite());
            }
            for w in out.windows(2) {
                assert!(w[0].key >= w[1].key);
            }
        }
    }
    "3 toy policies, beam widths 6 and 10, all 6 sequences each".into()
}

/// Upper 1% point of the chi-squared distribution with 5 degrees of freedom.
pub const CHI2_5_99: f64 = 15.086;

/// Width-one beams drawn `draws` times follow the exact sequence
/// distribution (chi-squared test at the 1% level).
pub fn sbs_marginals(draws: usize) -> String {
    let mut stats = Vec::new();
    for (i, tree) in toy_policies().into_iter().enumerate() {
        let exact = tree.sequences();
        let mut counts: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        for _ in 0..draws {
            let out = stochastic_beam_search(&tree, &Vec::new(), &[], 1, &mut rng);
            assert_eq!(out.len(), 1);
            *counts.entry(out[0].seq.clone()).or_default() += 1;
        }
        let chi2: f64 = exact
            .iter()
            .map(|(seq, p)| {
                let e = p * draws as f64;
                let o = *counts.get(seq).unwrap_or(&0) as f64;
                (o - e) * (o - e) / e
            })
            .sum();
        assert!(chi2 < CHI2_5_99, "toy policy {i}: chi2 {chi2}");
        stats.push(format!("{chi2:.2}"));
    }
    format!("{draws} draws per policy, chi2 = [{}] < {CHI2_5_99}", stats.join(", "))
}

fn edit_of(action: Action) -> brute::Edit {
    match action {
        Action::AddAtom {
            atom_type,
            target,
            order,
        } => (0, atom_type, target, order),
        Action::AddBond {
            first,
            second,
            order,
        } => (1, first.min(second), first.max(second), order),
        Action::DontChange => unreachable!(),
    }
}

/// Every labeled state reachable from a single atom within the atom cap.
pub fn reachable_states(valences: &[u32], y: u8, max_atoms: usize) -> Vec<Graph> {
    let mut seen: HashSet<Graph> = HashSet::new();
    let mut q = VecDeque::new();
    for t in 0..valences.len() {
        let g = Graph::single(t);
        seen.insert(g.clone());
        q.push_back(g);
    }
    while let Some(g) = q.pop_front() {
        for e in brute::feasible_edits(&g, valences, y, max_atoms) {
            let c = brute::apply_edit(&g, e);
            if seen.insert(c.clone()) {
                q.push_back(c);
            }
        }
    }
    let mut out: Vec<Graph> = seen.into_iter().collect();
    out.sort();
    out
}

/// Compares every feasible set and mask of the library with the brute-force
/// sets for one state.
pub fn check_state_masks(space: &DesignSpace, g: &Graph, val: &[u32], max_atoms: usize) {
    let k = space.alphabet().len();
    let y = space.alphabet().max_bond_order();
    let m = g.to_molecule();
    let n = m.len();
    let expect = brute::feasible_edits(g, val, y, max_atoms);
    let fa = space.feasible_actions(&m);
    let got: BTreeSet<brute::Edit> = fa
        .add_atom
        .iter()
        .map(|&(t, l, o)| (0, t, l, o))
        .chain(fa.add_bond.iter().map(|&(i, j, o)| (1, i, j, o)))
        .collect();
    assert_eq!(got, expect, "{m:?}");

    // level 0: DontChange plus every first choice that has a completion
    let mut l0 = BTreeSet::from([Level0Choice::DontChange]);
    for &(kind, p, q, _) in &expect {
        if kind == 0 {
            l0.insert(Level0Choice::NewAtom(p));
        } else {
            l0.insert(Level0Choice::Existing(p));
            l0.insert(Level0Choice::Existing(q));
        }
    }
    assert_eq!(space.feasible_level0(&m), l0);
    let mask0 = fa.mask(&ActionLevelState::default(), n, k, y);
    for (idx, &on) in mask0.iter().enumerate() {
        assert_eq!(on, l0.contains(&Level0Choice::from_logit_index(idx, k)));
    }

    let firsts: Vec<FirstChoice> = (0..k)
        .map(FirstChoice::NewAtom)
        .chain((0..n).map(FirstChoice::Existing))
        .collect();
    for first in firsts {
        let seconds: BTreeSet<usize> = (0..n)
            .filter(|&s| {
                !matches!(first, FirstChoice::Existing(j) if j == s)
                    && (1..=y).any(|o| expect.contains(&edit_of(compose_action(first, s, o))))
            })
            .collect();
        assert_eq!(space.feasible_level1(&m, first), seconds, "{m:?} {first:?}");
        let state1 = ActionLevelState {
            first: Some(first),
            second: None,
        };
        if !seconds.is_empty() {
            let mask1 = fa.mask(&state1, n, k, y);
            assert_eq!(mask1, (0..n).map(|s| seconds.contains(&s)).collect::<Vec<_>>());
        }
        for &second in &seconds {
            let orders: BTreeSet<u8> = (1..=y)
                .filter(|&o| expect.contains(&edit_of(compose_action(first, second, o))))
                .collect();
            assert_eq!(space.feasible_level2(&m, first, second), orders);
            let state2 = ActionLevelState {
                first: Some(first),
                second: Some(second),
            };
            let mask2 = fa.mask(&state2, n, k, y);
            assert_eq!(
                mask2,
                (1..=y).map(|o| orders.contains(&o)).collect::<Vec<_>>()
            );
        }
    }
}

/// Mask exactness over every state with at most four atoms over (C, N, O).
pub fn mask_exactness() -> String {
    let a = Alphabet::solvent();
    let val: Vec<u32> = (0..a.len()).map(|t| a.valence(t) as u32).collect();
    let y = a.max_bond_order();
    let space = DesignSpace::unconstrained(a, 4);
    let states = reachable_states(&val, y, 4);
    assert!(states.len() > 1000, "{}", states.len());
    for g in &states {
        check_state_masks(&space, g, &val, 4);
    }
    format!("{} labeled states, all levels agree", states.len())
}

fn cno() -> (Alphabet, Vec<u32>) {
    let a = Alphabet::solvent();
    let v = (0..a.len()).map(|t| a.valence(t) as u32).collect();
    (a, v)
}

/// Distinct molecules over (C, N, O), bond orders up to 3, with at most four
/// atoms, counted by exhaustive labeled enumeration.
pub const N4: usize = 571;

/// Random-policy rollouts up to 25 atoms never leave the valence rules.
pub fn valence_safety(rollouts: usize) -> String {
    let (a, val) = cno();
    let space = DesignSpace::unconstrained(a, 25);
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut largest = 0;
    let mut states = 0usize;
    for r in 0..rollouts {
        let first = Molecule::single(r % 3);
        let (m, decisions) = random_rollout(&space, &first, &mut rng, 40);
        for d in &decisions {
            assert!(Graph::of(&d.molecule).valence_ok(&val, 3), "{:?}", d.molecule);
        }
        assert!(Graph::of(&m).valence_ok(&val, 3) && Graph::of(&m).connected(), "{m:?}");
        states += decisions.len() + 1;
        largest = largest.max(m.len());
    }
    assert!(largest == 25, "{largest}");
    let took = start.elapsed();
    assert!(took.as_secs() < 120, "{took:?}");
    format!("{rollouts} rollouts, {states} states checked, largest {largest} atoms, {took:.1?}")
}

/// Every molecule with at most four atoms is rebuilt by replaying its trace.
pub fn reachability() -> String {
    let (a, val) = cno();
    assert_eq!(brute::all_graphs(&val, 3, 4).len(), N4);
    assert_eq!(enumerate_valid(&a, &Constraints::with_max_atoms(4), 4).unwrap().len(), N4);
    let mols = enumerate_molecules(&a, &Constraints::with_max_atoms(4), 4, 1_000_000).unwrap();
    assert_eq!(mols.len(), N4);
    let space = DesignSpace::unconstrained(a, 4);
    for (key, m) in &mols {
        let trace = to_action_trace(m).unwrap();
        assert_eq!(trace.initial.len(), 1);
        assert!(m.atoms().contains(&trace.initial.atom(0)));
        let rebuilt = trace.replay(&space).unwrap();
        assert!(brute::isomorphic(&rebuilt, m), "{m:?}");
        assert_eq!(&canonical_key(&rebuilt), key);
    }
    format!("{} of {N4} molecules rebuilt", mols.len())
}

pub const CORPUS: &str = include_str!("../../data/corpus.smi");

pub fn corpus() -> Vec<&'static str> {
    corpus_lines(CORPUS).map(|(_, s)| s).collect()
}

/// parse, write, parse over the bundled corpus gives an isomorphic molecule.
pub fn smiles_round_trip() -> String {
    let a = Alphabet::drug();
    let lines = corpus();
    assert!(lines.len() >= 1000, "{}", lines.len());
    for s in &lines {
        let m = parse(s, &a).unwrap_or_else(|e| panic!("{s}: {e}"));
        let w = write(&m, &a);
        let back = parse(&w, &a).unwrap_or_else(|e| panic!("{s} -> {w}: {e}"));
        assert!(brute::isomorphic(&m, &back), "{s} -> {w}");
        assert_eq!(canonical_key(&m), canonical_key(&back), "{s} -> {w}");
        // writing is deterministic and stable under a second pass
        assert_eq!(write(&back, &a), w, "{s}");
    }
    format!("{0}/{0} strings", lines.len())
}

fn violates_solvent_rules(g: &Graph, symbols: &[&str]) -> Option<String> {
    let n = g.len();
    for i in 0..n {
        for j in i + 1..n {
            let o = g.bonds[i][j];
            if o == 0 {
                continue;
            }
            let (si, sj) = (symbols[g.atoms[i]], symbols[g.atoms[j]]);
            if o == 1 && si == sj && (si == "N" || si == "O") {
                return Some(format!("{si}-{sj} single bond"));
            }
            if let Some(c) = brute::smallest_cycle_through(g, i, j) {
                if c != 5 && c != 6 {
                    return Some(format!("ring of {c}"));
                }
            }
        }
    }
    None
}

/// Rollouts under the solvent rules never form N-N or O-O single bonds or
/// rings outside {5, 6}.
pub fn solvent_rules(rollouts: usize) -> String {
    let (a, _) = cno();
    let symbols = ["C", "N", "O"];
    let space = DesignSpace::new(a, Constraints::solvent_rules(12), &Molecule::single(0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rings = 0;
    for r in 0..rollouts {
        let (m, decisions) = random_rollout(&space, &Molecule::single(r % 3), &mut rng, 30);
        for g in decisions.iter().map(|d| &d.molecule).chain([&m]) {
            if let Some(v) = violates_solvent_rules(&Graph::of(g), &symbols) {
                panic!("{v} in {g:?}");
            }
        }
        if m.num_bonds() >= m.len() {
            rings += 1;
        }
    }
    assert!(rings > rollouts / 100, "{rings}");
    format!("{rollouts} rollouts, {rings} with rings, no violations")
}

/// Starting from propanol with the oxygen frozen, every state keeps the
/// hydroxy group as is.
pub fn frozen_hydroxy(rollouts: usize) -> String {
    let (a, _) = cno();
    let initial = parse("CCCO", &a).unwrap();
    let mut c = Constraints::solvent_rules(15);
    c.frozen_atoms = BTreeSet::from([3]);
    let space = DesignSpace::new(a, c, &initial).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut grown = 0;
    for _ in 0..rollouts {
        let (m, decisions) = random_rollout(&space, &initial, &mut rng, 20);
        for g in decisions.iter().map(|d| &d.molecule).chain([&m]) {
            assert_eq!(g.atom(3), 2);
            let row: Vec<(usize, u8)> = g.neighbors(3).collect();
            assert_eq!(row, vec![(2, 1)], "{g:?}");
            assert!(space.frozen_intact(g));
        }
        if m.len() > initial.len() {
            grown += 1;
        }
    }
    format!("{rollouts} rollouts ({grown} grew), hydroxy kept in all")
}

/// `tanh` through the logistic function, written out.
pub fn ref_penalty(g_sw: f64, g_ws: f64) -> f64 {
    let x = g_sw * g_ws - 54.598_150_033_144_236;
    -20.0 / ((2.0 * x).exp() + 1.0)
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

pub fn log_uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-6.0f64..6.0).exp()
}

/// True when `p` lies in (-20, 0] or is the f64 rounding of a value within
/// half an ulp of -20.
pub fn in_penalty_range(p: f64, g_sw: f64, g_ws: f64) -> bool {
    if !(-20.0..=0.0).contains(&p) {
        return false;
    }
    if p > -20.0 {
        return true;
    }
    let x = g_sw * g_ws - 54.598_150_033_144_236;
    let gap = 20.0 * (2.0 * x).exp() / ((2.0 * x).exp() + 1.0);
    gap < f64::EPSILON * 20.0 / 2.0
}

/// Both solvent objectives against the reference on random gamma tuples.
pub fn combinators(tuples: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0f64;
    for _ in 0..tuples {
        let g: [f64; 4] = std::array::from_fn(|_| log_uniform(&mut rng));
        let pen = ref_penalty(g[2], g[3]);
        let iba = solvent_iba_objective(g[0], g[2], g[3]).unwrap();
        let want = 1.0 / g[0] + pen;
        assert!(close(iba, want), "{g:?}");
        worst = worst.max((iba - want).abs() / want.abs().max(1.0));
        let tmb = solvent_tmb_objective(g[0], g[1], g[2], g[3]).unwrap();
        let want = g[0] / g[1] + pen;
        assert!(close(tmb, want), "{g:?}");
        worst = worst.max((tmb - want).abs() / want.abs().max(1.0));
        assert!(in_penalty_range(miscibility_penalty(g[2], g[3]), g[2], g[3]), "{g:?}");
    }
    format!("{tuples} tuples, worst relative error {worst:.1e}, penalty within bounds")
}

/// The penalty stays in (-20, 0] and is non-decreasing in the product.
pub fn penalty_bounds(pairs: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut products: Vec<(f64, f64)> = (0..pairs)
        .map(|_| (log_uniform(&mut rng), log_uniform(&mut rng)))
        .collect();
    for &(a, b) in &products {
        assert!(in_penalty_range(miscibility_penalty(a, b), a, b), "{a} {b}");
    }
    products.sort_by(|x, y| (x.0 * x.1).total_cmp(&(y.0 * y.1)));
    for w in products.windows(2) {
        assert!(miscibility_penalty(w[0].0, w[0].1) <= miscibility_penalty(w[1].0, w[1].1));
    }
    assert_eq!(miscibility_penalty(1e6, 1.0), 0.0);
    assert!(miscibility_penalty(1.0, 4f64.exp()) == -10.0);
    format!("{pairs} pairs bounded and monotone")
}

pub fn network(d: usize, layers: usize) -> NetworkSize {
    NetworkSize {
        d,
        n_layers: layers,
        n_heads: 4,
        ff_dim: 4 * d,
        dropout: 0.1,
        max_degree: None,
    }
}

pub struct Task {
    pub alphabet: Alphabet,
    pub space: DesignSpace,
    pub spec: ObjectiveSpec,
}

pub fn atom_count_task() -> Task {
    let alphabet = Alphabet::from_symbols(&["C"], 1).unwrap();
    let space =
        DesignSpace::new(alphabet.clone(), Constraints::with_max_atoms(6), &Molecule::single(0)).unwrap();
    Task {
        alphabet,
        space,
        spec: ObjectiveSpec::AtomCountTarget { target: 6 },
    }
}

pub fn butane_task(max_atoms: usize) -> Task {
    let alphabet = Alphabet::solvent();
    let space = DesignSpace::unconstrained(alphabet.clone(), max_atoms);
    Task {
        alphabet,
        space,
        spec: ObjectiveSpec::IsomerFormula {
            formula: "C4H10".into(),
        },
    }
}

pub fn go<T: Scalar>(
    task: &Task,
    size: &NetworkSize,
    cfg: &LearnerConfig,
    init_seed: u64,
) -> (RunOutcome, Policy<T>) {
    let mut policy = Policy::<T>::new(PolicyConfig::new(size, &task.alphabet).unwrap(), init_seed).unwrap();
    let objective = build_objective(&task.spec, &task.alphabet).unwrap();
    let out = run(
        &mut policy,
        &task.space,
        &Molecule::single(0),
        objective.as_ref(),
        cfg,
        None,
        &mut |_: &EpochProgress, _: &Archive| true,
    )
    .unwrap();
    (out, policy)
}

pub fn check_archive(task: &Task, archive: &Archive) {
    for e in archive.entries() {
        let m = e.trace.replay(&task.space).unwrap();
        assert_eq!(canonical_key(&m), e.key);
        assert!(task.space.is_valid(&m));
        assert!(e.score.is_finite());
    }
    let keys: BTreeSet<_> = archive.entries().iter().map(|e| &e.key).collect();
    assert_eq!(keys.len(), archive.len());
}

pub fn monotone(history: &[EpochProgress]) {
    for w in history.windows(2) {
        assert!(w[1].best >= w[0].best, "{w:?}");
    }
}

/// Runs `task` `repeats` times and checks every run leaves the same archive.
fn timed_runs(task: &Task, cfg: &LearnerConfig, init_seed: u64, repeats: usize) -> (RunOutcome, Vec<f64>) {
    let mut first: Option<RunOutcome> = None;
    let mut secs = Vec::new();
    for _ in 0..repeats {
        let start = Instant::now();
        let (out, _) = go::<f32>(task, &network(64, 4), cfg, init_seed);
        let took = start.elapsed();
        assert!(took.as_secs() < 600, "{took:?}");
        secs.push(took.as_secs_f64());
        monotone(&out.history);
        check_archive(task, &out.archive);
        match &first {
            Some(f) => assert_eq!(f.archive, out.archive, "reruns differ"),
            None => first = Some(out),
        }
    }
    (first.unwrap(), secs)
}

fn secs(v: &[f64]) -> String {
    v.iter().map(|s| format!("{s:.1}s")).collect::<Vec<_>>().join(", ")
}

/// Length 6 is the cap, so 6 atoms is the best reachable score.
pub fn atom_count_e2e(repeats: usize) -> String {
    let task = atom_count_task();
    let all = enumerate_molecules(&task.alphabet, &Constraints::with_max_atoms(6), 6, 100_000).unwrap();
    assert_eq!(all.values().map(Molecule::len).max(), Some(6));
    let cfg = LearnerConfig {
        archive_size: 10,
        beam_width: 32,
        step_size: 4,
        epochs: 5,
        batches_per_epoch: 20,
        batch_size: 64,
        seed: 1,
        ..Default::default()
    };
    let (out, t) = timed_runs(&task, &cfg, 1, repeats);
    assert_eq!(out.archive.best(), Some(6.0));
    assert!(out.history.len() <= 5);
    format!("best 6 after {} epochs, runs {}", out.history.len(), secs(&t))
}

/// Both C4H10 isomers reach score 1 and land in the archive.
pub fn butane_e2e(repeats: usize) -> String {
    let task = butane_task(8);
    let target: BTreeSet<_> = ["CCCC", "CC(C)C"]
        .map(|s| canonical_key(&parse(s, &task.alphabet).unwrap()))
        .into_iter()
        .collect();
    let cfg = LearnerConfig {
        archive_size: 20,
        beam_width: 64,
        step_size: 4,
        epochs: 20,
        batches_per_epoch: 20,
        batch_size: 64,
        lr: 1e-3,
        train_full_network: true,
        seed: 2,
        ..Default::default()
    };
    let (out, t) = timed_runs(&task, &cfg, 2, repeats);
    assert_eq!(out.archive.best(), Some(1.0));
    let optima: BTreeSet<_> = out
        .archive
        .entries()
        .iter()
        .filter(|e| e.score == 1.0)
        .map(|e| e.key.clone())
        .collect();
    assert_eq!(optima, target);
    let reached = out.history.iter().position(|p| p.best == Some(1.0)).unwrap() + 1;
    format!("best 1.0 by epoch {reached}, both isomers archived, runs {}", secs(&t))
}

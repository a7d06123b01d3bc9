//! Sampling sequences without replacement: stochastic beam search with
//! Gumbel-top-k perturbations, and the step-and-reconsider loop built on it.

use crate::molecule::{Action, Molecule};
use crate::policy::{masked_log_softmax, Policy, Scalar};
use crate::space::{advance, ActionLevelState, DesignSpace, FeasibleActions, Step};
use rand::Rng;
use std::cmp::Ordering;
use std::collections::HashSet;
use std::sync::Arc;

/// A tree of sequences with a policy over children.
pub trait SearchSpace {
    type Node: Clone;

    fn is_terminal(&self, node: &Self::Node) -> bool;

    /// `(choice, log-probability)` for the feasible children of each node.
    fn children(&self, nodes: &[&Self::Node]) -> Vec<Vec<(u32, f64)>>;

    fn step(&self, node: &Self::Node, choice: u32) -> Self::Node;
}

/// A completed sequence with its log-probability and perturbed key.
#[derive(Debug, Clone)]
pub struct Sample<N> {
    pub seq: Vec<u32>,
    pub node: N,
    pub log_prob: f64,
    pub key: f64,
}

/// `ln(1 - exp(a))` for `a <= 0`.
fn log1mexp(a: f64) -> f64 {
    if a > -std::f64::consts::LN_2 {
        (-a.exp_m1()).ln()
    } else {
        (-a.exp()).ln_1p()
    }
}

/// Standard Gumbel draw from a uniform strictly inside (0, 1).
fn gumbel<R: Rng>(rng: &mut R) -> f64 {
    let u = ((rng.random::<u64>() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    -(-u.ln()).ln()
}

/// Gumbel conditioned on its maximum being `z`, shifted below `parent`.
fn truncate(parent: f64, z: f64, g: f64) -> f64 {
    let v = parent - g + log1mexp(g - z);
    parent - v.max(0.0) - (-v.abs()).exp().ln_1p()
}

struct Beam<N> {
    seq: Vec<u32>,
    node: N,
    log_prob: f64,
    key: f64,
    done: bool,
}

/// Stochastic beam search of width `beta` from `root`, whose sequence so far
/// is `prefix`. Returns up to `beta` distinct complete sequences, ordered by
/// perturbed key (highest first).
pub fn stochastic_beam_search<S: SearchSpace, R: Rng>(
    space: &S,
    root: &S::Node,
    prefix: &[u32],
    beta: usize,
    rng: &mut R,
) -> Vec<Sample<S::Node>> {
    let beta = beta.max(1);
    let mut beam = vec![Beam {
        seq: prefix.to_vec(),
        node: root.clone(),
        log_prob: 0.0,
        key: 0.0,
        done: space.is_terminal(root),
    }];
    while beam.iter().any(|b| !b.done) {
        let open: Vec<usize> = (0..beam.len()).filter(|&i| !beam[i].done).collect();
        let nodes: Vec<&S::Node> = open.iter().map(|&i| &beam[i].node).collect();
        let kids = space.children(&nodes);
        // (parent beam index, choice or None when carried, log-prob, key)
        let mut cands: Vec<(usize, Option<u32>, f64, f64)> = Vec::new();
        for (i, b) in beam.iter().enumerate() {
            if b.done {
                cands.push((i, None, b.log_prob, b.key));
            }
        }
        for (&i, children) in open.iter().zip(kids) {
            let parent = &beam[i];
            let perturbed: Vec<(u32, f64, f64)> = children
                .into_iter()
                .map(|(c, lp)| {
                    let phi = parent.log_prob + lp;
                    (c, phi, phi + gumbel(rng))
                })
                .collect();
            let z = perturbed
                .iter()
                .map(|x| x.2)
                .fold(f64::NEG_INFINITY, f64::max);
            for (c, phi, g) in perturbed {
                cands.push((i, Some(c), phi, truncate(parent.key, z, g)));
            }
        }
        cands.sort_by(|a, b| {
            b.3.partial_cmp(&a.3)
                .unwrap_or(Ordering::Equal)
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
        });
        cands.truncate(beta);
        let mut old: Vec<Option<Beam<S::Node>>> = beam.into_iter().map(Some).collect();
        let mut next = Vec::with_capacity(cands.len());
        for &(i, choice, phi, key) in &cands {
            match choice {
                None => next.push(old[i].take().expect("carried once")),
                Some(c) => {
                    let parent = old[i].as_ref().expect("parent alive");
                    let node = space.step(&parent.node, c);
                    let mut seq = parent.seq.clone();
                    seq.push(c);
                    next.push(Beam {
                        seq,
                        done: space.is_terminal(&node),
                        node,
                        log_prob: phi,
                        key,
                    });
                }
            }
        }
        beam = next;
    }
    beam.into_iter()
        .map(|b| Sample {
            seq: b.seq,
            node: b.node,
            log_prob: b.log_prob,
            key: b.key,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Scored<N> {
    pub seq: Vec<u32>,
    pub node: N,
    pub score: f64,
    pub round: usize,
}

#[derive(Debug, Clone)]
pub struct TasarOutcome<N> {
    /// Every newly completed sequence, in discovery order.
    pub scored: Vec<Scored<N>>,
    /// Committed prefix at the start of each round.
    pub prefixes: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TasarParams {
    pub beta: usize,
    /// Sub-actions committed per round.
    pub sigma: usize,
    /// Stop once this many sequences have been completed.
    pub budget: usize,
}

/// Take a step and reconsider: sample from the committed prefix, score
/// unseen completions, then commit `sigma` more sub-actions along the best
/// sequence so far. Stops when the committed prefix reaches a complete
/// sequence or the budget is spent. `seen` carries sequence keys across
/// calls; sequences already in it are neither scored nor returned.
pub fn tasar<S, R, F>(
    space: &S,
    root: &S::Node,
    params: TasarParams,
    seen: &mut HashSet<Vec<u32>>,
    rng: &mut R,
    mut score: F,
) -> TasarOutcome<S::Node>
where
    S: SearchSpace,
    R: Rng,
    F: FnMut(&[Sample<S::Node>]) -> Vec<f64>,
{
    let sigma = params.sigma.max(1);
    let mut prefix: Vec<u32> = Vec::new();
    let mut node = root.clone();
    let mut out = TasarOutcome {
        scored: Vec::new(),
        prefixes: Vec::new(),
    };
    // index into out.scored of the incumbent
    let mut best: Option<usize> = None;
    let mut round = 0;
    loop {
        out.prefixes.push(prefix.clone());
        let samples: Vec<Sample<S::Node>> =
            stochastic_beam_search(space, &node, &prefix, params.beta, rng)
                .into_iter()
                .filter(|s| seen.insert(s.seq.clone()))
                .collect();
        let scores = score(&samples);
        for (s, v) in samples.into_iter().zip(scores) {
            out.scored.push(Scored {
                seq: s.seq,
                node: s.node,
                score: v,
                round,
            });
            let i = out.scored.len() - 1;
            if best.is_none_or(|b| v > out.scored[b].score) {
                best = Some(i);
            }
        }
        round += 1;
        let Some(b) = best else { break };
        if out.scored.len() >= params.budget {
            break;
        }
        let target = &out.scored[b].seq;
        let next_len = prefix.len() + sigma;
        if next_len >= target.len() {
            break;
        }
        for &c in &target[prefix.len()..next_len] {
            node = space.step(&node, c);
            prefix.push(c);
        }
        if space.is_terminal(&node) {
            break;
        }
    }
    out
}

/// Sampling state for a molecule under construction.
#[derive(Debug, Clone)]
pub struct MolNode {
    pub molecule: Arc<Molecule>,
    pub state: ActionLevelState,
    pub feasible: Arc<FeasibleActions>,
    pub actions: Arc<Vec<Action>>,
    pub done: bool,
}

impl MolNode {
    pub fn root(space: &DesignSpace, m: &Molecule) -> Self {
        MolNode {
            molecule: Arc::new(m.clone()),
            state: ActionLevelState::default(),
            feasible: Arc::new(space.feasible_actions(m)),
            actions: Arc::new(Vec::new()),
            done: false,
        }
    }

    fn mask(&self, space: &DesignSpace) -> Vec<bool> {
        let a = space.alphabet();
        self.feasible
            .mask(&self.state, self.molecule.len(), a.len(), a.max_bond_order())
    }
}

/// The molecule-construction tree with policy probabilities.
pub struct PolicySearch<'a, T: Scalar = f32> {
    pub policy: &'a Policy<T>,
    pub space: &'a DesignSpace,
}

impl<T: Scalar> SearchSpace for PolicySearch<'_, T> {
    type Node = MolNode;

    fn is_terminal(&self, node: &MolNode) -> bool {
        node.done
    }

    fn children(&self, nodes: &[&MolNode]) -> Vec<Vec<(u32, f64)>> {
        let encs: Vec<_> = nodes
            .iter()
            .map(|n| {
                self.policy
                    .encode(&n.molecule, &n.state)
                    .expect("sampled molecules fit the policy")
            })
            .collect();
        let width = encs.iter().map(|e| e.len()).max().unwrap_or(1);
        let logits = self
            .policy
            .logits_padded(&encs, width)
            .expect("width covers every input");
        nodes
            .iter()
            .zip(&logits)
            .map(|(n, l)| {
                let mask = n.mask(self.space);
                let lp = masked_log_softmax(l.level(n.state.level()), &mask)
                    .expect("DontChange keeps level 0 nonempty; lookahead keeps later levels nonempty");
                debug_assert!(lp
                    .iter()
                    .zip(&mask)
                    .all(|(p, &ok)| ok || *p == T::neg_infinity()));
                mask.iter()
                    .enumerate()
                    .filter(|(_, &ok)| ok)
                    .map(|(i, _)| (i as u32, lp[i].to_f64().unwrap_or(f64::NEG_INFINITY)))
                    .collect()
            })
            .collect()
    }

    fn step(&self, node: &MolNode, choice: u32) -> MolNode {
        let k = self.space.alphabet().len();
        match advance(node.state, choice as usize, k) {
            Step::Continue(state) => MolNode {
                state,
                ..node.clone()
            },
            Step::Complete(Action::DontChange) => {
                debug_assert!(self.space.is_valid(&node.molecule));
                let mut actions = (*node.actions).clone();
                actions.push(Action::DontChange);
                MolNode {
                    state: ActionLevelState::default(),
                    actions: Arc::new(actions),
                    done: true,
                    ..node.clone()
                }
            }
            Step::Complete(action) => {
                let m = self
                    .space
                    .apply(&node.molecule, action)
                    .expect("masked edits are feasible");
                let mut actions = (*node.actions).clone();
                actions.push(action);
                MolNode {
                    feasible: Arc::new(self.space.feasible_actions(&m)),
                    molecule: Arc::new(m),
                    state: ActionLevelState::default(),
                    actions: Arc::new(actions),
                    done: false,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log1mexp_branches_agree() {
        for a in [-1e-9, -0.1, -0.69, -0.7, -3.0, -40.0] {
            let direct = (1.0 - f64::exp(a)).ln();
            assert!((log1mexp(a) - direct).abs() < 1e-6 * direct.abs().max(1.0), "{a}");
        }
        assert_eq!(log1mexp(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn truncation_matches_the_direct_formula() {
        for (p, z, g) in [(0.0, 1.0, 0.5), (-2.0, 3.0, -1.0), (1.5, 0.2, 0.2), (-0.3, 4.0, 3.9)] {
            let direct = -((-p as f64).exp() - (-z as f64).exp() + (-g as f64).exp()).ln();
            assert!((truncate(p, z, g) - direct).abs() < 1e-12);
            assert!(truncate(p, z, g) <= p + 1e-12);
        }
        // the maximum child inherits the parent key exactly
        assert_eq!(truncate(-0.7, 2.0, 2.0), -0.7);
    }
}

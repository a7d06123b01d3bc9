#![allow(dead_code)]

pub mod brute;
pub mod checks;
pub mod oracle_mock;

use molgrow_core::{advance, ActionLevelState, DesignSpace, Molecule, Step};
use rand::seq::SliceRandom;
use rand::Rng;

/// One decision of a rollout: the state it was taken in, the feasibility
/// mask, and the chosen logit.
#[derive(Clone, Debug)]
pub struct Decision {
    pub molecule: Molecule,
    pub state: ActionLevelState,
    pub mask: Vec<bool>,
    pub target: usize,
}

/// Uniformly random rollout over feasible sub-actions.
pub fn random_rollout<R: Rng>(
    space: &DesignSpace,
    start: &Molecule,
    rng: &mut R,
    max_edits: usize,
) -> (Molecule, Vec<Decision>) {
    let k = space.alphabet().len();
    let y = space.alphabet().max_bond_order();
    let mut m = start.clone();
    let mut decisions = Vec::new();
    for edit in 0..=max_edits {
        let fa = space.feasible_actions(&m);
        let mut state = ActionLevelState::default();
        loop {
            let mut mask = fa.mask(&state, m.len(), k, y);
            if edit == max_edits {
                // force termination at the step cap
                mask.iter_mut().skip(1).for_each(|b| *b = false);
            }
            let options: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
            assert!(!options.is_empty(), "empty mask at {m:?} {state:?}");
            let target = options[rng.random_range(0..options.len())];
            decisions.push(Decision {
                molecule: m.clone(),
                state,
                mask,
                target,
            });
            match advance(state, target, k) {
                Step::Continue(s) => state = s,
                Step::Complete(action) => {
                    if action == molgrow_core::Action::DontChange {
                        return (m, decisions);
                    }
                    m = space.apply(&m, action).expect("masked action applies");
                    break;
                }
            }
        }
    }
    unreachable!("termination is forced at the step cap")
}

/// Random valid molecule with at most `max_atoms` atoms.
pub fn random_molecule<R: Rng>(space: &DesignSpace, rng: &mut R, max_atoms: usize) -> Molecule {
    let k = space.alphabet().len();
    let start = Molecule::single(rng.random_range(0..k));
    let (m, _) = random_rollout(space, &start, rng, 3 * max_atoms);
    m
}

/// Random permutation of `0..n`.
pub fn permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

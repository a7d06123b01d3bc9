use crate::molecule::{Action, InfeasibleAction, Molecule};
use crate::space::DesignSpace;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("molecule is not connected")]
    Disconnected,
    #[error("step {step} is infeasible: {source}")]
    Infeasible {
        step: usize,
        source: InfeasibleAction,
    },
    #[error("trace must end with DontChange and contain it only once")]
    Unterminated,
}

/// A construction: an initial molecule and the edits applied to it, ending
/// with `DontChange`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionTrace {
    pub initial: Molecule,
    pub steps: Vec<Action>,
}

impl ActionTrace {
    /// Replays every step through the design space's feasibility checks.
    pub fn replay(&self, space: &DesignSpace) -> Result<Molecule, TraceError> {
        Ok(self
            .states(space)?
            .pop()
            .expect("at least the initial state"))
    }

    /// The molecule before each step, followed by the final molecule.
    pub fn states(&self, space: &DesignSpace) -> Result<Vec<Molecule>, TraceError> {
        match self.steps.iter().position(|a| *a == Action::DontChange) {
            Some(p) if p + 1 == self.steps.len() => {}
            _ => return Err(TraceError::Unterminated),
        }
        let mut states = vec![self.initial.clone()];
        for (step, &action) in self.steps.iter().enumerate() {
            if action == Action::DontChange {
                break;
            }
            let next = space
                .apply(states.last().expect("nonempty"), action)
                .map_err(|source| TraceError::Infeasible { step, source })?;
            states.push(next);
        }
        Ok(states)
    }
}

/// Breadth-first construction from atom 0 with lowest-index tie-breaks: atoms
/// along tree edges first, then ring-closing bonds, then `DontChange`.
pub fn to_action_trace(m: &Molecule) -> Result<ActionTrace, TraceError> {
    if !m.is_connected() {
        return Err(TraceError::Disconnected);
    }
    let n = m.len();
    let mut new_index = vec![usize::MAX; n];
    let mut steps = Vec::new();
    let mut tree = vec![false; n * n];
    let mut queue = VecDeque::new();
    new_index[0] = 0;
    let mut next = 1;
    queue.push_back(0);
    while let Some(u) = queue.pop_front() {
        for (v, o) in m.neighbors(u) {
            if new_index[v] == usize::MAX {
                new_index[v] = next;
                next += 1;
                tree[u * n + v] = true;
                tree[v * n + u] = true;
                steps.push(Action::AddAtom {
                    atom_type: m.atom(v),
                    target: new_index[u],
                    order: o,
                });
                queue.push_back(v);
            }
        }
    }
    let mut closures: Vec<(usize, usize, u8)> = m
        .bond_list()
        .into_iter()
        .filter(|&(i, j, _)| !tree[i * n + j])
        .map(|(i, j, o)| {
            let (a, b) = (new_index[i], new_index[j]);
            (a.min(b), a.max(b), o)
        })
        .collect();
    closures.sort_unstable();
    steps.extend(closures.into_iter().map(|(a, b, o)| Action::AddBond {
        first: a,
        second: b,
        order: o,
    }));
    steps.push(Action::DontChange);
    Ok(ActionTrace {
        initial: Molecule::single(m.atom(0)),
        steps,
    })
}

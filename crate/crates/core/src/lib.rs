//! Molecular design by sequential graph edits.
//!
//! A molecule grows from an initial structure through three kinds of edits
//! (add an atom, add a bond, stop). Every edit is checked against valence and
//! user constraints before a policy may pick it, so sampled molecules are
//! always valid. A graph transformer policy is trained in a self-improving
//! loop on the best molecules it has found so far.

pub mod alphabet;
pub mod canon;
pub mod config;
pub mod constraints;
pub mod enumerate;
pub mod jobs;
pub mod learner;
pub mod molecule;
pub mod objectives;
pub mod policy;
pub mod rings;
pub mod sampler;
pub mod smiles;
pub mod space;
pub mod trainer;

pub use alphabet::{Alphabet, AtomSpec, ChiralTag};
pub use canon::canonical_key;
pub use constraints::{check_structural_constraints, Constraints, PatternRule};
pub use molecule::{Action, InfeasibleAction, Molecule};
pub use smiles::{to_action_trace, ActionTrace, SmilesError};
pub use space::{
    advance, sub_actions, ActionLevelState, DesignSpace, FeasibleActions, FirstChoice, Level,
    Level0Choice, Step,
};

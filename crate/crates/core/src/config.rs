//! Run configuration documents for design and pretraining jobs.

use crate::alphabet::{Alphabet, AlphabetError};
use crate::constraints::Constraints;
use crate::learner::LearnerConfig;
use crate::objectives::ObjectiveSpec;
use crate::policy::NetworkSize;
use crate::trainer::PretrainConfig;
use serde::{Deserialize, Serialize};

/// A named preset (`solvent-CNO`, `drug-full`) or an inline alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphabetChoice {
    Preset(String),
    Inline(Alphabet),
}

impl Default for AlphabetChoice {
    fn default() -> Self {
        AlphabetChoice::Preset("solvent-CNO".into())
    }
}

impl AlphabetChoice {
    pub fn resolve(&self) -> Result<Alphabet, AlphabetError> {
        match self {
            AlphabetChoice::Preset(name) => Alphabet::preset(name),
            AlphabetChoice::Inline(a) => Ok(a.clone()),
        }
    }
}

/// Scalar type for the policy during a run. `f64` runs are bit-reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

fn default_initial() -> String {
    "C".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub alphabet: AlphabetChoice,
    #[serde(default)]
    pub constraints: Constraints,
    /// Ignored when a checkpoint supplies the network.
    #[serde(default)]
    pub policy: NetworkSize,
    #[serde(default)]
    pub learner: LearnerConfig,
    pub objective: ObjectiveSpec,
    /// SMILES of the starting molecule; `frozen_atoms` index its atoms in
    /// SMILES order.
    #[serde(default = "default_initial")]
    pub initial: String,
    #[serde(default)]
    pub precision: Precision,
    /// Seeds the initial parameters when no checkpoint is given.
    #[serde(default)]
    pub init_seed: u64,
}

impl RunConfig {
    /// Parses and rejects unknown keys anywhere in the document.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn default_max_atoms() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainRunConfig {
    #[serde(default)]
    pub alphabet: AlphabetChoice,
    #[serde(default)]
    pub policy: NetworkSize,
    #[serde(default)]
    pub training: PretrainConfig,
    /// Corpus molecules above this size are rejected.
    #[serde(default = "default_max_atoms")]
    pub max_atoms: usize,
    #[serde(default)]
    pub init_seed: u64,
}

impl Default for PretrainRunConfig {
    fn default() -> Self {
        PretrainRunConfig {
            alphabet: AlphabetChoice::default(),
            policy: NetworkSize::default(),
            training: PretrainConfig::default(),
            max_atoms: default_max_atoms(),
            init_seed: 0,
        }
    }
}

//! Request and response bodies of the molgrow HTTP API.
//!
//! Objective values that are `-inf` travel as `null`.

use molgrow_core::config::{AlphabetChoice, PretrainRunConfig, RunConfig};
use molgrow_core::jobs::{CorpusReject, DesignSummary, PretrainSummary};
use molgrow_core::learner::EpochProgress;
use molgrow_core::objectives::ObjectiveSpec;
use molgrow_core::trainer::EpochLoss;
use molgrow_core::Constraints;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

/// Failure body for every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub kind: ErrorKind,
    pub message: String,
    /// Process exit code a CLI should use for this failure.
    pub exit_code: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    BadRequest,
    Config,
    Oracle,
    NotFound,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumerateRequest {
    #[serde(default)]
    pub alphabet: AlphabetChoice,
    pub max_atoms: usize,
    /// Defaults to no constraints beyond the atom cap.
    #[serde(default)]
    pub constraints: Option<Constraints>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerateResponse {
    pub count: usize,
    /// Canonical SMILES, sorted.
    pub smiles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    #[serde(default)]
    pub alphabet: AlphabetChoice,
    pub objective: ObjectiveSpec,
    pub smiles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSmiles {
    pub smiles: String,
    /// `None` for `-inf` or when the string did not parse.
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<ScoredSmiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundtripRequest {
    #[serde(default)]
    pub alphabet: AlphabetChoice,
    /// Corpus text: one SMILES per line, `#` comments and blank lines skipped.
    pub corpus: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripLine {
    pub line: usize,
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub written: Option<String>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripResponse {
    pub passed: usize,
    pub total: usize,
    pub lines: Vec<RoundtripLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParseRequest {
    #[serde(default)]
    pub alphabet: AlphabetChoice,
    pub smiles: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseResponse {
    /// Alphabet symbol of each atom.
    pub atoms: Vec<String>,
    pub bonds: Vec<Bond>,
    pub canonical_smiles: String,
    pub formula: String,
}

/// A job submission. Paths are resolved on the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JobRequest {
    Design {
        config: RunConfig,
        #[serde(default)]
        checkpoint: Option<String>,
        output_dir: String,
    },
    Pretrain {
        config: PretrainRunConfig,
        /// Corpus text.
        corpus: String,
        out: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobCreated {
    pub id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Succeeded,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_finished(self) -> bool {
        self != JobState::Running
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProgressEvent {
    Design(EpochProgress),
    Pretrain(EpochLoss),
    Rejected(CorpusReject),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JobResult {
    Design(DesignSummary),
    Pretrain(PretrainSummary),
}

impl JobResult {
    pub fn exit_code(&self) -> i32 {
        match self {
            JobResult::Design(s) => s.exit_code(),
            JobResult::Pretrain(_) => 0,
        }
    }
}

/// Snapshot of a job. `events` holds progress from index `since` on;
/// `next` is the index to ask for next time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: u64,
    pub state: JobState,
    pub events: Vec<ProgressEvent>,
    pub next: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<JobResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

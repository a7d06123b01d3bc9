//! Design and pretraining runs with their on-disk outputs.
//!
//! A design run writes into its output directory:
//! `config.json`, `epochs.jsonl`, `train_log.csv`, `best.csv`, `best.json`,
//! `checkpoint.gxf` and `manifest.json` (SHA-256 of every other file).

use crate::alphabet::Alphabet;
use crate::config::{Precision, PretrainRunConfig, RunConfig};
use crate::learner::{self, Archive, EpochProgress, LearnError, StopReason};
use crate::objectives::{build_objective, ObjectiveError};
use crate::policy::checkpoint::{load_checkpoint_for, save_checkpoint, CheckpointError};
use crate::policy::{Policy, PolicyConfig, PolicyError, Scalar};
use crate::smiles::{self, to_action_trace, ActionTrace};
use crate::space::DesignSpace;
use crate::trainer::{pretrain, trace_items, EpochLoss, TrainError, TrainLog};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JobError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("empty corpus: no line could be converted to a trace")]
    EmptyCorpus,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl JobError {
    /// Process exit code: 2 for configuration problems, 3 for oracle
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            JobError::Config(_) | JobError::Checkpoint(_) | JobError::EmptyCorpus => 2,
            JobError::Objective(e) if e.is_oracle() => 3,
            JobError::Objective(_) => 2,
            _ => 1,
        }
    }
}

impl From<LearnError> for JobError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Objective(e) => JobError::Objective(e),
            LearnError::Train(e) => JobError::Train(e),
            LearnError::Config(m) => JobError::Config(m),
        }
    }
}

impl From<PolicyError> for JobError {
    fn from(e: PolicyError) -> Self {
        JobError::Config(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> JobError + '_ {
    move |source| JobError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, JobError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

pub fn sha256_file(path: &Path) -> Result<String, JobError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// One row of the result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRow {
    pub rank: usize,
    pub smiles: String,
    pub objective: f64,
    pub epoch: usize,
}

pub fn best_rows(archive: &Archive, alphabet: &Alphabet) -> Vec<BestRow> {
    archive
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| BestRow {
            rank: i + 1,
            smiles: smiles::write(&e.molecule, alphabet),
            objective: e.score,
            epoch: e.epoch,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub config: RunConfig,
    pub seed: u64,
    pub policy: PolicyConfig,
    pub alphabet_digest: String,
    pub input_checkpoint: Option<FileDigest>,
    pub stop: StopReason,
    pub epochs_run: usize,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub best: Vec<BestRow>,
    pub stop: StopReason,
    pub epochs_run: usize,
    pub output_dir: PathBuf,
}

impl DesignSummary {
    /// 0, or 4 when the wall-clock budget ended the run.
    pub fn exit_code(&self) -> i32 {
        if self.stop == StopReason::WallClock {
            4
        } else {
            0
        }
    }
}

pub const OUTPUT_FILES: [&str; 6] = [
    "config.json",
    "epochs.jsonl",
    "train_log.csv",
    "best.csv",
    "best.json",
    "checkpoint.gxf",
];

/// Runs the learner for `config` and writes all outputs to `out_dir`.
/// `on_epoch` returning `false` cancels the run after that epoch; outputs
/// are still written.
pub fn run_design(
    config: &RunConfig,
    checkpoint: Option<&Path>,
    out_dir: &Path,
    on_epoch: &mut dyn FnMut(&EpochProgress) -> bool,
) -> Result<DesignSummary, JobError> {
    let alphabet = config
        .alphabet
        .resolve()
        .map_err(|e| JobError::Config(e.to_string()))?;
    let initial = smiles::parse(&config.initial, &alphabet)
        .map_err(|e| JobError::Config(format!("initial molecule {:?}: {e}", config.initial)))?;
    let space = DesignSpace::new(alphabet.clone(), config.constraints.clone(), &initial)
        .map_err(|e| JobError::Config(e.to_string()))?;
    config
        .learner
        .validate()
        .map_err(|e| JobError::Config(e.to_string()))?;
    let objective = build_objective(&config.objective, &alphabet)?;
    let (policy, input_checkpoint) = match checkpoint {
        Some(path) => (
            load_checkpoint_for(path, &alphabet)?,
            Some(FileDigest {
                file: path.display().to_string(),
                sha256: sha256_file(path)?,
            }),
        ),
        None => (
            Policy::<f32>::new(PolicyConfig::new(&config.policy, &alphabet)?, config.init_seed)?,
            None,
        ),
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let cfg_path = out_dir.join("config.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(config).expect("config serializes"))
        .map_err(io_err(&cfg_path))?;

    let ctx = DesignContext {
        config,
        alphabet: &alphabet,
        initial: &initial,
        space: &space,
        objective: objective.as_ref(),
        out_dir,
    };
    let (archive, policy, stop, epochs_run) = match config.precision {
        Precision::F32 => ctx.learn(policy, on_epoch)?,
        Precision::F64 => {
            let (a, p, s, n) = ctx.learn(policy.cast::<f64>(), on_epoch)?;
            (a, p.cast::<f32>(), s, n)
        }
    };

    let rows = best_rows(&archive, &alphabet);
    let csv_path = out_dir.join("best.csv");
    {
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| JobError::Io {
            path: csv_path.clone(),
            source: e.into(),
        })?;
        for r in &rows {
            w.serialize(r).map_err(|e| JobError::Io {
                path: csv_path.clone(),
                source: e.into(),
            })?;
        }
        w.flush().map_err(io_err(&csv_path))?;
    }
    if rows.is_empty() {
        // csv writes no header without records
        fs::write(&csv_path, "rank,smiles,objective,epoch\n").map_err(io_err(&csv_path))?;
    }
    let json_path = out_dir.join("best.json");
    fs::write(&json_path, serde_json::to_string_pretty(&rows).expect("rows serialize"))
        .map_err(io_err(&json_path))?;
    save_checkpoint(&policy, &alphabet, &out_dir.join("checkpoint.gxf"))?;

    let outputs = OUTPUT_FILES
        .iter()
        .map(|f| {
            Ok(FileDigest {
                file: f.to_string(),
                sha256: sha256_file(&out_dir.join(f))?,
            })
        })
        .collect::<Result<Vec<_>, JobError>>()?;
    let manifest = Manifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        seed: config.learner.seed,
        policy: policy.config().clone(),
        alphabet_digest: alphabet.digest(),
        input_checkpoint,
        stop,
        epochs_run,
        outputs,
    };
    let man_path = out_dir.join("manifest.json");
    fs::write(&man_path, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))
        .map_err(io_err(&man_path))?;
    Ok(DesignSummary {
        best: rows,
        stop,
        epochs_run,
        output_dir: out_dir.to_path_buf(),
    })
}

struct DesignContext<'a> {
    config: &'a RunConfig,
    alphabet: &'a Alphabet,
    initial: &'a crate::molecule::Molecule,
    space: &'a DesignSpace,
    objective: &'a dyn crate::objectives::Objective,
    out_dir: &'a Path,
}

impl DesignContext<'_> {
    fn learn<T: Scalar>(
        &self,
        mut policy: Policy<T>,
        on_epoch: &mut dyn FnMut(&EpochProgress) -> bool,
    ) -> Result<(Archive, Policy<T>, StopReason, usize), JobError> {
        if policy.config().k != self.alphabet.len() {
            return Err(JobError::Config("policy does not match the alphabet".into()));
        }
        let log_path = self.out_dir.join("train_log.csv");
        let log_file: Box<dyn Write + Send> = Box::new(create(&log_path)?);
        let mut log = TrainLog::new(log_file).map_err(io_err(&log_path))?;
        let epochs_path = self.out_dir.join("epochs.jsonl");
        let mut epochs = create(&epochs_path)?;
        let mut write_err = None;
        let outcome = learner::run(
            &mut policy,
            self.space,
            self.initial,
            self.objective,
            &self.config.learner,
            Some(&mut log),
            &mut |p: &EpochProgress, _: &Archive| {
                let line = serde_json::to_string(p).expect("progress serializes");
                if let Err(e) = writeln!(epochs, "{line}").and_then(|_| epochs.flush()) {
                    write_err.get_or_insert(e);
                    return false;
                }
                on_epoch(p)
            },
        )?;
        if let Some(e) = write_err {
            return Err(io_err(&epochs_path)(e));
        }
        Ok((outcome.archive, policy, outcome.stop, outcome.history.len()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReject {
    pub line: usize,
    pub text: String,
    pub reason: String,
}

/// Corpus lines converted to traces, and the lines that could not be.
pub fn corpus_traces(
    text: &str,
    space: &DesignSpace,
) -> (Vec<ActionTrace>, Vec<CorpusReject>) {
    let mut traces = Vec::new();
    let mut rejects = Vec::new();
    for (line, s) in smiles::corpus_lines(text) {
        let smiles = s.split_whitespace().next().unwrap_or("");
        let result = smiles::parse(smiles, space.alphabet())
            .map_err(|e| e.to_string())
            .and_then(|m| to_action_trace(&m).map_err(|e| e.to_string()))
            .and_then(|t| match trace_items(&t, space) {
                Ok(_) => Ok(t),
                Err(e) => Err(e.to_string()),
            });
        match result {
            Ok(t) => traces.push(t),
            Err(reason) => rejects.push(CorpusReject {
                line,
                text: s.to_string(),
                reason,
            }),
        }
    }
    (traces, rejects)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub accepted: usize,
    pub rejected: Vec<CorpusReject>,
    pub history: Vec<EpochLoss>,
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
}

/// Pretrains on a SMILES corpus (one molecule per line) and writes the
/// checkpoint to `out`, with a batch log next to it.
pub fn run_pretrain(
    config: &PretrainRunConfig,
    corpus: &str,
    out: &Path,
    on_epoch: &mut dyn FnMut(&EpochLoss),
) -> Result<PretrainSummary, JobError> {
    let alphabet = config
        .alphabet
        .resolve()
        .map_err(|e| JobError::Config(e.to_string()))?;
    if config.max_atoms == 0 {
        return Err(JobError::Config("max_atoms must be positive".into()));
    }
    let space = DesignSpace::unconstrained(alphabet.clone(), config.max_atoms);
    let (traces, rejected) = corpus_traces(corpus, &space);
    if traces.is_empty() {
        return Err(JobError::EmptyCorpus);
    }
    let mut policy =
        Policy::<f32>::new(PolicyConfig::new(&config.policy, &alphabet)?, config.init_seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let log_path = out.with_extension("train_log.csv");
    let log_file: Box<dyn Write + Send> = Box::new(create(&log_path)?);
    let mut log = TrainLog::new(log_file).map_err(io_err(&log_path))?;
    let history = pretrain(
        &mut policy,
        &traces,
        &space,
        &config.training,
        Some(&mut log),
        on_epoch,
    )?;
    save_checkpoint(&policy, &alphabet, out)?;
    Ok(PretrainSummary {
        accepted: traces.len(),
        rejected,
        history,
        checkpoint: out.to_path_buf(),
        checkpoint_sha256: sha256_file(out)?,
    })
}

//! Self-improving fine-tuning: sample with TASAR, keep the best molecules
//! found so far, train on their construction traces, repeat.

use crate::canon::canonical_key;
use crate::molecule::{Action, Molecule};
use crate::objectives::{Objective, ObjectiveError};
use crate::policy::{Policy, Scalar};
use crate::sampler::{tasar, MolNode, PolicySearch, TasarParams};
use crate::smiles::ActionTrace;
use crate::space::DesignSpace;
use crate::trainer::{trace_items, train_step, AdamConfig, OptimState, TrainError, TrainItem, TrainLog};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("invalid learner configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    /// Archive capacity `s`.
    pub archive_size: usize,
    /// Beam width `β`.
    pub beam_width: usize,
    /// TASAR step size `σ`, in sub-actions.
    pub step_size: usize,
    /// Completed traces per epoch; defaults to `4β`.
    pub sample_budget: Option<usize>,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    /// Stop after this many epochs without a better archive best.
    pub patience: Option<usize>,
    /// Soft limit, checked between epochs.
    pub wall_clock_limit_s: Option<f64>,
    /// Train every parameter instead of only the output heads.
    pub train_full_network: bool,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            archive_size: 100,
            beam_width: 512,
            step_size: 12,
            sample_budget: None,
            epochs: 1000,
            batches_per_epoch: 20,
            batch_size: 64,
            lr: AdamConfig::default().lr,
            clip_norm: 1.0,
            patience: Some(50),
            wall_clock_limit_s: None,
            train_full_network: false,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Config(m.into()));
        if self.archive_size == 0 {
            return bad("archive_size must be positive");
        }
        if self.beam_width == 0 || self.step_size == 0 {
            return bad("beam_width and step_size must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) || !(self.clip_norm > 0.0) {
            return bad("lr and clip_norm must be positive");
        }
        if self.wall_clock_limit_s.is_some_and(|w| !(w >= 0.0)) {
            return bad("wall_clock_limit_s must be non-negative");
        }
        Ok(())
    }

    fn tasar_params(&self) -> TasarParams {
        TasarParams {
            beta: self.beam_width,
            sigma: self.step_size,
            budget: self.sample_budget.unwrap_or(4 * self.beam_width),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredMolecule {
    pub molecule: Molecule,
    pub score: f64,
    pub trace: ActionTrace,
    /// Epoch of discovery; 0 for the initial molecule.
    pub epoch: usize,
    pub key: Vec<u8>,
}

impl ScoredMolecule {
    pub fn new(molecule: Molecule, score: f64, trace: ActionTrace, epoch: usize) -> Self {
        let key = canonical_key(&molecule);
        ScoredMolecule {
            molecule,
            score,
            trace,
            epoch,
            key,
        }
    }

    fn ranks_before(&self, other: &ScoredMolecule) -> std::cmp::Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.epoch.cmp(&other.epoch))
            .then(self.key.cmp(&other.key))
    }
}

/// The best `capacity` distinct molecules, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    capacity: usize,
    entries: Vec<ScoredMolecule>,
}

impl Archive {
    pub fn new(capacity: usize) -> Self {
        Archive {
            capacity,
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[ScoredMolecule] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn best(&self) -> Option<f64> {
        self.entries.first().map(|e| e.score)
    }

    /// Mean of the best `k` scores.
    pub fn mean_top(&self, k: usize) -> Option<f64> {
        let top = &self.entries[..k.min(self.entries.len())];
        (!top.is_empty()).then(|| top.iter().map(|e| e.score).sum::<f64>() / top.len() as f64)
    }

    /// Adds finite-scored molecules. A molecule already present is replaced
    /// only by a strictly higher score, or an equal score discovered
    /// earlier.
    pub fn merge(&mut self, scored: impl IntoIterator<Item = ScoredMolecule>) {
        let mut index: HashMap<Vec<u8>, usize> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.key.clone(), i))
            .collect();
        for s in scored {
            if !s.score.is_finite() {
                continue;
            }
            match index.get(&s.key) {
                Some(&i) => {
                    if s.ranks_before(&self.entries[i]).is_lt() {
                        self.entries[i] = s;
                    }
                }
                None => {
                    index.insert(s.key.clone(), self.entries.len());
                    self.entries.push(s);
                }
            }
        }
        self.entries.sort_by(ScoredMolecule::ranks_before);
        self.entries.truncate(self.capacity);
    }
}

/// Returns `archive` merged with `scored`.
pub fn merge_archive(archive: &Archive, scored: &[ScoredMolecule]) -> Archive {
    let mut a = archive.clone();
    a.merge(scored.iter().cloned());
    a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochProgress {
    pub epoch: usize,
    pub best: Option<f64>,
    pub mean_top20: Option<f64>,
    pub archive_size: usize,
    pub sampled: usize,
    pub wall_ms: u64,
    /// Set when a non-finite gradient aborted this epoch's training.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub aborted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EpochCap,
    Patience,
    WallClock,
    Cancelled,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub archive: Archive,
    pub history: Vec<EpochProgress>,
    pub stop: StopReason,
}

/// Runs the learning loop from `initial`, which must be the root the
/// design space was built for. `on_epoch` sees each progress record and
/// the archive after it; returning `false` stops the run.
pub fn run<T: Scalar>(
    policy: &mut Policy<T>,
    space: &DesignSpace,
    initial: &Molecule,
    objective: &dyn Objective,
    config: &LearnerConfig,
    mut log: Option<&mut TrainLog<Box<dyn Write + Send>>>,
    on_epoch: &mut dyn FnMut(&EpochProgress, &Archive) -> bool,
) -> Result<RunOutcome, LearnError> {
    config.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut archive = Archive::new(config.archive_size);
    let f0 = objective.evaluate(std::slice::from_ref(initial))?[0];
    let root_trace = ActionTrace {
        initial: initial.clone(),
        steps: vec![Action::DontChange],
    };
    archive.merge([ScoredMolecule::new(initial.clone(), f0, root_trace, 0)]);

    let trainable = (!config.train_full_network).then(|| policy.layout().head_mask());
    let adam = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let mut optim = OptimState::new(adam, policy.params().len());
    let mut items: HashMap<Vec<u8>, Vec<TrainItem>> = HashMap::new();
    let mut history = Vec::new();
    let mut best = archive.best();
    let mut stale = 0;
    let mut stop = StopReason::EpochCap;
    let root = MolNode::root(space, initial);

    for epoch in 1..=config.epochs {
        let mut failure: Option<ObjectiveError> = None;
        let outcome = {
            let search = PolicySearch {
                policy: &*policy,
                space,
            };
            tasar(
                &search,
                &root,
                config.tasar_params(),
                &mut HashSet::new(),
                &mut rng,
                |samples| {
                    let mols: Vec<Molecule> =
                        samples.iter().map(|s| (*s.node.molecule).clone()).collect();
                    match objective.evaluate(&mols) {
                        Ok(v) => v
                            .into_iter()
                            .map(|x| if x.is_nan() { f64::NEG_INFINITY } else { x })
                            .collect(),
                        Err(e) => {
                            failure.get_or_insert(e);
                            vec![f64::NEG_INFINITY; mols.len()]
                        }
                    }
                },
            )
        };
        if let Some(e) = failure {
            return Err(e.into());
        }
        let sampled = outcome.scored.len();
        archive.merge(outcome.scored.into_iter().map(|s| {
            let trace = ActionTrace {
                initial: initial.clone(),
                steps: (*s.node.actions).clone(),
            };
            ScoredMolecule::new((*s.node.molecule).clone(), s.score, trace, epoch)
        }));

        let keep: HashSet<&Vec<u8>> = archive.entries().iter().map(|e| &e.key).collect();
        items.retain(|k, _| keep.contains(k));
        for e in archive.entries() {
            if !items.contains_key(&e.key) {
                items.insert(e.key.clone(), trace_items(&e.trace, space)?);
            }
        }
        let positions: Vec<&TrainItem> = archive
            .entries()
            .iter()
            .flat_map(|e| items[&e.key].iter())
            .collect();

        let mut aborted = false;
        if !positions.is_empty() {
            let saved = (policy.params().to_vec(), optim.clone());
            for b in 0..config.batches_per_epoch {
                let batch: Vec<TrainItem> = (0..config.batch_size)
                    .map(|_| positions[rng.random_range(0..positions.len())].clone())
                    .collect();
                let seeds: Vec<u64> = (0..batch.len()).map(|_| rng.random()).collect();
                match train_step(
                    policy,
                    &mut optim,
                    &batch,
                    Some(&seeds),
                    trainable.as_deref(),
                    config.clip_norm,
                ) {
                    Ok((loss, norm)) => {
                        if let Some(log) = log.as_deref_mut() {
                            log.record(
                                epoch,
                                b,
                                loss.to_f64().unwrap_or(f64::NAN),
                                norm.to_f64().unwrap_or(f64::NAN),
                            )
                            .map_err(TrainError::from)?;
                        }
                    }
                    Err(TrainError::NonFiniteGradient) => {
                        policy.params_mut().copy_from_slice(&saved.0);
                        optim = saved.1;
                        aborted = true;
                        break;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }

        let progress = EpochProgress {
            epoch,
            best: archive.best(),
            mean_top20: archive.mean_top(20),
            archive_size: archive.len(),
            sampled,
            wall_ms: start.elapsed().as_millis() as u64,
            aborted,
        };
        if progress.best.is_some_and(|b| best.is_none_or(|old| b > old)) {
            best = progress.best;
            stale = 0;
        } else {
            stale += 1;
        }
        let go_on = on_epoch(&progress, &archive);
        history.push(progress);
        if !go_on {
            stop = StopReason::Cancelled;
            break;
        }
        if epoch == config.epochs {
            break;
        }
        if config.patience.is_some_and(|p| stale >= p) {
            stop = StopReason::Patience;
            break;
        }
        if config
            .wall_clock_limit_s
            .is_some_and(|w| start.elapsed() >= Duration::from_secs_f64(w))
        {
            stop = StopReason::WallClock;
            break;
        }
    }
    if let Some(log) = log {
        log.flush().map_err(TrainError::from)?;
    }
    Ok(RunOutcome {
        archive,
        history,
        stop,
    })
}

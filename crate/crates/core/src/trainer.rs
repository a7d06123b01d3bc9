//! Supervised next-sub-action training: cross-entropy over masked
//! distributions, Adam updates and the pretraining driver.

use crate::policy::{Policy, PolicyError, Scalar};
use crate::smiles::ActionTrace;
use crate::space::{sub_actions, ActionLevelState, DesignSpace};
use crate::molecule::{Action, Molecule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;
use thiserror::Error;

const CHUNK: usize = 4;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("trace step {step} is infeasible")]
    InfeasibleTrace { step: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One supervised decision: the state, its feasibility mask and the target
/// logit at the active level.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub molecule: Molecule,
    pub state: ActionLevelState,
    pub mask: Vec<bool>,
    pub target: usize,
}

/// Every sub-action decision of a trace, with masks from `space`.
pub fn trace_items(trace: &ActionTrace, space: &DesignSpace) -> Result<Vec<TrainItem>, TrainError> {
    let alphabet = space.alphabet();
    let (k, y) = (alphabet.len(), alphabet.max_bond_order());
    let mut m = trace.initial.clone();
    let mut out = Vec::new();
    for (step, &action) in trace.steps.iter().enumerate() {
        let fa = space.feasible_actions(&m);
        for (state, target) in sub_actions(action, k) {
            let mask = fa.mask(&state, m.len(), k, y);
            if !mask.get(target).copied().unwrap_or(false) {
                return Err(TrainError::InfeasibleTrace { step });
            }
            out.push(TrainItem {
                molecule: m.clone(),
                state,
                mask,
                target,
            });
        }
        if action == Action::DontChange {
            break;
        }
        m = space
            .apply(&m, action)
            .map_err(|_| TrainError::InfeasibleTrace { step })?;
    }
    Ok(out)
}

/// Mean negative log-likelihood of the targets and its gradient. Items are
/// processed in parallel over fixed chunks and reduced in order, so the
/// result does not depend on the thread count.
pub fn cross_entropy_loss<T: Scalar>(
    policy: &Policy<T>,
    items: &[TrainItem],
    dropout_seeds: Option<&[u64]>,
) -> Result<(T, Vec<T>), TrainError> {
    if items.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let encs = items
        .iter()
        .map(|it| policy.encode(&it.molecule, &it.state))
        .collect::<Result<Vec<_>, _>>()?;
    let width = encs.iter().map(|e| e.len()).max().expect("nonempty");
    let n_params = policy.params().len();
    let partial: Vec<Result<(T, Vec<T>), PolicyError>> = (0..items.len())
        .step_by(CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let mut grad = vec![T::zero(); n_params];
            let mut loss = T::zero();
            for i in start..(start + CHUNK).min(items.len()) {
                let it = &items[i];
                let seed = dropout_seeds.map(|s| s[i]);
                loss += policy.nll_grad(&encs[i], &it.mask, it.target, width, seed, &mut grad)?;
            }
            Ok((loss, grad))
        })
        .collect();
    let mut total = T::zero();
    let mut grad = vec![T::zero(); n_params];
    for r in partial {
        let (l, g) = r?;
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += *b;
        }
    }
    let b = T::from(items.len()).expect("batch size");
    grad.iter_mut().for_each(|g| *g /= b);
    Ok((total / b, grad))
}

/// Rescales `grad` in place so its global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grad: &mut [T], max_norm: T) -> T {
    let norm = grad.iter().map(|&g| g * g).sum::<T>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimState<T> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        OptimState {
            config,
            step: 0,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
        }
    }
}

/// One bias-corrected Adam update. With `trainable`, only flagged scalars
/// move. A non-finite gradient leaves everything untouched.
pub fn optimizer_step<T: Scalar>(
    params: &mut [T],
    grad: &[T],
    state: &mut OptimState<T>,
    trainable: Option<&[bool]>,
) -> Result<(), TrainError> {
    if params.len() != grad.len() || state.m.len() != grad.len() {
        return Err(PolicyError::ShapeMismatch("optimizer shapes".into()).into());
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient);
    }
    state.step += 1;
    let c = |x: f64| T::from(x).expect("constant");
    let cfg = state.config;
    let (b1, b2) = (c(cfg.beta1), c(cfg.beta2));
    let bc1 = c(1.0 - cfg.beta1.powi(state.step as i32));
    let bc2 = c(1.0 - cfg.beta2.powi(state.step as i32));
    let (lr, eps) = (c(cfg.lr), c(cfg.eps));
    for i in 0..params.len() {
        if trainable.is_some_and(|t| !t[i]) {
            continue;
        }
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        let mh = state.m[i] / bc1;
        let vh = state.v[i] / bc2;
        params[i] -= lr * mh / (vh.sqrt() + eps);
    }
    Ok(())
}

/// Loss, clip, step. Returns `(loss, grad_norm)` before clipping.
pub fn train_step<T: Scalar>(
    policy: &mut Policy<T>,
    optim: &mut OptimState<T>,
    batch: &[TrainItem],
    dropout_seeds: Option<&[u64]>,
    trainable: Option<&[bool]>,
    clip: f64,
) -> Result<(T, T), TrainError> {
    let (loss, mut grad) = cross_entropy_loss(policy, batch, dropout_seeds)?;
    if !loss.is_finite() {
        return Err(TrainError::NonFiniteGradient);
    }
    let norm = clip_grad_norm(&mut grad, T::from(clip).expect("clip"));
    optimizer_step(policy.params_mut(), &grad, optim, trainable)?;
    Ok((loss, norm))
}

/// Mean loss without dropout and without touching parameters.
pub fn evaluate<T: Scalar>(policy: &Policy<T>, items: &[TrainItem]) -> Result<T, TrainError> {
    let mut total = T::zero();
    for chunk in items.chunks(256) {
        let (l, _) = cross_entropy_loss(policy, chunk, None)?;
        total += l * T::from(chunk.len()).expect("len");
    }
    Ok(total / T::from(items.len().max(1)).expect("len"))
}

/// Append-only CSV of training batches.
pub struct TrainLog<W: Write> {
    out: W,
    start: Instant,
}

impl<W: Write> TrainLog<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "epoch,batch,loss,grad_norm,wall_ms")?;
        Ok(TrainLog {
            out,
            start: Instant::now(),
        })
    }

    /// Continues an existing log without writing a header.
    pub fn append(out: W) -> Self {
        TrainLog {
            out,
            start: Instant::now(),
        }
    }

    pub fn record(&mut self, epoch: usize, batch: usize, loss: f64, grad_norm: f64) -> std::io::Result<()> {
        writeln!(
            self.out,
            "{epoch},{batch},{loss},{grad_norm},{}",
            self.start.elapsed().as_millis()
        )
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Defaults to one pass worth of positions per epoch.
    pub batches_per_epoch: Option<usize>,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    /// Fraction of traces held out for validation; with a single trace the
    /// training positions double as the validation set.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 10,
            batch_size: 64,
            batches_per_epoch: None,
            adam: AdamConfig::default(),
            clip_norm: 1.0,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub wall_ms: u64,
}

/// Self-supervised next-action training on a trace corpus.
pub fn pretrain<T: Scalar>(
    policy: &mut Policy<T>,
    traces: &[ActionTrace],
    space: &DesignSpace,
    config: &PretrainConfig,
    mut log: Option<&mut TrainLog<Box<dyn Write + Send>>>,
    on_epoch: &mut dyn FnMut(&EpochLoss),
) -> Result<Vec<EpochLoss>, TrainError> {
    if traces.is_empty() || config.batch_size == 0 {
        return Err(TrainError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..traces.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let n_val = if traces.len() < 2 {
        0
    } else {
        ((traces.len() as f64 * config.validation_fraction).round() as usize).min(traces.len() - 1)
    };
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        let items = trace_items(&traces[i], space)?;
        if rank < n_val {
            val.extend(items);
        } else {
            train.extend(items);
        }
    }
    if val.is_empty() {
        val = train.clone();
    }
    let batches = config
        .batches_per_epoch
        .unwrap_or(train.len().div_ceil(config.batch_size))
        .max(1);
    let mut optim = OptimState::new(config.adam, policy.params().len());
    let start = Instant::now();
    let mut history = Vec::new();
    for epoch in 0..config.epochs {
        let mut sum = 0.0;
        for b in 0..batches {
            let batch: Vec<TrainItem> = (0..config.batch_size)
                .map(|_| train[rng.random_range(0..train.len())].clone())
                .collect();
            let seeds: Vec<u64> = (0..batch.len()).map(|_| rng.random()).collect();
            let (loss, norm) = train_step(
                policy,
                &mut optim,
                &batch,
                Some(&seeds),
                None,
                config.clip_norm,
            )?;
            let loss = loss.to_f64().unwrap_or(f64::NAN);
            sum += loss;
            if let Some(log) = log.as_deref_mut() {
                log.record(epoch, b, loss, norm.to_f64().unwrap_or(f64::NAN))?;
            }
        }
        let record = EpochLoss {
            epoch,
            train_loss: sum / batches as f64,
            validation_loss: evaluate(policy, &val)?.to_f64().unwrap_or(f64::NAN),
            wall_ms: start.elapsed().as_millis() as u64,
        };
        on_epoch(&record);
        history.push(record);
    }
    if let Some(log) = log {
        log.flush()?;
    }
    Ok(history)
}

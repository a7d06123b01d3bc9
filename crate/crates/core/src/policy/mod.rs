//! Graph transformer policy over the three sub-action levels.
//!
//! Input tokens are a virtual atom followed by the molecule's atoms (and, once
//! a new atom type has been chosen, a pending token for that atom). Attention
//! scores carry a learned per-layer, per-head bias indexed by bond order, with
//! one extra code for bonds to the virtual atom. Layers use ReZero residuals.

pub mod checkpoint;
mod net;
mod params;

use crate::alphabet::Alphabet;
use crate::molecule::Molecule;
use crate::space::{ActionLevelState, FirstChoice, Level};
use net::Net;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::sync::Arc;
use thiserror::Error;

pub use params::{Layout, TensorDesc};

/// Floating-point type the network runs in.
pub trait Scalar:
    Float + Send + Sync + Debug + Default + AddAssign + SubAssign + MulAssign + DivAssign + Sum + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + Send
        + Sync
        + Debug
        + Default
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum
        + 'static
{
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("invalid policy configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no feasible entry at the active level")]
    EmptyFeasibleSet,
    #[error("target {0} is masked")]
    TargetMasked(usize),
}

/// Network width and depth, independent of the alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSize {
    pub d: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    /// Defaults to the largest valence in the alphabet.
    pub max_degree: Option<usize>,
}

impl Default for NetworkSize {
    fn default() -> Self {
        NetworkSize {
            d: 64,
            n_layers: 4,
            n_heads: 4,
            ff_dim: 256,
            dropout: 0.1,
            max_degree: None,
        }
    }
}

impl NetworkSize {
    /// d=512, ten layers, eight heads, feed-forward 2048.
    pub fn full() -> Self {
        NetworkSize {
            d: 512,
            n_layers: 10,
            n_heads: 8,
            ff_dim: 2048,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub d: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
    /// Alphabet size.
    pub k: usize,
    /// Maximum bond order.
    pub y: u8,
    pub max_degree: usize,
    pub dropout: f64,
}

impl PolicyConfig {
    pub fn new(size: &NetworkSize, alphabet: &Alphabet) -> Result<Self, PolicyError> {
        let cfg = PolicyConfig {
            d: size.d,
            n_layers: size.n_layers,
            n_heads: size.n_heads,
            ff_dim: size.ff_dim,
            k: alphabet.len(),
            y: alphabet.max_bond_order(),
            max_degree: size
                .max_degree
                .unwrap_or(alphabet.max_valence() as usize),
            dropout: size.dropout,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let err = |m: &str| Err(PolicyError::Config(m.to_string()));
        if self.d == 0 || self.n_layers == 0 || self.n_heads == 0 || self.ff_dim == 0 {
            return err("d, n_layers, n_heads and ff_dim must be positive");
        }
        if self.d % self.n_heads != 0 {
            return err("d must be divisible by n_heads");
        }
        if self.k == 0 || self.y == 0 || self.max_degree == 0 {
            return err("k, y and max_degree must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err("dropout must be in [0, 1)");
        }
        Ok(())
    }
}

/// Raw scores for the three levels: `level0` has `k+1+n` entries
/// (DontChange, new-atom types, existing atoms), `level1` has `n`, `level2`
/// has `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<T> {
    pub level0: Vec<T>,
    pub level1: Vec<T>,
    pub level2: Vec<T>,
}

impl<T> Logits<T> {
    pub fn level(&self, level: Level) -> &[T] {
        match level {
            Level::L0 => &self.level0,
            Level::L1 => &self.level1,
            Level::L2 => &self.level2,
        }
    }
}

/// Token sequence for one (molecule, level state) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    kinds: Vec<usize>,
    degrees: Vec<usize>,
    sel0: Vec<bool>,
    sel1: Vec<bool>,
    bonds: Vec<u8>,
    n_atoms: usize,
    level: usize,
    virtual_code: u8,
}

impl Encoded {
    /// Number of real tokens (virtual + atoms + pending).
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn level(&self) -> Level {
        [Level::L0, Level::L1, Level::L2][self.level]
    }

    /// Bias code between tokens `i` and `j`.
    pub(crate) fn code(&self, i: usize, j: usize) -> u8 {
        let len = self.len();
        if i >= len || j >= len {
            0
        } else if i == 0 || j == 0 {
            self.virtual_code
        } else if i > self.n_atoms || j > self.n_atoms {
            0
        } else {
            self.bonds[(i - 1) * self.n_atoms + (j - 1)]
        }
    }
}

/// Builds the token sequence.
pub fn encode(
    cfg: &PolicyConfig,
    m: &Molecule,
    state: &ActionLevelState,
) -> Result<Encoded, PolicyError> {
    let n = m.len();
    let bad = |msg: String| Err(PolicyError::ShapeMismatch(msg));
    if let Some(&t) = m.atoms().iter().find(|&&t| t >= cfg.k) {
        return bad(format!("atom type {t} outside alphabet of size {}", cfg.k));
    }
    let mut bonds = Vec::with_capacity(n * n);
    for i in 0..n {
        for &o in m.bond_row(i) {
            if o > cfg.y {
                return bad(format!("bond order {o} exceeds {}", cfg.y));
            }
            bonds.push(o);
        }
    }
    let mut kinds = vec![0];
    let mut degrees = vec![0];
    kinds.extend(m.atoms().iter().map(|&t| t + 1));
    degrees.extend((0..n).map(|i| (m.bond_sum(i) as usize).min(cfg.max_degree)));
    let mut sel0 = vec![false; n + 1];
    let mut sel1 = vec![false; n + 1];
    match state.first {
        None => {}
        Some(FirstChoice::Existing(j)) => {
            if j >= n {
                return bad(format!("first atom {j} out of range"));
            }
            sel0[1 + j] = true;
        }
        Some(FirstChoice::NewAtom(t)) => {
            if t >= cfg.k {
                return bad(format!("new atom type {t} outside alphabet"));
            }
            kinds.push(t + 1);
            degrees.push(0);
            sel0.push(true);
            sel1.push(false);
        }
    }
    if let Some(l) = state.second {
        if state.first.is_none() || l >= n {
            return bad(format!("second atom {l} out of range"));
        }
        sel1[1 + l] = true;
    }
    Ok(Encoded {
        kinds,
        degrees,
        sel0,
        sel1,
        bonds,
        n_atoms: n,
        level: state.level().index(),
        virtual_code: cfg.y + 1,
    })
}

/// Network parameters together with their configuration.
#[derive(Debug, Clone)]
pub struct Policy<T> {
    config: PolicyConfig,
    layout: Arc<Layout>,
    params: Vec<T>,
}

impl<T: Scalar> Policy<T> {
    /// Random initialization: Glorot-uniform matrices, small uniform
    /// embeddings, zero biases and zero ReZero gates.
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self, PolicyError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![T::zero(); layout.len()];
        for (t, r) in layout.tensors() {
            let name = t.name.as_str();
            let is_bias = name.ends_with(".b")
                || name.ends_with(".bq")
                || name.ends_with(".bk")
                || name.ends_with(".bv")
                || name.ends_with(".bo")
                || name.ends_with("rezero")
                || name.ends_with("bond_bias");
            if is_bias {
                continue;
            }
            let limit = if t.shape.len() == 2 && !name.ends_with("_emb") {
                (6.0 / (t.shape[0] + t.shape[1]) as f64).sqrt()
            } else if t.shape.len() == 1 && (name == "h0.w" || name == "h1.w") {
                (6.0 / (t.shape[0] + 1) as f64).sqrt()
            } else {
                (3.0 / config.d as f64).sqrt()
            };
            for p in &mut params[r] {
                *p = T::from(rng.random_range(-limit..limit)).expect("finite");
            }
        }
        Ok(Policy {
            config,
            layout: Arc::new(layout),
            params,
        })
    }

    pub fn from_params(config: PolicyConfig, params: Vec<T>) -> Result<Self, PolicyError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.len() {
            return Err(PolicyError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                layout.len(),
                params.len()
            )));
        }
        Ok(Policy {
            config,
            layout: Arc::new(layout),
            params,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> Policy<U> {
        Policy {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self
                .params
                .iter()
                .map(|&x| U::from(x).expect("castable"))
                .collect(),
        }
    }

    pub fn encode(&self, m: &Molecule, state: &ActionLevelState) -> Result<Encoded, PolicyError> {
        encode(&self.config, m, state)
    }

    fn net(&self) -> Net<'_, T> {
        Net {
            cfg: &self.config,
            layout: &self.layout,
            params: &self.params,
        }
    }

    /// Logits for one encoded input padded to `width` tokens, dropout off.
    pub fn logits_encoded(&self, enc: &Encoded, width: usize) -> Result<Logits<T>, PolicyError> {
        if width < enc.len() {
            return Err(PolicyError::ShapeMismatch(format!(
                "width {width} below sequence length {}",
                enc.len()
            )));
        }
        Ok(self.net().forward::<ChaCha8Rng>(enc, width, None, false).0)
    }

    /// Batched logits; every input is padded to the longest sequence.
    pub fn logits(
        &self,
        items: &[(&Molecule, ActionLevelState)],
    ) -> Result<Vec<Logits<T>>, PolicyError> {
        let encs = items
            .iter()
            .map(|(m, s)| self.encode(m, s))
            .collect::<Result<Vec<_>, _>>()?;
        let width = encs.iter().map(Encoded::len).max().unwrap_or(1);
        self.logits_padded(&encs, width)
    }

    pub fn logits_padded(
        &self,
        encs: &[Encoded],
        width: usize,
    ) -> Result<Vec<Logits<T>>, PolicyError> {
        encs.par_iter()
            .map(|e| self.logits_encoded(e, width))
            .collect()
    }

    /// Negative log-probability of `target` under the masked distribution at
    /// the input's level; the gradient is added to `grad`. Dropout runs when
    /// `dropout_seed` is given and the configured rate is positive.
    pub fn nll_grad(
        &self,
        enc: &Encoded,
        mask: &[bool],
        target: usize,
        width: usize,
        dropout_seed: Option<u64>,
        grad: &mut [T],
    ) -> Result<T, PolicyError> {
        if grad.len() != self.params.len() {
            return Err(PolicyError::ShapeMismatch("gradient buffer".into()));
        }
        if width < enc.len() {
            return Err(PolicyError::ShapeMismatch("width below sequence length".into()));
        }
        let mut rng = dropout_seed
            .filter(|_| self.config.dropout > 0.0)
            .map(ChaCha8Rng::seed_from_u64);
        let (logits, cache) = self.net().forward(enc, width, rng.as_mut(), true);
        let active = logits.level(enc.level());
        if mask.len() != active.len() {
            return Err(PolicyError::ShapeMismatch(format!(
                "mask has {} entries, level has {}",
                mask.len(),
                active.len()
            )));
        }
        if !mask.get(target).copied().unwrap_or(false) {
            return Err(PolicyError::TargetMasked(target));
        }
        let probs = masked_distribution(active, mask)?;
        let loss = -masked_log_softmax(active, mask)?[target];
        let mut dl: Vec<T> = probs;
        dl[target] -= T::one();
        let mut d = Logits {
            level0: Vec::new(),
            level1: Vec::new(),
            level2: Vec::new(),
        };
        match enc.level() {
            Level::L0 => d.level0 = dl,
            Level::L1 => d.level1 = dl,
            Level::L2 => d.level2 = dl,
        }
        self.net()
            .backward(enc, &cache.expect("cache kept"), &d, grad);
        Ok(loss)
    }
}

/// Softmax over the unmasked entries; masked entries get exactly zero.
pub fn masked_distribution<T: Scalar>(logits: &[T], mask: &[bool]) -> Result<Vec<T>, PolicyError> {
    let lp = masked_log_softmax(logits, mask)?;
    Ok(lp
        .into_iter()
        .zip(mask)
        .map(|(l, &ok)| if ok { l.exp() } else { T::zero() })
        .collect())
}

/// Log-softmax over the unmasked entries; masked entries are `-inf`.
pub fn masked_log_softmax<T: Scalar>(logits: &[T], mask: &[bool]) -> Result<Vec<T>, PolicyError> {
    if logits.len() != mask.len() {
        return Err(PolicyError::ShapeMismatch(format!(
            "{} logits, {} mask entries",
            logits.len(),
            mask.len()
        )));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &ok)| ok)
        .map(|(&l, _)| l)
        .fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return Err(PolicyError::EmptyFeasibleSet);
    }
    let sum: T = logits
        .iter()
        .zip(mask)
        .filter(|(_, &ok)| ok)
        .map(|(&l, _)| (l - max).exp())
        .sum();
    let lse = max + sum.ln();
    Ok(logits
        .iter()
        .zip(mask)
        .map(|(&l, &ok)| if ok { l - lse } else { T::neg_infinity() })
        .collect())
}

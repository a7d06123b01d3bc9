use super::PolicyConfig;
use serde::{Deserialize, Serialize};
use std::ops::Range;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorDesc {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorDesc {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerOffsets {
    pub bias: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub gate: usize,
}

/// Named tensors packed into one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Layout {
    tensors: Vec<(TensorDesc, usize)>,
    total: usize,
    pub(crate) atom_emb: usize,
    pub(crate) level_emb: usize,
    pub(crate) sel0: usize,
    pub(crate) sel1: usize,
    pub(crate) degree_emb: usize,
    pub(crate) layers: Vec<LayerOffsets>,
    pub(crate) g0w: usize,
    pub(crate) g0b: usize,
    pub(crate) h0w: usize,
    pub(crate) h0b: usize,
    pub(crate) h1w: usize,
    pub(crate) h1b: usize,
    pub(crate) g2w: usize,
    pub(crate) g2b: usize,
}

struct Builder {
    tensors: Vec<(TensorDesc, usize)>,
    total: usize,
}

impl Builder {
    fn add(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let desc = TensorDesc {
            name: name.into(),
            shape: shape.to_vec(),
        };
        let offset = self.total;
        self.total += desc.numel();
        self.tensors.push((desc, offset));
        offset
    }
}

pub(crate) const HEAD_PREFIXES: [&str; 4] = ["g0.", "h0.", "h1.", "g2."];

impl Layout {
    pub fn new(cfg: &PolicyConfig) -> Self {
        let d = cfg.d;
        let y = cfg.y as usize;
        let mut b = Builder {
            tensors: Vec::new(),
            total: 0,
        };
        let atom_emb = b.add("atom_emb", &[cfg.k + 1, d]);
        let level_emb = b.add("level_emb", &[3, d]);
        let sel0 = b.add("sel0", &[d]);
        let sel1 = b.add("sel1", &[d]);
        let degree_emb = b.add("degree_emb", &[cfg.max_degree + 1, d]);
        let layers = (0..cfg.n_layers)
            .map(|l| LayerOffsets {
                bias: b.add(format!("layers.{l}.bond_bias"), &[cfg.n_heads, y + 2]),
                wq: b.add(format!("layers.{l}.wq"), &[d, d]),
                bq: b.add(format!("layers.{l}.bq"), &[d]),
                wk: b.add(format!("layers.{l}.wk"), &[d, d]),
                bk: b.add(format!("layers.{l}.bk"), &[d]),
                wv: b.add(format!("layers.{l}.wv"), &[d, d]),
                bv: b.add(format!("layers.{l}.bv"), &[d]),
                wo: b.add(format!("layers.{l}.wo"), &[d, d]),
                bo: b.add(format!("layers.{l}.bo"), &[d]),
                w1: b.add(format!("layers.{l}.ff1.w"), &[d, cfg.ff_dim]),
                b1: b.add(format!("layers.{l}.ff1.b"), &[cfg.ff_dim]),
                w2: b.add(format!("layers.{l}.ff2.w"), &[cfg.ff_dim, d]),
                b2: b.add(format!("layers.{l}.ff2.b"), &[d]),
                gate: b.add(format!("layers.{l}.rezero"), &[1]),
            })
            .collect();
        let g0w = b.add("g0.w", &[d, cfg.k + 1]);
        let g0b = b.add("g0.b", &[cfg.k + 1]);
        let h0w = b.add("h0.w", &[d]);
        let h0b = b.add("h0.b", &[1]);
        let h1w = b.add("h1.w", &[d]);
        let h1b = b.add("h1.b", &[1]);
        let g2w = b.add("g2.w", &[d, y]);
        let g2b = b.add("g2.b", &[y]);
        Layout {
            tensors: b.tensors,
            total: b.total,
            atom_emb,
            level_emb,
            sel0,
            sel1,
            degree_emb,
            layers,
            g0w,
            g0b,
            h0w,
            h0b,
            h1w,
            h1b,
            g2w,
            g2b,
        }
    }

    /// Total number of scalars.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&TensorDesc, Range<usize>)> {
        self.tensors
            .iter()
            .map(|(t, o)| (t, *o..*o + t.numel()))
    }

    pub fn descriptors(&self) -> Vec<TensorDesc> {
        self.tensors.iter().map(|(t, _)| t.clone()).collect()
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.tensors()
            .find(|(t, _)| t.name == name)
            .map(|(_, r)| r)
    }

    /// Per-scalar flags: true for the output heads.
    pub fn head_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.total];
        for (t, r) in self.tensors() {
            if HEAD_PREFIXES.iter().any(|p| t.name.starts_with(p)) {
                mask[r].iter_mut().for_each(|x| *x = true);
            }
        }
        mask
    }
}

//! Forward and backward passes for one (padded) sequence.

use super::params::Layout;
use super::{Encoded, Logits, PolicyConfig, Scalar};
use rand::Rng;

fn c<T: Scalar>(x: f64) -> T {
    T::from(x).expect("representable constant")
}

/// `out[m×n] = a[m×k] · b[k×n] + bias`
fn linear<T: Scalar>(a: &[T], w: &[T], bias: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(m * n);
    for _ in 0..m {
        out.extend_from_slice(bias);
    }
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (kk, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aik == T::zero() {
                continue;
            }
            let wrow = &w[kk * n..(kk + 1) * n];
            for (o, &wv) in row.iter_mut().zip(wrow) {
                *o += aik * wv;
            }
        }
    }
    out
}

/// Backward of `linear`: accumulates `dw += aᵀ·dy`, `db += Σ dy`, returns `dy·wᵀ`.
#[allow(clippy::too_many_arguments)]
fn linear_back<T: Scalar>(
    a: &[T],
    w: &[T],
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    m: usize,
    k: usize,
    n: usize,
) -> Vec<T> {
    let mut da = vec![T::zero(); m * k];
    for i in 0..m {
        let dyr = &dy[i * n..(i + 1) * n];
        for (b, &g) in db.iter_mut().zip(dyr) {
            *b += g;
        }
        let ar = &a[i * k..(i + 1) * k];
        let dar = &mut da[i * k..(i + 1) * k];
        for kk in 0..k {
            let wrow = &w[kk * n..(kk + 1) * n];
            let dwrow = &mut dw[kk * n..(kk + 1) * n];
            let aik = ar[kk];
            let mut acc = T::zero();
            for j in 0..n {
                acc += dyr[j] * wrow[j];
                dwrow[j] += aik * dyr[j];
            }
            dar[kk] = acc;
        }
    }
    da
}

const GELU_A: f64 = 0.044_715;

fn gelu<T: Scalar>(x: T) -> T {
    let k: T = c((2.0 / std::f64::consts::PI).sqrt());
    let half: T = c(0.5);
    half * x * (T::one() + (k * (x + c::<T>(GELU_A) * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let k: T = c((2.0 / std::f64::consts::PI).sqrt());
    let half: T = c(0.5);
    let t = (k * (x + c::<T>(GELU_A) * x * x * x)).tanh();
    half * (T::one() + t)
        + half * x * (T::one() - t * t) * k * (T::one() + c::<T>(3.0 * GELU_A) * x * x)
}

fn dropout<T: Scalar, R: Rng>(x: &mut [T], p: f64, rng: &mut R) -> Vec<T> {
    let keep: T = c(1.0 / (1.0 - p));
    let mask: Vec<T> = x
        .iter()
        .map(|_| {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    for (v, s) in x.iter_mut().zip(&mask) {
        *v *= *s;
    }
    mask
}

pub(crate) struct LayerCache<T> {
    x_in: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    p: Vec<T>,
    o: Vec<T>,
    a: Vec<T>,
    mask_a: Option<Vec<T>>,
    x1: Vec<T>,
    hpre: Vec<T>,
    hact: Vec<T>,
    f: Vec<T>,
    mask_f: Option<Vec<T>>,
}

pub(crate) struct Cache<T> {
    layers: Vec<LayerCache<T>>,
    x_out: Vec<T>,
    width: usize,
}

pub(crate) struct Net<'a, T> {
    pub cfg: &'a PolicyConfig,
    pub layout: &'a Layout,
    pub params: &'a [T],
}

impl<T: Scalar> Net<'_, T> {
    fn p(&self, offset: usize, len: usize) -> &[T] {
        &self.params[offset..offset + len]
    }

    fn embed(&self, enc: &Encoded, width: usize) -> Vec<T> {
        let d = self.cfg.d;
        let lo = self.layout;
        let mut x = vec![T::zero(); width * d];
        for i in 0..enc.len() {
            let row = &mut x[i * d..(i + 1) * d];
            let mut add = |off: usize| {
                for (r, &v) in row.iter_mut().zip(self.p(off, d)) {
                    *r += v;
                }
            };
            add(lo.atom_emb + enc.kinds[i] * d);
            if i == 0 {
                add(lo.level_emb + enc.level * d);
            } else {
                add(lo.degree_emb + enc.degrees[i] * d);
                if enc.sel0[i] {
                    add(lo.sel0);
                }
                if enc.sel1[i] {
                    add(lo.sel1);
                }
            }
        }
        x
    }

    fn embed_back(&self, enc: &Encoded, dx: &[T], grad: &mut [T]) {
        let d = self.cfg.d;
        let lo = self.layout;
        for i in 0..enc.len() {
            let row = &dx[i * d..(i + 1) * d];
            let mut add = |off: usize| {
                for (g, &v) in grad[off..off + d].iter_mut().zip(row) {
                    *g += v;
                }
            };
            add(lo.atom_emb + enc.kinds[i] * d);
            if i == 0 {
                add(lo.level_emb + enc.level * d);
            } else {
                add(lo.degree_emb + enc.degrees[i] * d);
                if enc.sel0[i] {
                    add(lo.sel0);
                }
                if enc.sel1[i] {
                    add(lo.sel1);
                }
            }
        }
    }

    pub fn forward<R: Rng>(
        &self,
        enc: &Encoded,
        width: usize,
        mut dropout_rng: Option<&mut R>,
        keep_cache: bool,
    ) -> (Logits<T>, Option<Cache<T>>) {
        let cfg = self.cfg;
        let (d, f_dim, heads) = (cfg.d, cfg.ff_dim, cfg.n_heads);
        let dh = d / heads;
        let scale: T = c(1.0 / (dh as f64).sqrt());
        let n_codes = cfg.y as usize + 2;
        let m = enc.len();
        let mut x = self.embed(enc, width);
        let mut caches = Vec::new();
        for lo in &self.layout.layers {
            let q = linear(&x, self.p(lo.wq, d * d), self.p(lo.bq, d), width, d, d);
            let k = linear(&x, self.p(lo.wk, d * d), self.p(lo.bk, d), width, d, d);
            let v = linear(&x, self.p(lo.wv, d * d), self.p(lo.bv, d), width, d, d);
            let bias = self.p(lo.bias, heads * n_codes);
            let mut p = vec![T::zero(); heads * width * width];
            let mut o = vec![T::zero(); width * d];
            for h in 0..heads {
                let hs = h * dh..(h + 1) * dh;
                for i in 0..width {
                    let qi = &q[i * d..(i + 1) * d][hs.clone()];
                    let prow = &mut p[(h * width + i) * width..(h * width + i + 1) * width];
                    let mut max = T::neg_infinity();
                    for j in 0..m {
                        let kj = &k[j * d..(j + 1) * d][hs.clone()];
                        let mut s = T::zero();
                        for (a, b) in qi.iter().zip(kj) {
                            s += *a * *b;
                        }
                        s = s * scale + bias[h * n_codes + enc.code(i, j) as usize];
                        prow[j] = s;
                        if s > max {
                            max = s;
                        }
                    }
                    let mut sum = T::zero();
                    for pj in prow[..m].iter_mut() {
                        *pj = (*pj - max).exp();
                        sum += *pj;
                    }
                    for pj in prow[..m].iter_mut() {
                        *pj /= sum;
                    }
                    let orow = &mut o[i * d..(i + 1) * d][hs.clone()];
                    for j in 0..m {
                        let w = prow[j];
                        let vj = &v[j * d..(j + 1) * d][hs.clone()];
                        for (oo, vv) in orow.iter_mut().zip(vj) {
                            *oo += w * *vv;
                        }
                    }
                }
            }
            let mut a = linear(&o, self.p(lo.wo, d * d), self.p(lo.bo, d), width, d, d);
            let mask_a = dropout_rng
                .as_deref_mut()
                .map(|r| dropout(&mut a, cfg.dropout, r));
            let gate = self.params[lo.gate];
            let x1: Vec<T> = x.iter().zip(&a).map(|(&xi, &ai)| xi + gate * ai).collect();
            let hpre = linear(
                &x1,
                self.p(lo.w1, d * f_dim),
                self.p(lo.b1, f_dim),
                width,
                d,
                f_dim,
            );
            let hact: Vec<T> = hpre.iter().map(|&z| gelu(z)).collect();
            let mut f = linear(
                &hact,
                self.p(lo.w2, f_dim * d),
                self.p(lo.b2, d),
                width,
                f_dim,
                d,
            );
            let mask_f = dropout_rng
                .as_deref_mut()
                .map(|r| dropout(&mut f, cfg.dropout, r));
            let x2: Vec<T> = x1.iter().zip(&f).map(|(&xi, &fi)| xi + gate * fi).collect();
            let x_in = std::mem::replace(&mut x, x2);
            if keep_cache {
                caches.push(LayerCache {
                    x_in,
                    q,
                    k,
                    v,
                    p,
                    o,
                    a,
                    mask_a,
                    x1,
                    hpre,
                    hact,
                    f,
                    mask_f,
                });
            }
        }
        let logits = self.heads(enc, &x);
        let cache = keep_cache.then_some(Cache {
            layers: caches,
            x_out: x,
            width,
        });
        (logits, cache)
    }

    fn heads(&self, enc: &Encoded, x: &[T]) -> Logits<T> {
        let (d, k, y) = (self.cfg.d, self.cfg.k, self.cfg.y as usize);
        let lo = self.layout;
        let e0 = &x[..d];
        let g0 = linear(e0, self.p(lo.g0w, d * (k + 1)), self.p(lo.g0b, k + 1), 1, d, k + 1);
        let g2 = linear(e0, self.p(lo.g2w, d * y), self.p(lo.g2b, y), 1, d, y);
        let dot = |w: &[T], row: &[T]| -> T {
            let mut s = T::zero();
            for (a, b) in w.iter().zip(row) {
                s += *a * *b;
            }
            s
        };
        let (h0w, h0b) = (self.p(lo.h0w, d), self.params[lo.h0b]);
        let (h1w, h1b) = (self.p(lo.h1w, d), self.params[lo.h1b]);
        let mut level0 = g0;
        let mut level1 = Vec::with_capacity(enc.n_atoms);
        for i in 1..=enc.n_atoms {
            let row = &x[i * d..(i + 1) * d];
            level0.push(dot(h0w, row) + h0b);
            level1.push(dot(h1w, row) + h1b);
        }
        Logits {
            level0,
            level1,
            level2: g2,
        }
    }

    /// Accumulates into `grad` the gradient of `Σ dlogits·logits`. Empty
    /// vectors in `dlogits` stand for zero.
    pub fn backward(&self, enc: &Encoded, cache: &Cache<T>, dlogits: &Logits<T>, grad: &mut [T]) {
        let cfg = self.cfg;
        let (d, f_dim, heads, k, y) = (cfg.d, cfg.ff_dim, cfg.n_heads, cfg.k, cfg.y as usize);
        let dh = d / heads;
        let scale: T = c(1.0 / (dh as f64).sqrt());
        let n_codes = y + 2;
        let lo = self.layout;
        let width = cache.width;
        let m = enc.len();
        let x = &cache.x_out;
        let mut dx = vec![T::zero(); width * d];

        // output heads
        if !dlogits.level0.is_empty() {
            let dg0 = &dlogits.level0[..k + 1];
            let (gw, gb) = grad.split_at_mut(lo.g0b);
            let de0 = linear_back(
                &x[..d],
                self.p(lo.g0w, d * (k + 1)),
                dg0,
                &mut gw[lo.g0w..lo.g0w + d * (k + 1)],
                &mut gb[..k + 1],
                1,
                d,
                k + 1,
            );
            for (a, b) in dx[..d].iter_mut().zip(&de0) {
                *a += *b;
            }
            let h0w = self.p(lo.h0w, d);
            for i in 0..enc.n_atoms {
                let g = dlogits.level0[k + 1 + i];
                let row = 1 + i;
                grad[lo.h0b] += g;
                for t in 0..d {
                    grad[lo.h0w + t] += g * x[row * d + t];
                    dx[row * d + t] += g * h0w[t];
                }
            }
        }
        if !dlogits.level1.is_empty() {
            let h1w = self.p(lo.h1w, d);
            for i in 0..enc.n_atoms {
                let g = dlogits.level1[i];
                let row = 1 + i;
                grad[lo.h1b] += g;
                for t in 0..d {
                    grad[lo.h1w + t] += g * x[row * d + t];
                    dx[row * d + t] += g * h1w[t];
                }
            }
        }
        if !dlogits.level2.is_empty() {
            let (gw, gb) = grad.split_at_mut(lo.g2b);
            let de0 = linear_back(
                &x[..d],
                self.p(lo.g2w, d * y),
                &dlogits.level2,
                &mut gw[lo.g2w..lo.g2w + d * y],
                &mut gb[..y],
                1,
                d,
                y,
            );
            for (a, b) in dx[..d].iter_mut().zip(&de0) {
                *a += *b;
            }
        }

        for (lo, lc) in self.layout.layers.iter().zip(&cache.layers).rev() {
            let gate = self.params[lo.gate];
            // x = x1 + gate * f
            let mut dgate = T::zero();
            for (g, f) in dx.iter().zip(&lc.f) {
                dgate += *g * *f;
            }
            let mut df: Vec<T> = dx.iter().map(|&g| g * gate).collect();
            if let Some(mask) = &lc.mask_f {
                for (g, s) in df.iter_mut().zip(mask) {
                    *g *= *s;
                }
            }
            let mut dx1 = dx;
            let (gw, gb) = grad.split_at_mut(lo.b2);
            let dhact = linear_back(
                &lc.hact,
                self.p(lo.w2, f_dim * d),
                &df,
                &mut gw[lo.w2..lo.w2 + f_dim * d],
                &mut gb[..d],
                width,
                f_dim,
                d,
            );
            let dhpre: Vec<T> = dhact
                .iter()
                .zip(&lc.hpre)
                .map(|(&g, &z)| g * gelu_grad(z))
                .collect();
            let (gw, gb) = grad.split_at_mut(lo.b1);
            let back = linear_back(
                &lc.x1,
                self.p(lo.w1, d * f_dim),
                &dhpre,
                &mut gw[lo.w1..lo.w1 + d * f_dim],
                &mut gb[..f_dim],
                width,
                d,
                f_dim,
            );
            for (a, b) in dx1.iter_mut().zip(&back) {
                *a += *b;
            }
            // x1 = x_in + gate * a
            for (g, a) in dx1.iter().zip(&lc.a) {
                dgate += *g * *a;
            }
            grad[lo.gate] += dgate;
            let mut da: Vec<T> = dx1.iter().map(|&g| g * gate).collect();
            if let Some(mask) = &lc.mask_a {
                for (g, s) in da.iter_mut().zip(mask) {
                    *g *= *s;
                }
            }
            let mut dx_in = dx1;
            let (gw, gb) = grad.split_at_mut(lo.bo);
            let d_o = linear_back(
                &lc.o,
                self.p(lo.wo, d * d),
                &da,
                &mut gw[lo.wo..lo.wo + d * d],
                &mut gb[..d],
                width,
                d,
                d,
            );
            let mut dq = vec![T::zero(); width * d];
            let mut dk = vec![T::zero(); width * d];
            let mut dv = vec![T::zero(); width * d];
            let mut dp = vec![T::zero(); m];
            for h in 0..heads {
                let hs = h * dh..(h + 1) * dh;
                for i in 0..width {
                    let doi = &d_o[i * d..(i + 1) * d][hs.clone()];
                    let prow = &lc.p[(h * width + i) * width..(h * width + i) * width + m];
                    let mut dot = T::zero();
                    for j in 0..m {
                        let vj = &lc.v[j * d..(j + 1) * d][hs.clone()];
                        let mut s = T::zero();
                        for (a, b) in doi.iter().zip(vj) {
                            s += *a * *b;
                        }
                        dp[j] = s;
                        dot += s * prow[j];
                        let dvj = &mut dv[j * d..(j + 1) * d][hs.clone()];
                        for (a, b) in dvj.iter_mut().zip(doi) {
                            *a += prow[j] * *b;
                        }
                    }
                    for j in 0..m {
                        let ds = prow[j] * (dp[j] - dot);
                        grad[lo.bias + h * n_codes + enc.code(i, j) as usize] += ds;
                        let dss = ds * scale;
                        for t in hs.clone() {
                            dq[i * d + t] += dss * lc.k[j * d + t];
                            dk[j * d + t] += dss * lc.q[i * d + t];
                        }
                    }
                }
            }
            for (w, b, dy) in [(lo.wq, lo.bq, &dq), (lo.wk, lo.bk, &dk), (lo.wv, lo.bv, &dv)] {
                let (gw, gb) = grad.split_at_mut(b);
                let back = linear_back(
                    &lc.x_in,
                    self.p(w, d * d),
                    dy,
                    &mut gw[w..w + d * d],
                    &mut gb[..d],
                    width,
                    d,
                    d,
                );
                for (a, b) in dx_in.iter_mut().zip(&back) {
                    *a += *b;
                }
            }
            dx = dx_in;
        }
        self.embed_back(enc, &dx, grad);
    }
}

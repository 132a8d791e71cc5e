//! Incremental decoding with per-stream key/value caches.
//!
//! Used for sampling only; nothing here is differentiable. Each stream is
//! one partial configuration; [`Decoder::select`] duplicates or drops
//! streams so prefixes can branch.

use super::forward::LN_EPS;
use super::GnaModel;
use crate::nn::{gelu, Scalar, Tensor};

pub(crate) struct Decoder<'m, S> {
    model: &'m GnaModel<S>,
    streams: usize,
    pos: usize,
    capacity: usize,
    keys: Vec<Vec<S>>,
    values: Vec<Vec<S>>,
    temp: Vec<S>,
    capture: bool,
    /// Attention rows of the last step, per layer: `[streams, pos]`.
    last_attention: Vec<Vec<S>>,
}

/// `out[r] = x[r] W + b` for `rows` rows.
fn linear<S: Scalar>(x: &[S], rows: usize, w: &Tensor<S>, b: &Tensor<S>) -> Vec<S> {
    let (k, n) = (w.shape()[0], w.shape()[1]);
    let mut out = Vec::with_capacity(rows * n);
    for _ in 0..rows {
        out.extend_from_slice(b.data());
    }
    S::gemm(rows, k, n, S::one(), x, (k, 1), w.data(), (n, 1), S::one(), &mut out, (n, 1));
    out
}

fn layer_norm<S: Scalar>(x: &[S], width: usize, g: &Tensor<S>, b: &Tensor<S>) -> Vec<S> {
    let eps = S::lit(LN_EPS);
    let w = S::lit(width as f64);
    let (g, b) = (g.data(), b.data());
    let mut out = vec![S::zero(); x.len()];
    for (row, orow) in x.chunks(width).zip(out.chunks_mut(width)) {
        let mean = row.iter().copied().sum::<S>() / w;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / w;
        let inv = (var + eps).sqrt().recip();
        for c in 0..width {
            let h = (row[c] - mean) * inv;
            orow[c] = h * g[c] + b[c];
        }
    }
    out
}

impl<'m, S: Scalar> Decoder<'m, S> {
    pub fn new(model: &'m GnaModel<S>, streams: usize, beta: f64, capture: bool) -> Self {
        let cfg = &model.config;
        let capacity = cfg.n_vars;
        let h = cfg.hidden;
        let p = &model.params;
        let lb = S::lit(beta.ln());
        let temp = p
            .temp_w
            .data()
            .iter()
            .zip(p.temp_b.data())
            .map(|(&w, &b)| w * lb + b)
            .collect();
        Self {
            model,
            streams,
            pos: 0,
            capacity,
            keys: vec![vec![S::zero(); streams * capacity * h]; cfg.n_layers],
            values: vec![vec![S::zero(); streams * capacity * h]; cfg.n_layers],
            temp,
            capture,
            last_attention: vec![Vec::new(); cfg.n_layers],
        }
    }

    /// Attention rows produced by the most recent [`Decoder::step`], per layer,
    /// laid out `[streams, positions_so_far]`.
    pub fn last_attention(&self) -> &[Vec<S>] {
        &self.last_attention
    }

    /// Feeds one token per stream at the current position and returns the
    /// next-bit logits of each stream.
    pub fn step(&mut self, tokens: &[u8]) -> Vec<[S; 2]> {
        assert_eq!(tokens.len(), self.streams);
        assert!(self.pos < self.capacity, "decoder is full");
        let cfg = self.model.config;
        let p = &self.model.params;
        let h = cfg.hidden;
        let t = self.pos;
        let ps = self.streams;
        let cap = self.capacity;
        let inv_sqrt = S::lit(1.0 / (h as f64).sqrt());

        let tok = p.tok_emb.data();
        let pos_row = &p.pos_emb.data()[t * h..(t + 1) * h];
        let mut x = Vec::with_capacity(ps * h);
        for &token in tokens {
            let tr = &tok[token as usize * h..(token as usize + 1) * h];
            for c in 0..h {
                x.push(tr[c] + pos_row[c] + self.temp[c]);
            }
        }

        let mut scores = vec![S::zero(); t + 1];
        for (l, lp) in p.layers.iter().enumerate() {
            let a = layer_norm(&x, h, &lp.ln1_g, &lp.ln1_b);
            let q = linear(&a, ps, &lp.wq, &lp.bq);
            let k = linear(&a, ps, &lp.wk, &lp.bk);
            let v = linear(&a, ps, &lp.wv, &lp.bv);
            let keys = &mut self.keys[l];
            let values = &mut self.values[l];
            for s in 0..ps {
                let dst = (s * cap + t) * h;
                keys[dst..dst + h].copy_from_slice(&k[s * h..(s + 1) * h]);
                values[dst..dst + h].copy_from_slice(&v[s * h..(s + 1) * h]);
            }
            let mut ctx = vec![S::zero(); ps * h];
            if self.capture {
                self.last_attention[l] = vec![S::zero(); ps * (t + 1)];
            }
            for s in 0..ps {
                let qs = &q[s * h..(s + 1) * h];
                let base = s * cap * h;
                let mut max = S::neg_infinity();
                for (j, sc) in scores.iter_mut().enumerate() {
                    let kj = &keys[base + j * h..base + (j + 1) * h];
                    let dot: S = qs.iter().zip(kj).map(|(&a, &b)| a * b).sum();
                    *sc = dot * inv_sqrt;
                    max = max.max(*sc);
                }
                let mut total = S::zero();
                for sc in scores.iter_mut() {
                    *sc = (*sc - max).exp();
                    total += *sc;
                }
                let inv = total.recip();
                scores.iter_mut().for_each(|sc| *sc *= inv);
                let cs = &mut ctx[s * h..(s + 1) * h];
                for (j, &w) in scores.iter().enumerate() {
                    let vj = &values[base + j * h..base + (j + 1) * h];
                    for c in 0..h {
                        cs[c] += w * vj[c];
                    }
                }
                if self.capture {
                    self.last_attention[l][s * (t + 1)..(s + 1) * (t + 1)].copy_from_slice(&scores);
                }
            }
            let o = linear(&ctx, ps, &lp.wo, &lp.bo);
            x.iter_mut().zip(&o).for_each(|(a, &b)| *a += b);
            let m = layer_norm(&x, h, &lp.ln2_g, &lp.ln2_b);
            let mut f = linear(&m, ps, &lp.w1, &lp.b1);
            f.iter_mut().for_each(|v| *v = gelu(*v));
            let f = linear(&f, ps, &lp.w2, &lp.b2);
            x.iter_mut().zip(&f).for_each(|(a, &b)| *a += b);
        }
        let xf = layer_norm(&x, h, &p.lnf_g, &p.lnf_b);
        let logits = linear(&xf, ps, &p.head_w, &p.head_b);
        self.pos += 1;
        logits.chunks(2).map(|c| [c[0], c[1]]).collect()
    }

    /// Rebuilds the stream set so new stream `i` continues old stream
    /// `parents[i]`.
    pub fn select(&mut self, parents: &[usize]) {
        let h = self.model.config.hidden;
        let block = self.capacity * h;
        let used = self.pos * h;
        for cache in self.keys.iter_mut().chain(self.values.iter_mut()) {
            let mut next = vec![S::zero(); parents.len() * block];
            for (i, &p) in parents.iter().enumerate() {
                next[i * block..i * block + used].copy_from_slice(&cache[p * block..p * block + used]);
            }
            *cache = next;
        }
        self.streams = parents.len();
    }
}

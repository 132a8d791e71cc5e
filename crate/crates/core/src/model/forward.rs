//! Differentiable full-sequence forward pass.

use super::{GnaModel, ModelError};
use crate::bits::BitString;
use crate::nn::{Gradients, Scalar, Tape, Tensor, Var};

/// Layer-norm epsilon shared by the tape and the incremental decoder.
pub const LN_EPS: f64 = 1e-12;

/// Tape handles for every parameter, in canonical order.
#[derive(Clone, Debug)]
pub struct ParamVars(Vec<Var>);

const PER_LAYER: usize = 16;

impl ParamVars {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    /// Collects one gradient tensor per parameter (zeros where unused).
    pub fn gradients<S: Scalar>(&self, grads: &mut Gradients<S>) -> Vec<Tensor<S>> {
        self.0.iter().map(|&v| grads.take_or_zero(v)).collect()
    }

    fn layer(&self, l: usize, j: usize) -> Var {
        self.0[4 + PER_LAYER * l + j]
    }

    fn tail(&self, j: usize) -> Var {
        self.0[self.0.len() - 4 + j]
    }
}

/// Outputs of [`GnaModel::record_forward`].
#[derive(Clone, Debug)]
pub struct ForwardRecord {
    pub params: ParamVars,
    /// Next-bit logits, shape `[batch * len, 2]`.
    pub logits: Var,
    /// Per-layer attention probabilities, each `[batch, len, len]`.
    pub attention: Vec<Var>,
}

/// Model inputs for scoring whole configurations: the start token followed
/// by all but the last variable. Returns `(tokens, targets)`.
pub(crate) fn teacher_forcing(xs: &[BitString], n: usize) -> (Vec<u8>, Vec<usize>) {
    let mut tokens = Vec::with_capacity(xs.len() * n);
    let mut targets = Vec::with_capacity(xs.len() * n);
    for x in xs {
        tokens.push(0);
        tokens.extend_from_slice(&x.bits()[..n - 1]);
        targets.extend(x.bits().iter().map(|&b| b as usize));
    }
    (tokens, targets)
}

impl<S: Scalar> GnaModel<S> {
    /// Records a causal forward pass over `batch` token sequences of length
    /// `len` (row-major in `tokens`) at inverse temperature `beta`.
    pub fn record_forward(
        &self,
        tape: &mut Tape<S>,
        tokens: &[u8],
        batch: usize,
        len: usize,
        beta: f64,
    ) -> Result<ForwardRecord, ModelError> {
        check_beta(beta)?;
        let cfg = &self.config;
        if len == 0 || len > cfg.n_vars + 1 {
            return Err(ModelError::PrefixTooLong {
                len,
                max: cfg.n_vars + 1,
            });
        }
        if tokens.len() != batch * len {
            return Err(ModelError::LengthMismatch {
                expected: batch * len,
                got: tokens.len(),
            });
        }
        let h = cfg.hidden;
        let rows = batch * len;
        let eps = S::lit(LN_EPS);

        let pv = ParamVars(
            self.params
                .tensors()
                .into_iter()
                .map(|t| tape.leaf(t.clone()))
                .collect(),
        );

        let tok_idx: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let pos_idx: Vec<usize> = (0..batch).flat_map(|_| 0..len).collect();
        let tok = tape.embedding(pv.0[0], &tok_idx)?;
        let pos = tape.embedding(pv.0[1], &pos_idx)?;
        let temp = tape.scale(pv.0[2], S::lit(beta.ln()));
        let temp = tape.add(temp, pv.0[3])?;
        let x = tape.add(tok, pos)?;
        let mut x = tape.add_row(x, temp)?;

        let inv_sqrt = S::lit(1.0 / (h as f64).sqrt());
        let mut attention = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let p = |j| pv.layer(l, j);
            let a = tape.layer_norm(x, p(0), p(1), eps)?;
            let q = tape.matmul(a, p(2))?;
            let q = tape.add_row(q, p(3))?;
            let k = tape.matmul(a, p(4))?;
            let k = tape.add_row(k, p(5))?;
            let v = tape.matmul(a, p(6))?;
            let v = tape.add_row(v, p(7))?;
            let q = tape.reshape(q, &[batch, len, h])?;
            let k = tape.reshape(k, &[batch, len, h])?;
            let v = tape.reshape(v, &[batch, len, h])?;
            let scores = tape.batch_matmul(q, k, true)?;
            let scores = tape.scale(scores, inv_sqrt);
            let att = tape.softmax(scores, true)?;
            attention.push(att);
            let ctx = tape.batch_matmul(att, v, false)?;
            let ctx = tape.reshape(ctx, &[rows, h])?;
            let o = tape.matmul(ctx, p(8))?;
            let o = tape.add_row(o, p(9))?;
            x = tape.add(x, o)?;

            let m = tape.layer_norm(x, p(10), p(11), eps)?;
            let f = tape.matmul(m, p(12))?;
            let f = tape.add_row(f, p(13))?;
            let f = tape.gelu(f);
            let f = tape.matmul(f, p(14))?;
            let f = tape.add_row(f, p(15))?;
            x = tape.add(x, f)?;
        }
        let x = tape.layer_norm(x, pv.tail(0), pv.tail(1), eps)?;
        let logits = tape.matmul(x, pv.tail(2))?;
        let logits = tape.add_row(logits, pv.tail(3))?;
        Ok(ForwardRecord {
            params: pv,
            logits,
            attention,
        })
    }

    /// Records `log q(x | β)` for every configuration; the returned variable
    /// has shape `[xs.len()]`.
    pub fn record_log_probs(
        &self,
        tape: &mut Tape<S>,
        xs: &[BitString],
        beta: f64,
    ) -> Result<(ForwardRecord, Var), ModelError> {
        let n = self.config.n_vars;
        if let Some(bad) = xs.iter().find(|x| x.len() != n) {
            return Err(ModelError::LengthMismatch {
                expected: n,
                got: bad.len(),
            });
        }
        let (tokens, targets) = teacher_forcing(xs, n);
        let rec = self.record_forward(tape, &tokens, xs.len(), n, beta)?;
        let logp = tape.log_softmax(rec.logits);
        let picked = tape.gather_last(logp, &targets)?;
        let per_config = tape.segment_sum(picked, n)?;
        Ok((rec, per_config))
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<(), ModelError> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidBeta(beta))
    }
}

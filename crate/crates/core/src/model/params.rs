use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::nn::{Scalar, Tensor};

/// Shape of the temperature-conditioned decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_vars: usize,
    pub n_layers: usize,
    pub hidden: usize,
    pub n_heads: usize,
    pub vocab: usize,
    /// Feed-forward width as a multiple of `hidden`.
    pub ffn_mult: usize,
}

impl ModelConfig {
    pub fn new(n_vars: usize, n_layers: usize, hidden: usize) -> Self {
        Self {
            n_vars,
            n_layers,
            hidden,
            n_heads: 1,
            vocab: 2,
            ffn_mult: 4,
        }
    }

    /// 3 layers, width 20: the expensive-query preset.
    pub fn limited(n_vars: usize) -> Self {
        Self::new(n_vars, 3, 20)
    }

    /// 4 layers, width 32: the cheap-query preset.
    pub fn unlimited(n_vars: usize) -> Self {
        Self::new(n_vars, 4, 32)
    }

    pub fn ffn_width(&self) -> usize {
        self.hidden * self.ffn_mult
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::Config(msg));
        if self.vocab != 2 {
            return fail(format!("vocab must be 2 (bits), got {}", self.vocab));
        }
        if self.n_heads != 1 {
            return fail(format!("only single-head attention is supported, got {}", self.n_heads));
        }
        if self.n_vars == 0 || self.n_layers == 0 || self.hidden == 0 || self.ffn_mult == 0 {
            return fail(format!("all sizes must be positive: {self:?}"));
        }
        Ok(())
    }
}

/// Weights of one pre-norm transformer block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams<S> {
    pub ln1_g: Tensor<S>,
    pub ln1_b: Tensor<S>,
    pub wq: Tensor<S>,
    pub bq: Tensor<S>,
    pub wk: Tensor<S>,
    pub bk: Tensor<S>,
    pub wv: Tensor<S>,
    pub bv: Tensor<S>,
    pub wo: Tensor<S>,
    pub bo: Tensor<S>,
    pub ln2_g: Tensor<S>,
    pub ln2_b: Tensor<S>,
    pub w1: Tensor<S>,
    pub b1: Tensor<S>,
    pub w2: Tensor<S>,
    pub b2: Tensor<S>,
}

const LAYER_NAMES: [&str; 16] = [
    "ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln2_g", "ln2_b", "w1", "b1",
    "w2", "b2",
];

impl<S: Scalar> LayerParams<S> {
    fn build(cfg: &ModelConfig, mut weight: impl FnMut(&[usize]) -> Tensor<S>, gain: S) -> Self {
        let h = cfg.hidden;
        let f = cfg.ffn_width();
        Self {
            ln1_g: Tensor::filled(&[h], gain),
            ln1_b: Tensor::zeros(&[h]),
            wq: weight(&[h, h]),
            bq: Tensor::zeros(&[h]),
            wk: weight(&[h, h]),
            bk: Tensor::zeros(&[h]),
            wv: weight(&[h, h]),
            bv: Tensor::zeros(&[h]),
            wo: weight(&[h, h]),
            bo: Tensor::zeros(&[h]),
            ln2_g: Tensor::filled(&[h], gain),
            ln2_b: Tensor::zeros(&[h]),
            w1: weight(&[h, f]),
            b1: Tensor::zeros(&[f]),
            w2: weight(&[f, h]),
            b2: Tensor::zeros(&[h]),
        }
    }

    fn tensors(&self) -> [&Tensor<S>; 16] {
        [
            &self.ln1_g, &self.ln1_b, &self.wq, &self.bq, &self.wk, &self.bk, &self.wv, &self.bv,
            &self.wo, &self.bo, &self.ln2_g, &self.ln2_b, &self.w1, &self.b1, &self.w2, &self.b2,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<S>; 16] {
        [
            &mut self.ln1_g,
            &mut self.ln1_b,
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln2_g,
            &mut self.ln2_b,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

/// Every learnable tensor of the model.
///
/// The positional table has `n_vars + 1` rows: row 0 belongs to the start
/// token, and row `t` to the input holding variable `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<S> {
    pub tok_emb: Tensor<S>,
    pub pos_emb: Tensor<S>,
    /// Linear map `log β -> hidden`: weight and bias.
    pub temp_w: Tensor<S>,
    pub temp_b: Tensor<S>,
    pub layers: Vec<LayerParams<S>>,
    pub lnf_g: Tensor<S>,
    pub lnf_b: Tensor<S>,
    pub head_w: Tensor<S>,
    pub head_b: Tensor<S>,
}

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f64 = 0.02;

impl<S: Scalar> ModelParams<S> {
    fn build(cfg: &ModelConfig, mut weight: impl FnMut(&[usize]) -> Tensor<S>, gain: S) -> Self {
        let h = cfg.hidden;
        let tok_emb = weight(&[cfg.vocab, h]);
        let pos_emb = weight(&[cfg.n_vars + 1, h]);
        let temp_w = weight(&[h]);
        let layers = (0..cfg.n_layers)
            .map(|_| LayerParams::build(cfg, &mut weight, gain))
            .collect();
        let head_w = weight(&[h, cfg.vocab]);
        Self {
            tok_emb,
            pos_emb,
            temp_w,
            temp_b: Tensor::zeros(&[h]),
            layers,
            lnf_g: Tensor::filled(&[h], gain),
            lnf_b: Tensor::zeros(&[h]),
            head_w,
            head_b: Tensor::zeros(&[cfg.vocab]),
        }
    }

    /// Gaussian weights, zero biases, unit layer-norm gains.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        Self::build(cfg, |shape| Tensor::randn(shape, INIT_STD, rng), S::one())
    }

    /// Every tensor zero, including layer-norm gains.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self::build(cfg, Tensor::zeros, S::zero())
    }

    /// Parameter tensors in a fixed canonical order.
    pub fn tensors(&self) -> Vec<&Tensor<S>> {
        let mut out = vec![&self.tok_emb, &self.pos_emb, &self.temp_w, &self.temp_b];
        for layer in &self.layers {
            out.extend(layer.tensors());
        }
        out.extend([&self.lnf_g, &self.lnf_b, &self.head_w, &self.head_b]);
        out
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = vec![
            &mut self.tok_emb,
            &mut self.pos_emb,
            &mut self.temp_w,
            &mut self.temp_b,
        ];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.extend([
            &mut self.lnf_g,
            &mut self.lnf_b,
            &mut self.head_w,
            &mut self.head_b,
        ]);
        out
    }

    /// Names matching [`ModelParams::tensors`].
    pub fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = ["tok_emb", "pos_emb", "temp_w", "temp_b"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for i in 0..self.layers.len() {
            out.extend(LAYER_NAMES.iter().map(|n| format!("layers.{i}.{n}")));
        }
        out.extend(["lnf_g", "lnf_b", "head_w", "head_b"].iter().map(|s| s.to_string()));
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    /// Shapes consistent with `cfg`.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<(), ModelError> {
        let reference = Self::zeros(cfg);
        if self.layers.len() != reference.layers.len() {
            return Err(ModelError::Config(format!(
                "expected {} layers, found {}",
                reference.layers.len(),
                self.layers.len()
            )));
        }
        for ((name, a), b) in self.names().iter().zip(self.tensors()).zip(reference.tensors()) {
            if a.shape() != b.shape() {
                return Err(ModelError::Config(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }
}

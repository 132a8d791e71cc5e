//! Temperature-conditioned autoregressive decoder `q(x | β)`.
//!
//! A single-head, pre-norm, decoder-only transformer over bits. `log β` is
//! projected by a learned linear map and added to every token embedding;
//! generation starts from a 0-token at a dedicated position.

mod checkpoint;
mod forward;
mod infer;
mod params;
mod sampling;

pub use checkpoint::{Checkpoint, CheckpointTensor, RngState, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use forward::{ForwardRecord, ParamVars, LN_EPS};
pub use params::{LayerParams, ModelConfig, ModelParams, INIT_STD};
pub use sampling::WeightedSampleBatch;

use rand::Rng;
use thiserror::Error;

use crate::bits::BitString;
use crate::nn::{NnError, Scalar, Tape};
use forward::check_beta;
use infer::Decoder;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("inverse temperature must be positive and finite, got {0}")]
    InvalidBeta(f64),
    #[error("sequence length {len} outside 1..={max}")]
    PrefixTooLong { len: usize, max: usize },
    #[error("expected length {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

/// Anything that assigns a normalized log-probability to configurations at
/// a given inverse temperature.
pub trait LogProbModel {
    fn n_vars(&self) -> usize;
    fn log_prob_f64(&self, x: &BitString, beta: f64) -> f64;
}

/// Explicit probability table over all `2ⁿ` configurations, indexed by
/// [`BitString::to_index`]. It ignores `β`.
#[derive(Clone, Debug)]
pub struct TabularModel {
    n: usize,
    log_probs: Vec<f64>,
}

impl TabularModel {
    pub fn from_log_probs(n: usize, log_probs: Vec<f64>) -> Self {
        assert_eq!(log_probs.len(), 1usize << n);
        Self { n, log_probs }
    }

    pub fn from_probs(n: usize, probs: &[f64]) -> Self {
        Self::from_log_probs(n, probs.iter().map(|p| p.ln()).collect())
    }
}

impl LogProbModel for TabularModel {
    fn n_vars(&self) -> usize {
        self.n
    }

    fn log_prob_f64(&self, x: &BitString, _beta: f64) -> f64 {
        self.log_probs[x.to_index().expect("tabular model is small") as usize]
    }
}

/// Configurations scored per tape when evaluating many log-probabilities.
const SCORE_CHUNK: usize = 2048;

/// The decoder: configuration plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GnaModel<S> {
    pub config: ModelConfig,
    pub params: ModelParams<S>,
}

impl<S: Scalar> GnaModel<S> {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Self {
            config,
            params: ModelParams::init(&config, rng),
        })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Self {
            config,
            params: ModelParams::zeros(&config),
        })
    }

    pub fn from_params(config: ModelConfig, params: ModelParams<S>) -> Result<Self, ModelError> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Self { config, params })
    }

    pub fn n_vars(&self) -> usize {
        self.config.n_vars
    }

    /// Logits for the bit following `prefix`; `prefix.len() < n_vars`.
    pub fn forward_logits(&self, prefix: &[u8], beta: f64) -> Result<[S; 2], ModelError> {
        check_beta(beta)?;
        let n = self.config.n_vars;
        if prefix.len() >= n {
            return Err(ModelError::PrefixTooLong {
                len: prefix.len(),
                max: n - 1,
            });
        }
        let mut tokens = Vec::with_capacity(prefix.len() + 1);
        tokens.push(0);
        tokens.extend(prefix.iter().map(|&b| u8::from(b != 0)));
        let mut tape = Tape::new();
        let rec = self.record_forward(&mut tape, &tokens, 1, tokens.len(), beta)?;
        let logits = tape.value(rec.logits).data();
        let last = logits.len() - 2;
        Ok([logits[last], logits[last + 1]])
    }

    /// Exact `log q(x | β)`.
    pub fn log_prob(&self, x: &BitString, beta: f64) -> Result<S, ModelError> {
        Ok(self.log_probs(std::slice::from_ref(x), beta)?[0])
    }

    /// `log q(x | β)` for many configurations.
    pub fn log_probs(&self, xs: &[BitString], beta: f64) -> Result<Vec<S>, ModelError> {
        check_beta(beta)?;
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(SCORE_CHUNK) {
            let mut tape = Tape::new();
            let (_, lp) = self.record_log_probs(&mut tape, chunk, beta)?;
            out.extend_from_slice(tape.value(lp).data());
        }
        Ok(out)
    }

    /// Next-bit logits after every prefix of `x`, via the incremental
    /// decoder. Row `t` conditions on `x[..t]`.
    pub fn incremental_logits(&self, x: &BitString, beta: f64) -> Result<Vec<[S; 2]>, ModelError> {
        check_beta(beta)?;
        let n = self.config.n_vars;
        if x.len() != n {
            return Err(ModelError::LengthMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let mut dec = Decoder::new(self, 1, beta, false);
        let mut out = Vec::with_capacity(n);
        let mut token = 0u8;
        for t in 0..n {
            out.push(dec.step(&[token])[0]);
            token = x.bits()[t];
        }
        Ok(out)
    }
}

impl LogProbModel for GnaModel<f64> {
    fn n_vars(&self) -> usize {
        self.config.n_vars
    }

    fn log_prob_f64(&self, x: &BitString, beta: f64) -> f64 {
        self.log_prob(x, beta).expect("valid configuration")
    }
}

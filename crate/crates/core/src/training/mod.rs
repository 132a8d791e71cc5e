//! Annealed training in the two query regimes.
//!
//! Unlimited queries: REINFORCE on the variational free energy with a
//! reweighted sample batch per step. Limited queries: the model fits the
//! Boltzmann distribution restricted to a replay buffer of past
//! evaluations and proposes one new query after each round of training.

mod buffer;
mod history;
mod limited;
mod loss;
mod schedule;
mod unlimited;

pub use buffer::{BufferEntry, ReplayBuffer, Split};
pub use history::{QueryRecord, RunHistory};
pub use limited::{run_limited, select_queries};
pub use loss::{
    dedup_entries, free_energy_gradient, local_free_energies, local_free_energy, partial_kl_gradient,
    partial_kl_loss, record_partial_kl, weighted_moments, FreeEnergyEstimate, PartialKl,
};
pub use schedule::{AnnealSchedule, Variant};
pub use unlimited::run_unlimited;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::model::{GnaModel, ModelConfig, ModelError};
use crate::nn::{AdamState, NnError, OptimizerConfig, Scalar, StepOutcome, Tensor};
use crate::problems::ProblemError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("objective returned non-finite value {f} at {x}")]
    NonFinite { x: BitString, f: f64 },
    #[error("need at least 2 distinct configurations, got {0}")]
    TooFewEntries(usize),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub history: RunHistory,
    pub error: TrainError,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Limited,
    Unlimited,
}

/// Everything that shapes a training run besides the instance and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub regime: Regime,
    pub schedule: AnnealSchedule,
    pub n_layers: usize,
    pub hidden: usize,
    pub optimizer: OptimizerConfig,
    /// Limited: total objective evaluations.
    pub budget: usize,
    /// Limited: training steps after each query.
    pub steps_per_query: usize,
    pub init_random_queries: usize,
    /// Limited: how many initial queries go to validation.
    pub init_validation: usize,
    /// Limited: probability that a non-improving query joins train.
    pub train_probability: f64,
    /// Limited: queries between reversions to the best-validation checkpoint.
    pub reversion_window: usize,
    /// Limited: redraws allowed when a candidate is already in the buffer.
    pub query_retry_cap: usize,
    /// Unlimited: step cap.
    pub max_steps: u64,
    pub n_batch: u64,
    pub n_unique: usize,
    /// Unlimited: a batch containing `f <= target_f` marks the run solved.
    pub target_f: f64,
    /// Unlimited: end the run at the first solve; otherwise train to `max_steps`.
    pub stop_at_target: bool,
}

impl TrainRunConfig {
    pub fn limited(variant: Variant) -> Self {
        Self {
            regime: Regime::Limited,
            schedule: AnnealSchedule::limited(variant),
            n_layers: 3,
            hidden: 20,
            optimizer: OptimizerConfig::adamw(8.2e-4, 1.5e-4),
            budget: 200,
            steps_per_query: match variant {
                Variant::Sa => 5,
                Variant::Pt => 25,
            },
            init_random_queries: 20,
            init_validation: 2,
            train_probability: 0.9,
            reversion_window: 20,
            query_retry_cap: 64,
            max_steps: 0,
            n_batch: 0,
            n_unique: 0,
            target_f: 0.0,
            stop_at_target: true,
        }
    }

    pub fn unlimited(variant: Variant, max_steps: u64) -> Self {
        Self {
            regime: Regime::Unlimited,
            schedule: AnnealSchedule::unlimited(variant),
            n_layers: 4,
            hidden: 32,
            optimizer: OptimizerConfig::adam(5e-4),
            budget: 0,
            steps_per_query: 0,
            init_random_queries: 0,
            init_validation: 0,
            train_probability: 0.0,
            reversion_window: 0,
            query_retry_cap: 0,
            max_steps,
            n_batch: 1_000_000,
            n_unique: 1000,
            target_f: 0.0,
            stop_at_target: true,
        }
    }

    pub fn model_config(&self, n_vars: usize) -> ModelConfig {
        ModelConfig::new(n_vars, self.n_layers, self.hidden)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        self.schedule.validate().map_err(TrainError::Config)?;
        if self.n_layers == 0 || self.hidden == 0 {
            return bad("model needs at least one layer and a positive width");
        }
        if self.optimizer.lr.is_nan() || self.optimizer.lr <= 0.0 {
            return bad("learning rate must be positive");
        }
        match self.regime {
            Regime::Limited => {
                if self.init_random_queries < 1 || self.budget < self.init_random_queries {
                    return bad("budget must cover at least the initial random queries");
                }
                if self.init_validation >= self.init_random_queries {
                    return bad("initial validation split must leave training entries");
                }
                if self.steps_per_query == 0 || self.reversion_window == 0 || self.query_retry_cap == 0 {
                    return bad("steps_per_query, reversion_window and query_retry_cap must be positive");
                }
                if !(0.0..=1.0).contains(&self.train_probability) {
                    return bad("train_probability must lie in [0, 1]");
                }
            }
            Regime::Unlimited => {
                if self.max_steps == 0 {
                    return bad("max_steps must be positive");
                }
                if self.n_unique == 0 || self.n_batch < self.n_unique as u64 {
                    return bad("need n_batch >= n_unique >= 1");
                }
            }
        }
        Ok(())
    }
}

/// A model with its optimizer state.
#[derive(Clone, Debug)]
pub struct Learner<S> {
    pub model: GnaModel<S>,
    pub adam: AdamState<S>,
    pub optimizer: OptimizerConfig,
}

impl<S: Scalar> Learner<S> {
    pub fn new(model: GnaModel<S>, optimizer: OptimizerConfig) -> Self {
        let adam = AdamState::new(model.params.tensors());
        Self { model, adam, optimizer }
    }

    pub fn apply(&mut self, grads: &[Tensor<S>]) -> StepOutcome {
        let mut params = self.model.params.tensors_mut();
        self.adam.step(&mut params, grads, &self.optimizer)
    }
}

/// Among the last `window` `(checkpoint, validation loss)` pairs, the one
/// with the lowest finite loss; ties go to the most recent. `None` when no
/// candidate has a finite loss.
pub fn checkpoint_revert<P: Clone>(history: &[(P, f64)], window: usize) -> Option<P> {
    let start = history.len().saturating_sub(window);
    history[start..]
        .iter()
        .enumerate()
        .filter(|(_, (_, loss))| loss.is_finite())
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
        .map(|(_, (p, _))| p.clone())
}

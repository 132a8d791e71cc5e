//! Versioned JSON checkpoints. Values are written with round-trip float
//! formatting, so save/load is bit-exact.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{GnaModel, ModelConfig, ModelError, ModelParams};
use crate::nn::{Scalar, Tensor};

pub const CHECKPOINT_FORMAT: &str = "gna-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Position of a ChaCha20 generator: seed, stream id and word offset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed_hex: String,
    pub stream: u64,
    /// `u128` word position as a decimal string.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha20Rng) -> Self {
        let seed_hex = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        Self {
            seed_hex,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha20Rng, ModelError> {
        let bad = |what: &str| ModelError::Format(format!("rng state: bad {what}"));
        if self.seed_hex.len() != 64 {
            return Err(bad("seed length"));
        }
        let mut seed = [0u8; 32];
        for (i, byte) in seed.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&self.seed_hex[2 * i..2 * i + 2], 16).map_err(|_| bad("seed"))?;
        }
        let mut rng = ChaCha20Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad("word position"))?);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub params: Vec<CheckpointTensor>,
    pub rng: Option<RngState>,
}

impl Checkpoint {
    pub fn from_model<S: Scalar>(model: &GnaModel<S>, rng: Option<&ChaCha20Rng>) -> Self {
        let params = model
            .params
            .names()
            .into_iter()
            .zip(model.params.tensors())
            .map(|(name, t)| CheckpointTensor {
                name,
                shape: t.shape().to_vec(),
                data: t.data().iter().map(|v| v.as_f64()).collect(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: model.config,
            params,
            rng: rng.map(RngState::capture),
        }
    }

    pub fn into_model<S: Scalar>(self) -> Result<(GnaModel<S>, Option<ChaCha20Rng>), ModelError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Format(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(ModelError::Format(format!("unsupported version {}", self.version)));
        }
        let mut params = ModelParams::<S>::zeros(&self.config);
        let names = params.names();
        if names.len() != self.params.len() {
            return Err(ModelError::Format(format!(
                "expected {} tensors, found {}",
                names.len(),
                self.params.len()
            )));
        }
        for ((slot, name), stored) in params.tensors_mut().into_iter().zip(&names).zip(self.params) {
            if &stored.name != name || stored.shape != slot.shape() {
                return Err(ModelError::Format(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    stored.name,
                    stored.shape,
                    name,
                    slot.shape()
                )));
            }
            *slot = Tensor::new(stored.shape, stored.data.into_iter().map(S::lit).collect())?;
        }
        let rng = self.rng.as_ref().map(RngState::restore).transpose()?;
        Ok((GnaModel::from_params(self.config, params)?, rng))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

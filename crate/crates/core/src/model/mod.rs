//! Toy image-encoder / text-decoder with analytic gradients.

mod checkpoint;
mod forward;
pub mod gradcheck;
mod layers;
mod optim;
mod params;
mod tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::patchify::{MAX_PATCHES, PATCH_PX};
use crate::tokenizer::VOCAB_SIZE;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use forward::{
    decode_text, encode_image, forward_backward, batch_loss, gen_loss, generate_greedy, mae_loss, normalized_target,
    prepare, BatchLosses, GenLoss, PreparedExample, RoleWeights,
};
pub use layers::{Attention, DecoderBlock, EncoderBlock, LayerNorm, Linear, Mlp, Visit};
pub use optim::{AdamW, Hyperparameters};
pub use params::{init_params, Parameters};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of {len} exceeds the limit of {max}")]
    Overlength { len: usize, max: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch mixes patch grids {0} and {1}")]
    MixedResolution(String, String),
    #[error("invalid example: {0}")]
    InvalidExample(String),
    #[error("numerical failure in {tensor}")]
    NumericalFailure { tensor: String },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    pub n_mae_decoder_layers: usize,
    pub d_ff: usize,
    #[serde(default = "default_patch_px")]
    pub patch_px: usize,
    pub vocab_size: usize,
    pub max_patches: usize,
    pub max_text_len: usize,
    #[serde(default = "default_variance_floor")]
    pub variance_floor: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_patch_px() -> usize {
    PATCH_PX
}

fn default_variance_floor() -> f64 {
    1e-6
}

impl ModelConfig {
    /// Small config used by `pretrain` when no config file is given.
    pub fn toy() -> Self {
        ModelConfig {
            d_model: 32,
            n_heads: 2,
            n_encoder_layers: 1,
            n_decoder_layers: 1,
            n_mae_decoder_layers: 1,
            d_ff: 64,
            patch_px: PATCH_PX,
            vocab_size: VOCAB_SIZE,
            max_patches: 1024,
            max_text_len: 256,
            variance_floor: 1e-6,
            seed: 0,
        }
    }

    /// The gradient-check size: `d_model` 16, one layer everywhere.
    pub fn tiny() -> Self {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            d_ff: 32,
            max_patches: 64,
            max_text_len: 64,
            ..Self::toy()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        let dims = [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_encoder_layers", self.n_encoder_layers),
            ("n_decoder_layers", self.n_decoder_layers),
            ("n_mae_decoder_layers", self.n_mae_decoder_layers),
            ("d_ff", self.d_ff),
            ("max_patches", self.max_patches),
            ("max_text_len", self.max_text_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be at least 1"));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if !self.d_model.is_multiple_of(2) {
            return bad("d_model must be even for sinusoidal positions".into());
        }
        if self.patch_px != PATCH_PX {
            return bad(format!("patch_px must be {PATCH_PX}"));
        }
        if self.vocab_size != VOCAB_SIZE {
            return bad(format!("vocab_size must be {VOCAB_SIZE}"));
        }
        if self.max_patches > MAX_PATCHES {
            return bad(format!("max_patches {} exceeds {MAX_PATCHES}", self.max_patches));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return bad("variance_floor must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        ModelConfig::toy().validate().unwrap();
        ModelConfig::tiny().validate().unwrap();
    }

    #[test]
    fn rejects_indivisible_heads() {
        let c = ModelConfig {
            n_heads: 3,
            ..ModelConfig::toy()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = ModelConfig::toy();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{DecoderBlock, EncoderBlock, LayerNorm, Linear, Visit, INIT_STD};
use super::tensor::Tensor;
use super::{ModelConfig, ModelError};
use crate::patchify::PATCH_VALUES;

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub config: ModelConfig,
    pub patch_proj: Linear,
    pub mask_patch: Tensor,
    pub encoder: Vec<EncoderBlock>,
    pub enc_norm: LayerNorm,
    pub token_emb: Tensor,
    pub decoder: Vec<DecoderBlock>,
    pub dec_norm: LayerNorm,
    pub output: Linear,
    pub mae_decoder: Vec<EncoderBlock>,
    pub mae_norm: LayerNorm,
    pub pixel_head: Linear,
}

pub fn init_params(config: &ModelConfig) -> Result<Parameters, ModelError> {
    config.validate()?;
    let c = config;
    let d = c.d_model;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let rng = &mut rng;
    let patch_proj = Linear::new("patch_proj", d, PATCH_VALUES, rng);
    let mask_patch = Tensor::normal("mask_patch", &[d], INIT_STD, rng);
    let encoder = (0..c.n_encoder_layers)
        .map(|i| EncoderBlock::new(&format!("encoder.{i}"), d, c.n_heads, c.d_ff, rng))
        .collect();
    let token_emb = Tensor::normal("token_emb", &[c.vocab_size, d], INIT_STD, rng);
    let decoder = (0..c.n_decoder_layers)
        .map(|i| DecoderBlock::new(&format!("decoder.{i}"), d, c.n_heads, c.d_ff, rng))
        .collect();
    let output = Linear::new("output", c.vocab_size, d, rng);
    let mae_decoder = (0..c.n_mae_decoder_layers)
        .map(|i| EncoderBlock::new(&format!("mae_decoder.{i}"), d, c.n_heads, c.d_ff, rng))
        .collect();
    let pixel_head = Linear::new("pixel_head", PATCH_VALUES, d, rng);
    Ok(Parameters {
        config: c.clone(),
        patch_proj,
        mask_patch,
        encoder,
        enc_norm: LayerNorm::new("enc_norm", d),
        token_emb,
        decoder,
        dec_norm: LayerNorm::new("dec_norm", d),
        output,
        mae_decoder,
        mae_norm: LayerNorm::new("mae_norm", d),
        pixel_head,
    })
}

impl Parameters {
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        self.visit(&mut out);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        self.visit_mut(&mut out);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Parameters {
        let mut g = self.clone();
        g.tensors_mut().into_iter().for_each(|t| t.data.fill(0.0));
        g
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors().into_iter().find(|t| !t.is_finite()).map(|t| t.name.as_str())
    }
}

impl Visit for Parameters {
    fn visit<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        self.patch_proj.visit(out);
        out.push(&self.mask_patch);
        self.encoder.iter().for_each(|b| b.visit(out));
        self.enc_norm.visit(out);
        out.push(&self.token_emb);
        self.decoder.iter().for_each(|b| b.visit(out));
        self.dec_norm.visit(out);
        self.output.visit(out);
        self.mae_decoder.iter().for_each(|b| b.visit(out));
        self.mae_norm.visit(out);
        self.pixel_head.visit(out);
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.patch_proj.visit_mut(out);
        out.push(&mut self.mask_patch);
        self.encoder.iter_mut().for_each(|b| b.visit_mut(out));
        self.enc_norm.visit_mut(out);
        out.push(&mut self.token_emb);
        self.decoder.iter_mut().for_each(|b| b.visit_mut(out));
        self.dec_norm.visit_mut(out);
        self.output.visit_mut(out);
        self.mae_decoder.iter_mut().for_each(|b| b.visit_mut(out));
        self.mae_norm.visit_mut(out);
        self.pixel_head.visit_mut(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn same_seed_same_params() {
        let c = ModelConfig::tiny();
        assert_eq!(init_params(&c).unwrap(), init_params(&c).unwrap());
        let other = ModelConfig { seed: 1, ..c.clone() };
        assert_ne!(init_params(&c).unwrap().token_emb, init_params(&other).unwrap().token_emb);
    }

    #[test]
    fn shapes_and_init_rules() {
        let c = ModelConfig::tiny();
        let p = init_params(&c).unwrap();
        assert_eq!(p.output.w.shape, vec![c.vocab_size, c.d_model]);
        let names: HashSet<_> = p.tensors().iter().map(|t| t.name.clone()).collect();
        assert_eq!(names.len(), p.tensors().len(), "tensor names are unique");
        for t in p.tensors() {
            if t.name.ends_with(".scale") {
                assert!(t.data.iter().all(|&v| v == 1.0), "{}", t.name);
            }
            if t.name.ends_with(".bias") {
                assert!(t.data.iter().all(|&v| v == 0.0), "{}", t.name);
                assert!(!t.decay);
            }
        }
        assert!(p.tensors().iter().any(|t| t.name == "encoder.0.attn.q.weight"));
    }
}

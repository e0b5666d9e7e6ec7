use serde::{Deserialize, Serialize};

use super::params::Parameters;
use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub warmup_steps: u64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub adam_epsilon: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            learning_rate: 1e-4,
            warmup_steps: 10_000,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 1024,
            adam_epsilon: 1e-8,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidHyperparameters(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("betas must lie in (0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.adam_epsilon > 0.0) {
            return bad("weight_decay must be >= 0 and adam_epsilon > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }

    /// Linear warmup from zero, then constant.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 {
            self.learning_rate
        } else {
            self.learning_rate * (step as f64 / self.warmup_steps as f64).min(1.0)
        }
    }
}

/// AdamW with decoupled weight decay on tensors flagged `decay`.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub hyper: Hyperparameters,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(hyper: Hyperparameters, params: &Parameters) -> Result<Self, ModelError> {
        hyper.validate()?;
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Ok(AdamW {
            hyper,
            m: zeros.clone(),
            v: zeros,
        })
    }

    /// `step` counts from 1.
    pub fn step(&mut self, params: &mut Parameters, grads: &Parameters, step: u64) -> Result<(), ModelError> {
        if step == 0 {
            return Err(ModelError::InvalidHyperparameters("step index starts at 1".into()));
        }
        let h = &self.hyper;
        let lr = h.lr_at(step);
        let bc1 = 1.0 - h.beta1.powf(step as f64);
        let bc2 = 1.0 - h.beta2.powf(step as f64);
        let grads = grads.tensors();
        for (i, p) in params.tensors_mut().into_iter().enumerate() {
            let g = &grads[i].data;
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.data.len() {
                m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
                v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                if p.decay {
                    p.data[j] -= lr * h.weight_decay * p.data[j];
                }
                p.data[j] -= lr * mhat / (vhat.sqrt() + h.adam_epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};

    fn hyper(wd: f64, warmup: u64) -> Hyperparameters {
        Hyperparameters {
            learning_rate: 1e-3,
            warmup_steps: warmup,
            weight_decay: wd,
            ..Default::default()
        }
    }

    #[test]
    fn zero_grads_no_decay_is_identity() {
        let mut p = init_params(&ModelConfig::tiny()).unwrap();
        let before = p.clone();
        let g = p.zeros_like();
        let mut opt = AdamW::new(hyper(0.0, 0), &p).unwrap();
        opt.step(&mut p, &g, 1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn warmup_first_step() {
        let h = hyper(0.0, 10);
        assert!((h.lr_at(1) - 1e-4).abs() < 1e-18);
        assert_eq!(h.lr_at(10), 1e-3);
        assert_eq!(h.lr_at(50), 1e-3);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = init_params(&ModelConfig::tiny()).unwrap();
        let before = p.mask_patch.data[0];
        let mut g = p.zeros_like();
        g.mask_patch.data[0] = 0.3;
        let h = hyper(0.0, 4);
        let mut opt = AdamW::new(h.clone(), &p).unwrap();
        opt.step(&mut p, &g, 1).unwrap();
        // m̂ = g, v̂ = g², so the step is lr/W · g / (|g| + ε).
        let expected = before - (1e-3 / 4.0) * 0.3 / (0.3 + 1e-8);
        assert!((p.mask_patch.data[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn decay_skips_norms_and_biases() {
        let mut p = init_params(&ModelConfig::tiny()).unwrap();
        let before = p.clone();
        let g = p.zeros_like();
        let mut opt = AdamW::new(hyper(0.1, 0), &p).unwrap();
        opt.step(&mut p, &g, 1).unwrap();
        assert_eq!(p.enc_norm, before.enc_norm);
        assert_eq!(p.output.b, before.output.b);
        assert_ne!(p.output.w, before.output.w);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let h = Hyperparameters {
            beta1: 1.0,
            ..Default::default()
        };
        assert!(h.validate().is_err());
        let h = Hyperparameters {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(h.validate().is_err());
    }
}

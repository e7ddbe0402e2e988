use serde::{Deserialize, Serialize};

use super::{Gradients, PathwayModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer hyperparameters {self:?}")))
        }
    }
}

/// Adam with decoupled weight decay.
///
/// Each step first shrinks every trainable weight by `lr · weight_decay`,
/// then applies the bias-corrected adaptive update. A frozen encoder is left
/// untouched, decay included.
#[derive(Clone, Debug)]
pub struct AdamW<T> {
    config: AdamWConfig,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(config: AdamWConfig, model: &PathwayModel<T>) -> Result<Self> {
        config.validate()?;
        let lens = model.tensor_lens();
        Ok(Self {
            config,
            first: lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            second: lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
        })
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, model: &mut PathwayModel<T>, grads: &Gradients<T>) -> Result<()> {
        let grad_tensors = grads.tensors();
        if model.tensor_lens() != grad_tensors.iter().map(|g| g.len()).collect::<Vec<_>>()
            || grad_tensors.len() != self.first.len()
        {
            return Err(Error::Shape("gradient shapes do not match the model".into()));
        }
        for (t, g) in grad_tensors.iter().enumerate() {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient tensor {t} entry {i} is {} at optimizer step {}",
                    g[i],
                    self.step + 1
                )));
            }
        }

        self.step += 1;
        let c = &self.config;
        let lr = T::lit(c.lr);
        let decay = T::one() - T::lit(c.lr * c.weight_decay);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_minus_b1, one_minus_b2) = (T::one() - b1, T::one() - b2);
        let exp = i32::try_from(self.step).unwrap_or(i32::MAX);
        let correct1 = T::one() - b1.powi(exp);
        let correct2 = T::one() - b2.powi(exp);
        let eps = T::lit(c.eps);

        let skip = if model.frozen_encoder { 2 * model.encoder.len() } else { 0 };
        let params = model.tensors_mut();
        for (t, param) in params.into_iter().enumerate().skip(skip) {
            let g = grad_tensors[t];
            let (m, v) = (&mut self.first[t], &mut self.second[t]);
            for i in 0..param.len() {
                param[i] *= decay;
                m[i] = b1 * m[i] + one_minus_b1 * g[i];
                v[i] = b2 * v[i] + one_minus_b2 * g[i] * g[i];
                let m_hat = m[i] / correct1;
                let v_hat = v[i] / correct2;
                param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

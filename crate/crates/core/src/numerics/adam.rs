use serde::{Deserialize, Serialize};

use super::tape::{Gradients, ParamStore};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected ADAM moments for every parameter of a store.
#[derive(Clone, Debug)]
pub struct AdamState<R> {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Tensor<R>>,
    second: Vec<Tensor<R>>,
}

impl<R: Real> AdamState<R> {
    pub fn new(store: &ParamStore<R>, config: AdamConfig) -> Self {
        let zeros = || store.entries().iter().map(|e| Tensor::zeros(e.value.shape())).collect();
        AdamState {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Applies one update to every trainable parameter.
    pub fn step(&mut self, store: &mut ParamStore<R>, grads: &Gradients<R>) -> Result<()> {
        if grads.grads.len() != store.len() || self.first.len() != store.len() {
            return Err(Error::Length {
                what: "gradient list",
                got: grads.grads.len(),
                expected: store.len(),
            });
        }
        for (id, g) in store.ids().zip(&grads.grads) {
            if g.shape() != store.get(id).shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    left: store.get(id).shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let c = self.config;
        let b1 = R::from_f64_lossy(c.beta1);
        let b2 = R::from_f64_lossy(c.beta2);
        let one = R::one();
        let t = self.step as i32;
        let corr1 = R::from_f64_lossy(1.0 - c.beta1.powi(t));
        let corr2 = R::from_f64_lossy(1.0 - c.beta2.powi(t));
        let lr = R::from_f64_lossy(c.learning_rate);
        let eps = R::from_f64_lossy(c.epsilon);

        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !store.is_trainable(id) {
                continue;
            }
            let g = grads.get(id).data();
            let m = self.first[id.0].data_mut();
            let v = self.second[id.0].data_mut();
            let theta = store.get_mut(id).data_mut();
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

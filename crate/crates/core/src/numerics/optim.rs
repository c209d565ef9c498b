//! AdamW: Adam with weight decay applied directly to the parameters.

use serde::{Deserialize, Serialize};

use super::params::{GradStore, ParamStore};
use super::tensor::Real;
use super::NumericsError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One AdamW update of a single parameter array. `step` is the 1-based count
/// of updates this parameter has received, including this one.
///
/// The decay multiplies the parameter by `1 - lr * weight_decay` before the
/// adaptive step, independent of the gradient.
pub fn adamw_update<F: Real>(
    param: &mut [F],
    grad: &[F],
    first: &mut [F],
    second: &mut [F],
    step: u64,
    cfg: &AdamWConfig,
    lr: f64,
) {
    let b1 = F::lit(cfg.beta1);
    let b2 = F::lit(cfg.beta2);
    let one = F::one();
    let decay = F::lit(1.0 - lr * cfg.weight_decay);
    let bc1 = F::lit(1.0 - cfg.beta1.powi(step as i32));
    let bc2 = F::lit(1.0 - cfg.beta2.powi(step as i32));
    let lr = F::lit(lr);
    let eps = F::lit(cfg.eps);
    for i in 0..param.len() {
        let g = grad[i];
        first[i] = b1 * first[i] + (one - b1) * g;
        second[i] = b2 * second[i] + (one - b2) * g * g;
        let m_hat = first[i] / bc1;
        let v_hat = second[i] / bc2;
        param[i] = param[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[derive(Clone, Debug)]
struct Slot {
    step: u64,
    first: Vec<f32>,
    second: Vec<f32>,
}

/// Optimizer state for a [`ParamStore`]. Parameters without a gradient in a
/// step are left untouched, including their decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step_count: u64,
    slots: Vec<Option<Slot>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, n_params: usize) -> Self {
        Self {
            config,
            step_count: 0,
            slots: vec![None; n_params],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &GradStore,
    ) -> Result<(), NumericsError> {
        let lr = self.config.lr;
        self.step_with_lr(params, grads, lr)
    }

    /// Applies one update at learning rate `lr`. Nothing is modified if any
    /// gradient is non-finite.
    pub fn step_with_lr(
        &mut self,
        params: &mut ParamStore,
        grads: &GradStore,
        lr: f64,
    ) -> Result<(), NumericsError> {
        if grads.len() != params.len() || self.slots.len() != params.len() {
            return Err(NumericsError::Shape(format!(
                "optimizer tracks {} parameters, store has {}, gradients cover {}",
                self.slots.len(),
                params.len(),
                grads.len()
            )));
        }
        for id in grads.touched() {
            let g = grads.get(id).unwrap();
            if g.len() != params.value(id).numel() {
                return Err(NumericsError::Shape(format!(
                    "gradient for {} has {} elements, parameter has {}",
                    params.get(id).name,
                    g.len(),
                    params.value(id).numel()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NumericsError::NonFiniteGradient(
                    params.get(id).name.clone(),
                ));
            }
        }
        self.step_count += 1;
        for id in grads.touched() {
            let g = grads.get(id).unwrap();
            let n = g.len();
            let slot = self.slots[id.0].get_or_insert_with(|| Slot {
                step: 0,
                first: vec![0.0; n],
                second: vec![0.0; n],
            });
            slot.step += 1;
            adamw_update(
                params.value_mut(id).data_mut(),
                g,
                &mut slot.first,
                &mut slot.second,
                slot.step,
                &self.config,
                lr,
            );
        }
        Ok(())
    }
}

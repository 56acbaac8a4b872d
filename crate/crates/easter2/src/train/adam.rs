//! Adam with bias correction, applied to the model's named parameters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::GradStore;
use crate::model::Model;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates mirroring the parameter set, plus the
/// step counter driving bias correction.
pub struct AdamState {
    pub hyper: AdamParams,
    pub step_count: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(hyper: AdamParams) -> AdamState {
        AdamState {
            hyper,
            step_count: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn moments(&self) -> impl Iterator<Item = (&String, &Tensor, &Tensor)> {
        self.m
            .iter()
            .map(move |(k, m)| (k, m, self.v.get(k).expect("paired moment")))
    }

    pub fn insert_moments(&mut self, name: String, m: Tensor, v: Tensor) {
        self.v.insert(name.clone(), v);
        self.m.insert(name, m);
    }

    /// Update a single tensor in place.
    fn update_tensor(&mut self, name: &str, param: &mut Tensor, grad: &Tensor) -> Result<()> {
        if grad.shape() != param.shape() {
            return Err(Error::shape(format!(
                "adam: gradient shape {:?} does not match parameter {name} {:?}",
                grad.shape(),
                param.shape()
            )));
        }
        let m = self
            .m
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(param.shape()));
        let v = self
            .v
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(param.shape()));
        let h = &self.hyper;
        let bc1 = 1.0 - (h.beta1 as f64).powi(self.step_count as i32);
        let bc2 = 1.0 - (h.beta2 as f64).powi(self.step_count as i32);
        for i in 0..param.numel() {
            let g = grad.data()[i];
            let mi = h.beta1 * m.data()[i] + (1.0 - h.beta1) * g;
            let vi = h.beta2 * v.data()[i] + (1.0 - h.beta2) * g * g;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let m_hat = mi as f64 / bc1;
            let v_hat = vi as f64 / bc2;
            param.data_mut()[i] -=
                (h.lr as f64 * m_hat / (v_hat.sqrt() + h.epsilon as f64)) as f32;
        }
        param.debug_assert_finite(name);
        Ok(())
    }
}

/// One bias-corrected Adam step over every parameter that has a gradient.
pub fn adam_step(model: &mut Model, grads: &GradStore, state: &mut AdamState) -> Result<()> {
    state.step_count += 1;
    let mut result = Ok(());
    model.visit_params_mut(&mut |name, param| {
        if result.is_err() {
            return;
        }
        if let Some(grad) = grads.get(&name) {
            if let Err(e) = state.update_tensor(&name, param, grad) {
                result = Err(e);
            }
        }
    });
    result
}

//! Composite blocks of the network and the normalization switch they share.

pub mod block;
pub mod se;

pub use block::{BlockA, BlockACtx, BlockB, BlockBCtx, BlockC, BlockCCtx, ResProj, SubUnit};
pub use se::{se_forward, se_forward_train, se_vjp, SeCtx, SeGrads, SeParams};

use std::collections::BTreeMap;

use crate::error::Result;
use crate::numerics::{
    batch_norm, batch_norm_train, batch_norm_vjp, layer_norm_train, layer_norm_vjp, BatchNormCtx,
    BatchNormState, LayerNormCtx, Mode,
};
use crate::tensor::Tensor;

/// Whole-model normalization choice, applied uniformly to every norm site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Batch,
    Layer,
    None,
}

/// One normalization site. `None` sites own no parameters at all.
#[derive(Debug, Clone)]
pub enum Norm {
    Batch {
        gamma: Tensor,
        beta: Tensor,
        state: BatchNormState,
    },
    Layer {
        gamma: Tensor,
        beta: Tensor,
    },
    None,
}

pub enum NormCtx {
    Batch(BatchNormCtx),
    Layer(LayerNormCtx),
    None,
}

impl Norm {
    pub fn new(kind: NormKind, channels: usize) -> Norm {
        match kind {
            NormKind::Batch => Norm::Batch {
                gamma: Tensor::full(&[channels], 1.0),
                beta: Tensor::zeros(&[channels]),
                state: BatchNormState::new(channels),
            },
            NormKind::Layer => Norm::Layer {
                gamma: Tensor::full(&[channels], 1.0),
                beta: Tensor::zeros(&[channels]),
            },
            NormKind::None => Norm::None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            Norm::Batch { gamma, beta, state } => batch_norm(x, gamma, beta, state, mode),
            Norm::Layer { gamma, beta } => {
                layer_norm_train(x, gamma, beta).map(|(y, _)| y)
            }
            Norm::None => Ok(x.clone()),
        }
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, NormCtx)> {
        match self {
            Norm::Batch { gamma, beta, state } => {
                let (y, ctx) = batch_norm_train(x, gamma, beta, state)?;
                Ok((y, NormCtx::Batch(ctx)))
            }
            Norm::Layer { gamma, beta } => {
                let (y, ctx) = layer_norm_train(x, gamma, beta)?;
                Ok((y, NormCtx::Layer(ctx)))
            }
            Norm::None => Ok((x.clone(), NormCtx::None)),
        }
    }

    /// Returns grad_input; writes gamma/beta grads under `prefix` when present.
    pub fn vjp(&self, ctx: &NormCtx, upstream: &Tensor, prefix: &str, grads: &mut GradStore) -> Tensor {
        match (self, ctx) {
            (Norm::Batch { .. }, NormCtx::Batch(c)) => {
                let (gx, ggamma, gbeta) = batch_norm_vjp(c, upstream);
                grads.add(format!("{prefix}.gamma"), ggamma);
                grads.add(format!("{prefix}.beta"), gbeta);
                gx
            }
            (Norm::Layer { .. }, NormCtx::Layer(c)) => {
                let (gx, ggamma, gbeta) = layer_norm_vjp(c, upstream);
                grads.add(format!("{prefix}.gamma"), ggamma);
                grads.add(format!("{prefix}.beta"), gbeta);
                gx
            }
            (Norm::None, NormCtx::None) => upstream.clone(),
            _ => panic!("norm context does not match norm kind"),
        }
    }

    pub fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        match self {
            Norm::Batch { gamma, beta, .. } | Norm::Layer { gamma, beta } => {
                f(format!("{prefix}.gamma"), gamma);
                f(format!("{prefix}.beta"), beta);
            }
            Norm::None => {}
        }
    }

    pub fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        match self {
            Norm::Batch { gamma, beta, .. } | Norm::Layer { gamma, beta } => {
                f(format!("{prefix}.gamma"), gamma);
                f(format!("{prefix}.beta"), beta);
            }
            Norm::None => {}
        }
    }

    /// Running statistics (state, not parameters).
    pub fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(String, &[f32])) {
        if let Norm::Batch { state, .. } = self {
            f(format!("{prefix}.running_mean"), &state.running_mean);
            f(format!("{prefix}.running_var"), &state.running_var);
        }
    }

    pub fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Vec<f32>)) {
        if let Norm::Batch { state, .. } = self {
            f(format!("{prefix}.running_mean"), &mut state.running_mean);
            f(format!("{prefix}.running_var"), &mut state.running_var);
        }
    }
}

/// Named gradient set produced by a backward pass. Accumulates on collision,
/// which is how shared residual sources pick up multiple contributions.
#[derive(Default)]
pub struct GradStore {
    map: BTreeMap<String, Tensor>,
}

impl GradStore {
    pub fn new() -> GradStore {
        GradStore::default()
    }

    pub fn add(&mut self, name: String, grad: Tensor) {
        match self.map.entry(name) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(grad);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                e.get_mut().add_assign(&grad);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    /// L2 norm over every stored gradient, accumulated in f64.
    pub fn global_norm(&self) -> f64 {
        self.map
            .values()
            .flat_map(|t| t.data().iter())
            .map(|&v| v as f64 * v as f64)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f32) {
        for t in self.map.values_mut() {
            t.scale(s);
        }
    }
}

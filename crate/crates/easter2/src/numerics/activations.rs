//! Elementwise activations with VJPs.

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Saved output; both derivatives are recoverable from it alone.
pub struct ActivationCtx {
    kind: Activation,
    output: Tensor,
}

pub fn activation(kind: Activation, input: &Tensor) -> Tensor {
    let out = match kind {
        Activation::Relu => input.map(|v| v.max(0.0)),
        Activation::Sigmoid => input.map(|v| 1.0 / (1.0 + (-v).exp())),
    };
    out.debug_assert_finite("activation output");
    out
}

pub fn activation_train(kind: Activation, input: &Tensor) -> (Tensor, ActivationCtx) {
    let output = activation(kind, input);
    let ctx = ActivationCtx {
        kind,
        output: output.clone(),
    };
    (output, ctx)
}

pub fn activation_vjp(ctx: &ActivationCtx, upstream: &Tensor) -> Tensor {
    assert_eq!(upstream.shape(), ctx.output.shape(), "activation_vjp shape");
    let mut gx = upstream.clone();
    match ctx.kind {
        Activation::Relu => {
            for (g, &y) in gx.data_mut().iter_mut().zip(ctx.output.data()) {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        Activation::Sigmoid => {
            for (g, &y) in gx.data_mut().iter_mut().zip(ctx.output.data()) {
                *g *= y * (1.0 - y);
            }
        }
    }
    gx.debug_assert_finite("activation grad");
    gx
}

//! 1D squeeze-and-excitation.
//!
//! Local features are pooled (length-masked) into one context vector per
//! sample, pushed through a bottleneck of two fully-connected layers, and
//! the sigmoid gate is broadcast back over the time axis by elementwise
//! multiplication.

use crate::error::{Error, Result};
use crate::numerics::{
    activation_train, activation_vjp, fully_connected_train, fully_connected_vjp,
    global_average_pool_train, global_average_pool_vjp, Activation, ActivationCtx,
    FullyConnectedCtx, PoolCtx,
};
use crate::tensor::Tensor;

/// Bottleneck parameters: `C -> C/8 -> C` (floor division, minimum 1).
#[derive(Debug, Clone)]
pub struct SeParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl SeParams {
    pub fn bottleneck_width(channels: usize) -> usize {
        (channels / 8).max(1)
    }

    pub fn zeros(channels: usize) -> SeParams {
        let mid = Self::bottleneck_width(channels);
        SeParams {
            w1: Tensor::zeros(&[channels, mid]),
            b1: Tensor::zeros(&[mid]),
            w2: Tensor::zeros(&[mid, channels]),
            b2: Tensor::zeros(&[channels]),
        }
    }

    pub fn channels(&self) -> usize {
        self.w1.dim(0)
    }

    pub fn param_count(&self) -> usize {
        self.w1.numel() + self.b1.numel() + self.w2.numel() + self.b2.numel()
    }
}

/// Saved context for [`se_vjp`].
pub struct SeCtx {
    input: Tensor,
    pool: PoolCtx,
    fc1: FullyConnectedCtx,
    act1: ActivationCtx,
    fc2: FullyConnectedCtx,
    sig: ActivationCtx,
    context: Tensor, // [B, C] sigmoid gates
}

/// Gradients for the four bottleneck tensors.
pub struct SeGrads {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

fn check(features: &Tensor, params: &SeParams) -> Result<()> {
    if features.rank() != 3 {
        return Err(Error::shape(format!(
            "se_forward input must be [B,T,C], got {:?}",
            features.shape()
        )));
    }
    if features.dim(2) != params.channels() {
        return Err(Error::shape(format!(
            "se_forward channels {} do not match params {}",
            features.dim(2),
            params.channels()
        )));
    }
    Ok(())
}

fn scale_by_context(features: &Tensor, context: &Tensor) -> Tensor {
    let (b, t, c) = (features.dim(0), features.dim(1), features.dim(2));
    let mut out = features.clone();
    let o = out.data_mut();
    let ctx = context.data();
    for bi in 0..b {
        let gate = &ctx[bi * c..][..c];
        for ti in 0..t {
            let row = &mut o[(bi * t + ti) * c..][..c];
            for (v, &g) in row.iter_mut().zip(gate.iter()) {
                *v *= g;
            }
        }
    }
    out
}

pub fn se_forward(features: &Tensor, params: &SeParams, true_lengths: &[usize]) -> Result<Tensor> {
    se_forward_train(features, params, true_lengths).map(|(y, _)| y)
}

pub fn se_forward_train(
    features: &Tensor,
    params: &SeParams,
    true_lengths: &[usize],
) -> Result<(Tensor, SeCtx)> {
    check(features, params)?;
    let (pooled, pool) = global_average_pool_train(features, true_lengths)?;
    let (h1, fc1) = fully_connected_train(&pooled, &params.w1, &params.b1)?;
    let (a1, act1) = activation_train(Activation::Relu, &h1);
    let (h2, fc2) = fully_connected_train(&a1, &params.w2, &params.b2)?;
    let (context, sig) = activation_train(Activation::Sigmoid, &h2);
    let out = scale_by_context(features, &context);
    out.debug_assert_finite("se_forward output");
    Ok((
        out,
        SeCtx {
            input: features.clone(),
            pool,
            fc1,
            act1,
            fc2,
            sig,
            context,
        },
    ))
}

/// VJP through both paths: the broadcast multiplication and the pooled
/// bottleneck chain.
pub fn se_vjp(ctx: &SeCtx, upstream: &Tensor) -> (Tensor, SeGrads) {
    let (b, t, c) = (ctx.input.dim(0), ctx.input.dim(1), ctx.input.dim(2));
    assert_eq!(upstream.shape(), [b, t, c], "se_vjp upstream shape");

    // direct path: d(out)/d(features) = context
    let mut gx = scale_by_context(upstream, &ctx.context);

    // gate path: dL/d(context[b,c]) = sum_t g[b,t,c] * x[b,t,c]
    let mut gctx = Tensor::zeros(&[b, c]);
    {
        let gc = gctx.data_mut();
        let g = upstream.data();
        let x = ctx.input.data();
        for bi in 0..b {
            for ti in 0..t {
                let off = (bi * t + ti) * c;
                for ci in 0..c {
                    gc[bi * c + ci] += g[off + ci] * x[off + ci];
                }
            }
        }
    }

    let gh2 = activation_vjp(&ctx.sig, &gctx);
    let (ga1, gw2, gb2) = fully_connected_vjp(&ctx.fc2, &gh2);
    let gh1 = activation_vjp(&ctx.act1, &ga1);
    let (gpool, gw1, gb1) = fully_connected_vjp(&ctx.fc1, &gh1);
    let gx_pool = global_average_pool_vjp(&ctx.pool, &gpool);
    gx.add_assign(&gx_pool);
    gx.debug_assert_finite("se grad_input");
    (
        gx,
        SeGrads {
            w1: gw1,
            b1: gb1,
            w2: gw2,
            b2: gb2,
        },
    )
}

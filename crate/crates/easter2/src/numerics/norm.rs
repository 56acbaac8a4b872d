//! Batch and layer normalization with their VJPs.
//!
//! Batch norm normalizes each channel over the `B` and `T` axes with biased
//! variance; layer norm normalizes each `[b, t]` frame over its channels.
//! Both apply a per-channel affine (gamma, beta).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Execution mode shared by every stateful op.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Running statistics owned by one batch-norm site.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub momentum: f32,
    pub epsilon: f32,
}

/// Running stats update rule: `(1 - momentum) * running + momentum * batch`.
pub const DEFAULT_BN_MOMENTUM: f32 = 0.1;
/// Fixed for checkpoint portability.
pub const DEFAULT_BN_EPSILON: f32 = 1e-3;

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: DEFAULT_BN_MOMENTUM,
            epsilon: DEFAULT_BN_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

/// Saved context for [`batch_norm_vjp`] (train mode only).
pub struct BatchNormCtx {
    xhat: Tensor,
    inv_std: Vec<f32>,
    gamma: Tensor,
}

fn check_btc(input: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(usize, usize, usize)> {
    if input.rank() != 3 {
        return Err(Error::shape(format!(
            "normalization input must be [B,T,C], got {:?}",
            input.shape()
        )));
    }
    let c = input.dim(2);
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(format!(
            "gamma/beta must be [{c}], got {:?}/{:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    Ok((input.dim(0), input.dim(1), c))
}

fn normalize_per_channel(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    mean: &[f32],
    inv_std: &[f32],
) -> (Tensor, Tensor) {
    let (b, t, c) = (input.dim(0), input.dim(1), input.dim(2));
    let mut xhat = Tensor::zeros(&[b, t, c]);
    let mut out = Tensor::zeros(&[b, t, c]);
    let x = input.data();
    let (g, bt) = (gamma.data(), beta.data());
    let (xh, o) = (xhat.data_mut(), out.data_mut());
    for row in 0..b * t {
        for ci in 0..c {
            let idx = row * c + ci;
            let h = (x[idx] - mean[ci]) * inv_std[ci];
            xh[idx] = h;
            o[idx] = g[ci] * h + bt[ci];
        }
    }
    (out, xhat)
}

fn batch_stats(input: &Tensor) -> (Vec<f32>, Vec<f32>) {
    let (b, t, c) = (input.dim(0), input.dim(1), input.dim(2));
    let n = (b * t) as f64;
    let x = input.data();
    let mut mean = vec![0.0f64; c];
    let mut var = vec![0.0f64; c];
    for row in 0..b * t {
        for ci in 0..c {
            mean[ci] += x[row * c + ci] as f64;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    for row in 0..b * t {
        for ci in 0..c {
            let d = x[row * c + ci] as f64 - mean[ci];
            var[ci] += d * d;
        }
    }
    for v in &mut var {
        *v /= n; // biased variance
    }
    (
        mean.iter().map(|&m| m as f32).collect(),
        var.iter().map(|&v| v as f32).collect(),
    )
}

/// Batch normalization forward pass.
///
/// Train mode draws statistics from the batch and updates the running stats;
/// infer mode depends only on the running stats.
pub fn batch_norm(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    state: &mut BatchNormState,
    mode: Mode,
) -> Result<Tensor> {
    match mode {
        Mode::Train => batch_norm_train(input, gamma, beta, state).map(|(y, _)| y),
        Mode::Infer => {
            let (_, _, c) = check_btc(input, gamma, beta)?;
            if state.channels() != c {
                return Err(Error::shape(format!(
                    "batch-norm state has {} channels, input has {c}",
                    state.channels()
                )));
            }
            let inv_std: Vec<f32> = state
                .running_var
                .iter()
                .map(|&v| 1.0 / (v + state.epsilon).sqrt())
                .collect();
            let (out, _) = normalize_per_channel(input, gamma, beta, &state.running_mean, &inv_std);
            out.debug_assert_finite("batch_norm infer output");
            Ok(out)
        }
    }
}

/// Train-mode batch norm, keeping the VJP context.
pub fn batch_norm_train(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    state: &mut BatchNormState,
) -> Result<(Tensor, BatchNormCtx)> {
    let (b, t, c) = check_btc(input, gamma, beta)?;
    if state.channels() != c {
        return Err(Error::shape(format!(
            "batch-norm state has {} channels, input has {c}",
            state.channels()
        )));
    }
    if b * t < 2 {
        return Err(Error::config(format!(
            "batch norm needs B*T >= 2 in train mode, got {}",
            b * t
        )));
    }
    let (mean, var) = batch_stats(input);
    let inv_std: Vec<f32> = var
        .iter()
        .map(|&v| 1.0 / (v + state.epsilon).sqrt())
        .collect();
    let (out, xhat) = normalize_per_channel(input, gamma, beta, &mean, &inv_std);

    let m = state.momentum;
    for ci in 0..c {
        state.running_mean[ci] = (1.0 - m) * state.running_mean[ci] + m * mean[ci];
        state.running_var[ci] = (1.0 - m) * state.running_var[ci] + m * var[ci];
    }

    out.debug_assert_finite("batch_norm train output");
    Ok((
        out,
        BatchNormCtx {
            xhat,
            inv_std,
            gamma: gamma.clone(),
        },
    ))
}

/// VJP of train-mode batch norm: gradients w.r.t. input, gamma, beta.
pub fn batch_norm_vjp(ctx: &BatchNormCtx, upstream: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (b, t, c) = (ctx.xhat.dim(0), ctx.xhat.dim(1), ctx.xhat.dim(2));
    assert_eq!(upstream.shape(), ctx.xhat.shape(), "batch_norm_vjp shape");
    let n = (b * t) as f64;
    let g = upstream.data();
    let xh = ctx.xhat.data();

    let mut sum_g = vec![0.0f64; c];
    let mut sum_gx = vec![0.0f64; c];
    for row in 0..b * t {
        for ci in 0..c {
            let idx = row * c + ci;
            sum_g[ci] += g[idx] as f64;
            sum_gx[ci] += g[idx] as f64 * xh[idx] as f64;
        }
    }

    let mut gx = Tensor::zeros(&[b, t, c]);
    let gxd = gx.data_mut();
    for row in 0..b * t {
        for ci in 0..c {
            let idx = row * c + ci;
            let centered =
                g[idx] as f64 - sum_g[ci] / n - xh[idx] as f64 * (sum_gx[ci] / n);
            gxd[idx] = (ctx.gamma.data()[ci] as f64 * ctx.inv_std[ci] as f64 * centered) as f32;
        }
    }
    let ggamma = Tensor::from_vec(&[c], sum_gx.iter().map(|&v| v as f32).collect());
    let gbeta = Tensor::from_vec(&[c], sum_g.iter().map(|&v| v as f32).collect());
    gx.debug_assert_finite("batch_norm grad_input");
    (gx, ggamma, gbeta)
}

/// Saved context for [`layer_norm_vjp`].
pub struct LayerNormCtx {
    xhat: Tensor,
    inv_std: Vec<f32>, // one per [b, t] frame
    gamma: Tensor,
    epsilon: f32,
}

/// Layer normalization: each `[b, t]` frame normalized over its channels.
pub fn layer_norm(input: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    layer_norm_train(input, gamma, beta).map(|(y, _)| y)
}

/// Layer norm keeping the VJP context. Same math in train and infer.
pub fn layer_norm_train(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
) -> Result<(Tensor, LayerNormCtx)> {
    let (b, t, c) = check_btc(input, gamma, beta)?;
    let epsilon = DEFAULT_BN_EPSILON;
    let x = input.data();
    let mut xhat = Tensor::zeros(&[b, t, c]);
    let mut out = Tensor::zeros(&[b, t, c]);
    let mut inv_std = vec![0.0f32; b * t];
    {
        let (xh, o) = (xhat.data_mut(), out.data_mut());
        for row in 0..b * t {
            let frame = &x[row * c..][..c];
            let mean = frame.iter().map(|&v| v as f64).sum::<f64>() / c as f64;
            let var = frame
                .iter()
                .map(|&v| {
                    let d = v as f64 - mean;
                    d * d
                })
                .sum::<f64>()
                / c as f64;
            let is = 1.0 / (var + epsilon as f64).sqrt();
            inv_std[row] = is as f32;
            for ci in 0..c {
                let h = ((frame[ci] as f64 - mean) * is) as f32;
                xh[row * c + ci] = h;
                o[row * c + ci] = gamma.data()[ci] * h + beta.data()[ci];
            }
        }
    }
    out.debug_assert_finite("layer_norm output");
    Ok((
        out,
        LayerNormCtx {
            xhat,
            inv_std,
            gamma: gamma.clone(),
            epsilon,
        },
    ))
}

/// VJP of layer norm: gradients w.r.t. input, gamma, beta.
pub fn layer_norm_vjp(ctx: &LayerNormCtx, upstream: &Tensor) -> (Tensor, Tensor, Tensor) {
    let _ = ctx.epsilon;
    let (b, t, c) = (ctx.xhat.dim(0), ctx.xhat.dim(1), ctx.xhat.dim(2));
    assert_eq!(upstream.shape(), ctx.xhat.shape(), "layer_norm_vjp shape");
    let g = upstream.data();
    let xh = ctx.xhat.data();
    let gm = ctx.gamma.data();

    let mut gx = Tensor::zeros(&[b, t, c]);
    let mut ggamma = vec![0.0f64; c];
    let mut gbeta = vec![0.0f64; c];
    let gxd = gx.data_mut();
    for row in 0..b * t {
        let mut sum_g = 0.0f64;
        let mut sum_gx = 0.0f64;
        for ci in 0..c {
            let idx = row * c + ci;
            let gg = g[idx] as f64 * gm[ci] as f64;
            sum_g += gg;
            sum_gx += gg * xh[idx] as f64;
            ggamma[ci] += g[idx] as f64 * xh[idx] as f64;
            gbeta[ci] += g[idx] as f64;
        }
        let n = c as f64;
        for ci in 0..c {
            let idx = row * c + ci;
            let gg = g[idx] as f64 * gm[ci] as f64;
            gxd[idx] =
                (ctx.inv_std[row] as f64 * (gg - sum_g / n - xh[idx] as f64 * (sum_gx / n))) as f32;
        }
    }
    gx.debug_assert_finite("layer_norm grad_input");
    (
        gx,
        Tensor::from_vec(&[c], ggamma.iter().map(|&v| v as f32).collect()),
        Tensor::from_vec(&[c], gbeta.iter().map(|&v| v as f32).collect()),
    )
}

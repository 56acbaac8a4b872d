//! Log-softmax over the last axis, numerically stabilized.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Saved log-probabilities for [`log_softmax_vjp`].
pub struct LogSoftmaxCtx {
    output: Tensor,
}

/// `y[.., v] = x[.., v] - logsumexp(x[.., :])`, computed with a subtracted
/// row max and an f64 accumulator so each row exponentiates and sums to 1
/// within 1e-6.
pub fn log_softmax(input: &Tensor) -> Result<Tensor> {
    if input.rank() == 0 || *input.shape().last().unwrap() == 0 {
        return Err(Error::shape(
            "log_softmax needs a non-empty last axis",
        ));
    }
    let v = *input.shape().last().unwrap();
    let rows = input.numel() / v;
    let mut out = input.clone();
    let o = out.data_mut();
    for r in 0..rows {
        let row = &mut o[r * v..][..v];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let sum: f64 = row.iter().map(|&x| ((x - max) as f64).exp()).sum();
        let log_z = max as f64 + sum.ln();
        for x in row.iter_mut() {
            *x = (*x as f64 - log_z) as f32;
        }
    }
    out.debug_assert_finite("log_softmax output");
    Ok(out)
}

pub fn log_softmax_train(input: &Tensor) -> Result<(Tensor, LogSoftmaxCtx)> {
    let output = log_softmax(input)?;
    let ctx = LogSoftmaxCtx {
        output: output.clone(),
    };
    Ok((output, ctx))
}

/// VJP: `gx = g - softmax * sum(g)` per row.
pub fn log_softmax_vjp(ctx: &LogSoftmaxCtx, upstream: &Tensor) -> Tensor {
    assert_eq!(upstream.shape(), ctx.output.shape(), "log_softmax_vjp shape");
    let v = *ctx.output.shape().last().unwrap();
    let rows = ctx.output.numel() / v;
    let mut gx = upstream.clone();
    let g = gx.data_mut();
    let y = ctx.output.data();
    for r in 0..rows {
        let sum: f64 = g[r * v..][..v].iter().map(|&x| x as f64).sum();
        for i in 0..v {
            let idx = r * v + i;
            g[idx] = (g[idx] as f64 - (y[idx] as f64).exp() * sum) as f32;
        }
    }
    gx.debug_assert_finite("log_softmax grad");
    gx
}

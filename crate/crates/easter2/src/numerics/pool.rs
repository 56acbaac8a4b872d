//! Length-masked global average pooling over the time axis.
//!
//! Padding frames are excluded: each sample is averaged over its first
//! `true_lengths[b]` frames only, so batch composition cannot leak into a
//! sample's pooled statistics.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Saved context for [`global_average_pool_vjp`].
pub struct PoolCtx {
    input_shape: Vec<usize>,
    lengths: Vec<usize>,
}

pub fn global_average_pool(input: &Tensor, true_lengths: &[usize]) -> Result<Tensor> {
    if input.rank() != 3 {
        return Err(Error::shape(format!(
            "global_average_pool input must be [B,T,C], got {:?}",
            input.shape()
        )));
    }
    let (b, t, c) = (input.dim(0), input.dim(1), input.dim(2));
    if true_lengths.len() != b {
        return Err(Error::shape(format!(
            "expected {b} lengths, got {}",
            true_lengths.len()
        )));
    }
    for (bi, &len) in true_lengths.iter().enumerate() {
        if len == 0 || len > t {
            return Err(Error::shape(format!(
                "length {len} of sample {bi} outside 1..={t}"
            )));
        }
    }
    let mut out = Tensor::zeros(&[b, c]);
    let x = input.data();
    let o = out.data_mut();
    for bi in 0..b {
        let len = true_lengths[bi];
        let mut acc = vec![0.0f64; c];
        for ti in 0..len {
            let row = &x[(bi * t + ti) * c..][..c];
            for (a, &v) in acc.iter_mut().zip(row.iter()) {
                *a += v as f64;
            }
        }
        for (ci, a) in acc.iter().enumerate() {
            o[bi * c + ci] = (a / len as f64) as f32;
        }
    }
    out.debug_assert_finite("global_average_pool output");
    Ok(out)
}

pub fn global_average_pool_train(
    input: &Tensor,
    true_lengths: &[usize],
) -> Result<(Tensor, PoolCtx)> {
    let out = global_average_pool(input, true_lengths)?;
    Ok((
        out,
        PoolCtx {
            input_shape: input.shape().to_vec(),
            lengths: true_lengths.to_vec(),
        },
    ))
}

/// VJP: distributes `1/len` of the upstream to each contributing frame.
pub fn global_average_pool_vjp(ctx: &PoolCtx, upstream: &Tensor) -> Tensor {
    let (b, t, c) = (ctx.input_shape[0], ctx.input_shape[1], ctx.input_shape[2]);
    assert_eq!(upstream.shape(), [b, c], "global_average_pool_vjp shape");
    let mut gx = Tensor::zeros(&[b, t, c]);
    let g = upstream.data();
    let gxd = gx.data_mut();
    for bi in 0..b {
        let len = ctx.lengths[bi];
        let inv = 1.0 / len as f32;
        for ti in 0..len {
            let row = &mut gxd[(bi * t + ti) * c..][..c];
            for (rv, &gv) in row.iter_mut().zip(&g[bi * c..][..c]) {
                *rv = gv * inv;
            }
        }
    }
    gx
}

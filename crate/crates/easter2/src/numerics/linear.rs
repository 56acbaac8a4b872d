//! Affine map on the last axis: `y = x W + b`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Saved context for [`fully_connected_vjp`].
pub struct FullyConnectedCtx {
    input: Tensor,
    weight: Tensor,
}

fn check(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize)> {
    if weight.rank() != 2 {
        return Err(Error::shape(format!(
            "fully_connected weight must be [Din,Dout], got {:?}",
            weight.shape()
        )));
    }
    let (din, dout) = (weight.dim(0), weight.dim(1));
    if input.rank() == 0 || *input.shape().last().unwrap() != din {
        return Err(Error::shape(format!(
            "fully_connected input last axis {:?} does not match Din {din}",
            input.shape()
        )));
    }
    if bias.shape() != [dout] {
        return Err(Error::shape(format!(
            "fully_connected bias shape {:?} does not match Dout {dout}",
            bias.shape()
        )));
    }
    Ok((input.numel() / din, din, dout))
}

pub fn fully_connected(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (rows, din, dout) = check(input, weight, bias)?;
    let mut out_shape = input.shape().to_vec();
    *out_shape.last_mut().unwrap() = dout;
    let mut out = Tensor::zeros(&out_shape);
    let (x, w, b) = (input.data(), weight.data(), bias.data());
    let o = out.data_mut();
    for r in 0..rows {
        let orow = &mut o[r * dout..][..dout];
        orow.copy_from_slice(b);
        let xrow = &x[r * din..][..din];
        for (ci, &xv) in xrow.iter().enumerate() {
            let wrow = &w[ci * dout..][..dout];
            for (ov, &wv) in orow.iter_mut().zip(wrow.iter()) {
                *ov += xv * wv;
            }
        }
    }
    out.debug_assert_finite("fully_connected output");
    Ok(out)
}

pub fn fully_connected_train(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
) -> Result<(Tensor, FullyConnectedCtx)> {
    let out = fully_connected(input, weight, bias)?;
    Ok((
        out,
        FullyConnectedCtx {
            input: input.clone(),
            weight: weight.clone(),
        },
    ))
}

/// VJP: gradients w.r.t. input, weight and bias.
pub fn fully_connected_vjp(ctx: &FullyConnectedCtx, upstream: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (din, dout) = (ctx.weight.dim(0), ctx.weight.dim(1));
    let rows = ctx.input.numel() / din;
    assert_eq!(
        upstream.numel(),
        rows * dout,
        "fully_connected_vjp upstream shape"
    );

    let mut gx = Tensor::zeros(ctx.input.shape());
    let mut gw = Tensor::zeros(&[din, dout]);
    let mut gb = Tensor::zeros(&[dout]);
    let (x, w, g) = (ctx.input.data(), ctx.weight.data(), upstream.data());
    let (gxd, gwd, gbd) = (gx.data_mut(), gw.data_mut(), gb.data_mut());

    for r in 0..rows {
        let grow = &g[r * dout..][..dout];
        for (co, &gv) in grow.iter().enumerate() {
            gbd[co] += gv;
        }
        let xrow = &x[r * din..][..din];
        let gxrow = &mut gxd[r * din..][..din];
        for ci in 0..din {
            let wrow = &w[ci * dout..][..dout];
            let gwrow = &mut gwd[ci * dout..][..dout];
            let xv = xrow[ci];
            let mut acc = 0.0f32;
            for co in 0..dout {
                gwrow[co] += xv * grow[co];
                acc += wrow[co] * grow[co];
            }
            gxrow[ci] += acc;
        }
    }
    (gx, gw, gb)
}

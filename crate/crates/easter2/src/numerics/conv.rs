//! 1D convolution along the width/time axis with same-padding semantics.
//!
//! Layouts: input `[B, T, Cin]`, weight `[K, Cin, Cout]`, bias `[Cout]`,
//! output `[B, T', Cout]` with `T' = ceil(T / stride)`. Padding is zero
//! outside bounds with `left_pad = floor(((T'-1)*stride + (K-1)*dilation + 1 - T) / 2)`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Saved forward context for [`conv1d_vjp`].
pub struct Conv1dCtx {
    input: Tensor,
    weight: Tensor,
    stride: usize,
    dilation: usize,
    left_pad: i64,
    out_t: usize,
}

/// Output length under the same-padding regime.
pub fn conv1d_out_len(t: usize, stride: usize) -> usize {
    t.div_ceil(stride)
}

fn left_pad(t: usize, out_t: usize, k: usize, stride: usize, dilation: usize) -> i64 {
    let total =
        (out_t as i64 - 1) * stride as i64 + (k as i64 - 1) * dilation as i64 + 1 - t as i64;
    total.div_euclid(2)
}

fn check_args(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    dilation: usize,
) -> Result<()> {
    if input.rank() != 3 {
        return Err(Error::shape(format!(
            "conv1d input must be [B,T,C], got {:?}",
            input.shape()
        )));
    }
    if weight.rank() != 3 {
        return Err(Error::shape(format!(
            "conv1d weight must be [K,Cin,Cout], got {:?}",
            weight.shape()
        )));
    }
    if input.dim(1) == 0 {
        return Err(Error::shape("conv1d input has zero-length sequence"));
    }
    if weight.dim(0) == 0 {
        return Err(Error::shape("conv1d kernel size must be >= 1"));
    }
    if input.dim(2) != weight.dim(1) {
        return Err(Error::shape(format!(
            "conv1d input channels {} do not match weight Cin {}",
            input.dim(2),
            weight.dim(1)
        )));
    }
    if bias.shape() != [weight.dim(2)] {
        return Err(Error::shape(format!(
            "conv1d bias shape {:?} does not match Cout {}",
            bias.shape(),
            weight.dim(2)
        )));
    }
    if stride == 0 || dilation == 0 {
        return Err(Error::config("conv1d stride/dilation must be positive"));
    }
    Ok(())
}

fn run_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    dilation: usize,
) -> (Tensor, i64, usize) {
    let (b, t, cin) = (input.dim(0), input.dim(1), input.dim(2));
    let (k, _, cout) = (weight.dim(0), weight.dim(1), weight.dim(2));
    let out_t = conv1d_out_len(t, stride);
    let lp = left_pad(t, out_t, k, stride, dilation);

    let mut out = Tensor::zeros(&[b, out_t, cout]);
    let x = input.data();
    let w = weight.data();
    let bz = bias.data();
    let o = out.data_mut();

    for bi in 0..b {
        for to in 0..out_t {
            let orow = &mut o[(bi * out_t + to) * cout..][..cout];
            orow.copy_from_slice(bz);
            for ki in 0..k {
                let ti = (to * stride + ki * dilation) as i64 - lp;
                if ti < 0 || ti >= t as i64 {
                    continue;
                }
                let xrow = &x[(bi * t + ti as usize) * cin..][..cin];
                let wk = &w[ki * cin * cout..][..cin * cout];
                for (ci, &xv) in xrow.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let wrow = &wk[ci * cout..][..cout];
                    for (ov, &wv) in orow.iter_mut().zip(wrow.iter()) {
                        *ov += xv * wv;
                    }
                }
            }
        }
    }
    out.debug_assert_finite("conv1d output");
    (out, lp, out_t)
}

/// Convolution forward pass (no saved context).
pub fn conv1d(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    dilation: usize,
) -> Result<Tensor> {
    check_args(input, weight, bias, stride, dilation)?;
    Ok(run_forward(input, weight, bias, stride, dilation).0)
}

/// Convolution forward pass, keeping the context needed for the VJP.
pub fn conv1d_train(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    dilation: usize,
) -> Result<(Tensor, Conv1dCtx)> {
    check_args(input, weight, bias, stride, dilation)?;
    let (out, lp, out_t) = run_forward(input, weight, bias, stride, dilation);
    let ctx = Conv1dCtx {
        input: input.clone(),
        weight: weight.clone(),
        stride,
        dilation,
        left_pad: lp,
        out_t,
    };
    Ok((out, ctx))
}

/// Vector-Jacobian product: gradients w.r.t. input, weight and bias.
pub fn conv1d_vjp(ctx: &Conv1dCtx, upstream: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (b, t, cin) = (ctx.input.dim(0), ctx.input.dim(1), ctx.input.dim(2));
    let (k, _, cout) = (ctx.weight.dim(0), ctx.weight.dim(1), ctx.weight.dim(2));
    assert_eq!(
        upstream.shape(),
        [b, ctx.out_t, cout],
        "conv1d_vjp upstream does not match saved forward context"
    );

    let mut gx = Tensor::zeros(&[b, t, cin]);
    let mut gw = Tensor::zeros(&[k, cin, cout]);
    let mut gb = Tensor::zeros(&[cout]);

    let x = ctx.input.data();
    let w = ctx.weight.data();
    let g = upstream.data();
    let (gxd, gwd, gbd) = (gx.data_mut(), gw.data_mut(), gb.data_mut());

    for bi in 0..b {
        for to in 0..ctx.out_t {
            let grow = &g[(bi * ctx.out_t + to) * cout..][..cout];
            for (co, &gv) in grow.iter().enumerate() {
                gbd[co] += gv;
            }
            for ki in 0..k {
                let ti = (to * ctx.stride + ki * ctx.dilation) as i64 - ctx.left_pad;
                if ti < 0 || ti >= t as i64 {
                    continue;
                }
                let xoff = (bi * t + ti as usize) * cin;
                let xrow = &x[xoff..][..cin];
                let wk = &w[ki * cin * cout..][..cin * cout];
                let gwk = &mut gwd[ki * cin * cout..][..cin * cout];
                let gxrow = &mut gxd[xoff..][..cin];
                for ci in 0..cin {
                    let xv = xrow[ci];
                    let wrow = &wk[ci * cout..][..cout];
                    let gwrow = &mut gwk[ci * cout..][..cout];
                    let mut acc = 0.0f32;
                    for co in 0..cout {
                        let gv = grow[co];
                        gwrow[co] += xv * gv;
                        acc += wrow[co] * gv;
                    }
                    gxrow[ci] += acc;
                }
            }
        }
    }
    gx.debug_assert_finite("conv1d grad_input");
    gw.debug_assert_finite("conv1d grad_weight");
    gb.debug_assert_finite("conv1d grad_bias");
    (gx, gw, gb)
}

//! Inverted dropout: survivors are scaled by `1/(1-rate)` at train time so
//! inference is a pure identity.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numerics::norm::Mode;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Multiplier mask reused by the VJP. `Identity` covers infer mode and rate 0.
pub enum DropoutMask {
    Identity,
    Mask(Vec<f32>),
}

pub fn dropout(
    input: &Tensor,
    rate: f32,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Tensor, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(format!(
            "dropout rate must be in [0,1), got {rate}"
        )));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((input.clone(), DropoutMask::Identity));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mask: Vec<f32> = (0..input.numel())
        .map(|_| {
            if rng.gen::<f32>() < rate {
                0.0
            } else {
                keep_scale
            }
        })
        .collect();
    let mut out = input.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(mask.iter()) {
        *v *= m;
    }
    out.debug_assert_finite("dropout output");
    Ok((out, DropoutMask::Mask(mask)))
}

pub fn dropout_vjp(mask: &DropoutMask, upstream: &Tensor) -> Tensor {
    match mask {
        DropoutMask::Identity => upstream.clone(),
        DropoutMask::Mask(m) => {
            assert_eq!(upstream.numel(), m.len(), "dropout_vjp mask length");
            let mut gx = upstream.clone();
            for (g, &mv) in gx.data_mut().iter_mut().zip(m.iter()) {
                *g *= mv;
            }
            gx
        }
    }
}

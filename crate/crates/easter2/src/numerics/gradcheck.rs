//! Central finite-difference verification of VJPs.

use crate::tensor::Tensor;

/// Worst relative disagreement between an analytic VJP and central finite
/// differences of the scalar loss `sum(forward(x) * upstream)`.
///
/// `forward` maps a probe tensor to the op output, `analytic` maps the probe
/// to the gradient w.r.t. it under the fixed `upstream`. The loss reduction
/// runs in f64 so the differencing noise stays well below the 1e-2 gate.
/// Entry pairs whose absolute disagreement is below 1e-4 count as exact:
/// at step sizes around 1e-3 that is the f32 noise floor, not signal.
pub fn grad_check(
    point: &Tensor,
    upstream: &Tensor,
    forward: impl Fn(&Tensor) -> Tensor,
    analytic: impl Fn(&Tensor) -> Tensor,
    step: f32,
) -> f32 {
    assert!(step > 0.0, "finite-difference step must be positive");
    let loss = |probe: &Tensor| -> f64 {
        let out = forward(probe);
        assert_eq!(
            out.shape(),
            upstream.shape(),
            "upstream shape does not match op output"
        );
        out.data()
            .iter()
            .zip(upstream.data())
            .map(|(&o, &u)| o as f64 * u as f64)
            .sum()
    };

    let grad = analytic(point);
    assert_eq!(grad.shape(), point.shape(), "analytic grad shape mismatch");

    let mut worst = 0.0f32;
    for i in 0..point.numel() {
        let mut plus = point.clone();
        plus.data_mut()[i] += step;
        let mut minus = point.clone();
        minus.data_mut()[i] -= step;
        let fd = ((loss(&plus) - loss(&minus)) / (2.0 * step as f64)) as f32;
        let a = grad.data()[i];
        let abs = (a - fd).abs();
        if abs <= 1e-4 {
            continue;
        }
        let rel = abs / a.abs().max(fd.abs());
        if rel > worst {
            worst = rel;
        }
    }
    worst
}

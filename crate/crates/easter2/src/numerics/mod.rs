//! Differentiable primitive operations over dense tensors.
//!
//! Every learnable op comes in three parts: a plain forward pass, a
//! `*_train` forward that saves the context the backward pass needs, and a
//! `*_vjp` that turns an upstream gradient into gradients for each input.
//! The network's backward pass is hand-composed from these VJPs; there is
//! no autodiff graph.

pub mod activations;
pub mod conv;
pub mod dropout;
pub mod gradcheck;
pub mod linear;
pub mod norm;
pub mod pool;
pub mod softmax;

pub use activations::{activation, activation_train, activation_vjp, Activation, ActivationCtx};
pub use conv::{conv1d, conv1d_out_len, conv1d_train, conv1d_vjp, Conv1dCtx};
pub use dropout::{dropout, dropout_vjp, DropoutMask};
pub use gradcheck::grad_check;
pub use linear::{fully_connected, fully_connected_train, fully_connected_vjp, FullyConnectedCtx};
pub use norm::{
    batch_norm, batch_norm_train, batch_norm_vjp, layer_norm, layer_norm_train, layer_norm_vjp,
    BatchNormCtx, BatchNormState, LayerNormCtx, Mode, DEFAULT_BN_EPSILON, DEFAULT_BN_MOMENTUM,
};
pub use pool::{global_average_pool, global_average_pool_train, global_average_pool_vjp, PoolCtx};
pub use softmax::{log_softmax, log_softmax_train, log_softmax_vjp, LogSoftmaxCtx};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::tensor::Tensor;
    use rand::Rng as _;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = rng_from_seed(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn pointwise_conv_equals_per_frame_fully_connected() {
        let x = random(&[2, 5, 3], 40);
        let w = random(&[1, 3, 4], 41);
        let b = random(&[4], 42);
        let conv_out = conv1d(&x, &w, &b, 1, 1).unwrap();
        let fc_w = Tensor::from_vec(&[3, 4], w.data().to_vec());
        let fc_out = fully_connected(&x, &fc_w, &b).unwrap();
        for (a, c) in conv_out.data().iter().zip(fc_out.data()) {
            assert!((a - c).abs() < 1e-6);
        }
    }

    #[test]
    fn composite_conv_bn_relu_chain_passes_grad_check() {
        let w = random(&[3, 2, 3], 51);
        let b = random(&[3], 52);
        let gamma = random(&[3], 53).map(|v| v + 1.5);
        let beta = random(&[3], 54);
        let g = random(&[1, 6, 3], 55);

        let forward = |probe: &Tensor| {
            let mut st = BatchNormState::new(3);
            let c = conv1d(probe, &w, &b, 1, 1).unwrap();
            let n = batch_norm(&c, &gamma, &beta, &mut st, Mode::Train).unwrap();
            activation(Activation::Relu, &n)
        };

        // probe point chosen so every pre-relu value stays clear of the kink
        // across the finite-difference step
        let x = (50..)
            .map(|seed| random(&[1, 6, 2], seed))
            .find(|cand| {
                let mut st = BatchNormState::new(3);
                let c = conv1d(cand, &w, &b, 1, 1).unwrap();
                let n = batch_norm(&c, &gamma, &beta, &mut st, Mode::Train).unwrap();
                n.data().iter().all(|v| v.abs() > 2e-2)
            })
            .unwrap();
        let backward = |probe: &Tensor| {
            let mut st = BatchNormState::new(3);
            let (c, cctx) = conv1d_train(probe, &w, &b, 1, 1).unwrap();
            let (n, nctx) = batch_norm_train(&c, &gamma, &beta, &mut st).unwrap();
            let (_, actx) = activation_train(Activation::Relu, &n);
            let gn = activation_vjp(&actx, &g);
            let (gc, _, _) = batch_norm_vjp(&nctx, &gn);
            conv1d_vjp(&cctx, &gc).0
        };
        let err = grad_check(&x, &g, forward, backward, 1e-3);
        assert!(err < 1e-2, "composite chain grad error {err}");
    }

    #[test]
    fn relu_grad_check_away_from_kink() {
        let x = random(&[12], 60).map(|v| if v.abs() < 1e-2 { v + 0.05 } else { v });
        let g = random(&[12], 61);
        let err = grad_check(
            &x,
            &g,
            |p| activation(Activation::Relu, p),
            |p| {
                let (_, ctx) = activation_train(Activation::Relu, p);
                activation_vjp(&ctx, &g)
            },
            1e-3,
        );
        assert!(err < 1e-2, "relu grad error {err}");
    }

    mod shape_properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn conv_output_shape_is_pure_function_of_inputs(
                b in 1usize..3,
                t in 1usize..40,
                cin in 1usize..5,
                cout in 1usize..5,
                k in 1usize..6,
                stride in 1usize..4,
                dilation in 1usize..3,
            ) {
                let x = Tensor::zeros(&[b, t, cin]);
                let w = Tensor::zeros(&[k, cin, cout]);
                let bias = Tensor::zeros(&[cout]);
                let y = conv1d(&x, &w, &bias, stride, dilation).unwrap();
                prop_assert_eq!(y.shape(), &[b, t.div_ceil(stride), cout]);
            }

            #[test]
            fn pool_and_fc_shapes(
                b in 1usize..4,
                t in 1usize..10,
                c in 1usize..6,
                dout in 1usize..6,
            ) {
                let x = Tensor::zeros(&[b, t, c]);
                let lens: Vec<usize> = (0..b).map(|i| 1 + i % t.max(1)).collect();
                let pooled = global_average_pool(&x, &lens).unwrap();
                prop_assert_eq!(pooled.shape(), &[b, c]);
                let w = Tensor::zeros(&[c, dout]);
                let bias = Tensor::zeros(&[dout]);
                let y = fully_connected(&pooled, &w, &bias).unwrap();
                prop_assert_eq!(y.shape(), &[b, dout]);
            }
        }
    }
}

//! The three convolution block types.
//!
//! Type A: conv -> norm -> relu -> dropout, optionally strided/dilated.
//! Type B: R stride-1 sub-blocks; the last one runs conv -> norm -> SE,
//!         adds the projected residual sources, then relu -> dropout.
//! Type C: pointwise conv producing raw logits for the CTC consumer.

use crate::error::{Error, Result};
use crate::layers::se::{se_forward, se_forward_train, se_vjp, SeCtx, SeParams};
use crate::layers::{GradStore, Norm, NormCtx};
use crate::numerics::{
    activation, activation_train, activation_vjp, conv1d, conv1d_out_len, conv1d_train,
    conv1d_vjp, dropout, dropout_vjp, Activation, ActivationCtx, Conv1dCtx, DropoutMask, Mode,
};
use crate::rng::Rng;
use crate::tensor::Tensor;

// ── Type A ─────────────────────────────────────────────────────────

pub struct BlockA {
    pub weight: Tensor, // [K, Cin, Cout]
    pub bias: Tensor,   // [Cout]
    pub norm: Norm,
    pub stride: usize,
    pub dilation: usize,
    pub dropout_rate: f32,
}

pub struct BlockACtx {
    conv: Conv1dCtx,
    norm: NormCtx,
    act: ActivationCtx,
    drop: DropoutMask,
}

fn strided_lengths(lengths: &[usize], stride: usize) -> Vec<usize> {
    lengths.iter().map(|&l| conv1d_out_len(l, stride)).collect()
}

impl BlockA {
    pub fn forward(
        &mut self,
        x: &Tensor,
        lengths: &[usize],
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Tensor, Vec<usize>)> {
        let c = conv1d(x, &self.weight, &self.bias, self.stride, self.dilation)?;
        let n = self.norm.forward(&c, mode)?;
        let a = activation(Activation::Relu, &n);
        let (y, _) = dropout(&a, self.dropout_rate, mode, rng)?;
        Ok((y, strided_lengths(lengths, self.stride)))
    }

    pub fn forward_train(
        &mut self,
        x: &Tensor,
        lengths: &[usize],
        rng: &mut Rng,
    ) -> Result<(Tensor, Vec<usize>, BlockACtx)> {
        let (c, conv_ctx) = conv1d_train(x, &self.weight, &self.bias, self.stride, self.dilation)?;
        let (n, norm_ctx) = self.norm.forward_train(&c)?;
        let (a, act_ctx) = activation_train(Activation::Relu, &n);
        let (y, drop) = dropout(&a, self.dropout_rate, Mode::Train, rng)?;
        Ok((
            y,
            strided_lengths(lengths, self.stride),
            BlockACtx {
                conv: conv_ctx,
                norm: norm_ctx,
                act: act_ctx,
                drop,
            },
        ))
    }

    /// Returns grad w.r.t. the block input; parameter grads go into `grads`.
    pub fn backward(
        &self,
        ctx: &BlockACtx,
        upstream: &Tensor,
        prefix: &str,
        grads: &mut GradStore,
    ) -> Tensor {
        let ga = dropout_vjp(&ctx.drop, upstream);
        let gn = activation_vjp(&ctx.act, &ga);
        let gc = self.norm.vjp(&ctx.norm, &gn, &format!("{prefix}.norm"), grads);
        let (gx, gw, gb) = conv1d_vjp(&ctx.conv, &gc);
        grads.add(format!("{prefix}.conv.weight"), gw);
        grads.add(format!("{prefix}.conv.bias"), gb);
        gx
    }

    pub fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        f(format!("{prefix}.conv.weight"), &self.weight);
        f(format!("{prefix}.conv.bias"), &self.bias);
        self.norm.visit_params(&format!("{prefix}.norm"), f);
    }

    pub fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.conv.weight"), &mut self.weight);
        f(format!("{prefix}.conv.bias"), &mut self.bias);
        self.norm.visit_params_mut(&format!("{prefix}.norm"), f);
    }
}

// ── Type B ─────────────────────────────────────────────────────────

/// One conv+norm repetition inside a type-B block.
pub struct SubUnit {
    pub weight: Tensor,
    pub bias: Tensor,
    pub norm: Norm,
    pub dilation: usize,
}

/// Pointwise projection that adapts one residual source to the block width.
/// No conv bias; the norm provides the shift when one is configured.
pub struct ResProj {
    pub weight: Tensor, // [1, Csrc, Cout]
    pub norm: Norm,
}

pub struct BlockB {
    pub subs: Vec<SubUnit>,
    pub se: Option<SeParams>,
    pub res: Vec<ResProj>,
    pub dropout_rate: f32,
}

struct SubCtx {
    conv: Conv1dCtx,
    norm: NormCtx,
    act: Option<ActivationCtx>, // absent on the last sub-block
    drop: Option<DropoutMask>,
}

pub struct BlockBCtx {
    subs: Vec<SubCtx>,
    se: Option<SeCtx>,
    res: Vec<(Conv1dCtx, NormCtx)>,
    act: ActivationCtx,
    drop: DropoutMask,
}

impl BlockB {
    /// `sources` must match the configured residual projections pairwise.
    pub fn forward(
        &mut self,
        x: &Tensor,
        sources: &[&Tensor],
        lengths: &[usize],
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Tensor> {
        self.check_sources(x, sources)?;
        let t_in = x.dim(1);
        let last = self.subs.len() - 1;
        let mut h = x.clone();
        for (j, sub) in self.subs.iter_mut().enumerate() {
            let c = conv1d(&h, &sub.weight, &sub.bias, 1, sub.dilation)?;
            let n = sub.norm.forward(&c, mode)?;
            assert_eq!(n.dim(1), t_in, "type-B blocks must preserve T");
            if j < last {
                let a = activation(Activation::Relu, &n);
                let (d, _) = dropout(&a, self.dropout_rate, mode, rng)?;
                h = d;
            } else {
                h = n;
            }
        }
        if let Some(se) = &self.se {
            h = se_forward(&h, se, lengths)?;
        }
        for (proj, src) in self.res.iter_mut().zip(sources.iter()) {
            let p = conv1d(src, &proj.weight, &Tensor::zeros(&[proj.weight.dim(2)]), 1, 1)?;
            let pn = proj.norm.forward(&p, mode)?;
            h.add_assign(&pn);
        }
        let a = activation(Activation::Relu, &h);
        let (y, _) = dropout(&a, self.dropout_rate, mode, rng)?;
        Ok(y)
    }

    pub fn forward_train(
        &mut self,
        x: &Tensor,
        sources: &[&Tensor],
        lengths: &[usize],
        rng: &mut Rng,
    ) -> Result<(Tensor, BlockBCtx)> {
        self.check_sources(x, sources)?;
        let t_in = x.dim(1);
        let last = self.subs.len() - 1;
        let mut h = x.clone();
        let mut sub_ctxs = Vec::with_capacity(self.subs.len());
        for (j, sub) in self.subs.iter_mut().enumerate() {
            let (c, conv_ctx) = conv1d_train(&h, &sub.weight, &sub.bias, 1, sub.dilation)?;
            let (n, norm_ctx) = sub.norm.forward_train(&c)?;
            assert_eq!(n.dim(1), t_in, "type-B blocks must preserve T");
            if j < last {
                let (a, act_ctx) = activation_train(Activation::Relu, &n);
                let (d, drop) = dropout(&a, self.dropout_rate, Mode::Train, rng)?;
                h = d;
                sub_ctxs.push(SubCtx {
                    conv: conv_ctx,
                    norm: norm_ctx,
                    act: Some(act_ctx),
                    drop: Some(drop),
                });
            } else {
                h = n;
                sub_ctxs.push(SubCtx {
                    conv: conv_ctx,
                    norm: norm_ctx,
                    act: None,
                    drop: None,
                });
            }
        }
        let mut se_ctx = None;
        if let Some(se) = &self.se {
            let (s, ctx) = se_forward_train(&h, se, lengths)?;
            h = s;
            se_ctx = Some(ctx);
        }
        let mut res_ctxs = Vec::with_capacity(self.res.len());
        for (proj, src) in self.res.iter_mut().zip(sources.iter()) {
            let (p, conv_ctx) =
                conv1d_train(src, &proj.weight, &Tensor::zeros(&[proj.weight.dim(2)]), 1, 1)?;
            let (pn, norm_ctx) = proj.norm.forward_train(&p)?;
            h.add_assign(&pn);
            res_ctxs.push((conv_ctx, norm_ctx));
        }
        let (a, act_ctx) = activation_train(Activation::Relu, &h);
        let (y, drop) = dropout(&a, self.dropout_rate, Mode::Train, rng)?;
        Ok((
            y,
            BlockBCtx {
                subs: sub_ctxs,
                se: se_ctx,
                res: res_ctxs,
                act: act_ctx,
                drop,
            },
        ))
    }

    /// Returns grad w.r.t. the block input plus one grad per residual source.
    pub fn backward(
        &self,
        ctx: &BlockBCtx,
        upstream: &Tensor,
        prefix: &str,
        grads: &mut GradStore,
    ) -> (Tensor, Vec<Tensor>) {
        let ga = dropout_vjp(&ctx.drop, upstream);
        // gradient at the pre-relu merge point, shared by the main path and
        // every projected source
        let gsum = activation_vjp(&ctx.act, &ga);

        let mut source_grads = Vec::with_capacity(self.res.len());
        for (m, (proj, (conv_ctx, norm_ctx))) in
            self.res.iter().zip(ctx.res.iter()).enumerate()
        {
            let gp = proj
                .norm
                .vjp(norm_ctx, &gsum, &format!("{prefix}.res{m}.norm"), grads);
            let (gsrc, gw, _gb) = conv1d_vjp(conv_ctx, &gp);
            grads.add(format!("{prefix}.res{m}.proj.weight"), gw);
            source_grads.push(gsrc);
        }

        let mut g = gsum;
        if let (Some(se), Some(se_ctx)) = (&self.se, &ctx.se) {
            let _ = se;
            let (gx, se_grads) = se_vjp(se_ctx, &g);
            grads.add(format!("{prefix}.se.w1"), se_grads.w1);
            grads.add(format!("{prefix}.se.b1"), se_grads.b1);
            grads.add(format!("{prefix}.se.w2"), se_grads.w2);
            grads.add(format!("{prefix}.se.b2"), se_grads.b2);
            g = gx;
        }

        for (j, (sub, sub_ctx)) in self.subs.iter().zip(ctx.subs.iter()).enumerate().rev() {
            if let (Some(act), Some(drop)) = (&sub_ctx.act, &sub_ctx.drop) {
                g = dropout_vjp(drop, &g);
                g = activation_vjp(act, &g);
            }
            g = sub
                .norm
                .vjp(&sub_ctx.norm, &g, &format!("{prefix}.sub{j}.norm"), grads);
            let (gx, gw, gb) = conv1d_vjp(&sub_ctx.conv, &g);
            grads.add(format!("{prefix}.sub{j}.conv.weight"), gw);
            grads.add(format!("{prefix}.sub{j}.conv.bias"), gb);
            g = gx;
        }
        (g, source_grads)
    }

    fn check_sources(&self, _x: &Tensor, sources: &[&Tensor]) -> Result<()> {
        if sources.len() != self.res.len() {
            return Err(Error::shape(format!(
                "block expects {} residual sources, got {}",
                self.res.len(),
                sources.len()
            )));
        }
        for (m, (proj, src)) in self.res.iter().zip(sources.iter()).enumerate() {
            if src.dim(2) != proj.weight.dim(1) {
                return Err(Error::shape(format!(
                    "residual source {m} has {} channels, projection expects {}",
                    src.dim(2),
                    proj.weight.dim(1)
                )));
            }
        }
        Ok(())
    }

    pub fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        for (j, sub) in self.subs.iter().enumerate() {
            f(format!("{prefix}.sub{j}.conv.weight"), &sub.weight);
            f(format!("{prefix}.sub{j}.conv.bias"), &sub.bias);
            sub.norm.visit_params(&format!("{prefix}.sub{j}.norm"), f);
        }
        if let Some(se) = &self.se {
            f(format!("{prefix}.se.w1"), &se.w1);
            f(format!("{prefix}.se.b1"), &se.b1);
            f(format!("{prefix}.se.w2"), &se.w2);
            f(format!("{prefix}.se.b2"), &se.b2);
        }
        for (m, proj) in self.res.iter().enumerate() {
            f(format!("{prefix}.res{m}.proj.weight"), &proj.weight);
            proj.norm.visit_params(&format!("{prefix}.res{m}.norm"), f);
        }
    }

    pub fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        for (j, sub) in self.subs.iter_mut().enumerate() {
            f(format!("{prefix}.sub{j}.conv.weight"), &mut sub.weight);
            f(format!("{prefix}.sub{j}.conv.bias"), &mut sub.bias);
            sub.norm
                .visit_params_mut(&format!("{prefix}.sub{j}.norm"), f);
        }
        if let Some(se) = &mut self.se {
            f(format!("{prefix}.se.w1"), &mut se.w1);
            f(format!("{prefix}.se.b1"), &mut se.b1);
            f(format!("{prefix}.se.w2"), &mut se.w2);
            f(format!("{prefix}.se.b2"), &mut se.b2);
        }
        for (m, proj) in self.res.iter_mut().enumerate() {
            f(format!("{prefix}.res{m}.proj.weight"), &mut proj.weight);
            proj.norm
                .visit_params_mut(&format!("{prefix}.res{m}.norm"), f);
        }
    }

    pub fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(String, &[f32])) {
        for (j, sub) in self.subs.iter().enumerate() {
            sub.norm.visit_state(&format!("{prefix}.sub{j}.norm"), f);
        }
        for (m, proj) in self.res.iter().enumerate() {
            proj.norm.visit_state(&format!("{prefix}.res{m}.norm"), f);
        }
    }

    pub fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Vec<f32>)) {
        for (j, sub) in self.subs.iter_mut().enumerate() {
            sub.norm
                .visit_state_mut(&format!("{prefix}.sub{j}.norm"), f);
        }
        for (m, proj) in self.res.iter_mut().enumerate() {
            proj.norm
                .visit_state_mut(&format!("{prefix}.res{m}.norm"), f);
        }
    }
}

// ── Type C ─────────────────────────────────────────────────────────

pub struct BlockC {
    pub weight: Tensor, // [1, C, V]
    pub bias: Tensor,   // [V]
}

pub struct BlockCCtx {
    conv: Conv1dCtx,
}

impl BlockC {
    /// Raw logits; the CTC consumer applies log-softmax.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv1d(x, &self.weight, &self.bias, 1, 1)
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, BlockCCtx)> {
        let (y, conv) = conv1d_train(x, &self.weight, &self.bias, 1, 1)?;
        Ok((y, BlockCCtx { conv }))
    }

    pub fn backward(
        &self,
        ctx: &BlockCCtx,
        upstream: &Tensor,
        prefix: &str,
        grads: &mut GradStore,
    ) -> Tensor {
        let (gx, gw, gb) = conv1d_vjp(&ctx.conv, upstream);
        grads.add(format!("{prefix}.conv.weight"), gw);
        grads.add(format!("{prefix}.conv.bias"), gb);
        gx
    }

    pub fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        f(format!("{prefix}.conv.weight"), &self.weight);
        f(format!("{prefix}.conv.bias"), &self.bias);
    }

    pub fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.conv.weight"), &mut self.weight);
        f(format!("{prefix}.conv.bias"), &mut self.bias);
    }
}

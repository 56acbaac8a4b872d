//! Declarative model configuration and the assembled network.
//!
//! A config is an ordered list of block specs (types A, B, C) plus the
//! input height, vocabulary size and normalization switch. `build`
//! allocates and initializes every parameter from the config seed, so a
//! config plus a seed fully determines the network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    BlockA, BlockACtx, BlockB, BlockBCtx, BlockC, BlockCCtx, GradStore, Norm, NormKind, ResProj,
    SeParams, SubUnit,
};
use crate::numerics::Mode;
use crate::rng::{rng_from_seed, Rng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockType {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResidualMode {
    #[default]
    None,
    Normal,
    Dense,
}

fn one() -> usize {
    1
}

/// One block of the architecture table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub block_type: BlockType,
    #[serde(default = "one")]
    pub conv_layers: usize,
    pub out_channels: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "one")]
    pub dilation: usize,
    #[serde(default)]
    pub dropout: f32,
    #[serde(default)]
    pub residual: ResidualMode,
    #[serde(default)]
    pub se: bool,
}

fn default_norm() -> NormKind {
    NormKind::Batch
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Channel count of the width-major 1D view (pixel rows per frame).
    pub input_height: usize,
    /// Output classes including the CTC blank.
    pub vocab_size: usize,
    pub blocks: Vec<BlockSpec>,
    #[serde(default = "default_norm")]
    pub normalization: NormKind,
    #[serde(default)]
    pub seed: u64,
}

/// Default line-image height. The reported parameter budget is met with
/// 80-row inputs, which is also a comfortable height for handwriting lines.
pub const DEFAULT_INPUT_HEIGHT: usize = 80;
/// 79 corpus characters plus the CTC blank.
pub const DEFAULT_VOCAB_SIZE: usize = 80;

impl ModelConfig {
    /// The canonical 8-entry, 14-conv-layer configuration.
    pub fn canonical(input_height: usize, vocab_size: usize) -> ModelConfig {
        let type_a = |ch, k, stride, dilation, dropout| BlockSpec {
            block_type: BlockType::A,
            conv_layers: 1,
            out_channels: ch,
            kernel: k,
            stride,
            dilation,
            dropout,
            residual: ResidualMode::None,
            se: false,
        };
        let type_b = |ch, k, dropout| BlockSpec {
            block_type: BlockType::B,
            conv_layers: 3,
            out_channels: ch,
            kernel: k,
            stride: 1,
            dilation: 1,
            dropout,
            residual: ResidualMode::Dense,
            se: true,
        };
        ModelConfig {
            input_height,
            vocab_size,
            blocks: vec![
                type_a(128, 3, 2, 1, 0.2),
                type_a(128, 3, 2, 1, 0.2),
                type_b(256, 5, 0.2),
                type_b(256, 7, 0.2),
                type_b(256, 9, 0.3),
                type_a(512, 11, 1, 2, 0.4),
                type_a(512, 1, 1, 1, 0.4),
                BlockSpec {
                    block_type: BlockType::C,
                    conv_layers: 1,
                    out_channels: vocab_size,
                    kernel: 1,
                    stride: 1,
                    dilation: 1,
                    dropout: 0.0,
                    residual: ResidualMode::None,
                    se: false,
                },
            ],
            normalization: NormKind::Batch,
            seed: 0,
        }
    }

    /// Index of the CTC blank class.
    pub fn blank_id(&self) -> usize {
        self.vocab_size - 1
    }

    /// Product of all block strides: the width downsampling factor.
    pub fn total_stride(&self) -> usize {
        self.blocks.iter().map(|b| b.stride).product()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::config(msg));
        if self.input_height == 0 {
            return fail("input_height must be >= 1".to_string());
        }
        if self.vocab_size < 2 {
            return fail("vocab_size must include at least one symbol and the blank".to_string());
        }
        if self.blocks.is_empty() {
            return fail("blocks must be non-empty".to_string());
        }
        let c_count = self
            .blocks
            .iter()
            .filter(|b| b.block_type == BlockType::C)
            .count();
        if c_count != 1 || self.blocks.last().unwrap().block_type != BlockType::C {
            return fail("exactly one type-C block is required and it must be last".to_string());
        }
        let mut strides_at_b_inputs: Vec<usize> = Vec::new();
        let mut cumulative_stride = 1usize;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.out_channels == 0 || b.kernel == 0 || b.stride == 0 || b.dilation == 0 {
                return fail(format!("block {i}: extents must be positive"));
            }
            if !(0.0..1.0).contains(&b.dropout) {
                return fail(format!("block {i}: dropout {} outside [0,1)", b.dropout));
            }
            if b.conv_layers == 0 {
                return fail(format!("block {i}: conv_layers must be >= 1"));
            }
            match b.block_type {
                BlockType::A => {
                    if b.conv_layers != 1 {
                        return fail(format!("block {i}: type-A blocks have conv_layers = 1"));
                    }
                    if b.se || b.residual != ResidualMode::None {
                        return fail(format!(
                            "block {i}: residual/se apply only to type-B blocks"
                        ));
                    }
                }
                BlockType::B => {
                    if b.stride != 1 {
                        return fail(format!("block {i}: type-B blocks are stride-1"));
                    }
                    if b.residual == ResidualMode::Dense
                        && strides_at_b_inputs.iter().any(|&s| s != cumulative_stride)
                    {
                        return fail(format!(
                            "block {i}: dense residual sources live at a different stride"
                        ));
                    }
                    strides_at_b_inputs.push(cumulative_stride);
                }
                BlockType::C => {
                    if b.kernel != 1 || b.stride != 1 || b.dilation != 1 || b.conv_layers != 1 {
                        return fail(format!("block {i}: type-C is a pointwise conv"));
                    }
                    if b.se || b.residual != ResidualMode::None || b.dropout != 0.0 {
                        return fail(format!("block {i}: type-C has no se/residual/dropout"));
                    }
                    if b.out_channels != self.vocab_size {
                        return fail(format!(
                            "block {i}: type-C out_channels {} must equal vocab_size {}",
                            b.out_channels, self.vocab_size
                        ));
                    }
                }
            }
            cumulative_stride *= b.stride;
        }
        Ok(())
    }
}

enum BlockInstance {
    A(BlockA),
    B(BlockB),
    C(BlockC),
}

pub struct Model {
    pub config: ModelConfig,
    blocks: Vec<BlockInstance>,
}

enum BlockCtxInstance {
    A(BlockACtx),
    B(BlockBCtx),
    C(BlockCCtx),
}

/// Saved forward activations for [`Model::backward`].
pub struct ModelCtx {
    block_ctxs: Vec<BlockCtxInstance>,
    batch: usize,
    out_t: usize,
    vocab: usize,
}

fn init_normal(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    use rand_distr::{Distribution, Normal};
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("valid normal");
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| dist.sample(rng) as f32).collect())
}

/// Build a network from a config: conv and bottleneck weights from a
/// fan-in-scaled normal distribution, biases zero, norm gamma 1 / beta 0.
pub fn build(config: &ModelConfig) -> Result<Model> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let mut blocks = Vec::with_capacity(config.blocks.len());
    let mut in_channels = config.input_height;
    // channel counts of every type-B block input seen so far
    let mut b_input_channels: Vec<usize> = Vec::new();

    for spec in &config.blocks {
        match spec.block_type {
            BlockType::A => {
                blocks.push(BlockInstance::A(BlockA {
                    weight: init_normal(
                        &[spec.kernel, in_channels, spec.out_channels],
                        spec.kernel * in_channels,
                        &mut rng,
                    ),
                    bias: Tensor::zeros(&[spec.out_channels]),
                    norm: Norm::new(config.normalization, spec.out_channels),
                    stride: spec.stride,
                    dilation: spec.dilation,
                    dropout_rate: spec.dropout,
                }));
            }
            BlockType::B => {
                b_input_channels.push(in_channels);
                let mut subs = Vec::with_capacity(spec.conv_layers);
                let mut ci = in_channels;
                for _ in 0..spec.conv_layers {
                    subs.push(SubUnit {
                        weight: init_normal(
                            &[spec.kernel, ci, spec.out_channels],
                            spec.kernel * ci,
                            &mut rng,
                        ),
                        bias: Tensor::zeros(&[spec.out_channels]),
                        norm: Norm::new(config.normalization, spec.out_channels),
                        dilation: spec.dilation,
                    });
                    ci = spec.out_channels;
                }
                let se = spec.se.then(|| {
                    let c = spec.out_channels;
                    let mid = SeParams::bottleneck_width(c);
                    SeParams {
                        w1: init_normal(&[c, mid], c, &mut rng),
                        b1: Tensor::zeros(&[mid]),
                        w2: init_normal(&[mid, c], mid, &mut rng),
                        b2: Tensor::zeros(&[c]),
                    }
                });
                let source_channels: &[usize] = match spec.residual {
                    ResidualMode::None => &[],
                    ResidualMode::Normal => &b_input_channels[b_input_channels.len() - 1..],
                    ResidualMode::Dense => &b_input_channels[..],
                };
                let res = source_channels
                    .iter()
                    .map(|&c_src| ResProj {
                        weight: init_normal(&[1, c_src, spec.out_channels], c_src, &mut rng),
                        norm: Norm::new(config.normalization, spec.out_channels),
                    })
                    .collect();
                blocks.push(BlockInstance::B(BlockB {
                    subs,
                    se,
                    res,
                    dropout_rate: spec.dropout,
                }));
            }
            BlockType::C => {
                blocks.push(BlockInstance::C(BlockC {
                    weight: init_normal(
                        &[1, in_channels, spec.out_channels],
                        in_channels,
                        &mut rng,
                    ),
                    bias: Tensor::zeros(&[spec.out_channels]),
                }));
            }
        }
        in_channels = spec.out_channels;
    }
    Ok(Model {
        config: config.clone(),
        blocks,
    })
}

impl Model {
    fn check_input(&self, images: &Tensor, true_widths: &[usize]) -> Result<()> {
        if images.rank() != 3 {
            return Err(Error::shape(format!(
                "model input must be [B,W,H], got {:?}",
                images.shape()
            )));
        }
        if images.dim(2) != self.config.input_height {
            return Err(Error::shape(format!(
                "input height {} does not match configured {}",
                images.dim(2),
                self.config.input_height
            )));
        }
        if true_widths.len() != images.dim(0) {
            return Err(Error::shape(format!(
                "expected {} widths, got {}",
                images.dim(0),
                true_widths.len()
            )));
        }
        for (i, &w) in true_widths.iter().enumerate() {
            if w == 0 || w > images.dim(1) {
                return Err(Error::shape(format!(
                    "width {w} of sample {i} outside 1..={}",
                    images.dim(1)
                )));
            }
        }
        Ok(())
    }

    /// Right-pad the batch width to a multiple of the total stride. This
    /// pins every strided conv's padding offset, making per-sample outputs
    /// independent of the batch width they were padded to.
    fn pad_to_stride(&self, images: &Tensor) -> Tensor {
        let s = self.config.total_stride();
        let (b, w, h) = (images.dim(0), images.dim(1), images.dim(2));
        let w_pad = w.div_ceil(s) * s;
        if w_pad == w {
            return images.clone();
        }
        let mut out = Tensor::zeros(&[b, w_pad, h]);
        for bi in 0..b {
            let src = &images.data()[bi * w * h..][..w * h];
            out.data_mut()[bi * w_pad * h..][..w * h].copy_from_slice(src);
        }
        out
    }

    /// End-to-end forward pass: raw logits `[B, W', V]` plus per-sample
    /// output lengths (true widths divided by the total stride, rounded up).
    pub fn forward(
        &mut self,
        images: &Tensor,
        true_widths: &[usize],
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Tensor, Vec<usize>)> {
        self.run_forward(images, true_widths, mode, rng, None)
    }

    /// Forward pass that hands every intermediate block output to `tap`,
    /// for diagnostics and test instrumentation.
    pub fn forward_with_taps(
        &mut self,
        images: &Tensor,
        true_widths: &[usize],
        mode: Mode,
        rng: &mut Rng,
        tap: &mut dyn FnMut(usize, &Tensor),
    ) -> Result<(Tensor, Vec<usize>)> {
        self.run_forward(images, true_widths, mode, rng, Some(tap))
    }

    fn run_forward(
        &mut self,
        images: &Tensor,
        true_widths: &[usize],
        mode: Mode,
        rng: &mut Rng,
        mut tap: Option<&mut dyn FnMut(usize, &Tensor)>,
    ) -> Result<(Tensor, Vec<usize>)> {
        self.check_input(images, true_widths)?;
        let mut cur = self.pad_to_stride(images);
        let mut lengths = true_widths.to_vec();
        let mut b_inputs: Vec<Tensor> = Vec::new();
        let specs = self.config.blocks.clone();
        for (i, (block, spec)) in self.blocks.iter_mut().zip(specs.iter()).enumerate() {
            match block {
                BlockInstance::A(a) => {
                    let (y, l) = a.forward(&cur, &lengths, mode, rng)?;
                    cur = y;
                    lengths = l;
                }
                BlockInstance::B(b) => {
                    b_inputs.push(cur.clone());
                    let sources = select_sources(&b_inputs, spec.residual);
                    let y = b.forward(&cur, &sources, &lengths, mode, rng)?;
                    cur = y;
                }
                BlockInstance::C(c) => {
                    cur = c.forward(&cur)?;
                }
            }
            if let Some(tap) = tap.as_deref_mut() {
                tap(i, &cur);
            }
        }
        Ok((cur, lengths))
    }

    /// Forward pass that records the context consumed by [`Model::backward`].
    pub fn forward_train(
        &mut self,
        images: &Tensor,
        true_widths: &[usize],
        rng: &mut Rng,
    ) -> Result<(Tensor, Vec<usize>, ModelCtx)> {
        self.check_input(images, true_widths)?;
        let mut cur = self.pad_to_stride(images);
        let mut lengths = true_widths.to_vec();
        let mut b_inputs: Vec<Tensor> = Vec::new();
        let mut block_ctxs = Vec::with_capacity(self.blocks.len());
        let specs = self.config.blocks.clone();
        for (block, spec) in self.blocks.iter_mut().zip(specs.iter()) {
            match block {
                BlockInstance::A(a) => {
                    let (y, l, ctx) = a.forward_train(&cur, &lengths, rng)?;
                    cur = y;
                    lengths = l;
                    block_ctxs.push(BlockCtxInstance::A(ctx));
                }
                BlockInstance::B(b) => {
                    b_inputs.push(cur.clone());
                    let sources = select_sources(&b_inputs, spec.residual);
                    let (y, ctx) = b.forward_train(&cur, &sources, &lengths, rng)?;
                    cur = y;
                    block_ctxs.push(BlockCtxInstance::B(ctx));
                }
                BlockInstance::C(c) => {
                    let (y, ctx) = c.forward_train(&cur)?;
                    cur = y;
                    block_ctxs.push(BlockCtxInstance::C(ctx));
                }
            }
        }
        let ctx = ModelCtx {
            block_ctxs,
            batch: cur.dim(0),
            out_t: cur.dim(1),
            vocab: cur.dim(2),
        };
        Ok((cur, lengths, ctx))
    }

    /// Hand-composed backward pass. Returns the named gradient of every
    /// parameter; residual skip edges accumulate into their source blocks.
    pub fn backward(&self, ctx: &ModelCtx, grad_logits: &Tensor) -> Result<GradStore> {
        if grad_logits.shape() != [ctx.batch, ctx.out_t, ctx.vocab] {
            return Err(Error::shape(format!(
                "grad_logits shape {:?} does not match forward context [{}, {}, {}]",
                grad_logits.shape(),
                ctx.batch,
                ctx.out_t,
                ctx.vocab
            )));
        }
        if ctx.block_ctxs.len() != self.blocks.len() {
            return Err(Error::shape(
                "forward context does not match this model",
            ));
        }
        let mut grads = GradStore::new();
        // positions of type-B blocks, for routing residual source grads
        let b_positions: Vec<usize> = self
            .blocks
            .iter()
            .enumerate()
            .filter_map(|(i, b)| matches!(b, BlockInstance::B(_)).then_some(i))
            .collect();
        // pending[i] accumulates residual-edge grads w.r.t. block i's input
        let mut pending: Vec<Option<Tensor>> = (0..self.blocks.len()).map(|_| None).collect();

        let mut g = grad_logits.clone();
        for (i, (block, bctx)) in self
            .blocks
            .iter()
            .zip(ctx.block_ctxs.iter())
            .enumerate()
            .rev()
        {
            let prefix = format!("b{i}");
            let mut gin = match (block, bctx) {
                (BlockInstance::A(a), BlockCtxInstance::A(c)) => {
                    a.backward(c, &g, &prefix, &mut grads)
                }
                (BlockInstance::B(b), BlockCtxInstance::B(c)) => {
                    let (gin, src_grads) = b.backward(c, &g, &prefix, &mut grads);
                    // dense: sources are the inputs of type-B blocks 0..=m;
                    // normal: the single source is this block's own input
                    let m = b_positions.iter().position(|&p| p == i).unwrap();
                    for (k, sg) in src_grads.into_iter().enumerate() {
                        let target = match self.config.blocks[i].residual {
                            ResidualMode::Dense => b_positions[k],
                            ResidualMode::Normal => i,
                            ResidualMode::None => unreachable!("no sources in none mode"),
                        };
                        debug_assert!(target <= i && k <= m);
                        match &mut pending[target] {
                            Some(t) => t.add_assign(&sg),
                            slot => *slot = Some(sg),
                        }
                    }
                    gin
                }
                (BlockInstance::C(c), BlockCtxInstance::C(cc)) => {
                    c.backward(cc, &g, &prefix, &mut grads)
                }
                _ => {
                    return Err(Error::shape(
                        "forward context kind does not match block kind",
                    ))
                }
            };
            if let Some(extra) = pending[i].take() {
                gin.add_assign(&extra);
            }
            g = gin;
        }
        Ok(grads)
    }

    /// Trainable parameter count (running statistics excluded).
    pub fn count_params(&self) -> usize {
        let mut total = 0usize;
        self.visit_params(&mut |_, t| total += t.numel());
        total
    }

    /// Number of named parameter tensors.
    pub fn count_tensors(&self) -> usize {
        let mut total = 0usize;
        self.visit_params(&mut |_, _| total += 1);
        total
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(String, &Tensor)) {
        for (i, block) in self.blocks.iter().enumerate() {
            let prefix = format!("b{i}");
            match block {
                BlockInstance::A(a) => a.visit_params(&prefix, f),
                BlockInstance::B(b) => b.visit_params(&prefix, f),
                BlockInstance::C(c) => c.visit_params(&prefix, f),
            }
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor)) {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let prefix = format!("b{i}");
            match block {
                BlockInstance::A(a) => a.visit_params_mut(&prefix, f),
                BlockInstance::B(b) => b.visit_params_mut(&prefix, f),
                BlockInstance::C(c) => c.visit_params_mut(&prefix, f),
            }
        }
    }

    /// Batch-norm running statistics (state, not parameters).
    pub fn visit_state(&self, f: &mut dyn FnMut(String, &[f32])) {
        for (i, block) in self.blocks.iter().enumerate() {
            let prefix = format!("b{i}");
            match block {
                BlockInstance::A(a) => a.norm.visit_state(&format!("{prefix}.norm"), f),
                BlockInstance::B(b) => b.visit_state(&prefix, f),
                BlockInstance::C(_) => {}
            }
        }
    }

    pub fn visit_state_mut(&mut self, f: &mut dyn FnMut(String, &mut Vec<f32>)) {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let prefix = format!("b{i}");
            match block {
                BlockInstance::A(a) => a.norm.visit_state_mut(&format!("{prefix}.norm"), f),
                BlockInstance::B(b) => b.visit_state_mut(&prefix, f),
                BlockInstance::C(_) => {}
            }
        }
    }
}

fn select_sources(b_inputs: &[Tensor], mode: ResidualMode) -> Vec<&Tensor> {
    match mode {
        ResidualMode::None => Vec::new(),
        ResidualMode::Normal => vec![b_inputs.last().unwrap()],
        ResidualMode::Dense => b_inputs.iter().collect(),
    }
}

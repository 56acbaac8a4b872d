//! Synthetic stroke-rendered line corpus for desk-scale training tests.
//!
//! Four symbols with visually distinct strokes, drawn dark-on-light into
//! fixed-width cells and concatenated into line images.

use easter2::model::{BlockSpec, BlockType, ModelConfig, ResidualMode};
use easter2::rng::rng_from_seed;
use easter2::train::{TrainConfig, WeightPolicy};
use easter2::{GrayImage, NormKind, Sample, SampleSource, Vocabulary};
use rand::Rng as _;

pub const HEIGHT: usize = 32;
pub const CELL_W: usize = 14;
const INK: u8 = 20;

fn draw_glyph(img: &mut GrayImage, x0: usize, ch: char) {
    let h = HEIGHT;
    match ch {
        // vertical bar
        'a' => {
            for x in 5..9 {
                for y in 3..h - 3 {
                    img.set(x0 + x, y, INK);
                }
            }
        }
        // horizontal bar
        'b' => {
            for x in 2..CELL_W - 2 {
                for y in 13..18 {
                    img.set(x0 + x, y, INK);
                }
            }
        }
        // main diagonal
        'c' => {
            for i in 0..h - 6 {
                let x = 2 + (i * (CELL_W - 5)) / (h - 6);
                for dx in 0..3 {
                    img.set(x0 + x + dx, 3 + i, INK);
                }
            }
        }
        // two vertical bars
        'd' => {
            for &x in &[3usize, 4, 9, 10] {
                for y in 3..h - 3 {
                    img.set(x0 + x, y, INK);
                }
            }
        }
        _ => panic!("no glyph for {ch:?}"),
    }
}

pub fn render_line(text: &str) -> GrayImage {
    let mut img = GrayImage::filled(CELL_W * text.chars().count(), HEIGHT, 255);
    for (i, ch) in text.chars().enumerate() {
        draw_glyph(&mut img, i * CELL_W, ch);
    }
    img
}

/// Deterministic corpus of `n` lines, 3..=6 symbols each.
pub fn corpus(n: usize, seed: u64) -> (Vec<Sample>, Vocabulary) {
    let vocab = Vocabulary::from_chars("abcd".chars()).unwrap();
    let mut rng = rng_from_seed(seed);
    let alphabet = ['a', 'b', 'c', 'd'];
    let samples = (0..n)
        .map(|_| {
            let len = rng.gen_range(3..=6);
            let text: String = (0..len)
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                .collect();
            Sample {
                source: SampleSource::Memory(render_line(&text)),
                text,
                split: "train".to_string(),
            }
        })
        .collect();
    (samples, vocab)
}

/// Small two-stage network sized for the glyph corpus.
pub fn model_config() -> ModelConfig {
    ModelConfig {
        input_height: HEIGHT,
        vocab_size: 5,
        blocks: vec![
            BlockSpec {
                block_type: BlockType::A,
                conv_layers: 1,
                out_channels: 24,
                kernel: 3,
                stride: 2,
                dilation: 1,
                dropout: 0.0,
                residual: ResidualMode::None,
                se: false,
            },
            BlockSpec {
                block_type: BlockType::B,
                conv_layers: 2,
                out_channels: 32,
                kernel: 5,
                stride: 1,
                dilation: 1,
                dropout: 0.0,
                residual: ResidualMode::Dense,
                se: true,
            },
            BlockSpec {
                block_type: BlockType::C,
                conv_layers: 1,
                out_channels: 5,
                kernel: 1,
                stride: 1,
                dilation: 1,
                dropout: 0.0,
                residual: ResidualMode::None,
                se: false,
            },
        ],
        normalization: NormKind::Batch,
        seed: 101,
    }
}

pub fn train_config(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        lr: 2e-3,
        batch_size: 8,
        max_epochs,
        patience: 1000, // let the epoch budget decide
        eval_every: 1,
        seed: 7,
        taco: None,
        weight_policy: WeightPolicy::Uniform,
        grad_clip_norm: Some(5.0),
        cosine_decay: false,
    }
}

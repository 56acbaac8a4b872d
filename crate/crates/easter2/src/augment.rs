//! Tiling-and-corruption (TACo) augmentation.
//!
//! The image is cut into equal tiles (a final partial tile keeps its
//! natural size), each tile is independently replaced by a corrupted one
//! with probability `C_p`, and the tiles are stitched back in order, so
//! output dimensions always equal input dimensions. Vertical orientation
//! tiles across the width, horizontal across the height; hybrid applies
//! vertical then horizontal with independently sampled tile widths. The
//! tile width is drawn once per pass, uniformly from `ceil(H/10)..=T_max`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TacoOrientation {
    Vertical,
    Horizontal,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionKind {
    Black,
    White,
    Mean,
    Random,
    Miscellaneous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TacoConfig {
    /// Probability that a tile is replaced.
    pub corruption_prob: f32,
    /// Upper end of the tile-width range; `null` means the image height.
    #[serde(default)]
    pub max_tile_width: Option<usize>,
    pub orientation: TacoOrientation,
    pub kind: CorruptionKind,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TacoConfig {
    /// The strongest settings from the corruption-type and tile-width
    /// sweeps: random noise, both orientations, `T_max = H`.
    fn default() -> Self {
        TacoConfig {
            corruption_prob: 0.25,
            max_tile_width: None,
            orientation: TacoOrientation::Hybrid,
            kind: CorruptionKind::Random,
            seed: 0,
        }
    }
}

impl TacoConfig {
    pub fn validate_for_height(&self, h: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.corruption_prob) {
            return Err(Error::config(format!(
                "corruption_prob must be in [0,1], got {}",
                self.corruption_prob
            )));
        }
        let t_max = self.max_tile_width.unwrap_or(h);
        if t_max < h.div_ceil(10) {
            return Err(Error::config(format!(
                "max_tile_width {t_max} below minimum tile width {} for height {h}",
                h.div_ceil(10)
            )));
        }
        Ok(())
    }
}

/// Integer tile width drawn uniformly from `ceil(H/10)..=T_max`.
pub fn sample_tile_width(h: usize, t_max: usize, rng: &mut Rng) -> Result<usize> {
    let lo = h.div_ceil(10);
    if t_max < lo {
        return Err(Error::config(format!(
            "tile width range inverted: ceil({h}/10) = {lo} > T_max = {t_max}"
        )));
    }
    Ok(rng.gen_range(lo..=t_max))
}

/// Replacement tile of the given dimensions.
pub fn make_corrupt_tile(
    kind: CorruptionKind,
    h: usize,
    w: usize,
    source_tile: &GrayImage,
    rng: &mut Rng,
) -> GrayImage {
    match kind {
        CorruptionKind::Black => GrayImage::filled(w, h, 0),
        CorruptionKind::White => GrayImage::filled(w, h, 255),
        CorruptionKind::Mean => {
            let sum: u64 = source_tile.pixels().iter().map(|&p| p as u64).sum();
            let mean = (sum as f64 / source_tile.pixels().len() as f64).round() as u8;
            GrayImage::filled(w, h, mean)
        }
        CorruptionKind::Random => {
            let pixels: Vec<u8> = (0..w * h).map(|_| rng.gen::<u8>()).collect();
            GrayImage::new(w, h, pixels).expect("positive tile dims")
        }
        CorruptionKind::Miscellaneous => {
            let pick = match rng.gen_range(0..4u8) {
                0 => CorruptionKind::Black,
                1 => CorruptionKind::White,
                2 => CorruptionKind::Mean,
                _ => CorruptionKind::Random,
            };
            make_corrupt_tile(pick, h, w, source_tile, rng)
        }
    }
}

/// One tiling pass. `vertical` tiles across the width, otherwise across
/// the height. Corruption draws `p in [0,1)` per tile and replaces it when
/// `p <= C_p`; `C_p = 0` never corrupts so the pass is a bit-identity.
fn taco_pass(
    img: &mut GrayImage,
    tile_w: usize,
    cp: f32,
    kind: CorruptionKind,
    vertical: bool,
    rng: &mut Rng,
) {
    let (w, h) = (img.width(), img.height());
    let extent = if vertical { w } else { h };
    let mut start = 0usize;
    while start < extent {
        let span = tile_w.min(extent - start);
        let p: f32 = rng.gen();
        if cp > 0.0 && p <= cp {
            let (x0, y0, tw, th) = if vertical {
                (start, 0, span, h)
            } else {
                (0, start, w, span)
            };
            let source = img.crop(x0, y0, tw, th);
            let corrupt = make_corrupt_tile(kind, th, tw, &source, rng);
            img.paste(x0, y0, &corrupt);
        }
        start += span;
    }
}

/// Apply TACo. Output dimensions equal input dimensions exactly.
pub fn taco(img: &GrayImage, cfg: &TacoConfig, rng: &mut Rng) -> Result<GrayImage> {
    cfg.validate_for_height(img.height())?;
    let t_max = cfg.max_tile_width.unwrap_or(img.height());
    let mut out = img.clone();
    let passes: &[bool] = match cfg.orientation {
        TacoOrientation::Vertical => &[true],
        TacoOrientation::Horizontal => &[false],
        TacoOrientation::Hybrid => &[true, false],
    };
    for &vertical in passes {
        let tile_w = sample_tile_width(img.height(), t_max, rng)?;
        taco_pass(&mut out, tile_w, cfg.corruption_prob, cfg.kind, vertical, rng);
    }
    Ok(out)
}

/// Width of the separator column in preview renderings.
pub const PREVIEW_SEPARATOR: usize = 8;

/// Side-by-side before/after rendering, written as binary PGM.
pub fn preview(
    img: &GrayImage,
    cfg: &TacoConfig,
    rng: &mut Rng,
    out_path: &std::path::Path,
) -> Result<()> {
    let augmented = taco(img, cfg, rng)?;
    let (w, h) = (img.width(), img.height());
    let mut canvas = GrayImage::filled(2 * w + PREVIEW_SEPARATOR, h, 128);
    canvas.paste(0, 0, img);
    canvas.paste(w + PREVIEW_SEPARATOR, 0, &augmented);
    canvas.write_pgm(out_path)
}

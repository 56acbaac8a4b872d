//! 8-bit grayscale images: PGM (P5) read/write, optional PNG read, and
//! bilinear height scaling.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major 8-bit grayscale image. Ink is dark (low values), background
/// is light, as scanned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<GrayImage> {
        if width == 0 || height == 0 {
            return Err(Error::data(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::data(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> GrayImage {
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Copy of the rectangle `[x0, x0+w) x [y0, y0+h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> GrayImage {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop bounds");
        let mut pixels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            pixels.extend_from_slice(&self.pixels[y * self.width + x0..][..w]);
        }
        GrayImage {
            width: w,
            height: h,
            pixels,
        }
    }

    /// Overwrite the rectangle at `(x0, y0)` with `src`.
    pub fn paste(&mut self, x0: usize, y0: usize, src: &GrayImage) {
        assert!(
            x0 + src.width <= self.width && y0 + src.height <= self.height,
            "paste bounds"
        );
        for y in 0..src.height {
            let dst = &mut self.pixels[(y0 + y) * self.width + x0..][..src.width];
            dst.copy_from_slice(&src.pixels[y * src.width..][..src.width]);
        }
    }

    /// Bilinear resize to the target height, preserving aspect ratio.
    pub fn resize_to_height(&self, target_height: usize) -> Result<GrayImage> {
        if target_height == 0 {
            return Err(Error::data("target height must be positive".to_string()));
        }
        if target_height == self.height {
            return Ok(self.clone());
        }
        let scale = target_height as f64 / self.height as f64;
        let target_width = ((self.width as f64 * scale).round() as usize).max(1);
        self.resize(target_width, target_height)
    }

    /// Bilinear resize with pixel-center alignment.
    pub fn resize(&self, target_width: usize, target_height: usize) -> Result<GrayImage> {
        if target_width == 0 || target_height == 0 {
            return Err(Error::data("target dimensions must be positive".to_string()));
        }
        let sx = self.width as f64 / target_width as f64;
        let sy = self.height as f64 / target_height as f64;
        let mut pixels = Vec::with_capacity(target_width * target_height);
        for y in 0..target_height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for x in 0..target_width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                let p00 = self.get(x0, y0) as f64;
                let p10 = self.get(x1, y0) as f64;
                let p01 = self.get(x0, y1) as f64;
                let p11 = self.get(x1, y1) as f64;
                let top = p00 + (p10 - p00) * wx;
                let bot = p01 + (p11 - p01) * wx;
                let v = top + (bot - top) * wy;
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
        GrayImage::new(target_width, target_height, pixels)
    }

    /// Read a PGM (P5) or, by extension, an 8-bit grayscale PNG.
    pub fn read(path: &Path) -> Result<GrayImage> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("png") => read_png(path),
            _ => read_pgm(path),
        }
    }

    /// Write as binary PGM (P5).
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.pixels.len() + 32);
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.extend_from_slice(&self.pixels);
        fs::write(path, out)?;
        Ok(())
    }
}

fn read_png(path: &Path) -> Result<GrayImage> {
    let img = image::open(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let luma = img.to_luma8();
    GrayImage::new(
        luma.width() as usize,
        luma.height() as usize,
        luma.into_raw(),
    )
}

fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes =
        fs::read(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    parse_pgm(&bytes).map_err(|msg| Error::data(format!("{}: {msg}", path.display())))
}

/// Binary PGM parser: `P5`, whitespace/comments, width, height, maxval,
/// single whitespace byte, then raw pixel data.
pub fn parse_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let mut pos = 0usize;
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err("not a binary PGM (missing P5 magic)".to_string());
    }
    pos += 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and '#' comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err("malformed PGM header".to_string());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| "header value out of range".to_string())?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval} (8-bit only)"));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("missing separator before pixel data".to_string());
    }
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(format!(
            "truncated pixel data: need {need}, have {}",
            bytes.len() - pos
        ));
    }
    GrayImage::new(width, height, bytes[pos..pos + need].to_vec()).map_err(|e| e.to_string())
}

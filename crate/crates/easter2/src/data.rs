//! Corpus ingestion and batching.
//!
//! The engine never touches a corpus's native layout: callers provide a
//! tab-separated manifest (`image-path<TAB>transcription`), a vocabulary
//! file (one character per line, order-significant), and PGM/PNG line
//! images. Preprocessing scales each image to a fixed height, maps
//! intensities to `[0,1]` and inverts them so ink is high and background
//! is zero; width padding is then numerically neutral.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom as _;
use rand::Rng as _;

use crate::augment::{taco, TacoConfig};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::rng::{rng_stream, Rng};
use crate::tensor::Tensor;

// ── Vocabulary ─────────────────────────────────────────────────────

/// Ordered character set; the CTC blank sits at index `size()` and is not
/// a corpus character.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Vocabulary {
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Result<Vocabulary> {
        let chars: Vec<char> = chars.into_iter().collect();
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(Error::data(format!("duplicate vocabulary character {c:?}")));
            }
        }
        if chars.is_empty() {
            return Err(Error::data("vocabulary is empty".to_string()));
        }
        Ok(Vocabulary { chars, index })
    }

    /// One character per line, order-significant. A line holding a single
    /// space denotes the space character; CRLF is accepted.
    pub fn load(path: &Path) -> Result<Vocabulary> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read vocabulary {}: {e}", path.display())))?;
        let mut chars = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            let mut it = line.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => chars.push(c),
                (None, _) => {
                    return Err(Error::data(format!(
                        "{}: line {}: empty line in vocabulary",
                        path.display(),
                        i + 1
                    )))
                }
                (Some(_), Some(_)) => {
                    return Err(Error::data(format!(
                        "{}: line {}: expected a single character, got {line:?}",
                        path.display(),
                        i + 1
                    )))
                }
            }
        }
        Vocabulary::from_chars(chars)
    }

    pub fn size(&self) -> usize {
        self.chars.len()
    }

    /// Index of the CTC blank (one past the last character).
    pub fn blank_id(&self) -> usize {
        self.chars.len()
    }

    /// Model output classes: characters plus the blank.
    pub fn model_classes(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn id_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                self.id_of(c)
                    .ok_or_else(|| Error::data(format!("character {c:?} not in vocabulary")))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        ids.iter()
            .map(|&id| {
                self.chars
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::data(format!("id {id} outside vocabulary")))
            })
            .collect()
    }
}

// ── Samples and manifests ──────────────────────────────────────────

#[derive(Debug, Clone)]
pub enum SampleSource {
    Path(PathBuf),
    Memory(GrayImage),
}

/// One labelled line image.
#[derive(Debug, Clone)]
pub struct Sample {
    pub source: SampleSource,
    pub text: String,
    pub split: String,
}

impl Sample {
    pub fn load_image(&self) -> Result<GrayImage> {
        match &self.source {
            SampleSource::Path(p) => GrayImage::read(p),
            SampleSource::Memory(img) => Ok(img.clone()),
        }
    }
}

/// Parse a manifest: UTF-8, LF or CRLF, one `path<TAB>transcription` record
/// per line. Relative image paths resolve against the manifest's directory.
/// Transcriptions must be non-empty and fully in-vocabulary; every offending
/// line is reported by number.
pub fn load_manifest(path: &Path, vocab: &Vocabulary, split: &str) -> Result<Vec<Sample>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read manifest {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut samples = Vec::new();
    let mut bad_lines = String::new();
    let mut bad_count = 0usize;
    let mut report = |line_no: usize, msg: String, bad_lines: &mut String| {
        if bad_count < 8 {
            let _ = write!(bad_lines, "\n  line {line_no}: {msg}");
        }
        bad_count += 1;
    };
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let Some((img, transcription)) = line.split_once('\t') else {
            report(line_no, "missing tab separator".to_string(), &mut bad_lines);
            continue;
        };
        if img.is_empty() {
            report(line_no, "empty image path".to_string(), &mut bad_lines);
            continue;
        }
        if transcription.is_empty() {
            report(line_no, "empty transcription".to_string(), &mut bad_lines);
            continue;
        }
        let unknown: Vec<char> = transcription
            .chars()
            .filter(|&c| vocab.id_of(c).is_none())
            .collect();
        if !unknown.is_empty() {
            report(
                line_no,
                format!("characters outside vocabulary: {unknown:?}"),
                &mut bad_lines,
            );
            continue;
        }
        let img_path = base.join(img);
        samples.push(Sample {
            source: SampleSource::Path(img_path),
            text: transcription.to_string(),
            split: split.to_string(),
        });
    }
    if bad_count > 0 {
        return Err(Error::data(format!(
            "{}: {} malformed line(s):{}{}",
            path.display(),
            bad_count,
            bad_lines,
            if bad_count > 8 { "\n  ..." } else { "" }
        )));
    }
    Ok(samples)
}

// ── Preprocessing ──────────────────────────────────────────────────

/// Scale to the target height (bilinear, aspect preserved), map to `[0,1]`,
/// invert so ink is high, and transpose into width-major frames of
/// `target_height` channels: output is `[W', H]`.
pub fn preprocess(img: &GrayImage, target_height: usize) -> Result<Tensor> {
    if target_height < 8 {
        return Err(Error::config(format!(
            "target height must be >= 8, got {target_height}"
        )));
    }
    let scaled = img.resize_to_height(target_height)?;
    let (w, h) = (scaled.width(), scaled.height());
    let mut out = Tensor::zeros(&[w, h]);
    let o = out.data_mut();
    for x in 0..w {
        for y in 0..h {
            o[x * h + y] = 1.0 - scaled.get(x, y) as f32 / 255.0;
        }
    }
    Ok(out)
}

// ── Batching ───────────────────────────────────────────────────────

/// Padded image batch with encoded labels.
pub struct Batch {
    /// `[B, W_max, H]`, padding frames are background (zero).
    pub images: Tensor,
    pub true_widths: Vec<usize>,
    pub labels: Vec<Vec<usize>>,
}

impl Batch {
    pub fn label_lengths(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.len()).collect()
    }
}

/// Load, optionally augment (train only), preprocess and right-pad a set of
/// samples into one batch. Augmentation draws a per-sample stream from the
/// batch rng so sample `i`'s noise does not depend on batch composition
/// before it.
pub fn make_batch(
    samples: &[Sample],
    vocab: &Vocabulary,
    taco_cfg: Option<&TacoConfig>,
    target_height: usize,
    rng: &mut Rng,
) -> Result<Batch> {
    if samples.is_empty() {
        return Err(Error::data("cannot build an empty batch".to_string()));
    }
    let mut frames: Vec<Tensor> = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for sample in samples {
        let mut img = sample.load_image()?;
        if let Some(cfg) = taco_cfg {
            let mut sub = rng_stream(rng.gen::<u64>(), &[]);
            img = taco(&img, cfg, &mut sub)?;
        }
        frames.push(preprocess(&img, target_height)?);
        labels.push(vocab.encode(&sample.text)?);
    }
    let w_max = frames.iter().map(|f| f.dim(0)).max().unwrap();
    let h = target_height;
    let mut images = Tensor::zeros(&[samples.len(), w_max, h]);
    let mut true_widths = Vec::with_capacity(samples.len());
    for (bi, f) in frames.iter().enumerate() {
        let w = f.dim(0);
        images.data_mut()[bi * w_max * h..][..w * h].copy_from_slice(f.data());
        true_widths.push(w);
    }
    Ok(Batch {
        images,
        true_widths,
        labels,
    })
}

// ── Long-line synthesis ────────────────────────────────────────────

/// Synthesize long lines by horizontally stacking two uniformly drawn
/// samples with a background gap between them; labels join with a space.
/// Images are never resampled: a shorter image is bottom-padded with
/// background so the pair's total ink is preserved exactly.
pub fn synth_long_lines(
    samples: &[Sample],
    count: usize,
    gap: usize,
    rng: &mut Rng,
) -> Result<Vec<Sample>> {
    if samples.len() < 2 {
        return Err(Error::data(
            "long-line synthesis needs at least 2 source samples".to_string(),
        ));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let a = &samples[rng.gen_range(0..samples.len())];
        let b = &samples[rng.gen_range(0..samples.len())];
        let img_a = a.load_image()?;
        let img_b = b.load_image()?;
        let h = img_a.height().max(img_b.height());
        let w = img_a.width() + gap + img_b.width();
        let mut canvas = GrayImage::filled(w, h, 255);
        canvas.paste(0, 0, &img_a);
        canvas.paste(img_a.width() + gap, 0, &img_b);
        out.push(Sample {
            source: SampleSource::Memory(canvas),
            text: format!("{} {}", a.text, b.text),
            split: "long-lines".to_string(),
        });
    }
    Ok(out)
}

/// Default gap between stacked images, in pixels at a line height of 80.
pub const DEFAULT_LONG_LINE_GAP: usize = 16;

// ── Few-shot subsetting ────────────────────────────────────────────

/// Seeded uniform subset of size `floor(fraction * N)`, without
/// replacement. Implemented as a prefix of one seeded permutation, so for
/// a fixed seed the `a`-fraction subset nests inside the `b`-fraction
/// subset whenever `a <= b`.
pub fn few_shot_subset(samples: &[Sample], fraction: f64, seed: u64) -> Result<Vec<Sample>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config(format!(
            "fraction must be in (0,1], got {fraction}"
        )));
    }
    let k = ((fraction * samples.len() as f64).floor() as usize).min(samples.len());
    if k == 0 {
        return Err(Error::config(format!(
            "fraction {fraction} of {} samples selects nothing",
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = rng_stream(seed, &[0x5b5e7]);
    order.shuffle(&mut rng);
    Ok(order[..k].iter().map(|&i| samples[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn vocab_abc() -> Vocabulary {
        Vocabulary::from_chars("abc ".chars()).unwrap()
    }

    fn write_img(dir: &Path, name: &str, w: usize, h: usize, v: u8) -> PathBuf {
        let p = dir.join(name);
        GrayImage::filled(w, h, v).write_pgm(&p).unwrap();
        p
    }

    #[test]
    fn vocabulary_round_trip() {
        let v = vocab_abc();
        assert_eq!(v.size(), 4);
        assert_eq!(v.blank_id(), 4);
        let ids = v.encode("cab a").unwrap();
        assert_eq!(v.decode(&ids).unwrap(), "cab a");
        assert!(v.encode("xyz").is_err());
        assert!(v.decode(&[9]).is_err());
    }

    #[test]
    fn vocabulary_file_is_order_significant() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.txt");
        std::fs::write(&p, "b\na\n \nc\n").unwrap();
        let v = Vocabulary::load(&p).unwrap();
        assert_eq!(v.chars(), &['b', 'a', ' ', 'c']);
        assert_eq!(v.id_of('a'), Some(1));
    }

    #[test]
    fn duplicate_vocabulary_characters_are_rejected() {
        assert!(Vocabulary::from_chars("aba".chars()).is_err());
    }

    #[test]
    fn manifest_parses_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        write_img(dir.path(), "x.pgm", 10, 8, 255);
        write_img(dir.path(), "y.pgm", 12, 8, 255);
        let m = dir.path().join("m.tsv");
        std::fs::write(&m, "x.pgm\tab\ny.pgm\tc a\n").unwrap();
        let samples = load_manifest(&m, &vocab_abc(), "train").unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].text, "ab");
        assert_eq!(samples[1].text, "c a");
        assert_eq!(samples[0].split, "train");
        // relative path resolved against the manifest directory
        assert!(samples[0].load_image().is_ok());
    }

    #[test]
    fn manifest_unknown_character_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.tsv");
        std::fs::write(&m, "x.pgm\tab\ny.pgm\tQ\n").unwrap();
        let err = load_manifest(&m, &vocab_abc(), "train").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains('Q'), "{msg}");
    }

    #[test]
    fn manifest_accepts_crlf() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.tsv");
        std::fs::write(&m, "x.pgm\tab\r\ny.pgm\tc\r\n").unwrap();
        let samples = load_manifest(&m, &vocab_abc(), "t").unwrap();
        assert_eq!(samples[0].text, "ab");
        assert_eq!(samples[1].text, "c");
    }

    #[test]
    fn manifest_rejects_missing_tab_and_empty_text() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.tsv");
        std::fs::write(&m, "no-separator-here\nx.pgm\t\n").unwrap();
        let msg = load_manifest(&m, &vocab_abc(), "t").unwrap_err().to_string();
        assert!(msg.contains("line 1"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
        assert!(load_manifest(Path::new("/nonexistent/m.tsv"), &vocab_abc(), "t").is_err());
    }

    #[test]
    fn preprocess_keeps_width_at_native_height() {
        let img = GrayImage::filled(33, 16, 255);
        let t = preprocess(&img, 16).unwrap();
        assert_eq!(t.shape(), &[33, 16]);
    }

    #[test]
    fn preprocess_inverts_background_to_zero() {
        let img = GrayImage::filled(20, 16, 255);
        let t = preprocess(&img, 16).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
        let ink = GrayImage::filled(20, 16, 0);
        let t = preprocess(&ink, 16).unwrap();
        assert!(t.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn preprocess_downscale_matches_bilinear_oracle() {
        // 2x height input: width halves (rounded), values match a direct
        // pixel-center bilinear computation within 1/255
        let mut rng = rng_from_seed(5);
        use rand::Rng as _;
        let (w0, h0, h1) = (31usize, 32usize, 16usize);
        let src = GrayImage::new(
            w0,
            h0,
            (0..w0 * h0).map(|_| rng.gen::<u8>()).collect(),
        )
        .unwrap();
        let t = preprocess(&src, h1).unwrap();
        let w1 = ((w0 as f64 * h1 as f64 / h0 as f64).round()) as usize;
        assert_eq!(t.shape(), &[w1, h1]);
        let sx = w0 as f64 / w1 as f64;
        let sy = h0 as f64 / h1 as f64;
        for x in 0..w1 {
            for y in 0..h1 {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w0 - 1) as f64);
                let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h0 - 1) as f64);
                let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(w0 - 1), (y0 + 1).min(h0 - 1));
                let (wx, wy) = (fx - x0 as f64, fy - y0 as f64);
                let p = |xx: usize, yy: usize| src.get(xx, yy) as f64;
                let top = p(x0, y0) * (1.0 - wx) + p(x1, y0) * wx;
                let bot = p(x0, y1) * (1.0 - wx) + p(x1, y1) * wx;
                let want = 1.0 - (top * (1.0 - wy) + bot * wy).round() / 255.0;
                let got = t.data()[x * h1 + y] as f64;
                assert!(
                    (got - want).abs() <= 1.0 / 255.0 + 1e-9,
                    "({x},{y}): {got} vs {want}"
                );
            }
        }
    }

    fn mem_sample(w: usize, h: usize, v: u8, text: &str) -> Sample {
        Sample {
            source: SampleSource::Memory(GrayImage::filled(w, h, v)),
            text: text.to_string(),
            split: "test".to_string(),
        }
    }

    #[test]
    fn single_sample_batch_has_no_padding() {
        let s = mem_sample(40, 16, 255, "ab");
        let mut rng = rng_from_seed(6);
        let b = make_batch(&[s], &vocab_abc(), None, 16, &mut rng).unwrap();
        assert_eq!(b.images.shape(), &[1, 40, 16]);
        assert_eq!(b.true_widths, vec![40]);
        assert_eq!(b.labels, vec![vec![0, 1]]);
        assert_eq!(b.label_lengths(), vec![2]);
    }

    #[test]
    fn batch_pads_to_widest_with_background() {
        let s1 = mem_sample(100, 16, 0, "a");
        let s2 = mem_sample(60, 16, 0, "b");
        let mut rng = rng_from_seed(7);
        let b = make_batch(&[s1, s2], &vocab_abc(), None, 16, &mut rng).unwrap();
        assert_eq!(b.images.shape(), &[2, 100, 16]);
        assert_eq!(b.true_widths, vec![100, 60]);
        // sample 2 frames 60..100 are background zeros
        for x in 60..100 {
            for y in 0..16 {
                assert_eq!(b.images.data()[(100 + x) * 16 + y], 0.0);
            }
        }
        // its true frames carry ink
        assert!(b.images.data()[100 * 16] > 0.9);
    }

    #[test]
    fn batch_padding_never_alters_true_frames() {
        let wide = mem_sample(90, 16, 10, "ab");
        let narrow = mem_sample(33, 16, 80, "c");
        let solo = {
            let mut rng = rng_from_seed(8);
            make_batch(
                &[narrow.clone()],
                &vocab_abc(),
                None,
                16,
                &mut rng,
            )
            .unwrap()
        };
        let padded = {
            let mut rng = rng_from_seed(9);
            make_batch(&[wide, narrow], &vocab_abc(), None, 16, &mut rng).unwrap()
        };
        let w = solo.true_widths[0];
        let a = &solo.images.data()[..w * 16];
        let b = &padded.images.data()[90 * 16..][..w * 16];
        assert_eq!(a, b);
    }

    #[test]
    fn taco_with_zero_probability_leaves_batch_unchanged() {
        let s = mem_sample(64, 16, 128, "ab");
        let cfg = TacoConfig {
            corruption_prob: 0.0,
            ..TacoConfig::default()
        };
        let mut r1 = rng_from_seed(10);
        let mut r2 = rng_from_seed(10);
        let plain = make_batch(&[s.clone()], &vocab_abc(), None, 16, &mut r1).unwrap();
        let auged = make_batch(&[s], &vocab_abc(), Some(&cfg), 16, &mut r2).unwrap();
        assert_eq!(plain.images.data(), auged.images.data());
    }

    #[test]
    fn long_lines_widths_and_labels() {
        let a = mem_sample(100, 80, 0, "the");
        let b = mem_sample(100, 80, 0, "cat");
        let mut rng = rng_from_seed(11);
        let out = synth_long_lines(&[a, b], 10, 20, &mut rng).unwrap();
        assert_eq!(out.len(), 10);
        for s in &out {
            let img = s.load_image().unwrap();
            assert_eq!(img.height(), 80);
            assert_eq!(img.width(), 220);
            let (t1, t2) = s.text.split_once(' ').unwrap();
            assert!(["the", "cat"].contains(&t1));
            assert!(["the", "cat"].contains(&t2));
            // gap region is background
            for x in 100..120 {
                for y in 0..80 {
                    assert_eq!(img.get(x, y), 255, "gap pixel at ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn long_lines_preserve_total_ink() {
        let ink = |img: &GrayImage| -> u64 {
            img.pixels().iter().map(|&p| 255 - p as u64).sum()
        };
        let a = mem_sample(30, 20, 17, "a");
        let b = mem_sample(45, 24, 101, "b"); // different height: padded, not scaled
        let ia = ink(&a.load_image().unwrap());
        let ib = ink(&b.load_image().unwrap());
        let mut rng = rng_from_seed(12);
        let out = synth_long_lines(&[a, b], 20, 16, &mut rng).unwrap();
        for s in &out {
            let got = ink(&s.load_image().unwrap());
            let want_options = [2 * ia, ia + ib, 2 * ib];
            assert!(want_options.contains(&got), "ink {got} not a source sum");
        }
    }

    #[test]
    fn few_shot_full_fraction_keeps_all_samples_shuffled() {
        let samples: Vec<Sample> = (0..10)
            .map(|i| mem_sample(10 + i, 16, 0, "a"))
            .collect();
        let out = few_shot_subset(&samples, 1.0, 3).unwrap();
        assert_eq!(out.len(), 10);
        let mut widths: Vec<usize> = out
            .iter()
            .map(|s| s.load_image().unwrap().width())
            .collect();
        widths.sort();
        assert_eq!(widths, (10..20).collect::<Vec<_>>());
    }

    #[test]
    fn few_shot_size_uses_floor() {
        let samples: Vec<Sample> = (0..6482).map(|_| mem_sample(10, 16, 0, "a")).collect();
        let out = few_shot_subset(&samples, 0.2, 1).unwrap();
        assert_eq!(out.len(), 1296);
    }

    #[test]
    fn few_shot_same_seed_same_subset_and_nesting() {
        let samples: Vec<Sample> = (0..50)
            .map(|i| mem_sample(10 + i, 16, 0, "a"))
            .collect();
        let key = |s: &Sample| s.load_image().unwrap().width();
        let a1: Vec<usize> = few_shot_subset(&samples, 0.3, 9)
            .unwrap()
            .iter()
            .map(key)
            .collect();
        let a2: Vec<usize> = few_shot_subset(&samples, 0.3, 9)
            .unwrap()
            .iter()
            .map(key)
            .collect();
        assert_eq!(a1, a2);
        let b: Vec<usize> = few_shot_subset(&samples, 0.7, 9)
            .unwrap()
            .iter()
            .map(key)
            .collect();
        // prefix property: the smaller subset is a prefix of the larger
        assert_eq!(a1[..], b[..a1.len()]);
    }

    #[test]
    fn few_shot_rejects_empty_result() {
        let samples = vec![mem_sample(10, 16, 0, "a"); 3];
        assert!(few_shot_subset(&samples, 0.1, 1).is_err());
        assert!(few_shot_subset(&samples, 0.0, 1).is_err());
        assert!(few_shot_subset(&samples, 1.5, 1).is_err());
    }

    mod round_trip_property {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn encode_decode_round_trip(s in "[abc ]{1,40}") {
                let v = vocab_abc();
                let ids = v.encode(&s).unwrap();
                prop_assert_eq!(v.decode(&ids).unwrap(), s);
            }

            #[test]
            fn decode_encode_round_trip(ids in proptest::collection::vec(0usize..4, 1..40)) {
                let v = vocab_abc();
                let s = v.decode(&ids).unwrap();
                prop_assert_eq!(v.encode(&s).unwrap(), ids);
            }
        }
    }
}

//! The training loop: seeded shuffling, train-only augmentation, CTC
//! steps under Adam with global-norm clipping, per-epoch validation CER,
//! best-checkpoint retention and early stopping.
//!
//! Every stochastic choice in epoch `e` is drawn from a stream keyed by
//! `(seed, e, ...)`, never from a generator that survived earlier epochs,
//! so a resumed run replays the remaining epochs bit for bit.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::TacoConfig;
use crate::ctc::{batch_ctc, greedy_decode};
use crate::data::{make_batch, Batch, Sample, Vocabulary};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::Mode;
use crate::rng::{rng_from_seed, rng_stream};
use crate::tensor::Tensor;
use crate::train::adam::{adam_step, AdamParams, AdamState};
use crate::train::checkpoint::{save_checkpoint, TrainProgress};

/// Per-sample CTC weight policy (the w-CTC hook). `Uniform` is standard
/// CTC. `LabelLength` is the pluggable built-in policy slot; its current
/// form `L / max(1, L)` is the identity for non-empty labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightPolicy {
    #[default]
    Uniform,
    LabelLength,
}

impl WeightPolicy {
    pub fn weight(&self, label_len: usize) -> f32 {
        match self {
            WeightPolicy::Uniform => 1.0,
            WeightPolicy::LabelLength => label_len as f32 / label_len.max(1) as f32,
        }
    }
}

fn default_lr() -> f32 {
    1e-3
}
fn default_batch_size() -> usize {
    32
}
fn default_patience() -> usize {
    20
}
fn default_eval_every() -> usize {
    1
}
fn default_grad_clip() -> Option<f32> {
    Some(5.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f32,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-CER improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Validate every n-th epoch.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub taco: Option<TacoConfig>,
    #[serde(default)]
    pub weight_policy: WeightPolicy,
    /// Global-norm gradient clip; CTC's early spikes make this a useful
    /// stabilizer. Disable (`null`) for strict-regime runs.
    #[serde(default = "default_grad_clip")]
    pub grad_clip_norm: Option<f32>,
    /// Cosine decay of the learning rate over `max_epochs`; constant when
    /// off.
    #[serde(default)]
    pub cosine_decay: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1".to_string()));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be >= 1".to_string()));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be >= 1".to_string()));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be >= 1".to_string()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }

    pub fn adam_params(&self) -> AdamParams {
        AdamParams {
            lr: self.lr,
            ..AdamParams::default()
        }
    }

    fn lr_at(&self, epoch: u64) -> f32 {
        if self.cosine_decay {
            let t = epoch as f64 / self.max_epochs.max(1) as f64;
            (self.lr as f64 * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())) as f32
        } else {
            self.lr
        }
    }
}

/// One metrics-log record, also serialized as a JSON line per epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub train_loss: f64,
    pub val_cer: Option<f64>,
    pub seconds: f64,
    pub skipped_samples: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_val_cer: Option<f64>,
    pub best_epoch: Option<u64>,
    pub stopped_early: bool,
}

/// Strict-improvement early stopping on validation CER.
pub struct EarlyStopper {
    patience: u64,
    pub best: Option<f64>,
    pub best_epoch: Option<u64>,
    pub since_improvement: u64,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> EarlyStopper {
        EarlyStopper {
            patience: patience as u64,
            best: None,
            best_epoch: None,
            since_improvement: 0,
        }
    }

    /// Returns true when `cer` strictly improves on the best so far.
    pub fn observe(&mut self, epoch: u64, cer: f64) -> bool {
        match self.best {
            Some(best) if cer >= best => {
                self.since_improvement += 1;
                false
            }
            _ => {
                self.best = Some(cer);
                self.best_epoch = Some(epoch);
                self.since_improvement = 0;
                true
            }
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_improvement >= self.patience
    }
}

/// Greedy transcriptions for a set of samples, batched, infer mode.
pub fn transcribe(
    model: &mut Model,
    vocab: &Vocabulary,
    samples: &[Sample],
    batch_size: usize,
) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(samples.len());
    let height = model.config.input_height;
    let blank = model.config.blank_id();
    for chunk in samples.chunks(batch_size.max(1)) {
        let mut rng = rng_from_seed(0); // unused in infer mode
        let batch: Batch = make_batch(chunk, vocab, None, height, &mut rng)?;
        let (logits, out_lengths) =
            model.forward(&batch.images, &batch.true_widths, Mode::Infer, &mut rng)?;
        let (t_len, v) = (logits.dim(1), logits.dim(2));
        for (bi, &len) in out_lengths.iter().enumerate() {
            let sample_logits = Tensor::from_vec(
                &[len, v],
                logits.data()[bi * t_len * v..][..len * v].to_vec(),
            );
            let ids = greedy_decode(&sample_logits, blank);
            out.push(vocab.decode(&ids)?);
        }
    }
    Ok(out)
}

/// Validation CER: greedy-decode the set and micro-average against the
/// references.
pub fn validation_cer(
    model: &mut Model,
    vocab: &Vocabulary,
    samples: &[Sample],
    batch_size: usize,
) -> Result<f64> {
    let hyps = transcribe(model, vocab, samples, batch_size)?;
    let pairs: Vec<(&str, &str)> = samples
        .iter()
        .zip(hyps.iter())
        .map(|(s, h)| (s.text.as_str(), h.as_str()))
        .collect();
    Ok(crate::eval::corpus_cer(pairs)?.cer_percent)
}

/// A resumable training session: model, optimizer state and progress.
pub struct FitSession {
    pub model: Model,
    pub adam: AdamState,
    pub vocab: Vocabulary,
    pub progress: TrainProgress,
}

impl FitSession {
    pub fn new(model: Model, vocab: Vocabulary, cfg: &TrainConfig) -> Result<FitSession> {
        cfg.validate()?;
        if model.config.vocab_size != vocab.model_classes() {
            return Err(Error::config(format!(
                "model vocab_size {} does not match vocabulary ({} chars + blank)",
                model.config.vocab_size,
                vocab.size()
            )));
        }
        Ok(FitSession {
            adam: AdamState::new(cfg.adam_params()),
            model,
            vocab,
            progress: TrainProgress::default(),
        })
    }

    pub fn resume(path: &Path) -> Result<FitSession> {
        let (model, adam, vocab, progress) = crate::train::checkpoint::load_checkpoint(path)?;
        Ok(FitSession {
            model,
            adam,
            vocab,
            progress,
        })
    }

    /// Run (or continue) training. With an output directory, writes
    /// `checkpoint.best`, `checkpoint.last` and appends `metrics.jsonl`.
    pub fn fit(
        &mut self,
        train_set: &[Sample],
        val_set: &[Sample],
        cfg: &TrainConfig,
        out_dir: Option<&Path>,
    ) -> Result<TrainReport> {
        cfg.validate()?;
        if train_set.is_empty() || val_set.is_empty() {
            return Err(Error::data(
                "training and validation sets must be non-empty".to_string(),
            ));
        }
        let height = self.model.config.input_height;
        let blank = self.model.config.blank_id();

        let mut stopper = EarlyStopper::new(cfg.patience);
        stopper.best = self.progress.best_val_cer;
        stopper.since_improvement = self.progress.epochs_since_improve;

        let mut report = TrainReport {
            epochs: Vec::new(),
            best_val_cer: self.progress.best_val_cer,
            best_epoch: None,
            stopped_early: false,
        };

        for epoch in self.progress.epoch..cfg.max_epochs as u64 {
            let started = Instant::now();
            self.adam.hyper.lr = cfg.lr_at(epoch);

            let mut order: Vec<usize> = (0..train_set.len()).collect();
            {
                use rand::seq::SliceRandom as _;
                let mut shuffle_rng = rng_stream(cfg.seed, &[1, epoch]);
                order.shuffle(&mut shuffle_rng);
            }

            let mut loss_sum = 0.0f64;
            let mut loss_n = 0u64;
            let mut skipped_samples = 0u64;
            for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
                let samples: Vec<Sample> =
                    chunk.iter().map(|&i| train_set[i].clone()).collect();
                let mut data_rng = rng_stream(cfg.seed, &[2, epoch, batch_idx as u64]);
                let batch = make_batch(
                    &samples,
                    &self.vocab,
                    cfg.taco.as_ref(),
                    height,
                    &mut data_rng,
                )?;
                let mut model_rng = rng_stream(cfg.seed, &[3, epoch, batch_idx as u64]);
                let (logits, out_lengths, ctx) =
                    self.model
                        .forward_train(&batch.images, &batch.true_widths, &mut model_rng)?;
                let weights: Vec<f32> = batch
                    .labels
                    .iter()
                    .map(|l| cfg.weight_policy.weight(l.len()))
                    .collect();
                let res = batch_ctc(&logits, &out_lengths, &batch.labels, blank, &weights)?;
                if res.skipped.len() == samples.len() {
                    return Err(Error::data(format!(
                        "epoch {epoch} batch {batch_idx}: every sample is infeasible \
                         (labels longer than the downsampled width); widen inputs or \
                         shorten labels"
                    )));
                }
                skipped_samples += res.skipped.len() as u64;
                let contributing = (samples.len() - res.skipped.len()) as u64;
                loss_sum += res.mean_loss * contributing as f64;
                loss_n += contributing;

                let mut grads = self.model.backward(&ctx, &res.grad)?;
                if let Some(max_norm) = cfg.grad_clip_norm {
                    let norm = grads.global_norm();
                    if norm > max_norm as f64 {
                        grads.scale((max_norm as f64 / norm) as f32);
                    }
                }
                adam_step(&mut self.model, &grads, &mut self.adam)?;
            }
            let train_loss = if loss_n > 0 {
                loss_sum / loss_n as f64
            } else {
                0.0
            };

            let validate_now = (epoch + 1) % cfg.eval_every as u64 == 0
                || epoch + 1 == cfg.max_epochs as u64;
            let val_cer = if validate_now {
                Some(validation_cer(
                    &mut self.model,
                    &self.vocab,
                    val_set,
                    cfg.batch_size,
                )?)
            } else {
                None
            };

            let mut improved = false;
            if let Some(cer) = val_cer {
                improved = stopper.observe(epoch, cer);
            }
            self.progress.epoch = epoch + 1;
            self.progress.best_val_cer = stopper.best;
            self.progress.epochs_since_improve = stopper.since_improvement;

            if let Some(dir) = out_dir {
                if improved {
                    save_checkpoint(
                        &self.model,
                        &self.adam,
                        &self.vocab,
                        &self.progress,
                        &dir.join("checkpoint.best"),
                    )?;
                }
                save_checkpoint(
                    &self.model,
                    &self.adam,
                    &self.vocab,
                    &self.progress,
                    &dir.join("checkpoint.last"),
                )?;
            }

            let record = EpochRecord {
                epoch,
                train_loss,
                val_cer,
                seconds: started.elapsed().as_secs_f64(),
                skipped_samples,
            };
            if let Some(dir) = out_dir {
                let mut f = std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(dir.join("metrics.jsonl"))?;
                writeln!(f, "{}", serde_json::to_string(&record).unwrap())?;
            }
            report.epochs.push(record);
            report.best_val_cer = stopper.best;
            report.best_epoch = stopper.best_epoch;

            if stopper.should_stop() {
                report.stopped_early = true;
                break;
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopper_with_patience_one_stops_after_two_epochs() {
        let mut s = EarlyStopper::new(1);
        assert!(s.observe(0, 50.0));
        assert!(!s.should_stop());
        assert!(!s.observe(1, 60.0)); // strictly worse
        assert!(s.should_stop());
    }

    #[test]
    fn early_stopper_requires_strict_improvement() {
        let mut s = EarlyStopper::new(2);
        s.observe(0, 10.0);
        assert!(!s.observe(1, 10.0)); // equal is not an improvement
        assert!(s.observe(2, 9.9));
        assert_eq!(s.best_epoch, Some(2));
        assert_eq!(s.since_improvement, 0);
    }

    #[test]
    fn weight_policies() {
        assert_eq!(WeightPolicy::Uniform.weight(7), 1.0);
        assert_eq!(WeightPolicy::LabelLength.weight(7), 1.0);
        assert_eq!(WeightPolicy::LabelLength.weight(0), 0.0);
    }

    #[test]
    fn cosine_decay_halves_midway() {
        let cfg = TrainConfig {
            lr: 2.0,
            batch_size: 1,
            max_epochs: 100,
            patience: 1,
            eval_every: 1,
            seed: 0,
            taco: None,
            weight_policy: WeightPolicy::Uniform,
            grad_clip_norm: None,
            cosine_decay: true,
        };
        assert!((cfg.lr_at(0) - 2.0).abs() < 1e-6);
        assert!((cfg.lr_at(50) - 1.0).abs() < 1e-6);
        assert!(cfg.lr_at(99) < 0.01);
    }

    #[test]
    fn train_config_defaults_from_json() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"max_epochs": 5}"#).unwrap();
        assert_eq!(cfg.lr, 1e-3);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.patience, 20);
        assert_eq!(cfg.grad_clip_norm, Some(5.0));
        assert!(!cfg.cosine_decay);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"max_epochs":1,"bogus":2}"#).is_err());
    }
}

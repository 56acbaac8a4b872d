//! CTC loss, its brute-force oracle, and greedy decoding.
//!
//! The loss marginalizes over all frame-to-label alignments with the
//! classic forward-backward dynamic program over the blank-interleaved
//! label sequence. All lattice arithmetic runs in log space; gradients
//! w.r.t. the raw logits come out analytically as
//! `softmax(logits) - posterior symbol marginals`, scaled by an optional
//! per-sample weight.

use crate::error::{Error, Result};
use crate::numerics::log_softmax;
use crate::tensor::Tensor;

/// Forward/backward lattice over the blank-interleaved label.
pub struct CtcTable {
    /// `[T, 2L+1]` log forward scores.
    pub alpha: Tensor,
    /// `[T, 2L+1]` log backward scores.
    pub beta: Tensor,
    /// Blank-interleaved label, length `2L+1`.
    pub extended: Vec<usize>,
}

/// Frames required to emit the label: repeats need a separating blank.
pub fn required_frames(label: &[usize]) -> usize {
    label.len() + label.windows(2).filter(|w| w[0] == w[1]).count()
}

fn check_inputs(logits: &Tensor, label: &[usize], blank: usize, sample_weight: f32) -> Result<()> {
    if logits.rank() != 2 {
        return Err(Error::shape(format!(
            "ctc_loss logits must be [T,V], got {:?}",
            logits.shape()
        )));
    }
    let (t, v) = (logits.dim(0), logits.dim(1));
    if t == 0 || v == 0 {
        return Err(Error::shape("ctc_loss needs T >= 1 and V >= 1".to_string()));
    }
    if blank >= v {
        return Err(Error::shape(format!(
            "blank index {blank} outside vocabulary of size {v}"
        )));
    }
    for &id in label {
        if id >= v || id == blank {
            return Err(Error::shape(format!(
                "label id {id} invalid for V={v}, blank={blank}"
            )));
        }
    }
    if sample_weight <= 0.0 {
        return Err(Error::config(format!(
            "sample_weight must be positive, got {sample_weight}"
        )));
    }
    let required = required_frames(label);
    if t < required {
        return Err(Error::InfeasibleAlignment {
            frames: t,
            label_len: label.len(),
            required,
        });
    }
    Ok(())
}

fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn lse3(a: f64, b: f64, c: f64) -> f64 {
    lse2(lse2(a, b), c)
}

/// CTC loss and gradient w.r.t. the raw logits.
pub fn ctc_loss(
    logits: &Tensor,
    label: &[usize],
    blank: usize,
    sample_weight: f32,
) -> Result<(f64, Tensor)> {
    ctc_loss_with_table(logits, label, blank, sample_weight).map(|(l, g, _)| (l, g))
}

/// As [`ctc_loss`], also returning the lattice for inspection.
pub fn ctc_loss_with_table(
    logits: &Tensor,
    label: &[usize],
    blank: usize,
    sample_weight: f32,
) -> Result<(f64, Tensor, CtcTable)> {
    check_inputs(logits, label, blank, sample_weight)?;
    let (t_len, v) = (logits.dim(0), logits.dim(1));
    let logp = log_softmax(logits)?;
    let lp = |t: usize, sym: usize| logp.data()[t * v + sym] as f64;

    let s_len = 2 * label.len() + 1;
    let extended: Vec<usize> = (0..s_len)
        .map(|s| if s % 2 == 0 { blank } else { label[s / 2] })
        .collect();
    // transition from s-2 allowed when the target is a fresh non-blank symbol
    let from_prev2 = |s: usize| {
        s >= 2 && extended[s] != blank && extended[s] != extended[s - 2]
    };

    let neg = f64::NEG_INFINITY;
    let mut alpha = vec![neg; t_len * s_len];
    alpha[0] = lp(0, extended[0]);
    if s_len > 1 {
        alpha[1] = lp(0, extended[1]);
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let stay = alpha[(t - 1) * s_len + s];
            let step = if s >= 1 { alpha[(t - 1) * s_len + s - 1] } else { neg };
            let skip = if from_prev2(s) {
                alpha[(t - 1) * s_len + s - 2]
            } else {
                neg
            };
            let acc = lse3(stay, step, skip);
            alpha[t * s_len + s] = if acc == neg { neg } else { acc + lp(t, extended[s]) };
        }
    }
    let log_lik = if s_len > 1 {
        lse2(
            alpha[(t_len - 1) * s_len + s_len - 1],
            alpha[(t_len - 1) * s_len + s_len - 2],
        )
    } else {
        alpha[(t_len - 1) * s_len + s_len - 1]
    };
    if log_lik == neg {
        // unreachable under the feasibility precondition
        return Err(Error::InfeasibleAlignment {
            frames: t_len,
            label_len: label.len(),
            required: required_frames(label),
        });
    }

    let mut beta = vec![neg; t_len * s_len];
    beta[(t_len - 1) * s_len + s_len - 1] = 0.0;
    if s_len > 1 {
        beta[(t_len - 1) * s_len + s_len - 2] = 0.0;
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let stay = beta[(t + 1) * s_len + s] + lp(t + 1, extended[s]);
            let step = if s + 1 < s_len {
                beta[(t + 1) * s_len + s + 1] + lp(t + 1, extended[s + 1])
            } else {
                neg
            };
            let skip = if s + 2 < s_len && from_prev2(s + 2) {
                beta[(t + 1) * s_len + s + 2] + lp(t + 1, extended[s + 2])
            } else {
                neg
            };
            beta[t * s_len + s] = lse3(stay, step, skip);
        }
    }

    // grad = w * (softmax - per-row-normalized posterior marginals); the
    // per-row normalization keeps each gradient row summing to zero even
    // though the lattice itself carries f32-level noise
    let mut grad = Tensor::zeros(&[t_len, v]);
    {
        let g = grad.data_mut();
        for t in 0..t_len {
            let mut row_lse = neg;
            for s in 0..s_len {
                row_lse = lse2(row_lse, alpha[t * s_len + s] + beta[t * s_len + s]);
            }
            let mut marginal = vec![0.0f64; v];
            for s in 0..s_len {
                let q = alpha[t * s_len + s] + beta[t * s_len + s];
                if q != neg {
                    marginal[extended[s]] += (q - row_lse).exp();
                }
            }
            for sym in 0..v {
                let p = lp(t, sym).exp();
                g[t * v + sym] = (sample_weight as f64 * (p - marginal[sym])) as f32;
            }
        }
    }
    grad.debug_assert_finite("ctc grad_logits");

    let loss = -(sample_weight as f64) * log_lik;
    let table = CtcTable {
        alpha: Tensor::from_vec(&[t_len, s_len], alpha.iter().map(|&x| x as f32).collect()),
        beta: Tensor::from_vec(&[t_len, s_len], beta.iter().map(|&x| x as f32).collect()),
        extended,
    };
    Ok((loss, grad, table))
}

/// Exhaustive-path oracle: sums the probability of every frame sequence
/// that collapses to the label. Only for tiny instances (`V^T <= 10^6`).
/// Returns `f64::INFINITY` when no path produces the label.
pub fn ctc_brute_force(logits: &Tensor, label: &[usize], blank: usize) -> Result<f64> {
    if logits.rank() != 2 {
        return Err(Error::shape(format!(
            "ctc_brute_force logits must be [T,V], got {:?}",
            logits.shape()
        )));
    }
    let (t_len, v) = (logits.dim(0), logits.dim(1));
    if (v as f64).powi(t_len as i32) > 1e6 {
        return Err(Error::config(format!(
            "instance too large for enumeration: V={v}, T={t_len}"
        )));
    }
    let logp = log_softmax(logits)?;
    let lp = |t: usize, sym: usize| logp.data()[t * v + sym] as f64;

    let mut total = 0.0f64;
    let mut frames = vec![0usize; t_len];
    loop {
        // collapse: drop adjacent repeats, then blanks
        let mut collapsed = Vec::new();
        let mut prev = usize::MAX;
        for &f in &frames {
            if f != prev && f != blank {
                collapsed.push(f);
            }
            prev = f;
        }
        if collapsed == label {
            let lp_path: f64 = frames.iter().enumerate().map(|(t, &f)| lp(t, f)).sum();
            total += lp_path.exp();
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == t_len {
                return Ok(if total > 0.0 { -total.ln() } else { f64::INFINITY });
            }
            frames[pos] += 1;
            if frames[pos] < v {
                break;
            }
            frames[pos] = 0;
            pos += 1;
        }
    }
}

/// Per-frame argmax (ties to the lowest index), collapse adjacent repeats,
/// drop blanks.
pub fn greedy_decode(logits: &Tensor, blank: usize) -> Vec<usize> {
    assert_eq!(logits.rank(), 2, "greedy_decode expects [T,V]");
    let (t_len, v) = (logits.dim(0), logits.dim(1));
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for t in 0..t_len {
        let row = &logits.data()[t * v..][..v];
        let mut best = 0usize;
        for (i, &val) in row.iter().enumerate() {
            if val > row[best] {
                best = i;
            }
        }
        if best != prev && best != blank {
            out.push(best);
        }
        prev = best;
    }
    out
}

/// Batched CTC over the true output frames of each sample.
pub struct CtcBatch {
    /// Mean weighted loss over the samples that aligned.
    pub mean_loss: f64,
    /// `[B, T, V]` gradient; zero on padded frames and skipped samples.
    pub grad: Tensor,
    /// Indices of samples whose labels could not be aligned.
    pub skipped: Vec<usize>,
}

pub fn batch_ctc(
    logits: &Tensor,
    out_lengths: &[usize],
    labels: &[Vec<usize>],
    blank: usize,
    weights: &[f32],
) -> Result<CtcBatch> {
    if logits.rank() != 3 {
        return Err(Error::shape(format!(
            "batch_ctc logits must be [B,T,V], got {:?}",
            logits.shape()
        )));
    }
    let (b, t_len, v) = (logits.dim(0), logits.dim(1), logits.dim(2));
    if out_lengths.len() != b || labels.len() != b || weights.len() != b {
        return Err(Error::shape(format!(
            "batch_ctc expects {b} lengths/labels/weights"
        )));
    }
    let mut grad = Tensor::zeros(&[b, t_len, v]);
    let mut skipped = Vec::new();
    let mut losses: Vec<(usize, f64, Tensor)> = Vec::new();
    for bi in 0..b {
        let len = out_lengths[bi];
        if len == 0 || len > t_len {
            return Err(Error::shape(format!(
                "sample {bi}: output length {len} outside 1..={t_len}"
            )));
        }
        let sample = Tensor::from_vec(
            &[len, v],
            logits.data()[bi * t_len * v..][..len * v].to_vec(),
        );
        match ctc_loss(&sample, &labels[bi], blank, weights[bi]) {
            Ok((loss, g)) => losses.push((bi, loss, g)),
            Err(Error::InfeasibleAlignment { .. }) => skipped.push(bi),
            Err(e) => return Err(e),
        }
    }
    let n = losses.len();
    let mut mean_loss = 0.0f64;
    if n > 0 {
        let scale = 1.0 / n as f32;
        for (bi, loss, g) in losses {
            mean_loss += loss;
            let dst = &mut grad.data_mut()[bi * t_len * v..][..g.numel()];
            for (d, &s) in dst.iter_mut().zip(g.data()) {
                *d = s * scale;
            }
        }
        mean_loss /= n as f64;
    }
    Ok(CtcBatch {
        mean_loss,
        grad,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn uniform_logits(t: usize, v: usize) -> Tensor {
        Tensor::zeros(&[t, v])
    }

    fn random_logits(t: usize, v: usize, seed: u64) -> Tensor {
        let mut rng = rng_from_seed(seed);
        Tensor::from_vec(&[t, v], (0..t * v).map(|_| rng.gen_range(-3.0..3.0)).collect())
    }

    #[test]
    fn single_frame_single_symbol() {
        let (loss, _) = ctc_loss(&uniform_logits(1, 2), &[0], 1, 1.0).unwrap();
        assert!((loss + 0.5f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn two_frames_enumerated_by_hand() {
        // p = p1(0)p2(0) + p1(0)p2(-) + p1(-)p2(0) = 3/4 with uniform V=2
        let (loss, _) = ctc_loss(&uniform_logits(2, 2), &[0], 1, 1.0).unwrap();
        assert!((loss + 0.75f64.ln()).abs() < 1e-6, "loss {loss}");
    }

    #[test]
    fn sample_weight_scales_loss_and_grad_exactly() {
        let logits = random_logits(5, 3, 3);
        let label = vec![0, 1];
        let (l1, g1) = ctc_loss(&logits, &label, 2, 1.0).unwrap();
        let (l2, g2) = ctc_loss(&logits, &label, 2, 2.0).unwrap();
        assert_eq!(l2, 2.0 * l1);
        for (a, b) in g1.data().iter().zip(g2.data()) {
            assert_eq!(*b, 2.0 * *a);
        }
    }

    #[test]
    fn repeated_symbol_needs_separating_blank() {
        // label "aa", T=3: only a,-,a survives collapse
        let logits = random_logits(3, 2, 1);
        let (loss, _) = ctc_loss(&logits, &[0, 0], 1, 1.0).unwrap();
        let lp = log_softmax(&logits).unwrap();
        let want = -(lp.data()[0] as f64 + lp.data()[3] as f64 + lp.data()[4] as f64);
        assert!((loss - want).abs() < 1e-5, "{loss} vs {want}");
    }

    #[test]
    fn too_short_for_label_is_infeasible() {
        let r = ctc_loss(&uniform_logits(1, 3), &[0, 1], 2, 1.0);
        assert!(matches!(r, Err(Error::InfeasibleAlignment { .. })));
        // the oracle returns its infinity sentinel for the same case
        let bf = ctc_brute_force(&uniform_logits(1, 3), &[0, 1], 2).unwrap();
        assert!(bf.is_infinite());
    }

    #[test]
    fn bad_label_id_is_rejected() {
        assert!(ctc_loss(&uniform_logits(3, 2), &[1], 1, 1.0).is_err()); // blank as label
        assert!(ctc_loss(&uniform_logits(3, 2), &[5], 1, 1.0).is_err()); // out of range
    }

    #[test]
    fn matches_brute_force_on_random_tiny_instances() {
        let mut rng = rng_from_seed(42);
        let mut trials = 0;
        while trials < 250 {
            let t = rng.gen_range(1..=6);
            let v = rng.gen_range(2..=3);
            let l = rng.gen_range(0..=3usize);
            let blank = v - 1;
            let label: Vec<usize> = (0..l).map(|_| rng.gen_range(0..blank)).collect();
            if required_frames(&label) > t {
                continue;
            }
            let logits = random_logits(t, v, 1000 + trials as u64);
            let (loss, _) = ctc_loss(&logits, &label, blank, 1.0).unwrap();
            let oracle = ctc_brute_force(&logits, &label, blank).unwrap();
            assert!(
                (loss - oracle).abs() < 1e-5,
                "trial {trials}: T={t} V={v} label={label:?}: {loss} vs {oracle}"
            );
            trials += 1;
        }
    }

    #[test]
    fn alpha_beta_total_is_constant_over_time() {
        let logits = random_logits(12, 4, 7);
        let label = vec![0, 2, 1, 1];
        let (loss, _, table) = ctc_loss_with_table(&logits, &label, 3, 1.0).unwrap();
        let log_lik = -loss;
        let s = table.extended.len();
        for t in 0..12 {
            let mut acc = f64::NEG_INFINITY;
            for si in 0..s {
                let q = table.alpha.data()[t * s + si] as f64 + table.beta.data()[t * s + si] as f64;
                acc = lse2(acc, q);
            }
            assert!(
                (acc - log_lik).abs() < 1e-4,
                "t={t}: lse(alpha+beta)={acc}, loglik={log_lik}"
            );
        }
    }

    #[test]
    fn alpha_start_states_are_restricted() {
        let logits = random_logits(5, 3, 8);
        let (_, _, table) = ctc_loss_with_table(&logits, &[0, 1], 2, 1.0).unwrap();
        let s = table.extended.len();
        for si in 2..s {
            assert_eq!(table.alpha.data()[si], f32::NEG_INFINITY, "alpha[0,{si}]");
        }
    }

    #[test]
    fn grad_rows_sum_to_zero() {
        let logits = random_logits(10, 5, 9);
        let (_, grad) = ctc_loss(&logits, &[0, 3, 2], 4, 1.7).unwrap();
        for t in 0..10 {
            let s: f64 = grad.data()[t * 5..][..5].iter().map(|&x| x as f64).sum();
            assert!(s.abs() < 1e-5, "row {t} sums to {s}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use crate::numerics::grad_check;
        let logits = random_logits(6, 3, 10);
        let label = vec![0, 1];
        // loss as a function of logits; upstream fixed at 1 via scalar output
        let upstream = Tensor::from_vec(&[1], vec![1.0]);
        let err = grad_check(
            &logits,
            &upstream,
            |probe| {
                let (loss, _) = ctc_loss(probe, &label, 2, 1.0).unwrap();
                Tensor::from_vec(&[1], vec![loss as f32])
            },
            |probe| ctc_loss(probe, &label, 2, 1.0).unwrap().1,
            1e-3,
        );
        assert!(err < 1e-2, "ctc grad error {err}");
    }

    #[test]
    fn greedy_collapses_repeats_and_blanks() {
        // argmax sequence: -, a, a, -, b, b  => "ab"
        let rows = [2usize, 0, 0, 2, 1, 1];
        let mut logits = Tensor::zeros(&[6, 3]);
        for (t, &sym) in rows.iter().enumerate() {
            logits.data_mut()[t * 3 + sym] = 5.0;
        }
        assert_eq!(greedy_decode(&logits, 2), vec![0, 1]);
    }

    #[test]
    fn greedy_blank_separates_repeats() {
        let rows = [0usize, 2, 0];
        let mut logits = Tensor::zeros(&[3, 3]);
        for (t, &sym) in rows.iter().enumerate() {
            logits.data_mut()[t * 3 + sym] = 5.0;
        }
        assert_eq!(greedy_decode(&logits, 2), vec![0, 0]);
    }

    #[test]
    fn greedy_all_blank_is_empty() {
        let mut logits = Tensor::zeros(&[4, 3]);
        for t in 0..4 {
            logits.data_mut()[t * 3 + 2] = 5.0;
        }
        assert!(greedy_decode(&logits, 2).is_empty());
    }

    #[test]
    fn greedy_ties_break_to_lowest_index() {
        let logits = Tensor::zeros(&[1, 4]); // all equal
        assert_eq!(greedy_decode(&logits, 3), vec![0]);
    }

    #[test]
    fn greedy_recovers_collapsed_label_from_one_hot_alignment() {
        let mut rng = rng_from_seed(11);
        for _ in 0..50 {
            let v = 4usize;
            let blank = 3;
            let t = rng.gen_range(3..=10);
            let alignment: Vec<usize> = (0..t).map(|_| rng.gen_range(0..v)).collect();
            let mut collapsed = Vec::new();
            let mut prev = usize::MAX;
            for &f in &alignment {
                if f != prev && f != blank {
                    collapsed.push(f);
                }
                prev = f;
            }
            let mut logits = Tensor::full(&[t, v], -4.0);
            for (ti, &sym) in alignment.iter().enumerate() {
                logits.data_mut()[ti * v + sym] = 4.0;
            }
            assert_eq!(greedy_decode(&logits, blank), collapsed);
        }
    }

    #[test]
    fn loss_decreases_under_gradient_descent() {
        let mut logits = random_logits(8, 4, 12);
        let label = vec![0, 2, 1];
        let (first, _) = ctc_loss(&logits, &label, 3, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for step in 0..50 {
            let (loss, grad) = ctc_loss(&logits, &label, 3, 1.0).unwrap();
            assert!(loss < prev + 1e-9, "step {step}: {loss} !< {prev}");
            prev = loss;
            logits.axpy(-0.2, &grad);
        }
        assert!(prev < 0.5 * first, "descent stalled at {prev} from {first}");
    }

    #[test]
    fn batch_of_identical_samples_equals_single_loss() {
        let logits1 = random_logits(6, 3, 13);
        let label = vec![0, 1];
        let (single, _) = ctc_loss(&logits1, &label, 2, 1.0).unwrap();
        let mut batched = Tensor::zeros(&[3, 6, 3]);
        for bi in 0..3 {
            batched.data_mut()[bi * 18..][..18].copy_from_slice(logits1.data());
        }
        let out = batch_ctc(
            &batched,
            &[6, 6, 6],
            &[label.clone(), label.clone(), label],
            2,
            &[1.0, 1.0, 1.0],
        )
        .unwrap();
        assert!((out.mean_loss - single).abs() < 1e-9);
        assert!(out.skipped.is_empty());
    }

    #[test]
    fn padded_frames_get_zero_gradient() {
        let mut logits = Tensor::zeros(&[2, 8, 3]);
        {
            let d = logits.data_mut();
            let mut rng = rng_from_seed(14);
            for v in d.iter_mut() {
                *v = rng.gen_range(-2.0..2.0);
            }
        }
        let out = batch_ctc(&logits, &[5, 8], &[vec![0], vec![1, 0]], 2, &[1.0, 1.0]).unwrap();
        // sample 0 frames 5..8 are padding
        for t in 5..8 {
            for sym in 0..3 {
                assert_eq!(out.grad.data()[(t) * 3 + sym], 0.0);
            }
        }
    }

    #[test]
    fn batch_mean_matches_serial_average() {
        let logits = {
            let mut rng = rng_from_seed(15);
            Tensor::from_vec(
                &[3, 7, 4],
                (0..84).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            )
        };
        let labels = [vec![0usize, 1], vec![2], vec![1, 1]];
        let lens = [7usize, 5, 6];
        let weights = [1.0f32, 0.5, 2.0];
        let out = batch_ctc(&logits, &lens, &labels, 3, &weights).unwrap();
        let mut want = 0.0f64;
        for bi in 0..3 {
            let sample = Tensor::from_vec(
                &[lens[bi], 4],
                logits.data()[bi * 28..][..lens[bi] * 4].to_vec(),
            );
            want += ctc_loss(&sample, &labels[bi], 3, weights[bi]).unwrap().0;
        }
        want /= 3.0;
        assert!((out.mean_loss - want).abs() < 1e-6);
    }

    #[test]
    fn infeasible_samples_are_skipped_and_reported() {
        let logits = random_logits(2, 3, 16).reshaped(&[1, 2, 3]);
        let out = batch_ctc(&logits, &[2], &[vec![0, 0, 1]], 2, &[1.0]).unwrap();
        assert_eq!(out.skipped, vec![0]);
        assert_eq!(out.mean_loss, 0.0);
        assert!(out.grad.data().iter().all(|&v| v == 0.0));
    }
}

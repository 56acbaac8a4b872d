//! Case-sensitive character error rate via Levenshtein distance.
//!
//! CER(%) = 100 * (substitutions + insertions + deletions) / reference
//! characters, micro-averaged over the corpus (operation counts summed
//! before dividing). Characters are vocabulary symbols: one char, one unit.

use serde::Serialize;

use crate::error::{Error, Result};

/// Unit-cost edit distance with its operation decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EditOps {
    pub distance: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

/// Unit-cost DP with a deterministic backtrace. When costs tie, the trace
/// prefers substitution, then deletion, then insertion, so the
/// decomposition is reproducible across platforms.
pub fn levenshtein(reference: &str, hypothesis: &str) -> EditOps {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    let (n, m) = (r.len(), h.len());
    let mut dp = vec![0usize; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        dp[idx(i, 0)] = i;
    }
    for j in 0..=m {
        dp[idx(0, j)] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(r[i - 1] != h[j - 1]);
            dp[idx(i, j)] = (dp[idx(i - 1, j - 1)] + cost)
                .min(dp[idx(i - 1, j)] + 1)
                .min(dp[idx(i, j - 1)] + 1);
        }
    }

    let (mut i, mut j) = (n, m);
    let (mut subs, mut ins, mut dels) = (0usize, 0usize, 0usize);
    while i > 0 || j > 0 {
        let here = dp[idx(i, j)];
        if i > 0 && j > 0 {
            let diag = dp[idx(i - 1, j - 1)];
            if r[i - 1] == h[j - 1] && diag == here {
                i -= 1;
                j -= 1;
                continue;
            }
            if diag + 1 == here {
                subs += 1;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[idx(i - 1, j)] + 1 == here {
            dels += 1;
            i -= 1;
            continue;
        }
        j -= 1;
        ins += 1;
    }
    let distance = dp[idx(n, m)];
    debug_assert_eq!(subs + ins + dels, distance, "backtrace/DP mismatch");
    EditOps {
        distance,
        substitutions: subs,
        insertions: ins,
        deletions: dels,
    }
}

/// Corpus-level operation totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CerCounts {
    pub substitutions: u64,
    pub insertions: u64,
    pub deletions: u64,
    pub ref_chars: u64,
    pub pairs: u64,
}

impl CerCounts {
    pub fn add_pair(&mut self, reference: &str, hypothesis: &str) {
        let ops = levenshtein(reference, hypothesis);
        self.substitutions += ops.substitutions as u64;
        self.insertions += ops.insertions as u64;
        self.deletions += ops.deletions as u64;
        self.ref_chars += reference.chars().count() as u64;
        self.pairs += 1;
    }

    pub fn merge(&mut self, other: &CerCounts) {
        self.substitutions += other.substitutions;
        self.insertions += other.insertions;
        self.deletions += other.deletions;
        self.ref_chars += other.ref_chars;
        self.pairs += other.pairs;
    }

    pub fn edits(&self) -> u64 {
        self.substitutions + self.insertions + self.deletions
    }

    /// Micro-averaged CER in percent; absent when no reference characters.
    pub fn cer_percent(&self) -> Option<f64> {
        (self.ref_chars > 0).then(|| 100.0 * self.edits() as f64 / self.ref_chars as f64)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CerReport {
    #[serde(flatten)]
    pub counts: CerCounts,
    pub cer_percent: f64,
}

/// Micro-averaged corpus CER over `(reference, hypothesis)` pairs.
pub fn corpus_cer<'a>(
    pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<CerReport> {
    let mut counts = CerCounts::default();
    for (r, h) in pairs {
        counts.add_pair(r, h);
    }
    if counts.pairs == 0 {
        return Err(Error::data("corpus_cer needs at least one pair".to_string()));
    }
    let cer = counts.cer_percent().ok_or_else(|| {
        Error::data("corpus_cer: reference corpus has zero characters".to_string())
    })?;
    Ok(CerReport {
        counts,
        cer_percent: cer,
    })
}

/// The six reference-length ranges of the length analysis; labels longer
/// than 100 fall into the last bucket.
pub const LENGTH_BUCKETS: [(usize, usize); 6] =
    [(0, 40), (41, 45), (46, 50), (51, 55), (56, 60), (61, 100)];

#[derive(Debug, Clone, Serialize)]
pub struct LengthBucket {
    pub label: String,
    pub lo: usize,
    pub hi: usize,
    #[serde(flatten)]
    pub counts: CerCounts,
    /// Absent for empty buckets.
    pub cer_percent: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BucketedReport {
    pub buckets: Vec<LengthBucket>,
}

/// Per-bucket CER keyed by reference label length.
pub fn bucketed_cer<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> BucketedReport {
    let mut buckets: Vec<LengthBucket> = LENGTH_BUCKETS
        .iter()
        .map(|&(lo, hi)| LengthBucket {
            label: format!("[{lo}-{hi}]"),
            lo,
            hi,
            counts: CerCounts::default(),
            cer_percent: None,
        })
        .collect();
    for (r, h) in pairs {
        let len = r.chars().count();
        let slot = buckets
            .iter()
            .position(|b| len >= b.lo && len <= b.hi)
            .unwrap_or(buckets.len() - 1);
        buckets[slot].counts.add_pair(r, h);
    }
    for b in &mut buckets {
        b.cer_percent = b.counts.cer_percent();
    }
    BucketedReport { buckets }
}

impl CerReport {
    /// Aligned plain-text table.
    pub fn render_text(&self) -> String {
        let c = &self.counts;
        let mut out = String::new();
        out.push_str(&format!("{:<14} {:>12}\n", "metric", "value"));
        out.push_str(&format!("{:<14} {:>12}\n", "pairs", c.pairs));
        out.push_str(&format!("{:<14} {:>12}\n", "ref chars", c.ref_chars));
        out.push_str(&format!("{:<14} {:>12}\n", "substitutions", c.substitutions));
        out.push_str(&format!("{:<14} {:>12}\n", "insertions", c.insertions));
        out.push_str(&format!("{:<14} {:>12}\n", "deletions", c.deletions));
        out.push_str(&format!("{:<14} {:>12.4}\n", "CER (%)", self.cer_percent));
        out
    }
}

impl BucketedReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>7} {:>10} {:>7} {:>7} {:>7} {:>9}\n",
            "bucket", "pairs", "chars", "sub", "ins", "del", "CER (%)"
        ));
        for b in &self.buckets {
            let cer = b
                .cer_percent
                .map(|c| format!("{c:.4}"))
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!(
                "{:<10} {:>7} {:>10} {:>7} {:>7} {:>7} {:>9}\n",
                b.label,
                b.counts.pairs,
                b.counts.ref_chars,
                b.counts.substitutions,
                b.counts.insertions,
                b.counts.deletions,
                cer
            ));
        }
        out
    }

    /// Minimal SVG bar chart of per-bucket CER.
    pub fn render_svg(&self) -> String {
        let bar_w = 70usize;
        let gap = 18usize;
        let height = 220usize;
        let plot_h = 170usize;
        let width = self.buckets.len() * (bar_w + gap) + gap;
        let max_cer = self
            .buckets
            .iter()
            .filter_map(|b| b.cer_percent)
            .fold(1.0f64, f64::max);
        let mut s = String::new();
        s.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
             viewBox=\"0 0 {width} {height}\">\n"
        ));
        s.push_str("<style>text{font-family:monospace;font-size:11px}</style>\n");
        for (i, b) in self.buckets.iter().enumerate() {
            let x = gap + i * (bar_w + gap);
            let cer = b.cer_percent.unwrap_or(0.0);
            let h = ((cer / max_cer) * plot_h as f64).round() as usize;
            let y = 10 + plot_h - h;
            s.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{bar_w}\" height=\"{h}\" fill=\"#4477aa\"/>\n"
            ));
            let label_y = 10 + plot_h + 14;
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{label_y}\" text-anchor=\"middle\">{}</text>\n",
                x + bar_w / 2,
                b.label
            ));
            let val = b
                .cer_percent
                .map(|c| format!("{c:.2}"))
                .unwrap_or_else(|| "-".to_string());
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{val}</text>\n",
                x + bar_w / 2,
                y.saturating_sub(4).max(10)
            ));
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    /// Independent plain-DP oracle (distance only).
    fn dp_distance(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut prev: Vec<usize> = (0..=b.len()).collect();
        for i in 1..=a.len() {
            let mut cur = vec![i];
            for j in 1..=b.len() {
                let cost = usize::from(a[i - 1] != b[j - 1]);
                cur.push((prev[j - 1] + cost).min(prev[j] + 1).min(cur[j - 1] + 1));
            }
            prev = cur;
        }
        prev[b.len()]
    }

    #[test]
    fn identical_strings_have_zero_ops() {
        assert_eq!(
            levenshtein("abc", "abc"),
            EditOps {
                distance: 0,
                substitutions: 0,
                insertions: 0,
                deletions: 0
            }
        );
    }

    #[test]
    fn empty_hypothesis_is_all_deletions() {
        let ops = levenshtein("abc", "");
        assert_eq!(ops.distance, 3);
        assert_eq!(ops.deletions, 3);
        assert_eq!(ops.substitutions + ops.insertions, 0);
    }

    #[test]
    fn classic_pair_recomputed() {
        let ops = levenshtein("kitten", "sitting");
        assert_eq!(ops.distance, dp_distance("kitten", "sitting"));
        assert_eq!(ops.distance, 3);
        assert_eq!(ops.substitutions + ops.insertions + ops.deletions, 3);
    }

    #[test]
    fn decomposition_always_sums_to_distance() {
        let mut rng = rng_from_seed(1);
        let alphabet = ['a', 'b', 'c', 'd', 'e'];
        for _ in 0..10_000 {
            let len_a = rng.gen_range(0..=20);
            let len_b = rng.gen_range(0..=20);
            let a: String = (0..len_a).map(|_| alphabet[rng.gen_range(0..5)]).collect();
            let b: String = (0..len_b).map(|_| alphabet[rng.gen_range(0..5)]).collect();
            let ops = levenshtein(&a, &b);
            assert_eq!(ops.distance, dp_distance(&a, &b), "{a:?} vs {b:?}");
            assert_eq!(
                ops.substitutions + ops.insertions + ops.deletions,
                ops.distance
            );
        }
    }

    #[test]
    fn corpus_cer_perfect_is_zero() {
        let report = corpus_cer([("abc", "abc"), ("de", "de")]).unwrap();
        assert_eq!(report.cer_percent, 0.0);
    }

    #[test]
    fn corpus_cer_single_pair() {
        let report = corpus_cer([("kitten", "sitting")]).unwrap();
        assert!((report.cer_percent - 50.0).abs() < 1e-12);
    }

    #[test]
    fn micro_average_differs_from_macro() {
        // {("aaaa","aaaa"), ("b","c")}: micro = 1 edit / 5 chars = 20%
        let report = corpus_cer([("aaaa", "aaaa"), ("b", "c")]).unwrap();
        assert!((report.cer_percent - 20.0).abs() < 1e-12);
    }

    #[test]
    fn corpus_cer_rejects_empty_input() {
        assert!(corpus_cer(std::iter::empty::<(&str, &str)>()).is_err());
        assert!(corpus_cer([("", "x")]).is_err()); // zero reference chars
    }

    #[test]
    fn additivity_over_concatenated_corpora() {
        let part_a = [("abcd", "abed"), ("xy", "xy")];
        let part_b = [("hello", "hxllo"), ("w", "")];
        let ra = corpus_cer(part_a).unwrap();
        let rb = corpus_cer(part_b).unwrap();
        let whole = corpus_cer(part_a.into_iter().chain(part_b)).unwrap();
        let mut merged = ra.counts;
        merged.merge(&rb.counts);
        assert_eq!(merged, whole.counts);
        assert_eq!(merged.cer_percent().unwrap(), whole.cer_percent);
    }

    #[test]
    fn bucket_boundaries_match_the_ranges() {
        let r40 = "a".repeat(40);
        let r41 = "a".repeat(41);
        let r101 = "a".repeat(101);
        let report = bucketed_cer([
            (r40.as_str(), r40.as_str()),
            (r41.as_str(), r41.as_str()),
            (r101.as_str(), r101.as_str()),
        ]);
        assert_eq!(report.buckets[0].counts.pairs, 1); // [0-40]
        assert_eq!(report.buckets[1].counts.pairs, 1); // [41-45]
        assert_eq!(report.buckets[5].counts.pairs, 1); // [61-100] catches >100
    }

    #[test]
    fn empty_buckets_have_absent_cer() {
        let report = bucketed_cer([("ab", "ab")]);
        assert_eq!(report.buckets[0].cer_percent, Some(0.0));
        for b in &report.buckets[1..] {
            assert_eq!(b.counts.pairs, 0);
            assert_eq!(b.cer_percent, None);
        }
    }

    #[test]
    fn bucket_union_equals_corpus_totals() {
        let mut rng = rng_from_seed(2);
        let pairs: Vec<(String, String)> = (0..200)
            .map(|_| {
                let len = rng.gen_range(1..=120);
                let r: String = (0..len)
                    .map(|_| (b'a' + rng.gen_range(0..4u8)) as char)
                    .collect();
                let h: String = (0..rng.gen_range(0..=len))
                    .map(|_| (b'a' + rng.gen_range(0..4u8)) as char)
                    .collect();
                (r, h)
            })
            .collect();
        let borrowed: Vec<(&str, &str)> =
            pairs.iter().map(|(r, h)| (r.as_str(), h.as_str())).collect();
        let whole = corpus_cer(borrowed.iter().copied()).unwrap();
        let buckets = bucketed_cer(borrowed.iter().copied());
        let mut merged = CerCounts::default();
        for b in &buckets.buckets {
            merged.merge(&b.counts);
        }
        assert_eq!(merged, whole.counts);
    }

    #[test]
    fn renders_are_well_formed() {
        let report = corpus_cer([("kitten", "sitting")]).unwrap();
        let text = report.render_text();
        assert!(text.contains("CER"));
        let buckets = bucketed_cer([("kitten", "sitting")]);
        let svg = buckets.render_svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("</svg>"));
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("cer_percent"));
    }

    mod metric_properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]

            #[test]
            fn symmetry_and_identity(a in "[ab]{0,12}", b in "[ab]{0,12}") {
                let d_ab = levenshtein(&a, &b).distance;
                let d_ba = levenshtein(&b, &a).distance;
                prop_assert_eq!(d_ab, d_ba);
                prop_assert_eq!(d_ab == 0, a == b);
            }

            #[test]
            fn triangle_inequality(
                a in "[abc]{0,10}",
                b in "[abc]{0,10}",
                c in "[abc]{0,10}",
            ) {
                let ab = levenshtein(&a, &b).distance;
                let bc = levenshtein(&b, &c).distance;
                let ac = levenshtein(&a, &c).distance;
                prop_assert!(ac <= ab + bc);
            }
        }
    }
}

//! Corpus and document BLEU, COMET aggregation, Spearman correlation.
//!
//! BLEU follows the SacreBLEU algorithm with one reference, mixed case,
//! no smoothing and a fixed n-gram order of 4. The `13a` and `zh`
//! tokenizers reproduce SacreBLEU's rule sets, quirks included.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::backend::Backend;
use crate::corpus::LangCode;
use crate::error::{Error, Result};
use crate::par::map_bounded;

pub const MAX_NGRAM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BleuTokenizer {
    /// mteval-v13a rules for space-delimited scripts.
    #[serde(rename = "13a")]
    Tok13a,
    /// Chinese characters split individually, 13a on the rest.
    #[serde(rename = "zh")]
    Zh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BleuConfig {
    pub tokenizer: BleuTokenizer,
}

impl BleuConfig {
    pub const fn new(tokenizer: BleuTokenizer) -> Self {
        BleuConfig { tokenizer }
    }

    /// `zh` for Chinese targets, `13a` otherwise.
    pub fn for_target(lang: &LangCode) -> Self {
        if lang.as_str().split(['-', '_']).next() == Some("zh") {
            BleuConfig::new(BleuTokenizer::Zh)
        } else {
            BleuConfig::new(BleuTokenizer::Tok13a)
        }
    }

    pub fn signature(&self) -> String {
        let tok = match self.tokenizer {
            BleuTokenizer::Tok13a => "13a",
            BleuTokenizer::Zh => "zh",
        };
        format!("nrefs:1|case:mixed|eff:no|tok:{tok}|smooth:none|ngram:{MAX_NGRAM}")
    }

    /// Separator used when concatenating sentences into a document.
    pub fn sentence_joiner(&self) -> &'static str {
        match self.tokenizer {
            BleuTokenizer::Tok13a => " ",
            BleuTokenizer::Zh => "",
        }
    }

    pub fn tokenize(&self, line: &str) -> Vec<String> {
        match self.tokenizer {
            BleuTokenizer::Tok13a => tokenize_13a(line),
            BleuTokenizer::Zh => tokenize_zh(line),
        }
    }
}

impl fmt::Display for BleuConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.signature())
    }
}

fn regexp_rules() -> &'static [(Regex, &'static str); 4] {
    static RULES: OnceLock<[(Regex, &'static str); 4]> = OnceLock::new();
    RULES.get_or_init(|| {
        [
            (Regex::new(r"([\{-~\[-` -&\(-\+:-@/])").unwrap(), " ${1} "),
            (Regex::new(r"([^0-9])([\.,])").unwrap(), "${1} ${2} "),
            (Regex::new(r"([\.,])([^0-9])").unwrap(), " ${1} ${2}"),
            (Regex::new(r"([0-9])(-)").unwrap(), "${1} ${2} "),
        ]
    })
}

fn regexp_tokenize(line: &str) -> Vec<String> {
    let mut s = line.to_string();
    for (re, rep) in regexp_rules() {
        s = re.replace_all(&s, *rep).into_owned();
    }
    s.split_whitespace().map(str::to_string).collect()
}

pub fn tokenize_13a(line: &str) -> Vec<String> {
    let mut s = line.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if s.contains('&') {
        s = s
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    regexp_tokenize(&format!(" {s} "))
}

// Effective ranges of SacreBLEU's zh tokenizer. Two of its range literals
// are multi-character strings, which shifts them to 2001..2A6D and
// 2F81..2FA1 under string comparison; reproduced as observed.
const ZH_RANGES: [(u32, u32); 22] = [
    (0x3400, 0x4db5),
    (0x4e00, 0x9fa5),
    (0x9fa6, 0x9fbb),
    (0xf900, 0xfa2d),
    (0xfa30, 0xfa6a),
    (0xfa70, 0xfad9),
    (0x2001, 0x2a6d),
    (0x2f81, 0x2fa1),
    (0xff00, 0xffef),
    (0x2e80, 0x2eff),
    (0x3000, 0x303f),
    (0x31c0, 0x31ef),
    (0x2f00, 0x2fdf),
    (0x2ff0, 0x2fff),
    (0x3100, 0x312f),
    (0x31a0, 0x31bf),
    (0xfe10, 0xfe1f),
    (0xfe30, 0xfe4f),
    (0x2600, 0x26ff),
    (0x2700, 0x27bf),
    (0x3200, 0x32ff),
    (0x3300, 0x33ff),
];

fn is_zh_char(c: char) -> bool {
    let c = c as u32;
    ZH_RANGES.iter().any(|&(lo, hi)| lo <= c && c <= hi)
}

pub fn tokenize_zh(line: &str) -> Vec<String> {
    let mut s = String::with_capacity(line.len() * 2);
    for c in line.trim().chars() {
        if is_zh_char(c) {
            s.push(' ');
            s.push(c);
            s.push(' ');
        } else {
            s.push(c);
        }
    }
    regexp_tokenize(&s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub score: f64,
    pub correct: [usize; MAX_NGRAM],
    pub total: [usize; MAX_NGRAM],
    pub brevity_penalty: f64,
    pub sys_len: usize,
    pub ref_len: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    for w in tokens.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

/// Corpus BLEU with its sufficient statistics.
pub fn corpus_bleu_stats<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R], cfg: &BleuConfig) -> Result<BleuScore> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch {
            left: hyps.len(),
            right: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(Error::arg("BLEU needs at least one segment"));
    }
    let mut correct = [0usize; MAX_NGRAM];
    let mut total = [0usize; MAX_NGRAM];
    let (mut sys_len, mut ref_len) = (0, 0);
    for (h, r) in hyps.iter().zip(refs) {
        let ht = cfg.tokenize(h.as_ref());
        let rt = cfg.tokenize(r.as_ref());
        sys_len += ht.len();
        ref_len += rt.len();
        for n in 1..=MAX_NGRAM {
            let hc = ngram_counts(&ht, n);
            let rc = ngram_counts(&rt, n);
            total[n - 1] += ht.len().saturating_sub(n - 1);
            correct[n - 1] += hc
                .iter()
                .map(|(g, c)| (*c).min(rc.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    let brevity_penalty = if sys_len >= ref_len {
        1.0
    } else if sys_len > 0 {
        (1.0 - ref_len as f64 / sys_len as f64).exp()
    } else {
        0.0
    };
    // unsmoothed: any zero precision (or an order never observed) zeroes the score
    let score = if correct.iter().zip(&total).any(|(&c, &t)| c == 0 || t == 0) {
        0.0
    } else {
        let log_mean = correct
            .iter()
            .zip(&total)
            .map(|(&c, &t)| (c as f64 / t as f64).ln())
            .sum::<f64>()
            / MAX_NGRAM as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuScore {
        score,
        correct,
        total,
        brevity_penalty,
        sys_len,
        ref_len,
    })
}

/// Corpus BLEU in `[0, 100]`.
pub fn corpus_bleu<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R], cfg: &BleuConfig) -> Result<f64> {
    Ok(corpus_bleu_stats(hyps, refs, cfg)?.score)
}

/// Document-level BLEU: sentences are concatenated per document, then
/// scored as a corpus of documents.
pub fn doc_bleu<S: AsRef<str>>(docs: &[(Vec<S>, Vec<S>)], cfg: &BleuConfig) -> Result<f64> {
    let mut hyps = Vec::with_capacity(docs.len());
    let mut refs = Vec::with_capacity(docs.len());
    let join = |v: &[S]| v.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(cfg.sentence_joiner());
    for (h, r) in docs {
        if h.len() != r.len() {
            return Err(Error::LengthMismatch {
                left: h.len(),
                right: r.len(),
            });
        }
        hyps.push(join(h));
        refs.push(join(r));
    }
    corpus_bleu(&hyps, &refs, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CometScores {
    pub mean: f64,
    pub segments: Vec<f64>,
}

/// Mean COMET over aligned segments. `Ok(None)` when the scorer is
/// degraded; the caller reports BLEU only.
pub fn comet_batch<S: AsRef<str> + Sync>(
    srcs: &[S],
    hyps: &[S],
    refs: &[S],
    backend: &dyn Backend,
    jobs: usize,
) -> Result<Option<CometScores>> {
    if srcs.len() != hyps.len() || hyps.len() != refs.len() {
        return Err(Error::LengthMismatch {
            left: srcs.len(),
            right: hyps.len().min(refs.len()),
        });
    }
    if srcs.is_empty() {
        return Err(Error::arg("COMET needs at least one segment"));
    }
    let idx: Vec<usize> = (0..srcs.len()).collect();
    let scored = map_bounded(&idx, jobs, |&i| {
        backend.comet_score(srcs[i].as_ref(), hyps[i].as_ref(), refs[i].as_ref())
    });
    let mut segments = Vec::with_capacity(scored.len());
    for s in scored {
        match s {
            Ok(v) => segments.push(v),
            Err(e) if e.is_degraded() => {
                log::warn!("COMET unavailable, reporting BLEU only: {e}");
                return Ok(None);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mean = segments.iter().sum::<f64>() / segments.len() as f64;
    Ok(Some(CometScores { mean, segments }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Average (fractional) ranks, 1-based; ties share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of a correlation under the t approximation.
pub fn t_test_p_value(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Spearman's rho with average ranks for ties and a t-approximation p-value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::UndefinedCorrelation(format!("need at least 3 points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedCorrelation("non-finite value".into()));
    }
    let rho = pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::UndefinedCorrelation("zero variance".into()))?;
    Ok(CorrelationResult {
        rho,
        p_value: t_test_p_value(rho, x.len()),
        n: x.len(),
    })
}

/// Exact two-sided permutation p-value for small samples (n ≤ 10).
pub fn spearman_permutation_p(x: &[f64], y: &[f64]) -> Result<f64> {
    let observed = spearman(x, y)?.rho;
    let n = x.len();
    if n > 10 {
        return Err(Error::arg("exact permutation test limited to n <= 10"));
    }
    let rx = average_ranks(x);
    let mut ry = average_ranks(y);
    let (mut hits, mut count) = (0u64, 0u64);
    // Heap's algorithm over all n! orderings of the y ranks
    let mut c = vec![0usize; n];
    let mut visit = |ry: &[f64]| {
        count += 1;
        if pearson(&rx, ry).is_some_and(|r| r.abs() >= observed.abs() - 1e-12) {
            hits += 1;
        }
    };
    visit(&ry);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                ry.swap(0, i);
            } else {
                ry.swap(c[i], i);
            }
            visit(&ry);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(hits as f64 / count as f64)
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{CometMode, MockBackend};

    const LATIN: BleuConfig = BleuConfig::new(BleuTokenizer::Tok13a);

    #[test]
    fn identity_is_100() {
        let refs = ["The cat sat on the mat.", "Another sentence with several tokens here."];
        assert_eq!(corpus_bleu(&refs, &refs, &LATIN).unwrap(), 100.0);
    }

    #[test]
    fn empty_hypotheses_score_zero() {
        assert_eq!(corpus_bleu(&["", ""], &["a b c d", "e f g h"], &LATIN).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(corpus_bleu(&["a"], &["a", "b"], &LATIN).is_err());
    }

    #[test]
    fn tokenizer_13a_rules() {
        assert_eq!(tokenize_13a("Hello, world! It's 3.5-4 (ok)."), [
            "Hello", ",", "world", "!", "It's", "3.5", "-", "4", "(", "ok", ")", "."
        ]);
        assert_eq!(tokenize_13a("a &amp; b"), ["a", "&", "b"]);
        assert_eq!(tokenize_13a("1,000 people"), ["1,000", "people"]);
    }

    #[test]
    fn tokenizer_zh_splits_characters() {
        assert_eq!(tokenize_zh("我爱 NLP。"), ["我", "爱", "NLP", "。"]);
        // U+2014 falls inside the shifted range
        assert_eq!(tokenize_zh("a—b"), ["a", "—", "b"]);
    }

    #[test]
    fn doc_bleu_reduces_to_corpus_bleu() {
        let d = vec![(vec!["the quick brown fox jumps"], vec!["the quick brown fox jumped"])];
        assert_eq!(
            doc_bleu(&d, &LATIN).unwrap(),
            corpus_bleu(&["the quick brown fox jumps"], &["the quick brown fox jumped"], &LATIN).unwrap()
        );
        let misaligned = vec![(vec!["a", "b"], vec!["a"])];
        assert!(doc_bleu(&misaligned, &LATIN).is_err());
    }

    #[test]
    fn comet_aggregation() {
        let m = MockBackend::new().with_comet(CometMode::Constant(0.5));
        let s = ["a"; 4];
        assert_eq!(comet_batch(&s, &s, &s, &m, 2).unwrap().unwrap().mean, 0.5);
        let one = MockBackend::new().with_comet(CometMode::Constant(0.7));
        assert_eq!(comet_batch(&["a"], &["b"], &["c"], &one, 1).unwrap().unwrap().segments, vec![0.7]);
        assert_eq!(comet_batch(&["a"], &["b"], &["c"], &MockBackend::new(), 1).unwrap(), None);
    }

    #[test]
    fn spearman_monotone() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap().rho, 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().rho, -1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().p_value, 0.0);
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 3.0]), [1.0, 2.5, 2.5, 4.0]);
        assert_eq!(average_ranks(&[5.0, 5.0, 5.0]), [2.0, 2.0, 2.0]);
    }

    #[test]
    fn t_approximation_tracks_exact_permutation() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0, 8.0, 7.0];
        let exact = spearman_permutation_p(&x, &y).unwrap();
        let approx = spearman(&x, &y).unwrap().p_value;
        assert!(exact < 0.01 && approx < 0.01, "{exact} {approx}");
        let y2 = [5.0, 1.0, 8.0, 3.0, 2.0, 7.0, 4.0, 6.0];
        let exact = spearman_permutation_p(&x, &y2).unwrap();
        let approx = spearman(&x, &y2).unwrap().p_value;
        assert!((exact - approx).abs() < 0.1, "{exact} {approx}");
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(mean_sd(&[2.0, 4.0]), (3.0, 2f64.sqrt()));
    }
}

//! Quality warnings, prefiltering, and the quality/harmful filter stages.
//!
//! All line-based rules split on `'\n'`; a "short" line has fewer than
//! [`SHORT_LINE_CHARS`] characters.

use std::collections::BTreeSet;

use crate::doc_model::{Document, QualityWarning};
use crate::error::{Error, Result};

pub const TINY_LINES: usize = 5;
pub const SHORT_LINE_CHARS: usize = 100;
pub const MIN_CHARS: usize = 200;
pub const MIN_LANG_SCORE: f64 = 0.5;
pub const HARMFUL_PPL_THRESHOLD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QualityConfig {
    /// Count whitespace as non-letter in the noisy ratio. When false,
    /// whitespace is left out of both numerator and denominator.
    pub whitespace_is_nonletter: bool,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            whitespace_is_nonletter: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Drop(String),
}

impl Verdict {
    pub fn is_keep(&self) -> bool {
        matches!(self, Verdict::Keep)
    }
}

/// Lines in the header/footer window: ceil(20% of `n`), at least 1.
pub fn edge_window(n: usize) -> usize {
    n.div_ceil(5).max(1)
}

pub fn annotate_quality(text: &str) -> BTreeSet<QualityWarning> {
    annotate_quality_with(text, QualityConfig::default())
}

pub fn annotate_quality_with(text: &str, cfg: QualityConfig) -> BTreeSet<QualityWarning> {
    let mut out = BTreeSet::new();
    let short: Vec<bool> = text
        .split('\n')
        .map(|l| l.chars().count() < SHORT_LINE_CHARS)
        .collect();
    let n = short.len();
    if n < TINY_LINES {
        out.insert(QualityWarning::Tiny);
    }

    let (mut total, mut non_letters) = (0usize, 0usize);
    for c in text.chars() {
        if c.is_whitespace() && !cfg.whitespace_is_nonletter {
            continue;
        }
        total += 1;
        if !crate::normalize::is_letter(c) {
            non_letters += 1;
        }
    }
    if 2 * non_letters > total {
        out.insert(QualityWarning::Noisy);
    }

    let w = edge_window(n).min(n);
    let count = |s: &[bool]| s.iter().filter(|&&b| b).count();
    if 2 * count(&short[..w]) > w {
        out.insert(QualityWarning::Header);
    }
    if 2 * count(&short[n - w..]) > w {
        out.insert(QualityWarning::Footer);
    }
    if 2 * count(&short) >= n {
        out.insert(QualityWarning::ShortSentences);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefilterConfig {
    pub min_chars: usize,
    pub min_lang_score: f64,
}

impl Default for PrefilterConfig {
    fn default() -> Self {
        PrefilterConfig {
            min_chars: MIN_CHARS,
            min_lang_score: MIN_LANG_SCORE,
        }
    }
}

pub fn prefilter(doc: &Document, cfg: &PrefilterConfig) -> Verdict {
    if doc.char_len() < cfg.min_chars {
        Verdict::Drop("too_short".into())
    } else if doc.meta.language_score < cfg.min_lang_score {
        Verdict::Drop("low_lang_score".into())
    } else {
        Verdict::Keep
    }
}

/// Default policy: every warning is fatal.
pub fn default_policy() -> BTreeSet<QualityWarning> {
    QualityWarning::ALL.into_iter().collect()
}

/// Drops when any warning is in `policy`; the reason lists the hits, comma-separated.
pub fn filter_quality(
    warnings: &BTreeSet<QualityWarning>,
    policy: &BTreeSet<QualityWarning>,
) -> Verdict {
    let hits: Vec<&str> = warnings.intersection(policy).map(|w| w.as_str()).collect();
    if hits.is_empty() {
        Verdict::Keep
    } else {
        Verdict::Drop(hits.join(","))
    }
}

/// Drops documents whose perplexity under the harmful-content model is
/// strictly below `threshold`.
pub fn filter_harmful(harmful_ppl: f64, threshold: f64) -> Result<Verdict> {
    if !harmful_ppl.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "harmful perplexity {harmful_ppl} is not finite"
        )));
    }
    Ok(if harmful_ppl < threshold {
        Verdict::Drop(format!("harmful_ppl<{threshold}"))
    } else {
        Verdict::Keep
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use QualityWarning::*;

    fn long(n: usize) -> String {
        "a".repeat(n)
    }

    fn lines(ls: &[String]) -> String {
        ls.join("\n")
    }

    fn set(ws: &[QualityWarning]) -> BTreeSet<QualityWarning> {
        ws.iter().copied().collect()
    }

    #[test]
    fn tiny_boundary() {
        assert_eq!(annotate_quality(&lines(&vec![long(120); 4])), set(&[Tiny]));
        assert_eq!(annotate_quality(&lines(&vec![long(120); 5])), set(&[]));
    }

    #[test]
    fn noisy_examples() {
        assert!(annotate_quality("abc!!! ???").contains(&Noisy));
        // 5 letters, 5 non-letters: exactly half is not noisy.
        assert!(!annotate_quality("abcde12345").contains(&Noisy));
        assert!(annotate_quality("abcd123456").contains(&Noisy));
        let cfg = QualityConfig {
            whitespace_is_nonletter: false,
        };
        assert!(annotate_quality("ab  c    d !").contains(&Noisy));
        assert!(!annotate_quality_with("ab  c    d !", cfg).contains(&Noisy));
    }

    #[test]
    fn header_and_footer_windows() {
        let mut ls = vec![long(5), long(5)];
        ls.extend(vec![long(120); 8]);
        assert_eq!(annotate_quality(&lines(&ls)), set(&[Header]));
        ls.reverse();
        assert_eq!(annotate_quality(&lines(&ls)), set(&[Footer]));
    }

    #[test]
    fn header_is_strict_short_sentences_is_not() {
        // 10 lines, window 2: one short line in the window is exactly 50%.
        let mut ls = vec![long(5)];
        ls.extend(vec![long(120); 9]);
        assert!(!annotate_quality(&lines(&ls)).contains(&Header));
        // 5 of 10 lines short: ShortSentences fires at exactly 50%.
        let mut ls = vec![long(120); 5];
        ls.extend(vec![long(99); 5]);
        let w = annotate_quality(&lines(&ls));
        assert!(w.contains(&ShortSentences));
        assert!(w.contains(&Footer) && !w.contains(&Header));
        let mut ls = vec![long(120); 6];
        ls.extend(vec![long(99); 4]);
        assert!(!annotate_quality(&lines(&ls)).contains(&ShortSentences));
        // 100 characters is not short.
        assert_eq!(annotate_quality(&lines(&vec![long(100); 5])), set(&[]));
    }

    #[test]
    fn short_documents_still_have_a_window() {
        assert_eq!(edge_window(1), 1);
        assert_eq!(edge_window(4), 1);
        assert_eq!(edge_window(5), 1);
        assert_eq!(edge_window(6), 2);
        assert_eq!(edge_window(10), 2);
        assert_eq!(edge_window(11), 3);
        let w = annotate_quality("");
        assert!(w.contains(&Tiny) && w.contains(&Header) && w.contains(&Footer));
    }

    fn doc(chars: usize, score: f64) -> Document {
        let mut d = Document::new("c/en/0/0".into(), "x".repeat(chars), "2024-01-01".into());
        d.meta.language_score = score;
        d
    }

    #[test]
    fn prefilter_boundaries() {
        let cfg = PrefilterConfig::default();
        assert_eq!(
            prefilter(&doc(199, 0.9), &cfg),
            Verdict::Drop("too_short".into())
        );
        assert_eq!(prefilter(&doc(200, 0.9), &cfg), Verdict::Keep);
        assert_eq!(
            prefilter(&doc(300, 0.49), &cfg),
            Verdict::Drop("low_lang_score".into())
        );
        assert_eq!(prefilter(&doc(300, 0.50), &cfg), Verdict::Keep);
        assert_eq!(
            prefilter(&doc(0, 1.0), &cfg),
            Verdict::Drop("too_short".into())
        );
        // Characters, not bytes.
        let mut d = doc(0, 1.0);
        d.text = "é".repeat(150);
        assert!(!prefilter(&d, &cfg).is_keep());
    }

    #[test]
    fn quality_policy() {
        let all = default_policy();
        assert_eq!(
            filter_quality(&set(&[Tiny]), &all),
            Verdict::Drop("tiny".into())
        );
        assert_eq!(filter_quality(&set(&[]), &all), Verdict::Keep);
        assert_eq!(
            filter_quality(&set(&[Header]), &set(&[Tiny, Noisy])),
            Verdict::Keep
        );
        assert_eq!(
            filter_quality(&set(&[Noisy, Tiny, Footer]), &set(&[Tiny, Noisy])),
            Verdict::Drop("tiny,noisy".into())
        );
    }

    #[test]
    fn harmful_threshold() {
        assert!(!filter_harmful(4.9, 5.0).unwrap().is_keep());
        assert!(!filter_harmful(4.999, 5.0).unwrap().is_keep());
        assert!(filter_harmful(5.0, 5.0).unwrap().is_keep());
        assert!(filter_harmful(10_000.0, 5.0).unwrap().is_keep());
        assert!(filter_harmful(f64::NAN, 5.0).is_err());
        assert!(filter_harmful(f64::INFINITY, 5.0).is_err());
    }

    proptest! {
        #[test]
        fn annotation_is_pure(s in "(\\PC|\n){0,300}") {
            let a = annotate_quality(&s);
            prop_assert_eq!(a, annotate_quality(&s));
        }
    }
}

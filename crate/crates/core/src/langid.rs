//! Line-level language identification with a character 1–3-gram
//! multinomial model, and the document-level aggregation that turns line
//! labels into a monolingual/multilingual verdict.

use std::collections::{BTreeMap, HashMap};
use std::hash::{BuildHasherDefault, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::doc_model::{relabel_docid, Document, UNDETERMINED};
use crate::error::{Error, Result};

/// Label for lines whose top posterior falls below [`LINE_CONFIDENCE`].
pub const UNKNOWN: &str = "unknown";
/// Minimum posterior for a line to keep its predicted language.
pub const LINE_CONFIDENCE: f64 = 0.8;
/// Minimum weighted confidence for a monolingual document.
pub const DOC_CONFIDENCE: f64 = 0.6;
/// Multilingual documents need at least this many lines...
pub const MIN_MULTILINGUAL_LINES: usize = 5;
/// ...and at most this many languages.
pub const MAX_LANGUAGES: usize = 5;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const MIN_TRAINING_CHARS: usize = 10_000;
const MAX_ORDER: usize = 3;
const MODEL_FORMAT: &str = "corpusprep-lid";
const MODEL_VERSION: u32 = 1;

/// Keys are already 64-bit hashes; pass them through.
#[derive(Default)]
struct IdentityHasher(u64);

impl Hasher for IdentityHasher {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = self.0.rotate_left(8) ^ u64::from(b);
        }
    }
    fn write_u64(&mut self, n: u64) {
        self.0 = n;
    }
}

type HashIndex = HashMap<u64, usize, BuildHasherDefault<IdentityHasher>>;

/// Hashes of all character 1..=3-grams of a space-padded, lowercased line.
pub fn char_ngrams(line: &str) -> Vec<u64> {
    let padded: Vec<char> = std::iter::once(' ')
        .chain(line.chars().flat_map(char::to_lowercase))
        .chain(std::iter::once(' '))
        .collect();
    let mut out = Vec::with_capacity(padded.len() * MAX_ORDER);
    let mut buf = String::new();
    for start in 0..padded.len() {
        buf.clear();
        for n in 1..=MAX_ORDER {
            let Some(&c) = padded.get(start + n - 1) else {
                break;
            };
            buf.push(c);
            if n == 1 && c == ' ' {
                continue;
            }
            out.push(xxhash_rust::xxh3::xxh3_64(buf.as_bytes()));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineLabel {
    pub language: String,
    pub confidence: f64,
    pub byte_len: usize,
}

impl LineLabel {
    /// Applies the confidence cut-off to the top class of a line.
    pub fn from_posterior(best: &str, confidence: f64, byte_len: usize) -> Self {
        let language = if confidence < LINE_CONFIDENCE {
            UNKNOWN.to_string()
        } else {
            best.to_string()
        };
        LineLabel {
            language,
            confidence,
            byte_len,
        }
    }

    pub fn is_unknown(&self) -> bool {
        self.language == UNKNOWN
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocLangKind {
    Monolingual,
    Multilingual,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocLangDecision {
    pub kind: DocLangKind,
    /// (language, byte proportion), largest first.
    pub languages: Vec<(String, f64)>,
    pub unknown_proportion: f64,
    /// Weighted confidence of the chosen language (monolingual and unknown kinds).
    pub weighted_confidence: Option<f64>,
}

/// Multinomial character n-gram classifier.
#[derive(Debug, Clone)]
pub struct LangIdModel {
    languages: Vec<String>,
    alpha: f64,
    log_priors: Vec<f64>,
    /// Log-probability for n-grams never seen in training, per language.
    unseen: Vec<f64>,
    index: HashIndex,
    /// Row-major: `log_probs[row * languages.len() + lang]`.
    log_probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    alpha: f64,
    languages: Vec<String>,
    log_priors: Vec<f64>,
    unseen: Vec<f64>,
    /// (n-gram hash, per-language log-probabilities), sorted by hash.
    ngrams: Vec<(u64, Vec<f64>)>,
}

pub fn train_profiles(corpus: &BTreeMap<String, String>) -> Result<LangIdModel> {
    train_profiles_with_alpha(corpus, DEFAULT_ALPHA)
}

/// Trains one profile per language. Languages are ordered by code; priors
/// are uniform.
pub fn train_profiles_with_alpha(
    corpus: &BTreeMap<String, String>,
    alpha: f64,
) -> Result<LangIdModel> {
    if corpus.len() < 2 {
        return Err(Error::Training(format!(
            "need at least 2 languages, got {}",
            corpus.len()
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Training(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    for (lang, text) in corpus {
        let n = text.chars().count();
        if n < MIN_TRAINING_CHARS {
            return Err(Error::Training(format!(
                "{lang}: {n} training characters, need {MIN_TRAINING_CHARS}"
            )));
        }
        if lang == UNKNOWN || lang.is_empty() {
            return Err(Error::Training(format!("invalid language code {lang:?}")));
        }
    }
    let n_lang = corpus.len();
    let mut counts: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    let mut totals = vec![0u64; n_lang];
    for (li, text) in corpus.values().enumerate() {
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            for h in char_ngrams(line) {
                counts.entry(h).or_insert_with(|| vec![0; n_lang])[li] += 1;
                totals[li] += 1;
            }
        }
    }
    let vocab = counts.len() as f64 + 1.0;
    let denom: Vec<f64> = totals.iter().map(|&t| t as f64 + alpha * vocab).collect();
    let unseen: Vec<f64> = denom.iter().map(|d| (alpha / d).ln()).collect();
    let mut index = HashIndex::default();
    let mut log_probs = Vec::with_capacity(counts.len() * n_lang);
    for (row, (h, cs)) in counts.iter().enumerate() {
        index.insert(*h, row);
        log_probs.extend(
            cs.iter()
                .zip(&denom)
                .map(|(&c, d)| ((c as f64 + alpha) / d).ln()),
        );
    }
    Ok(LangIdModel {
        languages: corpus.keys().cloned().collect(),
        alpha,
        log_priors: vec![-(n_lang as f64).ln(); n_lang],
        unseen,
        index,
        log_probs,
    })
}

impl LangIdModel {
    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Softmax posterior over languages, in [`Self::languages`] order.
    pub fn posteriors(&self, line: &str) -> Vec<f64> {
        let n = self.languages.len();
        let mut scores = self.log_priors.clone();
        for h in char_ngrams(line) {
            match self.index.get(&h) {
                Some(&row) => {
                    for (s, lp) in scores
                        .iter_mut()
                        .zip(&self.log_probs[row * n..(row + 1) * n])
                    {
                        *s += lp;
                    }
                }
                None => {
                    for (s, lp) in scores.iter_mut().zip(&self.unseen) {
                        *s += lp;
                    }
                }
            }
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / z).collect()
    }

    pub fn classify_line(&self, line: &str) -> LineLabel {
        if line.is_empty() {
            return LineLabel {
                language: UNKNOWN.to_string(),
                confidence: 0.0,
                byte_len: 0,
            };
        }
        let post = self.posteriors(line);
        // First maximum wins, so ties resolve to the smaller language code.
        let (best, conf) = post
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc },
            );
        LineLabel::from_posterior(&self.languages[best], conf, line.len())
    }

    pub fn classify_document(&self, text: &str) -> DocLangDecision {
        let labels: Vec<LineLabel> = text
            .split('\n')
            .filter(|l| !l.is_empty())
            .map(|l| self.classify_line(l))
            .collect();
        aggregate_lines(&labels)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.languages.len();
        let mut ngrams: Vec<(u64, Vec<f64>)> = self
            .index
            .iter()
            .map(|(&h, &row)| (h, self.log_probs[row * n..(row + 1) * n].to_vec()))
            .collect();
        ngrams.sort_unstable_by_key(|(h, _)| *h);
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            alpha: self.alpha,
            languages: self.languages.clone(),
            log_priors: self.log_priors.clone(),
            unseen: self.unseen.clone(),
            ngrams,
        };
        let bytes = serde_json::to_vec(&file).map_err(|e| Error::ModelFormat(e.to_string()))?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_slice(&bytes)
            .map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "{}: expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                path.display(),
                file.format,
                file.version
            )));
        }
        let n = file.languages.len();
        if n < 2 || file.log_priors.len() != n || file.unseen.len() != n {
            return Err(Error::ModelFormat("inconsistent language tables".into()));
        }
        let mut index = HashIndex::default();
        let mut log_probs = Vec::with_capacity(file.ngrams.len() * n);
        for (row, (h, lps)) in file.ngrams.into_iter().enumerate() {
            if lps.len() != n {
                return Err(Error::ModelFormat(format!(
                    "n-gram row {row} has {} entries",
                    lps.len()
                )));
            }
            index.insert(h, row);
            log_probs.extend(lps);
        }
        Ok(LangIdModel {
            languages: file.languages,
            alpha: file.alpha,
            log_priors: file.log_priors,
            unseen: file.unseen,
            index,
            log_probs,
        })
    }
}

/// Document verdict from line labels. Empty lines must already be excluded.
pub fn aggregate_lines(labels: &[LineLabel]) -> DocLangDecision {
    let total: usize = labels.iter().map(|l| l.byte_len).sum();
    if total == 0 {
        return DocLangDecision {
            kind: DocLangKind::Unknown,
            languages: Vec::new(),
            unknown_proportion: 0.0,
            weighted_confidence: None,
        };
    }
    let total = total as f64;
    let mut bytes: BTreeMap<&str, usize> = BTreeMap::new();
    let mut weighted: BTreeMap<&str, f64> = BTreeMap::new();
    let mut unknown_bytes = 0usize;
    for l in labels {
        if l.is_unknown() {
            unknown_bytes += l.byte_len;
        } else {
            *bytes.entry(&l.language).or_default() += l.byte_len;
            *weighted.entry(&l.language).or_default() += l.byte_len as f64 * l.confidence;
        }
    }
    let mut languages: Vec<(String, f64)> = bytes
        .iter()
        .map(|(&lang, &b)| (lang.to_string(), b as f64 / total))
        .collect();
    languages.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let unknown_proportion = unknown_bytes as f64 / total;

    let m = languages.len();
    let floor = 1.0 / (m as f64 + 1.0);
    let multilingual = labels.len() >= MIN_MULTILINGUAL_LINES
        && (2..=MAX_LANGUAGES).contains(&m)
        && languages.iter().all(|(_, p)| *p >= floor)
        && unknown_proportion <= floor;
    if multilingual {
        return DocLangDecision {
            kind: DocLangKind::Multilingual,
            languages,
            unknown_proportion,
            weighted_confidence: None,
        };
    }
    // BTreeMap order + strict comparison: ties go to the smaller code.
    let best = weighted.iter().map(|(&lang, &w)| (lang, w / total)).fold(
        None::<(&str, f64)>,
        |acc, cur| match acc {
            Some(a) if a.1 >= cur.1 => Some(a),
            _ => Some(cur),
        },
    );
    let Some((best_lang, wc)) = best else {
        return DocLangDecision {
            kind: DocLangKind::Unknown,
            languages,
            unknown_proportion,
            weighted_confidence: Some(0.0),
        };
    };
    // The chosen language leads the list.
    if let Some(pos) = languages.iter().position(|(l, _)| l == best_lang) {
        let chosen = languages.remove(pos);
        languages.insert(0, chosen);
    }
    DocLangDecision {
        kind: if wc < DOC_CONFIDENCE {
            DocLangKind::Unknown
        } else {
            DocLangKind::Monolingual
        },
        languages,
        unknown_proportion,
        weighted_confidence: Some(wc),
    }
}

/// Writes the verdict into `meta.language`/`meta.language_score` and the
/// docid's language segment.
pub fn apply_language(mut doc: Document, decision: &DocLangDecision) -> Document {
    let (lang, score) = match decision.kind {
        DocLangKind::Monolingual => (
            decision.languages[0].0.clone(),
            decision.weighted_confidence.unwrap_or(0.0),
        ),
        DocLangKind::Multilingual => decision.languages[0].clone(),
        DocLangKind::Unknown => (UNDETERMINED.to_string(), 0.0),
    };
    doc.meta.docid = relabel_docid(&doc.meta.docid, &lang);
    doc.meta.language = lang;
    doc.meta.language_score = score.clamp(0.0, 1.0);
    doc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(lang: &str, conf: f64, bytes: usize) -> LineLabel {
        LineLabel::from_posterior(lang, conf, bytes)
    }

    #[test]
    fn six_english_lines() {
        let labels = vec![label("en", 0.9, 40); 6];
        let d = aggregate_lines(&labels);
        assert_eq!(d.kind, DocLangKind::Monolingual);
        assert_eq!(d.languages, [("en".to_string(), 1.0)]);
        assert!((d.weighted_confidence.unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn three_and_three_is_multilingual() {
        let mut labels = vec![label("en", 0.9, 40); 3];
        labels.extend(vec![label("de", 0.9, 40); 3]);
        let d = aggregate_lines(&labels);
        assert_eq!(d.kind, DocLangKind::Multilingual);
        assert_eq!(
            d.languages,
            [("de".to_string(), 0.5), ("en".to_string(), 0.5)]
        );
        assert_eq!(d.unknown_proportion, 0.0);
    }

    #[test]
    fn low_weighted_confidence_is_unknown() {
        // 5 of 8 equal lines are en@0.88: 5 * 0.88 / 8 = 0.55.
        let mut labels = vec![label("en", 0.88, 10); 5];
        labels.extend(vec![label("de", 0.5, 10); 3]);
        let d = aggregate_lines(&labels);
        assert_eq!(d.kind, DocLangKind::Unknown);
        assert!((d.weighted_confidence.unwrap() - 0.55).abs() < 1e-12);
        assert!((d.unknown_proportion - 0.375).abs() < 1e-12);
    }

    #[test]
    fn four_lines_cannot_be_multilingual() {
        // en 60 bytes, de 40 bytes: proportions pass the 1/3 floor but 4 < 5 lines.
        let labels = vec![
            label("en", 1.0, 30),
            label("de", 1.0, 20),
            label("en", 1.0, 30),
            label("de", 1.0, 20),
        ];
        let d = aggregate_lines(&labels);
        assert_eq!(d.kind, DocLangKind::Monolingual);
        assert_eq!(d.languages[0], ("en".to_string(), 0.6));
        assert_eq!(d.weighted_confidence, Some(0.6));

        let mut five = labels.clone();
        five.push(label("de", 1.0, 20));
        assert_eq!(aggregate_lines(&five).kind, DocLangKind::Multilingual);
    }

    #[test]
    fn unknown_share_blocks_multilingual() {
        // m = 2, floor 1/3; unknown share 0.4 > 1/3.
        let mut labels = vec![label("en", 0.9, 30); 1];
        labels.push(label("de", 0.9, 30));
        labels.extend(vec![label("x", 0.1, 10); 4]);
        let d = aggregate_lines(&labels);
        assert_ne!(d.kind, DocLangKind::Multilingual);
    }

    #[test]
    fn line_threshold() {
        let l = label("en", 0.7, 12);
        assert_eq!(l.language, UNKNOWN);
        assert_eq!(l.confidence, 0.7);
        assert_eq!(label("en", 0.8, 1).language, "en");
    }

    #[test]
    fn apply_language_mapping() {
        let doc = Document::new("c/und/0/1".into(), "t".into(), "2024-01-01".into());
        let mono = DocLangDecision {
            kind: DocLangKind::Monolingual,
            languages: vec![("en".into(), 1.0)],
            unknown_proportion: 0.0,
            weighted_confidence: Some(0.9),
        };
        let d = apply_language(doc.clone(), &mono);
        assert_eq!(
            (d.meta.language.as_str(), d.meta.language_score),
            ("en", 0.9)
        );
        assert_eq!(d.meta.docid, "c/en/0/1");
        let multi = DocLangDecision {
            kind: DocLangKind::Multilingual,
            languages: vec![("de".into(), 0.6), ("fr".into(), 0.4)],
            unknown_proportion: 0.0,
            weighted_confidence: None,
        };
        let d = apply_language(doc.clone(), &multi);
        assert_eq!(
            (d.meta.language.as_str(), d.meta.language_score),
            ("de", 0.6)
        );
        let unk = DocLangDecision {
            kind: DocLangKind::Unknown,
            languages: vec![],
            unknown_proportion: 1.0,
            weighted_confidence: Some(0.2),
        };
        let d = apply_language(doc, &unk);
        assert_eq!(
            (d.meta.language.as_str(), d.meta.language_score),
            ("und", 0.0)
        );
    }

    fn corpus(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(l, t)| {
                (
                    l.to_string(),
                    t.repeat(MIN_TRAINING_CHARS / t.chars().count() + 1),
                )
            })
            .collect()
    }

    #[test]
    fn training_preconditions() {
        let one = corpus(&[("en", "the cat sat on the mat\n")]);
        assert!(matches!(train_profiles(&one), Err(Error::Training(_))));
        let mut short = corpus(&[("en", "the cat\n"), ("de", "die katze\n")]);
        short.insert("fr".into(), "le chat".into());
        assert!(matches!(train_profiles(&short), Err(Error::Training(_))));
    }

    #[test]
    fn identical_training_text_gives_prior_posteriors() {
        let text = "exactly the same words in both\n";
        let model = train_profiles(&corpus(&[("aa", text), ("bb", text)])).unwrap();
        let post = model.posteriors("the same words");
        assert!((post[0] - 0.5).abs() < 1e-9 && (post[1] - 0.5).abs() < 1e-9);
        let lbl = model.classify_line("the same words");
        assert_eq!(lbl.language, UNKNOWN);
        assert_eq!(model.classify_line(""), label("x", 0.0, 0));
    }

    #[test]
    fn save_load_identical_posteriors() {
        let model = train_profiles(&corpus(&[
            ("en", "the quick brown fox jumps over the lazy dog\n"),
            (
                "de",
                "der schnelle braune fuchs springt über den faulen hund\n",
            ),
        ]))
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lid.json");
        model.save(&p).unwrap();
        let again = LangIdModel::load(&p).unwrap();
        for line in ["the lazy dog", "über den hund", "zzz"] {
            assert_eq!(model.posteriors(line), again.posteriors(line));
        }
        let p2 = dir.path().join("lid2.json");
        again.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(model.classify_line("the quick dog jumps").language, "en");
        assert_eq!(model.classify_line("der faule hund springt").language, "de");
    }
}

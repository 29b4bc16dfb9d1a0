//! Document and metadata types and their JSONL wire format.
//!
//! One document is one line:
//! `{"meta":{"docid":..,"url":..,"title":..,"download_date":..,"language":..,"language_score":..},"text":..}`.
//! `url` and `title` are omitted when absent. Unrecognized `meta` keys survive a
//! parse/serialize cycle and are written after the known ones.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Wire key names, in serialization order.
pub const META_KEYS: [&str; 6] = [
    "docid",
    "url",
    "title",
    "download_date",
    "language",
    "language_score",
];

/// Language code used for non-language content such as source code.
pub const NON_LANGUAGE: &str = "xx";
/// Language code for documents whose language could not be determined.
pub const UNDETERMINED: &str = "und";

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub docid: String,
    pub url: Option<String>,
    pub title: Option<String>,
    pub download_date: String,
    pub language: String,
    pub language_score: f64,
    /// Unknown keys, in the order they were read.
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub meta: Metadata,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityWarning {
    Tiny,
    Noisy,
    Header,
    Footer,
    ShortSentences,
}

impl QualityWarning {
    pub const ALL: [QualityWarning; 5] = [
        QualityWarning::Tiny,
        QualityWarning::Noisy,
        QualityWarning::Header,
        QualityWarning::Footer,
        QualityWarning::ShortSentences,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QualityWarning::Tiny => "tiny",
            QualityWarning::Noisy => "noisy",
            QualityWarning::Header => "header",
            QualityWarning::Footer => "footer",
            QualityWarning::ShortSentences => "short_sentences",
        }
    }
}

impl fmt::Display for QualityWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QualityWarning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QualityWarning::ALL
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown quality warning {s:?}")))
    }
}

/// Per-document annotations produced by the web pipeline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Annotations {
    pub warnings: std::collections::BTreeSet<QualityWarning>,
    pub harmful_ppl: Option<f64>,
    /// (language, confidence, byte length) per line.
    pub line_languages: Option<Vec<(String, f64, usize)>>,
}

/// Parsed form of a `corpus/language/fileno/docno` identifier.
///
/// Ordering is tuple order, so `c/en/2/10` sorts after `c/en/2/9`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocId {
    pub corpus: String,
    pub language: String,
    pub fileno: u64,
    pub docno: u64,
}

impl DocId {
    pub fn parse(s: &str) -> Option<DocId> {
        let mut parts = s.split('/');
        let corpus = parts.next()?;
        let language = parts.next()?;
        let fileno = parts.next()?;
        let docno = parts.next()?;
        if parts.next().is_some() || corpus.is_empty() || language.is_empty() {
            return None;
        }
        Some(DocId {
            corpus: corpus.to_string(),
            language: language.to_string(),
            fileno: parse_decimal(fileno)?,
            docno: parse_decimal(docno)?,
        })
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.corpus, self.language, self.fileno, self.docno
        )
    }
}

fn parse_decimal(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Total order on docid strings: well-formed ids by tuple order, then
/// malformed ids by raw text.
pub fn cmp_docids(a: &str, b: &str) -> Ordering {
    match (DocId::parse(a), DocId::parse(b)) {
        (Some(x), Some(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.cmp(b),
    }
}

pub fn make_docid(corpus: &str, language: &str, fileno: u64, docno: u64) -> Result<String> {
    if corpus.is_empty() || language.is_empty() {
        return Err(Error::InvalidArgument(
            "docid corpus and language must be non-empty".into(),
        ));
    }
    for (name, seg) in [("corpus", corpus), ("language", language)] {
        if seg.contains('/') || seg.contains('\n') {
            return Err(Error::InvalidArgument(format!(
                "docid {name} {seg:?} contains '/' or newline"
            )));
        }
    }
    Ok(format!("{corpus}/{language}/{fileno}/{docno}"))
}

/// Returns `docid` with its language segment replaced, or `docid` unchanged
/// if it is not a well-formed four-part id.
pub fn relabel_docid(docid: &str, language: &str) -> String {
    match DocId::parse(docid) {
        Some(mut id) => {
            id.language = language.to_string();
            id.to_string()
        }
        None => docid.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

pub fn validate_metadata(doc: &Document) -> Vec<Violation> {
    let m = &doc.meta;
    let mut out = Vec::new();
    let segs: Vec<&str> = m.docid.split('/').collect();
    if segs.len() != 4 {
        out.push(Violation {
            field: "docid",
            rule: format!("expected 4 slash-separated segments, found {}", segs.len()),
        });
    } else if segs.iter().any(|s| s.is_empty()) {
        out.push(Violation {
            field: "docid",
            rule: "empty segment".into(),
        });
    } else if parse_decimal(segs[2]).is_none() || parse_decimal(segs[3]).is_none() {
        out.push(Violation {
            field: "docid",
            rule: "fileno and docno must be non-negative integers".into(),
        });
    }
    if !is_valid_date(&m.download_date) {
        out.push(Violation {
            field: "download_date",
            rule: format!("{:?} is not a valid YYYY-MM-DD date", m.download_date),
        });
    }
    let lang_ok =
        (2..=3).contains(&m.language.len()) && m.language.bytes().all(|b| b.is_ascii_lowercase());
    if !lang_ok {
        out.push(Violation {
            field: "language",
            rule: format!("{:?} is not a 2-3 letter ISO 639 code", m.language),
        });
    }
    if !(m.language_score.is_finite() && (0.0..=1.0).contains(&m.language_score)) {
        out.push(Violation {
            field: "language_score",
            rule: format!("{} outside [0, 1]", m.language_score),
        });
    }
    for key in m.extra.keys() {
        if META_KEYS.contains(&key.as_str()) {
            out.push(Violation {
                field: "meta",
                rule: format!("extra key {key:?} shadows a schema key"),
            });
        }
    }
    out
}

pub fn is_valid_date(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return false;
    }
    let digits = |r: std::ops::Range<usize>| -> Option<u32> {
        let part = &s[r];
        part.bytes()
            .all(|c| c.is_ascii_digit())
            .then(|| part.parse().ok())
            .flatten()
    };
    let (Some(year), Some(month), Some(day)) = (digits(0..4), digits(5..7), digits(8..10)) else {
        return false;
    };
    let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    let days = match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if leap => 29,
        2 => 28,
        _ => return false,
    };
    (1..=days).contains(&day)
}

/// Serializes to one JSON line (no trailing newline).
pub fn serialize_document(doc: &Document) -> Result<String> {
    let violations = validate_metadata(doc);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    let m = &doc.meta;
    let mut meta = Map::new();
    meta.insert("docid".into(), Value::String(m.docid.clone()));
    if let Some(url) = &m.url {
        meta.insert("url".into(), Value::String(url.clone()));
    }
    if let Some(title) = &m.title {
        meta.insert("title".into(), Value::String(title.clone()));
    }
    meta.insert(
        "download_date".into(),
        Value::String(m.download_date.clone()),
    );
    meta.insert("language".into(), Value::String(m.language.clone()));
    let score = serde_json::Number::from_f64(m.language_score)
        .ok_or_else(|| Error::InvalidArgument("non-finite language_score".into()))?;
    meta.insert("language_score".into(), Value::Number(score));
    for (k, v) in &m.extra {
        meta.insert(k.clone(), v.clone());
    }
    let mut top = Map::new();
    top.insert("meta".into(), Value::Object(meta));
    top.insert("text".into(), Value::String(doc.text.clone()));
    Ok(serde_json::to_string(&Value::Object(top)).expect("JSON value always serializes"))
}

pub fn parse_document(line: &str) -> Result<Document> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Json {
        offset: byte_offset(line, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let Value::Object(mut top) = value else {
        return Err(Error::Schema("record is not a JSON object".into()));
    };
    let text = match top.remove("text") {
        Some(Value::String(t)) => t,
        Some(_) => return Err(Error::Schema("\"text\" is not a string".into())),
        None => return Err(Error::Schema("missing \"text\"".into())),
    };
    let mut meta = match top.remove("meta") {
        Some(Value::Object(m)) => m,
        Some(_) => return Err(Error::Schema("\"meta\" is not an object".into())),
        None => return Err(Error::Schema("missing \"meta.docid\"".into())),
    };
    let docid = take_string(&mut meta, "docid")?
        .ok_or_else(|| Error::Schema("missing \"meta.docid\"".into()))?;
    let url = take_string(&mut meta, "url")?;
    let title = take_string(&mut meta, "title")?;
    let download_date = take_string(&mut meta, "download_date")?.unwrap_or_default();
    let language = take_string(&mut meta, "language")?.unwrap_or_default();
    let language_score = match meta.shift_remove("language_score") {
        None | Some(Value::Null) => 0.0,
        Some(Value::Number(n)) => n
            .as_f64()
            .ok_or_else(|| Error::Schema("language_score is not a float".into()))?,
        Some(_) => return Err(Error::Schema("\"language_score\" is not a number".into())),
    };
    Ok(Document {
        meta: Metadata {
            docid,
            url,
            title,
            download_date,
            language,
            language_score,
            extra: meta,
        },
        text,
    })
}

fn take_string(meta: &mut Map<String, Value>, key: &str) -> Result<Option<String>> {
    match meta.shift_remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(Error::Schema(format!("\"meta.{key}\" is not a string"))),
    }
}

/// serde_json reports 1-based line/column; convert to a 0-based byte offset.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

impl Document {
    /// Builds a document with empty language fields, the state right after ingest.
    pub fn new(docid: String, text: String, download_date: String) -> Self {
        Document {
            meta: Metadata {
                docid,
                url: None,
                title: None,
                download_date,
                language: UNDETERMINED.to_string(),
                language_score: 0.0,
                extra: Map::new(),
            },
            text,
        }
    }

    pub fn docid(&self) -> &str {
        &self.meta.docid
    }

    /// Character count (Unicode scalar values).
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Reads annotation keys written by [`Document::set_annotations`].
    pub fn annotations(&self) -> Annotations {
        let mut ann = Annotations::default();
        if let Some(Value::Array(ws)) = self.meta.extra.get("quality_warnings") {
            ann.warnings = ws
                .iter()
                .filter_map(Value::as_str)
                .filter_map(|s| s.parse().ok())
                .collect();
        }
        ann.harmful_ppl = self.meta.extra.get("harmful_ppl").and_then(Value::as_f64);
        ann
    }

    /// Stores annotations as extra metadata keys (`quality_warnings`, `harmful_ppl`).
    pub fn set_annotations(&mut self, ann: &Annotations) {
        let ws = ann
            .warnings
            .iter()
            .map(|w| Value::String(w.as_str().to_string()))
            .collect();
        self.meta
            .extra
            .insert("quality_warnings".into(), Value::Array(ws));
        match ann.harmful_ppl.and_then(serde_json::Number::from_f64) {
            Some(p) => {
                self.meta
                    .extra
                    .insert("harmful_ppl".into(), Value::Number(p));
            }
            None => {
                self.meta.extra.shift_remove("harmful_ppl");
            }
        }
    }
}

//! WET record parsing and curated-corpus ingestion.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::MultiGzDecoder;

use crate::doc_model::{make_docid, parse_document, relabel_docid, Document, UNDETERMINED};
use crate::error::{Error, Result};
use crate::par::Exec;

/// A crawl dump label `YYYY-WW` (week not zero-padded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DumpRef {
    pub year: u32,
    pub week: u32,
}

impl fmt::Display for DumpRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.year, self.week)
    }
}

impl FromStr for DumpRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_dump_label(s)
    }
}

pub fn parse_dump_label(label: &str) -> Result<DumpRef> {
    let bad = |reason: &str| Error::DumpLabel {
        label: label.to_string(),
        reason: reason.to_string(),
    };
    let (y, w) = label
        .split_once('-')
        .ok_or_else(|| bad("expected YYYY-WW"))?;
    if y.len() != 4 || !y.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad("year must be four digits"));
    }
    if w.is_empty() || w.len() > 2 || !w.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad("week must be numeric"));
    }
    let year: u32 = y.parse().map_err(|_| bad("year must be numeric"))?;
    let week: u32 = w.parse().map_err(|_| bad("week must be numeric"))?;
    if year < 2008 {
        return Err(bad("year before 2008"));
    }
    if !(1..=53).contains(&week) {
        return Err(bad("week outside 1..=53"));
    }
    Ok(DumpRef { year, week })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WetRecord {
    /// Header lines in file order.
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl WetRecord {
    /// Case-insensitive header lookup (first match).
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn warc_type(&self) -> Option<&str> {
        self.header("WARC-Type")
    }
}

/// Streaming WARC/WET parser. Yields one item per `WARC/1.x` version line.
pub struct WetReader<R> {
    input: R,
    index: usize,
    done: bool,
}

pub fn parse_wet_stream<R: BufRead>(input: R) -> WetReader<R> {
    WetReader {
        input,
        index: 0,
        done: false,
    }
}

impl<R: BufRead> WetReader<R> {
    fn read_line(&mut self, buf: &mut Vec<u8>) -> Result<usize> {
        buf.clear();
        self.input
            .read_until(b'\n', buf)
            .map_err(|e| Error::MalformedRecord {
                index: self.index,
                reason: e.to_string(),
            })
    }

    fn next_record(&mut self) -> Result<Option<WetRecord>> {
        let mut line = Vec::new();
        // Skip the blank lines that separate records.
        loop {
            if self.read_line(&mut line)? == 0 {
                return Ok(None);
            }
            if !trim_eol(&line).is_empty() {
                break;
            }
        }
        let index = self.index;
        self.index += 1;
        let version = String::from_utf8_lossy(trim_eol(&line)).into_owned();
        if !version.starts_with("WARC/") {
            return Err(Error::MalformedRecord {
                index,
                reason: format!("expected WARC version line, found {version:?}"),
            });
        }
        let mut headers = Vec::new();
        loop {
            if self.read_line(&mut line)? == 0 {
                return Err(Error::MalformedRecord {
                    index,
                    reason: "end of stream inside header block".into(),
                });
            }
            let l = trim_eol(&line);
            if l.is_empty() {
                break;
            }
            let text = String::from_utf8_lossy(l);
            let (name, value) = text.split_once(':').ok_or_else(|| Error::MalformedRecord {
                index,
                reason: format!("header line without ':' {text:?}"),
            })?;
            headers.push((name.trim().to_string(), value.trim().to_string()));
        }
        let record = WetRecord {
            headers,
            body: Vec::new(),
        };
        let len: usize = record
            .header("Content-Length")
            .ok_or_else(|| Error::MalformedRecord {
                index,
                reason: "missing Content-Length".into(),
            })?
            .parse()
            .map_err(|_| Error::MalformedRecord {
                index,
                reason: "Content-Length is not a non-negative integer".into(),
            })?;
        let mut body = Vec::with_capacity(len);
        (&mut self.input)
            .take(len as u64)
            .read_to_end(&mut body)
            .map_err(|e| Error::MalformedRecord {
                index,
                reason: e.to_string(),
            })?;
        if body.len() < len {
            return Err(Error::Truncated {
                index,
                expected: len,
                got: body.len(),
            });
        }
        Ok(Some(WetRecord { body, ..record }))
    }
}

impl<R: BufRead> Iterator for WetReader<R> {
    type Item = Result<WetRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.next_record().transpose();
        if matches!(item, None | Some(Err(_))) {
            self.done = true;
        }
        item
    }
}

fn trim_eol(line: &[u8]) -> &[u8] {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    line.strip_suffix(b"\r").unwrap_or(line)
}

/// Opens a file for parsing, transparently gunzipping when `gzip` is set.
pub fn open_input(path: &Path, gzip: bool) -> Result<Box<dyn BufRead + Send>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(if gzip {
        Box::new(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        Box::new(BufReader::new(file))
    })
}

/// Corpus name used for web documents of one dump.
pub fn web_corpus_name(base: &str, dump: DumpRef) -> String {
    format!("{base}-{dump}")
}

/// Converts a `conversion` record into a document; other record types yield `None`.
pub fn wet_to_document(
    record: &WetRecord,
    dump: DumpRef,
    corpus: &str,
    fileno: u64,
    docno: u64,
) -> Result<Option<Document>> {
    if record.warc_type() != Some("conversion") {
        return Ok(None);
    }
    let docid = make_docid(&web_corpus_name(corpus, dump), UNDETERMINED, fileno, docno)?;
    let date = record
        .header("WARC-Date")
        .map(|d| d.split('T').next().unwrap_or(d).to_string())
        .unwrap_or_default();
    let mut doc = Document::new(
        docid,
        String::from_utf8_lossy(&record.body).into_owned(),
        date,
    );
    doc.meta.url = record.header("WARC-Target-URI").map(str::to_string);
    Ok(Some(doc))
}

/// Reads every conversion record of one WET file. `docno` counts conversion
/// records only.
pub fn read_wet_file(
    path: &Path,
    gzip: bool,
    dump: DumpRef,
    corpus: &str,
    fileno: u64,
) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for record in parse_wet_stream(open_input(path, gzip)?) {
        let record = record?;
        if let Some(doc) = wet_to_document(&record, dump, corpus, fileno, docs.len() as u64)? {
            docs.push(doc);
        }
    }
    Ok(docs)
}

#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub docs: Vec<Document>,
    /// (file, message) for every unreadable file or rejected record.
    pub errors: Vec<(PathBuf, String)>,
}

/// Lists regular files under `dir` recursively, sorted by path.
pub fn sorted_files(dir: &Path, accept: impl Fn(&Path) -> bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if accept(&path) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some(ext)
}

/// Ingests `.txt` (one document per file) and `.jsonl` files under `dir`.
///
/// Files are ordered by path; `fileno` is the file ordinal and `docno` the
/// record ordinal within the file. Bad files and bad lines are recorded in
/// [`IngestOutcome::errors`] and skipped.
pub fn ingest_text_corpus(
    dir: &Path,
    corpus: &str,
    download_date: &str,
    exec: Exec,
) -> Result<IngestOutcome> {
    make_docid(corpus, UNDETERMINED, 0, 0)?;
    let files = sorted_files(dir, |p| has_ext(p, "txt") || has_ext(p, "jsonl"))?;
    let indexed: Vec<(u64, PathBuf)> = files
        .into_iter()
        .enumerate()
        .map(|(i, p)| (i as u64, p))
        .collect();
    let per_file = exec.map(&indexed, |(fileno, path)| {
        read_corpus_file(path, corpus, download_date, *fileno)
    });
    let mut outcome = IngestOutcome::default();
    for (docs, errors) in per_file {
        outcome.docs.extend(docs);
        outcome.errors.extend(errors);
    }
    Ok(outcome)
}

type FileResult = (Vec<Document>, Vec<(PathBuf, String)>);

fn read_corpus_file(path: &Path, corpus: &str, download_date: &str, fileno: u64) -> FileResult {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => return (Vec::new(), vec![(path.to_path_buf(), e.to_string())]),
    };
    let text = String::from_utf8_lossy(&bytes);
    if has_ext(path, "txt") {
        let docid = make_docid(corpus, UNDETERMINED, fileno, 0).expect("corpus checked by caller");
        let mut doc = Document::new(docid, text.into_owned(), download_date.to_string());
        doc.meta.title = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        return (vec![doc], Vec::new());
    }
    let mut docs = Vec::new();
    let mut errors = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_document(line) {
            Ok(mut doc) => {
                let lang = if doc.meta.language.is_empty() {
                    UNDETERMINED.to_string()
                } else {
                    doc.meta.language.clone()
                };
                let docid = make_docid(corpus, &lang, fileno, docs.len() as u64)
                    .unwrap_or_else(|_| relabel_docid(&doc.meta.docid, &lang));
                doc.meta.docid = docid;
                if doc.meta.language.is_empty() {
                    doc.meta.language = lang;
                }
                if doc.meta.download_date.is_empty() {
                    doc.meta.download_date = download_date.to_string();
                }
                docs.push(doc);
            }
            Err(e) => errors.push((path.to_path_buf(), format!("line {}: {e}", lineno + 1))),
        }
    }
    (docs, errors)
}

//! Removal records: one JSONL line per removed document.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::doc_model::cmp_docids;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Prefilter,
    Quality,
    Harmful,
    Dedup,
}

impl Stage {
    pub const ALL: [Stage; 4] = [
        Stage::Prefilter,
        Stage::Quality,
        Stage::Harmful,
        Stage::Dedup,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Prefilter => "prefilter",
            Stage::Quality => "quality",
            Stage::Harmful => "harmful",
            Stage::Dedup => "dedup",
        }
    }

    /// Filtering stages, as opposed to deduplication.
    pub fn is_filter(self) -> bool {
        self != Stage::Dedup
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropRecord {
    pub docid: String,
    pub stage: Stage,
    pub reason: String,
}

impl DropRecord {
    pub fn new(docid: &str, stage: Stage, reason: impl Into<String>) -> Self {
        DropRecord {
            docid: docid.to_string(),
            stage,
            reason: reason.into(),
        }
    }
}

/// Sorts by (stage, docid tuple order) so logs are independent of scheduling.
pub fn sort_records(records: &mut [DropRecord]) {
    records.sort_by(|a, b| {
        a.stage
            .cmp(&b.stage)
            .then_with(|| cmp_docids(&a.docid, &b.docid))
    });
}

pub fn write_droplog(path: &Path, records: &[DropRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("drop record serializes");
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_droplog(path: &Path) -> Result<Vec<DropRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Schema(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format_and_order() {
        let mut recs = vec![
            DropRecord::new("c/en/0/10", Stage::Dedup, "duplicate_of:c/en/0/2"),
            DropRecord::new("c/en/0/9", Stage::Dedup, "duplicate_of:c/en/0/2"),
            DropRecord::new("c/de/0/1", Stage::Prefilter, "too_short"),
        ];
        sort_records(&mut recs);
        assert_eq!(recs[0].stage, Stage::Prefilter);
        assert_eq!(recs[1].docid, "c/en/0/9");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("drops.jsonl");
        write_droplog(&p, &recs).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(
            text.starts_with(r#"{"docid":"c/de/0/1","stage":"prefilter","reason":"too_short"}"#)
        );
        assert_eq!(read_droplog(&p).unwrap(), recs);
    }
}

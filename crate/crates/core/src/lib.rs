//! Corpus preparation toolkit: document model and JSONL format, WET
//! ingestion, content normalization, language identification, quality and
//! harmful-content filtering, per-partition MinHash/LSH deduplication, and
//! removal analytics.

pub mod analytics;
pub mod dedup;
pub mod doc_model;
pub mod droplog;
pub mod error;
pub mod fixtures;
pub mod ingest;
pub mod langid;
pub mod ngram_lm;
pub mod normalize;
pub mod par;
pub mod pipeline;
pub mod quality;

pub use error::{Error, Result};

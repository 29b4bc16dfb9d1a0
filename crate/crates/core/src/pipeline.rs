//! The two pipelines and run analysis.
//!
//! Curated: ingest -> normalize -> language id -> prefilter [-> dedup].
//! Web: WET parse -> normalize -> annotate (quality, harmful perplexity,
//! language id) -> prefilter -> quality + harmful filters -> dedup per
//! (dump, language).
//!
//! Every stage maps documents in input order and every merge sorts by docid,
//! so outputs do not depend on the worker count. Stage timings are the sum
//! of per-task durations (an estimate of CPU time) and are written to
//! `timings.json`, apart from the deterministic outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::analytics::{self, AnalysisReport, DiMode, StageTiming};
use crate::dedup::{dedup_partition, split_partitions, DedupConfig, DupCluster};
use crate::doc_model::{
    cmp_docids, is_valid_date, serialize_document, Annotations, Document, QualityWarning,
};
use crate::droplog::{read_droplog, sort_records, write_droplog, DropRecord, Stage};
use crate::error::{Error, Result};
use crate::ingest::{ingest_text_corpus, parse_dump_label, read_wet_file, sorted_files, DumpRef};
use crate::langid::{apply_language, LangIdModel};
use crate::ngram_lm::{perplexity, KnModel};
use crate::normalize::normalize_content;
use crate::par::{with_workers, Exec};
use crate::quality::{
    annotate_quality_with, default_policy, filter_harmful, filter_quality, prefilter,
    PrefilterConfig, QualityConfig, Verdict, HARMFUL_PPL_THRESHOLD, MIN_CHARS, MIN_LANG_SCORE,
};

pub const COUNTS_FILE: &str = "counts.json";
pub const DROPLOG_FILE: &str = "droplog.jsonl";
pub const TIMINGS_FILE: &str = "timings.json";
pub const CLUSTERS_FILE: &str = "clusters.jsonl";
pub const DEFAULT_WEB_CORPUS: &str = "commoncrawl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineKind {
    Curated,
    Web,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub min_chars: usize,
    pub min_lang_score: f64,
    pub harmful_ppl_threshold: f64,
    pub quality_policy: BTreeSet<QualityWarning>,
    pub whitespace_is_nonletter: bool,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_chars: MIN_CHARS,
            min_lang_score: MIN_LANG_SCORE,
            harmful_ppl_threshold: HARMFUL_PPL_THRESHOLD,
            quality_policy: default_policy(),
            whitespace_is_nonletter: QualityConfig::default().whitespace_is_nonletter,
        }
    }
}

fn yes() -> bool {
    true
}

/// Pipeline configuration, read from JSON. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub pipeline: PipelineKind,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Web: corpus base name (dump label is appended). Curated: when set,
    /// the input root is this single corpus instead of one corpus per
    /// subdirectory.
    #[serde(default)]
    pub corpus: Option<String>,
    /// Curated only: `download_date` given to every ingested document.
    #[serde(default)]
    pub download_date: Option<String>,
    /// Web only: dump labels to process; empty means every dump directory
    /// found under the input root.
    #[serde(default)]
    pub dumps: Vec<String>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub dedup: DedupConfig,
    #[serde(default = "yes")]
    pub harmful_filter: bool,
    #[serde(default)]
    pub curated_dedup: bool,
    #[serde(default)]
    pub lid_model: Option<PathBuf>,
    #[serde(default)]
    pub harmful_lm: Option<PathBuf>,
    /// 0 uses every core; 1 runs sequentially.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub di_mode: DiMode,
    #[serde(default = "yes")]
    pub persist_intermediate: bool,
}

impl PipelineConfig {
    pub fn new(pipeline: PipelineKind) -> Self {
        PipelineConfig {
            pipeline,
            input: None,
            output: None,
            corpus: None,
            download_date: None,
            dumps: Vec::new(),
            thresholds: Thresholds::default(),
            dedup: DedupConfig::default(),
            harmful_filter: true,
            curated_dedup: false,
            lid_model: None,
            harmful_lm: None,
            workers: 0,
            di_mode: DiMode::default(),
            persist_intermediate: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        if !(0.0..=1.0).contains(&t.min_lang_score) {
            return Err(Error::Config(format!(
                "min_lang_score {} outside [0, 1]",
                t.min_lang_score
            )));
        }
        if !(t.harmful_ppl_threshold.is_finite() && t.harmful_ppl_threshold > 0.0) {
            return Err(Error::Config(format!(
                "harmful_ppl_threshold {} must be positive",
                t.harmful_ppl_threshold
            )));
        }
        self.dedup.validate()?;
        if let Some(date) = &self.download_date {
            if !is_valid_date(date) {
                return Err(Error::Config(format!(
                    "download_date {date:?} is not YYYY-MM-DD"
                )));
            }
        }
        if let Some(c) = &self.corpus {
            if c.is_empty() || c.contains('/') {
                return Err(Error::Config(format!(
                    "corpus name {c:?} is empty or contains '/'"
                )));
            }
        }
        for d in &self.dumps {
            parse_dump_label(d)?;
        }
        Ok(())
    }

    fn input_root(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::Config("no input root configured".into()))
    }

    fn output_root(&self) -> Result<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| Error::Config("no output root configured".into()))
    }

    fn prefilter_config(&self) -> PrefilterConfig {
        PrefilterConfig {
            min_chars: self.thresholds.min_chars,
            min_lang_score: self.thresholds.min_lang_score,
        }
    }
}

/// Models needed by a run, loaded before any document is touched.
pub struct Models {
    pub lid: LangIdModel,
    pub harmful: Option<KnModel>,
}

impl Models {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let lid_path = cfg
            .lid_model
            .as_deref()
            .ok_or_else(|| Error::Config("lid_model is required".into()))?;
        if !lid_path.is_file() {
            return Err(Error::Config(format!(
                "lid_model {} not found",
                lid_path.display()
            )));
        }
        let lid = LangIdModel::load(lid_path)?;
        let harmful = if cfg.pipeline == PipelineKind::Web && cfg.harmful_filter {
            let p = cfg.harmful_lm.as_deref().ok_or_else(|| {
                Error::Config("harmful_lm is required while harmful_filter is enabled".into())
            })?;
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "harmful_lm {} not found",
                    p.display()
                )));
            }
            Some(KnModel::load(p)?)
        } else {
            None
        };
        Ok(Models { lid, harmful })
    }
}

/// Per-run document counts, keyed by language.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Counts {
    pub ingested: BTreeMap<String, u64>,
    pub kept: BTreeMap<String, u64>,
    /// stage -> language -> dropped documents.
    pub dropped: BTreeMap<String, BTreeMap<String, u64>>,
    /// (file, message) for inputs that could not be read.
    pub input_errors: Vec<(String, String)>,
}

impl Counts {
    /// Checks ingested = kept + drops for every language.
    pub fn check_conservation(&self) -> Result<()> {
        let langs: BTreeSet<&String> = self
            .ingested
            .keys()
            .chain(self.kept.keys())
            .chain(self.dropped.values().flat_map(|m| m.keys()))
            .collect();
        for l in langs {
            let ingested = self.ingested.get(l).copied().unwrap_or(0);
            let kept = self.kept.get(l).copied().unwrap_or(0);
            let dropped: u64 = self.dropped.values().filter_map(|m| m.get(l)).sum();
            if ingested != kept + dropped {
                return Err(Error::InvalidArgument(format!(
                    "count mismatch for {l:?}: ingested {ingested} != kept {kept} + dropped {dropped}"
                )));
            }
        }
        Ok(())
    }

    fn merge(&mut self, other: &Counts) {
        for (l, n) in &other.ingested {
            *self.ingested.entry(l.clone()).or_default() += n;
        }
        for (l, n) in &other.kept {
            *self.kept.entry(l.clone()).or_default() += n;
        }
        for (s, m) in &other.dropped {
            let slot = self.dropped.entry(s.clone()).or_default();
            for (l, n) in m {
                *slot.entry(l.clone()).or_default() += n;
            }
        }
        self.input_errors.extend(other.input_errors.iter().cloned());
    }
}

/// Outcome of one pipeline unit (one dump, or one curated run).
#[derive(Debug, Clone)]
pub struct UnitSummary {
    pub label: String,
    pub dir: PathBuf,
    pub counts: Counts,
    pub timings: Vec<StageTiming>,
}

#[derive(Default)]
struct Timer(BTreeMap<&'static str, Duration>);

impl Timer {
    fn add(&mut self, stage: &'static str, d: Duration) {
        *self.0.entry(stage).or_default() += d;
    }

    fn into_timings(self, order: &[&'static str]) -> Vec<StageTiming> {
        order
            .iter()
            .filter_map(|s| self.0.get(s).map(|d| StageTiming::new(*s, d.as_secs_f64())))
            .collect()
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn map_timed<T: Send, U: Send>(
    exec: Exec,
    items: Vec<T>,
    f: impl Fn(T) -> U + Sync + Send,
) -> (Vec<U>, Duration) {
    let out = exec.map_owned(items, |x| timed(|| f(x)));
    let total = out.iter().map(|(_, d)| *d).sum();
    (out.into_iter().map(|(u, _)| u).collect(), total)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_jsonl(path: &Path, docs: &[Document]) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    let mut out = Vec::new();
    for d in docs {
        out.extend_from_slice(serialize_document(d)?.as_bytes());
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Document>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(crate::doc_model::parse_document)
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_clusters(path: &Path, clusters: &[DupCluster]) -> Result<()> {
    let mut out = Vec::new();
    for c in clusters {
        serde_json::to_writer(&mut out, c).expect("serializable");
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Writes one `<corpus>.<lang>.jsonl` per partition, sorted by docid.
fn write_partitions(dir: &Path, docs: Vec<Document>) -> Result<()> {
    create_dir(dir)?;
    for ((corpus, lang), part) in split_partitions(docs) {
        write_jsonl(&dir.join(format!("{corpus}.{lang}.jsonl")), &part)?;
    }
    Ok(())
}

fn count_by_language<'a>(docs: impl Iterator<Item = &'a Document>) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for d in docs {
        *out.entry(d.meta.language.clone()).or_default() += 1;
    }
    out
}

fn tally_drops(drops: &[DropRecord]) -> BTreeMap<String, BTreeMap<String, u64>> {
    let mut out: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for d in drops {
        let lang = crate::doc_model::DocId::parse(&d.docid)
            .map(|id| id.language)
            .unwrap_or_default();
        *out.entry(d.stage.as_str().to_string())
            .or_default()
            .entry(lang)
            .or_default() += 1;
    }
    out
}

fn split_verdicts(
    docs: Vec<Document>,
    verdicts: Vec<Option<(Stage, String)>>,
    drops: &mut Vec<DropRecord>,
) -> Vec<Document> {
    let mut kept = Vec::with_capacity(docs.len());
    for (doc, v) in docs.into_iter().zip(verdicts) {
        match v {
            None => kept.push(doc),
            Some((stage, reason)) => drops.push(DropRecord::new(&doc.meta.docid, stage, reason)),
        }
    }
    kept
}

/// Dedups each (corpus, language) partition; partitions run in parallel,
/// each partition sequentially.
fn dedup_all(
    docs: Vec<Document>,
    label_prefix: &str,
    cfg: &DedupConfig,
    exec: Exec,
    drops: &mut Vec<DropRecord>,
    timer: &mut Timer,
) -> Result<(Vec<Document>, Vec<DupCluster>)> {
    let parts: Vec<((String, String), Vec<Document>)> =
        split_partitions(docs).into_iter().collect();
    let (results, t) = map_timed(exec, parts, |((_, lang), part)| {
        dedup_partition(
            part,
            &format!("{label_prefix}{lang}"),
            cfg,
            Exec::Sequential,
        )
    });
    timer.add("deduplication", t);
    let mut kept = Vec::new();
    let mut clusters = Vec::new();
    for r in results {
        let r = r?;
        kept.extend(r.kept);
        clusters.extend(r.clusters);
        drops.extend(r.drops);
    }
    clusters.sort_by(|a, b| cmp_docids(&a.representative, &b.representative));
    Ok((kept, clusters))
}

fn finish_unit(
    label: String,
    dir: &Path,
    ingested: BTreeMap<String, u64>,
    kept: &[Document],
    mut drops: Vec<DropRecord>,
    input_errors: Vec<(String, String)>,
    timings: Vec<StageTiming>,
) -> Result<UnitSummary> {
    sort_records(&mut drops);
    let counts = Counts {
        ingested,
        kept: count_by_language(kept.iter()),
        dropped: tally_drops(&drops),
        input_errors,
    };
    counts.check_conservation()?;
    write_droplog(&dir.join(DROPLOG_FILE), &drops)?;
    write_json(&dir.join(COUNTS_FILE), &counts)?;
    write_json(&dir.join(TIMINGS_FILE), &timings)?;
    Ok(UnitSummary {
        label,
        dir: dir.to_path_buf(),
        counts,
        timings,
    })
}

fn is_wet(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".wet") || name.ends_with(".wet.gz")
}

/// Dump directories under `root` that contain a `raw/` directory.
pub fn discover_dumps(root: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if path.join("raw").is_dir() && parse_dump_label(name).is_ok() {
            out.push(name.to_string());
        }
    }
    out.sort_by_key(|l| {
        parse_dump_label(l)
            .map(|d| (d.year, d.week))
            .unwrap_or_default()
    });
    Ok(out)
}

/// Runs the web pipeline over every configured dump.
///
/// Expects WET files under `<input>/<dump>/raw/` and writes
/// `<output>/<dump>/{conversion,annotated,filtered,deduplicated}/` plus
/// the drop log, counts, timings and clusters of each dump.
pub fn run_web(cfg: &PipelineConfig) -> Result<Vec<UnitSummary>> {
    cfg.validate()?;
    let models = Models::load(cfg)?;
    let input = cfg.input_root()?;
    let output = cfg.output_root()?;
    let dumps = if cfg.dumps.is_empty() {
        discover_dumps(input)?
    } else {
        cfg.dumps.clone()
    };
    if dumps.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no <dump>/raw directories under {}",
            input.display()
        )));
    }
    with_workers(cfg.workers, |exec| {
        dumps
            .iter()
            .map(|label| {
                let dump = parse_dump_label(label)?;
                run_dump(
                    cfg,
                    &models,
                    dump,
                    &input.join(label).join("raw"),
                    &output.join(label),
                    exec,
                )
            })
            .collect()
    })?
}

fn run_dump(
    cfg: &PipelineConfig,
    models: &Models,
    dump: DumpRef,
    raw: &Path,
    out: &Path,
    exec: Exec,
) -> Result<UnitSummary> {
    let base = cfg.corpus.as_deref().unwrap_or(DEFAULT_WEB_CORPUS);
    let mut timer = Timer::default();
    create_dir(out)?;

    let files: Vec<(u64, PathBuf)> = sorted_files(raw, is_wet)?
        .into_iter()
        .enumerate()
        .map(|(i, p)| (i as u64, p))
        .collect();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no WET files in {}",
            raw.display()
        )));
    }
    let (per_file, t) = map_timed(exec, files, |(fileno, path)| {
        let gz = path.extension().is_some_and(|e| e == "gz");
        (path.clone(), read_wet_file(&path, gz, dump, base, fileno))
    });
    timer.add("conversion", t);
    let mut docs = Vec::new();
    let mut input_errors = Vec::new();
    for (path, r) in per_file {
        match r {
            Ok(d) => docs.extend(d),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                input_errors.push((path.display().to_string(), e.to_string()));
            }
        }
    }
    if cfg.persist_intermediate {
        write_jsonl(&out.join("conversion").join("documents.jsonl"), &docs)?;
    }

    let (docs, t) = map_timed(exec, docs, |mut d| {
        d.text = normalize_content(&d.text);
        d
    });
    timer.add("normalization", t);

    let qcfg = QualityConfig {
        whitespace_is_nonletter: cfg.thresholds.whitespace_is_nonletter,
    };
    let (docs, t) = map_timed(exec, docs, |d| {
        let warnings = annotate_quality_with(&d.text, qcfg);
        let harmful_ppl = models
            .harmful
            .as_ref()
            .and_then(|m| perplexity(m, &d.text).ok())
            .map(|p| p.value);
        let decision = models.lid.classify_document(&d.text);
        let mut d = apply_language(d, &decision);
        d.set_annotations(&Annotations {
            warnings,
            harmful_ppl,
            line_languages: None,
        });
        d
    });
    timer.add("annotation", t);
    if cfg.persist_intermediate {
        write_jsonl(&out.join("annotated").join("documents.jsonl"), &docs)?;
    }
    let ingested = count_by_language(docs.iter());
    if models.harmful.is_some() {
        let unscored = docs
            .iter()
            .filter(|d| d.annotations().harmful_ppl.is_none())
            .count();
        if unscored > 0 {
            log::info!("{dump}: {unscored} documents have no LM tokens; harmful filter keeps them");
        }
    }

    let pcfg = cfg.prefilter_config();
    let policy = &cfg.thresholds.quality_policy;
    let threshold = cfg.thresholds.harmful_ppl_threshold;
    let harmful_on = models.harmful.is_some();
    let (verdicts, t) = map_timed(exec, docs.iter().collect::<Vec<_>>(), |d| {
        if let Verdict::Drop(r) = prefilter(d, &pcfg) {
            return Ok(Some((Stage::Prefilter, r)));
        }
        let ann = d.annotations();
        if let Verdict::Drop(r) = filter_quality(&ann.warnings, policy) {
            return Ok(Some((Stage::Quality, r)));
        }
        if harmful_on {
            if let Some(ppl) = ann.harmful_ppl {
                if let Verdict::Drop(r) = filter_harmful(ppl, threshold)? {
                    return Ok(Some((Stage::Harmful, r)));
                }
            }
        }
        Ok(None)
    });
    timer.add("filtering", t);
    let verdicts = verdicts.into_iter().collect::<Result<Vec<_>>>()?;
    let mut drops = Vec::new();
    let kept = split_verdicts(docs, verdicts, &mut drops);
    if cfg.persist_intermediate {
        write_jsonl(&out.join("filtered").join("documents.jsonl"), &kept)?;
    }

    let (kept, clusters) = dedup_all(
        kept,
        &format!("{dump}/"),
        &cfg.dedup,
        exec,
        &mut drops,
        &mut timer,
    )?;
    write_clusters(&out.join(CLUSTERS_FILE), &clusters)?;
    write_partitions(&out.join("deduplicated"), kept.clone())?;

    let timings = timer.into_timings(&[
        "conversion",
        "normalization",
        "annotation",
        "filtering",
        "deduplication",
    ]);
    finish_unit(
        dump.to_string(),
        out,
        ingested,
        &kept,
        drops,
        input_errors,
        timings,
    )
}

/// Corpora of a curated run: (name, directory).
fn curated_corpora(cfg: &PipelineConfig, input: &Path) -> Result<Vec<(String, PathBuf)>> {
    if let Some(name) = &cfg.corpus {
        return Ok(vec![(name.clone(), input.to_path_buf())]);
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(input).map_err(|e| Error::io(input, e))? {
        let path = entry.map_err(|e| Error::io(input, e))?.path();
        if path.is_dir() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                out.push((name.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no corpus directories under {}",
            input.display()
        )));
    }
    Ok(out)
}

/// Runs the curated pipeline. Each subdirectory of the input root is one
/// corpus; outputs are `<output>/<corpus>.<lang>.jsonl`.
pub fn run_curated(cfg: &PipelineConfig) -> Result<UnitSummary> {
    cfg.validate()?;
    let models = Models::load(cfg)?;
    let input = cfg.input_root()?;
    let output = cfg.output_root()?;
    let date = cfg
        .download_date
        .as_deref()
        .ok_or_else(|| Error::Config("download_date is required for curated runs".into()))?;
    let corpora = curated_corpora(cfg, input)?;
    create_dir(output)?;

    with_workers(cfg.workers, |exec| -> Result<UnitSummary> {
        let mut timer = Timer::default();
        let mut docs = Vec::new();
        let mut input_errors = Vec::new();
        for (name, dir) in &corpora {
            let (outcome, t) = timed(|| ingest_text_corpus(dir, name, date, exec));
            timer.add("conversion", t);
            let outcome = outcome?;
            docs.extend(outcome.docs);
            input_errors.extend(
                outcome
                    .errors
                    .into_iter()
                    .map(|(p, m)| (p.display().to_string(), m)),
            );
        }
        let (docs, t) = map_timed(exec, docs, |mut d| {
            d.text = normalize_content(&d.text);
            d
        });
        timer.add("normalization", t);
        let (docs, t) = map_timed(exec, docs, |d| {
            let decision = models.lid.classify_document(&d.text);
            apply_language(d, &decision)
        });
        timer.add("language_detection", t);
        let ingested = count_by_language(docs.iter());

        let pcfg = cfg.prefilter_config();
        let (verdicts, t) = map_timed(exec, docs.iter().collect::<Vec<_>>(), |d| {
            match prefilter(d, &pcfg) {
                Verdict::Keep => None,
                Verdict::Drop(r) => Some((Stage::Prefilter, r)),
            }
        });
        timer.add("filtering", t);
        let mut drops = Vec::new();
        let mut kept = split_verdicts(docs, verdicts, &mut drops);
        if cfg.curated_dedup {
            let (k, clusters) =
                dedup_all(kept, "curated/", &cfg.dedup, exec, &mut drops, &mut timer)?;
            write_clusters(&output.join(CLUSTERS_FILE), &clusters)?;
            kept = k;
        }
        write_partitions(output, kept.clone())?;
        let timings = timer.into_timings(&[
            "conversion",
            "normalization",
            "language_detection",
            "filtering",
            "deduplication",
        ]);
        finish_unit(
            "curated".into(),
            output,
            ingested,
            &kept,
            drops,
            input_errors,
            timings,
        )
    })?
}

/// Directories of a run that hold pipeline results: the run directory
/// itself, or its immediate subdirectories (one per dump).
fn run_units(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let has_any = |d: &Path| d.join(COUNTS_FILE).exists() || d.join(DROPLOG_FILE).exists();
    if has_any(run_dir) {
        return Ok(vec![run_dir.to_path_buf()]);
    }
    let mut units = Vec::new();
    for entry in std::fs::read_dir(run_dir).map_err(|e| Error::io(run_dir, e))? {
        let path = entry.map_err(|e| Error::io(run_dir, e))?.path();
        if path.is_dir() && has_any(&path) {
            units.push(path);
        }
    }
    units.sort();
    Ok(units)
}

/// Aggregates a finished run and writes the report files to `out`.
pub fn run_analyze(run_dir: &Path, out: &Path, mode: DiMode) -> Result<AnalysisReport> {
    let units = run_units(run_dir)?;
    if units.is_empty() {
        return Err(Error::IncompleteRun {
            dir: run_dir.to_path_buf(),
            missing: vec![DROPLOG_FILE.into(), COUNTS_FILE.into()],
        });
    }
    let mut missing = Vec::new();
    for u in &units {
        for f in [DROPLOG_FILE, COUNTS_FILE] {
            if !u.join(f).is_file() {
                let rel = u.strip_prefix(run_dir).unwrap_or(u).join(f);
                missing.push(rel.display().to_string());
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteRun {
            dir: run_dir.to_path_buf(),
            missing,
        });
    }

    let mut counts = Counts::default();
    let mut drops = Vec::new();
    let mut timings: BTreeMap<String, f64> = BTreeMap::new();
    let mut stage_order: Vec<String> = Vec::new();
    for u in &units {
        let path = u.join(COUNTS_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let c: Counts = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        counts.merge(&c);
        drops.extend(read_droplog(&u.join(DROPLOG_FILE))?);
        let tpath = u.join(TIMINGS_FILE);
        if let Ok(text) = std::fs::read_to_string(&tpath) {
            let ts: Vec<StageTiming> = serde_json::from_str(&text)
                .map_err(|e| Error::Schema(format!("{}: {e}", tpath.display())))?;
            for t in ts {
                if !timings.contains_key(&t.stage) {
                    stage_order.push(t.stage.clone());
                }
                *timings.entry(t.stage).or_default() += t.cpu_seconds;
            }
        }
    }
    counts.check_conservation()?;
    let logged = tally_drops(&drops);
    if logged != counts.dropped {
        return Err(Error::InvalidArgument(
            "drop logs disagree with counts.json".into(),
        ));
    }
    let stats = analytics::compute_removal_stats(&drops, &counts.ingested)?;
    let report = analytics::analyze(stats, mode);
    let stage_list: Vec<StageTiming> = stage_order
        .iter()
        .map(|s| StageTiming::new(s.clone(), timings[s]))
        .collect();
    let shares = analytics::stage_share(&stage_list).unwrap_or_default();
    analytics::emit_report(&report, &shares, out)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_rejection() {
        let cfg = PipelineConfig::from_json(r#"{"pipeline": "web"}"#).unwrap();
        assert_eq!(cfg.thresholds.min_chars, 200);
        assert_eq!(cfg.thresholds.min_lang_score, 0.5);
        assert_eq!(cfg.thresholds.harmful_ppl_threshold, 5.0);
        assert_eq!(cfg.thresholds.quality_policy.len(), 5);
        assert_eq!((cfg.dedup.bands, cfg.dedup.rows), (16, 8));
        assert!(cfg.harmful_filter && !cfg.curated_dedup);

        for bad in [
            r#"{"pipeline": "web", "min_char": 10}"#,
            r#"{"pipeline": "web", "thresholds": {"min_chars": 10, "typo": 1}}"#,
            r#"{"pipeline": "web", "dedup": {"bands": 10}}"#,
            r#"{"pipeline": "web", "thresholds": {"min_lang_score": 1.5}}"#,
            r#"{"pipeline": "web", "dumps": ["2023-99"]}"#,
            r#"{"pipeline": "batch"}"#,
            r#"{"pipeline": "curated", "download_date": "2024-13-01"}"#,
        ] {
            assert!(PipelineConfig::from_json(bad).is_err(), "{bad}");
        }
        let policy = PipelineConfig::from_json(
            r#"{"pipeline": "web", "thresholds": {"quality_policy": ["tiny", "short_sentences"]}}"#,
        )
        .unwrap();
        assert_eq!(
            policy.thresholds.quality_policy,
            [QualityWarning::Tiny, QualityWarning::ShortSentences].into()
        );
    }

    #[test]
    fn missing_models_fail_at_startup() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::new(PipelineKind::Web);
        cfg.input = Some(dir.path().join("nowhere"));
        cfg.output = Some(dir.path().join("out"));
        assert!(matches!(run_web(&cfg), Err(Error::Config(_))));
        assert!(!dir.path().join("out").exists());
    }

    #[test]
    fn conservation_check() {
        let mut c = Counts::default();
        c.ingested.insert("en".into(), 5);
        c.kept.insert("en".into(), 3);
        c.dropped
            .entry("quality".into())
            .or_default()
            .insert("en".into(), 2);
        assert!(c.check_conservation().is_ok());
        c.kept.insert("en".into(), 4);
        assert!(c.check_conservation().is_err());
    }

    #[test]
    fn empty_run_dir_names_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        match run_analyze(dir.path(), &dir.path().join("r"), DiMode::Formula) {
            Err(Error::IncompleteRun { missing, .. }) => {
                assert!(missing.contains(&DROPLOG_FILE.to_string()))
            }
            other => panic!("unexpected {other:?}"),
        }
        std::fs::create_dir(dir.path().join("2023-5")).unwrap();
        std::fs::write(dir.path().join("2023-5").join(COUNTS_FILE), "{}").unwrap();
        match run_analyze(dir.path(), &dir.path().join("r"), DiMode::Formula) {
            Err(Error::IncompleteRun { missing, .. }) => {
                assert_eq!(missing, ["2023-5/droplog.jsonl"])
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

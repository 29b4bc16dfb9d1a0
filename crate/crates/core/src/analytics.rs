//! Removal statistics, disparity indices, correlation and compute share.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::doc_model::{DocId, UNDETERMINED};
use crate::droplog::{DropRecord, Stage};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageRemoval {
    pub docs_ingested: u64,
    pub docs_after_filtering: u64,
    pub docs_after_dedup: u64,
    /// Percentage of ingested documents removed by the filters.
    pub r_filter: f64,
    /// Percentage of filtered documents removed by deduplication.
    pub r_dedup: f64,
}

impl LanguageRemoval {
    pub fn from_counts(ingested: u64, after_filtering: u64, after_dedup: u64) -> Result<Self> {
        if after_dedup > after_filtering || after_filtering > ingested {
            return Err(Error::InvalidArgument(format!(
                "counts not monotone: {ingested} >= {after_filtering} >= {after_dedup} fails"
            )));
        }
        let pct = |removed: u64, of: u64| {
            if of == 0 {
                0.0
            } else {
                100.0 * removed as f64 / of as f64
            }
        };
        Ok(LanguageRemoval {
            docs_ingested: ingested,
            docs_after_filtering: after_filtering,
            docs_after_dedup: after_dedup,
            r_filter: pct(ingested - after_filtering, ingested),
            r_dedup: pct(after_filtering - after_dedup, after_filtering),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RemovalStats {
    pub languages: BTreeMap<String, LanguageRemoval>,
    /// Languages left out because nothing was ingested for them.
    pub omitted: Vec<String>,
}

fn drop_language(docid: &str) -> String {
    DocId::parse(docid)
        .map(|d| d.language)
        .unwrap_or_else(|| UNDETERMINED.to_string())
}

/// Per-language counts from drop logs and ingest counts.
///
/// A drop record's language is the language segment of its docid.
pub fn compute_removal_stats(
    drops: &[DropRecord],
    ingested: &BTreeMap<String, u64>,
) -> Result<RemovalStats> {
    let mut filtered: BTreeMap<String, u64> = BTreeMap::new();
    let mut deduped: BTreeMap<String, u64> = BTreeMap::new();
    for d in drops {
        let lang = drop_language(&d.docid);
        let slot = if d.stage == Stage::Dedup {
            &mut deduped
        } else {
            &mut filtered
        };
        *slot.entry(lang).or_default() += 1;
    }
    let mut stats = RemovalStats::default();
    let langs: BTreeSet<&String> = ingested
        .keys()
        .chain(filtered.keys())
        .chain(deduped.keys())
        .collect();
    for lang in langs {
        let n = ingested.get(lang).copied().unwrap_or(0);
        let f = filtered.get(lang).copied().unwrap_or(0);
        let d = deduped.get(lang).copied().unwrap_or(0);
        if n == 0 {
            if f + d > 0 {
                return Err(Error::InvalidArgument(format!(
                    "{} drops logged for {lang:?} but no documents ingested",
                    f + d
                )));
            }
            log::warn!("no documents ingested for {lang:?}; omitted from statistics");
            stats.omitted.push(lang.clone());
            continue;
        }
        let after_f = n.checked_sub(f).ok_or_else(|| {
            Error::InvalidArgument(format!("{f} filter drops exceed {n} ingested for {lang:?}"))
        })?;
        let after_d = after_f.checked_sub(d).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{d} dedup drops exceed {after_f} filtered for {lang:?}"
            ))
        })?;
        stats.languages.insert(
            lang.clone(),
            LanguageRemoval::from_counts(n, after_f, after_d)?,
        );
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiMode {
    /// `R_l = r_l / D_l`: removal percentage over document count.
    #[default]
    Formula,
    /// `R_l = removed / total`.
    Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityEntry {
    pub language: String,
    pub r: f64,
    pub d: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub di: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityReport {
    pub mode: DiMode,
    pub mu_r: f64,
    pub sigma_r: f64,
    /// Sorted by DI descending, ties by language.
    pub entries: Vec<DisparityEntry>,
}

impl DisparityReport {
    pub fn get(&self, language: &str) -> Option<&DisparityEntry> {
        self.entries.iter().find(|e| e.language == language)
    }
}

/// Z-scores of per-language removed-to-data ratios, with population σ.
///
/// `values` maps language to (`r_l` percentage, `D_l` document count).
pub fn disparity_index(
    values: &BTreeMap<String, (f64, f64)>,
    mode: DiMode,
) -> Result<DisparityReport> {
    if values.len() < 2 {
        return Err(Error::Degenerate(format!(
            "disparity needs at least 2 languages, got {}",
            values.len()
        )));
    }
    let mut entries = Vec::with_capacity(values.len());
    for (lang, &(r, d)) in values {
        let big_r = match mode {
            DiMode::Formula => {
                if d <= 0.0 {
                    return Err(Error::Degenerate(format!(
                        "document count of {lang:?} is {d}"
                    )));
                }
                r / d
            }
            DiMode::Ratio => r / 100.0,
        };
        if !big_r.is_finite() {
            return Err(Error::Degenerate(format!("ratio of {lang:?} is {big_r}")));
        }
        entries.push(DisparityEntry {
            language: lang.clone(),
            r,
            d,
            big_r,
            di: 0.0,
        });
    }
    let n = entries.len() as f64;
    let mu = entries.iter().map(|e| e.big_r).sum::<f64>() / n;
    let sigma = (entries.iter().map(|e| (e.big_r - mu).powi(2)).sum::<f64>() / n).sqrt();
    let floor = f64::EPSILON * mu.abs().max(f64::MIN_POSITIVE);
    if sigma.is_nan() || sigma <= floor {
        return Err(Error::Degenerate("all ratios are equal (sigma = 0)".into()));
    }
    for e in &mut entries {
        e.di = (e.big_r - mu) / sigma;
    }
    entries.sort_by(|a, b| {
        b.di.total_cmp(&a.di)
            .then_with(|| a.language.cmp(&b.language))
    });
    Ok(DisparityReport {
        mode,
        mu_r: mu,
        sigma_r: sigma,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub n: usize,
    /// Absent when |r| = 1 (t is unbounded).
    pub t: Option<f64>,
    pub p_two_tailed: f64,
}

fn centered(xs: &[f64]) -> Vec<f64> {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| x - mean).collect()
}

/// Sample Pearson correlation and its two-tailed Student-t p-value.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<CorrelationResult> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 points, got {n}"
        )));
    }
    let (dx, dy) = (centered(xs), centered(ys));
    let sxx: f64 = dx.iter().map(|v| v * v).sum();
    let syy: f64 = dy.iter().map(|v| v * v).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate(
            "correlation undefined for zero variance".into(),
        ));
    }
    let sxy: f64 = dx.iter().zip(&dy).map(|(a, b)| a * b).sum();
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let (t, p) = t_test(r, n - 2);
    Ok(CorrelationResult {
        r,
        n,
        t: t.is_finite().then_some(t),
        p_two_tailed: p,
    })
}

/// t statistic and two-tailed p-value of correlation `r` with `df` degrees
/// of freedom. Uses `P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)`.
pub fn t_test(r: f64, df: usize) -> (f64, f64) {
    let df = df as f64;
    if r.abs() >= 1.0 {
        return (r.signum() * f64::INFINITY, 0.0);
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let p = statrs::function::beta::beta_reg(df / 2.0, 0.5, df / (df + t * t));
    (t, p.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; absent when n = 2.
    pub slope_stderr: Option<f64>,
    pub residuals: Vec<f64>,
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_regression(xs: &[f64], ys: &[f64]) -> Result<Regression> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need two equal-length series of at least 2 points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate(
            "regression undefined for zero x variance".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // Centred form keeps the residual sum at rounding level.
    let residuals: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - my) - slope * (x - mx))
        .collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let slope_stderr = (n > 2.0).then(|| (sse / (n - 2.0) / sxx).sqrt());
    Ok(Regression {
        slope,
        intercept,
        slope_stderr,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub cpu_seconds: f64,
}

impl StageTiming {
    pub fn new(stage: impl Into<String>, cpu_seconds: f64) -> Self {
        StageTiming {
            stage: stage.into(),
            cpu_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageShare {
    pub stage: String,
    pub cpu_seconds: f64,
    /// Unrounded percentage of the total.
    pub percent: f64,
}

impl StageShare {
    /// Percentage rounded to one decimal place.
    pub fn rounded(&self) -> f64 {
        (self.percent * 10.0).round() / 10.0
    }
}

/// Share of total compute per stage, in input order.
pub fn stage_share(timings: &[StageTiming]) -> Result<Vec<StageShare>> {
    let mut seen = BTreeSet::new();
    for t in timings {
        if !seen.insert(t.stage.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "duplicate stage {:?}",
                t.stage
            )));
        }
        if !(t.cpu_seconds >= 0.0 && t.cpu_seconds.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "stage {:?} has invalid time {}",
                t.stage, t.cpu_seconds
            )));
        }
    }
    let total: f64 = timings.iter().map(|t| t.cpu_seconds).sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("total stage time is zero".into()));
    }
    Ok(timings
        .iter()
        .map(|t| StageShare {
            stage: t.stage.clone(),
            cpu_seconds: t.cpu_seconds,
            percent: 100.0 * t.cpu_seconds / total,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCorrelation {
    pub name: String,
    pub x: String,
    pub y: String,
    #[serde(flatten)]
    pub result: CorrelationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRegression {
    pub name: String,
    pub languages: Vec<String>,
    #[serde(flatten)]
    pub fit: Regression,
}

/// Everything that goes into `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub removal: RemovalStats,
    pub filtering_disparity: Option<DisparityReport>,
    pub dedup_disparity: Option<DisparityReport>,
    pub correlations: Vec<NamedCorrelation>,
    pub regressions: Vec<NamedRegression>,
    /// Analyses skipped for lack of data, with the reason.
    pub skipped: BTreeMap<String, String>,
}

fn keep_or_skip<T>(skipped: &mut BTreeMap<String, String>, name: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            skipped.insert(name.to_string(), e.to_string());
            None
        }
    }
}

/// Builds the full analysis. The undetermined language is excluded from
/// disparity and correlation, since it is not a language.
pub fn analyze(stats: RemovalStats, mode: DiMode) -> AnalysisReport {
    let langs: Vec<(&String, &LanguageRemoval)> = stats
        .languages
        .iter()
        .filter(|(l, _)| l.as_str() != UNDETERMINED)
        .collect();
    let mut skipped = BTreeMap::new();

    let fdi_in = langs
        .iter()
        .map(|(l, s)| ((*l).clone(), (s.r_filter, s.docs_ingested as f64)))
        .collect();
    let ddi_in = langs
        .iter()
        .filter(|(_, s)| s.docs_after_filtering > 0)
        .map(|(l, s)| ((*l).clone(), (s.r_dedup, s.docs_after_filtering as f64)))
        .collect();
    let filtering_disparity = keep_or_skip(
        &mut skipped,
        "filtering_disparity",
        disparity_index(&fdi_in, mode),
    );
    let dedup_disparity = keep_or_skip(
        &mut skipped,
        "dedup_disparity",
        disparity_index(&ddi_in, mode),
    );

    let ingested: Vec<f64> = langs.iter().map(|(_, s)| s.docs_ingested as f64).collect();
    let r_filter: Vec<f64> = langs.iter().map(|(_, s)| s.r_filter).collect();
    let with_filtered: Vec<&(&String, &LanguageRemoval)> = langs
        .iter()
        .filter(|(_, s)| s.docs_after_filtering > 0)
        .collect();
    let filtered: Vec<f64> = with_filtered
        .iter()
        .map(|(_, s)| s.docs_after_filtering as f64)
        .collect();
    let r_dedup: Vec<f64> = with_filtered.iter().map(|(_, s)| s.r_dedup).collect();

    let mut correlations = Vec::new();
    for (name, x, y, xs, ys) in [
        (
            "filtering_vs_size",
            "docs_ingested",
            "r_filter",
            &ingested,
            &r_filter,
        ),
        (
            "dedup_vs_size",
            "docs_after_filtering",
            "r_dedup",
            &filtered,
            &r_dedup,
        ),
    ] {
        if let Some(result) = keep_or_skip(&mut skipped, name, pearson(xs, ys)) {
            correlations.push(NamedCorrelation {
                name: name.into(),
                x: x.into(),
                y: y.into(),
                result,
            });
        }
    }
    let mut regressions = Vec::new();
    let log_size: Vec<f64> = ingested.iter().map(|n| n.ln()).collect();
    if let Some(fit) = keep_or_skip(
        &mut skipped,
        "filtering_vs_log_size",
        linear_regression(&log_size, &r_filter),
    ) {
        regressions.push(NamedRegression {
            name: "filtering_vs_log_size".into(),
            languages: langs.iter().map(|(l, _)| (*l).clone()).collect(),
            fit,
        });
    }
    AnalysisReport {
        schema_version: SCHEMA_VERSION,
        removal: stats,
        filtering_disparity,
        dedup_disparity,
        correlations,
        regressions,
        skipped,
    }
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

/// Writes `report.json`, `removal_by_language.csv` and `disparity.csv`, plus
/// `stage_share.csv` when `shares` is non-empty.
///
/// Stage timings are kept out of `report.json` so that the report of a
/// deterministic run is itself byte-for-byte reproducible.
pub fn emit_report(report: &AnalysisReport, shares: &[StageShare], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut json = serde_json::to_vec_pretty(report).expect("report serializes");
    json.push(b'\n');
    write_file(dir, "report.json", &json)?;

    let removal = report
        .removal
        .languages
        .iter()
        .map(|(l, s)| vec![l.clone(), s.r_filter.to_string(), s.r_dedup.to_string()])
        .collect();
    write_file(
        dir,
        "removal_by_language.csv",
        &csv_bytes(&["language", "r_filter", "r_dedup"], removal),
    )?;

    let mut disparity = Vec::new();
    for (index, rep) in [
        ("filtering", &report.filtering_disparity),
        ("dedup", &report.dedup_disparity),
    ] {
        for e in rep.iter().flat_map(|r| &r.entries) {
            disparity.push(vec![
                index.to_string(),
                e.language.clone(),
                e.r.to_string(),
                e.d.to_string(),
                e.big_r.to_string(),
                e.di.to_string(),
            ]);
        }
    }
    write_file(
        dir,
        "disparity.csv",
        &csv_bytes(&["index", "language", "r", "D", "R", "DI"], disparity),
    )?;

    if !shares.is_empty() {
        let rows = shares
            .iter()
            .map(|s| {
                vec![
                    s.stage.clone(),
                    s.cpu_seconds.to_string(),
                    format!("{:.1}", s.rounded()),
                ]
            })
            .collect();
        write_file(
            dir,
            "stage_share.csv",
            &csv_bytes(&["stage", "cpu_seconds", "percent"], rows),
        )?;
    }
    Ok(())
}

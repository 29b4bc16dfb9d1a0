use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use corpusprep::analytics::{AnalysisReport, DiMode};
use corpusprep::dedup::{dedup_partition, split_partitions, DedupConfig};
use corpusprep::doc_model::Document;
use corpusprep::droplog::{sort_records, write_droplog};
use corpusprep::ingest::{ingest_text_corpus, parse_dump_label, read_wet_file, sorted_files};
use corpusprep::langid::{apply_language, train_profiles, LangIdModel};
use corpusprep::ngram_lm::{perplexity, train_on_text, KnModel, DEFAULT_ORDER};
use corpusprep::par::with_workers;
use corpusprep::pipeline::{
    read_jsonl, run_analyze, run_curated, run_web, write_clusters, write_jsonl, PipelineConfig,
    PipelineKind, CLUSTERS_FILE, DEFAULT_WEB_CORPUS, DROPLOG_FILE,
};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] corpusprep::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(corpusprep::Error::Config(_) | corpusprep::Error::DumpLabel { .. }) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "corpusprep",
    version,
    about = "Multilingual pretraining corpus preparation"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Seed for MinHash permutations.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Dump label `YYYY-WW`.
    #[arg(long, global = true)]
    dump: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert WET files (with --dump) or a text corpus into document JSONL.
    Ingest {
        /// Corpus name; web default is "commoncrawl", text default is the input directory name.
        #[arg(long)]
        corpus: Option<String>,
        /// download_date for text corpora.
        #[arg(long)]
        date: Option<String>,
    },
    /// Train a language-id model from a directory of `<lang>.txt` files.
    LidTrain,
    /// Train a Kneser-Ney model from a text file (one sentence per line).
    LmTrain {
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
    },
    /// Assign languages to the documents of a JSONL file.
    LidTag {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Perplexity of each document of a JSONL file, or of a whole text file.
    LmScore {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run the curated pipeline.
    RunCurated {
        #[command(flatten)]
        models: ModelFlags,
    },
    /// Run the web pipeline.
    RunWeb {
        #[command(flatten)]
        models: ModelFlags,
    },
    /// Compute removal statistics and disparity reports for a finished run.
    Analyze {
        #[arg(long, value_enum)]
        di_mode: Option<DiModeArg>,
    },
    /// Deduplicate a JSONL file within each (corpus, language) partition.
    Dedup,
    /// Print a summary of an analysis directory or report.json.
    Report,
}

#[derive(Args, Debug)]
struct ModelFlags {
    #[arg(long)]
    lid_model: Option<PathBuf>,
    #[arg(long)]
    harmful_lm: Option<PathBuf>,
    /// Skip harmful-perplexity filtering.
    #[arg(long)]
    no_harmful_filter: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum DiModeArg {
    Formula,
    Ratio,
}

impl From<DiModeArg> for DiMode {
    fn from(m: DiModeArg) -> Self {
        match m {
            DiModeArg::Formula => DiMode::Formula,
            DiModeArg::Ratio => DiMode::Ratio,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let c = &cli.common;
    match cli.command {
        Command::Ingest { corpus, date } => ingest(c, corpus, date),
        Command::LidTrain => lid_train(c),
        Command::LmTrain { order } => lm_train(c, order),
        Command::LidTag { model } => lid_tag(c, model),
        Command::LmScore { model } => lm_score(c, model),
        Command::RunCurated { models } => {
            let cfg = pipeline_config(c, PipelineKind::Curated, &models)?;
            let unit = run_curated(&cfg)?;
            print_counts(&unit.label, &unit.counts);
            Ok(())
        }
        Command::RunWeb { models } => {
            let mut cfg = pipeline_config(c, PipelineKind::Web, &models)?;
            if let Some(d) = &c.dump {
                cfg.dumps = vec![d.clone()];
                cfg.validate()?;
            }
            for unit in run_web(&cfg)? {
                print_counts(&unit.label, &unit.counts);
            }
            Ok(())
        }
        Command::Analyze { di_mode } => analyze(c, di_mode),
        Command::Dedup => dedup(c),
        Command::Report => report(c),
    }
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::Config(format!("--{flag} is required")))
}

fn load_config(c: &Common) -> CliResult<Option<PipelineConfig>> {
    let Some(path) = &c.config else {
        return Ok(None);
    };
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "config file {} not found",
            path.display()
        )));
    }
    Ok(Some(PipelineConfig::load(path)?))
}

fn pipeline_config(c: &Common, kind: PipelineKind, m: &ModelFlags) -> CliResult<PipelineConfig> {
    let mut cfg = load_config(c)?.unwrap_or_else(|| PipelineConfig::new(kind));
    if cfg.pipeline != kind {
        return Err(CliError::Config(format!(
            "config is for the {:?} pipeline",
            cfg.pipeline
        )));
    }
    if let Some(p) = &c.input {
        cfg.input = Some(p.clone());
    }
    if let Some(p) = &c.output {
        cfg.output = Some(p.clone());
    }
    if let Some(s) = c.seed {
        cfg.dedup.seed = s;
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(p) = &m.lid_model {
        cfg.lid_model = Some(p.clone());
    }
    if let Some(p) = &m.harmful_lm {
        cfg.harmful_lm = Some(p.clone());
    }
    if m.no_harmful_filter {
        cfg.harmful_filter = false;
    }
    Ok(cfg)
}

fn workers(c: &Common, cfg: Option<&PipelineConfig>) -> usize {
    c.workers.or(cfg.map(|c| c.workers)).unwrap_or(0)
}

fn print_counts(label: &str, counts: &corpusprep::pipeline::Counts) {
    let ingested: u64 = counts.ingested.values().sum();
    let kept: u64 = counts.kept.values().sum();
    println!(
        "{label}: ingested {ingested}, kept {kept}, removed {}",
        ingested - kept
    );
    for (stage, langs) in &counts.dropped {
        println!("  {stage}: {}", langs.values().sum::<u64>());
    }
    if !counts.input_errors.is_empty() {
        println!("  input errors: {}", counts.input_errors.len());
    }
}

fn ingest(c: &Common, corpus: Option<String>, date: Option<String>) -> CliResult<()> {
    let input = require(&c.input, "input")?;
    let output = require(&c.output, "output")?;
    let cfg = load_config(c)?;
    if !input.exists() {
        return Err(CliError::Input(format!(
            "input {} not found",
            input.display()
        )));
    }
    let docs = if let Some(label) = &c.dump {
        let dump = parse_dump_label(label)?;
        let base = corpus
            .or_else(|| cfg.as_ref().and_then(|c| c.corpus.clone()))
            .unwrap_or_else(|| DEFAULT_WEB_CORPUS.to_string());
        let files = if input.is_dir() {
            sorted_files(input, |p| {
                let n = p.to_string_lossy();
                n.ends_with(".wet") || n.ends_with(".wet.gz")
            })?
        } else {
            vec![input.to_path_buf()]
        };
        let mut docs = Vec::new();
        for (fileno, f) in files.iter().enumerate() {
            let gz = f.extension().is_some_and(|e| e == "gz");
            docs.extend(read_wet_file(f, gz, dump, &base, fileno as u64)?);
        }
        docs
    } else {
        let corpus = corpus
            .or_else(|| cfg.as_ref().and_then(|c| c.corpus.clone()))
            .or_else(|| input.file_name().map(|n| n.to_string_lossy().into_owned()))
            .ok_or_else(|| CliError::Config("--corpus is required".into()))?;
        let date = date
            .or_else(|| cfg.as_ref().and_then(|c| c.download_date.clone()))
            .ok_or_else(|| CliError::Config("--date is required for text corpora".into()))?;
        if !corpusprep::doc_model::is_valid_date(&date) {
            return Err(CliError::Config(format!("date {date:?} is not YYYY-MM-DD")));
        }
        let outcome = with_workers(workers(c, cfg.as_ref()), |exec| {
            ingest_text_corpus(input, &corpus, &date, exec)
        })??;
        for (path, msg) in &outcome.errors {
            warn!("skipped {}: {msg}", path.display());
        }
        outcome.docs
    };
    write_jsonl(output, &docs)?;
    info!("wrote {} documents to {}", docs.len(), output.display());
    Ok(())
}

fn lid_train(c: &Common) -> CliResult<()> {
    let input = require(&c.input, "input")?;
    let output = require(&c.output, "output")?;
    if !input.is_dir() {
        return Err(CliError::Input(format!(
            "{} is not a directory",
            input.display()
        )));
    }
    let mut corpus = BTreeMap::new();
    for f in sorted_files(input, |p| p.extension().is_some_and(|e| e == "txt"))? {
        let lang = f
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let text = std::fs::read_to_string(&f)
            .map_err(|e| CliError::Input(format!("{}: {e}", f.display())))?;
        corpus.insert(lang, text);
    }
    let model = train_profiles(&corpus)?;
    model.save(output)?;
    info!(
        "trained {} languages: {}",
        model.languages().len(),
        model.languages().join(" ")
    );
    Ok(())
}

fn lm_train(c: &Common, order: usize) -> CliResult<()> {
    let input = require(&c.input, "input")?;
    let output = require(&c.output, "output")?;
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    let model = train_on_text(&text, order)?;
    model.save(output)?;
    info!("order-{order} model, vocabulary {}", model.vocab().len());
    Ok(())
}

fn read_docs(path: &Path) -> CliResult<Vec<Document>> {
    if !path.is_file() {
        return Err(CliError::Input(format!(
            "input {} not found",
            path.display()
        )));
    }
    Ok(read_jsonl(path)?)
}

fn lid_tag(c: &Common, model: Option<PathBuf>) -> CliResult<()> {
    let cfg = load_config(c)?;
    let model = model
        .or_else(|| cfg.as_ref().and_then(|c| c.lid_model.clone()))
        .ok_or_else(|| CliError::Config("--model is required".into()))?;
    if !model.is_file() {
        return Err(CliError::Config(format!(
            "model {} not found",
            model.display()
        )));
    }
    let lid = LangIdModel::load(&model)?;
    let docs = read_docs(require(&c.input, "input")?)?;
    let output = require(&c.output, "output")?;
    let tagged = with_workers(workers(c, cfg.as_ref()), |exec| {
        exec.map_owned(docs, |d| {
            let decision = lid.classify_document(&d.text);
            apply_language(d, &decision)
        })
    })?;
    write_jsonl(output, &tagged)?;
    Ok(())
}

fn lm_score(c: &Common, model: Option<PathBuf>) -> CliResult<()> {
    let cfg = load_config(c)?;
    let model = model
        .or_else(|| cfg.as_ref().and_then(|c| c.harmful_lm.clone()))
        .ok_or_else(|| CliError::Config("--model is required".into()))?;
    if !model.is_file() {
        return Err(CliError::Config(format!(
            "model {} not found",
            model.display()
        )));
    }
    let lm = KnModel::load(&model)?;
    let input = require(&c.input, "input")?;
    let mut lines = Vec::new();
    if input.extension().is_some_and(|e| e == "jsonl") {
        let docs = read_docs(input)?;
        let scores = with_workers(workers(c, cfg.as_ref()), |exec| {
            exec.map(&docs, |d| perplexity(&lm, &d.text).ok())
        })?;
        for (d, s) in docs.iter().zip(scores) {
            let (ppl, n) = s.map_or((None, 0), |s| (Some(s.value), s.token_count));
            let row = serde_json::json!({"docid": d.meta.docid, "perplexity": ppl, "tokens": n});
            lines.push(row.to_string());
        }
    } else {
        let text = std::fs::read_to_string(input)
            .map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
        let s = perplexity(&lm, &text)?;
        lines.push(serde_json::json!({"perplexity": s.value, "tokens": s.token_count}).to_string());
    }
    emit(c.output.as_deref(), &lines.join("\n"))
}

fn emit(output: Option<&Path>, text: &str) -> CliResult<()> {
    let mut text = text.to_string();
    if !text.is_empty() && !text.ends_with('\n') {
        text.push('\n');
    }
    match output {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Input(e.to_string())),
    }
}

fn analyze(c: &Common, di_mode: Option<DiModeArg>) -> CliResult<()> {
    let cfg = load_config(c)?;
    let run_dir = require(&c.input, "input")?;
    let out = require(&c.output, "output")?;
    if !run_dir.is_dir() {
        return Err(CliError::Input(format!(
            "run directory {} not found",
            run_dir.display()
        )));
    }
    let mode = di_mode
        .map(DiMode::from)
        .or(cfg.map(|c| c.di_mode))
        .unwrap_or_default();
    let report = run_analyze(run_dir, out, mode)?;
    info!(
        "analyzed {} languages, report in {}",
        report.removal.languages.len(),
        out.display()
    );
    Ok(())
}

fn dedup(c: &Common) -> CliResult<()> {
    let cfg = load_config(c)?;
    let mut dcfg: DedupConfig = cfg.as_ref().map(|c| c.dedup).unwrap_or_default();
    if let Some(s) = c.seed {
        dcfg.seed = s;
    }
    dcfg.validate()?;
    let docs = read_docs(require(&c.input, "input")?)?;
    let out = require(&c.output, "output")?;
    let parts: Vec<_> = split_partitions(docs).into_iter().collect();
    let results = with_workers(workers(c, cfg.as_ref()), |exec| {
        exec.map_owned(parts, |((corpus, lang), part)| {
            let label = format!("{corpus}/{lang}");
            let name = format!("{corpus}.{lang}.jsonl");
            dedup_partition(part, &label, &dcfg, corpusprep::par::Exec::Sequential)
                .map(|r| (name, r))
        })
    })?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
    let mut drops = Vec::new();
    let mut clusters = Vec::new();
    for r in results {
        let (name, r) = r?;
        write_jsonl(&out.join(name), &r.kept)?;
        drops.extend(r.drops);
        clusters.extend(r.clusters);
    }
    sort_records(&mut drops);
    write_droplog(&out.join(DROPLOG_FILE), &drops)?;
    write_clusters(&out.join(CLUSTERS_FILE), &clusters)?;
    println!(
        "removed {} duplicates in {} clusters",
        drops.len(),
        clusters.len()
    );
    Ok(())
}

fn report(c: &Common) -> CliResult<()> {
    let input = require(&c.input, "input")?;
    let path = if input.is_dir() {
        input.join("report.json")
    } else {
        input.to_path_buf()
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let report: AnalysisReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    emit(c.output.as_deref(), &render_report(&report))
}

fn render_report(r: &AnalysisReport) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<8} {:>10} {:>10} {:>10} {:>9} {:>9}\n",
        "language", "ingested", "filtered", "deduped", "r_filter", "r_dedup"
    ));
    for (lang, l) in &r.removal.languages {
        s.push_str(&format!(
            "{:<8} {:>10} {:>10} {:>10} {:>8.2}% {:>8.2}%\n",
            lang,
            l.docs_ingested,
            l.docs_after_filtering,
            l.docs_after_dedup,
            l.r_filter,
            l.r_dedup
        ));
    }
    for (name, d) in [
        ("filtering", &r.filtering_disparity),
        ("deduplication", &r.dedup_disparity),
    ] {
        if let Some(d) = d {
            s.push_str(&format!(
                "\n{name} disparity (mu {:.4}, sigma {:.4}):\n",
                d.mu_r, d.sigma_r
            ));
            for e in &d.entries {
                s.push_str(&format!("  {:<8} DI {:>+8.3}\n", e.language, e.di));
            }
        }
    }
    for c in &r.correlations {
        s.push_str(&format!(
            "\n{}: r = {:.4}, n = {}, t = {}, p = {:.4}",
            c.name,
            c.result.r,
            c.result.n,
            c.result.t.map_or("unbounded".into(), |t| format!("{t:.4}")),
            c.result.p_two_tailed
        ));
    }
    for g in &r.regressions {
        s.push_str(&format!(
            "\n{}: slope {:.4} (se {}), intercept {:.4}",
            g.name,
            g.fit.slope,
            g.fit
                .slope_stderr
                .map_or("n/a".into(), |s| format!("{s:.4}")),
            g.fit.intercept
        ));
    }
    for (name, why) in &r.skipped {
        s.push_str(&format!("\nskipped {name}: {why}"));
    }
    s
}

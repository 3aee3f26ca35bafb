//! `vulnaug` command line. Exit codes: 0 success, 1 finished with some
//! records skipped or failed, 2 fatal error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::{Config, ProviderKind};
use crate::corpusbuild::{build_corpus, corpus_stats, read_samples, split_corpus, write_corpus, write_samples};
use crate::evalsuite::{
    corpus_rouge, human_eval_aggregate, human_eval_session, pair_by_id, read_log, read_predictions,
    reference_human_eval, reference_rouge_row, render_human_table, render_rouge_table, rouge1, select_items,
    similarity_report, EvalItem, RougeRow, RougeScore, SimilarityReport, DEFAULT_SESSION_SIZE,
};
use crate::harvest::{
    list_cves, scrape_records, FetchStatus, Fetcher, FixtureFetcher, FixtureWriter, HarvestError, LiveFetcher,
    RecordingFetcher, ScrapedRecord, VulnRecord,
};
use crate::jsonl::{read_jsonl, write_json, write_jsonl};
use crate::manifest::{manifest_path, RunManifest};
use crate::semgate::GateMode;
use crate::summarize::{batch_summarize, Engine, RemoteSummarizer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_FATAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "vulnaug", version, about = "Augment CVE descriptions with scraped reference text and evaluate summaries")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for splitting and human-eval sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Serve every request from --fixture-dir (the default).
    #[arg(long, global = true, conflicts_with = "live")]
    pub offline: bool,
    /// Use the network.
    #[arg(long, global = true)]
    pub live: bool,
    /// Archived responses for offline runs.
    #[arg(long, global = true)]
    pub fixture_dir: Option<PathBuf>,
    /// In live mode, archive every response here for later offline replay.
    #[arg(long, global = true)]
    pub record_dir: Option<PathBuf>,
    /// Paragraph gate: use, mpnet or dual.
    #[arg(long, global = true)]
    pub gate: Option<GateMode>,
    /// Embedding provider: hash or remote.
    #[arg(long, global = true)]
    pub provider: Option<ProviderKind>,
    #[arg(long, global = true, value_enum)]
    pub engine: Option<EngineKind>,
    /// Model server root for remote embedding and summarization.
    #[arg(long, global = true)]
    pub backend_url: Option<String>,
    /// Environment variable holding the database API key.
    #[arg(long, global = true, default_value = "NVD_API_KEY")]
    pub api_key_env: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineKind {
    Baseline,
    Remote,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List CVE records published in a date range.
    Collect {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
    },
    /// Fetch reference pages and extract their paragraphs.
    Scrape {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gate paragraphs and write the augmented corpus.
    Build {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Length statistics, entity candidates and frequent trigrams.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        /// JSON report; the text report goes to stdout.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Seeded train/validation/test split.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Summarize a split file (or the test part of a split directory).
    Summarize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// ROUGE-1 and embedding similarity of predictions against targets.
    Eval {
        /// Summaries, or any corpus file (its targets are then the predictions).
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        /// JSON report; the text report goes to stdout.
        #[arg(long)]
        out: PathBuf,
        /// Row label in the ROUGE table.
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        no_similarity: bool,
    },
    /// Interactive grading of predictions.
    HumanEval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        /// Append-only grade log; rerunning resumes it.
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "anonymous")]
        annotator: String,
        #[arg(short = 'n', long, default_value_t = DEFAULT_SESSION_SIZE)]
        samples: usize,
        /// Only print the aggregate of the existing log.
        #[arg(long)]
        summary_only: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Collect { .. } => "collect",
            Command::Scrape { .. } => "scrape",
            Command::Build { .. } => "build",
            Command::Stats { .. } => "stats",
            Command::Split { .. } => "split",
            Command::Summarize { .. } => "summarize",
            Command::Eval { .. } => "eval",
            Command::HumanEval { .. } => "human-eval",
        }
    }
}

/// Parse `args` (including the program name), run the command and return
/// the exit code. Reports go to `output`; errors go to stderr.
pub fn run<R: BufRead, W: Write>(args: impl IntoIterator<Item = OsString>, input: &mut R, output: &mut W) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(output, "{e}");
                return EXIT_OK;
            }
            eprint!("{e}");
            return EXIT_FATAL;
        }
    };
    match execute(&cli, input, output) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FATAL
        }
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    cfg: Config,
    manifest: RunManifest,
}

impl Ctx<'_> {
    /// Write the manifest next to `out` and turn the partial flag into an
    /// exit code.
    fn finish(mut self, out: &Path, partial: bool) -> anyhow::Result<i32> {
        let code = if partial { EXIT_PARTIAL } else { EXIT_OK };
        self.manifest.finish(code, &manifest_path(out))?;
        Ok(code)
    }

    fn fetcher(&self) -> anyhow::Result<Box<dyn Fetcher>> {
        if self.cli.live {
            let live = LiveFetcher::new(self.cfg.harvest.request_timeout());
            return Ok(match &self.cli.record_dir {
                Some(dir) => Box::new(RecordingFetcher::new(
                    live,
                    FixtureWriter::create(dir).with_context(|| format!("creating {}", dir.display()))?,
                )),
                None => Box::new(live),
            });
        }
        let dir = self
            .cli
            .fixture_dir
            .as_ref()
            .ok_or_else(|| anyhow!("offline mode needs --fixture-dir (or pass --live)"))?;
        Ok(Box::new(FixtureFetcher::open(dir)?))
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.pipeline.seed = seed;
    }
    if let Some(mode) = cli.gate {
        cfg.gate.mode = mode;
    }
    if let Some(provider) = cli.provider {
        cfg.embedding.provider = provider;
    }
    if let Some(url) = &cli.backend_url {
        cfg.embedding.backend_url = Some(url.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute<R: BufRead, W: Write>(cli: &Cli, input: &mut R, output: &mut W) -> anyhow::Result<i32> {
    let cfg = load_config(cli)?;
    let manifest = RunManifest::start(cli.command.name(), &cfg);
    let ctx = Ctx { cli, cfg, manifest };
    match &cli.command {
        Command::Collect { out, from, to } => cmd_collect(ctx, out, *from, *to),
        Command::Scrape { input, out } => cmd_scrape(ctx, input, out),
        Command::Build { input, out } => cmd_build(ctx, input, out),
        Command::Stats { corpus, out, top_k } => cmd_stats(ctx, corpus, out, *top_k, output),
        Command::Split { corpus, out_dir } => cmd_split(ctx, corpus, out_dir),
        Command::Summarize { input, out } => cmd_summarize(ctx, input, out),
        Command::Eval { predictions, targets, out, label, no_similarity } => {
            cmd_eval(ctx, predictions, targets, out, label.as_deref(), !no_similarity, output)
        }
        Command::HumanEval { predictions, targets, log, annotator, samples, summary_only } => {
            cmd_human_eval(ctx, predictions, targets, log, annotator, *samples, *summary_only, input, output)
        }
    }
}

fn cmd_collect(mut ctx: Ctx, out: &Path, from: Option<NaiveDate>, to: Option<NaiveDate>) -> anyhow::Result<i32> {
    if let Some(d) = from {
        ctx.cfg.harvest.date_start = d;
    }
    if let Some(d) = to {
        ctx.cfg.harvest.date_end = d;
    }
    ctx.manifest.config = ctx.cfg.clone();
    let api_key = if ctx.cli.live {
        let var = &ctx.cli.api_key_env;
        Some(std::env::var(var).map_err(|_| anyhow!("live collection needs an API key in ${var}"))?)
    } else {
        None
    };
    let fetcher = ctx.fetcher()?;
    ctx.manifest.output(out);
    match list_cves(&ctx.cfg.harvest, fetcher.as_ref(), api_key.as_deref()) {
        Ok(records) => {
            write_jsonl(out, &records)?;
            ctx.manifest.count("records", records.len());
            ctx.finish(out, false)
        }
        Err(HarvestError::Aborted { url, cause, partial, checkpoint }) => {
            log::error!("listing aborted at {url}: {cause}");
            write_jsonl(out, &partial)?;
            let cp = out.with_extension("checkpoint.json");
            write_json(&cp, &checkpoint)?;
            ctx.manifest.output(&cp).count("records", partial.len());
            ctx.manifest.failures = 1;
            ctx.finish(out, true)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_scrape(mut ctx: Ctx, input: &Path, out: &Path) -> anyhow::Result<i32> {
    let records: Vec<VulnRecord> = read_jsonl(input)?;
    let fetcher = ctx.fetcher()?;
    let scraped = scrape_records(&records, &ctx.cfg.harvest, fetcher.as_ref());
    write_jsonl(out, &scraped)?;
    let mut by_status: BTreeMap<String, usize> = BTreeMap::new();
    for doc in scraped.iter().flat_map(|s| &s.docs) {
        let key = serde_json::to_value(doc.fetch_status)?.as_str().unwrap_or("unknown").to_string();
        *by_status.entry(format!("docs_{key}")).or_default() += 1;
    }
    ctx.manifest.input(input).output(out).count("records", records.len());
    ctx.manifest.counts.extend(by_status);
    ctx.manifest.failures = scraped.iter().flat_map(|s| &s.docs).filter(|d| d.fetch_status != FetchStatus::Ok).count();
    // unreachable pages are expected on the open web; they are not a partial failure
    ctx.finish(out, false)
}

fn cmd_build(mut ctx: Ctx, input: &Path, out: &Path) -> anyhow::Result<i32> {
    let scraped: Vec<ScrapedRecord> = read_jsonl(input)?;
    let providers = ctx.cfg.providers();
    let built = build_corpus(&scraped, &ctx.cfg.gate, &providers, &ctx.cfg.build);
    write_samples(out, &built.samples)?;
    ctx.manifest
        .input(input)
        .output(out)
        .count("records_in", built.records_in)
        .count("samples", built.samples.len())
        .count("skipped_docs", built.skipped_docs);
    ctx.manifest.failures = built.skipped_docs;
    ctx.finish(out, built.skipped_docs > 0)
}

fn cmd_stats<W: Write>(mut ctx: Ctx, corpus: &Path, out: &Path, top_k: Option<usize>, output: &mut W) -> anyhow::Result<i32> {
    let samples = read_samples(corpus)?;
    let stats = corpus_stats(&samples, top_k.unwrap_or(ctx.cfg.pipeline.stats_top_k))?;
    write_json(out, &stats)?;
    write!(output, "{}", stats.render_text())?;
    ctx.manifest.input(corpus).output(out).count("samples", samples.len());
    ctx.finish(out, false)
}

fn cmd_split(mut ctx: Ctx, corpus: &Path, out_dir: &Path) -> anyhow::Result<i32> {
    let samples = read_samples(corpus)?;
    let seed = ctx.cfg.pipeline.seed;
    let split = split_corpus(&samples, seed)?;
    write_corpus(&split, out_dir)?;
    ctx.manifest.seed = Some(seed);
    ctx.manifest
        .input(corpus)
        .output(out_dir)
        .count("train", split.train.len())
        .count("validation", split.validation.len())
        .count("test", split.test.len());
    ctx.finish(out_dir, false)
}

fn cmd_summarize(mut ctx: Ctx, input: &Path, out: &Path) -> anyhow::Result<i32> {
    let path = if input.is_dir() { input.join("test.jsonl") } else { input.to_path_buf() };
    let samples = read_samples(&path)?;
    let engine = match ctx.cli.engine.unwrap_or(EngineKind::Baseline) {
        EngineKind::Baseline => Engine::Baseline { k: ctx.cfg.pipeline.lead_k },
        EngineKind::Remote => {
            let url = ctx
                .cfg
                .embedding
                .backend_url
                .as_deref()
                .ok_or_else(|| anyhow!("--engine remote needs --backend-url"))?;
            Engine::Remote(RemoteSummarizer::new(url))
        }
    };
    let outcome = batch_summarize(&samples, &engine, &ctx.cfg.decode, ctx.cfg.pipeline.max_concurrent_requests)?;
    write_jsonl(out, &outcome.results)?;
    ctx.manifest.input(&path).output(out).count("samples", samples.len()).count("summaries", outcome.results.len());
    if !outcome.failures.is_empty() {
        let failures = out.with_extension("failures.jsonl");
        write_jsonl(&failures, &outcome.failures)?;
        ctx.manifest.output(&failures);
    }
    ctx.manifest.failures = outcome.failures.len();
    let partial = !outcome.failures.is_empty();
    ctx.finish(out, partial)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SampleScore {
    pub cve_id: String,
    pub rouge1: RougeScore,
}

/// Machine-readable evaluation report.
#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: usize,
    pub rouge1: RougeScore,
    pub per_sample: Vec<SampleScore>,
    pub similarity: Vec<SimilarityReport>,
}

fn cmd_eval<W: Write>(
    mut ctx: Ctx,
    predictions: &Path,
    targets: &Path,
    out: &Path,
    label: Option<&str>,
    with_similarity: bool,
    output: &mut W,
) -> anyhow::Result<i32> {
    let preds = read_predictions(predictions)?;
    let target_map: BTreeMap<String, String> =
        read_samples(targets)?.into_iter().map(|s| (s.cve_id, s.target_summary)).collect();
    let pairs = pair_by_id(&preds, &target_map)?;
    let aggregate = corpus_rouge(pairs.iter().copied())?;
    let per_sample = preds
        .iter()
        .zip(&pairs)
        .map(|((id, _), (p, t))| SampleScore { cve_id: id.clone(), rouge1: rouge1(p, t) })
        .collect();
    let mut similarity = Vec::new();
    if with_similarity {
        let providers = ctx.cfg.providers();
        for id in providers.ids() {
            let provider = providers.get(id).expect("listed provider");
            similarity.push(similarity_report(&pairs, provider)?);
        }
    }
    let report = EvalReport { pairs: pairs.len(), rouge1: aggregate, per_sample, similarity };
    write_json(out, &report)?;

    let model = label.map(str::to_string).unwrap_or_else(|| {
        predictions.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    let rows = [
        RougeRow {
            model,
            score: aggregate,
            max_input_tokens: ctx.cfg.decode.max_input_tokens,
            num_beams: ctx.cfg.decode.num_beams,
            batch_size: None,
        },
        reference_rouge_row(),
    ];
    writeln!(output, "ROUGE-1 over {} pairs", report.pairs)?;
    write!(output, "{}", render_rouge_table(&rows))?;
    for s in &report.similarity {
        write!(output, "\n{}", s.render_text())?;
    }
    ctx.manifest.input(predictions).input(targets).output(out).count("pairs", report.pairs);
    ctx.finish(out, false)
}

#[allow(clippy::too_many_arguments)]
fn cmd_human_eval<R: BufRead, W: Write>(
    mut ctx: Ctx,
    predictions: &Path,
    targets: &Path,
    log: &Path,
    annotator: &str,
    n: usize,
    summary_only: bool,
    input: &mut R,
    output: &mut W,
) -> anyhow::Result<i32> {
    let seed = ctx.cfg.pipeline.seed;
    ctx.manifest.seed = Some(seed);
    ctx.manifest.input(predictions).input(targets).output(log);
    if !summary_only {
        let preds = read_predictions(predictions)?;
        let by_id: BTreeMap<String, (String, String)> = read_samples(targets)?
            .into_iter()
            .map(|s| (s.cve_id, (s.input_text, s.target_summary)))
            .collect();
        let items: Vec<EvalItem> = preds
            .into_iter()
            .map(|(id, prediction)| {
                let (input, target) =
                    by_id.get(&id).cloned().ok_or_else(|| anyhow!("no target for prediction {id}"))?;
                Ok(EvalItem { sample_id: id, input, target, prediction })
            })
            .collect::<anyhow::Result<_>>()?;
        let chosen = select_items(&items, n, seed);
        writeln!(output, "Grading {} of {} samples (seed {seed}); log {}", chosen.len(), items.len(), log.display())?;
        let session = human_eval_session(&chosen, annotator, log, input, output, chrono::Utc::now)?;
        ctx.manifest
            .count("selected", chosen.len())
            .count("resumed", session.resumed)
            .count("recorded", session.recorded.len());
    }
    let records = read_log(log)?;
    if records.is_empty() {
        if summary_only {
            bail!("{} holds no grades", log.display());
        }
        writeln!(output, "No grades recorded yet.")?;
    } else {
        let mut rows = vec![(annotator_label(&records), human_eval_aggregate(&records)?)];
        rows.extend(reference_human_eval());
        writeln!(output, "\nHuman evaluation over {} record(s)", records.len())?;
        write!(output, "{}", render_human_table(&rows))?;
    }
    ctx.manifest.count("log_records", records.len());
    ctx.finish(log, false)
}

fn annotator_label(records: &[crate::evalsuite::HumanEvalRecord]) -> String {
    let mut ids: Vec<&str> = records.iter().map(|r| r.annotator_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() == 1 {
        ids[0].to_string()
    } else {
        format!("{} annotators", ids.len())
    }
}

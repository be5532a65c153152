//! Command-line interface: argument parsing, subcommands and exit codes.
//!
//! Exit codes: 0 success, 1 other failure, 2 missing input (corpus, QA file
//! or sweep.json), 3 provider misconfiguration, 4 sweep aborted.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::artifacts::{self, ProviderInfo, SweepMeta, REPORT_DIR, SWEEP_FILE};
use crate::chunking::Document;
use crate::config::{Overrides, RunConfig, EFFECTIVE_CONFIG_FILE};
use crate::corpus::load_corpus;
use crate::embedding::{Embedder, EmbedderKind};
use crate::error::Error;
use crate::llm::{build_chat_model, ChatProviderKind};
use crate::qa_dataset::{generate_qa, load_qa, save_qa, unknown_sources, QaGeneration};
use crate::report::emit_all;
use crate::sweep::{aggregate_cells, run_sweep, validate_grid, Providers, SweepConfig, SweepResult, ValidationReport};
use crate::tokenization::count_tokens;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_MISSING_INPUT: i32 = 2;
pub const EXIT_PROVIDER: i32 = 3;
pub const EXIT_ABORTED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "ragsweep", version, about = "Chunk-size x top-k sweeps for retrieval-augmented generation")]
pub struct Cli {
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan the corpus and print sentence and token counts per document.
    Ingest,
    /// Generate question-answer pairs from the corpus with the chat model.
    Genqa,
    /// Run the full grid and write sweep.json, records.jsonl and the report.
    Sweep,
    /// Regenerate the report files from an existing sweep.
    Report,
    /// Dry run: chunk counts and nominal CWU per cell, with overflow flags.
    Validate,
}

/// Comma-separated values, where `a-b` expands to the inclusive range.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<usize>);

pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty range {part:?}"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    if out.is_empty() {
        return Err("no values given".into());
    }
    Ok(Grid(out))
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// QA file (JSON lines); defaults to {workdir}/qa.jsonl.
    #[arg(long, global = true)]
    pub qa: Option<PathBuf>,
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    /// e.g. 128,256,512 or 128-130.
    #[arg(long, global = true, value_parser = parse_grid)]
    pub chunk_sizes: Option<Grid>,
    /// e.g. 1-12 or 1,3,5.
    #[arg(long, global = true, value_parser = parse_grid)]
    pub top_ks: Option<Grid>,
    #[arg(long, global = true)]
    pub context_length: Option<usize>,
    #[arg(long, global = true)]
    pub max_output_tokens: Option<usize>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ChatProviderKind>,
    #[arg(long, global = true, value_enum)]
    pub embedder: Option<EmbedderKind>,
    #[arg(long, global = true)]
    pub epsilon_tie: Option<f64>,
    /// Keep every rendered prompt under {workdir}/prompts/.
    #[arg(long, global = true)]
    pub archive_prompts: bool,
    /// Also write a heatmap averaged over successful trials only.
    #[arg(long, global = true)]
    pub exclude_sentinels: bool,
    /// Pairs per document for genqa.
    #[arg(long, global = true)]
    pub n_per_doc: Option<usize>,
}

impl Flags {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            corpus_dir: self.corpus.clone(),
            qa_path: self.qa.clone(),
            workdir: self.workdir.clone(),
            chunk_sizes: self.chunk_sizes.clone().map(|g| g.0),
            top_ks: self.top_ks.clone().map(|g| g.0),
            context_length: self.context_length,
            max_output_tokens: self.max_output_tokens,
            parallelism: self.parallelism,
            chat_provider: self.provider,
            embedder: self.embedder,
            epsilon_tie: self.epsilon_tie,
            archive_prompts: self.archive_prompts,
            exclude_sentinels: self.exclude_sentinels,
            n_per_doc: self.n_per_doc,
        }
    }
}

/// A failed command and the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn new(code: i32, source: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            source: source.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Corpus(_) => EXIT_MISSING_INPUT,
            Error::Provider(_) => EXIT_PROVIDER,
            Error::SweepAborted(_) => EXIT_ABORTED,
            _ => EXIT_OTHER,
        };
        Self::new(code, e)
    }
}

impl From<crate::error::ProviderError> for CliError {
    fn from(e: crate::error::ProviderError) -> Self {
        Error::from(e).into()
    }
}

type CmdResult<T> = Result<T, CliError>;

fn load_docs(corpus_dir: &Path) -> CmdResult<Vec<Document>> {
    let docs = load_corpus(corpus_dir)?;
    if docs.is_empty() {
        return Err(CliError::new(
            EXIT_MISSING_INPUT,
            anyhow!("no .txt documents under {}", corpus_dir.display()),
        ));
    }
    Ok(docs)
}

/// Outputs must never land inside the corpus, or later scans would pick
/// them up.
fn check_workdir(config: &RunConfig) -> CmdResult<()> {
    let abs = |p: &Path| std::path::absolute(p).map_err(|e| CliError::new(EXIT_OTHER, e));
    if abs(&config.workdir)?.starts_with(abs(&config.corpus_dir)?) {
        return Err(CliError::new(
            EXIT_OTHER,
            anyhow!(
                "workdir {} lies inside the corpus directory {}",
                config.workdir.display(),
                config.corpus_dir.display()
            ),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocStats {
    pub id: String,
    pub sentences: usize,
    pub tokens: usize,
}

pub fn cmd_ingest(corpus_dir: &Path) -> CmdResult<Vec<DocStats>> {
    let docs = load_docs(corpus_dir)?;
    Ok(docs
        .iter()
        .map(|d| DocStats {
            id: d.id.clone(),
            sentences: d.sentences.len(),
            tokens: count_tokens(&d.text),
        })
        .collect())
}

pub fn cmd_genqa(config: &RunConfig) -> CmdResult<QaGeneration> {
    if config.chat_provider != ChatProviderKind::Remote {
        return Err(CliError::new(
            EXIT_PROVIDER,
            anyhow!("genqa needs a remote chat provider (--provider remote with model.endpoint_url set)"),
        ));
    }
    let docs = load_docs(&config.corpus_dir)?;
    check_workdir(config)?;
    let model = build_chat_model(config.chat_provider, &config.model)?;
    let generation = generate_qa(model.as_ref(), &config.model, &docs, config.n_per_doc, config.parallelism)?;
    for (doc, reason) in &generation.failed_docs {
        warn!("no pairs from {doc}: {reason}");
    }
    if !generation.truncated_docs.is_empty() {
        warn!("{} document(s) truncated to fit the context window", generation.truncated_docs.len());
    }
    if generation.pairs.is_empty() {
        return Err(CliError::new(EXIT_OTHER, anyhow!("no question-answer pairs were generated")));
    }
    let path = config.qa_path();
    save_qa(&generation.pairs, &path)?;
    info!("wrote {} pairs to {}", generation.pairs.len(), path.display());
    Ok(generation)
}

type Embedders = (Box<dyn Embedder>, Option<Box<dyn Embedder>>);

fn build_embedders(config: &RunConfig) -> CmdResult<Embedders> {
    let retrieval = config.embedder.build()?;
    let scorer = match &config.scorer {
        Some(s) => Some(s.build()?),
        None => None,
    };
    Ok((retrieval, scorer))
}

pub fn cmd_sweep(config: &RunConfig) -> CmdResult<SweepResult> {
    let docs = load_docs(&config.corpus_dir)?;
    let qa_path = config.qa_path();
    if !qa_path.is_file() {
        return Err(CliError::new(
            EXIT_MISSING_INPUT,
            anyhow!("no QA file at {}; run `ragsweep genqa` or pass --qa", qa_path.display()),
        ));
    }
    let qa = load_qa(&qa_path)?;
    if qa.is_empty() {
        return Err(CliError::new(EXIT_MISSING_INPUT, anyhow!("{} holds no pairs", qa_path.display())));
    }
    for (id, doc) in unknown_sources(&qa, &docs) {
        warn!("pair {id} names unknown source document {doc}");
    }
    check_workdir(config)?;
    let sweep_config: SweepConfig = config.sweep_config();
    sweep_config.validate()?;

    let (retrieval, scorer) = build_embedders(config)?;
    let chat = build_chat_model(config.chat_provider, &config.model)?;
    let providers = Providers {
        retrieval: retrieval.as_ref(),
        scorer: scorer.as_deref().unwrap_or(retrieval.as_ref()),
        chat: chat.as_ref(),
    };

    std::fs::create_dir_all(&config.workdir)
        .map_err(|e| Error::io(format!("creating {}", config.workdir.display()), e))?;
    let effective = config.workdir.join(EFFECTIVE_CONFIG_FILE);
    std::fs::write(&effective, config.to_toml()).map_err(|e| Error::io(format!("writing {}", effective.display()), e))?;

    let started = artifacts::unix_ms_now();
    info!(
        "sweeping {} chunk sizes x {} k values x {} questions",
        sweep_config.chunk_sizes.len(),
        sweep_config.top_ks.len(),
        qa.len()
    );
    let result = run_sweep(&sweep_config, &docs, &qa, providers)?;
    let meta = SweepMeta::new(
        serde_json::to_value(config).map_err(Error::from)?,
        ProviderInfo {
            retrieval: providers.retrieval.describe(),
            scorer: providers.scorer.describe(),
            chat: providers.chat.describe(),
        },
        &result,
        docs.len(),
        started,
    );
    artifacts::write_sweep_outputs(&config.workdir, &result, meta)?;
    cmd_report(&config.workdir, config.exclude_sentinels)?;
    Ok(result)
}

fn heatmap_title(meta: &SweepMeta) -> String {
    let model = meta.config["model"]["name"].as_str().unwrap_or("unknown model");
    format!("Mean answer similarity by chunk size and top-k ({model})")
}

/// Rewrite `{workdir}/report/` from sweep.json, checking it against
/// records.jsonl when present. Returns the report directory.
pub fn cmd_report(workdir: &Path, exclude_sentinels: bool) -> CmdResult<PathBuf> {
    if !workdir.join(SWEEP_FILE).is_file() {
        return Err(CliError::new(
            EXIT_MISSING_INPUT,
            anyhow!("no {SWEEP_FILE} in {}; run `ragsweep sweep` first", workdir.display()),
        ));
    }
    let sweep = artifacts::read_sweep_file(workdir)?;
    if workdir.join(artifacts::RECORDS_FILE).is_file() {
        let records = artifacts::read_records(workdir)?;
        let mut chunk_sizes: Vec<usize> = sweep.cells.iter().map(|c| c.chunk_size).collect();
        let mut top_ks: Vec<usize> = sweep.cells.iter().map(|c| c.top_k).collect();
        chunk_sizes.dedup();
        top_ks.sort_unstable();
        top_ks.dedup();
        let mut check = SweepConfig {
            chunk_sizes,
            top_ks,
            ..Default::default()
        };
        if let Some(r) = records.first() {
            check.profile.context_length = r.context_length;
        }
        let cells = aggregate_cells(&records, &check)?;
        if cells != sweep.cells {
            return Err(CliError::new(
                EXIT_OTHER,
                anyhow!("records.jsonl does not match the cells in {SWEEP_FILE}"),
            ));
        }
    }
    let dir = workdir.join(REPORT_DIR);
    emit_all(&dir, &sweep.cells, &sweep.optimum, &heatmap_title(&sweep.meta), exclude_sentinels)?;
    Ok(dir)
}

pub fn cmd_validate(config: &RunConfig) -> CmdResult<ValidationReport> {
    let docs = load_docs(&config.corpus_dir)?;
    Ok(validate_grid(&config.sweep_config(), &docs)?)
}

fn print_validation(report: &ValidationReport) {
    println!(
        "context_length={} max_output_tokens={} template_overhead={}",
        report.context_length, report.max_output_tokens, report.template_overhead
    );
    println!("nominal CWU (C*k/L) per cell; '!' nominal overflow, '!!' overflow guaranteed");
    for row in &report.rows {
        let cells: Vec<String> = row
            .cells
            .iter()
            .map(|c| {
                let flag = match (c.guaranteed_overflow, c.nominal_overflow) {
                    (true, _) => "!!",
                    (false, true) => "!",
                    _ => "",
                };
                format!("k={}:{:.3}{flag}", c.top_k, c.nominal_cwu)
            })
            .collect();
        println!(
            "C={} chunks={} oversized={}  {}",
            row.chunk_size,
            row.n_chunks,
            row.n_oversized,
            cells.join(" ")
        );
    }
}

fn dispatch(cli: &Cli) -> CmdResult<()> {
    let config = RunConfig::load(cli.flags.config.as_deref(), &cli.flags.overrides())?;
    if !matches!(cli.command, Command::Ingest | Command::Report) {
        println!("# effective configuration\n{}", config.to_toml());
    }
    match cli.command {
        Command::Ingest => {
            let stats = cmd_ingest(&config.corpus_dir)?;
            println!("document\tsentences\ttokens");
            for s in &stats {
                println!("{}\t{}\t{}", s.id, s.sentences, s.tokens);
            }
            println!(
                "{} documents, {} sentences, {} tokens",
                stats.len(),
                stats.iter().map(|s| s.sentences).sum::<usize>(),
                stats.iter().map(|s| s.tokens).sum::<usize>()
            );
        }
        Command::Genqa => {
            let g = cmd_genqa(&config)?;
            println!("{} pairs written to {}", g.pairs.len(), config.qa_path().display());
        }
        Command::Sweep => {
            let result = cmd_sweep(&config)?;
            println!("{}", result.optimum.rationale);
            println!("results in {}", config.workdir.display());
        }
        Command::Report => {
            let dir = cmd_report(&config.workdir, config.exclude_sentinels)?;
            println!("report written to {}", dir.display());
        }
        Command::Validate => print_validation(&cmd_validate(&config)?),
    }
    Ok(())
}

/// Run a parsed command line and return the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

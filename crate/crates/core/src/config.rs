//! Run configuration: TOML file, command-line overrides and defaults.
//!
//! Precedence is flags, then file values, then defaults. Relative paths in a
//! config file are taken relative to the file's directory. API keys are never
//! read from the file; only the names of the environment variables holding
//! them are.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbedderKind, EmbeddingProviderConfig};
use crate::error::{Error, Result};
use crate::llm::{ChatProviderKind, ModelProfile, PromptTemplate};
use crate::sweep::{SweepConfig, DEFAULT_CHUNK_SIZES, DEFAULT_EPSILON_TIE, DEFAULT_MAX_TOP_K};

pub const DEFAULT_N_PER_DOC: usize = 5;
pub const QA_FILE: &str = "qa.jsonl";
pub const EFFECTIVE_CONFIG_FILE: &str = "config.effective.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_dir: PathBuf,
    /// Defaults to `{workdir}/qa.jsonl`.
    pub qa_path: Option<PathBuf>,
    pub workdir: PathBuf,
    pub chunk_sizes: Vec<usize>,
    pub top_ks: Vec<usize>,
    pub epsilon_tie: f64,
    pub parallelism: usize,
    pub seed: u64,
    pub archive_prompts: bool,
    pub exclude_sentinels: bool,
    /// Question-answer pairs requested per document by `genqa`.
    pub n_per_doc: usize,
    pub chat_provider: ChatProviderKind,
    pub model: ModelProfile,
    pub template: PromptTemplate,
    /// Retrieval embedder.
    pub embedder: EmbeddingProviderConfig,
    /// Answer-scoring embedder; the retrieval embedder when absent.
    pub scorer: Option<EmbeddingProviderConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus_dir: PathBuf::from("corpus"),
            qa_path: None,
            workdir: PathBuf::from("work"),
            chunk_sizes: DEFAULT_CHUNK_SIZES.to_vec(),
            top_ks: (1..=DEFAULT_MAX_TOP_K).collect(),
            epsilon_tie: DEFAULT_EPSILON_TIE,
            parallelism: 1,
            seed: 0,
            archive_prompts: false,
            exclude_sentinels: false,
            n_per_doc: DEFAULT_N_PER_DOC,
            chat_provider: ChatProviderKind::Mock,
            model: ModelProfile::default(),
            template: PromptTemplate::default(),
            embedder: EmbeddingProviderConfig::default(),
            scorer: None,
        }
    }
}

/// Values given on the command line; `None` leaves the file or default value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub corpus_dir: Option<PathBuf>,
    pub qa_path: Option<PathBuf>,
    pub workdir: Option<PathBuf>,
    pub chunk_sizes: Option<Vec<usize>>,
    pub top_ks: Option<Vec<usize>>,
    pub context_length: Option<usize>,
    pub max_output_tokens: Option<usize>,
    pub parallelism: Option<usize>,
    pub chat_provider: Option<ChatProviderKind>,
    pub embedder: Option<EmbedderKind>,
    pub epsilon_tie: Option<f64>,
    pub archive_prompts: bool,
    pub exclude_sentinels: bool,
    pub n_per_doc: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("invalid config: {e}")))
    }

    /// Parse a config file and resolve its relative paths against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidParameter(reason) => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                reason,
            },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.corpus_dir);
        resolve(&mut config.workdir);
        if let Some(p) = config.qa_path.as_mut() {
            resolve(p);
        }
        Ok(config)
    }

    /// Defaults, overlaid by `file` when given, overlaid by `overrides`.
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut config = match file {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        config.apply(overrides);
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
            if let Some(v) = value {
                *slot = v.clone();
            }
        }
        set(&mut self.corpus_dir, &o.corpus_dir);
        if o.qa_path.is_some() {
            self.qa_path.clone_from(&o.qa_path);
        }
        set(&mut self.workdir, &o.workdir);
        set(&mut self.chunk_sizes, &o.chunk_sizes);
        set(&mut self.top_ks, &o.top_ks);
        set(&mut self.model.context_length, &o.context_length);
        set(&mut self.model.max_output_tokens, &o.max_output_tokens);
        set(&mut self.parallelism, &o.parallelism);
        set(&mut self.chat_provider, &o.chat_provider);
        set(&mut self.embedder.kind, &o.embedder);
        set(&mut self.epsilon_tie, &o.epsilon_tie);
        set(&mut self.n_per_doc, &o.n_per_doc);
        self.archive_prompts |= o.archive_prompts;
        self.exclude_sentinels |= o.exclude_sentinels;
    }

    pub fn qa_path(&self) -> PathBuf {
        self.qa_path.clone().unwrap_or_else(|| self.workdir.join(QA_FILE))
    }

    pub fn scorer(&self) -> &EmbeddingProviderConfig {
        self.scorer.as_ref().unwrap_or(&self.embedder)
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            chunk_sizes: self.chunk_sizes.clone(),
            top_ks: self.top_ks.clone(),
            profile: self.model.clone(),
            template: self.template.clone(),
            epsilon_tie: self.epsilon_tie,
            parallelism: self.parallelism,
            seed: self.seed,
            archive_prompts: self.archive_prompts,
            workdir: Some(self.workdir.clone()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("RunConfig always serializes")
    }
}

//! Exhaustive chunk-size x top-k grid sweep.
//!
//! For every chunk size the corpus is chunked, embedded and indexed once.
//! Every (chunk size, k, question) trial then retrieves, assembles a prompt,
//! generates and is scored into exactly one [`EvalRecord`]. Records are sorted
//! by (chunk size, k, qa id) before aggregation, so results do not depend on
//! thread scheduling.

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chunking::{chunk_corpus, Document};
use crate::embedding::{Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::evaluator::{cwu, evaluate_trial, score_vectors, EvalRecord, Trial};
use crate::llm::{assemble_prompt, generate, ChatModel, ModelProfile, PromptTemplate, Status, CHUNK_SEPARATOR};
use crate::qa_dataset::QaPair;
use crate::tokenization::count_tokens;
use crate::vector_index::{IndexEntry, VectorIndex};

pub const DEFAULT_CHUNK_SIZES: [usize; 5] = [128, 256, 512, 1024, 2048];
pub const DEFAULT_MAX_TOP_K: usize = 12;
pub const DEFAULT_EPSILON_TIE: f64 = 0.001;

/// Texts per embedding call when indexing chunks.
const EMBED_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub chunk_sizes: Vec<usize>,
    pub top_ks: Vec<usize>,
    pub profile: ModelProfile,
    pub template: PromptTemplate,
    pub epsilon_tie: f64,
    pub parallelism: usize,
    /// Reserved for sampling; the exhaustive sweep draws no random numbers.
    pub seed: u64,
    /// Keep every rendered prompt in [`SweepResult::prompts`].
    pub archive_prompts: bool,
    /// When set, each index is persisted to `{workdir}/index/{chunk_size}.idx`.
    pub workdir: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            chunk_sizes: DEFAULT_CHUNK_SIZES.to_vec(),
            top_ks: (1..=DEFAULT_MAX_TOP_K).collect(),
            profile: ModelProfile::default(),
            template: PromptTemplate::default(),
            epsilon_tie: DEFAULT_EPSILON_TIE,
            parallelism: 1,
            seed: 0,
            archive_prompts: false,
            workdir: None,
        }
    }
}

fn strictly_increasing(values: &[usize]) -> bool {
    values.windows(2).all(|w| w[0] < w[1])
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [("chunk_sizes", &self.chunk_sizes), ("top_ks", &self.top_ks)] {
            if grid.is_empty() || grid[0] == 0 || !strictly_increasing(grid) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be non-empty, positive and strictly increasing, got {grid:?}"
                )));
            }
        }
        if !(self.epsilon_tie >= 0.0 && self.epsilon_tie.is_finite()) {
            return Err(Error::InvalidParameter("epsilon_tie must be a finite value >= 0".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::InvalidParameter("parallelism must be >= 1".into()));
        }
        self.profile.validate()
    }
}

/// The providers a sweep talks to. Retrieval and scoring embedders may be the
/// same object.
#[derive(Clone, Copy)]
pub struct Providers<'a> {
    pub retrieval: &'a dyn Embedder,
    pub scorer: &'a dyn Embedder,
    pub chat: &'a dyn ChatModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub chunk_size: usize,
    pub top_k: usize,
    /// Mean similarity over all records, sentinels included.
    pub mean_similarity: f64,
    /// Mean similarity over ok records only; `None` when every trial failed.
    pub mean_similarity_ok: Option<f64>,
    /// Mean `U / L` over ok records, or over all recorded (pre-overflow)
    /// values when the cell has no ok record.
    pub mean_cwu_actual: f64,
    /// `chunk_size * top_k / L`.
    pub nominal_cwu: f64,
    pub n_ok: usize,
    pub n_overflow: usize,
    pub n_api_error: usize,
    /// Mean number of chunks actually retrieved (below `top_k` for small corpora).
    pub mean_retrieved: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub chunk_size: usize,
    pub top_k: usize,
    pub mean_similarity: f64,
    pub mean_cwu_actual: f64,
}

impl From<&SweepCell> for CellScore {
    fn from(c: &SweepCell) -> Self {
        Self {
            chunk_size: c.chunk_size,
            top_k: c.top_k,
            mean_similarity: c.mean_similarity,
            mean_cwu_actual: c.mean_cwu_actual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumReport {
    pub best: CellScore,
    /// Cells within `epsilon_tie` of the maximum, by (-mean, k, chunk size).
    pub co_optimal: Vec<CellScore>,
    pub epsilon_tie: f64,
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopKSummary {
    pub top_k: usize,
    pub best_mean_similarity: f64,
    pub best_chunk_size: usize,
    pub mean_cwu_actual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub chunk_size: usize,
    pub n_chunks: usize,
    pub n_oversized: usize,
    pub mean_chunk_tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub indexes: Vec<IndexStats>,
    /// One per grid point, ordered by chunk size then k.
    pub cells: Vec<SweepCell>,
    pub optimum: OptimumReport,
    /// Sorted by (chunk size, k, qa id).
    #[serde(skip)]
    pub records: Vec<EvalRecord>,
    /// Rendered prompts aligned with `records`, when archiving was requested.
    #[serde(skip)]
    pub prompts: Option<Vec<String>>,
}

struct TrialOutput {
    record: EvalRecord,
    prompt: Option<String>,
}

fn embed_all(embedder: &dyn Embedder, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
    let batches: Vec<Vec<EmbeddingVector>> = texts
        .par_chunks(EMBED_BATCH)
        .map(|batch| {
            let out = embedder.embed_batch(batch)?;
            if out.len() != batch.len() {
                return Err(Error::SweepAborted(format!(
                    "{} returned {} vectors for {} texts",
                    embedder.describe(),
                    out.len(),
                    batch.len()
                )));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(batches.into_iter().flatten().collect())
}

/// Run the full grid. Generation and scoring failures become api_error
/// records; the sweep aborts only when indexing fails or when every attempted
/// generation failed.
pub fn run_sweep(
    config: &SweepConfig,
    docs: &[Document],
    qa_pairs: &[QaPair],
    providers: Providers<'_>,
) -> Result<SweepResult> {
    config.validate()?;
    if docs.is_empty() {
        return Err(Error::InvalidParameter("corpus is empty".into()));
    }
    if qa_pairs.is_empty() {
        return Err(Error::InvalidParameter("no question-answer pairs".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = qa_pairs.iter().find(|q| !seen.insert(q.id.as_str())) {
        return Err(Error::InvalidParameter(format!("duplicate qa id {:?}", dup.id)));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    pool.install(|| sweep_in_pool(config, docs, qa_pairs, providers))
}

fn sweep_in_pool(
    config: &SweepConfig,
    docs: &[Document],
    qa_pairs: &[QaPair],
    providers: Providers<'_>,
) -> Result<SweepResult> {
    let abort = |what: &str, e: Error| Error::SweepAborted(format!("{what}: {e}"));
    let questions: Vec<&str> = qa_pairs.iter().map(|q| q.question.as_str()).collect();
    let references: Vec<&str> = qa_pairs.iter().map(|q| q.answer.as_str()).collect();
    let question_vecs = embed_all(providers.retrieval, &questions).map_err(|e| abort("embedding questions", e))?;
    let reference_vecs = embed_all(providers.scorer, &references).map_err(|e| abort("embedding reference answers", e))?;
    let max_k = *config.top_ks.last().expect("validated non-empty");

    let mut outputs: Vec<TrialOutput> = Vec::new();
    let mut indexes = Vec::with_capacity(config.chunk_sizes.len());
    for &chunk_size in &config.chunk_sizes {
        let chunks = chunk_corpus(docs, chunk_size)?;
        let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        let vectors = if texts.is_empty() {
            Vec::new()
        } else {
            embed_all(providers.retrieval, &texts).map_err(|e| abort("embedding chunks", e))?
        };
        let entries = chunks
            .iter()
            .zip(vectors)
            .map(|(c, vector)| IndexEntry {
                chunk_ref: crate::vector_index::ChunkRef {
                    doc_id: c.doc_id.clone(),
                    chunk_index: c.chunk_index,
                },
                vector,
                token_count: c.token_count,
            })
            .collect();
        let index = VectorIndex::build(entries)?;
        if let Some(dir) = &config.workdir {
            index.persist(&dir.join("index").join(format!("{chunk_size}.idx")))?;
        }
        indexes.push(IndexStats {
            chunk_size,
            n_chunks: chunks.len(),
            n_oversized: chunks.iter().filter(|c| c.oversized).count(),
            mean_chunk_tokens: if chunks.is_empty() {
                0.0
            } else {
                chunks.iter().map(|c| c.token_count as f64).sum::<f64>() / chunks.len() as f64
            },
        });

        let per_question: Vec<Vec<TrialOutput>> = qa_pairs
            .par_iter()
            .enumerate()
            .map(|(qi, qa)| -> Result<Vec<TrialOutput>> {
                // Top-k for smaller k is a prefix of the max-k ranking.
                let ranked = index.query_top_k(&question_vecs[qi], max_k)?;
                Ok(config
                    .top_ks
                    .iter()
                    .map(|&k| {
                        let hits = &ranked.hits[..k.min(ranked.hits.len())];
                        let refs: Vec<_> = hits.iter().map(|h| h.chunk_ref.clone()).collect();
                        let context: Vec<&str> = hits.iter().map(|h| chunks[h.position].text.as_str()).collect();
                        let prompt = assemble_prompt(&qa.question, &context, &config.template);
                        let outcome = generate(providers.chat, &config.profile, &prompt);
                        let trial = Trial {
                            qa_id: &qa.id,
                            chunk_size,
                            top_k: k,
                            retrieved: &refs,
                            prompt: &prompt,
                            profile: &config.profile,
                        };
                        let record = evaluate_trial(trial, &outcome, |answer| {
                            let v = providers.scorer.embed_one(answer)?;
                            score_vectors(&v, &reference_vecs[qi])
                        });
                        TrialOutput {
                            record,
                            prompt: config.archive_prompts.then_some(prompt.rendered),
                        }
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        outputs.extend(per_question.into_iter().flatten());
    }

    outputs.sort_by(|a, b| {
        let (ra, rb) = (&a.record, &b.record);
        (ra.chunk_size, ra.top_k, &ra.qa_id).cmp(&(rb.chunk_size, rb.top_k, &rb.qa_id))
    });

    let attempted: Vec<&EvalRecord> = outputs
        .iter()
        .map(|o| &o.record)
        .filter(|r| r.status != Status::Overflow)
        .collect();
    if !attempted.is_empty() && attempted.iter().all(|r| r.status == Status::ApiError) {
        let first = attempted[0].error.clone().unwrap_or_default();
        return Err(Error::SweepAborted(format!(
            "all {} generation attempts failed ({}); first error: {first}",
            attempted.len(),
            providers.chat.describe()
        )));
    }

    let (records, prompts): (Vec<_>, Vec<_>) = outputs.into_iter().map(|o| (o.record, o.prompt)).unzip();
    let prompts = config
        .archive_prompts
        .then(|| prompts.into_iter().map(Option::unwrap_or_default).collect());
    let cells = aggregate_cells(&records, config)?;
    let optimum = select_optimum(&cells, config.epsilon_tie)?;
    Ok(SweepResult {
        config: config.clone(),
        indexes,
        cells,
        optimum,
        records,
        prompts,
    })
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Aggregate records into one cell per grid point, in grid order.
///
/// Means are arithmetic and taken in (qa id) order within a cell.
pub fn aggregate_cells(records: &[EvalRecord], config: &SweepConfig) -> Result<Vec<SweepCell>> {
    let mut groups: BTreeMap<(usize, usize), Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.chunk_size, r.top_k)).or_default().push(r);
    }
    for group in groups.values_mut() {
        group.sort_by(|a, b| a.qa_id.cmp(&b.qa_id));
    }
    let mut cells = Vec::with_capacity(config.chunk_sizes.len() * config.top_ks.len());
    for &c in &config.chunk_sizes {
        for &k in &config.top_ks {
            let group = groups.get(&(c, k)).map(Vec::as_slice).unwrap_or_default();
            if group.is_empty() {
                return Err(Error::InvalidParameter(format!("no records for cell ({c}, {k})")));
            }
            let count = |s: Status| group.iter().filter(|r| r.status == s).count();
            let ok = || group.iter().filter(|r| r.status == Status::Ok);
            cells.push(SweepCell {
                chunk_size: c,
                top_k: k,
                mean_similarity: mean(group.iter().map(|r| r.similarity)).expect("non-empty"),
                mean_similarity_ok: mean(ok().map(|r| r.similarity)),
                mean_cwu_actual: mean(ok().map(|r| r.cwu))
                    .unwrap_or_else(|| mean(group.iter().map(|r| r.cwu)).expect("non-empty")),
                nominal_cwu: (c * k) as f64 / config.profile.context_length as f64,
                n_ok: count(Status::Ok),
                n_overflow: count(Status::Overflow),
                n_api_error: count(Status::ApiError),
                mean_retrieved: mean(group.iter().map(|r| r.retrieved.len() as f64)).expect("non-empty"),
            });
        }
    }
    Ok(cells)
}

/// Pick the best cell. Cells within `epsilon_tie` of the maximum mean are
/// co-optimal; among them the smallest k wins, then the smallest chunk size,
/// since fewer and smaller chunks mean less retrieval and generation latency.
pub fn select_optimum(cells: &[SweepCell], epsilon_tie: f64) -> Result<OptimumReport> {
    let max = cells
        .iter()
        .map(|c| c.mean_similarity)
        .max_by(f64::total_cmp)
        .ok_or_else(|| Error::InvalidParameter("no cells to select from".into()))?;
    let mut co_optimal: Vec<CellScore> = cells
        .iter()
        .filter(|c| c.mean_similarity >= max - epsilon_tie)
        .map(CellScore::from)
        .collect();
    co_optimal.sort_by(|a, b| {
        b.mean_similarity
            .total_cmp(&a.mean_similarity)
            .then(a.top_k.cmp(&b.top_k))
            .then(a.chunk_size.cmp(&b.chunk_size))
    });
    let best = *co_optimal
        .iter()
        .min_by_key(|c| (c.top_k, c.chunk_size))
        .expect("the maximum is always co-optimal");
    let rationale = format!(
        "maximum mean similarity {max:.4}; {} cell(s) within epsilon {epsilon_tie}; \
         chose chunk_size={} top_k={} (mean {:.4}) as the co-optimal cell with the fewest \
         chunks, then the smallest chunk size, to limit retrieval and response time",
        co_optimal.len(),
        best.chunk_size,
        best.top_k,
        best.mean_similarity
    );
    Ok(OptimumReport {
        best,
        co_optimal,
        epsilon_tie,
        rationale,
    })
}

/// Best cell over chunk sizes for each k, ascending in k. Ties go to the
/// smaller chunk size.
pub fn aggregate_by_topk(cells: &[SweepCell]) -> Vec<TopKSummary> {
    let mut best: BTreeMap<usize, &SweepCell> = BTreeMap::new();
    for cell in cells {
        best.entry(cell.top_k)
            .and_modify(|b| {
                let better = cell.mean_similarity > b.mean_similarity
                    || (cell.mean_similarity == b.mean_similarity && cell.chunk_size < b.chunk_size);
                if better {
                    *b = cell;
                }
            })
            .or_insert(cell);
    }
    best.into_values()
        .map(|c| TopKSummary {
            top_k: c.top_k,
            best_mean_similarity: c.mean_similarity,
            best_chunk_size: c.chunk_size,
            mean_cwu_actual: c.mean_cwu_actual,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCell {
    pub top_k: usize,
    pub nominal_cwu: f64,
    /// `chunk_size * k + template overhead`.
    pub nominal_prompt_tokens: usize,
    /// Nominal prompt plus reserved output exceeds the context length.
    pub nominal_overflow: bool,
    /// Even the k smallest chunks, with an empty question, cannot fit.
    pub guaranteed_overflow: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub chunk_size: usize,
    pub n_chunks: usize,
    pub n_oversized: usize,
    pub cells: Vec<ValidationCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub context_length: usize,
    pub max_output_tokens: usize,
    pub template_overhead: usize,
    pub rows: Vec<ValidationRow>,
}

/// Dry run: chunk the corpus and predict which cells must overflow, without
/// calling any provider.
pub fn validate_grid(config: &SweepConfig, docs: &[Document]) -> Result<ValidationReport> {
    config.validate()?;
    let profile = &config.profile;
    let overhead = config.template.overhead_tokens();
    let separator = count_tokens(CHUNK_SEPARATOR);
    let mut rows = Vec::with_capacity(config.chunk_sizes.len());
    for &c in &config.chunk_sizes {
        let chunks = chunk_corpus(docs, c)?;
        let mut sizes: Vec<usize> = chunks.iter().map(|ch| ch.token_count).collect();
        sizes.sort_unstable();
        let cells = config
            .top_ks
            .iter()
            .map(|&k| {
                let nominal_prompt_tokens = c * k + overhead;
                let n = k.min(sizes.len());
                let smallest: usize = sizes[..n].iter().sum::<usize>() + overhead + separator * n.saturating_sub(1);
                ValidationCell {
                    top_k: k,
                    nominal_cwu: cwu(c * k, profile.context_length).expect("validated context length"),
                    nominal_prompt_tokens,
                    nominal_overflow: profile.overflows(nominal_prompt_tokens),
                    guaranteed_overflow: profile.overflows(smallest),
                }
            })
            .collect();
        rows.push(ValidationRow {
            chunk_size: c,
            n_chunks: chunks.len(),
            n_oversized: chunks.iter().filter(|ch| ch.oversized).count(),
            cells,
        });
    }
    Ok(ValidationReport {
        context_length: profile.context_length,
        max_output_tokens: profile.max_output_tokens,
        template_overhead: overhead,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(c: usize, k: usize, s: f64) -> SweepCell {
        SweepCell {
            chunk_size: c,
            top_k: k,
            mean_similarity: s,
            mean_similarity_ok: Some(s),
            mean_cwu_actual: 0.1,
            nominal_cwu: 0.0,
            n_ok: 1,
            n_overflow: 0,
            n_api_error: 0,
            mean_retrieved: k as f64,
        }
    }

    #[test]
    fn config_validation() {
        assert!(SweepConfig::default().validate().is_ok());
        let bad = |f: fn(&mut SweepConfig)| {
            let mut c = SweepConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.chunk_sizes = vec![]));
        assert!(bad(|c| c.chunk_sizes = vec![256, 128]));
        assert!(bad(|c| c.top_ks = vec![1, 1]));
        assert!(bad(|c| c.top_ks = vec![0, 1]));
        assert!(bad(|c| c.parallelism = 0));
        assert!(bad(|c| c.epsilon_tie = -1.0));
        assert!(bad(|c| c.profile.context_length = 0));
    }

    #[test]
    fn single_cell_optimum() {
        let cells = [cell(128, 1, 0.3)];
        let opt = select_optimum(&cells, 0.001).unwrap();
        assert_eq!((opt.best.chunk_size, opt.best.top_k), (128, 1));
        assert_eq!(opt.co_optimal.len(), 1);
        assert!(select_optimum(&[], 0.001).is_err());
    }

    #[test]
    fn tie_prefers_small_k_then_small_c() {
        let cells = [cell(128, 5, 0.80), cell(256, 3, 0.8005), cell(128, 3, 0.7995), cell(512, 1, 0.7)];
        let opt = select_optimum(&cells, 0.001).unwrap();
        let co: Vec<_> = opt.co_optimal.iter().map(|c| (c.chunk_size, c.top_k)).collect();
        assert_eq!(co, [(256, 3), (128, 5), (128, 3)]);
        assert_eq!((opt.best.chunk_size, opt.best.top_k), (128, 3));
    }

    #[test]
    fn topk_summary_picks_column_max() {
        let cells = [cell(128, 1, 0.5), cell(128, 2, 0.9), cell(256, 1, 0.6), cell(256, 2, 0.9)];
        let s = aggregate_by_topk(&cells);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].top_k, s[0].best_chunk_size, s[0].best_mean_similarity), (1, 256, 0.6));
        assert_eq!((s[1].top_k, s[1].best_chunk_size), (2, 128));
    }

    #[test]
    fn validation_flags_nominal_overflow() {
        let config = SweepConfig {
            profile: ModelProfile {
                context_length: 8192,
                max_output_tokens: 256,
                ..Default::default()
            },
            ..Default::default()
        };
        let docs = [Document::new("d", "Short doc. Two sentences.")];
        let report = validate_grid(&config, &docs).unwrap();
        let overhead = report.template_overhead;
        for row in &report.rows {
            for cell in &row.cells {
                let expect = row.chunk_size * cell.top_k + overhead + 256 > 8192;
                assert_eq!(cell.nominal_overflow, expect, "({}, {})", row.chunk_size, cell.top_k);
                assert!(!cell.guaranteed_overflow);
            }
        }
        assert!(report.rows[4].cells[11].nominal_overflow);
        assert!(!report.rows[0].cells[0].nominal_overflow);
    }
}

//! Workdir layout and the sweep result files.
//!
//! ```text
//! {workdir}/sweep.json        meta, cells, optimum, per-k summary
//! {workdir}/records.jsonl     one EvalRecord per line, sorted by (C, k, qa id)
//! {workdir}/prompts/c{C}/k{k}/{qa id}.txt   rendered prompts (optional)
//! {workdir}/index/{C}.idx     persisted indexes
//! {workdir}/report/           report files
//! ```

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::EvalRecord;
use crate::sweep::{aggregate_by_topk, IndexStats, OptimumReport, SweepCell, SweepResult, TopKSummary};
use crate::tokenization::{RuleTokenizer, Tokenizer, TokenizerSpec};

pub const SWEEP_FILE: &str = "sweep.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const PROMPTS_DIR: &str = "prompts";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderInfo {
    pub retrieval: String,
    pub scorer: String,
    pub chat: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    /// Effective configuration the sweep ran with.
    pub config: serde_json::Value,
    pub tokenizer: TokenizerSpec,
    pub providers: ProviderInfo,
    pub n_documents: usize,
    pub n_questions: usize,
    pub indexes: Vec<IndexStats>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFile {
    pub meta: SweepMeta,
    pub cells: Vec<SweepCell>,
    pub optimum: OptimumReport,
    pub topk: Vec<TopKSummary>,
}

pub fn unix_ms_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl SweepMeta {
    pub fn new(
        config: serde_json::Value,
        providers: ProviderInfo,
        result: &SweepResult,
        n_documents: usize,
        started_unix_ms: u64,
    ) -> Self {
        Self {
            config,
            tokenizer: RuleTokenizer.spec(),
            providers,
            n_documents,
            n_questions: result.records.len() / result.cells.len().max(1),
            indexes: result.indexes.clone(),
            started_unix_ms,
            finished_unix_ms: unix_ms_now(),
        }
    }
}

/// Percent-encode everything outside `[A-Za-z0-9._-]` so ids map to unique
/// file names.
fn encode_file_name(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for b in id.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub fn prompt_archive_path(workdir: &Path, chunk_size: usize, top_k: usize, qa_id: &str) -> PathBuf {
    workdir
        .join(PROMPTS_DIR)
        .join(format!("c{chunk_size}"))
        .join(format!("k{top_k}"))
        .join(format!("{}.txt", encode_file_name(qa_id)))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

pub fn write_records(records: &[EvalRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("writing records", e))?;
    }
    w.flush().map_err(|e| Error::io("writing records", e))
}

/// Write sweep.json, records.jsonl and, when the result carries them, the
/// archived prompts.
pub fn write_sweep_outputs(workdir: &Path, result: &SweepResult, meta: SweepMeta) -> Result<()> {
    create_dir(workdir)?;
    let file = SweepFile {
        meta,
        cells: result.cells.clone(),
        optimum: result.optimum.clone(),
        topk: aggregate_by_topk(&result.cells),
    };
    let sweep_path = workdir.join(SWEEP_FILE);
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(&sweep_path, json + "\n").map_err(|e| Error::io(format!("writing {}", sweep_path.display()), e))?;
    write_records(&result.records, &workdir.join(RECORDS_FILE))?;

    if let Some(prompts) = &result.prompts {
        for (record, prompt) in result.records.iter().zip(prompts) {
            let path = prompt_archive_path(workdir, record.chunk_size, record.top_k, &record.qa_id);
            create_dir(path.parent().expect("archive paths have parents"))?;
            std::fs::write(&path, prompt).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        }
    }
    Ok(())
}

pub fn read_sweep_file(workdir: &Path) -> Result<SweepFile> {
    let path = workdir.join(SWEEP_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path,
        line: e.line(),
        reason: e.to_string(),
    })
}

pub fn read_records(workdir: &Path) -> Result<Vec<EvalRecord>> {
    let path = workdir.join(RECORDS_FILE);
    let file = std::fs::File::open(&path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.clone(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

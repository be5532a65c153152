//! Chunk-size x top-k sweeps for retrieval-augmented generation, with
//! context window utilization (CWU) accounting.
//!
//! The pipeline chunks a plain-text corpus at several token budgets, indexes
//! each chunking with exact cosine search, answers reference questions with a
//! chat model over the top-k chunks, scores answers by embedding similarity,
//! and reports the best (chunk size, k) cell together with the fraction of the
//! model's context window the prompts used.

pub mod artifacts;
pub mod chunking;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod error;
mod http;
pub mod evaluator;
pub mod llm;
pub mod qa_dataset;
pub mod report;
pub mod sweep;
pub mod tokenization;
pub mod vector_index;

pub use error::{Error, ProviderError, Result};
pub use http::RetryPolicy;

/// Environment variable holding the API key unless configured otherwise.
pub const DEFAULT_API_KEY_ENV: &str = "CWU_API_KEY";

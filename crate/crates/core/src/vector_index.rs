//! Exact top-k cosine retrieval over chunk embeddings.
//!
//! Index file layout (all integers little-endian):
//!
//! ```text
//! magic      7 bytes  "CWUIDX1"
//! dim        u32
//! count      u64
//! tokenizer  u32 len + UTF-8 name, u32 len + UTF-8 version
//! entries    count x { u32 len + UTF-8 doc_id, u64 chunk_index,
//!                      u64 token_count, u8 normalized, dim x f32 }
//! checksum   u64 FNV-1a over every preceding byte
//! ```

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_unchecked, fnv1a_64, EmbeddingVector};
use crate::error::{Error, Result};
use crate::tokenization::{RuleTokenizer, Tokenizer, TokenizerSpec};

pub const INDEX_MAGIC: &[u8; 7] = b"CWUIDX1";
const MAGIC_FAMILY: &[u8; 6] = b"CWUIDX";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChunkRef {
    pub doc_id: String,
    pub chunk_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub chunk_ref: ChunkRef,
    pub vector: EmbeddingVector,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    /// Insertion position of the entry in the index.
    pub position: usize,
    pub chunk_ref: ChunkRef,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub hits: Vec<Hit>,
}

/// Immutable exact-search index. Ties in score are broken by insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
    tokenizer: TokenizerSpec,
}

impl VectorIndex {
    pub fn build(entries: Vec<IndexEntry>) -> Result<Self> {
        Self::build_with_tokenizer(entries, RuleTokenizer.spec())
    }

    pub fn build_with_tokenizer(entries: Vec<IndexEntry>, tokenizer: TokenizerSpec) -> Result<Self> {
        let dim = entries.first().map_or(0, |e| e.vector.dim());
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.vector.dim() != dim {
                return Err(Error::IndexBuild(format!(
                    "entry {:?} has dim {}, expected {dim}",
                    e.chunk_ref,
                    e.vector.dim()
                )));
            }
            if !seen.insert(&e.chunk_ref) {
                return Err(Error::IndexBuild(format!("duplicate chunk ref {:?}", e.chunk_ref)));
            }
        }
        Ok(Self {
            dim,
            entries,
            tokenizer,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Vector dimension; 0 for an empty index.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn tokenizer(&self) -> &TokenizerSpec {
        &self.tokenizer
    }

    /// The `min(k, len)` entries most similar to `query`, best first.
    pub fn query_top_k(&self, query: &EmbeddingVector, k: usize) -> Result<RetrievalResult> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if self.entries.is_empty() {
            return Ok(RetrievalResult::default());
        }
        if query.dim() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "query dim {} does not match index dim {}",
                query.dim(),
                self.dim
            )));
        }
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(pos, e)| (cosine_unchecked(query.values(), e.vector.values()), pos))
            .collect();
        let by_rank =
            |a: &(f64, usize), b: &(f64, usize)| -> Ordering { b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)) };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by_rank);
        let hits = scored
            .into_iter()
            .map(|(score, position)| Hit {
                position,
                chunk_ref: self.entries[position].chunk_ref.clone(),
                score,
            })
            .collect();
        Ok(RetrievalResult { hits })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(64 + self.entries.len() * (32 + 4 * self.dim));
        buf.extend_from_slice(INDEX_MAGIC);
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        put_str(&mut buf, &self.tokenizer.name);
        put_str(&mut buf, &self.tokenizer.version);
        for e in &self.entries {
            put_str(&mut buf, &e.chunk_ref.doc_id);
            buf.extend_from_slice(&(e.chunk_ref.chunk_index as u64).to_le_bytes());
            buf.extend_from_slice(&(e.token_count as u64).to_le_bytes());
            buf.push(u8::from(e.vector.is_normalized()));
            for v in e.vector.values() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let checksum = fnv1a_64(&buf);
        buf.extend_from_slice(&checksum.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < INDEX_MAGIC.len() + 8 {
            return Err("file too short".into());
        }
        if &bytes[..INDEX_MAGIC.len()] != INDEX_MAGIC {
            return Err(if bytes.starts_with(MAGIC_FAMILY) {
                format!(
                    "unsupported index version {:?}",
                    String::from_utf8_lossy(&bytes[..INDEX_MAGIC.len()])
                )
            } else {
                "not an index file".into()
            });
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(trailer.try_into().expect("8 bytes"));
        if fnv1a_64(body) != stored {
            return Err("checksum mismatch".into());
        }

        let mut r = Reader {
            buf: body,
            pos: INDEX_MAGIC.len(),
        };
        let dim = r.u32()? as usize;
        let count = r.u64()? as usize;
        let tokenizer = TokenizerSpec {
            name: r.string()?,
            version: r.string()?,
        };
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let doc_id = r.string()?;
            let chunk_index = r.u64()? as usize;
            let token_count = r.u64()? as usize;
            let normalized = r.take(1)?[0] != 0;
            let raw = r.take(dim * 4)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            entries.push(IndexEntry {
                chunk_ref: ChunkRef {
                    doc_id,
                    chunk_index,
                },
                vector: EmbeddingVector::from_parts(values, normalized),
                token_count,
            });
        }
        if r.pos != body.len() {
            return Err("trailing bytes after entries".into());
        }
        let index = Self::build_with_tokenizer(entries, tokenizer).map_err(|e| e.to_string())?;
        if count > 0 && index.dim != dim {
            return Err("header dim disagrees with entries".into());
        }
        Ok(Self { dim, ..index })
    }

    pub fn persist(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
        std::fs::write(path, self.to_bytes())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::IndexLoad {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_bytes(&bytes).map_err(|reason| Error::IndexLoad {
            path: path.to_path_buf(),
            reason,
        })
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or("unexpected end of file")?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| e.to_string())
    }
}

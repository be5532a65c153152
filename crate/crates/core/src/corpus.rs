//! Plain-text corpus loading.

use std::path::Path;

use walkdir::WalkDir;

use crate::chunking::Document;
use crate::error::{Error, Result};

/// Load every `.txt` file under `root`, sorted by relative path.
///
/// Document ids are paths relative to `root` joined with '/'.
pub fn load_corpus(root: &Path) -> Result<Vec<Document>> {
    if !root.is_dir() {
        return Err(Error::Corpus(format!(
            "corpus directory {} does not exist",
            root.display()
        )));
    }
    let mut docs = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Corpus(e.to_string()))?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().is_none_or(|ext| ext != "txt") {
            continue;
        }
        let rel = path.strip_prefix(root).expect("walkdir yields children of root");
        let id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        docs.push(Document::new(id, text));
    }
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(docs)
}

//! Chunked, embedded document indexes with cosine retrieval.
//!
//! An index is immutable once written: `{dir}/{id}.json` holds parameters and
//! chunk texts, `{dir}/{id}.vec` the vectors as little-endian `f32`, row-major.
//! The id is a hash of the parameters and the corpus, so re-ingesting the same
//! documents yields the same index.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::llm::{chat, embed, ChatMessage, ChatProvider, Embedder};

pub const CHUNK_CHARS: usize = 1000;
pub const OVERLAP_CHARS: usize = 200;
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    /// Byte offset of the chunk in its document.
    pub offset: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagIndex {
    pub id: String,
    pub chunk_chars: usize,
    pub overlap_chars: usize,
    pub dimension: usize,
    pub chunks: Vec<Chunk>,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub rank: usize,
    pub chunk: usize,
    pub doc_id: String,
    pub offset: usize,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagAnswer {
    pub answer: String,
    pub citations: Vec<Hit>,
}

/// Windows of `size` characters advancing by `size - overlap`, as
/// `(byte offset, text)`. The last window ends at the end of the text.
pub fn chunk_text(text: &str, size: usize, overlap: usize) -> Vec<(usize, String)> {
    assert!(size > overlap, "chunk size must exceed overlap");
    let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
    let n = bounds.len() - 1;
    let step = size - overlap;
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + size).min(n);
        out.push((bounds[start], text[bounds[start]..bounds[end]].to_owned()));
        if end == n {
            break;
        }
        start += step;
    }
    out
}

fn corpus_id(docs: &[Document], size: usize, overlap: usize) -> String {
    let mut h: u64 = crate::llm::fnv1a_hash(format!("{size}/{overlap}").as_bytes());
    for d in docs {
        for part in [d.id.as_bytes(), b"\x00", d.text.as_bytes(), b"\x01"] {
            h ^= crate::llm::fnv1a_hash(part);
            h = h.wrapping_mul(0x100_0000_01b3).rotate_left(17);
        }
    }
    format!("idx-{h:016x}")
}

/// Index persistence directory.
#[derive(Debug, Clone)]
pub struct RagStore {
    dir: PathBuf,
}

impl RagStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, AgentError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| AgentError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn paths(&self, id: &str) -> Result<(PathBuf, PathBuf), AgentError> {
        if !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') || id.is_empty() {
            return Err(AgentError::UnknownIndex(id.to_owned()));
        }
        Ok((self.dir.join(format!("{id}.json")), self.dir.join(format!("{id}.vec"))))
    }

    /// Chunks, embeds and stores `docs`; returns the index id.
    pub fn ingest(&self, docs: &[Document], embedder: &dyn Embedder) -> Result<String, AgentError> {
        if docs.is_empty() {
            return Err(AgentError::Precondition("no documents to ingest".into()));
        }
        if let Some(d) = docs.iter().find(|d| d.text.trim().is_empty()) {
            return Err(AgentError::Precondition(format!("document `{}` is empty", d.id)));
        }
        let mut chunks = Vec::new();
        for d in docs {
            for (offset, text) in chunk_text(&d.text, CHUNK_CHARS, OVERLAP_CHARS) {
                if !text.trim().is_empty() {
                    chunks.push(Chunk {
                        doc_id: d.id.clone(),
                        offset,
                        text,
                    });
                }
            }
        }
        let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        let vectors = embed(embedder, &texts)?;
        let id = corpus_id(docs, CHUNK_CHARS, OVERLAP_CHARS);
        let index = RagIndex {
            id: id.clone(),
            chunk_chars: CHUNK_CHARS,
            overlap_chars: OVERLAP_CHARS,
            dimension: vectors.first().map_or(0, Vec::len),
            chunks,
            vectors,
        };
        self.write(&index)?;
        tracing::info!(index = %id, chunks = index.chunks.len(), "rag index stored");
        Ok(id)
    }

    fn write(&self, index: &RagIndex) -> Result<(), AgentError> {
        let (meta, vec) = self.paths(&index.id)?;
        let io = |p: &Path, e: std::io::Error| AgentError::Io(format!("{}: {e}", p.display()));
        let mut bytes = Vec::with_capacity(index.vectors.len() * index.dimension * 4);
        for v in &index.vectors {
            for &x in v {
                bytes.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        std::fs::write(&vec, bytes).map_err(|e| io(&vec, e))?;
        let json = serde_json::to_vec_pretty(index).map_err(|e| AgentError::Io(e.to_string()))?;
        std::fs::write(&meta, json).map_err(|e| io(&meta, e))
    }

    pub fn load(&self, id: &str) -> Result<RagIndex, AgentError> {
        let (meta, vec) = self.paths(id)?;
        let text = std::fs::read_to_string(&meta).map_err(|_| AgentError::UnknownIndex(id.to_owned()))?;
        let mut index: RagIndex =
            serde_json::from_str(&text).map_err(|e| AgentError::Io(format!("{}: {e}", meta.display())))?;
        let bytes = std::fs::read(&vec).map_err(|_| AgentError::UnknownIndex(id.to_owned()))?;
        let dim = index.dimension;
        if dim == 0 || bytes.len() != index.chunks.len() * dim * 4 {
            return Err(AgentError::Io(format!("{}: vector block does not match chunk count", vec.display())));
        }
        index.vectors = bytes
            .chunks_exact(dim * 4)
            .map(|row| {
                let v: Vec<f64> = row
                    .chunks_exact(4)
                    .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
                    .collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        Ok(index)
    }

    pub fn delete(&self, id: &str) -> Result<(), AgentError> {
        let (meta, vec) = self.paths(id)?;
        if !meta.exists() {
            return Err(AgentError::UnknownIndex(id.to_owned()));
        }
        let _ = std::fs::remove_file(vec);
        std::fs::remove_file(&meta).map_err(|e| AgentError::Io(format!("{}: {e}", meta.display())))
    }

    /// Top `k` chunks by cosine similarity; ties keep corpus order.
    pub fn query(&self, id: &str, question: &str, k: usize, embedder: &dyn Embedder) -> Result<Vec<Hit>, AgentError> {
        if question.trim().is_empty() {
            return Err(AgentError::Precondition("question is empty".into()));
        }
        let index = self.load(id)?;
        let q = embed(embedder, &[question.to_owned()])?.remove(0);
        if q.len() != index.dimension {
            return Err(AgentError::Precondition(format!(
                "query embedding has dimension {} but index `{id}` has {}",
                q.len(),
                index.dimension
            )));
        }
        let mut scored: Vec<(usize, f64)> = index
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.iter().zip(&q).map(|(a, b)| a * b).sum()))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(rank, (i, score))| {
                let c = &index.chunks[i];
                Hit {
                    rank: rank + 1,
                    chunk: i,
                    doc_id: c.doc_id.clone(),
                    offset: c.offset,
                    score,
                    text: c.text.clone(),
                }
            })
            .collect())
    }
}

/// Retrieves the top `k` chunks and asks `provider` to answer from them.
pub fn rag_query(
    store: &RagStore,
    embedder: &dyn Embedder,
    provider: &dyn ChatProvider,
    system_prompt: &str,
    index_id: &str,
    question: &str,
    k: usize,
) -> Result<RagAnswer, AgentError> {
    let hits = store.query(index_id, question, k, embedder)?;
    let mut context = String::new();
    for h in &hits {
        context.push_str(&format!("[{}] ({}@{})\n{}\n\n", h.rank, h.doc_id, h.offset, h.text.trim()));
    }
    let messages = [
        ChatMessage::system(system_prompt),
        ChatMessage::user(format!("Context passages:\n\n{context}Question: {}", question.trim())),
    ];
    let turn = chat(provider, &messages, &[])?;
    Ok(RagAnswer {
        answer: turn.text.unwrap_or_default(),
        citations: hits,
    })
}

//! Dense retrieval: chunking, exact inner-product search, and context
//! formatting.

mod chunk;
mod context;
mod index;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use chunk::{chunk_corpus, Article, ChunkConfig};
pub use context::{count_tokens, format_context, ContextBlock};
pub use index::{
    normalize, EmbeddingIndex, EmbeddingSet, SearchHit, EMBEDDING_MAGIC, FORMAT_VERSION,
    INDEX_MAGIC, NORM_TOLERANCE,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassageRecord {
    pub id: u64,
    pub title: String,
    pub body: String,
}

/// Passages addressable by id.
#[derive(Debug, Clone, Default)]
pub struct PassageStore {
    passages: Vec<PassageRecord>,
    by_id: HashMap<u64, usize>,
}

impl PassageStore {
    pub fn new(passages: Vec<PassageRecord>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(passages.len());
        for (i, p) in passages.iter().enumerate() {
            if by_id.insert(p.id, i).is_some() {
                return Err(Error::DataIntegrity(format!("duplicate passage id {}", p.id)));
            }
        }
        Ok(Self { passages, by_id })
    }

    pub fn get(&self, id: u64) -> Result<&PassageRecord> {
        self.by_id
            .get(&id)
            .map(|&i| &self.passages[i])
            .ok_or_else(|| Error::DataIntegrity(format!("no passage with id {id}")))
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PassageRecord> {
        self.passages.iter()
    }
}

/// Anything that can turn a query embedding into a context block.
pub trait Retriever: Send + Sync {
    fn retrieve(&self, query_embedding: &[f64], top_k: usize, budget: usize)
        -> Result<ContextBlock>;
}

/// Exact dense retrieval over an [`EmbeddingIndex`] backed by passage text.
#[derive(Debug, Clone)]
pub struct DenseRetriever {
    index: EmbeddingIndex,
    passages: PassageStore,
}

impl DenseRetriever {
    /// Every indexed id must resolve to a passage.
    pub fn new(index: EmbeddingIndex, passages: PassageStore) -> Result<Self> {
        for id in index.ids() {
            passages.get(*id)?;
        }
        Ok(Self { index, passages })
    }

    pub fn index(&self) -> &EmbeddingIndex {
        &self.index
    }

    pub fn passages(&self) -> &PassageStore {
        &self.passages
    }
}

impl Retriever for DenseRetriever {
    fn retrieve(
        &self,
        query_embedding: &[f64],
        top_k: usize,
        budget: usize,
    ) -> Result<ContextBlock> {
        let query = normalize(query_embedding)?;
        let hits = self.index.search(&query, top_k)?;
        format_context(&hits, &self.passages, budget)
    }
}

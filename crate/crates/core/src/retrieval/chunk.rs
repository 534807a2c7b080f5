//! Character-window chunking of articles into passages.

use serde::{Deserialize, Serialize};

use super::PassageRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkConfig {
    pub size: usize,
    pub overlap: usize,
    pub min: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            size: 1000,
            overlap: 100,
            min: 200,
        }
    }
}

impl ChunkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size <= self.overlap {
            return Err(Error::InvalidConfig(format!(
                "chunk size {} must exceed overlap {}",
                self.size, self.overlap
            )));
        }
        if self.min > self.size {
            return Err(Error::InvalidConfig(format!(
                "minimum chunk length {} exceeds chunk size {}",
                self.min, self.size
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.size - self.overlap
    }

    /// Character ranges `[start, end)` of the windows for a text of `len`
    /// characters.
    pub fn windows(&self, len: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        while start < len {
            let end = (start + self.size).min(len);
            if end - start < self.min {
                break;
            }
            out.push((start, end));
            if end == len {
                break;
            }
            start += self.stride();
        }
        out
    }
}

/// An article before chunking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Article {
    pub title: String,
    pub text: String,
}

/// Split articles into overlapping passages. Ids are assigned sequentially
/// starting at `first_id`.
pub fn chunk_corpus(
    articles: &[Article],
    config: &ChunkConfig,
    first_id: u64,
) -> Result<Vec<PassageRecord>> {
    config.validate()?;
    let mut out = Vec::new();
    let mut next = first_id;
    for article in articles {
        let chars: Vec<char> = article.text.chars().collect();
        for (start, end) in config.windows(chars.len()) {
            out.push(PassageRecord {
                id: next,
                title: article.title.clone(),
                body: chars[start..end].iter().collect(),
            });
            next += 1;
        }
    }
    Ok(out)
}

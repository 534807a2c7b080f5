//! Exact (flat) inner-product index over unit-normalized vectors.
//!
//! On-disk layout, all integers little-endian:
//!
//! ```text
//! offset  size      field
//! 0       8         magic  ("TARGIDX\0" for an index, "TARGEMB\0" for raw embeddings)
//! 8       4         version (u32, currently 1)
//! 12      4         dim     (u32)
//! 16      8         n       (u64)
//! 24      4*n*dim   vectors, row-major f32
//! ..      8*n       passage ids (u64)
//! ```

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INDEX_MAGIC: [u8; 8] = *b"TARGIDX\0";
pub const EMBEDDING_MAGIC: [u8; 8] = *b"TARGEMB\0";
pub const FORMAT_VERSION: u32 = 1;
pub const NORM_TOLERANCE: f64 = 1e-6;
const HEADER_LEN: usize = 24;

/// Scale a vector to unit Euclidean norm.
pub fn normalize(vector: &[f64]) -> Result<Vec<f64>> {
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("vector has non-finite entries".into()));
    }
    let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidInput("cannot normalize a zero vector".into()));
    }
    Ok(vector.iter().map(|v| v / norm).collect())
}

fn dot(row: &[f32], query: &[f64]) -> f64 {
    row.iter()
        .zip(query)
        .fold(0.0, |acc, (&r, &q)| acc + f64::from(r) * q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: u64,
    pub score: f64,
}

/// Descending score, then ascending id.
fn rank(a: &SearchHit, b: &SearchHit) -> Ordering {
    b.score.total_cmp(&a.score).then(a.id.cmp(&b.id))
}

/// Vectors plus the passage ids they belong to. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    dim: usize,
    vectors: Vec<f32>,
    ids: Vec<u64>,
}

impl EmbeddingIndex {
    /// Build from raw vectors, normalizing each one.
    pub fn build(dim: usize, rows: &[Vec<f64>], ids: &[u64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("index dimension must be >= 1".into()));
        }
        if rows.len() != ids.len() {
            return Err(Error::DataIntegrity(format!(
                "{} vectors but {} ids",
                rows.len(),
                ids.len()
            )));
        }
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        for (row, id) in rows.iter().zip(ids) {
            if row.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "vector for id {id} has dimension {}, expected {dim}",
                    row.len()
                )));
            }
            vectors.extend(normalize(row)?.into_iter().map(|v| v as f32));
        }
        Self::from_parts(dim, vectors, ids.to_vec())
    }

    /// Assemble from already-normalized rows, checking every invariant.
    pub fn from_parts(dim: usize, vectors: Vec<f32>, ids: Vec<u64>) -> Result<Self> {
        let index = Self { dim, vectors, ids };
        index.check()?;
        Ok(index)
    }

    fn check(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::DataIntegrity("index dimension is 0".into()));
        }
        if self.vectors.len() != self.ids.len() * self.dim {
            return Err(Error::DataIntegrity(format!(
                "{} floats do not form {} rows of dimension {}",
                self.vectors.len(),
                self.ids.len(),
                self.dim
            )));
        }
        let mut seen = HashSet::with_capacity(self.ids.len());
        for (row, id) in self.rows().zip(&self.ids) {
            if !seen.insert(*id) {
                return Err(Error::DataIntegrity(format!("duplicate passage id {id}")));
            }
            let norm = row
                .iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum::<f64>()
                .sqrt();
            if norm.is_nan() || (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::DataIntegrity(format!(
                    "row for id {id} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.vectors.chunks_exact(self.dim)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Exact top-`k` rows by inner product with `query`. Equal scores are
    /// ordered by smaller id. Returns all rows when `k >= len()`.
    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<SearchHit>> {
        if query.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "query has dimension {}, index has {}",
                query.len(),
                self.dim
            )));
        }
        if k == 0 {
            return Err(Error::InvalidInput("top-k must be >= 1".into()));
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("query has non-finite entries".into()));
        }
        let mut hits: Vec<SearchHit> = self
            .rows()
            .zip(&self.ids)
            .map(|(row, &id)| SearchHit {
                id,
                score: dot(row, query),
            })
            .collect();
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, rank);
            hits.truncate(k);
        }
        hits.sort_unstable_by(rank);
        Ok(hits)
    }

    /// [`search`](Self::search) over many queries in parallel. Output order
    /// follows input order.
    pub fn search_batch(&self, queries: &[Vec<f64>], k: usize) -> Result<Vec<Vec<SearchHit>>> {
        queries.par_iter().map(|q| self.search(q, k)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode(&INDEX_MAGIC, self.dim, &self.vectors, &self.ids)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (dim, vectors, ids) = decode(&INDEX_MAGIC, bytes)?;
        Self::from_parts(dim, vectors, ids)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Raw (not necessarily normalized) per-passage vectors, as produced by an
/// external encoder. Same layout as the index file, different magic.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub vectors: Vec<f32>,
    pub ids: Vec<u64>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, rows: &[Vec<f64>], ids: &[u64]) -> Result<Self> {
        if rows.len() != ids.len() {
            return Err(Error::DataIntegrity(format!(
                "{} vectors but {} ids",
                rows.len(),
                ids.len()
            )));
        }
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "vector has dimension {}, expected {dim}",
                    row.len()
                )));
            }
            vectors.extend(row.iter().map(|&v| v as f32));
        }
        Ok(Self {
            dim,
            vectors,
            ids: ids.to_vec(),
        })
    }

    /// Normalize every row and build the searchable index.
    pub fn into_index(self) -> Result<EmbeddingIndex> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("embedding dimension is 0".into()));
        }
        let rows: Vec<Vec<f64>> = self
            .vectors
            .chunks_exact(self.dim)
            .map(|r| r.iter().map(|&v| f64::from(v)).collect())
            .collect();
        EmbeddingIndex::build(self.dim, &rows, &self.ids)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode(&EMBEDDING_MAGIC, self.dim, &self.vectors, &self.ids)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (dim, vectors, ids) = decode(&EMBEDDING_MAGIC, bytes)?;
        Ok(Self { dim, vectors, ids })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn encode(magic: &[u8; 8], dim: usize, vectors: &[f32], ids: &[u64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + vectors.len() * 4 + ids.len() * 8);
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(ids.len() as u64).to_le_bytes());
    for v in vectors {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for id in ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    out
}

fn decode(magic: &[u8; 8], bytes: &[u8]) -> Result<(usize, Vec<f32>, Vec<u64>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..8] != magic {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let n = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let expected = usize::try_from(n)
        .ok()
        .and_then(|n| n.checked_mul(dim)?.checked_mul(4)?.checked_add(n.checked_mul(8)?))
        .and_then(|payload| payload.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format(format!("header sizes overflow: n={n} dim={dim}")))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "expected {expected} bytes for n={n} dim={dim}, found {}",
            bytes.len()
        )));
    }
    let n = n as usize;
    let float_end = HEADER_LEN + n * dim * 4;
    let vectors = bytes[HEADER_LEN..float_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let ids = bytes[float_end..]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((dim, vectors, ids))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
        assert_eq!(normalize(&[2.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        let unit = [0.6, 0.8];
        let again = normalize(&unit).unwrap();
        for (a, b) in again.iter().zip(unit) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            normalize(&[0.0, 0.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    fn basis(dim: usize) -> EmbeddingIndex {
        let rows: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let ids: Vec<u64> = (0..dim as u64).collect();
        EmbeddingIndex::build(dim, &rows, &ids).unwrap()
    }

    #[test]
    fn axis_query_hits_its_axis() {
        let idx = basis(4);
        let hits = idx.search(&[0.0, 0.0, 1.0, 0.0], 1).unwrap();
        assert_eq!(hits, vec![SearchHit { id: 2, score: 1.0 }]);
    }

    #[test]
    fn ties_break_toward_smaller_id() {
        let rows = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let idx = EmbeddingIndex::build(2, &rows, &[7, 3]).unwrap();
        let hits = idx.search(&normalize(&[1.0, 1.0]).unwrap(), 1).unwrap();
        assert_eq!(hits[0].id, 3);
        let both = idx.search(&[1.0, 0.0], 2).unwrap();
        assert_eq!(both.iter().map(|h| h.id).collect::<Vec<_>>(), vec![3, 7]);
    }

    #[test]
    fn small_index_returns_everything() {
        let idx = basis(3);
        assert_eq!(idx.search(&[1.0, 0.0, 0.0], 10).unwrap().len(), 3);
    }

    #[test]
    fn search_errors() {
        let idx = basis(3);
        assert!(matches!(
            idx.search(&[1.0, 0.0], 1),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            idx.search(&[1.0, 0.0, 0.0], 0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn build_rejects_duplicates_and_misalignment() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(
            EmbeddingIndex::build(2, &rows, &[1, 1]),
            Err(Error::DataIntegrity(_))
        ));
        assert!(matches!(
            EmbeddingIndex::build(2, &rows, &[1]),
            Err(Error::DataIntegrity(_))
        ));
    }

    #[test]
    fn bytes_round_trip_and_corruption() {
        let idx = basis(5);
        let bytes = idx.to_bytes();
        assert_eq!(&bytes[..8], b"TARGIDX\0");
        assert_eq!(EmbeddingIndex::from_bytes(&bytes).unwrap(), idx);

        assert!(matches!(
            EmbeddingIndex::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            EmbeddingIndex::from_bytes(&bytes[..10]),
            Err(Error::Format(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            EmbeddingIndex::from_bytes(&bad),
            Err(Error::Format(_))
        ));
        let mut unnormed = bytes.clone();
        unnormed[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&2.0f32.to_le_bytes());
        assert!(matches!(
            EmbeddingIndex::from_bytes(&unnormed),
            Err(Error::DataIntegrity(_))
        ));
        // embeddings and index files are not interchangeable
        assert!(EmbeddingSet::from_bytes(&bytes).is_err());
    }

    #[test]
    fn empty_index_round_trips() {
        let idx = EmbeddingIndex::build(8, &[], &[]).unwrap();
        assert!(idx.is_empty());
        let back = EmbeddingIndex::from_bytes(&idx.to_bytes()).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.dim(), 8);
        assert!(back.search(&[0.0; 8], 3).unwrap().is_empty());
    }

    #[test]
    fn embeddings_normalize_into_index() {
        let set = EmbeddingSet::new(2, &[vec![3.0, 4.0], vec![0.0, -2.0]], &[5, 6]).unwrap();
        let back = EmbeddingSet::from_bytes(&set.to_bytes()).unwrap();
        assert_eq!(back, set);
        let idx = back.into_index().unwrap();
        assert_eq!(idx.row(0), &[0.6f32, 0.8f32]);
        assert_eq!(idx.row(1), &[0.0f32, -1.0f32]);
    }
}

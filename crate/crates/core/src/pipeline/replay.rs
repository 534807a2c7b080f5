//! Offline replay of recorded model traces.
//!
//! A trace file holds one JSON object per line:
//!
//! ```text
//! {"version":1,"query_id":"q1","question":"...","gold_answers":["..."],
//!  "steps":[{"entropy_nats":0.41,"gap":1.7}, ...],
//!  "samples":[[12,7,...],[12,9,...],[12,7,...]],
//!  "answer_no_ctx":"...","answer_with_ctx":"...",
//!  "out_tokens_no_ctx":4,"out_tokens_with_ctx":6,
//!  "query_embedding":[0.1, ...]}
//! ```
//!
//! `samples` may be empty when the variance gate is not used.
//! `query_embedding` is optional. Unknown fields are rejected.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Generation, Generator, Prompt, Query};
use crate::error::{Error, Result};
use crate::gate::{PrefixDraft, StepStats, StochasticPrefixSet};
use crate::io::{parse_jsonl, read_text, to_jsonl};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub version: u32,
    pub query_id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub steps: Vec<StepStats>,
    pub samples: Vec<Vec<u32>>,
    pub answer_no_ctx: String,
    pub answer_with_ctx: String,
    pub out_tokens_no_ctx: usize,
    pub out_tokens_with_ctx: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_embedding: Option<Vec<f64>>,
}

impl TraceRecord {
    pub fn validate(&self) -> Result<()> {
        let ctx = |msg: String| Error::DataIntegrity(format!("trace {}: {msg}", self.query_id));
        if self.version != TRACE_VERSION {
            return Err(ctx(format!(
                "schema version {} (supported: {TRACE_VERSION})",
                self.version
            )));
        }
        PrefixDraft::from_stats(self.steps.clone()).map_err(|e| ctx(e.to_string()))?;
        if !self.samples.is_empty() {
            if self.samples.len() < 2 {
                return Err(ctx("need at least 2 sampled prefixes".into()));
            }
            if self.samples.iter().any(|s| s.len() != self.samples[0].len()) {
                return Err(ctx("sampled prefixes have ragged lengths".into()));
            }
            if self.samples[0].is_empty() {
                return Err(ctx("sampled prefixes are empty".into()));
            }
        }
        if let Some(e) = &self.query_embedding {
            if e.is_empty() || e.iter().any(|v| !v.is_finite()) {
                return Err(ctx("query embedding is empty or non-finite".into()));
            }
        }
        Ok(())
    }

    pub fn query(&self) -> Query {
        Query {
            id: self.query_id.clone(),
            question: self.question.clone(),
            gold_answers: self.gold_answers.clone(),
            embedding: self.query_embedding.clone(),
        }
    }
}

/// Parse and validate a trace document.
pub fn parse_traces(text: &str) -> Result<Vec<TraceRecord>> {
    let records: Vec<TraceRecord> = parse_jsonl(text)?;
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

pub fn emit_traces(records: &[TraceRecord]) -> Result<String> {
    to_jsonl(records)
}

/// A [`Generator`] answering from recorded traces instead of a live model.
#[derive(Debug, Clone)]
pub struct TraceReplayGenerator {
    records: Vec<TraceRecord>,
    by_id: HashMap<String, usize>,
}

impl TraceReplayGenerator {
    pub fn new(records: Vec<TraceRecord>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            r.validate()?;
            if by_id.insert(r.query_id.clone(), i).is_some() {
                return Err(Error::DataIntegrity(format!(
                    "duplicate trace for query {}",
                    r.query_id
                )));
            }
        }
        Ok(Self { records, by_id })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(parse_traces(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_text(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn queries(&self) -> Vec<Query> {
        self.records.iter().map(TraceRecord::query).collect()
    }

    fn record(&self, query_id: &str) -> Result<&TraceRecord> {
        self.by_id
            .get(query_id)
            .map(|&i| &self.records[i])
            .ok_or_else(|| Error::DataIntegrity(format!("no trace for query {query_id}")))
    }
}

impl Generator for TraceReplayGenerator {
    fn decode_prefix(&self, query_id: &str, _prompt: &Prompt, k: usize) -> Result<PrefixDraft> {
        let rec = self.record(query_id)?;
        let draft = PrefixDraft::from_stats(rec.steps.clone())?;
        if k > draft.k() {
            return Err(Error::DataIntegrity(format!(
                "trace {query_id} recorded {} draft steps, {k} requested",
                draft.k()
            )));
        }
        draft.truncated(k)
    }

    fn sample_prefixes(
        &self,
        query_id: &str,
        _prompt: &Prompt,
        k: usize,
        n: usize,
        temperature: f64,
        _seed: u64,
    ) -> Result<StochasticPrefixSet> {
        let rec = self.record(query_id)?;
        if rec.samples.len() < n {
            return Err(Error::DataIntegrity(format!(
                "trace {query_id} recorded {} sampled prefixes, {n} requested",
                rec.samples.len()
            )));
        }
        if rec.samples[0].len() < k {
            return Err(Error::DataIntegrity(format!(
                "trace {query_id} sampled prefixes have {} tokens, {k} requested",
                rec.samples[0].len()
            )));
        }
        StochasticPrefixSet::new(rec.samples[..n].to_vec(), temperature)?.truncated(k)
    }

    fn generate(&self, query_id: &str, prompt: &Prompt) -> Result<Generation> {
        let rec = self.record(query_id)?;
        let (text, tokens) = if prompt.has_context() {
            (&rec.answer_with_ctx, rec.out_tokens_with_ctx)
        } else {
            (&rec.answer_no_ctx, rec.out_tokens_no_ctx)
        };
        Ok(Generation {
            text: text.clone(),
            output_tokens: tokens,
            steps: Vec::new(),
        })
    }
}

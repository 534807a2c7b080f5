//! A deterministic in-memory generator for simulations, demos and tests.

use std::collections::HashMap;
use std::sync::Mutex;

use super::{Generation, Generator, Prompt};
use crate::error::{Error, Result};
use crate::gate::{PrefixDraft, StepStats, StochasticPrefixSet};

/// Scripted behavior for one query id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScriptedQuery {
    pub draft: Vec<StepStats>,
    pub samples: Vec<Vec<u32>>,
    pub answer_no_ctx: String,
    pub answer_with_ctx: String,
    pub out_tokens_no_ctx: usize,
    pub out_tokens_with_ctx: usize,
    /// Per-token statistics of the no-context answer, exposed for re-checks.
    pub output_steps: Vec<StepStats>,
    /// Make every call for this query fail.
    pub fail: bool,
}

impl ScriptedQuery {
    /// `k` draft steps that all share the same logit gap (entropy 0).
    pub fn with_constant_gap(k: usize, gap: f64) -> Self {
        Self {
            draft: vec![
                StepStats {
                    entropy_nats: 0.0,
                    gap,
                };
                k
            ],
            ..Self::default()
        }
    }

    pub fn answers(mut self, no_ctx: &str, with_ctx: &str) -> Self {
        self.answer_no_ctx = no_ctx.to_string();
        self.answer_with_ctx = with_ctx.to_string();
        self.out_tokens_no_ctx = no_ctx.split_whitespace().count();
        self.out_tokens_with_ctx = with_ctx.split_whitespace().count();
        self
    }

    pub fn output_tokens(mut self, no_ctx: usize, with_ctx: usize) -> Self {
        self.out_tokens_no_ctx = no_ctx;
        self.out_tokens_with_ctx = with_ctx;
        self
    }
}

/// Generator that plays back [`ScriptedQuery`] entries and records every
/// prompt it is asked to complete.
#[derive(Debug, Default)]
pub struct ScriptedGenerator {
    queries: HashMap<String, ScriptedQuery>,
    prompts: Mutex<Vec<(String, String)>>,
}

impl ScriptedGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, script: ScriptedQuery) {
        self.queries.insert(query_id.into(), script);
    }

    /// `(query_id, rendered prompt)` for every `generate` call so far.
    pub fn generated_prompts(&self) -> Vec<(String, String)> {
        self.prompts.lock().expect("prompt log").clone()
    }

    fn script(&self, query_id: &str) -> Result<&ScriptedQuery> {
        let s = self
            .queries
            .get(query_id)
            .ok_or_else(|| Error::DataIntegrity(format!("no script for query {query_id}")))?;
        if s.fail {
            return Err(Error::InvalidInput(format!(
                "scripted failure for query {query_id}"
            )));
        }
        Ok(s)
    }
}

impl Generator for ScriptedGenerator {
    fn decode_prefix(&self, query_id: &str, _prompt: &Prompt, k: usize) -> Result<PrefixDraft> {
        let s = self.script(query_id)?;
        if s.draft.len() < k {
            return Err(Error::DataIntegrity(format!(
                "script for {query_id} has {} draft steps, {k} requested",
                s.draft.len()
            )));
        }
        PrefixDraft::from_stats(s.draft[..k].to_vec())
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
        let s = self.script(query_id)?;
        if s.samples.len() < n || s.samples.first().map_or(0, Vec::len) < k {
            return Err(Error::DataIntegrity(format!(
                "script for {query_id} lacks {n} sampled prefixes of length {k}"
            )));
        }
        StochasticPrefixSet::new(s.samples[..n].to_vec(), temperature)?.truncated(k)
    }

    fn generate(&self, query_id: &str, prompt: &Prompt) -> Result<Generation> {
        let s = self.script(query_id)?;
        self.prompts
            .lock()
            .expect("prompt log")
            .push((query_id.to_string(), prompt.render()));
        Ok(if prompt.has_context() {
            Generation {
                text: s.answer_with_ctx.clone(),
                output_tokens: s.out_tokens_with_ctx,
                steps: Vec::new(),
            }
        } else {
            Generation {
                text: s.answer_no_ctx.clone(),
                output_tokens: s.out_tokens_no_ctx,
                steps: s.output_steps.clone(),
            }
        })
    }
}

//! Per-query gated inference: draft, score, gate, optionally retrieve, then
//! generate.

mod replay;
mod scripted;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use replay::{emit_traces, parse_traces, TraceRecord, TraceReplayGenerator, TRACE_VERSION};
pub use scripted::{ScriptedGenerator, ScriptedQuery};

use crate::calibration::LatencyModel;
use crate::error::{Error, Result};
use crate::eval::{exact_match, f1};
use crate::gate::{GateConfig, GateKind, PrefixDraft, StepStats, StochasticPrefixSet};
use crate::numeric::{opt_ext_f64, pairwise_sum};
use crate::retrieval::{ContextBlock, Retriever};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

pub const DEFAULT_TEMPLATE: &str = "Answer the question with a short phrase.\nQuestion: {question}";

/// Base prompt template. `{question}` is replaced by the question text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptTemplate(pub String);

impl Default for PromptTemplate {
    fn default() -> Self {
        Self(DEFAULT_TEMPLATE.to_string())
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<()> {
        if !self.0.contains("{question}") {
            return Err(Error::InvalidConfig(
                "prompt template has no {question} placeholder".into(),
            ));
        }
        Ok(())
    }

    pub fn base(&self, question: &str) -> Prompt {
        Prompt {
            base: self.0.replace("{question}", question),
            context: None,
            partial_output: None,
        }
    }
}

/// A generator prompt: the base prompt, optionally followed by retrieved
/// context, optionally with output already produced before a re-check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub base: String,
    pub context: Option<String>,
    pub partial_output: Option<String>,
}

impl Prompt {
    pub fn with_context(&self, context: &ContextBlock) -> Prompt {
        Prompt {
            context: Some(context.text.clone()),
            ..self.clone()
        }
    }

    pub fn has_context(&self) -> bool {
        self.context.is_some()
    }

    pub fn render(&self) -> String {
        let mut out = self.base.clone();
        if let Some(ctx) = &self.context {
            out.push_str("\n\nContext:\n");
            out.push_str(ctx);
        }
        out.push_str("\n\nAnswer:");
        if let Some(partial) = &self.partial_output {
            out.push(' ');
            out.push_str(partial);
        }
        out
    }
}

impl fmt::Display for Prompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Output of a full generation call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Generation {
    /// The complete answer. When the prompt carried a partial output, this
    /// is the whole answer including that partial.
    pub text: String,
    /// Newly generated tokens.
    pub output_tokens: usize,
    /// Per-token statistics of the generated tokens, when the backend
    /// exposes them. Needed only for mid-generation re-checks.
    pub steps: Vec<StepStats>,
}

/// The language model behind the pipeline.
///
/// `decode_prefix` must be deterministic for a fixed prompt (greedy), and
/// `sample_prefixes` deterministic for a fixed seed.
pub trait Generator: Send + Sync {
    fn decode_prefix(&self, query_id: &str, prompt: &Prompt, k: usize) -> Result<PrefixDraft>;

    fn sample_prefixes(
        &self,
        query_id: &str,
        prompt: &Prompt,
        k: usize,
        n: usize,
        temperature: f64,
        seed: u64,
    ) -> Result<StochasticPrefixSet>;

    fn generate(&self, query_id: &str, prompt: &Prompt) -> Result<Generation>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Never,
    Always,
    #[default]
    Gated,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Never => "never",
            Policy::Always => "always",
            Policy::Gated => "gated",
        }
    }
}

/// Everything a query run needs besides the models themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub policy: Policy,
    pub gate: GateConfig,
    pub top_k: usize,
    pub ctx_budget: usize,
    pub template: PromptTemplate,
    pub latency: LatencyModel,
    pub seed: u64,
}

impl RunSettings {
    pub fn gated(gate: GateConfig) -> Self {
        Self {
            policy: Policy::Gated,
            gate,
            top_k: 5,
            ctx_budget: 512,
            template: PromptTemplate::default(),
            latency: LatencyModel::default(),
            seed: 0,
        }
    }

    pub fn with_policy(&self, policy: Policy) -> Self {
        Self {
            policy,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gate.validate()?;
        self.template.validate()?;
        self.latency.validate()?;
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be >= 1".into()));
        }
        if self.gate.recheck_stride.is_some() && self.gate.kind == GateKind::Variance {
            return Err(Error::InvalidConfig(
                "re-check is defined over greedy step statistics; use the entropy or margin gate"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Tokens spent on drafting: the greedy prefix, plus the sampled
    /// prefixes for the variance gate.
    pub fn draft_tokens(&self) -> usize {
        match self.gate.kind {
            GateKind::Variance => self.gate.k * (1 + self.gate.n_samples),
            _ => self.gate.k,
        }
    }
}

/// Per-query sampling seed derived from the master seed and the query id.
pub fn query_seed(master: u64, query_id: &str) -> u64 {
    // FNV-1a over the id, mixed with the master seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ master;
    for b in query_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub query_id: String,
    /// Gate score; absent for the never/always baselines.
    pub score: Option<f64>,
    pub retrieved: bool,
    /// Output position at which a re-check triggered retrieval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recheck_at: Option<usize>,
    pub answer: String,
    pub draft_tokens: usize,
    pub context_tokens: usize,
    pub output_tokens: usize,
    pub latency_s: f64,
    /// Added seconds over the never-retrieve pass; filled by [`run_dataset`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_latency_s: Option<f64>,
    pub em: f64,
    pub f1: f64,
}

impl RunRecord {
    pub fn total_tokens(&self) -> usize {
        self.draft_tokens + self.context_tokens + self.output_tokens
    }

    /// The answer-level part of the record, shared by every policy that
    /// makes the same retrieval decision.
    pub fn outcome(&self) -> Outcome {
        Outcome {
            query_id: self.query_id.clone(),
            retrieved: self.retrieved,
            answer: self.answer.clone(),
            context_tokens: self.context_tokens,
            output_tokens: self.output_tokens,
            em: self.em,
            f1: self.f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub query_id: String,
    pub retrieved: bool,
    pub answer: String,
    pub context_tokens: usize,
    pub output_tokens: usize,
    pub em: f64,
    pub f1: f64,
}

fn wrap(query: &Query) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        already @ Error::Query { .. } => already,
        other => Error::Query {
            query_id: query.id.clone(),
            source: Box::new(other),
        },
    }
}

fn fetch_context(
    query: &Query,
    settings: &RunSettings,
    retriever: &dyn Retriever,
) -> Result<ContextBlock> {
    let embedding = query.embedding.as_deref().ok_or_else(|| {
        Error::DataIntegrity(format!("query {} has no embedding to retrieve with", query.id))
    })?;
    retriever.retrieve(embedding, settings.top_k, settings.ctx_budget)
}

/// Score the no-context draft with the configured gate.
pub fn score_query(
    query: &Query,
    settings: &RunSettings,
    generator: &dyn Generator,
) -> Result<f64> {
    let base = settings.template.base(&query.question);
    let gate = &settings.gate;
    let draft = generator.decode_prefix(&query.id, &base, gate.k)?;
    let samples = if gate.kind.needs_samples() {
        Some(generator.sample_prefixes(
            &query.id,
            &base,
            gate.k,
            gate.n_samples,
            gate.sample_temperature,
            query_seed(settings.seed, &query.id),
        )?)
    } else {
        None
    };
    Ok(gate.score(&draft, samples.as_ref())?.value)
}

/// Run one query under `settings.policy`.
///
/// For the gated policy: draft `k` tokens from the base prompt, score them,
/// and retrieve iff the score is strictly above `tau`. With a re-check
/// stride `m`, a query that did not retrieve up front re-scores the output
/// produced so far every `m` tokens and retrieves at most once.
pub fn run_query(
    query: &Query,
    settings: &RunSettings,
    generator: &dyn Generator,
    retriever: &dyn Retriever,
) -> Result<RunRecord> {
    run_query_inner(query, settings, generator, retriever).map_err(wrap(query))
}

fn run_query_inner(
    query: &Query,
    settings: &RunSettings,
    generator: &dyn Generator,
    retriever: &dyn Retriever,
) -> Result<RunRecord> {
    let base = settings.template.base(&query.question);
    let (score, retrieve, draft_tokens) = match settings.policy {
        Policy::Never => (None, false, 0),
        Policy::Always => (None, true, 0),
        Policy::Gated => {
            let u = score_query(query, settings, generator)?;
            (Some(u), u > settings.gate.tau, settings.draft_tokens())
        }
    };

    let record = if retrieve {
        let context = fetch_context(query, settings, retriever)?;
        let generation = generator.generate(&query.id, &base.with_context(&context))?;
        finish(query, settings, score, true, draft_tokens, &context, generation, None)
    } else {
        let generation = generator.generate(&query.id, &base)?;
        match (settings.policy, settings.gate.recheck_stride) {
            (Policy::Gated, Some(stride)) => {
                let ctx = RecheckCtx {
                    query,
                    settings,
                    generator,
                    retriever,
                    base: &base,
                };
                recheck(&ctx, score, draft_tokens, stride, generation)?
            }
            _ => finish(
                query,
                settings,
                score,
                false,
                draft_tokens,
                &ContextBlock::default(),
                generation,
                None,
            ),
        }
    };
    Ok(record)
}

struct RecheckCtx<'a> {
    query: &'a Query,
    settings: &'a RunSettings,
    generator: &'a dyn Generator,
    retriever: &'a dyn Retriever,
    base: &'a Prompt,
}

fn recheck(
    ctx: &RecheckCtx<'_>,
    score: Option<f64>,
    draft_tokens: usize,
    stride: usize,
    generation: Generation,
) -> Result<RunRecord> {
    let RecheckCtx {
        query,
        settings,
        generator,
        retriever,
        base,
    } = *ctx;
    let produced = generation.steps.len().min(generation.output_tokens);
    let mut position = stride;
    while position <= produced {
        let running = PrefixDraft::from_stats(generation.steps[..position].to_vec())?;
        let u = settings.gate.score(&running, None)?.value;
        if u > settings.gate.tau {
            let context = fetch_context(query, settings, retriever)?;
            let partial: Vec<&str> = generation.text.split_whitespace().take(position).collect();
            let prompt = Prompt {
                partial_output: Some(partial.join(" ")),
                ..base.with_context(&context)
            };
            let mut continued = generator.generate(&query.id, &prompt)?;
            continued.output_tokens += position;
            return Ok(finish(
                query,
                settings,
                score,
                true,
                draft_tokens,
                &context,
                continued,
                Some(position),
            ));
        }
        position += stride;
    }
    Ok(finish(
        query,
        settings,
        score,
        false,
        draft_tokens,
        &ContextBlock::default(),
        generation,
        None,
    ))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    query: &Query,
    settings: &RunSettings,
    score: Option<f64>,
    retrieved: bool,
    draft_tokens: usize,
    context: &ContextBlock,
    generation: Generation,
    recheck_at: Option<usize>,
) -> RunRecord {
    let tokens = draft_tokens + context.token_count + generation.output_tokens;
    RunRecord {
        query_id: query.id.clone(),
        score,
        retrieved,
        recheck_at,
        em: exact_match(&generation.text, &query.gold_answers),
        f1: f1(&generation.text, &query.gold_answers),
        answer: generation.text,
        draft_tokens,
        context_tokens: context.token_count,
        output_tokens: generation.output_tokens,
        latency_s: settings.latency.seconds(tokens, usize::from(retrieved)),
        delta_latency_s: None,
    }
}

/// Aggregates over a set of query results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub queries: usize,
    /// Percent.
    pub em: f64,
    /// Percent.
    pub f1: f64,
    pub retrieval_rate: f64,
    pub mean_tokens: f64,
    pub mean_latency_s: f64,
    pub mean_delta_latency_s: f64,
}

/// Per-query values that feed an [`Aggregate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryMetrics {
    pub em: f64,
    pub f1: f64,
    pub retrieved: bool,
    pub tokens: usize,
    pub latency_s: f64,
    pub delta_latency_s: f64,
}

impl Aggregate {
    /// Means over `rows`, in the given order. All zeros for no rows.
    pub fn from_rows(rows: &[QueryMetrics]) -> Self {
        let n = rows.len();
        if n == 0 {
            return Self {
                queries: 0,
                em: 0.0,
                f1: 0.0,
                retrieval_rate: 0.0,
                mean_tokens: 0.0,
                mean_latency_s: 0.0,
                mean_delta_latency_s: 0.0,
            };
        }
        let col = |f: &dyn Fn(&QueryMetrics) -> f64| -> f64 {
            let values: Vec<f64> = rows.iter().map(f).collect();
            pairwise_sum(&values) / n as f64
        };
        let retrieved = rows.iter().filter(|r| r.retrieved).count();
        let tokens: usize = rows.iter().map(|r| r.tokens).sum();
        Self {
            queries: n,
            em: 100.0 * col(&|r| r.em),
            f1: 100.0 * col(&|r| r.f1),
            retrieval_rate: retrieved as f64 / n as f64,
            mean_tokens: tokens as f64 / n as f64,
            mean_latency_s: col(&|r| r.latency_s),
            mean_delta_latency_s: col(&|r| r.delta_latency_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: Policy,
    pub gate: GateKind,
    #[serde(with = "opt_ext_f64")]
    pub tau: Option<f64>,
    pub seed: u64,
    pub failures: usize,
    #[serde(flatten)]
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFailure {
    pub query_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRun {
    pub records: Vec<RunRecord>,
    pub failures: Vec<QueryFailure>,
    pub summary: RunSummary,
}

/// Run every query, plus the never-retrieve pass needed for Δ latency.
///
/// Failing queries are collected rather than aborting the run; aggregates
/// cover the successful ones. Queries run in parallel, and results keep
/// input order.
pub fn run_dataset(
    queries: &[Query],
    settings: &RunSettings,
    generator: &dyn Generator,
    retriever: &dyn Retriever,
) -> Result<DatasetRun> {
    use rayon::prelude::*;

    settings.validate()?;
    let never = settings.with_policy(Policy::Never);
    let outcomes: Vec<Result<RunRecord>> = queries
        .par_iter()
        .map(|q| {
            let mut rec = run_query(q, settings, generator, retriever)?;
            // The generator is deterministic, so a query that did not
            // retrieve already produced the never-pass output.
            let baseline = if rec.retrieved || settings.policy != Policy::Gated {
                run_query(q, &never, generator, retriever)?.latency_s
            } else {
                settings.latency.seconds(rec.output_tokens, 0)
            };
            rec.delta_latency_s = Some(rec.latency_s - baseline);
            Ok(rec)
        })
        .collect();

    let mut records = Vec::with_capacity(queries.len());
    let mut failures = Vec::new();
    for (q, outcome) in queries.iter().zip(outcomes) {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(QueryFailure {
                query_id: q.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    let rows: Vec<QueryMetrics> = records
        .iter()
        .map(|r| QueryMetrics {
            em: r.em,
            f1: r.f1,
            retrieved: r.retrieved,
            tokens: r.total_tokens(),
            latency_s: r.latency_s,
            delta_latency_s: r.delta_latency_s.unwrap_or(0.0),
        })
        .collect();
    let summary = RunSummary {
        policy: settings.policy,
        gate: settings.gate.kind,
        tau: (settings.policy == Policy::Gated).then_some(settings.gate.tau),
        seed: settings.seed,
        failures: failures.len(),
        aggregate: Aggregate::from_rows(&rows),
    };
    Ok(DatasetRun {
        records,
        failures,
        summary,
    })
}

/// Both branches of one query, computed once so thresholds can be swept
/// without re-drafting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBranches {
    pub query_id: String,
    pub score: f64,
    pub draft_tokens: usize,
    pub context_tokens: usize,
    pub never: BranchOutcome,
    pub always: BranchOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchOutcome {
    pub answer: String,
    pub output_tokens: usize,
    pub em: f64,
    pub f1: f64,
}

impl QueryBranches {
    /// Metrics of the gated policy at `tau` under `latency`.
    pub fn metrics_at(&self, tau: f64, latency: &LatencyModel) -> QueryMetrics {
        let retrieved = self.score > tau;
        let branch = if retrieved { &self.always } else { &self.never };
        let ctx = if retrieved { self.context_tokens } else { 0 };
        let tokens = self.draft_tokens + ctx + branch.output_tokens;
        let latency_s = latency.seconds(tokens, usize::from(retrieved));
        QueryMetrics {
            em: branch.em,
            f1: branch.f1,
            retrieved,
            tokens,
            latency_s,
            delta_latency_s: latency_s - latency.seconds(self.never.output_tokens, 0),
        }
    }

    /// Metrics of a baseline policy (no draft).
    pub fn baseline_metrics(&self, always: bool, latency: &LatencyModel) -> QueryMetrics {
        let (branch, ctx) = if always {
            (&self.always, self.context_tokens)
        } else {
            (&self.never, 0)
        };
        let tokens = ctx + branch.output_tokens;
        let latency_s = latency.seconds(tokens, usize::from(always));
        QueryMetrics {
            em: branch.em,
            f1: branch.f1,
            retrieved: always,
            tokens,
            latency_s,
            delta_latency_s: latency_s - latency.seconds(self.never.output_tokens, 0),
        }
    }
}

/// Score every query once and produce both branch outcomes.
pub fn collect_branches(
    queries: &[Query],
    settings: &RunSettings,
    generator: &dyn Generator,
    retriever: &dyn Retriever,
) -> Result<Vec<QueryBranches>> {
    use rayon::prelude::*;

    settings.validate()?;
    let never = settings.with_policy(Policy::Never);
    let always = settings.with_policy(Policy::Always);
    queries
        .par_iter()
        .map(|q| {
            let score = score_query(q, settings, generator).map_err(wrap(q))?;
            let n = run_query(q, &never, generator, retriever)?;
            let a = run_query(q, &always, generator, retriever)?;
            Ok(QueryBranches {
                query_id: q.id.clone(),
                score,
                draft_tokens: settings.draft_tokens(),
                context_tokens: a.context_tokens,
                never: BranchOutcome {
                    answer: n.answer,
                    output_tokens: n.output_tokens,
                    em: n.em,
                    f1: n.f1,
                },
                always: BranchOutcome {
                    answer: a.answer,
                    output_tokens: a.output_tokens,
                    em: a.em,
                    f1: a.f1,
                },
            })
        })
        .collect()
}

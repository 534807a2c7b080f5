//! Uncertainty scores computed from a short no-context prefix draft, and the
//! retrieve/skip decision built on top of them.
//!
//! Three scores are available:
//!
//! * **entropy**: mean per-step Shannon entropy (nats) of the next-token
//!   distribution,
//! * **margin**: mean of `exp(-gap / beta)` where `gap` is the top-1 minus
//!   top-2 logit at each step, so small gaps map to values near 1,
//! * **variance**: mean per-step disagreement `1 - mode_frequency` across
//!   `N` short sampled prefixes.
//!
//! Larger scores always mean "more uncertain", and a query retrieves iff its
//! score is strictly greater than the threshold `tau`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{mean, pairwise_sum};

/// Tolerance for checking stored step statistics against raw logits.
pub const RECOMPUTE_TOLERANCE: f64 = 1e-9;

/// Tolerance on `sum(p) == 1` accepted by [`step_entropy`].
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-6;

/// One row of next-token logits. Finite, with at least two entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LogitRow(Vec<f64>);

impl LogitRow {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_logits(&values)?;
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn vocab_size(&self) -> usize {
        self.0.len()
    }

    /// Entropy and gap for this row.
    pub fn stats(&self) -> StepStats {
        // Both calls are infallible on a validated row.
        let probs = softmax(&self.0).expect("validated row");
        StepStats {
            entropy_nats: step_entropy(&probs).expect("softmax output is a distribution"),
            gap: logit_gap(&self.0).expect("validated row"),
        }
    }
}

impl TryFrom<Vec<f64>> for LogitRow {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<LogitRow> for Vec<f64> {
    fn from(row: LogitRow) -> Self {
        row.0
    }
}

fn check_logits(values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "logit row needs at least 2 entries, got {}",
            values.len()
        )));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite logit {bad}")));
    }
    Ok(())
}

/// Numerically safe softmax (the row maximum is subtracted first).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_logits(logits)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total = pairwise_sum(&exps);
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Shannon entropy in nats, with `0 * ln 0 = 0`. Clamped to `[0, ln V]`.
pub fn step_entropy(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::InvalidInput("empty probability vector".into()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidInput(
            "probabilities must be finite and non-negative".into(),
        ));
    }
    let total = pairwise_sum(probs);
    if (total - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "probabilities sum to {total}, expected 1"
        )));
    }
    let terms: Vec<f64> = probs
        .iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .collect();
    let upper = (probs.len() as f64).ln();
    Ok(pairwise_sum(&terms).clamp(0.0, upper))
}

/// Top-1 minus top-2 logit. Zero when the two largest values tie.
pub fn logit_gap(logits: &[f64]) -> Result<f64> {
    check_logits(logits)?;
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in logits {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    Ok(first - second)
}

/// Per-step statistics of a greedy draft step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepStats {
    pub entropy_nats: f64,
    pub gap: f64,
}

impl StepStats {
    fn validate(&self) -> Result<()> {
        if !(self.entropy_nats.is_finite() && self.entropy_nats >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "entropy must be finite and >= 0, got {}",
                self.entropy_nats
            )));
        }
        if !(self.gap.is_finite() && self.gap >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "gap must be finite and >= 0, got {}",
                self.gap
            )));
        }
        Ok(())
    }
}

/// The `k`-token greedy draft decoded without retrieval.
///
/// Step statistics are the canonical representation. Raw logit rows are
/// optional; when present they must reproduce the statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixDraft {
    steps: Vec<StepStats>,
    raw_rows: Option<Vec<LogitRow>>,
}

impl PrefixDraft {
    pub fn from_stats(steps: Vec<StepStats>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidInput("prefix draft has no steps".into()));
        }
        for s in &steps {
            s.validate()?;
        }
        Ok(Self {
            steps,
            raw_rows: None,
        })
    }

    pub fn from_logits(rows: Vec<LogitRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("prefix draft has no steps".into()));
        }
        let steps = rows.iter().map(LogitRow::stats).collect();
        Ok(Self {
            steps,
            raw_rows: Some(rows),
        })
    }

    /// Statistics together with the rows they claim to come from. Fails if
    /// recomputation disagrees by more than [`RECOMPUTE_TOLERANCE`].
    pub fn with_rows(steps: Vec<StepStats>, rows: Vec<LogitRow>) -> Result<Self> {
        let mut draft = Self::from_stats(steps)?;
        if rows.len() != draft.steps.len() {
            return Err(Error::DataIntegrity(format!(
                "{} raw rows for {} steps",
                rows.len(),
                draft.steps.len()
            )));
        }
        for (t, (stored, row)) in draft.steps.iter().zip(&rows).enumerate() {
            let fresh = row.stats();
            if (stored.entropy_nats - fresh.entropy_nats).abs() > RECOMPUTE_TOLERANCE
                || (stored.gap - fresh.gap).abs() > RECOMPUTE_TOLERANCE
            {
                return Err(Error::DataIntegrity(format!(
                    "step {t}: stored {stored:?} disagrees with raw logits {fresh:?}"
                )));
            }
        }
        draft.raw_rows = Some(rows);
        Ok(draft)
    }

    pub fn k(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[StepStats] {
        &self.steps
    }

    pub fn raw_rows(&self) -> Option<&[LogitRow]> {
        self.raw_rows.as_deref()
    }

    /// Vocabulary size, known only when raw rows are attached.
    pub fn vocab_size(&self) -> Option<usize> {
        self.raw_rows
            .as_ref()
            .and_then(|rows| rows.first())
            .map(LogitRow::vocab_size)
    }

    /// The first `k` steps. Used for prefix-length ablations over a longer
    /// recorded draft.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k() {
            return Err(Error::InvalidConfig(format!(
                "cannot take a {k}-step prefix of a {}-step draft",
                self.k()
            )));
        }
        Ok(Self {
            steps: self.steps[..k].to_vec(),
            raw_rows: self.raw_rows.as_ref().map(|r| r[..k].to_vec()),
        })
    }
}

/// `N` short sampled prefixes, all of the same length `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPrefixSet {
    samples: Vec<Vec<u32>>,
    temperature: f64,
}

impl StochasticPrefixSet {
    pub fn new(samples: Vec<Vec<u32>>, temperature: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 sampled prefixes, got {}",
                samples.len()
            )));
        }
        let k = samples[0].len();
        if k == 0 {
            return Err(Error::InvalidInput("sampled prefixes are empty".into()));
        }
        if samples.iter().any(|s| s.len() != k) {
            return Err(Error::InvalidInput(
                "sampled prefixes have ragged lengths".into(),
            ));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sampling temperature must be > 0, got {temperature}"
            )));
        }
        Ok(Self {
            samples,
            temperature,
        })
    }

    pub fn samples(&self) -> &[Vec<u32>] {
        &self.samples
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn k(&self) -> usize {
        self.samples[0].len()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k() {
            return Err(Error::InvalidConfig(format!(
                "cannot take a {k}-token prefix of {}-token samples",
                self.k()
            )));
        }
        Ok(Self {
            samples: self.samples.iter().map(|s| s[..k].to_vec()).collect(),
            temperature: self.temperature,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Entropy,
    Margin,
    Variance,
}

impl GateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GateKind::Entropy => "entropy",
            GateKind::Margin => "margin",
            GateKind::Variance => "variance",
        }
    }

    /// Whether scoring needs sampled prefixes in addition to the greedy draft.
    pub fn needs_samples(self) -> bool {
        matches!(self, GateKind::Variance)
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(GateKind::Entropy),
            "margin" => Ok(GateKind::Margin),
            "variance" => Ok(GateKind::Variance),
            other => Err(Error::InvalidConfig(format!("unknown gate '{other}'"))),
        }
    }
}

pub const DEFAULT_PREFIX_LEN: usize = 20;
pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_SAMPLES: usize = 3;
pub const DEFAULT_SAMPLE_TEMPERATURE: f64 = 0.7;

fn default_k() -> usize {
    DEFAULT_PREFIX_LEN
}
fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_samples() -> usize {
    DEFAULT_SAMPLES
}
fn default_temperature() -> f64 {
    DEFAULT_SAMPLE_TEMPERATURE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    pub kind: GateKind,
    /// Retrieve iff score > tau. `-inf` always retrieves, `+inf` never does.
    pub tau: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_temperature")]
    pub sample_temperature: f64,
    /// Optional mid-generation re-check every `m` output tokens.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recheck_stride: Option<usize>,
}

impl GateConfig {
    pub fn new(kind: GateKind, tau: f64) -> Self {
        Self {
            kind,
            tau,
            k: DEFAULT_PREFIX_LEN,
            beta: DEFAULT_BETA,
            n_samples: DEFAULT_SAMPLES,
            sample_temperature: DEFAULT_SAMPLE_TEMPERATURE,
            recheck_stride: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("prefix length k must be >= 1".into()));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        if self.n_samples < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_samples must be >= 2, got {}",
                self.n_samples
            )));
        }
        if !(self.sample_temperature.is_finite() && self.sample_temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sample temperature must be > 0, got {}",
                self.sample_temperature
            )));
        }
        if self.tau.is_nan() {
            return Err(Error::InvalidConfig("tau is NaN".into()));
        }
        if self.recheck_stride == Some(0) {
            return Err(Error::InvalidConfig("recheck stride must be > 0".into()));
        }
        Ok(())
    }

    /// Score a draft with the configured gate. `samples` is required for the
    /// variance gate and ignored otherwise.
    pub fn score(
        &self,
        draft: &PrefixDraft,
        samples: Option<&StochasticPrefixSet>,
    ) -> Result<GateScore> {
        match self.kind {
            GateKind::Entropy => entropy_gate_score(draft),
            GateKind::Margin => margin_gate_score(draft, self.beta),
            GateKind::Variance => {
                let set = samples.ok_or_else(|| {
                    Error::InvalidConfig("variance gate needs sampled prefixes".into())
                })?;
                variance_gate_score(set)
            }
        }
    }
}

/// Aggregated uncertainty over the draft.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateScore {
    pub value: f64,
    pub kind: GateKind,
    /// Number of steps that contributed.
    pub k: usize,
}

/// Mean per-step entropy.
pub fn entropy_gate_score(draft: &PrefixDraft) -> Result<GateScore> {
    let entropies: Vec<f64> = draft.steps().iter().map(|s| s.entropy_nats).collect();
    let value = mean(&entropies).ok_or_else(|| Error::InvalidInput("empty draft".into()))?;
    Ok(GateScore {
        value,
        kind: GateKind::Entropy,
        k: entropies.len(),
    })
}

/// Mean of `exp(-gap / beta)` over the draft steps. Lies in `(0, 1]`.
pub fn margin_gate_score(draft: &PrefixDraft, beta: f64) -> Result<GateScore> {
    let gaps: Vec<f64> = draft.steps().iter().map(|s| s.gap).collect();
    let value = margin_score_from_gaps(&gaps, beta)?;
    Ok(GateScore {
        value,
        kind: GateKind::Margin,
        k: gaps.len(),
    })
}

/// Margin score over raw gap values.
pub fn margin_score_from_gaps(gaps: &[f64], beta: f64) -> Result<f64> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidConfig(format!("beta must be > 0, got {beta}")));
    }
    let links: Vec<f64> = gaps.iter().map(|g| margin_link(*g, beta)).collect();
    mean(&links).ok_or_else(|| Error::InvalidInput("empty draft".into()))
}

/// The strictly decreasing link from gap to uncertainty.
#[inline]
pub fn margin_link(gap: f64, beta: f64) -> f64 {
    (-gap / beta).exp()
}

/// Mean per-step disagreement `1 - (mode count / N)`. Lies in `[0, (N-1)/N]`.
pub fn variance_gate_score(set: &StochasticPrefixSet) -> Result<GateScore> {
    let n = set.n();
    let k = set.k();
    let mut counts: HashMap<u32, usize> = HashMap::with_capacity(n);
    let mut disagreement = Vec::with_capacity(k);
    for t in 0..k {
        counts.clear();
        for sample in set.samples() {
            *counts.entry(sample[t]).or_default() += 1;
        }
        let mode = counts.values().copied().max().unwrap_or(0);
        // Exact as a rational: (n - mode) / n.
        disagreement.push((n - mode) as f64 / n as f64);
    }
    let value = mean(&disagreement).ok_or_else(|| Error::InvalidInput("empty samples".into()))?;
    Ok(GateScore {
        value,
        kind: GateKind::Variance,
        k,
    })
}

/// Retrieve iff `score > tau`. A score equal to tau skips retrieval.
#[inline]
pub fn decide(score: &GateScore, tau: f64) -> bool {
    score.value > tau
}

/// Mean-gap threshold that reproduces margin-score thresholding along the
/// location family `gaps = mu + shape` (with `shape` summing to zero).
///
/// Returns `mu_tau` such that `margin(mu + shape) > tau` iff `mu < mu_tau`,
/// or `None` when `tau` is outside the score range the family can reach
/// (in which case every member decides the same way).
pub fn mean_gap_threshold(shape: &[f64], beta: f64, tau: f64) -> Result<Option<f64>> {
    if shape.is_empty() {
        return Err(Error::InvalidInput("empty shape".into()));
    }
    let lo = -shape.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let score = |mu: f64| -> Result<f64> {
        let gaps: Vec<f64> = shape.iter().map(|d| (mu + d).max(0.0)).collect();
        margin_score_from_gaps(&gaps, beta)
    };
    if score(lo)? <= tau || tau <= 0.0 {
        return Ok(None);
    }
    let mut a = lo;
    let mut b = lo + beta;
    while score(b)? > tau {
        b = lo + 2.0 * (b - lo);
        if !b.is_finite() {
            return Ok(None);
        }
    }
    // score(a) > tau >= score(b)
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if score(m)? > tau {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(Some(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-9;

    fn draft_with(entropies: &[f64], gaps: &[f64]) -> PrefixDraft {
        PrefixDraft::from_stats(
            entropies
                .iter()
                .zip(gaps)
                .map(|(&e, &g)| StepStats {
                    entropy_nats: e,
                    gap: g,
                })
                .collect(),
        )
        .unwrap()
    }

    fn stats_only_gaps(gaps: &[f64]) -> PrefixDraft {
        draft_with(&vec![0.0; gaps.len()], gaps)
    }

    #[test]
    fn softmax_uniform_and_shift() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let a = softmax(&[0.3, -1.2]).unwrap();
        let b = softmax(&[1000.3, 998.8]).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-12);
        assert!((a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn softmax_ln2_case() {
        // e^{ln 2} / (e^{ln 2} + 1 + 1) = 2/4
        let p = softmax(&[2f64.ln(), 0.0, 0.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] - 0.25).abs() < 1e-12);
        assert!((p[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_bad_rows() {
        assert!(matches!(
            softmax(&[1.0, f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            softmax(&[1.0, f64::INFINITY]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(softmax(&[1.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let p = softmax(&[1e308, 1e308 - 1e292, -1e308]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_examples() {
        assert!((step_entropy(&[0.25; 4]).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert_eq!(step_entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        // direct summation: -(0.5 ln 0.5 + 2 * 0.25 ln 0.25) = 1.5 ln 2
        let oracle = -(0.5 * 0.5f64.ln() + 2.0 * 0.25 * 0.25f64.ln());
        let h = step_entropy(&[0.5, 0.25, 0.25]).unwrap();
        assert!((h - oracle).abs() < 1e-12);
        assert!((h - 1.039_720_770_839_917_9).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_non_distribution() {
        assert!(matches!(
            step_entropy(&[0.5, 0.4]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            step_entropy(&[1.2, -0.2]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn gap_examples() {
        assert_eq!(logit_gap(&[3.0, 1.0, 0.5]).unwrap(), 2.0);
        assert_eq!(logit_gap(&[5.0, 5.0]).unwrap(), 0.0);
        // sort-and-subtract oracle
        let mut row = vec![-1.0, -4.0, -1.5];
        let gap = logit_gap(&row).unwrap();
        row.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_eq!(gap, row[0] - row[1]);
        assert_eq!(gap, 0.5);
        assert!(matches!(logit_gap(&[1.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn entropy_gate_examples() {
        let s = entropy_gate_score(&draft_with(&[0.0; 3], &[1.0; 3])).unwrap();
        assert_eq!(s.value, 0.0);
        let s = entropy_gate_score(&draft_with(&[4f64.ln()], &[0.0])).unwrap();
        assert!((s.value - 4f64.ln()).abs() < EPS);
        let s = entropy_gate_score(&draft_with(&[1.0, 0.5, 0.3], &[0.0; 3])).unwrap();
        assert!((s.value - (1.0 + 0.5 + 0.3) / 3.0).abs() < EPS);
        assert!((s.value - 0.6).abs() < EPS);
        assert_eq!(s.k, 3);
    }

    #[test]
    fn empty_draft_is_rejected() {
        assert!(matches!(
            PrefixDraft::from_stats(vec![]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            PrefixDraft::from_logits(vec![]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn negative_stats_are_rejected() {
        let bad = StepStats {
            entropy_nats: 0.1,
            gap: -0.5,
        };
        assert!(PrefixDraft::from_stats(vec![bad]).is_err());
    }

    #[test]
    fn margin_gate_examples() {
        let s = margin_gate_score(&stats_only_gaps(&[0.0; 5]), 1.0).unwrap();
        assert_eq!(s.value, 1.0);
        let ln2 = 2f64.ln();
        let s = margin_gate_score(&stats_only_gaps(&[ln2; 4]), 1.0).unwrap();
        assert!((s.value - 0.5).abs() < EPS);
        let s = margin_gate_score(&stats_only_gaps(&[0.0, ln2, 4f64.ln()]), 1.0).unwrap();
        let oracle = ((-0.0f64).exp() + (-ln2).exp() + (-(4f64.ln())).exp()) / 3.0;
        assert!((s.value - oracle).abs() < EPS);
        assert!((s.value - 0.583_333_333_333).abs() < 1e-9);
    }

    #[test]
    fn margin_rejects_bad_beta() {
        let d = stats_only_gaps(&[1.0]);
        assert!(matches!(
            margin_gate_score(&d, 0.0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            margin_gate_score(&d, -1.0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn variance_gate_examples() {
        let same = StochasticPrefixSet::new(vec![vec![4, 5, 6]; 3], 0.7).unwrap();
        assert_eq!(variance_gate_score(&same).unwrap().value, 0.0);

        let distinct =
            StochasticPrefixSet::new(vec![vec![1, 2], vec![3, 4], vec![5, 6]], 0.7).unwrap();
        assert!((variance_gate_score(&distinct).unwrap().value - 2.0 / 3.0).abs() < 1e-15);

        // step 1 pattern (a, a, b): mode 2 of 3; step 2 (c, c, c): mode 3 of 3
        let mixed =
            StochasticPrefixSet::new(vec![vec![10, 30], vec![10, 30], vec![20, 30]], 0.7).unwrap();
        let oracle = ((1.0 - 2.0 / 3.0) + (1.0 - 3.0 / 3.0)) / 2.0;
        let v = variance_gate_score(&mixed).unwrap().value;
        assert!((v - oracle).abs() < EPS);
        assert!((v - 1.0 / 6.0).abs() < EPS);
    }

    #[test]
    fn ragged_samples_are_rejected() {
        assert!(matches!(
            StochasticPrefixSet::new(vec![vec![1, 2], vec![1]], 0.7),
            Err(Error::InvalidInput(_))
        ));
        assert!(StochasticPrefixSet::new(vec![vec![1, 2]], 0.7).is_err());
    }

    #[test]
    fn decide_is_strict() {
        let s = |v| GateScore {
            value: v,
            kind: GateKind::Margin,
            k: 1,
        };
        assert!(!decide(&s(0.5), 0.5));
        assert!(decide(&s(0.51), 0.5));
        let ln2 = 2f64.ln();
        let composed = margin_gate_score(&stats_only_gaps(&[ln2; 3]), 1.0).unwrap();
        assert!(decide(&composed, 0.4));
        assert!(decide(&s(-1e300), f64::NEG_INFINITY));
        assert!(!decide(&s(1e300), f64::INFINITY));
    }

    #[test]
    fn raw_rows_must_reproduce_stats() {
        let rows = vec![
            LogitRow::new(vec![2.0, 1.0, 0.0]).unwrap(),
            LogitRow::new(vec![0.0, 0.0]).unwrap(),
        ];
        let from_rows = PrefixDraft::from_logits(rows.clone()).unwrap();
        assert_eq!(from_rows.vocab_size(), Some(3));
        let ok = PrefixDraft::with_rows(from_rows.steps().to_vec(), rows.clone()).unwrap();
        assert_eq!(ok.steps(), from_rows.steps());

        let mut tampered = from_rows.steps().to_vec();
        tampered[1].gap += 1e-6;
        assert!(matches!(
            PrefixDraft::with_rows(tampered, rows),
            Err(Error::DataIntegrity(_))
        ));
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = GateConfig::new(GateKind::Margin, 0.2);
        assert_eq!(c.k, 20);
        assert_eq!(c.beta, 1.0);
        assert_eq!(c.n_samples, 3);
        assert_eq!(c.sample_temperature, 0.7);
        c.validate().unwrap();
        let parsed: GateConfig = toml::from_str("kind = \"variance\"\ntau = 0.3").unwrap();
        assert_eq!(parsed.k, 20);
        assert!(toml::from_str::<GateConfig>("kind = \"margin\"\ntau = 0.3\nbogus = 1").is_err());
        let mut bad = c.clone();
        bad.beta = 0.0;
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        assert!(matches!(
            "nope".parse::<GateKind>(),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn variance_config_requires_samples() {
        let c = GateConfig::new(GateKind::Variance, 0.1);
        let d = stats_only_gaps(&[1.0]);
        assert!(matches!(c.score(&d, None), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn truncation_takes_leading_steps() {
        let d = draft_with(&[1.0, 2.0, 3.0], &[0.1, 0.2, 0.3]);
        let t = d.truncated(2).unwrap();
        assert_eq!(t.k(), 2);
        assert_eq!(t.steps()[1].gap, 0.2);
        assert!(d.truncated(4).is_err());
        assert!(d.truncated(0).is_err());
    }

    #[test]
    fn mean_gap_threshold_matches_bisection_target() {
        let shape = [0.5, -0.5, 0.0];
        let tau = 0.4;
        let mu = mean_gap_threshold(&shape, 1.0, tau).unwrap().unwrap();
        let at = |m: f64| {
            let gaps: Vec<f64> = shape.iter().map(|d| m + d).collect();
            margin_score_from_gaps(&gaps, 1.0).unwrap()
        };
        assert!(at(mu - 1e-9) > tau);
        assert!(at(mu + 1e-9) <= tau);
        // unreachable thresholds
        assert_eq!(mean_gap_threshold(&shape, 1.0, 1.5).unwrap(), None);
        assert_eq!(mean_gap_threshold(&shape, 1.0, -0.1).unwrap(), None);
    }
}

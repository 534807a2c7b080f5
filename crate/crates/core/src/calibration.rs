//! Threshold calibration and the per-query cost model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

/// Threshold returned for a full retrieval budget: every finite score
/// exceeds it.
pub const ALWAYS_RETRIEVE: f64 = f64::NEG_INFINITY;

/// Gate scores from a development split, kept sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSample {
    sorted: Vec<f64>,
}

impl ScoreSample {
    pub fn new(mut scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidInput("score sample is empty".into()));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite score {bad}")));
        }
        scores.sort_by(f64::total_cmp);
        Ok(Self { sorted: scores })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Number of scores strictly above `tau`.
    pub fn count_above(&self, tau: f64) -> usize {
        self.sorted.len() - self.sorted.partition_point(|&s| s <= tau)
    }
}

/// Fraction of scores strictly above `tau`.
pub fn realized_rate(sample: &ScoreSample, tau: f64) -> f64 {
    sample.count_above(tau) as f64 / sample.len() as f64
}

/// Threshold hitting a retrieval budget `rho` on the sample.
///
/// Picks the lower empirical quantile at `1 - rho`: the realized rate of the
/// returned threshold never exceeds `rho`, and is the largest rate at or
/// below `rho` that any threshold can achieve on this sample. `rho = 0`
/// returns the maximum score; `rho = 1` returns [`ALWAYS_RETRIEVE`].
pub fn quantile_threshold(sample: &ScoreSample, rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!(
            "retrieval budget must lie in [0, 1], got {rho}"
        )));
    }
    let n = sample.len();
    let fits = |m: usize| (m as f64) / (n as f64) <= rho;
    let mut m = ((rho * n as f64).floor() as usize).min(n);
    while m < n && fits(m + 1) {
        m += 1;
    }
    while m > 0 && !fits(m) {
        m -= 1;
    }
    if m == n {
        return Ok(ALWAYS_RETRIEVE);
    }
    Ok(sample.sorted[n - m - 1])
}

/// One development example: score plus correctness without and with
/// retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevRecord {
    pub u: f64,
    pub a0: f64,
    pub a1: f64,
}

impl DevRecord {
    pub fn new(u: f64, a0: f64, a1: f64) -> Result<Self> {
        let rec = Self { u, a0, a1 };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.u.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite score {}", self.u)));
        }
        for (name, v) in [("a0", self.a0), ("a1", self.a1)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Retrieval benefit `a1 - a0`.
    pub fn delta(&self) -> f64 {
        self.a1 - self.a0
    }
}

/// Mean dev accuracy of the gated policy at `tau`.
pub fn gated_accuracy(dev: &[DevRecord], tau: f64) -> f64 {
    let per: Vec<f64> = dev
        .iter()
        .map(|r| if r.u > tau { r.a1 } else { r.a0 })
        .collect();
    pairwise_sum(&per) / dev.len() as f64
}

/// Grid threshold maximizing dev accuracy. Ties go to the larger threshold
/// (fewer retrievals).
pub fn accuracy_opt_threshold(dev: &[DevRecord], grid: &[f64]) -> Result<f64> {
    if dev.is_empty() {
        return Err(Error::InvalidInput("empty dev set".into()));
    }
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty threshold grid".into()));
    }
    if grid.iter().any(|t| t.is_nan()) {
        return Err(Error::InvalidInput("NaN in threshold grid".into()));
    }
    for r in dev {
        r.validate()?;
    }
    let mut best: Option<(f64, f64)> = None;
    for &tau in grid {
        let acc = gated_accuracy(dev, tau);
        best = match best {
            None => Some((tau, acc)),
            Some((bt, ba)) if acc > ba || (acc == ba && tau > bt) => Some((tau, acc)),
            keep => keep,
        };
    }
    Ok(best.map(|(t, _)| t).expect("grid is non-empty"))
}

/// Token and latency parameters of the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    /// Draft tokens, always paid.
    pub t_draft: f64,
    /// Context tokens added when retrieving.
    pub t_ctx: f64,
    /// Expected output tokens without retrieval.
    pub e_out0: f64,
    /// Expected output tokens with retrieval.
    pub e_out1: f64,
    /// Seconds per processed token.
    #[serde(default)]
    pub per_token_cost: f64,
    /// Fixed seconds per retrieval call.
    #[serde(default)]
    pub retrieval_overhead: f64,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t_draft", self.t_draft),
            ("t_ctx", self.t_ctx),
            ("e_out0", self.e_out0),
            ("e_out1", self.e_out1),
            ("per_token_cost", self.per_token_cost),
            ("retrieval_overhead", self.retrieval_overhead),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Seconds charged per processed token and per retrieval call when turning
/// token counts into simulated latency.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyModel {
    #[serde(default)]
    pub per_token_cost: f64,
    #[serde(default)]
    pub retrieval_overhead: f64,
}

impl LatencyModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("per_token_cost", self.per_token_cost),
            ("retrieval_overhead", self.retrieval_overhead),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Simulated seconds for a query that processed `tokens` tokens and made
    /// `retrievals` retrieval calls.
    pub fn seconds(&self, tokens: usize, retrievals: usize) -> f64 {
        self.per_token_cost * tokens as f64 + self.retrieval_overhead * retrievals as f64
    }
}

/// Expected LM tokens per query at retrieval rate `pi`.
pub fn expected_tokens(params: &CostParams, pi: f64) -> f64 {
    params.t_draft + (1.0 - pi) * params.e_out0 + pi * (params.t_ctx + params.e_out1)
}

/// Expected added seconds per query over the never-retrieve baseline.
///
/// Draft decode, plus (at rate `pi`) the retrieval call and the extra
/// decode work of the longer-context branch.
pub fn delta_latency(params: &CostParams, pi: f64) -> f64 {
    let c = params.per_token_cost;
    c * params.t_draft
        + pi * (params.retrieval_overhead + c * (params.t_ctx + params.e_out1 - params.e_out0))
}

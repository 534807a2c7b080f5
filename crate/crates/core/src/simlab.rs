//! Synthetic `(U, A0, A1)` populations for checking the gate's accuracy and
//! budget guarantees.
//!
//! The dominance checks work on realized populations with exact finite
//! sums, so they hold (or fail) for the population at hand rather than in
//! expectation. Monte Carlo is only used by the budget-consistency
//! experiment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{quantile_threshold, realized_rate, ScoreSample};
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::report::Table;

/// Tolerance for comparisons between realized population means.
pub const EXACT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScoreDistribution {
    Uniform { lo: f64, hi: f64 },
    PointMass { value: f64 },
    Normal { mean: f64, std: f64 },
    Beta { alpha: f64, beta: f64 },
}

impl ScoreDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScoreDistribution::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            ScoreDistribution::PointMass { value } => value.is_finite(),
            ScoreDistribution::Normal { mean, std } => mean.is_finite() && std.is_finite() && std > 0.0,
            ScoreDistribution::Beta { alpha, beta } => alpha > 0.0 && beta > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid score distribution {self:?}")))
        }
    }

    /// Whether the distribution has atoms (which break quantile targeting).
    pub fn has_atoms(&self) -> bool {
        matches!(self, ScoreDistribution::PointMass { .. })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            ScoreDistribution::Uniform { lo, hi } => rng.random_range(lo..hi),
            ScoreDistribution::PointMass { value } => value,
            ScoreDistribution::Normal { mean, std } => Normal::new(mean, std)
                .expect("validated normal")
                .sample(rng),
            ScoreDistribution::Beta { alpha, beta } => Beta::new(alpha, beta)
                .expect("validated beta")
                .sample(rng),
        }
    }
}

/// Distribution of the retrieval benefit `A1 - A0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeltaDistribution {
    PointMass { value: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `high` with probability `p_high`, otherwise `low`.
    TwoPoint { low: f64, high: f64, p_high: f64 },
}

impl DeltaDistribution {
    pub fn mean(&self) -> f64 {
        match *self {
            DeltaDistribution::PointMass { value } => value,
            DeltaDistribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            DeltaDistribution::TwoPoint { low, high, p_high } => {
                (1.0 - p_high) * low + p_high * high
            }
        }
    }

    /// Smallest and largest value the distribution can produce.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            DeltaDistribution::PointMass { value } => (value, value),
            DeltaDistribution::Uniform { lo, hi } => (lo, hi),
            DeltaDistribution::TwoPoint { low, high, p_high } => {
                if p_high <= 0.0 {
                    (low, low)
                } else if p_high >= 1.0 {
                    (high, high)
                } else {
                    (low.min(high), low.max(high))
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            DeltaDistribution::PointMass { value } => value.is_finite(),
            DeltaDistribution::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            DeltaDistribution::TwoPoint { low, high, p_high } => {
                low.is_finite() && high.is_finite() && (0.0..=1.0).contains(&p_high)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid delta distribution {self:?}")))
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            DeltaDistribution::PointMass { value } => value,
            DeltaDistribution::Uniform { lo, hi } => rng.random_range(lo..hi),
            DeltaDistribution::TwoPoint { low, high, p_high } => {
                if rng.random_bool(p_high) {
                    high
                } else {
                    low
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub n: usize,
    pub tau_star: f64,
    pub u: ScoreDistribution,
    /// Benefit for queries with `u <= tau_star`; mean must be <= 0.
    pub delta_low: DeltaDistribution,
    /// Benefit for queries with `u > tau_star`; mean must be >= 0.
    pub delta_high: DeltaDistribution,
    /// Correctness without retrieval, shared by every record.
    pub a0_base: f64,
    pub seed: u64,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("population size must be >= 1".into()));
        }
        if !self.tau_star.is_finite() {
            return Err(Error::InvalidConfig("tau_star must be finite".into()));
        }
        self.u.validate()?;
        self.delta_low.validate()?;
        self.delta_high.validate()?;
        if !(0.0..=1.0).contains(&self.a0_base) {
            return Err(Error::InvalidConfig(format!(
                "a0_base = {} outside [0, 1]",
                self.a0_base
            )));
        }
        if self.delta_low.mean() > 0.0 {
            return Err(Error::InvalidConfig(
                "delta_low must have a non-positive mean".into(),
            ));
        }
        if self.delta_high.mean() < 0.0 {
            return Err(Error::InvalidConfig(
                "delta_high must have a non-negative mean".into(),
            ));
        }
        // Benefits that would push a1 outside [0, 1] would be clipped and
        // silently change the configured means.
        let (floor, ceil) = (-self.a0_base, 1.0 - self.a0_base);
        for (name, d) in [("delta_low", self.delta_low), ("delta_high", self.delta_high)] {
            let (lo, hi) = d.support();
            if lo < floor - EXACT_TOLERANCE || hi > ceil + EXACT_TOLERANCE {
                return Err(Error::InvalidConfig(format!(
                    "{name} support [{lo}, {hi}] infeasible with a0_base = {}: a1 must stay in [0, 1]",
                    self.a0_base
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationRecord {
    pub u: f64,
    pub a0: f64,
    pub a1: f64,
}

impl PopulationRecord {
    pub fn delta(&self) -> f64 {
        self.a1 - self.a0
    }
}

/// Draw a population. Deterministic for a fixed seed.
pub fn generate(spec: &PopulationSpec) -> Result<Vec<PopulationRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..spec.n)
        .map(|_| {
            let u = spec.u.sample(&mut rng);
            let delta = if u <= spec.tau_star {
                spec.delta_low.sample(&mut rng)
            } else {
                spec.delta_high.sample(&mut rng)
            };
            let a0 = spec.a0_base;
            PopulationRecord {
                u,
                a0,
                a1: (a0 + delta).clamp(0.0, 1.0),
            }
        })
        .collect())
}

/// Realized conditional mean of the benefit on each side of `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMeans {
    pub below: Option<f64>,
    pub above: Option<f64>,
    pub n_below: usize,
    pub n_above: usize,
}

pub fn conditional_means(pop: &[PopulationRecord], tau: f64) -> ConditionalMeans {
    let below: Vec<f64> = pop.iter().filter(|r| r.u <= tau).map(|r| r.delta()).collect();
    let above: Vec<f64> = pop.iter().filter(|r| r.u > tau).map(|r| r.delta()).collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| pairwise_sum(v) / v.len() as f64);
    ConditionalMeans {
        below: mean(&below),
        above: mean(&above),
        n_below: below.len(),
        n_above: above.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyAccuracy {
    pub never: f64,
    pub always: f64,
    pub gate: f64,
    /// Fraction retrieved by the gate.
    pub pi: f64,
}

fn mean_of(pop: &[PopulationRecord], f: impl Fn(&PopulationRecord) -> f64) -> f64 {
    let v: Vec<f64> = pop.iter().map(f).collect();
    pairwise_sum(&v) / v.len() as f64
}

/// Exact means over the population. The gate's accuracy is
/// `mean(a0) + mean(delta * 1{u > tau})`.
pub fn evaluate_policies(pop: &[PopulationRecord], tau: f64) -> Result<PolicyAccuracy> {
    if pop.is_empty() {
        return Err(Error::InvalidInput("empty population".into()));
    }
    let never = mean_of(pop, |r| r.a0);
    let always = mean_of(pop, |r| r.a1);
    let gain = mean_of(pop, |r| if r.u > tau { r.delta() } else { 0.0 });
    let retrieved = pop.iter().filter(|r| r.u > tau).count();
    Ok(PolicyAccuracy {
        never,
        always,
        gate: never + gain,
        pi: retrieved as f64 / pop.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Holds,
    Violated,
    PreconditionUnmet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    /// `never` or `always`.
    pub baseline: String,
    pub tau_star: f64,
    pub status: CheckStatus,
    pub acc_gate: f64,
    pub acc_baseline: f64,
    /// `acc_gate - acc_baseline`.
    pub margin: f64,
    pub note: String,
}

/// Gate at `tau_star` versus never-retrieve, given a non-negative realized
/// mean benefit above `tau_star`.
pub fn check_weak_dominance(pop: &[PopulationRecord], tau_star: f64) -> Result<DominanceReport> {
    let acc = evaluate_policies(pop, tau_star)?;
    let cond = conditional_means(pop, tau_star);
    let met = cond.above.is_none_or(|m| m >= 0.0);
    Ok(report(
        "never",
        tau_star,
        met,
        acc.gate,
        acc.never,
        format!("mean benefit above tau*: {:?} over {} records", cond.above, cond.n_above),
    ))
}

/// Gate at `tau_star` versus always-retrieve, given a benefit that is
/// non-positive for every record at or below `tau_star`.
pub fn check_always_dominance(
    pop: &[PopulationRecord],
    tau_star: f64,
) -> Result<DominanceReport> {
    let acc = evaluate_policies(pop, tau_star)?;
    let met = pop.iter().filter(|r| r.u <= tau_star).all(|r| r.delta() <= 0.0);
    let below = pop.iter().filter(|r| r.u <= tau_star).count();
    Ok(report(
        "always",
        tau_star,
        met,
        acc.gate,
        acc.always,
        format!("{below} records at or below tau*, benefit <= 0 on all: {met}"),
    ))
}

fn report(
    baseline: &str,
    tau_star: f64,
    precondition: bool,
    acc_gate: f64,
    acc_baseline: f64,
    note: String,
) -> DominanceReport {
    let margin = acc_gate - acc_baseline;
    let status = if !precondition {
        CheckStatus::PreconditionUnmet
    } else if margin >= -EXACT_TOLERANCE {
        CheckStatus::Holds
    } else {
        CheckStatus::Violated
    };
    DominanceReport {
        baseline: baseline.to_string(),
        tau_star,
        status,
        acc_gate,
        acc_baseline,
        margin,
        note,
    }
}

/// Residuals of the two accounting identities behind the dominance
/// results: `gate - never = mean(delta 1{u > tau})` and
/// `gate - always = -mean(delta 1{u <= tau})`.
pub fn identity_residuals(pop: &[PopulationRecord], tau: f64) -> Result<(f64, f64)> {
    let acc = evaluate_policies(pop, tau)?;
    let above = mean_of(pop, |r| if r.u > tau { r.delta() } else { 0.0 });
    let below = mean_of(pop, |r| if r.u <= tau { r.delta() } else { 0.0 });
    Ok((
        (acc.gate - acc.never) - above,
        (acc.gate - acc.always) + below,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetExperiment {
    pub u: ScoreDistribution,
    pub rho: Vec<f64>,
    pub n_calib: usize,
    pub n_eval: usize,
    pub trials: usize,
    pub seed: u64,
    /// Allowed `|realized - rho|` per trial.
    #[serde(default = "default_budget_tolerance")]
    pub tolerance: f64,
    /// Fraction of trials that must land within tolerance.
    #[serde(default = "default_min_pass_fraction")]
    pub min_pass_fraction: f64,
}

fn default_budget_tolerance() -> f64 {
    0.02
}

fn default_min_pass_fraction() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub rho: f64,
    pub trials: usize,
    pub within_tolerance: usize,
    pub max_abs_error: f64,
    pub mean_realized: f64,
    pub pass: bool,
    /// Set when the score distribution has atoms: realized rates then jump
    /// in steps and cannot track arbitrary budgets.
    pub pathological: bool,
}

/// Seed of trial `trial` for budget `rho_index`, derived from the master seed.
fn trial_seed(master: u64, rho_index: usize, trial: usize) -> u64 {
    let mut z = master
        ^ (rho_index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (trial as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Calibrate on fresh draws, measure the realized rate on independent fresh
/// draws, and summarize how closely it tracks each budget.
pub fn check_budget_consistency(exp: &BudgetExperiment) -> Result<Vec<BudgetRow>> {
    exp.u.validate()?;
    if exp.n_calib == 0 || exp.n_eval == 0 || exp.trials == 0 {
        return Err(Error::InvalidConfig(
            "n_calib, n_eval and trials must be >= 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&exp.min_pass_fraction) || exp.tolerance.is_nan() || exp.tolerance < 0.0 {
        return Err(Error::InvalidConfig("bad tolerance settings".into()));
    }
    exp.rho
        .iter()
        .enumerate()
        .map(|(ri, &rho)| {
            let realized: Vec<f64> = (0..exp.trials)
                .into_par_iter()
                .map(|t| -> Result<f64> {
                    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(exp.seed, ri, t));
                    let calib = ScoreSample::new(
                        (0..exp.n_calib).map(|_| exp.u.sample(&mut rng)).collect(),
                    )?;
                    // A zero budget is the never-retrieve policy. The sample
                    // maximum would still let fresh draws above it through.
                    let tau = if rho == 0.0 {
                        f64::INFINITY
                    } else {
                        quantile_threshold(&calib, rho)?
                    };
                    let eval = ScoreSample::new(
                        (0..exp.n_eval).map(|_| exp.u.sample(&mut rng)).collect(),
                    )?;
                    Ok(realized_rate(&eval, tau))
                })
                .collect::<Result<_>>()?;
            let errors: Vec<f64> = realized.iter().map(|p| (p - rho).abs()).collect();
            let within = errors.iter().filter(|e| **e <= exp.tolerance).count();
            Ok(BudgetRow {
                rho,
                trials: exp.trials,
                within_tolerance: within,
                max_abs_error: errors.iter().copied().fold(0.0, f64::max),
                mean_realized: pairwise_sum(&realized) / realized.len() as f64,
                pass: within as f64 >= exp.min_pass_fraction * exp.trials as f64,
                pathological: exp.u.has_atoms(),
            })
        })
        .collect()
}

pub fn dominance_table(reports: &[DominanceReport]) -> Table {
    let mut t = Table::new(["baseline", "tau_star", "status", "acc_gate", "acc_baseline", "margin"]);
    for r in reports {
        t.push(vec![
            r.baseline.clone(),
            r.tau_star.to_string(),
            format!("{:?}", r.status).to_lowercase(),
            r.acc_gate.to_string(),
            r.acc_baseline.to_string(),
            r.margin.to_string(),
        ]);
    }
    t
}

pub fn budget_table(rows: &[BudgetRow]) -> Table {
    let mut t = Table::new([
        "rho",
        "trials",
        "within_tolerance",
        "max_abs_error",
        "mean_realized",
        "pass",
        "pathological",
    ]);
    for r in rows {
        t.push(vec![
            r.rho.to_string(),
            r.trials.to_string(),
            r.within_tolerance.to_string(),
            r.max_abs_error.to_string(),
            r.mean_realized.to_string(),
            r.pass.to_string(),
            r.pathological.to_string(),
        ]);
    }
    t
}

//! Batch commands behind the `targ` binary.
//!
//! Each command takes typed arguments, does its own file I/O and returns a
//! typed result, so the binary only parses flags and maps errors to exit
//! codes. Scoring, running and sweeping parallelize over queries; the
//! budget simulation parallelizes over trials. Outputs do not depend on the
//! thread count.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibration::{accuracy_opt_threshold, gated_accuracy, quantile_threshold, realized_rate, DevRecord, ScoreSample};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{baseline_rows, sweep, MetricRow};
use crate::gate::GateConfig;
use crate::io::{read_jsonl, read_text, write_jsonl, write_text};
use crate::pipeline::{collect_branches, run_dataset, score_query, DatasetRun, RunSettings, TraceReplayGenerator};
use crate::report::{ReportFormat, Table};
use crate::retrieval::{
    chunk_corpus, format_context, normalize, Article, ChunkConfig, ContextBlock, DenseRetriever,
    EmbeddingIndex, EmbeddingSet, PassageStore, SearchHit,
};
use crate::simlab::{
    budget_table, check_always_dominance, check_budget_consistency, check_weak_dominance,
    dominance_table, generate, identity_residuals, BudgetExperiment, BudgetRow, CheckStatus,
    DominanceReport, PopulationSpec, EXACT_TOLERANCE,
};

/// Parse a threshold grid: comma-separated items, each a number (`inf` and
/// `-inf` allowed) or an inclusive range `start:stop:step`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = |what: &str| Error::InvalidConfig(format!("bad grid '{text}': {what}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(s.trim()));
    let mut grid = Vec::new();
    for item in text.split(',').filter(|s| !s.trim().is_empty()) {
        if !item.contains(':') {
            grid.push(num(item)?);
            continue;
        }
        let parts: Vec<&str> = item.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step"));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(start.is_finite() && stop.is_finite() && step.is_finite() && step > 0.0 && stop >= start)
        {
            return Err(bad("need finite start <= stop and step > 0"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // Rounded to 12 decimals so `0:1:0.1` yields 0.3, not 0.30000000000000004.
        grid.extend((0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12));
    }
    if grid.is_empty() {
        return Err(bad("no thresholds"));
    }
    if grid.iter().any(|t| t.is_nan()) {
        return Err(bad("NaN threshold"));
    }
    Ok(grid)
}

/// Parse a comma-separated vector.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad vector component '{}'", s.trim())))
        })
        .collect()
}

pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Invariant(format!("csv serialization: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Invariant(format!("csv serialization: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Invariant(e.to_string()))
}

pub fn parse_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::Format(format!("row {}: {e}", i + 1))))
        .collect()
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    parse_csv(&read_text(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

// ---------------------------------------------------------------- score

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub query_id: String,
    pub score: f64,
}

/// Score every trace record with `gate`. Output keeps trace order.
pub fn cmd_score(trace: &Path, gate: &GateConfig, seed: u64) -> Result<Vec<ScoreLine>> {
    gate.validate()?;
    let generator = TraceReplayGenerator::load(trace)?;
    let settings = RunSettings {
        seed,
        ..RunSettings::gated(gate.clone())
    };
    generator
        .queries()
        .par_iter()
        .map(|q| {
            let score = score_query(q, &settings, &generator).map_err(|e| Error::Query {
                query_id: q.id.clone(),
                source: Box::new(e),
            })?;
            Ok(ScoreLine {
                query_id: q.id.clone(),
                score,
            })
        })
        .collect()
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreLine>> {
    read_csv(path)
}

// ------------------------------------------------------------ calibrate

/// One row of a dev file: gate score plus correctness on each branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevLine {
    pub query_id: String,
    pub score: f64,
    pub a0: f64,
    pub a1: f64,
}

pub fn read_dev(path: &Path) -> Result<Vec<DevLine>> {
    read_csv(path)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CalibrateInput {
    /// Hit a retrieval budget `rho` on the given scores.
    Budget { scores: PathBuf, rho: f64 },
    /// Maximize dev accuracy over a grid.
    Accuracy { dev: PathBuf, grid: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMethod {
    Budget,
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub method: CalibrationMethod,
    pub tau: f64,
    pub n: usize,
    /// Retrieval rate of `tau` on the calibration scores.
    pub retrieval_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_accuracy: Option<f64>,
}

impl Calibration {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Invariant(format!("toml serialization: {e}")))
    }
}

pub fn cmd_calibrate(input: &CalibrateInput) -> Result<Calibration> {
    match input {
        CalibrateInput::Budget { scores, rho } => {
            let lines = read_scores(scores)?;
            let sample = ScoreSample::new(lines.iter().map(|l| l.score).collect())?;
            let tau = quantile_threshold(&sample, *rho)?;
            Ok(Calibration {
                method: CalibrationMethod::Budget,
                tau,
                n: sample.len(),
                retrieval_rate: realized_rate(&sample, tau),
                rho: Some(*rho),
                dev_accuracy: None,
            })
        }
        CalibrateInput::Accuracy { dev, grid } => {
            let lines = read_dev(dev)?;
            let records = lines
                .iter()
                .map(|l| {
                    DevRecord::new(l.score, l.a0, l.a1).map_err(|e| {
                        Error::DataIntegrity(format!("dev row {}: {e}", l.query_id))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let tau = accuracy_opt_threshold(&records, grid)?;
            let sample = ScoreSample::new(records.iter().map(|r| r.u).collect())?;
            Ok(Calibration {
                method: CalibrationMethod::Accuracy,
                tau,
                n: records.len(),
                retrieval_rate: realized_rate(&sample, tau),
                rho: None,
                dev_accuracy: Some(gated_accuracy(&records, tau)),
            })
        }
    }
}

// ---------------------------------------------------------------- index

/// Chunk a JSONL corpus of articles into a JSONL passage file.
pub fn cmd_index_chunk(corpus: &Path, out: &Path, config: &ChunkConfig) -> Result<usize> {
    let articles: Vec<Article> = read_jsonl(corpus)?;
    let passages = chunk_corpus(&articles, config, 0)?;
    write_jsonl(out, &passages)?;
    Ok(passages.len())
}

/// Normalize an embedding file and write the searchable index.
pub fn cmd_index_build(embeddings: &Path, out: &Path) -> Result<EmbeddingIndex> {
    let index = EmbeddingSet::load(embeddings)?.into_index()?;
    index.save(out)?;
    Ok(index)
}

pub fn cmd_index_search(index: &Path, query: &[f64], top_k: usize) -> Result<Vec<SearchHit>> {
    let index = EmbeddingIndex::load(index)?;
    index.search(&normalize(query)?, top_k)
}

/// Search and render the hits as a budgeted context block.
pub fn cmd_index_context(
    index: &Path,
    passages: &Path,
    query: &[f64],
    top_k: usize,
    budget: usize,
) -> Result<ContextBlock> {
    let hits = cmd_index_search(index, query, top_k)?;
    let store = PassageStore::new(read_jsonl(passages)?)?;
    format_context(&hits, &store, budget)
}

// ------------------------------------------------------------ run/sweep

/// Trace replay generator and dense retriever named by a run config.
pub fn load_inputs(config: &RunConfig) -> Result<(TraceReplayGenerator, DenseRetriever)> {
    let generator = TraceReplayGenerator::load(&config.trace)?;
    let index = EmbeddingIndex::load(&config.retrieval.index)?;
    let passages = PassageStore::new(read_jsonl(&config.retrieval.passages)?)?;
    Ok((generator, DenseRetriever::new(index, passages)?))
}

pub const RECORDS_FILE: &str = "records.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

/// Run the configured policy over the trace and write records, failures,
/// summary and the resolved config into `output_dir`.
pub fn cmd_run(config: &RunConfig) -> Result<DatasetRun> {
    config.validate()?;
    let (generator, retriever) = load_inputs(config)?;
    let run = run_dataset(&generator.queries(), &config.settings(), &generator, &retriever)?;
    let dir = &config.output_dir;
    write_jsonl(dir.join(RECORDS_FILE), &run.records)?;
    write_jsonl(dir.join(FAILURES_FILE), &run.failures)?;
    let summary = serde_json::to_string_pretty(&run.summary)
        .map_err(|e| Error::Invariant(format!("summary serialization: {e}")))?;
    write_text(dir.join(SUMMARY_FILE), &(summary + "\n"))?;
    config.write_resolved(dir.join(RESOLVED_CONFIG_FILE))?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    /// Never/always baselines followed by one gated row per threshold.
    pub rows: Vec<MetricRow>,
    /// Per-query score and exact-match on each branch, usable as a dev file.
    pub dev: Vec<DevLine>,
}

pub fn cmd_sweep(config: &RunConfig, grid: &[f64]) -> Result<SweepOutput> {
    config.validate()?;
    let (generator, retriever) = load_inputs(config)?;
    let branches = collect_branches(&generator.queries(), &config.settings(), &generator, &retriever)?;
    let mut rows = baseline_rows(&branches, &config.cost).to_vec();
    rows.extend(sweep(&branches, config.gate.kind.as_str(), grid, &config.cost)?);
    let dev = branches
        .iter()
        .map(|b| DevLine {
            query_id: b.query_id.clone(),
            score: b.score,
            a0: b.never.em,
            a1: b.always.em,
        })
        .collect();
    Ok(SweepOutput { rows, dev })
}

// ------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default)]
    pub population: Vec<PopulationSpec>,
    #[serde(default)]
    pub budget: Option<BudgetExperiment>,
}

impl SimulationSpec {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub population: usize,
    pub tau: f64,
    /// `(gate - never) - mean(delta 1{u > tau})`.
    pub never_residual: f64,
    /// `(gate - always) + mean(delta 1{u <= tau})`.
    pub always_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimulationReport {
    pub dominance: Vec<DominanceReport>,
    pub identities: Vec<IdentityRow>,
    pub budget: Vec<BudgetRow>,
}

impl SimulationReport {
    /// Human-readable descriptions of every failed check. Budget rows on
    /// distributions with atoms are expected to miss and are not counted.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for d in &self.dominance {
            if d.status == CheckStatus::Violated {
                out.push(format!(
                    "gate does not dominate {} at tau*={} (margin {})",
                    d.baseline, d.tau_star, d.margin
                ));
            }
        }
        for r in &self.identities {
            if r.never_residual.abs() > EXACT_TOLERANCE || r.always_residual.abs() > EXACT_TOLERANCE {
                out.push(format!(
                    "accounting identity off in population {} (residuals {}, {})",
                    r.population, r.never_residual, r.always_residual
                ));
            }
        }
        for b in &self.budget {
            if !b.pass && !b.pathological {
                out.push(format!(
                    "budget {} hit in {}/{} trials",
                    b.rho, b.within_tolerance, b.trials
                ));
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invariant(v.join("; ")))
        }
    }

    pub fn render(&self, format: ReportFormat) -> String {
        let mut identities = Table::new(["population", "tau", "never_residual", "always_residual"]);
        for r in &self.identities {
            identities.push(vec![
                r.population.to_string(),
                r.tau.to_string(),
                r.never_residual.to_string(),
                r.always_residual.to_string(),
            ]);
        }
        let sections = [
            ("dominance", dominance_table(&self.dominance)),
            ("identities", identities),
            ("budget", budget_table(&self.budget)),
        ];
        sections
            .iter()
            .filter(|(_, t)| !t.rows.is_empty())
            .map(|(name, t)| match format {
                ReportFormat::Md => format!("## {name}\n\n{}", t.render(format)),
                ReportFormat::Csv => format!("# {name}\n{}", t.render(format)),
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn cmd_simulate(spec: &SimulationSpec) -> Result<SimulationReport> {
    let mut report = SimulationReport::default();
    for (i, p) in spec.population.iter().enumerate() {
        let pop = generate(p)?;
        report.dominance.push(check_weak_dominance(&pop, p.tau_star)?);
        report.dominance.push(check_always_dominance(&pop, p.tau_star)?);
        let (never_residual, always_residual) = identity_residuals(&pop, p.tau_star)?;
        report.identities.push(IdentityRow {
            population: i,
            tau: p.tau_star,
            never_residual,
            always_residual,
        });
    }
    if let Some(b) = &spec.budget {
        report.budget = check_budget_consistency(b)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0.1, 0.2,inf").unwrap(), vec![0.1, 0.2, f64::INFINITY]);
        assert_eq!(parse_grid("-inf").unwrap(), vec![f64::NEG_INFINITY]);
        let r = parse_grid("0:1:0.25").unwrap();
        assert_eq!(r, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_grid("0:0.9:0.1").unwrap().len(), 10);
        assert_eq!(
            parse_grid("-inf,0:0.5:0.25,inf").unwrap(),
            vec![f64::NEG_INFINITY, 0.0, 0.25, 0.5, f64::INFINITY]
        );
        for bad in ["", "a,b", "1:0:0.1", "0:1", "0:1:0", "nan"] {
            assert!(matches!(parse_grid(bad), Err(Error::InvalidConfig(_))), "{bad}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            ScoreLine { query_id: "a".into(), score: 0.125 },
            ScoreLine { query_id: "b,c".into(), score: 1.0 },
        ];
        let text = csv_string(&rows).unwrap();
        assert!(text.starts_with("query_id,score\n"));
        assert_eq!(parse_csv::<ScoreLine>(&text).unwrap(), rows);
        assert!(matches!(
            parse_csv::<ScoreLine>("query_id,score\nx,notanumber\n"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn calibration_toml_keeps_infinite_tau() {
        let c = Calibration {
            method: CalibrationMethod::Budget,
            tau: f64::NEG_INFINITY,
            n: 4,
            retrieval_rate: 1.0,
            rho: Some(1.0),
            dev_accuracy: None,
        };
        let back: Calibration = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }
}

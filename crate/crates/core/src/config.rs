//! Declarative run configuration (TOML) plus command-line overrides.
//!
//! ```toml
//! seed = 7
//! policy = "gated"            # never | always | gated
//! trace = "trace.jsonl"
//! output_dir = "out"
//!
//! [gate]
//! kind = "margin"
//! tau = 0.2
//! k = 20
//!
//! [retrieval]
//! index = "index.bin"
//! passages = "passages.jsonl"
//! top_k = 5
//! ctx_budget = 512
//!
//! [cost]
//! per_token_cost = 0.001
//! retrieval_overhead = 0.05
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::LatencyModel;
use crate::error::{Error, Result};
use crate::gate::{GateConfig, GateKind};
use crate::io::{read_text, write_text};
use crate::pipeline::{Policy, PromptTemplate, RunSettings};

fn default_top_k() -> usize {
    5
}

fn default_ctx_budget() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    pub index: PathBuf,
    pub passages: PathBuf,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_ctx_budget")]
    pub ctx_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub policy: Policy,
    pub trace: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub prompt_template: PromptTemplate,
    pub gate: GateConfig,
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub cost: LatencyModel,
}

/// Flag-level overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub policy: Option<Policy>,
    pub gate: Option<GateKind>,
    pub k: Option<usize>,
    pub beta: Option<f64>,
    pub n_samples: Option<usize>,
    pub temperature: Option<f64>,
    pub tau: Option<f64>,
    pub top_k: Option<usize>,
    pub ctx_budget: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.resolve_paths(base_dir)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_text(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, dir).map_err(|e| match e {
            Error::InvalidConfig(msg) => {
                Error::InvalidConfig(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    fn resolve_paths(&mut self, base_dir: &Path) -> Result<()> {
        let resolve = |p: &Path| -> Result<PathBuf> {
            let joined = if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            };
            std::path::absolute(&joined).map_err(|e| Error::io(&joined, e))
        };
        self.trace = resolve(&self.trace)?;
        self.output_dir = resolve(&self.output_dir)?;
        self.retrieval.index = resolve(&self.retrieval.index)?;
        self.retrieval.passages = resolve(&self.retrieval.passages)?;
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = o.policy {
            self.policy = v;
        }
        if let Some(v) = o.gate {
            self.gate.kind = v;
        }
        if let Some(v) = o.k {
            self.gate.k = v;
        }
        if let Some(v) = o.beta {
            self.gate.beta = v;
        }
        if let Some(v) = o.n_samples {
            self.gate.n_samples = v;
        }
        if let Some(v) = o.temperature {
            self.gate.sample_temperature = v;
        }
        if let Some(v) = o.tau {
            self.gate.tau = v;
        }
        if let Some(v) = o.top_k {
            self.retrieval.top_k = v;
        }
        if let Some(v) = o.ctx_budget {
            self.retrieval.ctx_budget = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = std::path::absolute(v).map_err(|e| Error::io(v, e))?;
        }
        Ok(())
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            policy: self.policy,
            gate: self.gate.clone(),
            top_k: self.retrieval.top_k,
            ctx_budget: self.retrieval.ctx_budget,
            template: self.prompt_template.clone(),
            latency: self.cost,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.settings().validate()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Invariant(format!("config serialization: {e}")))
    }

    /// Write the fully resolved config (absolute paths, overrides applied).
    pub fn write_resolved(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path, &self.to_toml()?)
    }
}

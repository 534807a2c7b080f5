#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use targ::commands::load_inputs;
use targ::config::RunConfig;
use targ::pipeline::{TraceReplayGenerator, TraceRecord};
use targ::retrieval::{count_tokens, ContextBlock, DenseRetriever, Retriever};
use targ::Result;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_config() -> RunConfig {
    RunConfig::load(fixture_dir().join("run.toml")).expect("bundled run config")
}

pub fn fixture_inputs() -> (RunConfig, TraceReplayGenerator, DenseRetriever) {
    let config = fixture_config();
    let (generator, retriever) = load_inputs(&config).expect("bundled fixture");
    (config, generator, retriever)
}

pub fn fixture_traces() -> Vec<TraceRecord> {
    let text = std::fs::read_to_string(fixture_dir().join("trace.jsonl")).unwrap();
    targ::pipeline::parse_traces(&text).unwrap()
}

/// Returns the same context for every query and counts calls.
#[derive(Debug)]
pub struct CountingRetriever {
    pub text: String,
    pub calls: AtomicUsize,
}

impl CountingRetriever {
    pub fn new(text: &str) -> Self {
        Self {
            text: text.to_string(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Retriever for CountingRetriever {
    fn retrieve(&self, _q: &[f64], _top_k: usize, budget: usize) -> Result<ContextBlock> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let tokens: Vec<&str> = self.text.split_whitespace().take(budget).collect();
        Ok(ContextBlock {
            text: tokens.join(" "),
            token_count: count_tokens(&tokens.join(" ")),
            truncated: tokens.len() < count_tokens(&self.text),
        })
    }
}

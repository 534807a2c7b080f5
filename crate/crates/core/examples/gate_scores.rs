//! Score recorded drafts with the three gates.
//!
//! Shows the gates on hand-made logits first, then on the first queries of
//! the bundled trace.

use std::path::Path;

use targ::gate::{
    decide, entropy_gate_score, margin_gate_score, variance_gate_score, GateConfig, GateKind,
    LogitRow, PrefixDraft, StochasticPrefixSet,
};
use targ::pipeline::TraceReplayGenerator;
use targ::Result;

fn main() -> Result<()> {
    // A confident step and an unsure one.
    let draft = PrefixDraft::from_logits(vec![
        LogitRow::new(vec![6.0, 1.0, 0.5, 0.0])?,
        LogitRow::new(vec![1.1, 1.0, 0.9, 0.0])?,
    ])?;
    println!("entropy gate: {:.4}", entropy_gate_score(&draft)?.value);
    println!("margin gate:  {:.4}", margin_gate_score(&draft, 1.0)?.value);

    let samples = StochasticPrefixSet::new(vec![vec![4, 7], vec![4, 9], vec![4, 2]], 0.7)?;
    println!("variance gate: {:.4}", variance_gate_score(&samples)?.value);

    let trace = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/trace.jsonl");
    let generator = TraceReplayGenerator::load(trace)?;
    println!("\nquery   entropy  margin  variance  retrieve@margin>0.3");
    for record in generator.records().iter().take(8) {
        let draft = PrefixDraft::from_stats(record.steps.clone())?;
        let samples = StochasticPrefixSet::new(record.samples.clone(), 0.7)?;
        let mut scores = Vec::new();
        for kind in [GateKind::Entropy, GateKind::Margin, GateKind::Variance] {
            scores.push(GateConfig::new(kind, 0.3).score(&draft, Some(&samples))?);
        }
        println!(
            "{}  {:7.4}  {:6.4}  {:8.4}  {}",
            record.query_id,
            scores[0].value,
            scores[1].value,
            scores[2].value,
            decide(&scores[1], 0.3)
        );
    }
    Ok(())
}

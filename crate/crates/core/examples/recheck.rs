//! Mid-generation re-check: a query whose draft looks confident skips
//! retrieval, then becomes unsure partway through its answer and retrieves
//! once, continuing from what it has already written.

use targ::gate::{GateConfig, GateKind, StepStats};
use targ::pipeline::{run_query, Query, RunSettings, ScriptedGenerator, ScriptedQuery};
use targ::retrieval::{ContextBlock, Retriever};
use targ::Result;

struct FixedContext;

impl Retriever for FixedContext {
    fn retrieve(&self, _q: &[f64], _top_k: usize, _budget: usize) -> Result<ContextBlock> {
        Ok(ContextBlock {
            text: "[Mount Kalo] Mount Kalo rises 4,102 metres above the plain.".into(),
            token_count: 10,
            truncated: false,
        })
    }
}

fn main() -> Result<()> {
    let stride = 4;
    let confident = StepStats { entropy_nats: 0.0, gap: 5.0 };
    let unsure = StepStats { entropy_nats: 0.0, gap: 0.1 };

    let mut script = ScriptedQuery::with_constant_gap(8, 5.0)
        .answers("it rises about three thousand metres above sea", "4,102 metres");
    // Confident for the first stride, unsure for the second.
    script.output_steps = [vec![confident; stride], vec![unsure; stride]].concat();
    let mut generator = ScriptedGenerator::new();
    generator.insert("q", script);

    let query = Query {
        id: "q".into(),
        question: "How tall is Mount Kalo?".into(),
        gold_answers: vec!["4,102 metres".into()],
        embedding: Some(vec![1.0, 0.0]),
    };
    let mut gate = GateConfig::new(GateKind::Margin, 0.3);
    gate.k = 8;
    gate.recheck_stride = Some(stride);
    let record = run_query(&query, &RunSettings::gated(gate), &generator, &FixedContext)?;

    println!("draft score {:.4}", record.score.unwrap_or(f64::NAN));
    println!("re-check triggered at output token {:?}", record.recheck_at);
    println!("answer {:?}, output tokens {}", record.answer, record.output_tokens);
    for (_, prompt) in generator.generated_prompts() {
        println!("---\n{prompt}");
    }
    Ok(())
}

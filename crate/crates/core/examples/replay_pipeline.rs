//! Replay the bundled trace under the never, always and gated policies.

use std::path::Path;

use targ::config::RunConfig;
use targ::commands::load_inputs;
use targ::pipeline::{run_dataset, Policy};
use targ::Result;

fn main() -> Result<()> {
    let config = RunConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/run.toml"))?;
    let (generator, retriever) = load_inputs(&config)?;
    let queries = generator.queries();
    let settings = config.settings();

    println!("policy  EM     F1     rate   tokens  added latency (s)");
    for policy in [Policy::Never, Policy::Always, Policy::Gated] {
        let run = run_dataset(&queries, &settings.with_policy(policy), &generator, &retriever)?;
        let a = &run.summary.aggregate;
        println!(
            "{:<6}  {:5.1}  {:5.1}  {:.3}  {:6.2}  {:.4}",
            policy.as_str(),
            a.em,
            a.f1,
            a.retrieval_rate,
            a.mean_tokens,
            a.mean_delta_latency_s
        );
    }

    let gated = run_dataset(&queries, &settings, &generator, &retriever)?;
    let r = &gated.records[0];
    println!(
        "\n{}: score {:.4} -> retrieved {}, answer {:?} (EM {}, F1 {:.2})",
        r.query_id,
        r.score.unwrap_or(f64::NAN),
        r.retrieved,
        r.answer,
        r.em,
        r.f1
    );
    Ok(())
}

//! Pick thresholds two ways: to hit a retrieval budget, and to maximize
//! accuracy on a dev split. Also prints what the cost model predicts at the
//! chosen operating point.

use std::path::Path;

use targ::calibration::{
    accuracy_opt_threshold, delta_latency, expected_tokens, gated_accuracy, quantile_threshold,
    realized_rate, CostParams, DevRecord, ScoreSample,
};
use targ::config::RunConfig;
use targ::commands::load_inputs;
use targ::pipeline::collect_branches;
use targ::Result;

fn main() -> Result<()> {
    let config = RunConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/run.toml"))?;
    let (generator, retriever) = load_inputs(&config)?;
    let queries = generator.queries();
    let branches = collect_branches(&queries, &config.settings(), &generator, &retriever)?;

    // Even positions calibrate, odd positions check.
    let (dev, test): (Vec<_>, Vec<_>) = branches
        .into_iter()
        .enumerate()
        .partition(|(i, _)| i % 2 == 0);
    let dev: Vec<_> = dev.into_iter().map(|(_, b)| b).collect();
    let test: Vec<_> = test.into_iter().map(|(_, b)| b).collect();
    let dev_scores = ScoreSample::new(dev.iter().map(|b| b.score).collect())?;
    let test_scores = ScoreSample::new(test.iter().map(|b| b.score).collect())?;

    println!("budget   tau      dev rate  test rate");
    for rho in [0.1, 0.25, 0.5, 0.75] {
        let tau = quantile_threshold(&dev_scores, rho)?;
        println!(
            "{rho:<7}  {tau:.4}   {:.3}     {:.3}",
            realized_rate(&dev_scores, tau),
            realized_rate(&test_scores, tau)
        );
    }

    let records = dev
        .iter()
        .map(|b| DevRecord::new(b.score, b.never.em, b.always.em))
        .collect::<Result<Vec<_>>>()?;
    let grid: Vec<f64> = (0..=20).map(|i| f64::from(i) / 20.0).collect();
    let tau = accuracy_opt_threshold(&records, &grid)?;
    println!(
        "\naccuracy-optimal tau = {tau} (dev EM {:.3}, dev rate {:.3})",
        gated_accuracy(&records, tau),
        realized_rate(&dev_scores, tau)
    );

    let pi = realized_rate(&test_scores, tau);
    let n = test.len() as f64;
    let params = CostParams {
        t_draft: config.gate.k as f64,
        t_ctx: test.iter().map(|b| b.context_tokens as f64).sum::<f64>() / n,
        e_out0: test.iter().map(|b| b.never.output_tokens as f64).sum::<f64>() / n,
        e_out1: test.iter().map(|b| b.always.output_tokens as f64).sum::<f64>() / n,
        per_token_cost: config.cost.per_token_cost,
        retrieval_overhead: config.cost.retrieval_overhead,
    };
    println!(
        "test rate {pi:.3}: expected tokens {:.2}, added latency {:.4} s",
        expected_tokens(&params, pi),
        delta_latency(&params, pi)
    );
    Ok(())
}

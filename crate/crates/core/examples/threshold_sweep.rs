//! Sweep the threshold for each gate and compare prefix lengths.
//!
//! Scores are computed once per query; each grid point only re-decides
//! which recorded branch a query takes.

use std::path::Path;

use targ::config::RunConfig;
use targ::commands::load_inputs;
use targ::eval::{baseline_rows, emit_report, prefix_length_ablation, sweep};
use targ::gate::GateKind;
use targ::pipeline::collect_branches;
use targ::report::ReportFormat;
use targ::Result;

fn main() -> Result<()> {
    let config = RunConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/run.toml"))?;
    let (generator, retriever) = load_inputs(&config)?;
    let queries = generator.queries();

    let grids = [
        (GateKind::Margin, vec![0.2, 0.3, 0.4, 0.5, 0.6]),
        (GateKind::Entropy, vec![0.5, 1.0, 1.5, 2.0]),
        (GateKind::Variance, vec![0.1, 0.2, 0.3, 0.4]),
    ];
    let mut rows = Vec::new();
    for (kind, grid) in &grids {
        let mut settings = config.settings();
        settings.gate.kind = *kind;
        let branches = collect_branches(&queries, &settings, &generator, &retriever)?;
        if rows.is_empty() {
            rows.extend(baseline_rows(&branches, &config.cost));
        }
        rows.extend(sweep(&branches, kind.as_str(), grid, &config.cost)?);
    }
    println!("{}", emit_report(&rows, ReportFormat::Md));

    let ablation = prefix_length_ablation(&[5, 10, 20], "margin", &[0.3, 0.5], &config.cost, |k| {
        let mut settings = config.settings();
        settings.gate.k = k;
        collect_branches(&queries, &settings, &generator, &retriever)
    })?;
    println!("prefix length ablation (margin gate)");
    for (k, rows) in ablation {
        for r in rows {
            println!(
                "  k={k:<2} tau={:.1}  EM {:5.1}  rate {:.3}  tokens {:.1}",
                r.tau.unwrap_or(f64::NAN),
                r.em,
                r.retrieval_rate,
                r.mean_tokens
            );
        }
    }
    Ok(())
}

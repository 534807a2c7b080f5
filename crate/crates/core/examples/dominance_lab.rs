//! Check on synthetic populations that a gate at the right threshold is at
//! least as accurate as never or always retrieving, and that budget
//! calibration lands on the requested retrieval rate.

use targ::report::ReportFormat;
use targ::simlab::{
    budget_table, check_always_dominance, check_budget_consistency, check_weak_dominance,
    dominance_table, evaluate_policies, generate, BudgetExperiment, DeltaDistribution,
    PopulationSpec, ScoreDistribution,
};
use targ::Result;

fn main() -> Result<()> {
    let spec = PopulationSpec {
        n: 100_000,
        tau_star: 0.5,
        u: ScoreDistribution::Uniform { lo: 0.0, hi: 1.0 },
        delta_low: DeltaDistribution::Uniform { lo: -0.3, hi: 0.0 },
        delta_high: DeltaDistribution::TwoPoint { low: -0.2, high: 0.5, p_high: 0.6 },
        a0_base: 0.5,
        seed: 11,
    };
    let pop = generate(&spec)?;
    let acc = evaluate_policies(&pop, spec.tau_star)?;
    println!(
        "never {:.4}  always {:.4}  gate {:.4}  (gate retrieves {:.3})\n",
        acc.never, acc.always, acc.gate, acc.pi
    );
    let reports = vec![
        check_weak_dominance(&pop, spec.tau_star)?,
        check_always_dominance(&pop, spec.tau_star)?,
    ];
    println!("{}", dominance_table(&reports).render(ReportFormat::Md));

    let rows = check_budget_consistency(&BudgetExperiment {
        u: ScoreDistribution::Beta { alpha: 2.0, beta: 5.0 },
        rho: vec![0.0, 0.05, 0.2, 0.5, 1.0],
        n_calib: 10_000,
        n_eval: 10_000,
        trials: 50,
        seed: 1,
        tolerance: 0.02,
        min_pass_fraction: 0.95,
    })?;
    println!("{}", budget_table(&rows).render(ReportFormat::Md));
    Ok(())
}

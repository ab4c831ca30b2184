//! A small Monte-Carlo study comparing Spline-Gbridge, Lasso and Gbridge,
//! followed by a truth-region coverage check.
//!
//! `cargo run --release --example simulation_study -- [reps]`

use funbuffer::simulate::{run_coverage, run_study, CoverageConfig, Scenario, ScenarioConfig, StudyConfig};
use funbuffer::solver::Variant;

fn main() -> funbuffer::error::Result<()> {
    let reps: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let cfg = StudyConfig::new(
        ScenarioConfig::new(Scenario::II, 500, 42),
        vec![Variant::SplineGbridge, Variant::Lasso, Variant::Gbridge],
        reps,
    );
    let report = run_study(&cfg)?;
    println!("Scenario II, n = 500, {reps} reps (censoring rate {:.3})", report.rho);
    println!("{:<14} {:>13} {:>13} {:>9}", "variant", "IMSE", "supremum", "null tail");
    for s in &report.summaries {
        println!(
            "{:<14} {:>6.3} ({:.3}) {:>6.3} ({:.3}) {:>9.2}",
            s.variant.name(),
            s.imse_mean,
            s.imse_sd,
            s.supremum_mean,
            s.supremum_sd,
            s.null_tail_fraction
        );
    }

    let cov = run_coverage(&CoverageConfig::new(ScenarioConfig::new(Scenario::III, 500, 42), 2 * reps))?;
    println!("\ncoverage of pointwise 95% intervals, Scenario III ({} refits)", cov.reps_ok);
    for p in &cov.points {
        println!(
            "s = {:.2}: truth {:.3}, mean {:.3}, ASE {:.3}, ESE {:.3}, coverage {:.2}",
            p.s, p.truth, p.mean_estimate, p.ase, p.ese, p.coverage
        );
    }
    Ok(())
}

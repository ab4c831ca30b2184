//! Two-stage inference: select the non-null region with Spline-Gbridge,
//! refit on it with the smoothness penalty alone, and report pointwise
//! intervals and the cumulative effect.

use funbuffer::basis::roughness_matrix;
use funbuffer::coxcore::CoxData;
use funbuffer::inference::{refit, refit_grid, select_regions, REFIT_LAMBDA2_RANGE};
use funbuffer::simulate::{Generator, Scenario, ScenarioConfig, StudyConfig};
use funbuffer::solver::{Problem, SolverOptions, Variant};
use funbuffer::tuning::{select, GridSpec, TuningGrid, TuningOptions};

fn main() -> funbuffer::error::Result<()> {
    let scenario = ScenarioConfig::new(Scenario::III, 1000, 11);
    let gen = Generator::new(scenario.clone())?;
    let h = StudyConfig::new(scenario, vec![], 0).fit_basis()?;
    let pen = roughness_matrix(&h)?;
    let data = gen.design(&gen.generate_stream(0)?, &h)?;
    let cox = CoxData::new(&data)?;
    let problem = Problem::new(&cox, Some(&pen), h.degree());

    let grid = TuningGrid::for_problem(&problem, Variant::SplineGbridge, &GridSpec::default());
    let stage1 = select(&problem, Variant::SplineGbridge, &grid, &TuningOptions::default())?;
    let region = select_regions(stage1.fit.b(), &h);
    println!("non-null region {:?}", region.segments);

    let l2 = refit_grid(&data, &region, &pen, 10, REFIT_LAMBDA2_RANGE)?;
    let res = refit(&data, &region, &pen, &l2, &SolverOptions::default())?;
    println!("refit lambda2 {:.3e} on {} basis functions", res.lambda2, res.q());

    println!("{:>6} {:>9} {:>9} {:>20}", "s", "truth", "beta", "95% interval");
    for i in 0..=10 {
        let s = 0.05 * i as f64;
        if !region.contains(s) {
            continue;
        }
        let p = res.curve_point(&h, s)?;
        println!(
            "{s:>6.2} {:>9.4} {:>9.4}   ({:>7.4}, {:>7.4})",
            Scenario::III.beta(s),
            p.beta,
            p.lo,
            p.hi
        );
    }
    let c = res.cumulative_effect(&h, 1.0)?;
    println!(
        "cumulative effect {:.4} (se {:.4}); hazard ratio {:.4} ({:.4}, {:.4})",
        c.estimate, c.se, c.hazard_ratio, c.hr_ci.0, c.hr_ci.1
    );
    let se = res.theta_se();
    for (k, t) in res.theta.iter().enumerate() {
        println!("theta{} = {t:.4} (se {:.4})", k + 1, se[k]);
    }
    Ok(())
}

//! All five penalty variants at fixed tuning parameters on one Scenario II
//! draw, where the truth vanishes beyond 0.5.

use funbuffer::basis::roughness_matrix;
use funbuffer::coxcore::CoxData;
use funbuffer::inference::select_regions;
use funbuffer::simulate::{imse, Generator, Scenario, ScenarioConfig, StudyConfig};
use funbuffer::solver::{fit, PenaltyConfig, Problem, SolverOptions, Variant};
use funbuffer::tuning::{lambda1_scale, lambda2_scale};

fn main() -> funbuffer::error::Result<()> {
    let scenario = ScenarioConfig::new(Scenario::II, 1000, 3);
    let gen = Generator::new(scenario.clone())?;
    let h = StudyConfig::new(scenario, vec![], 0).fit_basis()?;
    let pen = roughness_matrix(&h)?;
    let data = gen.design(&gen.generate_stream(0)?, &h)?;
    let cox = CoxData::new(&data)?;
    let problem = Problem::new(&cox, Some(&pen), h.degree());

    let (l1, l2) = (0.05 * lambda1_scale(&problem), 10.0 * lambda2_scale(&problem));
    println!("{:<14} {:>8} {:>8} {:>8} {:>10}", "variant", "nonzero", "buffer", "IMSE", "theta1");
    for v in Variant::ALL {
        let f = fit(&problem, &PenaltyConfig::new(v, l1, l2), &SolverOptions::default())?;
        let region = select_regions(f.b(), &h);
        println!(
            "{:<14} {:>8} {:>8.3} {:>8.3} {:>10.4}",
            v.name(),
            f.nonzero_spline(),
            region.buffer_distance,
            imse(&h, f.b(), Scenario::II),
            f.theta()[0]
        );
    }
    Ok(())
}

//! BIC selection of (lambda1, lambda2) for Spline-Gbridge, with the BIC
//! surface written to tuning.csv.

use std::fs::File;

use funbuffer::basis::roughness_matrix;
use funbuffer::coxcore::CoxData;
use funbuffer::inference::select_regions;
use funbuffer::simulate::{Generator, Scenario, ScenarioConfig, StudyConfig};
use funbuffer::solver::{Problem, Variant};
use funbuffer::tuning::{select, GridSpec, TuningGrid, TuningOptions};

fn main() -> funbuffer::error::Result<()> {
    let scenario = ScenarioConfig::new(Scenario::III, 1000, 5);
    let gen = Generator::new(scenario.clone())?;
    let h = StudyConfig::new(scenario, vec![], 0).fit_basis()?;
    let pen = roughness_matrix(&h)?;
    let data = gen.design(&gen.generate_stream(0)?, &h)?;
    let cox = CoxData::new(&data)?;
    let problem = Problem::new(&cox, Some(&pen), h.degree());

    let grid = TuningGrid::for_problem(&problem, Variant::SplineGbridge, &GridSpec::default());
    let report = select(&problem, Variant::SplineGbridge, &grid, &TuningOptions::default())?;
    let c = report.selected_cell();
    println!(
        "selected lambda1 {:.3e}, lambda2 {:.3e}: BIC {:.3}, df {:.2}, {} nonzero",
        c.lambda1, c.lambda2, c.bic, c.df, c.nonzero
    );
    println!("buffer distance {:.3} (truth 0.5)", select_regions(report.fit.b(), &h).buffer_distance);

    // best BIC in each lambda2 row
    for (i, l2) in grid.lambda2.iter().enumerate() {
        let row = &report.cells[i * grid.lambda1.len()..(i + 1) * grid.lambda1.len()];
        let best = row.iter().min_by(|a, b| a.bic.total_cmp(&b.bic)).unwrap();
        println!("  lambda2 {l2:.2e}: min BIC {:.3} at lambda1 {:.2e}", best.bic, best.lambda1);
    }
    report.write_csv(File::create("tuning.csv")?)?;
    println!("wrote tuning.csv");
    Ok(())
}

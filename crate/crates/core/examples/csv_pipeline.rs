//! The file-based workflow behind the `fit` subcommand: write a synthetic
//! CSV, fit it, and read the artifacts back.

use funbuffer::cli::{cmd_fit, emit_data, read_fit_summary, RunConfig, RunLog};

fn main() -> funbuffer::error::Result<()> {
    let dir = std::env::temp_dir().join("funbuffer-csv-pipeline");
    let data = dir.join("scenario2.csv");
    let cfg = RunConfig {
        n: 800,
        seed: 9,
        out: dir.join("fit"),
        ..RunConfig::default()
    };
    let s = emit_data(&cfg, &data, false, 101)?;
    println!("wrote {} ({} subjects, {} events, {} rings)", data.display(), s.n, s.events, s.r);

    let cfg = RunConfig {
        data: Some(data),
        ..cfg
    };
    cmd_fit(&cfg, &mut RunLog::new(true))?;

    let back = read_fit_summary(&cfg.out)?;
    println!("buffer distance {}", back.regions.buffer_distance);
    println!("cumulative: {}", back.cumulative.status);
    println!("{} curve points in beta_curve.csv", back.curve.len());
    for t in &back.regions.theta {
        println!("{} = {:.4} (se {:.4})", t.name, t.estimate, t.se);
    }
    Ok(())
}

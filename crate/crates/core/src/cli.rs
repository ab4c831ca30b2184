//! Command-line front end: flag parsing, layered configuration and the
//! artifacts each subcommand writes.
//!
//! Settings resolve in the order defaults, `--config` file, `FUNBUFFER_*`
//! environment variables, flags; later layers win.

use crate::basis::{build_basis, roughness_matrix, BasisHandle, BasisSpec, Exposure};
use crate::coxcore::CoxData;
use crate::error::{Error, Result};
use crate::inference::{
    read_curve_csv, refit, refit_grid, select_regions, write_curve_csv, CumulativeEffect, CurvePoint, InferenceResult,
    RefitCandidate, REFIT_LAMBDA2_RANGE,
};
use crate::simulate::{
    generate_case_study, run_coverage, run_study, CaseStudyConfig, CoverageConfig, Generator, ReplicationReport,
    Scenario, ScenarioConfig, StudyConfig,
};
use crate::solver::{Problem, SolverOptions, Variant};
use crate::survdata::{design, load_csv, write_csv, CsvSchema, DatasetSummary, SurvivalDataset};
use crate::tuning::{select, GridSpec, TuningGrid, TuningOptions, TuningReport};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "funbuffer", version, about = "Functional Cox regression with buffer-distance selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Two-stage fit: tuned sparse-smooth fit, region refit and variances.
    Fit(FitArgs),
    /// BIC grid search only.
    Tune(FitArgs),
    /// Replication study on the built-in scenarios, or write a synthetic dataset.
    Simulate(SimulateArgs),
    /// Summarize a data file or a fit output directory.
    Inspect(InspectArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Flat TOML file with any of the run settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, env = "FUNBUFFER_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, env = "FUNBUFFER_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every logical core.
    #[arg(long, env = "FUNBUFFER_THREADS")]
    pub threads: Option<usize>,
    /// lambda1 grid as `count:lo:hi`, multiples of the data-driven scale.
    #[arg(long = "grid-l1", env = "FUNBUFFER_GRID_L1")]
    pub grid_l1: Option<String>,
    /// lambda2 grid as `count:lo:hi`, multiples of the data-driven scale.
    #[arg(long = "grid-l2", env = "FUNBUFFER_GRID_L2")]
    pub grid_l2: Option<String>,
    /// Number of equally spaced inner knots.
    #[arg(long = "Mn", env = "FUNBUFFER_MN")]
    pub mn: Option<usize>,
    /// Explicit inner knots, comma separated; overrides `--Mn`.
    #[arg(long, env = "FUNBUFFER_KNOTS")]
    pub knots: Option<String>,
    #[arg(long, env = "FUNBUFFER_DEGREE")]
    pub degree: Option<usize>,
    /// Basis domain as `lo:hi`; defaults to the exposure support.
    #[arg(long, env = "FUNBUFFER_DOMAIN")]
    pub domain: Option<String>,
    /// Penalty variant for the first stage.
    #[arg(long, env = "FUNBUFFER_VARIANT")]
    pub variant: Option<String>,
    #[arg(long, env = "FUNBUFFER_REPS")]
    pub reps: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct SchemaArgs {
    /// Input CSV.
    #[arg(long, env = "FUNBUFFER_DATA")]
    pub data: Option<PathBuf>,
    #[arg(long = "time-col", env = "FUNBUFFER_TIME_COL")]
    pub time_col: Option<String>,
    #[arg(long = "event-col", env = "FUNBUFFER_EVENT_COL")]
    pub event_col: Option<String>,
    /// Covariate columns, comma separated; default is every other column.
    #[arg(long, env = "FUNBUFFER_COVARIATES")]
    pub covariates: Option<String>,
    /// Exposure columns are `<prefix>@<radius>`.
    #[arg(long = "exposure-prefix", env = "FUNBUFFER_EXPOSURE_PREFIX")]
    pub exposure_prefix: Option<String>,
    #[arg(long = "strata-col", env = "FUNBUFFER_STRATA_COL")]
    pub strata_col: Option<String>,
    /// Lower end of the exposure support when it starts before the first ring.
    #[arg(long = "exposure-start", env = "FUNBUFFER_EXPOSURE_START")]
    pub exposure_start: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub schema: SchemaArgs,
    /// Exposure increment the hazard ratios refer to.
    #[arg(long, env = "FUNBUFFER_INCREMENT")]
    pub increment: Option<f64>,
    /// Start every grid cell from scratch instead of from its neighbor.
    #[arg(long)]
    pub cold: bool,
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, env = "FUNBUFFER_SCENARIO")]
    pub scenario: Option<String>,
    #[arg(long, env = "FUNBUFFER_N")]
    pub n: Option<usize>,
    /// Variants to compare, comma separated.
    #[arg(long, env = "FUNBUFFER_VARIANTS")]
    pub variants: Option<String>,
    /// Also run truth-region refits and write pointwise coverage.
    #[arg(long)]
    pub coverage: bool,
    #[arg(long = "coverage-reps", env = "FUNBUFFER_COVERAGE_REPS")]
    pub coverage_reps: Option<usize>,
    /// Write one synthetic dataset as CSV to this path instead of running a study.
    #[arg(long = "emit-data")]
    pub emit_data: Option<PathBuf>,
    /// With `--emit-data`: ring-measured cohort on physical radii.
    #[arg(long = "case-study")]
    pub case_study: bool,
    /// With `--emit-data`: number of equally spaced rings for scenario data.
    #[arg(long, default_value_t = 101)]
    pub rings: usize,
}

#[derive(Debug, Args, Default)]
pub struct InspectArgs {
    /// A data CSV or a `fit` output directory.
    pub path: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub schema: SchemaArgs,
}

/// Every setting a run depends on. Also the format of `--config` files and
/// of the `config.toml` echoed into each output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub time_col: String,
    pub event_col: String,
    pub covariates: Option<Vec<String>>,
    pub exposure_prefix: String,
    pub strata_col: Option<String>,
    pub exposure_start: Option<f64>,
    pub degree: usize,
    pub mn: usize,
    pub knots: Option<Vec<f64>>,
    pub domain: Option<[f64; 2]>,
    pub variant: Variant,
    pub grid_l1: String,
    pub grid_l2: String,
    /// Refit grid, multiples of the restricted problem's smoothing scale.
    pub grid_refit: String,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub warm_start: bool,
    pub n_starts: usize,
    pub increment: f64,
    /// Curve points per connected piece of the selected region.
    pub curve_points: usize,
    pub scenario: Scenario,
    pub n: usize,
    pub reps: usize,
    pub variants: Vec<Variant>,
    pub coverage: bool,
    pub coverage_reps: usize,
}

fn grid_string(n: usize, r: (f64, f64)) -> String {
    format!("{n}:{:e}:{:e}", r.0, r.1)
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        Self {
            data: None,
            time_col: "time".into(),
            event_col: "event".into(),
            covariates: None,
            exposure_prefix: "x".into(),
            strata_col: None,
            exposure_start: None,
            degree: 3,
            mn: 26,
            knots: None,
            domain: None,
            variant: Variant::SplineGbridge,
            grid_l1: grid_string(g.n_lambda1, g.lambda1_range),
            grid_l2: grid_string(g.n_lambda2, g.lambda2_range),
            grid_refit: grid_string(g.n_lambda2, REFIT_LAMBDA2_RANGE),
            seed: 0,
            threads: 0,
            out: PathBuf::from("out"),
            warm_start: true,
            n_starts: SolverOptions::default().n_starts,
            increment: 1.0,
            curve_points: 50,
            scenario: Scenario::II,
            n: 1000,
            reps: 100,
            variants: Variant::ALL.to_vec(),
            coverage: false,
            coverage_reps: 200,
        }
    }
}

/// `count:lo:hi` with `0 < lo <= hi`.
pub fn parse_grid(s: &str) -> Result<(usize, (f64, f64))> {
    let bad = || Error::Config(format!("grid '{s}' is not count:lo:hi"));
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let n: usize = parts[0].parse().map_err(|_| bad())?;
    let lo: f64 = parts[1].parse().map_err(|_| bad())?;
    let hi: f64 = parts[2].parse().map_err(|_| bad())?;
    if n == 0 || !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::Config(format!("grid '{s}' needs count >= 1 and 0 < lo <= hi")));
    }
    Ok((n, (lo, hi)))
}

fn parse_pair(s: &str, what: &str) -> Result<[f64; 2]> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("{what} '{s}' is not lo:hi")))?;
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("{what} '{s}' is not lo:hi")))
    };
    Ok([num(a)?, num(b)?])
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|_| Error::Config(format!("bad {what} '{t}'"))))
        .collect()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn apply_common(&mut self, a: &CommonArgs) -> Result<()> {
        if let Some(v) = &a.out {
            self.out = v.clone();
        }
        if let Some(v) = a.seed {
            self.seed = v;
        }
        if let Some(v) = a.threads {
            self.threads = v;
        }
        if let Some(v) = &a.grid_l1 {
            self.grid_l1 = v.clone();
        }
        if let Some(v) = &a.grid_l2 {
            self.grid_l2 = v.clone();
        }
        if let Some(v) = a.mn {
            self.mn = v;
        }
        if let Some(v) = &a.knots {
            self.knots = Some(parse_list(v, "knot")?);
        }
        if let Some(v) = a.degree {
            self.degree = v;
        }
        if let Some(v) = &a.domain {
            self.domain = Some(parse_pair(v, "domain")?);
        }
        if let Some(v) = &a.variant {
            self.variant = v.parse()?;
        }
        if let Some(v) = a.reps {
            self.reps = v;
        }
        Ok(())
    }

    fn apply_schema(&mut self, a: &SchemaArgs) -> Result<()> {
        if let Some(v) = &a.data {
            self.data = Some(v.clone());
        }
        if let Some(v) = &a.time_col {
            self.time_col = v.clone();
        }
        if let Some(v) = &a.event_col {
            self.event_col = v.clone();
        }
        if let Some(v) = &a.covariates {
            self.covariates = Some(parse_list(v, "covariate")?);
        }
        if let Some(v) = &a.exposure_prefix {
            self.exposure_prefix = v.clone();
        }
        if let Some(v) = &a.strata_col {
            self.strata_col = Some(v.clone());
        }
        if let Some(v) = a.exposure_start {
            self.exposure_start = Some(v);
        }
        Ok(())
    }

    fn base(config: &Option<PathBuf>) -> Result<Self> {
        match config {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn from_fit_args(a: &FitArgs) -> Result<Self> {
        let mut c = Self::base(&a.common.config)?;
        c.apply_common(&a.common)?;
        c.apply_schema(&a.schema)?;
        if let Some(v) = a.increment {
            c.increment = v;
        }
        if a.cold {
            c.warm_start = false;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_simulate_args(a: &SimulateArgs) -> Result<Self> {
        let mut c = Self::base(&a.common.config)?;
        c.apply_common(&a.common)?;
        if let Some(v) = &a.scenario {
            c.scenario = v.parse()?;
        }
        if let Some(v) = a.n {
            c.n = v;
        }
        if let Some(v) = &a.variants {
            c.variants = parse_list(v, "variant")?;
        }
        if a.coverage {
            c.coverage = true;
        }
        if let Some(v) = a.coverage_reps {
            c.coverage_reps = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_inspect_args(a: &InspectArgs) -> Result<Self> {
        let mut c = Self::base(&a.common.config)?;
        c.apply_common(&a.common)?;
        c.apply_schema(&a.schema)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 {
            return Err(Error::Config("degree must be at least 1".into()));
        }
        if self.knots.is_none() && self.mn == 0 {
            return Err(Error::Config("Mn must be at least 1".into()));
        }
        if let Some([lo, hi]) = self.domain {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("domain {lo}:{hi} is empty")));
            }
        }
        for g in [&self.grid_l1, &self.grid_l2, &self.grid_refit] {
            parse_grid(g)?;
        }
        if self.n_starts == 0 {
            return Err(Error::Config("n_starts must be at least 1".into()));
        }
        if !(self.increment.is_finite() && self.increment != 0.0) {
            return Err(Error::Config("increment must be finite and nonzero".into()));
        }
        if self.curve_points == 0 {
            return Err(Error::Config("curve_points must be at least 1".into()));
        }
        if self.n < 2 || self.reps == 0 || self.coverage_reps == 0 {
            return Err(Error::Config("n must be at least 2 and reps at least 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("no variants to compare".into()));
        }
        Ok(())
    }

    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            time: self.time_col.clone(),
            event: self.event_col.clone(),
            covariates: self.covariates.clone(),
            exposure_prefix: self.exposure_prefix.clone(),
            strata: self.strata_col.clone(),
            exposure_start: self.exposure_start,
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let (n_lambda1, lambda1_range) = parse_grid(&self.grid_l1)?;
        let (n_lambda2, lambda2_range) = parse_grid(&self.grid_l2)?;
        Ok(GridSpec {
            n_lambda1,
            lambda1_range,
            n_lambda2,
            lambda2_range,
        })
    }

    pub fn tuning_options(&self) -> TuningOptions {
        TuningOptions {
            solver: SolverOptions {
                seed: self.seed,
                n_starts: self.n_starts,
                ..SolverOptions::default()
            },
            warm_start: self.warm_start,
        }
    }

    /// Basis on the configured domain, or on the exposure support.
    pub fn basis(&self, support: (f64, f64)) -> Result<BasisHandle> {
        let [lo, hi] = self.domain.unwrap_or([support.0, support.1]);
        let spec = match &self.knots {
            Some(k) => BasisSpec::with_knots(self.degree, lo, hi, k.clone()),
            None => BasisSpec::uniform(self.degree, self.mn, lo, hi),
        };
        build_basis(spec)
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::Config("no input data (use --data or `data` in the config)".into()))
    }
}

/// Timestamped lines for `run.log`, mirrored to stderr.
pub struct RunLog {
    start: Instant,
    lines: Vec<String>,
    pub echo: bool,
}

impl RunLog {
    pub fn new(echo: bool) -> Self {
        Self {
            start: Instant::now(),
            lines: Vec::new(),
            echo,
        }
    }

    pub fn line(&mut self, msg: impl AsRef<str>) {
        let l = format!("[{:>8.2}s] {}", self.start.elapsed().as_secs_f64(), msg.as_ref());
        if self.echo {
            eprintln!("{l}");
        }
        self.lines.push(l);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        f.flush()?;
        Ok(())
    }
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

/// Worker pool for this process. Only the first call takes effect.
pub fn init_threads(threads: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}

fn exposure_support(ds: &SurvivalDataset) -> (f64, f64) {
    ds.exposure
        .iter()
        .map(|x| x.support())
        .reduce(|a, b| (a.0.max(b.0), a.1.min(b.1)))
        .unwrap_or((0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedEstimate {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
}

/// Contents of `regions.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionsFile {
    pub variant: Variant,
    pub buffer_distance: f64,
    /// Indices of the non-null inter-knot intervals.
    pub intervals: Vec<usize>,
    pub segments: Vec<(f64, f64)>,
    pub active: Vec<usize>,
    pub breakpoints: Vec<f64>,
    pub degree: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub refit_lambda2: f64,
    /// BIC of every second-stage `lambda2` tried.
    pub refit_candidates: Vec<RefitCandidate>,
    pub stage1_coefficients: Vec<f64>,
    pub refit_coefficients: Vec<f64>,
    pub theta: Vec<NamedEstimate>,
    pub n: usize,
    pub events: usize,
    pub converged: bool,
    pub note: String,
}

/// Contents of `cumulative.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeFile {
    pub status: String,
    pub segments: Vec<(f64, f64)>,
    pub estimate: f64,
    pub se: f64,
    pub variance: f64,
    pub ci: (f64, f64),
    pub increment: f64,
    pub hazard_ratio: f64,
    pub hr_ci: (f64, f64),
}

pub const NO_REGION: &str = "no non-null region";

impl CumulativeFile {
    fn new(segments: &[(f64, f64)], c: Option<CumulativeEffect>, increment: f64) -> Self {
        match c {
            Some(c) => Self {
                status: "ok".into(),
                segments: segments.to_vec(),
                estimate: c.estimate,
                se: c.se,
                variance: c.se * c.se,
                ci: c.ci,
                increment: c.increment,
                hazard_ratio: c.hazard_ratio,
                hr_ci: c.hr_ci,
            },
            None => Self {
                status: NO_REGION.into(),
                segments: vec![],
                estimate: 0.0,
                se: 0.0,
                variance: 0.0,
                ci: (0.0, 0.0),
                increment,
                hazard_ratio: 1.0,
                hr_ci: (1.0, 1.0),
            },
        }
    }
}

/// What a `fit` directory holds, as read back from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub regions: RegionsFile,
    pub cumulative: CumulativeFile,
    pub curve: Vec<CurvePoint>,
}

pub fn read_fit_summary(dir: &Path) -> Result<FitSummary> {
    Ok(FitSummary {
        regions: read_json(&dir.join("regions.json"))?,
        cumulative: read_json(&dir.join("cumulative.json"))?,
        curve: read_curve_csv(File::open(dir.join("beta_curve.csv"))?)?,
    })
}

pub struct FitOutcome {
    pub handle: BasisHandle,
    pub tuning: TuningReport,
    pub inference: InferenceResult,
    pub summary: FitSummary,
}

fn tune_dataset(cfg: &RunConfig, ds: &SurvivalDataset, log: &mut RunLog) -> Result<(BasisHandle, crate::survdata::DesignedData, TuningReport)> {
    let handle = cfg.basis(exposure_support(ds))?;
    log.line(format!(
        "basis: degree {}, {} functions on [{}, {}]",
        handle.degree(),
        handle.n_basis(),
        handle.domain().0,
        handle.domain().1
    ));
    let data = design(ds, &handle)?;
    let pen = roughness_matrix(&handle)?;
    let cox = CoxData::new(&data)?;
    let problem = Problem::new(&cox, Some(&pen), handle.degree());
    let grid = TuningGrid::for_problem(&problem, cfg.variant, &cfg.grid_spec()?);
    log.line(format!(
        "tuning {} over {} x {} grid",
        cfg.variant,
        grid.lambda1.len(),
        grid.lambda2.len()
    ));
    let report = select(&problem, cfg.variant, &grid, &cfg.tuning_options())?;
    let c = report.selected_cell();
    log.line(format!(
        "selected lambda1 {:.4e}, lambda2 {:.4e}, BIC {:.6}, df {:.3}, {} nonzero",
        c.lambda1, c.lambda2, c.bic, c.df, c.nonzero
    ));
    if !report.fit.converged {
        log.line("warning: selected fit hit the iteration limit");
    }
    Ok((handle, data, report))
}

fn load(cfg: &RunConfig, log: &mut RunLog) -> Result<SurvivalDataset> {
    let path = cfg.data_path()?;
    let ds = load_csv(path, &cfg.schema())?;
    let s = ds.summary();
    log.line(format!(
        "data {}: n {}, {} events, {} covariates, {} rings, {} strata",
        path.display(),
        s.n,
        s.events,
        s.p,
        s.r,
        s.strata
    ));
    Ok(ds)
}

/// Both stages on an in-memory dataset; writes every artifact to `cfg.out`.
pub fn fit_dataset(cfg: &RunConfig, ds: &SurvivalDataset, log: &mut RunLog) -> Result<FitOutcome> {
    prepare_out(cfg)?;
    let (handle, data, tuning) = tune_dataset(cfg, ds, log)?;
    tuning.write_csv(BufWriter::new(File::create(cfg.out.join("tuning.csv"))?))?;
    let b = tuning.fit.b().to_vec();
    let selection = select_regions(&b, &handle);
    log.line(format!(
        "non-null region {:?}, buffer distance {}",
        selection.segments, selection.buffer_distance
    ));
    let pen = roughness_matrix(&handle)?;
    let (nr, range) = parse_grid(&cfg.grid_refit)?;
    let grid = refit_grid(&data, &selection, &pen, nr, range)?;
    let inference = refit(&data, &selection, &pen, &grid, &cfg.tuning_options().solver)?;
    log.line(format!("refit lambda2 {:.4e}", inference.lambda2));

    let curve = inference.variance_curve(&handle, cfg.curve_points);
    write_curve_csv(&curve, BufWriter::new(File::create(cfg.out.join("beta_curve.csv"))?))?;
    let cumulative = if selection.is_empty() {
        log.line(NO_REGION);
        CumulativeFile::new(&[], None, cfg.increment)
    } else {
        let c = inference.cumulative_effect(&handle, cfg.increment)?;
        log.line(format!(
            "cumulative effect {:.6} (se {:.6}); hazard ratio per {} = {:.4} ({:.4}, {:.4})",
            c.estimate, c.se, cfg.increment, c.hazard_ratio, c.hr_ci.0, c.hr_ci.1
        ));
        CumulativeFile::new(&selection.segments, Some(c), cfg.increment)
    };
    let se = inference.theta_se();
    let regions = RegionsFile {
        variant: cfg.variant,
        buffer_distance: selection.buffer_distance,
        intervals: selection.intervals.clone(),
        segments: selection.segments.clone(),
        active: selection.active.clone(),
        breakpoints: handle.breakpoints().to_vec(),
        degree: handle.degree(),
        lambda1: tuning.selected_cell().lambda1,
        lambda2: tuning.selected_cell().lambda2,
        refit_lambda2: inference.lambda2,
        refit_candidates: inference.candidates.clone(),
        stage1_coefficients: b,
        refit_coefficients: inference.full_b(handle.n_basis()),
        theta: ds
            .covariate_names
            .iter()
            .zip(&inference.theta)
            .zip(&se)
            .map(|((name, &estimate), &se)| NamedEstimate {
                name: name.clone(),
                estimate,
                se,
            })
            .collect(),
        n: ds.n(),
        events: ds.events(),
        converged: tuning.fit.converged && inference.converged,
        note: "standard errors are conditional on the selected region".into(),
    };
    write_json(&cfg.out.join("regions.json"), &regions)?;
    write_json(&cfg.out.join("cumulative.json"), &cumulative)?;
    Ok(FitOutcome {
        handle,
        tuning,
        inference,
        summary: FitSummary {
            regions,
            cumulative,
            curve,
        },
    })
}

fn finish<T>(cfg: &RunConfig, log: &mut RunLog, res: Result<T>) -> Result<T> {
    if let Err(e) = &res {
        log.line(format!("error: {e}"));
    }
    if cfg.out.is_dir() {
        log.write(&cfg.out.join("run.log"))?;
    }
    res
}

pub fn cmd_fit(cfg: &RunConfig, log: &mut RunLog) -> Result<FitOutcome> {
    let res = load(cfg, log).and_then(|ds| fit_dataset(cfg, &ds, log));
    finish(cfg, log, res)
}

pub fn cmd_tune(cfg: &RunConfig, log: &mut RunLog) -> Result<TuningReport> {
    let res = (|| {
        let ds = load(cfg, log)?;
        prepare_out(cfg)?;
        let (_, _, report) = tune_dataset(cfg, &ds, log)?;
        report.write_csv(BufWriter::new(File::create(cfg.out.join("tuning.csv"))?))?;
        #[derive(Serialize)]
        struct Selected<'a> {
            variant: Variant,
            lambda1: f64,
            lambda2: f64,
            bic: f64,
            df: f64,
            warm_start: bool,
            coefficients: &'a [f64],
        }
        let c = report.selected_cell();
        write_json(
            &cfg.out.join("selected.json"),
            &Selected {
                variant: report.variant,
                lambda1: c.lambda1,
                lambda2: c.lambda2,
                bic: c.bic,
                df: c.df,
                warm_start: cfg.warm_start,
                coefficients: report.fit.b(),
            },
        )?;
        Ok(report)
    })();
    finish(cfg, log, res)
}

/// Files written by `simulate`.
pub struct SimulateOutcome {
    pub study: ReplicationReport,
    pub coverage: Option<crate::simulate::CoverageReport>,
}

pub fn study_config(cfg: &RunConfig) -> Result<StudyConfig> {
    let mut s = StudyConfig::new(
        ScenarioConfig::new(cfg.scenario, cfg.n, cfg.seed),
        cfg.variants.clone(),
        cfg.reps,
    );
    s.fit_knots = cfg.mn;
    s.fit_degree = cfg.degree;
    s.grid = cfg.grid_spec()?;
    s.tuning = cfg.tuning_options();
    Ok(s)
}

pub fn cmd_simulate(cfg: &RunConfig, log: &mut RunLog) -> Result<SimulateOutcome> {
    let res = (|| {
        prepare_out(cfg)?;
        let scfg = study_config(cfg)?;
        log.line(format!(
            "scenario {}, n {}, {} reps, variants {:?}",
            cfg.scenario, cfg.n, cfg.reps, cfg.variants
        ));
        let study = run_study(&scfg)?;
        study.write_rows_csv(BufWriter::new(File::create(cfg.out.join("reps.csv"))?))?;
        write_json(&cfg.out.join("aggregate.json"), &study.summaries)?;
        for s in &study.summaries {
            log.line(format!(
                "{}: IMSE {:.4} ({:.4}), supremum {:.4} ({:.4}), {} failures",
                s.variant, s.imse_mean, s.imse_sd, s.supremum_mean, s.supremum_sd, s.failures
            ));
        }
        let coverage = if cfg.coverage {
            let mut c = CoverageConfig::new(ScenarioConfig::new(cfg.scenario, cfg.n, cfg.seed), cfg.coverage_reps);
            c.fit_knots = cfg.mn;
            c.fit_degree = cfg.degree;
            let (nr, range) = parse_grid(&cfg.grid_refit)?;
            c.n_lambda2 = nr;
            c.lambda2_range = range;
            let r = run_coverage(&c)?;
            r.write_csv(BufWriter::new(File::create(cfg.out.join("coverage.csv"))?))?;
            log.line(format!("coverage from {} truth-region refits", r.reps_ok));
            Some(r)
        } else {
            None
        };
        Ok(SimulateOutcome { study, coverage })
    })();
    finish(cfg, log, res)
}

/// One synthetic dataset as CSV: a scenario draw sampled on `rings` equally
/// spaced radii, or the ring-measured case-study cohort.
pub fn emit_data(cfg: &RunConfig, path: &Path, case_study: bool, rings: usize) -> Result<DatasetSummary> {
    let (ds, radii) = if case_study {
        let c = CaseStudyConfig::new(cfg.n, cfg.seed);
        (generate_case_study(&c)?, c.radii.clone())
    } else {
        if rings < 2 {
            return Err(Error::Config("need at least two rings".into()));
        }
        let gen = Generator::new(ScenarioConfig::new(cfg.scenario, cfg.n, cfg.seed))?;
        let sim = gen.generate_stream(0)?;
        let radii: Vec<f64> = (0..rings).map(|i| i as f64 / (rings - 1) as f64).collect();
        (sim.dataset, radii)
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_csv(&ds, &radii, BufWriter::new(File::create(path)?))?;
    Ok(ds.summary())
}

/// JSON description of a data file or of a fit directory.
pub fn cmd_inspect(cfg: &RunConfig, path: &Path) -> Result<String> {
    if path.is_dir() {
        let s = read_fit_summary(path)?;
        return Ok(serde_json::to_string_pretty(&serde_json::json!({
            "buffer_distance": s.regions.buffer_distance,
            "segments": s.regions.segments,
            "variant": s.regions.variant,
            "lambda1": s.regions.lambda1,
            "lambda2": s.regions.lambda2,
            "refit_lambda2": s.regions.refit_lambda2,
            "theta": s.regions.theta,
            "cumulative": s.cumulative,
            "curve_points": s.curve.len(),
        }))?);
    }
    let ds = load_csv(path, &cfg.schema())?;
    let support = exposure_support(&ds);
    let handle = cfg.basis(support)?;
    Ok(serde_json::to_string_pretty(&serde_json::json!({
        "data": ds.summary(),
        "covariates": ds.covariate_names,
        "exposure_support": support,
        "basis": {
            "degree": handle.degree(),
            "n_basis": handle.n_basis(),
            "breakpoints": handle.breakpoints(),
        },
    }))?)
}

/// Entry point of the binary; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let res = match &cli.command {
        Command::Fit(a) => RunConfig::from_fit_args(a).and_then(|cfg| {
            init_threads(cfg.threads);
            let mut log = RunLog::new(true);
            cmd_fit(&cfg, &mut log).map(|o| {
                println!("buffer distance: {}", o.summary.regions.buffer_distance);
            })
        }),
        Command::Tune(a) => RunConfig::from_fit_args(a).and_then(|cfg| {
            init_threads(cfg.threads);
            let mut log = RunLog::new(true);
            cmd_tune(&cfg, &mut log).map(|r| {
                let c = r.selected_cell();
                println!("selected lambda1 {} lambda2 {}", c.lambda1, c.lambda2);
            })
        }),
        Command::Simulate(a) => RunConfig::from_simulate_args(a).and_then(|cfg| {
            init_threads(cfg.threads);
            if let Some(path) = &a.emit_data {
                let s = emit_data(&cfg, path, a.case_study, a.rings)?;
                println!("{}", serde_json::to_string(&s)?);
                return Ok(());
            }
            let mut log = RunLog::new(true);
            cmd_simulate(&cfg, &mut log).map(|_| ())
        }),
        Command::Inspect(a) => RunConfig::from_inspect_args(a).and_then(|cfg| {
            println!("{}", cmd_inspect(&cfg, &a.path)?);
            Ok(())
        }),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

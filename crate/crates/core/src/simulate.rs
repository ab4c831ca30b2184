//! Simulation scenarios, data generation and evaluation metrics.

use crate::basis::{build_basis, functional_design_row, gauss_legendre, roughness_matrix, simpson_nodes, BasisHandle, BasisSpec, PenaltyMatrices};
use crate::coxcore::CoxData;
use crate::error::{Error, Result};
use crate::inference::{refit, REFIT_LAMBDA2_RANGE, refit_grid, select_regions, CurvePoint, RegionSelection};
use crate::report::sig10;
use crate::solver::{Problem, SolverOptions, Variant};
use crate::survdata::{DesignedData, ExposureFunction, RingExposure, SplineExposure, SurvivalDataset};
use crate::tuning::{select, GridSpec, TuningGrid, TuningOptions};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use rayon::prelude::*;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

/// Pilot draws used to calibrate the censoring rate.
pub const PILOT_DRAWS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    I,
    II,
    III,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::I, Scenario::II, Scenario::III];

    /// True coefficient function on `[0, 1]`.
    pub fn beta(self, s: f64) -> f64 {
        let inside = (0.0..0.5).contains(&s);
        match self {
            Scenario::I => 0.0,
            Scenario::II if inside => 2.0 * (2.0 * PI * s).sin(),
            Scenario::III if inside => -2.0 * (PI * (s - 0.5)).sin(),
            _ => 0.0,
        }
    }

    /// Support of the truth, `None` when it vanishes everywhere.
    pub fn truth_region(self) -> Option<(f64, f64)> {
        match self {
            Scenario::I => None,
            _ => Some((0.0, 0.5)),
        }
    }

    /// `int_0^1 beta^2`.
    pub fn beta_sq_norm(self) -> f64 {
        match self {
            Scenario::I => 0.0,
            // both are 4 * (1/4)
            Scenario::II | Scenario::III => 1.0,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::I => "I",
            Scenario::II => "II",
            Scenario::III => "III",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Scenario::I),
            "II" | "2" => Ok(Scenario::II),
            "III" | "3" => Ok(Scenario::III),
            _ => Err(Error::Config(format!("unknown scenario '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub censor_fraction: f64,
    pub theta: [f64; 2],
    /// Mean and sd of `Z1`; `Z2` is standard normal.
    pub z1_mean: f64,
    pub z1_sd: f64,
    /// Exposure curves are cubic splines with this many equally spaced inner knots.
    pub exposure_knots: usize,
    pub exposure_degree: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, n: usize, seed: u64) -> Self {
        Self {
            scenario,
            n,
            censor_fraction: 0.10,
            theta: [0.8f64.ln(), 1.2f64.ln()],
            z1_mean: 1.0,
            z1_sd: 0.5,
            exposure_knots: 48,
            exposure_degree: 3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config("n must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.censor_fraction) {
            return Err(Error::Config(format!(
                "censor fraction must lie in [0, 1), got {}",
                self.censor_fraction
            )));
        }
        if !(self.z1_sd >= 0.0) {
            return Err(Error::Config("z1 sd must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One simulated dataset with the generating exposure coefficients.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub dataset: SurvivalDataset,
    /// `n x K` exposure spline coefficients.
    pub exposure_coefs: DMatrix<f64>,
    /// Linear predictor used to draw the failure times.
    pub eta: Vec<f64>,
    pub rho: f64,
}

/// Data generator for one scenario, with the censoring rate calibrated once.
#[derive(Debug, Clone)]
pub struct Generator {
    pub config: ScenarioConfig,
    pub exposure_basis: Arc<BasisHandle>,
    /// `int B_k(s) beta(s) ds` for the exposure basis.
    truth_weights: DVector<f64>,
    /// Exponential censoring rate (0 means no censoring).
    pub rho: f64,
}

impl Generator {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let exposure_basis = Arc::new(build_basis(BasisSpec::uniform(
            config.exposure_degree,
            config.exposure_knots,
            0.0,
            1.0,
        ))?);
        let truth_weights = truth_weights(&exposure_basis, config.scenario);
        let mut g = Self {
            config,
            exposure_basis,
            truth_weights,
            rho: 0.0,
        };
        g.rho = g.calibrate_censoring();
        Ok(g)
    }

    fn draw_subject<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, [f64; 2], f64) {
        let k = self.exposure_basis.n_basis();
        let c: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let z1 = self.config.z1_mean + self.config.z1_sd * rng.sample::<f64, _>(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let eta = c.iter().zip(self.truth_weights.iter()).map(|(a, b)| a * b).sum::<f64>()
            + self.config.theta[0] * z1
            + self.config.theta[1] * z2;
        (c, [z1, z2], eta)
    }

    /// Root of `mean rho / (rho + exp(eta)) = target` over pilot draws, found
    /// by bisection on `log rho`.
    fn calibrate_censoring(&self) -> f64 {
        let target = self.config.censor_fraction;
        if target == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x9e37_79b9_7f4a_7c15);
        let exps: Vec<f64> = (0..PILOT_DRAWS)
            .map(|_| self.draw_subject(&mut rng).2.exp())
            .collect();
        let frac = |log_rho: f64| {
            let rho = log_rho.exp();
            exps.iter().map(|e| rho / (rho + e)).sum::<f64>() / exps.len() as f64
        };
        let (mut lo, mut hi) = (-30.0, 30.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if frac(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        (0.5 * (lo + hi)).exp()
    }

    /// Draw one dataset from the generator's stream `stream`.
    pub fn generate_stream(&self, stream: u64) -> Result<Simulated> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(stream);
        self.generate_with(&mut rng)
    }

    pub fn generate_with<R: Rng>(&self, rng: &mut R) -> Result<Simulated> {
        let n = self.config.n;
        let k = self.exposure_basis.n_basis();
        let mut coefs = DMatrix::zeros(n, k);
        let mut z = DMatrix::zeros(n, 2);
        let mut eta = Vec::with_capacity(n);
        let mut time = Vec::with_capacity(n);
        let mut event = Vec::with_capacity(n);
        let censor = (self.rho > 0.0).then(|| Exp::new(self.rho).unwrap());
        for i in 0..n {
            let (c, zi, e) = self.draw_subject(rng);
            for (j, v) in c.iter().enumerate() {
                coefs[(i, j)] = *v;
            }
            z[(i, 0)] = zi[0];
            z[(i, 1)] = zi[1];
            // inverse-transform draw with 1 - U in (0, 1]
            let u: f64 = 1.0 - rng.gen::<f64>();
            let t = -u.ln() / e.exp();
            let c_time = censor.map_or(f64::INFINITY, |d| d.sample(rng));
            let t = t.max(f64::MIN_POSITIVE);
            if t <= c_time {
                time.push(t);
                event.push(true);
            } else {
                time.push(c_time.max(f64::MIN_POSITIVE));
                event.push(false);
            }
            eta.push(e);
        }
        if !event.iter().any(|&e| e) {
            // vanishingly rare; keep the dataset usable
            event[0] = true;
        }
        let exposure = (0..n)
            .map(|i| {
                ExposureFunction::Spline(SplineExposure {
                    basis: self.exposure_basis.clone(),
                    coefs: coefs.row(i).iter().copied().collect(),
                })
            })
            .collect();
        let mut dataset = SurvivalDataset::new(time, event, z, exposure, None)?;
        dataset.covariate_names = vec!["z1".into(), "z2".into()];
        Ok(Simulated {
            dataset,
            exposure_coefs: coefs,
            eta,
            rho: self.rho,
        })
    }

    /// Functional design on `fit_basis` through the exact cross-Gram
    /// `int B^exposure_j B^fit_k`.
    pub fn design(&self, sim: &Simulated, fit_basis: &BasisHandle) -> Result<DesignedData> {
        let (lo, hi) = fit_basis.domain();
        if lo > 1e-12 || hi < 1.0 - 1e-12 {
            // fitting on a sub-domain: fall back to generic quadrature
            return crate::survdata::design(&sim.dataset, fit_basis);
        }
        let k = cross_gram(&self.exposure_basis, fit_basis);
        let phi = &sim.exposure_coefs * k;
        let d = &sim.dataset;
        DesignedData::new(phi, d.z.clone(), d.time.clone(), d.event.clone(), None)
    }
}

/// Draw one dataset per the scenario configuration.
pub fn generate(config: &ScenarioConfig) -> Result<SurvivalDataset> {
    Ok(Generator::new(config.clone())?.generate_stream(0)?.dataset)
}

/// `int_0^1 B_k(s) beta(s) ds` with the kink at 0.5 as a cut point.
fn truth_weights(basis: &BasisHandle, scenario: Scenario) -> DVector<f64> {
    let (pts, w) = fine_nodes(basis.breakpoints(), 16);
    let mut out = DVector::zeros(basis.n_basis());
    for (s, wt) in pts.iter().zip(&w) {
        let b = scenario.beta(*s);
        if b == 0.0 {
            continue;
        }
        let (first, vals) = basis.nonzero(*s);
        for (j, v) in vals.iter().enumerate() {
            out[first + j] += wt * b * v;
        }
    }
    out
}

/// Simpson nodes on `breaks` plus 0.5, each cell split `sub` times.
fn fine_nodes(breaks: &[f64], sub: usize) -> (Vec<f64>, Vec<f64>) {
    let mut cuts: Vec<f64> = breaks.to_vec();
    cuts.push(0.5);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let mut fine = Vec::with_capacity(cuts.len() * sub);
    for w in cuts.windows(2) {
        for i in 0..sub {
            fine.push(w[0] + (w[1] - w[0]) * i as f64 / sub as f64);
        }
    }
    fine.push(*cuts.last().unwrap());
    simpson_nodes(&fine)
}

/// `K_jk = int A_j(s) B_k(s) ds`, exact for piecewise polynomials by
/// Gauss-Legendre on the merged breakpoints.
pub fn cross_gram(a: &BasisHandle, b: &BasisHandle) -> DMatrix<f64> {
    let mut cuts: Vec<f64> = a.breakpoints().iter().chain(b.breakpoints()).copied().collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-13);
    let (lo, hi) = b.domain();
    cuts.retain(|s| *s >= lo - 1e-13 && *s <= hi + 1e-13);
    let npts = (a.degree() + b.degree()) / 2 + 1;
    let (gx, gw) = gauss_legendre(npts);
    let mut k = DMatrix::zeros(a.n_basis(), b.n_basis());
    for w in cuts.windows(2) {
        let (c0, c1) = (w[0], w[1]);
        let half = 0.5 * (c1 - c0);
        for (x, wt) in gx.iter().zip(&gw) {
            let s = c0 + half * (x + 1.0);
            let (fa, va) = a.nonzero(s);
            let (fb, vb) = b.nonzero(s);
            for (i, u) in va.iter().enumerate() {
                for (j, v) in vb.iter().enumerate() {
                    k[(fa + i, fb + j)] += half * wt * u * v;
                }
            }
        }
    }
    k
}

/// Squared error `int_0^1 (beta_hat - beta)^2`, divided by `int beta^2` when
/// the truth is nonzero.
pub fn imse(fit_basis: &BasisHandle, b: &[f64], scenario: Scenario) -> f64 {
    let (pts, w) = fine_nodes(fit_basis.breakpoints(), 40);
    let err: f64 = pts
        .iter()
        .zip(&w)
        .map(|(s, wt)| {
            let d = fit_basis.curve(b, *s) - scenario.beta(*s);
            wt * d * d
        })
        .sum();
    match scenario {
        Scenario::I => err,
        _ => err / scenario.beta_sq_norm(),
    }
}

/// Settings shared by the replication and coverage studies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: ScenarioConfig,
    pub variants: Vec<Variant>,
    pub reps: usize,
    pub fit_knots: usize,
    pub fit_degree: usize,
    pub grid: GridSpec,
    pub tuning: TuningOptions,
}

impl StudyConfig {
    pub fn new(scenario: ScenarioConfig, variants: Vec<Variant>, reps: usize) -> Self {
        Self {
            scenario,
            variants,
            reps,
            fit_knots: 26,
            fit_degree: 3,
            grid: GridSpec::default(),
            tuning: TuningOptions::default(),
        }
    }

    pub fn fit_basis(&self) -> Result<BasisHandle> {
        build_basis(BasisSpec::uniform(self.fit_degree, self.fit_knots, 0.0, 1.0))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepRow {
    pub rep: usize,
    pub variant: Variant,
    pub imse: f64,
    pub supremum: f64,
    /// Whether the estimate vanishes identically on `[0.6, 1]`.
    pub null_tail: bool,
    pub theta: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub reps: usize,
    pub failures: usize,
    pub imse_mean: f64,
    pub imse_sd: f64,
    pub imse_median: f64,
    pub supremum_mean: f64,
    pub supremum_sd: f64,
    pub null_tail_fraction: f64,
    /// `100 (mean theta_hat - theta) / theta`.
    pub theta_percent_bias: Vec<f64>,
    pub theta_ese: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub config: StudyConfig,
    pub rho: f64,
    pub rows: Vec<RepRow>,
    pub summaries: Vec<VariantSummary>,
}

pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / n;
    let v = if x.len() > 1 {
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v.sqrt())
}

pub fn median(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn null_tail(handle: &BasisHandle, b: &[f64], from: f64) -> bool {
    (0..handle.n_intervals())
        .filter(|&j| handle.interval(j).1 > from)
        .all(|j| handle.group(j).all(|k| b[k] == 0.0))
}

fn run_rep(
    cfg: &StudyConfig,
    gen: &Generator,
    handle: &BasisHandle,
    pen: &PenaltyMatrices,
    rep: usize,
) -> Vec<RepRow> {
    let fail = |variant: Variant, e: Error| RepRow {
        rep,
        variant,
        imse: f64::NAN,
        supremum: f64::NAN,
        null_tail: false,
        theta: vec![],
        lambda1: f64::NAN,
        lambda2: f64::NAN,
        converged: false,
        error: Some(e.to_string()),
    };
    let data = gen
        .generate_stream(rep as u64)
        .and_then(|sim| gen.design(&sim, handle))
        .and_then(|d| CoxData::new(&d));
    let cox = match data {
        Ok(c) => c,
        Err(e) => {
            let msg = e.to_string();
            return cfg
                .variants
                .iter()
                .map(|&v| fail(v, Error::Numerical(msg.clone())))
                .collect();
        }
    };
    let problem = Problem::new(&cox, Some(pen), handle.degree());
    let mut tuning = cfg.tuning.clone();
    tuning.solver.seed = cfg.scenario.seed ^ (rep as u64).wrapping_mul(0x2545_f491_4f6c_dd1d);
    cfg.variants
        .iter()
        .map(|&v| {
            let grid = TuningGrid::for_problem(&problem, v, &cfg.grid);
            match select(&problem, v, &grid, &tuning) {
                Ok(r) => {
                    let b = r.fit.b();
                    let cell = r.selected_cell();
                    RepRow {
                        rep,
                        variant: v,
                        imse: imse(handle, b, cfg.scenario.scenario),
                        supremum: select_regions(b, handle).buffer_distance,
                        null_tail: null_tail(handle, b, 0.6),
                        theta: r.fit.theta().to_vec(),
                        lambda1: cell.lambda1,
                        lambda2: cell.lambda2,
                        converged: r.fit.converged,
                        error: None,
                    }
                }
                Err(e) => fail(v, e),
            }
        })
        .collect()
}

/// Replications in parallel; replication `r` draws from stream `r` of the
/// master seed, so reports are reproducible for any thread count.
pub fn run_study(cfg: &StudyConfig) -> Result<ReplicationReport> {
    let gen = Generator::new(cfg.scenario.clone())?;
    let handle = cfg.fit_basis()?;
    let pen = roughness_matrix(&handle)?;
    let per_rep: Vec<Vec<RepRow>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_rep(cfg, &gen, &handle, &pen, rep))
        .collect();
    let rows: Vec<RepRow> = per_rep.into_iter().flatten().collect();
    let summaries = cfg
        .variants
        .iter()
        .map(|&v| summarize(v, &rows, &cfg.scenario.theta))
        .collect();
    Ok(ReplicationReport {
        config: cfg.clone(),
        rho: gen.rho,
        rows,
        summaries,
    })
}

pub fn summarize(variant: Variant, rows: &[RepRow], theta: &[f64]) -> VariantSummary {
    let ok: Vec<&RepRow> = rows
        .iter()
        .filter(|r| r.variant == variant && r.error.is_none())
        .collect();
    let failures = rows.iter().filter(|r| r.variant == variant && r.error.is_some()).count();
    let imses: Vec<f64> = ok.iter().map(|r| r.imse).collect();
    let sups: Vec<f64> = ok.iter().map(|r| r.supremum).collect();
    let (imse_mean, imse_sd) = mean_sd(&imses);
    let (supremum_mean, supremum_sd) = mean_sd(&sups);
    let mut bias = Vec::new();
    let mut ese = Vec::new();
    for (k, &t) in theta.iter().enumerate() {
        let est: Vec<f64> = ok.iter().filter_map(|r| r.theta.get(k).copied()).collect();
        let (m, sd) = mean_sd(&est);
        bias.push(100.0 * (m - t) / t);
        ese.push(sd);
    }
    VariantSummary {
        variant,
        reps: ok.len(),
        failures,
        imse_mean,
        imse_sd,
        imse_median: median(&imses),
        supremum_mean,
        supremum_sd,
        null_tail_fraction: ok.iter().filter(|r| r.null_tail).count() as f64 / ok.len().max(1) as f64,
        theta_percent_bias: bias,
        theta_ese: ese,
    }
}

impl ReplicationReport {
    pub fn summary(&self, variant: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == variant)
    }

    pub fn write_rows_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "rep,variant,imse,supremum,null_tail,theta1,theta2,lambda1,lambda2,converged,error")?;
        for r in &self.rows {
            let th = |k: usize| r.theta.get(k).map_or(String::new(), |v| sig10(*v));
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.rep,
                r.variant,
                sig10(r.imse),
                sig10(r.supremum),
                r.null_tail as u8,
                th(0),
                th(1),
                sig10(r.lambda1),
                sig10(r.lambda2),
                r.converged as u8,
                r.error.as_deref().unwrap_or("").replace(',', ";")
            )?;
        }
        Ok(())
    }
}

/// Truth-region refits at fixed evaluation points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub scenario: ScenarioConfig,
    pub reps: usize,
    pub points: Vec<f64>,
    pub fit_knots: usize,
    pub fit_degree: usize,
    pub n_lambda2: usize,
    pub lambda2_range: (f64, f64),
    pub solver: SolverOptions,
}

impl CoverageConfig {
    pub fn new(scenario: ScenarioConfig, reps: usize) -> Self {
        Self {
            scenario,
            reps,
            points: (1..=9).map(|i| 0.05 * i as f64).collect(),
            fit_knots: 26,
            fit_degree: 3,
            n_lambda2: GridSpec::default().n_lambda2,
            lambda2_range: REFIT_LAMBDA2_RANGE,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub s: f64,
    pub truth: f64,
    pub mean_estimate: f64,
    /// Average estimated standard error.
    pub ase: f64,
    /// Empirical standard deviation of the estimates.
    pub ese: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: CoverageConfig,
    pub reps_ok: usize,
    pub failures: usize,
    pub points: Vec<CoveragePoint>,
    /// Position of the BIC-selected `lambda2` in the refit grid, per
    /// successful replication.
    pub lambda2_index: Vec<usize>,
}

/// Second-stage refits on the intervals covering the true support, with
/// pointwise 95% intervals checked against the truth.
pub fn run_coverage(cfg: &CoverageConfig) -> Result<CoverageReport> {
    let (lo, hi) = cfg
        .scenario
        .scenario
        .truth_region()
        .ok_or_else(|| Error::Config("coverage needs a scenario with a nonzero truth".into()))?;
    let gen = Generator::new(cfg.scenario.clone())?;
    let handle = build_basis(BasisSpec::uniform(cfg.fit_degree, cfg.fit_knots, 0.0, 1.0))?;
    let pen = roughness_matrix(&handle)?;
    let sel = RegionSelection::covering(&handle, lo, hi);
    let per_rep: Vec<Option<(usize, Vec<CurvePoint>)>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let sim = gen.generate_stream(rep as u64).ok()?;
            let d = gen.design(&sim, &handle).ok()?;
            let grid = refit_grid(&d, &sel, &pen, cfg.n_lambda2, cfg.lambda2_range).ok()?;
            let res = refit(&d, &sel, &pen, &grid, &cfg.solver).ok()?;
            let idx = grid.iter().position(|&l| l == res.lambda2).unwrap_or(0);
            let pts = cfg
                .points
                .iter()
                .map(|&s| res.curve_point(&handle, s).ok())
                .collect::<Option<Vec<_>>>()?;
            Some((idx, pts))
        })
        .collect();
    let lambda2_index: Vec<usize> = per_rep.iter().flatten().map(|r| r.0).collect();
    let ok: Vec<&Vec<CurvePoint>> = per_rep.iter().flatten().map(|r| &r.1).collect();
    let failures = per_rep.len() - ok.len();
    let points = cfg
        .points
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let truth = cfg.scenario.scenario.beta(s);
            let est: Vec<f64> = ok.iter().map(|r| r[i].beta).collect();
            let ses: Vec<f64> = ok.iter().map(|r| r[i].se).collect();
            let covered = ok.iter().filter(|r| r[i].lo <= truth && truth <= r[i].hi).count();
            let (mean_estimate, ese) = mean_sd(&est);
            CoveragePoint {
                s,
                truth,
                mean_estimate,
                ase: mean_sd(&ses).0,
                ese,
                coverage: covered as f64 / ok.len().max(1) as f64,
            }
        })
        .collect();
    Ok(CoverageReport {
        config: cfg.clone(),
        reps_ok: ok.len(),
        failures,
        points,
        lambda2_index,
    })
}

impl CoverageReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,truth,mean_estimate,ase,ese,coverage")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                sig10(p.s),
                sig10(p.truth),
                sig10(p.mean_estimate),
                sig10(p.ase),
                sig10(p.ese),
                sig10(p.coverage)
            )?;
        }
        Ok(())
    }
}


/// Ring-measured synthetic cohort shaped like a greenness study: exposure
/// known at a handful of radii (physical units), a protective effect that is
/// strongest at the residence and vanishes from `buffer` on, stratified
/// baseline hazards.
///
/// The truth lies in the span of the fitting basis, `beta = kappa (B_0 + ...
/// + B_{k-1})` with `B_k` the first function whose support reaches past
/// `buffer`, so `buffer` must be a knot. `kappa` fixes the hazard ratio for
/// raising the exposure by `increment` on `[0, buffer]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseStudyConfig {
    pub n: usize,
    pub seed: u64,
    /// Ring radii, starting at 0.
    pub radii: Vec<f64>,
    /// Inner knots of the cubic fitting basis on `[0, last radius]`.
    pub knots: Vec<f64>,
    pub buffer: f64,
    pub hazard_ratio: f64,
    pub increment: f64,
    pub exposure_mean: f64,
    pub exposure_sd: f64,
    /// Share of exposure variance that is common to all rings of a subject.
    pub subject_share: f64,
    /// Lag-one correlation of the ring-specific part.
    pub ring_ar: f64,
    pub theta: Vec<f64>,
    /// Baseline hazard multiplier per stratum.
    pub strata_rates: Vec<f64>,
    pub censor_fraction: f64,
}

/// The case-study coefficient function on its fitting basis.
#[derive(Debug, Clone)]
pub struct CaseTruth {
    pub basis: BasisHandle,
    pub coefs: Vec<f64>,
}

impl CaseTruth {
    pub fn beta(&self, s: f64) -> f64 {
        self.basis.curve(&self.coefs, s)
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.basis.basis_integrals(a, b).dot(&DVector::from_column_slice(&self.coefs))
    }
}

impl CaseStudyConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            radii: vec![0.0, 90.0, 150.0, 270.0, 510.0, 750.0, 990.0, 1230.0, 1500.0, 2100.0],
            knots: vec![150.0, 270.0, 510.0, 990.0, 1500.0],
            buffer: 510.0,
            hazard_ratio: 0.946,
            increment: 0.1,
            exposure_mean: 0.48,
            exposure_sd: 0.15,
            subject_share: 0.5,
            ring_ar: 0.6,
            theta: vec![1.2f64.ln()],
            strata_rates: vec![0.5, 1.0, 1.5, 2.0],
            censor_fraction: 0.3,
        }
    }

    /// `int_0^buffer beta`, fixed by the target hazard ratio.
    pub fn cumulative_effect(&self) -> f64 {
        self.hazard_ratio.ln() / self.increment
    }

    pub fn fit_basis(&self) -> Result<BasisHandle> {
        let hi = *self
            .radii
            .last()
            .ok_or_else(|| Error::Config("case study needs radii".into()))?;
        build_basis(BasisSpec::with_knots(3, 0.0, hi, self.knots.clone()))
    }

    pub fn truth(&self) -> Result<CaseTruth> {
        let basis = self.fit_basis()?;
        let bp = basis.breakpoints();
        let j = bp
            .iter()
            .position(|&k| (k - self.buffer).abs() <= 1e-9 * basis.width())
            .filter(|&j| j > 0 && j + 1 < bp.len())
            .ok_or_else(|| Error::Config(format!("buffer {} is not an inner knot", self.buffer)))?;
        // B_k vanishes beyond breakpoint j exactly when k < j
        let mut coefs = vec![0.0; basis.n_basis()];
        for c in coefs.iter_mut().take(j) {
            *c = 1.0;
        }
        let kappa = self.cumulative_effect() / basis.basis_integrals(0.0, self.buffer).rows(0, j).sum();
        for c in coefs.iter_mut().take(j) {
            *c = kappa;
        }
        Ok(CaseTruth { basis, coefs })
    }
}

/// Censoring rate giving an expected censored share of `target` when
/// subject `i` has event rate `rates[i]`.
fn censor_rate(rates: &[f64], target: f64) -> f64 {
    let share = |rho: f64| rates.iter().map(|&l| rho / (rho + l)).sum::<f64>() / rates.len() as f64;
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if share(mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

pub fn generate_case_study(cfg: &CaseStudyConfig) -> Result<SurvivalDataset> {
    if cfg.radii.len() < 2 || cfg.radii[0] != 0.0 {
        return Err(Error::Config("case study needs at least two radii starting at 0".into()));
    }
    if cfg.strata_rates.is_empty() || !(0.0..1.0).contains(&cfg.censor_fraction) {
        return Err(Error::Config("case study needs strata rates and a censoring share in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let radii: Arc<[f64]> = cfg.radii.clone().into();
    let r = radii.len();
    let p = cfg.theta.len();
    let truth = cfg.truth()?;
    let coefs = DVector::from_column_slice(&truth.coefs);
    let innov = (1.0 - cfg.ring_ar * cfg.ring_ar).sqrt();
    let mut exposure = Vec::with_capacity(cfg.n);
    let mut z = DMatrix::zeros(cfg.n, p);
    let mut strata = Vec::with_capacity(cfg.n);
    let mut rates = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let u: f64 = rng.sample(StandardNormal);
        let mut e: f64 = rng.sample(StandardNormal);
        let mut vals = Vec::with_capacity(r);
        for k in 0..r {
            if k > 0 {
                let d: f64 = rng.sample(StandardNormal);
                e = cfg.ring_ar * e + innov * d;
            }
            let x = cfg.exposure_mean
                + cfg.exposure_sd * (cfg.subject_share.sqrt() * u + (1.0 - cfg.subject_share).sqrt() * e);
            vals.push(x.clamp(0.0, 1.0));
        }
        let ring = RingExposure::new(radii.clone(), vals)?;
        // the same quadrature the fitting design uses
        let mut eta = functional_design_row(&truth.basis, &ring)?.dot(&coefs);
        for k in 0..p {
            let v: f64 = rng.sample(StandardNormal);
            z[(i, k)] = v;
            eta += cfg.theta[k] * v;
        }
        let st = rng.gen_range(0..cfg.strata_rates.len());
        strata.push(st as u32);
        rates.push(cfg.strata_rates[st] * eta.exp());
        exposure.push(ExposureFunction::Rings(ring));
    }
    let rho = censor_rate(&rates, cfg.censor_fraction);
    let censor = Exp::new(rho).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut time = Vec::with_capacity(cfg.n);
    let mut event = Vec::with_capacity(cfg.n);
    for &rate in &rates {
        let u: f64 = 1.0 - rng.gen::<f64>();
        let t = (-u.ln() / rate).max(f64::MIN_POSITIVE);
        let c: f64 = censor.sample(&mut rng);
        if t <= c {
            time.push(t);
            event.push(true);
        } else {
            time.push(c.max(f64::MIN_POSITIVE));
            event.push(false);
        }
    }
    let mut ds = SurvivalDataset::new(time, event, z, exposure, Some(strata))?;
    ds.covariate_names = (1..=p).map(|k| format!("z{k}")).collect();
    Ok(ds)
}

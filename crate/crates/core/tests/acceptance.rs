//! Acceptance suite. Prints one PASS/FAIL line per criterion plus two
//! supplementary checks, then a count. The suite reports rather than
//! aborts: a FAIL line does not change the exit status, so the outcome is
//! read from the printed lines.
//!
//! Everything runs on seed 7, which was not used while choosing grids or the
//! case-study design.

use std::fs;
use std::path::Path;
use std::time::Instant;

use funbuffer::basis::{build_basis, roughness_matrix, BasisHandle, BasisSpec};
use funbuffer::cli::{cmd_fit, cmd_simulate, emit_data, read_fit_summary, RunConfig, RunLog};
use funbuffer::coxcore::{grad_hess, gradient, logpl, CoxData};
use funbuffer::inference::{refit, simdiag, RegionSelection};
use funbuffer::simulate::{
    imse, run_coverage, run_study, CaseStudyConfig, CoverageConfig, Generator, ReplicationReport,
    Scenario, ScenarioConfig, StudyConfig,
};
use funbuffer::solver::{fit, fit_smooth, weighted_lasso_cd, PenaltyConfig, Problem, SolverOptions, Variant};
use funbuffer::survdata::DesignedData;
use funbuffer::tuning::{argmin_bic, select, GridSpec, TuningCell, TuningGrid, TuningOptions};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

const SEED: u64 = 7;
const REPS: usize = 100;

struct Outcome {
    failed: usize,
    total: usize,
}

impl Outcome {
    fn report(&mut self, label: &str, pass: bool, detail: String, started: Instant) {
        self.total += 1;
        if !pass {
            self.failed += 1;
        }
        println!(
            "{} [{label}] {detail} ({:.0}s)",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
    }
}

fn study(scenario: Scenario, n: usize, variants: &[Variant]) -> ReplicationReport {
    let t = Instant::now();
    let cfg = StudyConfig::new(ScenarioConfig::new(scenario, n, SEED), variants.to_vec(), REPS);
    let r = run_study(&cfg).expect("study runs");
    eprintln!("  study {scenario} n={n}: {:.0}s", t.elapsed().as_secs_f64());
    r
}

fn summary(r: &ReplicationReport, v: Variant) -> &funbuffer::simulate::VariantSummary {
    r.summary(v).expect("variant in study")
}

// ---------------------------------------------------------------------------
// Reference Cox machinery, written directly from the Breslow partial
// likelihood with O(n^2) risk sets.

fn breslow(x: &DMatrix<f64>, time: &[f64], event: &[bool], strata: &[u32], beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
    let (n, m) = x.shape();
    let eta = x * beta;
    let mut l = 0.0;
    let mut g = DVector::zeros(m);
    let mut h = DMatrix::zeros(m, m);
    for i in 0..n {
        if !event[i] {
            continue;
        }
        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(m);
        let mut s2 = DMatrix::zeros(m, m);
        for j in 0..n {
            if strata[j] == strata[i] && time[j] >= time[i] {
                let w = eta[j].exp();
                let xj = x.row(j).transpose();
                s0 += w;
                s1 += &xj * w;
                s2 += &xj * xj.transpose() * w;
            }
        }
        let xbar = &s1 / s0;
        l += eta[i] - s0.ln();
        g += x.row(i).transpose() - &xbar;
        h -= s2 / s0 - &xbar * xbar.transpose();
    }
    (l, g, h)
}

fn reference_newton(d: &DesignedData) -> DVector<f64> {
    let x = DMatrix::from_fn(d.n(), d.n_coef(), |i, k| d.row(i)[k]);
    let mut beta = DVector::zeros(d.n_coef());
    for _ in 0..100 {
        let (_, g, h) = breslow(&x, &d.time, &d.event, &d.strata, &beta);
        let step = (-h).cholesky().expect("information is PD").solve(&g);
        beta += &step;
        if step.amax() < 1e-13 {
            break;
        }
    }
    beta
}

fn random_data(rng: &mut ChaCha8Rng, n: usize, l: usize, p: usize, ties: bool, strata: bool) -> DesignedData {
    let phi = DMatrix::from_fn(n, l, |_, _| rng.gen_range(-1.0..1.0));
    let z = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-1.0..1.0));
    let exp = Exp::new(1.0).unwrap();
    let time: Vec<f64> = (0..n)
        .map(|i| {
            let eta = 0.5 * (0..l).map(|k| phi[(i, k)]).sum::<f64>() - 0.4 * (0..p).map(|k| z[(i, k)]).sum::<f64>();
            let t = exp.sample(rng) * (-eta).exp();
            if ties {
                (t * 4.0).ceil() / 4.0
            } else {
                t
            }
        })
        .collect();
    let mut event: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.75)).collect();
    event[0] = true;
    let st = strata.then(|| (0..n).map(|i| (i % 3) as u32).collect());
    DesignedData::new(phi, z, time, event, st).unwrap()
}

fn criterion_4() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    // (a) gradient against central differences, plus the value against the
    // brute-force likelihood
    let mut worst_grad: f64 = 0.0;
    let mut worst_value: f64 = 0.0;
    for case in 0..20 {
        let n = rng.gen_range(12..=50);
        let d = random_data(&mut rng, n, 4, 2, case % 2 == 0, case % 3 == 0);
        let cox = CoxData::new(&d).unwrap();
        let a = DVector::from_fn(6, |_, _| rng.gen_range(-0.5..0.5));
        let g = gradient(&cox, &a);
        let eps = 1e-6;
        let fd = DVector::from_fn(6, |k, _| {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap[k] += eps;
            am[k] -= eps;
            -(logpl(&cox, &ap) - logpl(&cox, &am)) / (2.0 * eps)
        });
        worst_grad = worst_grad.max((&fd - &g).norm() / g.norm().max(1e-12));
        let x = DMatrix::from_fn(n, 6, |i, k| d.row(i)[k]);
        let (l, _, _) = breslow(&x, &d.time, &d.event, &d.strata, &a);
        worst_value = worst_value.max((logpl(&cox, &a) - l).abs() / l.abs().max(1.0));
    }
    let a_ok = worst_grad < 1e-6 && worst_value < 1e-12;

    // (b) unpenalized fit against reference Newton
    let mut worst_newton: f64 = 0.0;
    for (l, p) in [(0, 3), (2, 1)] {
        let d = random_data(&mut rng, 120, l, p, true, true);
        let cox = CoxData::new(&d).unwrap();
        let problem = Problem::new(&cox, None, 3);
        let f = fit_smooth(&problem, 0.0, None, &SolverOptions::default()).unwrap();
        worst_newton = worst_newton.max((&f.coefs.alpha - reference_newton(&d)).amax());
    }
    let b_ok = worst_newton < 1e-6;

    // (c) coordinate descent with zero weights against the normal equations
    let mut worst_cd: f64 = 0.0;
    for _ in 0..20 {
        let (rows, m) = (40, rng.gen_range(3..=8));
        let v = DMatrix::from_fn(rows, m, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_fn(rows, |_, _| rng.gen_range(-2.0..2.0));
        let cd = weighted_lasso_cd(&y, &v, rows, &vec![0.0; m - 1], None, &SolverOptions::default());
        let direct = (v.transpose() * &v).cholesky().unwrap().solve(&(v.transpose() * &y));
        worst_cd = worst_cd.max((cd.alpha - direct).amax());
    }
    let c_ok = worst_cd < 1e-8;

    // (d) unpenalized refit variance against (1/n) B' H^{-1} B
    let h = build_basis(BasisSpec::uniform(3, 26, 0.0, 1.0)).unwrap();
    let pen = roughness_matrix(&h).unwrap();
    let g = Generator::new(ScenarioConfig::new(Scenario::III, 400, SEED)).unwrap();
    let d = g.design(&g.generate_stream(0).unwrap(), &h).unwrap();
    let sel = RegionSelection::covering(&h, 0.0, 0.3);
    let res = refit(&d, &sel, &pen, &[0.0], &SolverOptions::default()).unwrap();
    let restricted = CoxData::new(&d.restrict(&sel.active)).unwrap();
    let alpha: Vec<f64> = res.b.iter().chain(&res.theta).copied().collect();
    let (_, hess) = grad_hess(&restricted, &DVector::from_vec(alpha));
    let hinv = (hess / res.n as f64).try_inverse().unwrap();
    let mut worst_var: f64 = 0.0;
    for i in 0..=12 {
        let s = 0.025 * i as f64;
        let full = h.eval(s);
        let mut bt = DVector::zeros(res.q() + res.p());
        for (k, &u) in sel.active.iter().enumerate() {
            bt[k] = full[u];
        }
        let oracle = (bt.transpose() * &hinv * &bt)[0] / res.n as f64;
        worst_var = worst_var.max((res.variance(&h, s).unwrap() - oracle).abs() / oracle);
    }
    let d_ok = worst_var < 1e-8;

    // (e) simultaneous diagonalization, random pairs and a real refit pair
    let mut worst_sd: f64 = 0.0;
    let mut check = |hm: &DMatrix<f64>, pm: &DMatrix<f64>, r: &DMatrix<f64>, pi: &DVector<f64>| {
        let m = hm.nrows();
        let e1 = (r.transpose() * hm * r - DMatrix::identity(m, m)).amax();
        let e2 = (r.transpose() * pm * r - DMatrix::from_diagonal(pi)).amax() / pi.amax().max(1.0);
        worst_sd = worst_sd.max(e1).max(e2);
    };
    for _ in 0..20 {
        let m = rng.gen_range(3..=15);
        let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        let hm = &a * a.transpose() + DMatrix::identity(m, m) * 0.1;
        let b = DMatrix::from_fn(m, m - 2, |_, _| rng.gen_range(-1.0..1.0));
        let pm = &b * b.transpose();
        let (r, pi) = simdiag(&hm, &pm).unwrap();
        check(&hm, &pm, &r, &pi);
    }
    let smooth = refit(&d, &sel, &pen, &[1e-4], &SolverOptions::default()).unwrap();
    check(&smooth.h, &smooth.p_mat, &smooth.r, &smooth.pi);
    let e_ok = worst_sd < 1e-8;

    (
        a_ok && b_ok && c_ok && d_ok && e_ok,
        format!(
            "oracles: (a) grad rel err {worst_grad:.1e}, value {worst_value:.1e}; (b) Newton {worst_newton:.1e}; \
             (c) CD {worst_cd:.1e}; (d) variance rel err {worst_var:.1e}; (e) simdiag {worst_sd:.1e}"
        ),
    )
}

// ---------------------------------------------------------------------------

/// Knot averages: coefficients that reproduce the identity function.
fn greville(h: &BasisHandle) -> Vec<f64> {
    let d = h.degree();
    let bp = h.breakpoints();
    let (lo, hi) = h.domain();
    let mut t = vec![lo; d];
    t.extend_from_slice(bp);
    t.extend(std::iter::repeat(hi).take(d));
    (0..h.n_basis()).map(|k| t[k + 1..k + 1 + d].iter().sum::<f64>() / d as f64).collect()
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> bool {
    names.iter().all(|f| fs::read(a.join(f)).ok().is_some_and(|x| Some(x) == fs::read(b.join(f)).ok()))
}

fn criterion_5(tmp: &Path) -> (bool, String) {
    let handles = [
        build_basis(BasisSpec::uniform(3, 26, 0.0, 1.0)).unwrap(),
        build_basis(BasisSpec::uniform(2, 7, -1.0, 3.0)).unwrap(),
        CaseStudyConfig::new(10, SEED).fit_basis().unwrap(),
    ];
    let mut pou: f64 = 0.0;
    let mut nullspace: f64 = 0.0;
    let mut identity: f64 = 0.0;
    for h in &handles {
        let (lo, hi) = h.domain();
        for i in 0..=5000 {
            let s = lo + (hi - lo) * i as f64 / 5000.0;
            pou = pou.max((h.eval(s).sum() - 1.0).abs());
        }
        let j = roughness_matrix(h).unwrap().j;
        let ones = DVector::from_element(h.n_basis(), 1.0);
        // a linear function on the unit-mapped scale
        let lin = DVector::from_iterator(h.n_basis(), greville(h).into_iter().map(|g| h.to_unit(g)));
        for b in [&ones, &lin] {
            nullspace = nullspace.max((&j * b).amax()).max((b.transpose() * &j * b)[0].abs());
        }
        let g = greville(h);
        for i in 0..=50 {
            let s = lo + (hi - lo) * i as f64 / 50.0;
            identity = identity.max((h.curve(&g, s) - s).abs() / (hi - lo));
        }
    }
    let basis_ok = pou < 1e-12 && nullspace <= 1e-10 && identity < 1e-12;

    // exact zeros on intervals whose whole group is zero
    let h = &handles[0];
    let pen = roughness_matrix(h).unwrap();
    let g = Generator::new(ScenarioConfig::new(Scenario::II, 1000, SEED)).unwrap();
    let d = g.design(&g.generate_stream(0).unwrap(), h).unwrap();
    let cox = CoxData::new(&d).unwrap();
    let problem = Problem::new(&cox, Some(&pen), 3);
    let grid = TuningGrid::for_problem(&problem, Variant::SplineGbridge, &GridSpec::default());
    let mut zero_intervals = 0;
    let mut zeros_ok = true;
    for i1 in [8, 12, 16] {
        let cfg = PenaltyConfig::new(Variant::SplineGbridge, grid.lambda1[i1], grid.lambda2[5]);
        let f = fit(&problem, &cfg, &SolverOptions::default()).unwrap();
        let b = f.b();
        for j in 0..h.n_intervals() {
            if h.group(j).all(|k| b[k] == 0.0) {
                zero_intervals += 1;
                let (a, c) = h.interval(j);
                zeros_ok &= (0..=50).all(|i| h.curve(b, a + (c - a) * i as f64 / 50.0) == 0.0);
            }
        }
    }
    zeros_ok &= zero_intervals > 0;

    // BIC near-ties go to larger lambda1, then larger lambda2
    let cell = |l1: f64, l2: f64, bic: f64| TuningCell {
        lambda1: l1,
        lambda2: l2,
        bic,
        df: 1.0,
        loglik: 0.0,
        objective: 0.0,
        nonzero: 0,
        converged: true,
        jitter: 0.0,
    };
    let cells = vec![
        cell(0.1, 1.0, 50.0),
        cell(0.2, 1.0, 50.0 * (1.0 + 1e-12)),
        cell(0.1, 2.0, 50.0),
        cell(0.2, 2.0, 50.0),
        cell(0.3, 0.5, 50.1),
    ];
    let tie_ok = argmin_bic(&cells) == Some(3) && argmin_bic(&cells[..2]) == Some(1);

    // repeat runs are bit-identical
    let mut small = StudyConfig::new(ScenarioConfig::new(Scenario::II, 300, SEED), Variant::ALL.to_vec(), 3);
    small.grid.n_lambda1 = 6;
    small.grid.n_lambda2 = 4;
    let a = serde_json::to_string(&run_study(&small).unwrap()).unwrap();
    let b2 = serde_json::to_string(&run_study(&small).unwrap()).unwrap();
    let mut cfg = RunConfig {
        n: 300,
        reps: 2,
        seed: SEED,
        grid_l1: "6:1e-4:10".into(),
        grid_l2: "4:1e-2:1e4".into(),
        ..RunConfig::default()
    };
    let mut dirs = vec![];
    for k in 0..2 {
        cfg.out = tmp.join(format!("sim{k}"));
        cmd_simulate(&cfg, &mut RunLog::new(false)).unwrap();
        let data = tmp.join("scenario2.csv");
        emit_data(&cfg, &data, false, 101).unwrap();
        let fit_cfg = RunConfig {
            data: Some(data),
            out: tmp.join(format!("fit{k}")),
            ..cfg.clone()
        };
        cmd_fit(&fit_cfg, &mut RunLog::new(false)).unwrap();
        dirs.push((cfg.out.clone(), fit_cfg.out));
    }
    let files_ok = same_files(&dirs[0].0, &dirs[1].0, &["reps.csv", "aggregate.json"])
        && same_files(
            &dirs[0].1,
            &dirs[1].1,
            &["regions.json", "cumulative.json", "beta_curve.csv", "tuning.csv"],
        );
    let det_ok = a == b2 && files_ok;

    (
        basis_ok && zeros_ok && tie_ok && det_ok,
        format!(
            "invariants: partition of unity {pou:.1e}, J affine nullspace {nullspace:.1e}, \
             exact zeros on {zero_intervals} null intervals {}, BIC tie-break {}, repeat runs identical {}",
            ok(zeros_ok),
            ok(tie_ok),
            ok(det_ok)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "BROKEN"
    }
}

/// Warm- and cold-started tuning select the same pair.
fn warm_cold() -> (bool, String) {
    let h = build_basis(BasisSpec::uniform(3, 26, 0.0, 1.0)).unwrap();
    let pen = roughness_matrix(&h).unwrap();
    let g = Generator::new(ScenarioConfig::new(Scenario::II, 500, SEED)).unwrap();
    let mut agree = 0;
    let mut total = 0;
    for rep in 0..3 {
        let d = g.design(&g.generate_stream(rep).unwrap(), &h).unwrap();
        let cox = CoxData::new(&d).unwrap();
        let problem = Problem::new(&cox, Some(&pen), 3);
        for v in Variant::ALL {
            let grid = TuningGrid::for_problem(&problem, v, &GridSpec::default());
            let pick = |warm: bool| {
                let opts = TuningOptions {
                    warm_start: warm,
                    ..TuningOptions::default()
                };
                let r = select(&problem, v, &grid, &opts).unwrap();
                let c = r.selected_cell();
                (c.lambda1, c.lambda2)
            };
            total += 1;
            agree += (pick(true) == pick(false)) as usize;
        }
    }
    (agree == total, format!("warm vs cold start: same selected pair in {agree}/{total} fits"))
}

/// BIC selection against the fixed middle of the grid, Scenario II.
fn bic_vs_mid(s2: &ReplicationReport) -> (bool, String) {
    let h = build_basis(BasisSpec::uniform(3, 26, 0.0, 1.0)).unwrap();
    let pen = roughness_matrix(&h).unwrap();
    let g = Generator::new(ScenarioConfig::new(Scenario::II, 1000, SEED)).unwrap();
    let mut wins = 0;
    let mut total = 0;
    for row in s2.rows.iter().filter(|r| r.variant == Variant::SplineGbridge && r.error.is_none()) {
        let d = g.design(&g.generate_stream(row.rep as u64).unwrap(), &h).unwrap();
        let cox = CoxData::new(&d).unwrap();
        let problem = Problem::new(&cox, Some(&pen), 3);
        let grid = TuningGrid::for_problem(&problem, Variant::SplineGbridge, &GridSpec::default());
        let cfg = PenaltyConfig::new(
            Variant::SplineGbridge,
            grid.lambda1[grid.lambda1.len() / 2],
            grid.lambda2[grid.lambda2.len() / 2],
        );
        let Ok(f) = fit(&problem, &cfg, &SolverOptions::default()) else {
            continue;
        };
        total += 1;
        wins += (row.imse < imse(&h, f.b(), Scenario::II)) as usize;
    }
    let frac = wins as f64 / total.max(1) as f64;
    (
        frac >= 0.5,
        format!("BIC beats fixed mid-grid tuning on IMSE in {wins}/{total} reps ({frac:.2}, need >= 0.50)"),
    )
}

fn criterion_7(tmp: &Path) -> (bool, String) {
    let case = CaseStudyConfig::new(20_000, SEED);
    let target = case.hazard_ratio;
    let gen_cfg = RunConfig {
        n: case.n,
        seed: case.seed,
        ..RunConfig::default()
    };
    let data = tmp.join("case_study.csv");
    emit_data(&gen_cfg, &data, true, 0).unwrap();
    let cfg = RunConfig {
        data: Some(data),
        strata_col: Some("stratum".into()),
        knots: Some(case.knots.clone()),
        domain: Some([0.0, *case.radii.last().unwrap()]),
        increment: case.increment,
        seed: SEED,
        out: tmp.join("case_fit"),
        ..RunConfig::default()
    };
    if let Err(e) = cmd_fit(&cfg, &mut RunLog::new(false)) {
        return (false, format!("case study: fit failed: {e}"));
    }
    let s = read_fit_summary(&cfg.out).unwrap();
    let buffer = s.regions.buffer_distance;
    // neighbours of the true buffer among the fitting breakpoints
    let bp = &s.regions.breakpoints;
    let j = bp.iter().position(|&k| k == case.buffer).unwrap();
    let (lo, hi) = (bp[j - 1], bp[j + 1]);
    let buffer_ok = (lo..=hi).contains(&buffer);
    let (a, b) = s.cumulative.hr_ci;
    let ci_ok = s.cumulative.status == "ok" && a <= target && target <= b;
    (
        buffer_ok && ci_ok,
        format!(
            "case study (n = {}): buffer {buffer} (truth {}, accept [{lo}, {hi}]); HR per {} = {:.4} ({a:.4}, {b:.4}), calibrated {target}",
            case.n, case.buffer, case.increment, s.cumulative.hazard_ratio
        ),
    )
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut out = Outcome { failed: 0, total: 0 };
    let sgb = Variant::SplineGbridge;
    let trio = [sgb, Variant::Lasso, Variant::Gbridge];

    let t = Instant::now();
    let s1 = study(Scenario::I, 1000, &[sgb]);
    let s2 = study(Scenario::II, 1000, &trio);
    let s3 = study(Scenario::III, 1000, &trio);
    let (m1, m2, m3) = (
        summary(&s1, sgb).supremum_mean,
        summary(&s2, sgb).supremum_mean,
        summary(&s3, sgb).supremum_mean,
    );
    let fails: usize = [&s1, &s2, &s3].iter().map(|s| summary(s, sgb).failures).sum();
    out.report(
        "1",
        m1 <= 0.20 && (0.40..=0.72).contains(&m2) && (0.43..=0.77).contains(&m3),
        format!(
            "scenario recovery, mean supremum: I {m1:.3} (<= 0.20), II {m2:.3} in [0.40, 0.72], III {m3:.3} in [0.43, 0.77]; {fails} failed reps"
        ),
        t,
    );

    let t = Instant::now();
    let im = |s: &ReplicationReport, v| summary(s, v).imse_mean;
    let order = |s: &ReplicationReport| im(s, sgb) < im(s, Variant::Lasso) && im(s, sgb) < im(s, Variant::Gbridge);
    let ii = im(&s2, sgb);
    out.report(
        "2",
        order(&s2) && order(&s3) && (0.30..=0.70).contains(&ii),
        format!(
            "IMSE ordering: II SGB {ii:.3} / Lasso {:.3} / Gbridge {:.3}; III SGB {:.3} / Lasso {:.3} / Gbridge {:.3}; II SGB in [0.30, 0.70]",
            im(&s2, Variant::Lasso),
            im(&s2, Variant::Gbridge),
            im(&s3, sgb),
            im(&s3, Variant::Lasso),
            im(&s3, Variant::Gbridge)
        ),
        t,
    );

    let t = Instant::now();
    let cov = run_coverage(&CoverageConfig::new(ScenarioConfig::new(Scenario::III, 500, SEED), 200)).expect("coverage runs");
    let cov_lo = cov.points.iter().map(|p| p.coverage).fold(f64::INFINITY, f64::min);
    let cov_hi = cov.points.iter().map(|p| p.coverage).fold(0.0, f64::max);
    let ratio = |p: &funbuffer::simulate::CoveragePoint| p.ase / p.ese;
    let worst_ratio = cov.points.iter().map(|p| (ratio(p) - 1.0).abs()).fold(0.0, f64::max);
    let cov_ok = cov.points.len() == 9
        && cov.points.iter().all(|p| (0.88..=0.99).contains(&p.coverage) && (ratio(p) - 1.0).abs() <= 0.20);
    out.report(
        "3",
        cov_ok,
        format!(
            "coverage ({} of 200 refits): pointwise in [{cov_lo:.3}, {cov_hi:.3}] (need [0.88, 0.99]); max |ASE/ESE - 1| = {worst_ratio:.3} (need <= 0.20)",
            cov.reps_ok
        ),
        t,
    );

    let t = Instant::now();
    let (pass, detail) = criterion_4();
    out.report("4", pass, detail, t);

    let t = Instant::now();
    let (pass, detail) = criterion_5(tmp.path());
    out.report("5", pass, detail, t);

    let t = Instant::now();
    let s500 = study(Scenario::II, 500, &[sgb]);
    let (a, b) = (summary(&s500, sgb), summary(&s2, sgb));
    out.report(
        "6",
        b.null_tail_fraction >= a.null_tail_fraction && b.imse_median <= a.imse_median,
        format!(
            "n = 500 -> 1000: sparsistency {:.2} -> {:.2} (non-decreasing), median IMSE {:.3} -> {:.3} (non-increasing)",
            a.null_tail_fraction, b.null_tail_fraction, a.imse_median, b.imse_median
        ),
        t,
    );

    let t = Instant::now();
    let (pass, detail) = criterion_7(tmp.path());
    out.report("7", pass, detail, t);

    let t = Instant::now();
    let (pass, detail) = bic_vs_mid(&s2);
    out.report("extra", pass, detail, t);

    let t = Instant::now();
    let (pass, detail) = warm_cold();
    out.report("extra", pass, detail, t);

    println!("{} of {} checks passed", out.total - out.failed, out.total);
}

//! Penalized estimators for the functional Cox model.
//!
//! Every variant minimizes
//!
//! ```text
//! -l_n(alpha)/n + lambda1 * P(b) + lambda2 * b'Jb
//! ```
//!
//! where `P` is the group bridge `sum_j ||b_{A_j}||_1^gamma` over overlapping
//! groups `A_j = {j, ..., j+d}`, the plain lasso `sum_k |b_k|`, or absent.
//! Each outer iteration replaces `-l_n` by its least-squares surrogate at the
//! current point, linearizes the bridge into per-coefficient lasso weights,
//! and solves the resulting weighted lasso by coordinate descent.

use crate::basis::PenaltyMatrices;
use crate::coxcore::{logpl, surrogate, Coefs, CoxData};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Spline,
    Lasso,
    Gbridge,
    SplineLasso,
    SplineGbridge,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Spline,
        Variant::Lasso,
        Variant::Gbridge,
        Variant::SplineLasso,
        Variant::SplineGbridge,
    ];

    pub fn smooth(self) -> bool {
        matches!(self, Variant::Spline | Variant::SplineLasso | Variant::SplineGbridge)
    }

    pub fn sparse(self) -> bool {
        !matches!(self, Variant::Spline)
    }

    pub fn bridge(self) -> bool {
        matches!(self, Variant::Gbridge | Variant::SplineGbridge)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Spline => "Spline",
            Variant::Lasso => "Lasso",
            Variant::Gbridge => "Gbridge",
            Variant::SplineLasso => "Spline-Lasso",
            Variant::SplineGbridge => "Spline-Gbridge",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "spline" => Ok(Variant::Spline),
            "lasso" => Ok(Variant::Lasso),
            "gbridge" => Ok(Variant::Gbridge),
            "splinelasso" => Ok(Variant::SplineLasso),
            "splinegbridge" => Ok(Variant::SplineGbridge),
            _ => Err(Error::Config(format!("unknown variant '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub variant: Variant,
}

impl PenaltyConfig {
    pub fn new(variant: Variant, lambda1: f64, lambda2: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            gamma: 0.5,
            variant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return bad(format!("lambda1 must be finite and >= 0, got {}", self.lambda1));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad(format!("lambda2 must be finite and >= 0, got {}", self.lambda2));
        }
        // gamma = 1 is accepted as the lasso limit of the bridge
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !self.variant.sparse() && self.lambda1 != 0.0 {
            return bad(format!("{} requires lambda1 = 0", self.variant));
        }
        if !self.variant.smooth() && self.lambda2 != 0.0 {
            return bad(format!("{} requires lambda2 = 0", self.variant));
        }
        Ok(())
    }
}

/// Iteration controls. Defaults follow the documented tolerances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    pub outer_tol: f64,
    pub max_outer: usize,
    pub cd_tol: f64,
    pub max_cd_sweeps: usize,
    pub smooth_tol: f64,
    pub max_smooth: usize,
    pub max_halvings: usize,
    /// Initial points for the nonconvex bridge variants.
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            outer_tol: 1e-6,
            max_outer: 100,
            cd_tol: 1e-8,
            max_cd_sweeps: 10_000,
            smooth_tol: 1e-7,
            max_smooth: 50,
            max_halvings: 20,
            n_starts: 5,
            seed: 0,
        }
    }
}

/// Likelihood, roughness penalty and group layout of one fitting problem.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub cox: &'a CoxData,
    pub penalty: Option<&'a PenaltyMatrices>,
    /// Coefficients per group, `d + 1` for a degree-`d` basis.
    pub group_width: usize,
}

impl<'a> Problem<'a> {
    pub fn new(cox: &'a CoxData, penalty: Option<&'a PenaltyMatrices>, degree: usize) -> Self {
        Self {
            cox,
            penalty,
            group_width: degree + 1,
        }
    }

    pub fn n_spline(&self) -> usize {
        self.cox.n_spline()
    }

    pub fn n_groups(&self) -> usize {
        (self.n_spline() + 1).saturating_sub(self.group_width)
    }

    fn roughness(&self, b: &[f64]) -> f64 {
        self.penalty.map_or(0.0, |p| p.quad(b))
    }

    /// `sum_j ||b_{A_j}||_1^gamma`.
    pub fn bridge_penalty(&self, b: &[f64], gamma: f64) -> f64 {
        (0..self.n_groups())
            .map(|j| group_norm(b, j, self.group_width).powf(gamma))
            .sum()
    }

    /// The true penalized objective `-L_n(alpha)`.
    pub fn objective(&self, config: &PenaltyConfig, alpha: &DVector<f64>) -> f64 {
        let n = self.cox.n() as f64;
        let b = &alpha.as_slice()[..self.n_spline()];
        let mut f = -logpl(self.cox, alpha) / n;
        if config.variant.smooth() && config.lambda2 > 0.0 {
            f += config.lambda2 * self.roughness(b);
        }
        if config.lambda1 > 0.0 {
            f += config.lambda1
                * if config.variant.bridge() {
                    self.bridge_penalty(b, config.gamma)
                } else {
                    b.iter().map(|v| v.abs()).sum()
                };
        }
        f
    }
}

fn group_norm(b: &[f64], j: usize, width: usize) -> f64 {
    b[j..j + width].iter().map(|v| v.abs()).sum()
}

/// Outcome of the smoothness-only fit.
#[derive(Debug, Clone)]
pub struct SmoothFit {
    pub coefs: Coefs,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub jitter: f64,
}

/// Penalized Newton iterations for `-l_n/n + lambda2 b'Jb`, starting at `init`
/// (zero when `None`). Each step solves `(V'V + 2 n lambda2 J*) a = V'Y` at the
/// current point, halving toward the previous iterate if the objective rises.
pub fn fit_smooth(
    problem: &Problem,
    lambda2: f64,
    init: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> Result<SmoothFit> {
    if !(lambda2 >= 0.0) {
        return Err(Error::Config(format!("lambda2 must be >= 0, got {lambda2}")));
    }
    let cfg = PenaltyConfig::new(Variant::Spline, 0.0, lambda2);
    let m = problem.cox.m();
    let mut alpha = init.cloned().unwrap_or_else(|| DVector::zeros(m));
    let mut obj = problem.objective(&cfg, &alpha);
    let mut jitter: f64 = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_smooth {
        iterations = it;
        let s = surrogate(problem.cox, &alpha, lambda2, problem.penalty)?;
        jitter = jitter.max(s.jitter);
        let (gram, rhs) = s.normal_equations();
        let target = solve_spd(&gram, &rhs)
            .ok_or_else(|| Error::Numerical("penalized Newton system is singular".into()))?;
        let (next, next_obj) = halve_toward(problem, &cfg, &alpha, obj, &target, opts);
        let step = (&next - &alpha).amax();
        alpha = next;
        obj = next_obj;
        if step < opts.smooth_tol {
            converged = true;
            break;
        }
    }
    Ok(SmoothFit {
        coefs: Coefs::new(alpha, problem.n_spline()),
        converged,
        iterations,
        objective: obj,
        jitter,
    })
}

/// Accept `target` if the objective does not rise, otherwise halve the step
/// toward `current` up to `max_halvings` times. Returns `current` if nothing
/// decreases the objective.
fn halve_toward(
    problem: &Problem,
    cfg: &PenaltyConfig,
    current: &DVector<f64>,
    current_obj: f64,
    target: &DVector<f64>,
    opts: &SolverOptions,
) -> (DVector<f64>, f64) {
    let slack = 1e-13 * current_obj.abs().max(1.0);
    let dir = target - current;
    let mut t = 1.0;
    for _ in 0..=opts.max_halvings {
        let cand = if t == 1.0 {
            target.clone()
        } else {
            current + &dir * t
        };
        let f = problem.objective(cfg, &cand);
        if f.is_finite() && f <= current_obj + slack {
            return (cand, f);
        }
        t *= 0.5;
    }
    (current.clone(), current_obj)
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(c) = a.clone().cholesky() {
        return Some(c.solve(b));
    }
    a.clone().lu().solve(b)
}

/// Bridge auxiliary variables and the per-coefficient lasso weights they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupWeights {
    /// `mu_j`, one per group.
    pub mu: Vec<f64>,
    /// `xi_k`, one per spline coefficient; `+inf` marks a frozen coefficient.
    pub xi: Vec<f64>,
}

/// `zeta = lambda1^{1/(1-gamma)} gamma^{gamma/(1-gamma)} (1-gamma)`.
pub fn bridge_zeta(lambda1: f64, gamma: f64) -> f64 {
    lambda1.powf(1.0 / (1.0 - gamma)) * gamma.powf(gamma / (1.0 - gamma)) * (1.0 - gamma)
}

/// `mu_j = ((1-gamma)/(gamma zeta))^gamma ||b_{A_j}||_1^gamma` and
/// `xi_k = sum_{j: k in A_j} mu_j^{1 - 1/gamma}`.
///
/// A group with zero norm has `mu_j = 0` and freezes its coefficients
/// (`xi = +inf`). With `lambda1 = 0` all weights vanish; with `gamma = 1` the
/// weights take their lasso limit `lambda1` per group.
pub fn update_group_weights(b: &[f64], group_width: usize, lambda1: f64, gamma: f64) -> GroupWeights {
    let l = b.len();
    let n_groups = (l + 1).saturating_sub(group_width);
    let mut xi = vec![0.0; l];
    if lambda1 == 0.0 {
        return GroupWeights {
            mu: vec![f64::INFINITY; n_groups],
            xi,
        };
    }
    let mut mu = Vec::with_capacity(n_groups);
    for j in 0..n_groups {
        let norm = group_norm(b, j, group_width);
        let (m, contrib) = if gamma >= 1.0 {
            (f64::NAN, lambda1)
        } else if norm == 0.0 {
            (0.0, f64::INFINITY)
        } else {
            let zeta = bridge_zeta(lambda1, gamma);
            let m = ((1.0 - gamma) / (gamma * zeta)).powf(gamma) * norm.powf(gamma);
            (m, m.powf(1.0 - 1.0 / gamma))
        };
        mu.push(m);
        for x in &mut xi[j..j + group_width] {
            *x += contrib;
        }
    }
    GroupWeights { mu, xi }
}

#[derive(Debug, Clone)]
pub struct CdResult {
    pub alpha: DVector<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Minimize `(1/2n) ||Ybar - Vbar a||^2 + sum_k xi_k |b_k|` by cyclic
/// coordinate descent. The first `xi.len()` coordinates are penalized, the
/// rest (the scalar effects) are not. `xi_k = +inf` pins `b_k` at zero.
pub fn weighted_lasso_cd(
    ybar: &DVector<f64>,
    vbar: &DMatrix<f64>,
    n: usize,
    xi: &[f64],
    init: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> CdResult {
    let nf = n as f64;
    let gram = vbar.tr_mul(vbar) / nf;
    let c = vbar.tr_mul(ybar) / nf;
    cd_gram(&gram, &c, xi, init, opts)
}

const POLISH_EVERY: usize = 10;

/// Coordinate descent on the normal-equation form `(1/2) a'Ga - c'a + sum xi|b|`.
///
/// Every few sweeps, and when the sweep tolerance is met, the current support
/// and signs are tried as an exact KKT solution; an accepted attempt ends the
/// descent with the exact minimizer.
pub fn cd_gram(
    gram: &DMatrix<f64>,
    c: &DVector<f64>,
    xi: &[f64],
    init: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> CdResult {
    let m = gram.nrows();
    let l = xi.len();
    let mut a = init.cloned().unwrap_or_else(|| DVector::zeros(m));
    for k in 0..l {
        if xi[k].is_infinite() {
            a[k] = 0.0;
        }
    }
    let mut q = gram * &a;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_cd_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for k in 0..m {
            let gkk = gram[(k, k)];
            if gkk <= 0.0 || (k < l && xi[k].is_infinite()) {
                continue;
            }
            let r = c[k] - q[k] + gkk * a[k];
            let new = if k < l {
                soft_threshold(r, xi[k]) / gkk
            } else {
                r / gkk
            };
            let delta = new - a[k];
            if delta != 0.0 {
                a[k] = new;
                q.axpy(delta, &gram.column(k), 1.0);
                max_change = max_change.max(delta.abs());
            }
        }
        let done = max_change < opts.cd_tol;
        if done || sweeps % POLISH_EVERY == 0 {
            let exact = polish(gram, c, xi, &a).or_else(|| {
                (sweeps >= 2 * POLISH_EVERY)
                    .then(|| feature_sign(gram, c, xi, &a))
                    .flatten()
            });
            if let Some(exact) = exact {
                return CdResult {
                    alpha: exact,
                    sweeps,
                    converged: true,
                };
            }
        }
        if done {
            converged = true;
            break;
        }
    }
    CdResult {
        alpha: a,
        sweeps,
        converged,
    }
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Solve the KKT system on the current support with the current signs and
/// return it if it is self-consistent.
fn polish(gram: &DMatrix<f64>, c: &DVector<f64>, xi: &[f64], a: &DVector<f64>) -> Option<DVector<f64>> {
    let m = gram.nrows();
    let l = xi.len();
    let active: Vec<usize> = (0..m).filter(|&k| k >= l || a[k] != 0.0).collect();
    let mut x = DVector::zeros(m);
    if !active.is_empty() {
        let g = gram.select_rows(&active).select_columns(&active);
        let rhs = DVector::from_iterator(
            active.len(),
            active.iter().map(|&k| {
                if k < l {
                    c[k] - xi[k] * a[k].signum()
                } else {
                    c[k]
                }
            }),
        );
        let sol = g.cholesky()?.solve(&rhs);
        for (i, &k) in active.iter().enumerate() {
            if !sol[i].is_finite() {
                return None;
            }
            if k < l && (sol[i] == 0.0 || sol[i].signum() != a[k].signum()) {
                return None;
            }
            x[k] = sol[i];
        }
    }
    kkt_holds(gram, c, xi, &x).then_some(x)
}

/// Subgradient optimality of `x` for the weighted lasso.
fn kkt_holds(gram: &DMatrix<f64>, c: &DVector<f64>, xi: &[f64], x: &DVector<f64>) -> bool {
    let l = xi.len();
    let gx = gram * x;
    let resid = c - &gx;
    let scale = c.amax().max(gx.amax()).max(1e-300);
    for k in 0..resid.len() {
        let tol = 1e-9 * scale;
        if k >= l {
            if resid[k].abs() > tol {
                return false;
            }
        } else if xi[k].is_finite() {
            let ok = if x[k] == 0.0 {
                resid[k].abs() <= xi[k] + tol
            } else {
                (resid[k] - xi[k] * x[k].signum()).abs() <= tol
            };
            if !ok {
                return false;
            }
        }
    }
    true
}

/// `(1/2) x'Gx - c'x + sum xi|x|` over the spline block.
fn qp_objective(gram: &DMatrix<f64>, c: &DVector<f64>, xi: &[f64], x: &DVector<f64>) -> f64 {
    let pen: f64 = xi
        .iter()
        .zip(x.iter())
        .filter(|(w, v)| **v != 0.0 && w.is_finite())
        .map(|(w, v)| w * v.abs())
        .sum();
    0.5 * x.dot(&(gram * x)) - c.dot(x) + pen
}

/// Active-set finish for the weighted lasso (feature-sign search). Starting
/// from `start`, alternately solves the sign-constrained system on the active
/// set, backtracks to the best zero crossing when signs flip, and admits the
/// inactive coordinate with the largest subgradient violation. Returns only a
/// point that satisfies the optimality conditions.
fn feature_sign(gram: &DMatrix<f64>, c: &DVector<f64>, xi: &[f64], start: &DVector<f64>) -> Option<DVector<f64>> {
    let m = gram.nrows();
    let l = xi.len();
    let mut x = start.clone();
    let mut sign: Vec<f64> = (0..l).map(|k| if x[k] == 0.0 { 0.0 } else { x[k].signum() }).collect();
    for k in 0..l {
        if xi[k].is_infinite() {
            x[k] = 0.0;
            sign[k] = 0.0;
        }
    }
    let mut f = qp_objective(gram, c, xi, &x);
    for _ in 0..8 * m {
        let active: Vec<usize> = (0..m).filter(|&k| k >= l || sign[k] != 0.0).collect();
        let mut y = DVector::zeros(m);
        if !active.is_empty() {
            let g = gram.select_rows(&active).select_columns(&active);
            let rhs = DVector::from_iterator(
                active.len(),
                active.iter().map(|&k| if k < l { c[k] - xi[k] * sign[k] } else { c[k] }),
            );
            let sol = g.cholesky()?.solve(&rhs);
            for (i, &k) in active.iter().enumerate() {
                y[k] = sol[i];
            }
        }
        let consistent = (0..l).all(|k| sign[k] == 0.0 || y[k].signum() == sign[k] && y[k] != 0.0);
        if consistent {
            x = y;
            f = qp_objective(gram, c, xi, &x);
        } else {
            // best of y and the zero crossings on the segment from x to y
            let mut best = (qp_objective(gram, c, xi, &y), y.clone(), usize::MAX);
            for k in 0..l {
                if x[k] != 0.0 && x[k].signum() != y[k].signum() {
                    let t = x[k] / (x[k] - y[k]);
                    let mut z = &x + (&y - &x) * t;
                    z[k] = 0.0;
                    let fz = qp_objective(gram, c, xi, &z);
                    if fz < best.0 {
                        best = (fz, z, k);
                    }
                }
            }
            if !(best.0 < f) {
                return None;
            }
            f = best.0;
            x = best.1;
            for k in 0..l {
                sign[k] = if x[k] == 0.0 || xi[k].is_infinite() { 0.0 } else { x[k].signum() };
            }
            if best.2 != usize::MAX {
                x[best.2] = 0.0;
                sign[best.2] = 0.0;
            }
            continue;
        }
        let resid = c - gram * &x;
        let mut worst = (0.0, usize::MAX);
        for k in 0..l {
            if sign[k] == 0.0 && xi[k].is_finite() {
                let v = resid[k].abs() - xi[k];
                if v > worst.0 {
                    worst = (v, k);
                }
            }
        }
        if worst.1 == usize::MAX || worst.0 <= 1e-12 * c.amax().max(1e-300) {
            return kkt_holds(gram, c, xi, &x).then_some(x);
        }
        sign[worst.1] = resid[worst.1].signum();
    }
    None
}

/// Outcome of a penalized fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub coefs: Vec<f64>,
    pub n_spline: usize,
    pub config: PenaltyConfig,
    /// True penalized objective at the returned estimate.
    pub objective: f64,
    /// Objective after each accepted outer iteration of the winning start.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Index of the winning start (0 is the smoothness-only initialization).
    pub start: usize,
    pub starts: usize,
    pub mu: Vec<f64>,
    pub xi: Vec<f64>,
    pub jitter: f64,
}

impl FitResult {
    pub fn alpha(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefs)
    }

    pub fn b(&self) -> &[f64] {
        &self.coefs[..self.n_spline]
    }

    pub fn theta(&self) -> &[f64] {
        &self.coefs[self.n_spline..]
    }

    pub fn to_coefs(&self) -> Coefs {
        Coefs::new(self.alpha(), self.n_spline)
    }

    pub fn nonzero_spline(&self) -> usize {
        self.b().iter().filter(|v| **v != 0.0).count()
    }
}

/// Fit one variant at fixed tuning parameters, starting from the
/// smoothness-only fit at the same `lambda2`.
pub fn fit(problem: &Problem, config: &PenaltyConfig, opts: &SolverOptions) -> Result<FitResult> {
    config.validate()?;
    let l2 = if config.variant.smooth() { config.lambda2 } else { 0.0 };
    let init = fit_smooth(problem, l2, None, opts)?;
    if config.variant == Variant::Spline {
        return Ok(FitResult {
            coefs: init.coefs.alpha.as_slice().to_vec(),
            n_spline: problem.n_spline(),
            config: *config,
            objective: init.objective,
            trace: vec![init.objective],
            converged: init.converged,
            iterations: init.iterations,
            start: 0,
            starts: 1,
            mu: vec![],
            xi: vec![],
            jitter: init.jitter,
        });
    }
    let mut res = fit_from(problem, config, opts, &init.coefs.alpha)?;
    res.jitter = res.jitter.max(init.jitter);
    res.converged &= init.converged;
    Ok(res)
}

/// Outer iterations from a given point. Bridge variants also try
/// `n_starts - 1` Gaussian perturbations of its spline block (sd half the
/// largest spline coefficient) and keep the lowest objective. A perturbed
/// start that fails numerically is dropped.
pub fn fit_from(
    problem: &Problem,
    config: &PenaltyConfig,
    opts: &SolverOptions,
    start: &DVector<f64>,
) -> Result<FitResult> {
    config.validate()?;
    if config.variant == Variant::Spline {
        let s = fit_smooth(problem, config.lambda2, Some(start), opts)?;
        return Ok(FitResult {
            coefs: s.coefs.alpha.as_slice().to_vec(),
            n_spline: problem.n_spline(),
            config: *config,
            objective: s.objective,
            trace: vec![s.objective],
            converged: s.converged,
            iterations: s.iterations,
            start: 0,
            starts: 1,
            mu: vec![],
            xi: vec![],
            jitter: s.jitter,
        });
    }
    let mut starts = vec![start.clone()];
    let l = problem.n_spline();
    if config.variant.bridge() && opts.n_starts > 1 {
        // perturb the spline block only, on its own scale
        let sd = 0.5 * start.rows(0, l).amax();
        if sd > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let normal = Normal::new(0.0, sd).unwrap();
            for _ in 1..opts.n_starts {
                let mut s = start.clone();
                for k in 0..l {
                    s[k] += normal.sample(&mut rng);
                }
                starts.push(s);
            }
        }
    }
    let mut best: Option<FitResult> = None;
    let mut first_err = None;
    for (idx, s) in starts.iter().enumerate() {
        let mut r = match outer(problem, config, opts, s) {
            Ok(r) => r,
            Err(e) => {
                first_err.get_or_insert(e);
                continue;
            }
        };
        r.start = idx;
        let better = match &best {
            None => true,
            Some(b) => r.objective < b.objective,
        };
        if better {
            best = Some(r);
        }
    }
    let Some(mut best) = best else {
        return Err(first_err.expect("at least one start"));
    };
    best.starts = starts.len();
    Ok(best)
}

fn outer(
    problem: &Problem,
    config: &PenaltyConfig,
    opts: &SolverOptions,
    start: &DVector<f64>,
) -> Result<FitResult> {
    let l = problem.n_spline();
    let l2 = if config.variant.smooth() { config.lambda2 } else { 0.0 };
    let mut alpha = start.clone();
    let mut obj = problem.objective(config, &alpha);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    let mut jitter: f64 = 0.0;
    let mut weights = GroupWeights {
        mu: vec![],
        xi: vec![config.lambda1; l],
    };
    for it in 1..=opts.max_outer {
        iterations = it;
        if config.variant.bridge() {
            weights = update_group_weights(
                &alpha.as_slice()[..l],
                problem.group_width,
                config.lambda1,
                config.gamma,
            );
        }
        let s = surrogate(problem.cox, &alpha, l2, problem.penalty)?;
        jitter = jitter.max(s.jitter);
        let (gram, c) = s.normal_equations();
        let cd = cd_gram(&gram, &c, &weights.xi, Some(&alpha), opts);
        if !cd.alpha.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("coordinate descent diverged".into()));
        }
        let (next, next_obj) = halve_toward(problem, config, &alpha, obj, &cd.alpha, opts);
        let step = (&next - &alpha).amax();
        alpha = next;
        obj = next_obj;
        trace.push(obj);
        if step < opts.outer_tol {
            converged = true;
            break;
        }
    }
    if config.variant.bridge() {
        weights = update_group_weights(
            &alpha.as_slice()[..l],
            problem.group_width,
            config.lambda1,
            config.gamma,
        );
    }
    Ok(FitResult {
        coefs: alpha.as_slice().to_vec(),
        n_spline: l,
        config: *config,
        objective: obj,
        trace,
        converged,
        iterations,
        start: 0,
        starts: 1,
        mu: weights.mu,
        xi: weights.xi,
        jitter,
    })
}

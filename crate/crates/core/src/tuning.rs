//! Effective degrees of freedom, BIC and grid search over `(lambda1, lambda2)`.

use crate::coxcore::{gradient, grad_hess, jittered_cholesky, logpl};
use crate::error::{Error, Result};
use crate::report::sig10;
use crate::solver::{fit, fit_from, fit_smooth, FitResult, PenaltyConfig, Problem, SolverOptions, Variant};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Relative BIC difference treated as a tie.
pub const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
}

/// Shape of the default grid, as multiples of the data-driven scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_lambda1: usize,
    pub lambda1_range: (f64, f64),
    pub n_lambda2: usize,
    pub lambda2_range: (f64, f64),
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_lambda1: 20,
            lambda1_range: (1e-4, 1e1),
            n_lambda2: 10,
            lambda2_range: (1e-2, 1e4),
        }
    }
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![(lo * hi).sqrt()],
        _ => (0..n)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
            .collect(),
    }
}

/// Cox fit with `b = 0`: Newton on the scalar effects only.
pub fn null_fit(problem: &Problem) -> DVector<f64> {
    let m = problem.cox.m();
    let l = problem.n_spline();
    let mut alpha = DVector::zeros(m);
    if m == l {
        return alpha;
    }
    let mut ll = logpl(problem.cox, &alpha);
    for _ in 0..50 {
        let (g, h) = grad_hess(problem.cox, &alpha);
        let hz = h.view((l, l), (m - l, m - l)).into_owned();
        let Some((chol, _)) = jittered_cholesky(&hz) else { break };
        let step = chol.solve(&g.rows(l, m - l).into_owned());
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let mut cand = alpha.clone();
            for k in 0..m - l {
                cand[l + k] -= t * step[k];
            }
            let c = logpl(problem.cox, &cand);
            if c.is_finite() && c >= ll {
                alpha = cand;
                ll = c;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved || t * step.amax() < 1e-10 {
            break;
        }
    }
    alpha
}

/// `||grad_b(-l_n)||_inf / n` at the null fit: the smallest lasso weight that
/// keeps `b = 0`.
pub fn lambda1_scale(problem: &Problem) -> f64 {
    let g = gradient(problem.cox, &null_fit(problem));
    let l = problem.n_spline();
    g.rows(0, l).amax() / problem.cox.n() as f64
}

/// `tr(H_bb(0)) / (n tr J)`: the smoothing level at which the roughness
/// penalty and the curvature of `-l_n/n` are of the same size.
pub fn lambda2_scale(problem: &Problem) -> f64 {
    let Some(pen) = problem.penalty else { return 1.0 };
    let (_, h) = grad_hess(problem.cox, &DVector::zeros(problem.cox.m()));
    let l = problem.n_spline();
    let tr_h: f64 = (0..l).map(|k| h[(k, k)]).sum();
    let tr_j = pen.j.trace();
    if tr_j > 0.0 && tr_h > 0.0 {
        tr_h / (problem.cox.n() as f64 * tr_j)
    } else {
        1.0
    }
}

impl TuningGrid {
    pub fn new(lambda1: Vec<f64>, lambda2: Vec<f64>) -> Result<Self> {
        let g = Self { lambda1, lambda2 }.normalized();
        g.validate()?;
        Ok(g)
    }

    /// Sorted ascending without duplicates.
    pub fn normalized(mut self) -> Self {
        for v in [&mut self.lambda1, &mut self.lambda2] {
            v.sort_by(|a, b| a.total_cmp(b));
            v.dedup();
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda1.is_empty() || self.lambda2.is_empty() {
            return Err(Error::Config("tuning grid axes must be nonempty".into()));
        }
        if self
            .lambda1
            .iter()
            .chain(&self.lambda2)
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Config("tuning grid values must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Log-spaced default grid anchored at the null-fit scales, collapsed to
    /// the axes the variant uses.
    pub fn for_problem(problem: &Problem, variant: Variant, spec: &GridSpec) -> Self {
        let l1 = if variant.sparse() {
            let s = lambda1_scale(problem);
            log_space(spec.lambda1_range.0 * s, spec.lambda1_range.1 * s, spec.n_lambda1)
        } else {
            vec![0.0]
        };
        let l2 = if variant.smooth() {
            let s = lambda2_scale(problem);
            log_space(spec.lambda2_range.0 * s, spec.lambda2_range.1 * s, spec.n_lambda2)
        } else {
            vec![0.0]
        };
        Self { lambda1: l1, lambda2: l2 }.normalized()
    }

    /// Restrict the axes to what `variant` uses.
    pub fn collapse(&self, variant: Variant) -> Self {
        Self {
            lambda1: if variant.sparse() { self.lambda1.clone() } else { vec![0.0] },
            lambda2: if variant.smooth() { self.lambda2.clone() } else { vec![0.0] },
        }
        .normalized()
    }
}

/// `tr[(H0 + n lambda2 J0)^{-1} H0]` over the nonzero spline coefficients and
/// all scalar effects, with `H0` the negative Hessian of `l_n` at the fit.
/// Returns the value and the jitter used.
pub fn effective_df(problem: &Problem, fit: &FitResult, lambda2: f64) -> Result<(f64, f64)> {
    let alpha = fit.alpha();
    let (_, h) = grad_hess(problem.cox, &alpha);
    let l = problem.n_spline();
    let keep: Vec<usize> = (0..problem.cox.m()).filter(|&k| k >= l || alpha[k] != 0.0).collect();
    let spline: Vec<usize> = keep.iter().copied().filter(|&k| k < l).collect();
    let j0 = match problem.penalty {
        Some(p) if lambda2 > 0.0 => Some(p.j.select_rows(&spline).select_columns(&spline)),
        _ => None,
    };
    Ok(df_from_parts(&h.select_rows(&keep).select_columns(&keep), j0.as_ref(), problem.cox.n(), lambda2))
}

/// `tr[(H0 + n lambda2 J0)^{-1} H0]` with `J0` on the leading block.
pub fn df_from_parts(h0: &DMatrix<f64>, j0: Option<&DMatrix<f64>>, n: usize, lambda2: f64) -> (f64, f64) {
    let q = h0.nrows();
    if q == 0 {
        return (0.0, 0.0);
    }
    let mut a = h0.clone();
    if let Some(j0) = j0 {
        let s = j0.nrows();
        let mut blk = a.view_mut((0, 0), (s, s));
        blk += j0 * (n as f64 * lambda2);
    }
    match jittered_cholesky(&a) {
        Some((chol, eps)) => {
            let x = chol.solve(h0);
            (x.trace(), eps)
        }
        None => (f64::NAN, f64::NAN),
    }
}

/// `-2 l_n + log(n) df`.
pub fn bic(loglik: f64, n: usize, df: f64) -> f64 {
    -2.0 * loglik + (n as f64).ln() * df
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningCell {
    pub lambda1: f64,
    pub lambda2: f64,
    pub bic: f64,
    pub df: f64,
    pub loglik: f64,
    pub objective: f64,
    pub nonzero: usize,
    pub converged: bool,
    /// Jitter needed for the df system.
    pub jitter: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningReport {
    pub variant: Variant,
    pub grid: TuningGrid,
    /// Row-major over `(lambda2, lambda1)`, both ascending.
    pub cells: Vec<TuningCell>,
    pub selected: usize,
    pub fit: FitResult,
}

impl TuningReport {
    pub fn selected_cell(&self) -> &TuningCell {
        &self.cells[self.selected]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lambda1,lambda2,bic,df,loglik,objective,nonzero,converged,selected")?;
        for (i, c) in self.cells.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                sig10(c.lambda1),
                sig10(c.lambda2),
                sig10(c.bic),
                sig10(c.df),
                sig10(c.loglik),
                sig10(c.objective),
                c.nonzero,
                c.converged as u8,
                (i == self.selected) as u8
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningOptions {
    pub solver: SolverOptions,
    /// Reuse neighboring solutions along each `lambda1` path.
    pub warm_start: bool,
}

impl Default for TuningOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            warm_start: true,
        }
    }
}

fn evaluate(problem: &Problem, res: FitResult) -> Result<(TuningCell, FitResult)> {
    let l2 = res.config.lambda2;
    let loglik = logpl(problem.cox, &res.alpha());
    let (df, jitter) = effective_df(problem, &res, l2)?;
    let n = problem.cox.n();
    let cell = TuningCell {
        lambda1: res.config.lambda1,
        lambda2: l2,
        bic: bic(loglik, n, df),
        df,
        loglik,
        objective: res.objective,
        nonzero: res.nonzero_spline(),
        converged: res.converged,
        jitter,
    };
    Ok((cell, res))
}

/// One `lambda2` row. Convex variants follow the `lambda1` path from the
/// largest value down, each fit starting at the previous solution; bridge
/// variants start every cell from the row's smoothness-only fit.
fn run_row(
    problem: &Problem,
    variant: Variant,
    lambda1: &[f64],
    lambda2: f64,
    opts: &TuningOptions,
) -> Result<Vec<(TuningCell, FitResult)>> {
    let mut out: Vec<Option<(TuningCell, FitResult)>> = vec![None; lambda1.len()];
    let cfg = |l1: f64| PenaltyConfig::new(variant, l1, lambda2);
    if variant.bridge() {
        let init = fit_smooth(problem, lambda2, None, &opts.solver)?;
        for (i, &l1) in lambda1.iter().enumerate() {
            let mut r = fit_from(problem, &cfg(l1), &opts.solver, &init.coefs.alpha)?;
            r.converged &= init.converged;
            out[i] = Some(evaluate(problem, r)?);
        }
    } else {
        let mut prev: Option<DVector<f64>> = None;
        for i in (0..lambda1.len()).rev() {
            let c = cfg(lambda1[i]);
            let r = match (&prev, opts.warm_start) {
                (Some(a), true) => fit_from(problem, &c, &opts.solver, a)?,
                _ => fit(problem, &c, &opts.solver)?,
            };
            prev = Some(r.alpha());
            out[i] = Some(evaluate(problem, r)?);
        }
    }
    Ok(out.into_iter().map(|c| c.unwrap()).collect())
}

/// Index of the minimum BIC; near-ties go to the larger `lambda1`, then the
/// larger `lambda2`.
pub fn argmin_bic(cells: &[TuningCell]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        if !c.bic.is_finite() {
            continue;
        }
        best = Some(match best {
            None => i,
            Some(b) => {
                let cb = &cells[b];
                let tol = TIE_TOL * cb.bic.abs().max(1.0);
                if c.bic < cb.bic - tol {
                    i
                } else if (c.bic - cb.bic).abs() <= tol
                    && (c.lambda1, c.lambda2) > (cb.lambda1, cb.lambda2)
                {
                    i
                } else {
                    b
                }
            }
        });
    }
    best
}

/// Exhaustive BIC search over the grid, collapsed to the axes `variant` uses.
pub fn select(problem: &Problem, variant: Variant, grid: &TuningGrid, opts: &TuningOptions) -> Result<TuningReport> {
    let grid = grid.collapse(variant);
    grid.validate()?;
    let rows: Vec<Vec<(TuningCell, FitResult)>> = grid
        .lambda2
        .par_iter()
        .map(|&l2| run_row(problem, variant, &grid.lambda1, l2, opts))
        .collect::<Result<_>>()?;
    let mut cells = Vec::with_capacity(grid.lambda1.len() * grid.lambda2.len());
    let mut fits = Vec::with_capacity(cells.capacity());
    for row in rows {
        for (c, f) in row {
            cells.push(c);
            fits.push(f);
        }
    }
    let selected = argmin_bic(&cells)
        .ok_or_else(|| Error::Numerical("no grid cell produced a finite BIC".into()))?;
    let fit = fits.swap_remove(selected);
    Ok(TuningReport {
        variant,
        grid,
        cells,
        selected,
        fit,
    })
}

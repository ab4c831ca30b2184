//! Region selection, second-stage refit and plug-in variances.
//!
//! Variances are conditional on the selected region: the selection step
//! itself is treated as fixed.

use crate::basis::{BasisHandle, PenaltyMatrices};
use crate::coxcore::{grad_hess, jittered_cholesky, logpl, CoxData};
use crate::error::{Error, Result};
use crate::report::sig10;
use crate::solver::{fit_smooth, Problem, SolverOptions};
use crate::survdata::DesignedData;
use crate::tuning::{bic, df_from_parts, lambda2_scale, log_space, TIE_TOL};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Default second-stage `lambda2` range, in multiples of the restricted
/// problem's smoothing scale. BIC over the refit tends to favor the
/// smoothest candidate, so the top of this range caps the smoothing bias of
/// the refit at the level where penalty and likelihood curvature match.
pub const REFIT_LAMBDA2_RANGE: (f64, f64) = (1e-6, 1.0);

/// Normal quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSelection {
    /// Indices `j` of the non-null inter-knot intervals.
    pub intervals: Vec<usize>,
    /// The non-null region as disjoint closed segments.
    pub segments: Vec<(f64, f64)>,
    /// Basis indices whose support meets the region, ascending.
    pub active: Vec<usize>,
    /// Supremum of the region, 0 when it is empty.
    pub buffer_distance: f64,
}

impl RegionSelection {
    fn from_intervals(handle: &BasisHandle, intervals: Vec<usize>) -> Self {
        let mut segments: Vec<(f64, f64)> = Vec::new();
        let mut active: Vec<usize> = Vec::new();
        for &j in &intervals {
            let (a, b) = handle.interval(j);
            match segments.last_mut() {
                Some(last) if last.1 == a => last.1 = b,
                _ => segments.push((a, b)),
            }
            active.extend(handle.group(j));
        }
        active.sort_unstable();
        active.dedup();
        let buffer_distance = segments.last().map_or(0.0, |s| s.1);
        Self {
            intervals,
            segments,
            active,
            buffer_distance,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, s: f64) -> bool {
        self.segments.iter().any(|&(a, b)| s >= a && s <= b)
    }

    /// Every interval that overlaps `(a, b)` with positive length.
    pub fn covering(handle: &BasisHandle, a: f64, b: f64) -> Self {
        let intervals = (0..handle.n_intervals())
            .filter(|&j| {
                let (lo, hi) = handle.interval(j);
                hi > a && lo < b
            })
            .collect();
        Self::from_intervals(handle, intervals)
    }
}

/// Interval `j` is null exactly when `b_j = ... = b_{j+d} = 0`.
pub fn select_regions(b: &[f64], handle: &BasisHandle) -> RegionSelection {
    let intervals = (0..handle.n_intervals())
        .filter(|&j| handle.group(j).any(|k| b[k] != 0.0))
        .collect();
    RegionSelection::from_intervals(handle, intervals)
}

/// `R` and increasing `pi` with `R'HR = I` and `R'PR = diag(pi)`.
pub fn simdiag(h: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (chol, _) = jittered_cholesky(h)
        .ok_or_else(|| Error::Numerical("Hessian is not positive definite".into()))?;
    let l = chol.l();
    // M = L^{-1} P L^{-T}
    let x = l
        .solve_lower_triangular(p)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let m = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let m = 0.5 * (&m + m.transpose());
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let q = eig.eigenvectors.select_columns(&order);
    let pi = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i].max(0.0)));
    let r = l
        .transpose()
        .solve_upper_triangular(&q)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    Ok((r, pi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitCandidate {
    pub lambda2: f64,
    pub bic: f64,
    pub df: f64,
}

/// Second-stage fit and everything the variance formulas need.
#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub selection: RegionSelection,
    pub lambda2: f64,
    /// Refit spline coefficients on `selection.active`.
    pub b: Vec<f64>,
    pub theta: Vec<f64>,
    pub n: usize,
    /// `-(1/n)` times the Hessian of `l_n` at the refit.
    pub h: DMatrix<f64>,
    /// Roughness matrix of the active block padded with zeros for `theta`.
    pub p_mat: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub pi: DVector<f64>,
    pub candidates: Vec<RefitCandidate>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub s: f64,
    pub beta: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulativeEffect {
    pub estimate: f64,
    pub se: f64,
    pub ci: (f64, f64),
    /// Exposure increment the hazard ratio refers to.
    pub increment: f64,
    pub hazard_ratio: f64,
    pub hr_ci: (f64, f64),
}

/// Refit with only the smoothness penalty on the selected columns, choosing
/// `lambda2` by BIC over `lambda2_grid` (ties go to the larger value). An
/// empty selection fits the scalar effects alone.
pub fn refit(
    data: &DesignedData,
    selection: &RegionSelection,
    penalty: &PenaltyMatrices,
    lambda2_grid: &[f64],
    opts: &SolverOptions,
) -> Result<InferenceResult> {
    let restricted = data.restrict(&selection.active);
    let cox = CoxData::new(&restricted)?;
    let q = selection.active.len();
    let n = cox.n();
    let pen = (q > 0).then(|| penalty.restrict(&selection.active));
    let problem = Problem {
        cox: &cox,
        penalty: pen.as_ref(),
        group_width: 1,
    };
    let mut grid: Vec<f64> = if q == 0 { vec![0.0] } else { lambda2_grid.to_vec() };
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::Config("empty lambda2 grid for the refit".into()));
    }
    let mut best: Option<(f64, f64, crate::solver::SmoothFit)> = None;
    let mut candidates = Vec::with_capacity(grid.len());
    for &l2 in &grid {
        let f = fit_smooth(&problem, l2, None, opts)?;
        let (_, hess) = grad_hess(&cox, &f.coefs.alpha);
        let df = df_from_parts(&hess, pen.as_ref().map(|p| &p.j), n, l2).0;
        let b = bic(logpl(&cox, &f.coefs.alpha), n, df);
        candidates.push(RefitCandidate { lambda2: l2, bic: b, df });
        let better = match &best {
            None => b.is_finite(),
            Some((bb, _, _)) => b <= *bb + TIE_TOL * bb.abs().max(1.0),
        };
        if better {
            best = Some((b, l2, f));
        }
    }
    let (_, lambda2, f) = best.ok_or_else(|| Error::Numerical("refit produced no finite BIC".into()))?;
    let (_, hess) = grad_hess(&cox, &f.coefs.alpha);
    let h = hess / n as f64;
    let m = cox.m();
    let mut p_mat = DMatrix::zeros(m, m);
    if let Some(p) = &pen {
        p_mat.view_mut((0, 0), (q, q)).copy_from(&p.j);
    }
    let (r, pi) = simdiag(&h, &p_mat)?;
    Ok(InferenceResult {
        selection: selection.clone(),
        lambda2,
        b: f.coefs.b().to_vec(),
        theta: f.coefs.theta().to_vec(),
        n,
        h,
        p_mat,
        r,
        pi,
        candidates,
        converged: f.converged,
    })
}

/// Default refit grid: log-spaced multiples of the restricted problem's
/// smoothing scale.
pub fn refit_grid(data: &DesignedData, selection: &RegionSelection, penalty: &PenaltyMatrices, n: usize, range: (f64, f64)) -> Result<Vec<f64>> {
    if selection.is_empty() {
        return Ok(vec![0.0]);
    }
    let restricted = data.restrict(&selection.active);
    let cox = CoxData::new(&restricted)?;
    let pen = penalty.restrict(&selection.active);
    let problem = Problem {
        cox: &cox,
        penalty: Some(&pen),
        group_width: 1,
    };
    let s = lambda2_scale(&problem);
    Ok(log_space(range.0 * s, range.1 * s, n))
}

impl InferenceResult {
    pub fn q(&self) -> usize {
        self.b.len()
    }

    pub fn p(&self) -> usize {
        self.theta.len()
    }

    /// Spline coefficients on the full basis (zeros off the active set).
    pub fn full_b(&self, n_basis: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_basis];
        for (k, &u) in self.selection.active.iter().enumerate() {
            out[u] = self.b[k];
        }
        out
    }

    /// `(1/n) sum_nu (R'g)_nu^2 / (1 + lambda2 pi_nu)^2` for a functional
    /// `g` of the active basis, padded with zeros on the scalar block. The
    /// leading columns of `R` (zero `pi`) carry the unpenalized terms.
    pub fn quad_variance(&self, g: &DVector<f64>) -> f64 {
        let mut padded = DVector::zeros(self.q() + self.p());
        padded.rows_mut(0, self.q()).copy_from(g);
        self.sandwich(&padded)
    }

    /// Standard errors of the scalar effects.
    pub fn theta_se(&self) -> Vec<f64> {
        (0..self.p())
            .map(|k| {
                let mut e = DVector::zeros(self.q() + self.p());
                e[self.q() + k] = 1.0;
                self.sandwich(&e).max(0.0).sqrt()
            })
            .collect()
    }

    fn sandwich(&self, padded: &DVector<f64>) -> f64 {
        let t = self.r.tr_mul(padded);
        t.iter()
            .zip(self.pi.iter())
            .map(|(v, pi)| (v / (1.0 + self.lambda2 * pi)).powi(2))
            .sum::<f64>()
            / self.n as f64
    }

    fn active_basis(&self, handle: &BasisHandle, s: f64) -> DVector<f64> {
        let full = handle.eval(s);
        DVector::from_iterator(self.q(), self.selection.active.iter().map(|&u| full[u]))
    }

    pub fn beta(&self, handle: &BasisHandle, s: f64) -> f64 {
        self.active_basis(handle, s).dot(&DVector::from_column_slice(&self.b))
    }

    pub fn variance(&self, handle: &BasisHandle, s: f64) -> Result<f64> {
        if !self.selection.contains(s) {
            return Err(Error::Config(format!("s = {s} lies outside the selected region")));
        }
        Ok(self.quad_variance(&self.active_basis(handle, s)))
    }

    pub fn curve_point(&self, handle: &BasisHandle, s: f64) -> Result<CurvePoint> {
        let v = self.variance(handle, s)?;
        let beta = self.beta(handle, s);
        let se = v.max(0.0).sqrt();
        Ok(CurvePoint {
            s,
            beta,
            se,
            lo: beta - Z95 * se,
            hi: beta + Z95 * se,
        })
    }

    /// Estimate, standard error and 95% band on `per_segment + 1` equally
    /// spaced points of each segment.
    pub fn variance_curve(&self, handle: &BasisHandle, per_segment: usize) -> Vec<CurvePoint> {
        let mut out = Vec::new();
        for &(a, b) in &self.selection.segments {
            for i in 0..=per_segment {
                // clamped so rounding cannot step past the segment end
                let s = (a + (b - a) * i as f64 / per_segment.max(1) as f64).min(b);
                out.push(self.curve_point(handle, s).expect("point inside segment"));
            }
        }
        out
    }

    /// `int over the region of beta*` with its variance; the hazard ratio
    /// refers to raising the exposure by `increment` over the whole region.
    pub fn cumulative_effect(&self, handle: &BasisHandle, increment: f64) -> Result<CumulativeEffect> {
        if self.selection.is_empty() {
            return Err(Error::Config("no non-null region".into()));
        }
        let mut g_full = DVector::zeros(handle.n_basis());
        for &(a, b) in &self.selection.segments {
            g_full += handle.basis_integrals(a, b);
        }
        let g = DVector::from_iterator(self.q(), self.selection.active.iter().map(|&u| g_full[u]));
        let estimate = g.dot(&DVector::from_column_slice(&self.b));
        let se = self.quad_variance(&g).max(0.0).sqrt();
        let ci = (estimate - Z95 * se, estimate + Z95 * se);
        Ok(CumulativeEffect {
            estimate,
            se,
            ci,
            increment,
            hazard_ratio: (increment * estimate).exp(),
            hr_ci: ((increment * ci.0).exp(), (increment * ci.1).exp()),
        })
    }
}

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], mut w: W) -> Result<()> {
    writeln!(w, "s,beta,se,lo,hi")?;
    for p in points {
        writeln!(w, "{},{},{},{},{}", sig10(p.s), sig10(p.beta), sig10(p.se), sig10(p.lo), sig10(p.hi))?;
    }
    Ok(())
}

pub fn read_curve_csv<R: std::io::Read>(r: R) -> Result<Vec<CurvePoint>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

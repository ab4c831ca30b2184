//! Cox partial likelihood for the combined design `[Phi | Z]`, its derivatives,
//! and the least-squares surrogate built from a Cholesky factor of the Hessian.
//!
//! Ties follow the Breslow convention: subjects sharing an observed time are
//! all in each other's risk sets. Strata contribute independent risk sets.

use crate::basis::PenaltyMatrices;
use crate::error::{Error, Result};
use crate::survdata::DesignedData;
use nalgebra::{Cholesky, DMatrix, DVector};
use std::ops::Range;

/// `alpha = (b', theta')'`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefs {
    pub alpha: DVector<f64>,
    pub n_spline: usize,
}

impl Coefs {
    pub fn zeros(n_spline: usize, p: usize) -> Self {
        Self {
            alpha: DVector::zeros(n_spline + p),
            n_spline,
        }
    }

    pub fn new(alpha: DVector<f64>, n_spline: usize) -> Self {
        assert!(n_spline <= alpha.len());
        Self { alpha, n_spline }
    }

    pub fn from_parts(b: &[f64], theta: &[f64]) -> Self {
        let alpha = DVector::from_iterator(b.len() + theta.len(), b.iter().chain(theta).cloned());
        Self {
            alpha,
            n_spline: b.len(),
        }
    }

    pub fn b(&self) -> &[f64] {
        &self.alpha.as_slice()[..self.n_spline]
    }

    pub fn theta(&self) -> &[f64] {
        &self.alpha.as_slice()[self.n_spline..]
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.iter().all(|v| v.is_finite())
    }
}

/// Risk-set layout of a [`DesignedData`], sorted once and reused.
#[derive(Debug, Clone)]
pub struct CoxData {
    /// Column-centered `[Phi | Z]` stored transposed (`m x n`), subjects in
    /// risk-set order. Centering shifts every linear predictor by the same
    /// constant, which leaves `l_n` alone.
    wt: DMatrix<f64>,
    event: Vec<bool>,
    /// Per stratum, consecutive runs of tied times (decreasing time).
    strata: Vec<Vec<Range<usize>>>,
    n_spline: usize,
}

impl CoxData {
    pub fn new(data: &DesignedData) -> Result<Self> {
        let n = data.n();
        let m = data.n_coef();
        let l = data.n_spline();
        let mut w = DMatrix::zeros(n, m);
        let mut event = Vec::with_capacity(n);
        for (r, &i) in data.order.iter().enumerate() {
            for k in 0..l {
                w[(r, k)] = data.phi[(i, k)];
            }
            for k in 0..data.p() {
                w[(r, l + k)] = data.z[(i, k)];
            }
            event.push(data.event[i]);
        }
        let offset = DVector::from_iterator(m, w.column_iter().map(|c| c.mean()));
        for (k, mut col) in w.column_iter_mut().enumerate() {
            col.add_scalar_mut(-offset[k]);
        }
        let mut strata: Vec<Vec<Range<usize>>> = Vec::new();
        let mut r = 0;
        while r < n {
            let s = data.strata[data.order[r]];
            let mut runs = Vec::new();
            let mut has_event = false;
            while r < n && data.strata[data.order[r]] == s {
                let t = data.time[data.order[r]];
                let start = r;
                while r < n
                    && data.strata[data.order[r]] == s
                    && data.time[data.order[r]] == t
                {
                    has_event |= data.event[data.order[r]];
                    r += 1;
                }
                runs.push(start..r);
            }
            if !has_event {
                return Err(Error::Data(format!("stratum {s} has no events")));
            }
            strata.push(runs);
        }
        Ok(Self {
            wt: w.transpose(),
            event,
            strata,
            n_spline: l,
        })
    }

    pub fn n(&self) -> usize {
        self.wt.ncols()
    }

    pub fn m(&self) -> usize {
        self.wt.nrows()
    }

    pub fn n_spline(&self) -> usize {
        self.n_spline
    }

    pub fn events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    fn eta(&self, alpha: &DVector<f64>) -> DVector<f64> {
        self.wt.tr_mul(alpha)
    }
}

/// Log partial likelihood `l_n(alpha)`.
pub fn logpl(data: &CoxData, alpha: &DVector<f64>) -> f64 {
    let eta = data.eta(alpha);
    let mut total = 0.0;
    for runs in &data.strata {
        let lo = runs[0].start;
        let hi = runs.last().unwrap().end;
        let shift = eta.rows(lo, hi - lo).max();
        let mut s0 = 0.0;
        for run in runs {
            for r in run.clone() {
                s0 += (eta[r] - shift).exp();
            }
            let log_s0 = shift + s0.ln();
            for r in run.clone() {
                if data.event[r] {
                    total += eta[r] - log_s0;
                }
            }
        }
    }
    total
}

/// Gradient of `-l_n` only.
pub fn gradient(data: &CoxData, alpha: &DVector<f64>) -> DVector<f64> {
    let m = data.m();
    let eta = data.eta(alpha);
    let mut g = DVector::zeros(m);
    let mut s1 = DVector::zeros(m);
    for runs in &data.strata {
        let lo = runs[0].start;
        let hi = runs.last().unwrap().end;
        let shift = eta.rows(lo, hi - lo).max();
        let mut s0 = 0.0;
        s1.fill(0.0);
        for run in runs {
            let mut d = 0usize;
            for r in run.clone() {
                let wr = (eta[r] - shift).exp();
                s0 += wr;
                s1.axpy(wr, &data.wt.column(r), 1.0);
                if data.event[r] {
                    d += 1;
                    g.axpy(-1.0, &data.wt.column(r), 1.0);
                }
            }
            if d > 0 {
                g.axpy(d as f64 / s0, &s1, 1.0);
            }
        }
    }
    g
}

/// Gradient and Hessian of `-l_n`.
///
/// The Hessian is `W' diag(w c) W - sum_g d_g e_g e_g'` where `c_j` is the
/// Breslow increment sum over event times at which `j` is at risk and `e_g`
/// the risk-set weighted mean at tied-time group `g` with `d_g` events.
pub fn grad_hess(data: &CoxData, alpha: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = data.n();
    let m = data.m();
    let eta = data.eta(alpha);
    let mut g = DVector::zeros(m);
    let mut weights = vec![0.0; n];
    let n_groups = data
        .strata
        .iter()
        .flatten()
        .filter(|run| data.event[run.start..run.end].iter().any(|&e| e))
        .count();
    // scaled risk-set means sqrt(d_g) e_g as columns
    let mut means = DMatrix::zeros(m, n_groups);
    let mut gi = 0;
    let mut s1 = DVector::zeros(m);
    for runs in &data.strata {
        let lo = runs[0].start;
        let hi = runs.last().unwrap().end;
        let shift = eta.rows(lo, hi - lo).max();
        let mut s0 = 0.0;
        s1.fill(0.0);
        let mut incr = Vec::with_capacity(runs.len());
        for run in runs {
            let mut d = 0usize;
            for r in run.clone() {
                let wr = (eta[r] - shift).exp();
                weights[r] = wr;
                s0 += wr;
                s1.axpy(wr, &data.wt.column(r), 1.0);
                if data.event[r] {
                    d += 1;
                    g.axpy(-1.0, &data.wt.column(r), 1.0);
                }
            }
            if d > 0 {
                let d = d as f64;
                g.axpy(d / s0, &s1, 1.0);
                means.column_mut(gi).axpy(d.sqrt() / s0, &s1, 0.0);
                gi += 1;
                incr.push(d / s0);
            } else {
                incr.push(0.0);
            }
        }
        // c for a run = sum of increments at its own and all earlier times
        let mut c = 0.0;
        for (run, inc) in runs.iter().zip(&incr).rev() {
            c += inc;
            for r in run.clone() {
                weights[r] *= c;
            }
        }
    }
    let mut a = data.wt.clone();
    for (r, mut col) in a.column_iter_mut().enumerate() {
        col *= weights[r].sqrt();
    }
    let mut h = &a * a.transpose();
    h -= &means * means.transpose();
    let h = 0.5 * (&h + h.transpose());
    (g, h)
}

/// Least-squares surrogate of `-l_n` about an expansion point, optionally
/// augmented with smoothness rows.
#[derive(Debug, Clone)]
pub struct QuadSurrogate {
    /// Upper-triangular with `V'V = Hessian (+ jitter I)`.
    pub v: DMatrix<f64>,
    pub y: DVector<f64>,
    pub alpha0: DVector<f64>,
    pub vbar: DMatrix<f64>,
    pub ybar: DVector<f64>,
    /// Gradient of `-l_n` at the expansion point.
    pub grad: DVector<f64>,
    /// Diagonal jitter that made the Hessian factorizable (0 if none).
    pub jitter: f64,
    pub n: usize,
    pub n_spline: usize,
}

/// Relative jitter levels tried, in order, before giving up.
const JITTERS: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky factor of `h + eps*scale*I` for the smallest working jitter.
pub fn jittered_cholesky(h: &DMatrix<f64>) -> Option<(Cholesky<f64, nalgebra::Dyn>, f64)> {
    let m = h.nrows();
    let scale = (h.trace() / m.max(1) as f64).abs().max(f64::MIN_POSITIVE);
    for eps in JITTERS {
        let mut a = h.clone();
        for i in 0..m {
            a[(i, i)] += eps * scale;
        }
        if let Some(c) = Cholesky::new(a) {
            let ok = c.l_dirty().diagonal().iter().all(|v| v.is_finite() && *v > 0.0);
            if ok {
                return Some((c, eps * scale));
            }
        }
    }
    None
}

pub fn surrogate(
    data: &CoxData,
    alpha0: &DVector<f64>,
    lambda2: f64,
    penalty: Option<&PenaltyMatrices>,
) -> Result<QuadSurrogate> {
    let (grad, hess) = grad_hess(data, alpha0);
    surrogate_from(data, alpha0, grad, hess, lambda2, penalty)
}

pub(crate) fn surrogate_from(
    data: &CoxData,
    alpha0: &DVector<f64>,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    lambda2: f64,
    penalty: Option<&PenaltyMatrices>,
) -> Result<QuadSurrogate> {
    let n = data.n();
    let m = data.m();
    let l = data.n_spline();
    let (chol, jitter) = jittered_cholesky(&hess).ok_or_else(|| {
        Error::Numerical(
            "Hessian of the partial likelihood is singular even after jitter; \
             increase the smoothness penalty or use fewer knots"
                .into(),
        )
    })?;
    let lower = chol.l();
    let v = lower.transpose();
    let rhs = &hess * alpha0 - &grad;
    let y = lower
        .solve_lower_triangular(&rhs)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;

    let extra = match penalty {
        Some(p) if lambda2 > 0.0 => {
            if p.j.nrows() != l {
                return Err(Error::Config(format!(
                    "penalty is {}x{} but the design has {} spline columns",
                    p.j.nrows(),
                    p.j.ncols(),
                    l
                )));
            }
            Some(p.d.clone() * (2.0 * n as f64 * lambda2).sqrt())
        }
        _ => None,
    };
    let (vbar, ybar) = match extra {
        Some(dscaled) => {
            let r = dscaled.nrows();
            let mut vbar = DMatrix::zeros(m + r, m);
            vbar.view_mut((0, 0), (m, m)).copy_from(&v);
            vbar.view_mut((m, 0), (r, l)).copy_from(&dscaled);
            let mut ybar = DVector::zeros(m + r);
            ybar.rows_mut(0, m).copy_from(&y);
            (vbar, ybar)
        }
        None => (v.clone(), y.clone()),
    };
    Ok(QuadSurrogate {
        v,
        y,
        alpha0: alpha0.clone(),
        vbar,
        ybar,
        grad,
        jitter,
        n,
        n_spline: l,
    })
}

impl QuadSurrogate {
    /// `1/2 ||Y - V alpha||^2`.
    pub fn value(&self, alpha: &DVector<f64>) -> f64 {
        0.5 * (&self.y - &self.v * alpha).norm_squared()
    }

    /// Gradient of `1/2 ||Y - V alpha||^2`.
    pub fn gradient(&self, alpha: &DVector<f64>) -> DVector<f64> {
        self.v.tr_mul(&(&self.v * alpha - &self.y))
    }

    /// `(Vbar'Vbar / n, Vbar'Ybar / n)`.
    pub fn normal_equations(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n as f64;
        (self.vbar.tr_mul(&self.vbar) / n, self.vbar.tr_mul(&self.ybar) / n)
    }
}

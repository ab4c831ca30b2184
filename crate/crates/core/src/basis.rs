//! B-spline bases on a closed interval, evaluated by the de Boor recursion.
//!
//! A basis is defined on a physical domain `[lo, hi]` (meters, or unitless) and
//! is evaluated internally on `[0, 1]` after the affine map
//! `u = (s - lo) / (hi - lo)`. Basis values are unitless, so a coefficient
//! vector `b` describes the same curve `beta(s) = B(s)' b` in either
//! coordinate. Derivatives returned by [`BasisHandle::eval_derivative`] are in
//! physical units; the roughness matrix is assembled on the unit interval.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Number of equally spaced cut points in the default quadrature grid
/// (breakpoints are added, then each cell is split at its midpoint).
pub const DEFAULT_GRID_POINTS: usize = 1001;

/// Degree, knots and domain of a B-spline basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    pub degree: usize,
    /// Interior knots `kappa_1 < ... < kappa_M` in physical units.
    pub inner_knots: Vec<f64>,
    pub domain: (f64, f64),
}

impl BasisSpec {
    /// `inner_count` equally spaced interior knots on `[lo, hi]`.
    pub fn uniform(degree: usize, inner_count: usize, lo: f64, hi: f64) -> Self {
        let width = hi - lo;
        let inner_knots = (1..=inner_count)
            .map(|i| lo + width * i as f64 / (inner_count + 1) as f64)
            .collect();
        Self {
            degree,
            inner_knots,
            domain: (lo, hi),
        }
    }

    pub fn with_knots(degree: usize, lo: f64, hi: f64, inner_knots: Vec<f64>) -> Self {
        Self {
            degree,
            inner_knots,
            domain: (lo, hi),
        }
    }

    pub fn inner_count(&self) -> usize {
        self.inner_knots.len()
    }

    /// `L = M + d + 1`.
    pub fn n_basis(&self) -> usize {
        self.inner_knots.len() + self.degree + 1
    }

    /// Breakpoints `kappa_0 = lo, kappa_1, ..., kappa_{M+1} = hi`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut k = Vec::with_capacity(self.inner_knots.len() + 2);
        k.push(self.domain.0);
        k.extend_from_slice(&self.inner_knots);
        k.push(self.domain.1);
        k
    }

    fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::Basis(format!(
                "degree must be at least 1, got {}",
                self.degree
            )));
        }
        let (lo, hi) = self.domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Basis(format!("invalid domain [{lo}, {hi}]")));
        }
        let k = self.breakpoints();
        if k.iter().any(|v| !v.is_finite()) || k.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Basis(
                "knots must be strictly increasing inside the domain".into(),
            ));
        }
        Ok(())
    }
}

/// Nodes and weights on the physical domain used for exposure integrals,
/// together with every basis function tabulated at the nodes.
#[derive(Debug, Clone)]
pub struct QuadGrid {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// `points.len() x L` basis values.
    pub basis: DMatrix<f64>,
}

/// An evaluable basis. Immutable once built.
#[derive(Debug, Clone)]
pub struct BasisHandle {
    spec: BasisSpec,
    breaks: Vec<f64>,
    unit_breaks: Vec<f64>,
    /// Clamped knot vector on [0, 1], length L + d + 1.
    knots: Vec<f64>,
    grid: QuadGrid,
}

pub fn build_basis(spec: BasisSpec) -> Result<BasisHandle> {
    BasisHandle::new(spec, DEFAULT_GRID_POINTS)
}

impl BasisHandle {
    pub fn new(spec: BasisSpec, grid_points: usize) -> Result<Self> {
        spec.validate()?;
        if grid_points < 2 {
            return Err(Error::Basis("quadrature grid needs at least 2 points".into()));
        }
        let (lo, hi) = spec.domain;
        let breaks = spec.breakpoints();
        let unit_breaks: Vec<f64> = breaks.iter().map(|s| (s - lo) / (hi - lo)).collect();
        let d = spec.degree;
        let mut knots = vec![0.0; d];
        knots.extend_from_slice(&unit_breaks);
        knots.extend(std::iter::repeat(1.0).take(d));

        let mut handle = Self {
            spec,
            breaks,
            unit_breaks,
            knots,
            grid: QuadGrid {
                points: vec![],
                weights: vec![],
                basis: DMatrix::zeros(0, 0),
            },
        };
        handle.grid = handle.make_grid(grid_points);
        Ok(handle)
    }

    fn make_grid(&self, n: usize) -> QuadGrid {
        let (lo, hi) = self.spec.domain;
        let width = hi - lo;
        let mut cuts: Vec<f64> = (0..n)
            .map(|i| lo + width * i as f64 / (n - 1) as f64)
            .collect();
        cuts.extend_from_slice(&self.breaks);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let eps = 1e-12 * width;
        cuts.dedup_by(|a, b| (*a - *b).abs() <= eps);
        let (points, weights) = simpson_nodes(&cuts);
        let l = self.n_basis();
        let mut basis = DMatrix::zeros(points.len(), l);
        for (g, &s) in points.iter().enumerate() {
            let (first, vals) = self.nonzero(s);
            for (k, v) in vals.iter().enumerate() {
                basis[(g, first + k)] = *v;
            }
        }
        QuadGrid {
            points,
            weights,
            basis,
        }
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn degree(&self) -> usize {
        self.spec.degree
    }

    pub fn n_basis(&self) -> usize {
        self.spec.n_basis()
    }

    /// Number of inter-knot intervals, `M + 1`.
    pub fn n_intervals(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        self.spec.domain
    }

    pub fn width(&self) -> f64 {
        self.spec.domain.1 - self.spec.domain.0
    }

    /// Physical breakpoints `kappa_0..kappa_{M+1}`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    /// Physical endpoints of interval `j` (0-based).
    pub fn interval(&self, j: usize) -> (f64, f64) {
        (self.breaks[j], self.breaks[j + 1])
    }

    /// Basis indices nonzero on interval `j`: `j..=j+d`.
    pub fn group(&self, j: usize) -> std::ops::RangeInclusive<usize> {
        j..=j + self.spec.degree
    }

    pub fn grid(&self) -> &QuadGrid {
        &self.grid
    }

    pub fn to_unit(&self, s: f64) -> f64 {
        let (lo, hi) = self.spec.domain;
        ((s - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    /// Index of the interval containing `s`; the right end belongs to the last interval.
    pub fn interval_index(&self, s: f64) -> usize {
        self.interval_index_unit(self.to_unit(s))
    }

    /// Values of the `d + 1` basis functions that may be nonzero at `s`,
    /// with the index of the first one.
    pub fn nonzero(&self, s: f64) -> (usize, Vec<f64>) {
        let (first, ders) = self.nonzero_derivs_unit(self.to_unit(s), 0);
        (first, ders.into_iter().next().unwrap())
    }

    /// All `L` basis values at `s`.
    pub fn eval(&self, s: f64) -> DVector<f64> {
        self.eval_derivative(s, 0)
    }

    /// All `L` values of the `order`-th derivative at `s`, in physical units.
    pub fn eval_derivative(&self, s: f64, order: usize) -> DVector<f64> {
        let (first, ders) = self.nonzero_derivs_unit(self.to_unit(s), order);
        let scale = self.width().powi(order as i32).recip();
        let mut out = DVector::zeros(self.n_basis());
        for (k, v) in ders[order].iter().enumerate() {
            out[first + k] = v * scale;
        }
        out
    }

    /// `beta(s) = B(s)' b` for a coefficient vector of length `L`.
    pub fn curve(&self, b: &[f64], s: f64) -> f64 {
        let (first, vals) = self.nonzero(s);
        vals.iter().zip(&b[first..]).map(|(v, c)| v * c).sum()
    }

    /// de Boor / Cox recursion for the nonzero functions and their
    /// derivatives up to `order` at unit coordinate `u`.
    fn nonzero_derivs_unit(&self, u: f64, order: usize) -> (usize, Vec<Vec<f64>>) {
        let p = self.spec.degree;
        let t = &self.knots;
        let span = self.interval_index_unit(u) + p;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = u - t[span + 1 - j];
            right[j] = t[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let tmp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; order + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        if order > 0 {
            let mut a = vec![vec![0.0; p + 1]; 2];
            for r in 0..=p {
                let (mut s1, mut s2) = (0usize, 1usize);
                a[0][0] = 1.0;
                for k in 1..=order {
                    let mut d = 0.0;
                    let rk = r as isize - k as isize;
                    let pk = p as isize - k as isize;
                    if r >= k {
                        a[s2][0] = a[s1][0] / ndu[(pk + 1) as usize][rk as usize];
                        d = a[s2][0] * ndu[rk as usize][pk as usize];
                    }
                    let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                    let j2 = if (r as isize - 1) <= pk {
                        k - 1
                    } else {
                        p - r
                    };
                    for j in j1..=j2 {
                        let idx = (rk + j as isize) as usize;
                        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[(pk + 1) as usize][idx];
                        d += a[s2][j] * ndu[idx][pk as usize];
                    }
                    if r as isize <= pk {
                        a[s2][k] = -a[s1][k - 1] / ndu[(pk + 1) as usize][r];
                        d += a[s2][k] * ndu[r][pk as usize];
                    }
                    ders[k][r] = d;
                    std::mem::swap(&mut s1, &mut s2);
                }
            }
            let mut fac = p as f64;
            for k in 1..=order {
                for v in ders[k].iter_mut() {
                    *v *= fac;
                }
                fac *= (p as f64) - k as f64;
            }
        }
        (span - p, ders)
    }

    fn interval_index_unit(&self, u: f64) -> usize {
        let m = self.unit_breaks.len() - 1;
        if u >= 1.0 {
            return m - 1;
        }
        match self
            .unit_breaks
            .binary_search_by(|k| k.partial_cmp(&u).unwrap())
        {
            Ok(j) => j.min(m - 1),
            Err(j) => j.saturating_sub(1),
        }
    }

    /// Integral over the quadrature grid of a function of `s`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.grid
            .points
            .iter()
            .zip(&self.grid.weights)
            .map(|(s, w)| w * f(*s))
            .sum()
    }

    /// Quadrature weights of the grid restricted to `[a, b]`; `a` and `b`
    /// are expected to be grid cut points such as breakpoints.
    pub fn weights_on(&self, a: f64, b: f64) -> Vec<f64> {
        let pts = &self.grid.points;
        let tol = 1e-12 * self.width();
        let mut w = vec![0.0; pts.len()];
        let mut g = 0;
        while g + 2 < pts.len() {
            if pts[g] >= a - tol && pts[g + 2] <= b + tol {
                let h = (pts[g + 2] - pts[g]) / 6.0;
                w[g] += h;
                w[g + 1] += 4.0 * h;
                w[g + 2] += h;
            }
            g += 2;
        }
        w
    }

    /// `(int_a^b B_k(s) ds)_k` on the quadrature grid.
    pub fn basis_integrals(&self, a: f64, b: f64) -> DVector<f64> {
        let w = DVector::from_vec(self.weights_on(a, b));
        self.grid.basis.tr_mul(&w)
    }
}

/// Composite Simpson nodes and weights: each cell between consecutive cut
/// points gets its midpoint.
pub fn simpson_nodes(cuts: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let cells = cuts.len().saturating_sub(1);
    let mut pts = Vec::with_capacity(2 * cells + 1);
    let mut w = vec![0.0; 2 * cells + 1];
    for i in 0..cells {
        let (a, b) = (cuts[i], cuts[i + 1]);
        pts.push(a);
        pts.push(0.5 * (a + b));
        let h = (b - a) / 6.0;
        w[2 * i] += h;
        w[2 * i + 1] += 4.0 * h;
        w[2 * i + 2] += h;
    }
    if let Some(last) = cuts.last() {
        pts.push(*last);
    }
    (pts, w)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // P_n(x) and P_n'(x) by the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Roughness penalty `J` and a factor `D` with `J = D'D`.
#[derive(Debug, Clone)]
pub struct PenaltyMatrices {
    /// `L x L` Gram matrix of second derivatives on the unit interval.
    pub j: DMatrix<f64>,
    /// `rank(J) x L`.
    pub d: DMatrix<f64>,
}

impl PenaltyMatrices {
    /// `J` padded with a `p x p` zero block for the scalar coefficients.
    pub fn j_star(&self, p: usize) -> DMatrix<f64> {
        let l = self.j.nrows();
        let mut out = DMatrix::zeros(l + p, l + p);
        out.view_mut((0, 0), (l, l)).copy_from(&self.j);
        out
    }

    /// Penalty and factor restricted to a subset of basis indices.
    pub fn restrict(&self, cols: &[usize]) -> PenaltyMatrices {
        let j = self.j.select_rows(cols).select_columns(cols);
        let d = factor_psd(&j);
        PenaltyMatrices { j, d }
    }

    pub fn rank(&self) -> usize {
        self.d.nrows()
    }

    /// `b' J b`.
    pub fn quad(&self, b: &[f64]) -> f64 {
        let l = self.j.nrows();
        let mut acc = 0.0;
        for r in 0..l {
            if b[r] == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for c in 0..l {
                row += self.j[(r, c)] * b[c];
            }
            acc += b[r] * row;
        }
        acc
    }
}

/// Exact `J_{ij} = int_0^1 B_i''(u) B_j''(u) du` by per-interval Gauss-Legendre.
pub fn roughness_matrix(handle: &BasisHandle) -> Result<PenaltyMatrices> {
    let d = handle.degree();
    if d < 2 {
        return Err(Error::Basis(format!(
            "roughness penalty needs degree >= 2, got {d}"
        )));
    }
    let l = handle.n_basis();
    let (nodes, weights) = gauss_legendre(d - 1);
    let mut j = DMatrix::zeros(l, l);
    for w in handle.unit_breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        for (x, wt) in nodes.iter().zip(&weights) {
            let u = a + half * (x + 1.0);
            let (first, ders) = handle.nonzero_derivs_unit(u, 2);
            let second = &ders[2];
            for r in 0..=d {
                for c in 0..=d {
                    j[(first + r, first + c)] += half * wt * second[r] * second[c];
                }
            }
        }
    }
    let j = 0.5 * (&j + j.transpose());
    let dmat = factor_psd(&j);
    Ok(PenaltyMatrices { j, d: dmat })
}

/// `D` with `D'D = J` from a clamped symmetric eigendecomposition.
pub fn factor_psd(j: &DMatrix<f64>) -> DMatrix<f64> {
    let l = j.nrows();
    if l == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(j.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let tol = 1e-12 * max;
    let keep: Vec<usize> = (0..l)
        .filter(|&i| max > 0.0 && eig.eigenvalues[i] > tol)
        .collect();
    let mut out = DMatrix::zeros(keep.len(), l);
    for (r, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        for c in 0..l {
            out[(r, c)] = s * eig.eigenvectors[(c, i)];
        }
    }
    out
}

/// Something that can be integrated against the basis.
pub trait Exposure {
    fn value(&self, s: f64) -> f64;

    /// Closed interval on which `value` is defined.
    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

impl<F: Fn(f64) -> f64> Exposure for F {
    fn value(&self, s: f64) -> f64 {
        self(s)
    }
}

/// `(int x(s) B_k(s) ds)_k` over the physical domain on the quadrature grid.
pub fn functional_design_row<X: Exposure + ?Sized>(
    handle: &BasisHandle,
    x: &X,
) -> Result<DVector<f64>> {
    let (lo, hi) = handle.domain();
    let (a, b) = x.support();
    let tol = 1e-9 * handle.width();
    if a > lo + tol || b < hi - tol {
        return Err(Error::Data(format!(
            "exposure defined on [{a}, {b}] does not cover the basis domain [{lo}, {hi}]"
        )));
    }
    let grid = handle.grid();
    let wx: DVector<f64> = DVector::from_iterator(
        grid.points.len(),
        grid.points
            .iter()
            .zip(&grid.weights)
            .map(|(s, w)| w * x.value(*s)),
    );
    Ok(grid.basis.tr_mul(&wx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cubic(m: usize) -> BasisHandle {
        build_basis(BasisSpec::uniform(3, m, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn paper_sized_basis_has_thirty_functions() {
        assert_eq!(cubic(26).n_basis(), 30);
    }

    #[test]
    fn hat_functions_at_quarter() {
        let h = build_basis(BasisSpec::with_knots(1, 0.0, 1.0, vec![0.5])).unwrap();
        let v = h.eval(0.25);
        assert_eq!(v.len(), 3);
        assert_abs_diff_eq!(v[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(build_basis(BasisSpec::with_knots(0, 0.0, 1.0, vec![0.5])).is_err());
        assert!(build_basis(BasisSpec::with_knots(3, 0.0, 1.0, vec![0.6, 0.4])).is_err());
        assert!(build_basis(BasisSpec::with_knots(3, 0.0, 1.0, vec![1.2])).is_err());
        let h = build_basis(BasisSpec::uniform(1, 3, 0.0, 1.0)).unwrap();
        assert!(roughness_matrix(&h).is_err());
    }

    #[test]
    fn partition_of_unity_and_local_support() {
        let h = build_basis(BasisSpec::with_knots(
            3,
            90.0,
            2100.0,
            vec![150.0, 270.0, 510.0, 990.0, 1500.0],
        ))
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = h.degree();
        let k = h.breakpoints().to_vec();
        let m1 = k.len() - 1;
        for _ in 0..10_000 {
            let s = rng.gen_range(90.0..=2100.0);
            let v = h.eval(s);
            assert!((v.sum() - 1.0).abs() < 1e-12);
            for (idx, val) in v.iter().enumerate() {
                // 1-based k = idx + 1: support [kappa_{k-d-1}, kappa_k]
                let lo = k[(idx + 1).saturating_sub(d + 1).min(m1)];
                let hi = k[(idx + 1).min(m1)];
                if s < lo || s > hi {
                    assert_eq!(*val, 0.0);
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = build_basis(BasisSpec::uniform(3, 4, 2.0, 5.0)).unwrap();
        for &s in &[2.3, 3.1, 4.44] {
            let e = 1e-5;
            let fd1 = (h.eval(s + e) - h.eval(s - e)) / (2.0 * e);
            let fd2 = (h.eval_derivative(s + e, 1) - h.eval_derivative(s - e, 1)) / (2.0 * e);
            assert!((fd1 - h.eval_derivative(s, 1)).amax() < 1e-6);
            assert!((fd2 - h.eval_derivative(s, 2)).amax() < 1e-4);
        }
    }

    #[test]
    fn gauss_legendre_exactness() {
        for n in 1..6 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert_abs_diff_eq!(q, exact, epsilon = 1e-13);
            }
        }
    }

    /// Adaptive Simpson on each inter-knot interval, independent of Gauss-Legendre.
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let c = 0.5 * (a + b);
        let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b));
        let l = (c - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + c)) + f(c));
        let r = (b - c) / 6.0 * (f(c) + 4.0 * f(0.5 * (c + b)) + f(b));
        if depth == 0 || (l + r - whole).abs() < 15.0 * tol {
            l + r + (l + r - whole) / 15.0
        } else {
            simpson(f, a, c, tol / 2.0, depth - 1) + simpson(f, c, b, tol / 2.0, depth - 1)
        }
    }

    #[test]
    fn roughness_matches_adaptive_quadrature() {
        let h = cubic(5);
        let pen = roughness_matrix(&h).unwrap();
        let l = h.n_basis();
        let k = h.breakpoints().to_vec();
        for r in 0..l {
            for c in 0..l {
                let f = |s: f64| {
                    // nudge inside the interval so one-sided derivatives are used
                    let d2 = h.eval_derivative(s, 2);
                    d2[r] * d2[c]
                };
                let mut tot = 0.0;
                for w in k.windows(2) {
                    let e = 1e-13;
                    tot += simpson(&f, w[0] + e, w[1] - e, 1e-12, 30);
                }
                assert!(
                    (tot - pen.j[(r, c)]).abs() < 1e-8 * pen.j.amax().max(1.0),
                    "entry {r},{c}: {tot} vs {}",
                    pen.j[(r, c)]
                );
            }
        }
    }

    #[test]
    fn roughness_nullspace_and_factor() {
        let h = cubic(8);
        let pen = roughness_matrix(&h).unwrap();
        let l = h.n_basis();
        // constant and linear coefficients via Greville abscissae
        let ones = DVector::from_element(l, 1.0);
        let knots = &h.knots;
        let grev = DVector::from_iterator(
            l,
            (0..l).map(|i| (1..=3).map(|q| knots[i + q]).sum::<f64>() / 3.0),
        );
        let scale = pen.j.amax();
        assert!(pen.quad(ones.as_slice()).abs() <= 1e-10 * scale);
        assert!(pen.quad(grev.as_slice()).abs() <= 1e-10 * scale);
        // the Greville coefficients reproduce s exactly
        for &s in &[0.1, 0.37, 0.9] {
            assert_abs_diff_eq!(h.curve(grev.as_slice(), s), s, epsilon = 1e-12);
        }
        let recon = pen.d.transpose() * &pen.d;
        assert!((recon - &pen.j).amax() <= 1e-10 * scale);
        assert_eq!(pen.rank(), l - 2);
        let min_eig = SymmetricEigen::new(pen.j.clone()).eigenvalues.min();
        assert!(min_eig > -1e-10 * pen.j.norm());
    }

    #[test]
    fn zero_group_vanishes_on_interval() {
        let h = cubic(6);
        let l = h.n_basis();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for j in 0..h.n_intervals() {
            let mut b: Vec<f64> = (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for k in h.group(j) {
                b[k] = 0.0;
            }
            let (a, c) = h.interval(j);
            for i in 0..=200 {
                let s = a + (c - a) * i as f64 / 200.0;
                assert_eq!(h.curve(&b, s), 0.0, "interval {j} at {s}");
            }
        }
    }

    #[test]
    fn design_row_edge_cases() {
        let h = build_basis(BasisSpec::uniform(3, 4, 0.0, 2.5)).unwrap();
        let zero = functional_design_row(&h, &|_s: f64| 0.0).unwrap();
        assert_eq!(zero.amax(), 0.0);
        let one = functional_design_row(&h, &|_s: f64| 1.0).unwrap();
        assert_abs_diff_eq!(one.sum(), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn design_row_matches_refined_grid() {
        let h = cubic(2);
        let fine = BasisHandle::new(BasisSpec::uniform(3, 2, 0.0, 1.0), 100_001).unwrap();
        let x = |s: f64| s;
        let row = functional_design_row(&h, &x).unwrap();
        let oracle = functional_design_row(&fine, &x).unwrap();
        assert!((row - oracle).amax() < 1e-8);
    }
}

//! Right-censored survival data with a functional exposure per subject.

use crate::basis::{functional_design_row, BasisHandle, Exposure};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

/// Exposure measured on concentric rings, linearly interpolated between radii
/// and held constant outside them.
#[derive(Debug, Clone, PartialEq)]
pub struct RingExposure {
    pub radii: Arc<[f64]>,
    pub values: Vec<f64>,
    /// Lower end of the interval on which the exposure is considered known.
    /// Defaults to the smallest radius; values below it repeat the first ring.
    pub start: f64,
}

impl RingExposure {
    pub fn new(radii: Arc<[f64]>, values: Vec<f64>) -> Result<Self> {
        let start = *radii
            .first()
            .ok_or_else(|| Error::Data("exposure needs at least one radius".into()))?;
        Self::with_start(radii, values, start)
    }

    pub fn with_start(radii: Arc<[f64]>, values: Vec<f64>, start: f64) -> Result<Self> {
        if radii.len() != values.len() {
            return Err(Error::Data(format!(
                "{} radii but {} exposure values",
                radii.len(),
                values.len()
            )));
        }
        if radii.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("non-increasing radii".into()));
        }
        if values.iter().chain(radii.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("exposure values must be finite".into()));
        }
        if !(start <= radii[0]) {
            return Err(Error::Config(format!(
                "exposure start {start} lies above the first radius {}",
                radii[0]
            )));
        }
        Ok(Self {
            radii,
            values,
            start,
        })
    }
}

impl Exposure for RingExposure {
    fn value(&self, s: f64) -> f64 {
        let r = &self.radii;
        let n = r.len();
        if s <= r[0] {
            return self.values[0];
        }
        if s >= r[n - 1] {
            return self.values[n - 1];
        }
        let k = r.partition_point(|&x| x <= s);
        let (a, b) = (r[k - 1], r[k]);
        let t = (s - a) / (b - a);
        self.values[k - 1] * (1.0 - t) + self.values[k] * t
    }

    fn support(&self) -> (f64, f64) {
        (self.start, *self.radii.last().unwrap())
    }
}

/// Exposure given as a spline in some fixed basis (used by the simulator).
#[derive(Debug, Clone)]
pub struct SplineExposure {
    pub basis: Arc<BasisHandle>,
    pub coefs: Vec<f64>,
}

impl Exposure for SplineExposure {
    fn value(&self, s: f64) -> f64 {
        self.basis.curve(&self.coefs, s)
    }

    fn support(&self) -> (f64, f64) {
        self.basis.domain()
    }
}

#[derive(Debug, Clone)]
pub enum ExposureFunction {
    Rings(RingExposure),
    Spline(SplineExposure),
}

impl Exposure for ExposureFunction {
    fn value(&self, s: f64) -> f64 {
        match self {
            ExposureFunction::Rings(r) => r.value(s),
            ExposureFunction::Spline(x) => x.value(s),
        }
    }

    fn support(&self) -> (f64, f64) {
        match self {
            ExposureFunction::Rings(r) => r.support(),
            ExposureFunction::Spline(x) => x.support(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SurvivalDataset {
    pub time: Vec<f64>,
    pub event: Vec<bool>,
    /// `n x p` scalar covariates.
    pub z: DMatrix<f64>,
    pub covariate_names: Vec<String>,
    pub exposure: Vec<ExposureFunction>,
    pub strata: Option<Vec<u32>>,
}

/// Short description of a dataset for logs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetSummary {
    pub n: usize,
    pub p: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub events: usize,
    pub radii: Vec<f64>,
    pub strata: usize,
}

impl SurvivalDataset {
    pub fn new(
        time: Vec<f64>,
        event: Vec<bool>,
        z: DMatrix<f64>,
        exposure: Vec<ExposureFunction>,
        strata: Option<Vec<u32>>,
    ) -> Result<Self> {
        let n = time.len();
        if event.len() != n || z.nrows() != n || exposure.len() != n {
            return Err(Error::Data(format!(
                "inconsistent lengths: {} times, {} events, {} covariate rows, {} exposures",
                n,
                event.len(),
                z.nrows(),
                exposure.len()
            )));
        }
        if let Some(s) = &strata {
            if s.len() != n {
                return Err(Error::Data("strata length differs from n".into()));
            }
        }
        if let Some(i) = time.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::DataRow {
                row: i + 1,
                msg: format!("observed time must be positive, got {}", time[i]),
            });
        }
        if !event.iter().any(|&e| e) {
            return Err(Error::Data("dataset has no events".into()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("covariates must be finite".into()));
        }
        let p = z.ncols();
        let covariate_names = (1..=p).map(|i| format!("z{i}")).collect();
        Ok(Self {
            time,
            event,
            z,
            covariate_names,
            exposure,
            strata,
        })
    }

    pub fn n(&self) -> usize {
        self.time.len()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    pub fn summary(&self) -> DatasetSummary {
        let radii = match self.exposure.first() {
            Some(ExposureFunction::Rings(r)) => r.radii.to_vec(),
            _ => vec![],
        };
        let strata = match &self.strata {
            Some(s) => {
                let mut u = s.clone();
                u.sort_unstable();
                u.dedup();
                u.len()
            }
            None => 1,
        };
        DatasetSummary {
            n: self.n(),
            p: self.p(),
            r: radii.len(),
            events: self.events(),
            radii,
            strata,
        }
    }
}

/// Column mapping for [`load_csv`].
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub time: String,
    pub event: String,
    /// Covariate columns; `None` takes every column that is not time, event,
    /// stratum or exposure.
    pub covariates: Option<Vec<String>>,
    /// Exposure columns are named `<prefix>@<radius>`.
    pub exposure_prefix: String,
    pub strata: Option<String>,
    /// Start of the exposure support; defaults to the smallest radius.
    pub exposure_start: Option<f64>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time: "time".into(),
            event: "event".into(),
            covariates: None,
            exposure_prefix: "x".into(),
            strata: None,
            exposure_start: None,
        }
    }
}

pub fn load_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<SurvivalDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<SurvivalDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_string()).collect();
    {
        let mut seen = std::collections::HashSet::new();
        for h in &headers {
            if !seen.insert(h.as_str()) {
                return Err(Error::Data(format!("duplicate column '{h}'")));
            }
        }
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column '{name}'")))
    };
    let time_col = find(&schema.time)?;
    let event_col = find(&schema.event)?;
    let strata_col = schema.strata.as_deref().map(find).transpose()?;

    let marker = format!("{}@", schema.exposure_prefix);
    let mut exp_cols = Vec::new();
    let mut radii = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(r) = h.strip_prefix(&marker) {
            let r: f64 = r
                .parse()
                .map_err(|_| Error::Data(format!("cannot read radius from column '{h}'")))?;
            exp_cols.push(i);
            radii.push(r);
        }
    }
    if exp_cols.is_empty() {
        return Err(Error::Data(format!(
            "no exposure columns named '{marker}<radius>'"
        )));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Data("non-increasing radii".into()));
    }
    let cov_cols: Vec<usize> = match &schema.covariates {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|i| {
                *i != time_col
                    && *i != event_col
                    && Some(*i) != strata_col
                    && !exp_cols.contains(i)
            })
            .collect(),
    };

    let radii: Arc<[f64]> = radii.into();
    let start = schema.exposure_start.unwrap_or(radii[0]);
    let mut time = Vec::new();
    let mut event = Vec::new();
    let mut zvals = Vec::new();
    let mut exposure = Vec::new();
    let mut strata = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec?;
        let num = |col: usize| -> Result<f64> {
            let cell = rec.get(col).unwrap_or("");
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                return Err(Error::DataRow {
                    row,
                    msg: format!("missing value in column '{}'", headers[col]),
                });
            }
            cell.parse::<f64>().map_err(|_| Error::DataRow {
                row,
                msg: format!("non-numeric value '{cell}' in column '{}'", headers[col]),
            })
        };
        time.push(num(time_col)?);
        let e = num(event_col)?;
        if e != 0.0 && e != 1.0 {
            return Err(Error::DataRow {
                row,
                msg: format!("event indicator must be 0 or 1, got {e}"),
            });
        }
        event.push(e == 1.0);
        for &c in &cov_cols {
            zvals.push(num(c)?);
        }
        let vals = exp_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
        let ring = RingExposure::with_start(radii.clone(), vals, start)
            .map_err(|e| Error::DataRow {
                row,
                msg: e.to_string(),
            })?;
        exposure.push(ExposureFunction::Rings(ring));
        if let Some(c) = strata_col {
            let v = num(c)?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::DataRow {
                    row,
                    msg: format!("stratum label must be a non-negative integer, got {v}"),
                });
            }
            strata.push(v as u32);
        }
    }
    let n = time.len();
    let z = DMatrix::from_row_slice(n, cov_cols.len(), &zvals);
    let mut ds = SurvivalDataset::new(
        time,
        event,
        z,
        exposure,
        strata_col.map(|_| strata),
    )?;
    ds.covariate_names = cov_cols.iter().map(|&c| headers[c].clone()).collect();
    Ok(ds)
}

/// Write a dataset in the layout [`read_csv`] expects, sampling each
/// exposure at `radii`.
pub fn write_csv<W: std::io::Write>(dataset: &SurvivalDataset, radii: &[f64], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["time".to_string(), "event".to_string()];
    if dataset.strata.is_some() {
        header.push("stratum".into());
    }
    header.extend(dataset.covariate_names.iter().cloned());
    header.extend(radii.iter().map(|r| format!("x@{r}")));
    wtr.write_record(&header)?;
    for i in 0..dataset.n() {
        let mut rec = vec![format!("{}", dataset.time[i]), (dataset.event[i] as u8).to_string()];
        if let Some(s) = &dataset.strata {
            rec.push(s[i].to_string());
        }
        rec.extend(dataset.z.row(i).iter().map(|v| format!("{v}")));
        rec.extend(radii.iter().map(|&r| format!("{}", dataset.exposure[i].value(r))));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Mean-center the scalar covariates and the exposure (per radius, or per
/// spline coefficient) over subjects.
pub fn center(dataset: &SurvivalDataset) -> SurvivalDataset {
    let mut out = dataset.clone();
    let n = out.n() as f64;
    for mut col in out.z.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    let width = match out.exposure.first() {
        Some(ExposureFunction::Rings(r)) => r.values.len(),
        Some(ExposureFunction::Spline(s)) => s.coefs.len(),
        None => 0,
    };
    let mut means = vec![0.0; width];
    for e in &out.exposure {
        let v = exposure_values(e);
        for (m, x) in means.iter_mut().zip(v) {
            *m += x / n;
        }
    }
    for e in out.exposure.iter_mut() {
        let v = match e {
            ExposureFunction::Rings(r) => &mut r.values,
            ExposureFunction::Spline(s) => &mut s.coefs,
        };
        for (x, m) in v.iter_mut().zip(&means) {
            *x -= m;
        }
    }
    out
}

fn exposure_values(e: &ExposureFunction) -> &[f64] {
    match e {
        ExposureFunction::Rings(r) => &r.values,
        ExposureFunction::Spline(s) => &s.coefs,
    }
}

/// Design matrices aligned with the survival outcome.
#[derive(Debug, Clone)]
pub struct DesignedData {
    /// `n x L` functional design, `Phi_ik = int X_i(s) B_k(s) ds`.
    pub phi: DMatrix<f64>,
    /// `n x p` scalar covariates.
    pub z: DMatrix<f64>,
    pub time: Vec<f64>,
    pub event: Vec<bool>,
    /// Stratum label per subject (all zero when unstratified).
    pub strata: Vec<u32>,
    /// Subjects ordered by stratum, then by decreasing time.
    pub order: Vec<usize>,
}

impl DesignedData {
    pub fn new(
        phi: DMatrix<f64>,
        z: DMatrix<f64>,
        time: Vec<f64>,
        event: Vec<bool>,
        strata: Option<Vec<u32>>,
    ) -> Result<Self> {
        let n = time.len();
        if phi.nrows() != n || z.nrows() != n || event.len() != n {
            return Err(Error::Data("design matrices are not row-aligned".into()));
        }
        let strata = strata.unwrap_or_else(|| vec![0; n]);
        if strata.len() != n {
            return Err(Error::Data("strata length differs from n".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            strata[a]
                .cmp(&strata[b])
                .then(time[b].partial_cmp(&time[a]).unwrap())
                .then(a.cmp(&b))
        });
        Ok(Self {
            phi,
            z,
            time,
            event,
            strata,
            order,
        })
    }

    pub fn n(&self) -> usize {
        self.time.len()
    }

    pub fn n_spline(&self) -> usize {
        self.phi.ncols()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn n_coef(&self) -> usize {
        self.n_spline() + self.p()
    }

    /// Same data with only the listed functional columns.
    pub fn restrict(&self, spline_cols: &[usize]) -> DesignedData {
        DesignedData {
            phi: self.phi.select_columns(spline_cols),
            z: self.z.clone(),
            time: self.time.clone(),
            event: self.event.clone(),
            strata: self.strata.clone(),
            order: self.order.clone(),
        }
    }

    /// Row `i` of `[Phi | Z]`.
    pub fn row(&self, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.n_coef());
        let l = self.n_spline();
        for k in 0..l {
            v[k] = self.phi[(i, k)];
        }
        for k in 0..self.p() {
            v[l + k] = self.z[(i, k)];
        }
        v
    }
}

/// Materialize `Phi` for a dataset on a basis.
pub fn design(dataset: &SurvivalDataset, handle: &BasisHandle) -> Result<DesignedData> {
    let l = handle.n_basis();
    let rows: Vec<DVector<f64>> = dataset
        .exposure
        .par_iter()
        .map(|x| functional_design_row(handle, x))
        .collect::<Result<_>>()?;
    let n = dataset.n();
    let mut phi = DMatrix::zeros(n, l);
    for (i, r) in rows.iter().enumerate() {
        phi.row_mut(i).copy_from(&r.transpose());
    }
    DesignedData::new(
        phi,
        dataset.z.clone(),
        dataset.time.clone(),
        dataset.event.clone(),
        dataset.strata.clone(),
    )
}

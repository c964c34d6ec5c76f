//! Standardization of the measure panel and principal-component extraction
//! of the common high-frequency risk factor.
//!
//! All statistics (transform floors, means, standard deviations, loadings,
//! AR(1) smoother parameters) are estimated on the in-sample rows only and
//! then applied unchanged to every date.

use std::io::Read;
use std::ops::Range;

use chrono::NaiveDate;
use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::NelderMead;
use crate::realized::{Measure, MeasurePanel};

/// Minimum number of in-sample rows for standardization.
pub const MIN_STANDARDIZE_ROWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Log,
    SignedLog,
    Identity,
}

impl Transform {
    fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Log => x.ln(),
            Transform::SignedLog => x.signum() * x.abs().ln_1p(),
            Transform::Identity => x,
        }
    }

    /// Default: log for variance-unit measures, identity for RKurt.
    pub fn default_for(m: Measure) -> Self {
        if m.is_variance_unit() {
            Transform::Log
        } else {
            Transform::Identity
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub measure: Measure,
    pub transform: Transform,
    pub mean: f64,
    pub std: f64,
    /// Smallest positive in-sample value; zeros are raised to it before a log.
    pub floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub columns: Vec<ColumnStats>,
    pub dropped: Vec<(Measure, String)>,
    pub in_sample_start: usize,
    pub in_sample_end: usize,
    pub in_sample_first_date: NaiveDate,
    pub in_sample_last_date: NaiveDate,
}

impl StandardizationStats {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Z-scored panel: `data` is T x K with columns in `columns` order.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedTable {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<Measure>,
    pub data: DMatrix<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Transforms and z-scores each panel column using in-sample statistics.
///
/// `transforms` overrides the default transform per measure.
pub fn standardize_panel(
    panel: &MeasurePanel,
    in_sample: Range<usize>,
    transforms: &[(Measure, Transform)],
) -> Result<(StandardizedTable, StandardizationStats)> {
    if in_sample.end > panel.len() || in_sample.len() < MIN_STANDARDIZE_ROWS {
        return Err(Error::data(format!(
            "in-sample range {in_sample:?} invalid: need at least {MIN_STANDARDIZE_ROWS} rows within {}",
            panel.len()
        )));
    }
    let mut stats = Vec::new();
    let mut dropped = Vec::new();
    let mut columns_data: Vec<Vec<f64>> = Vec::new();
    for m in Measure::ALL {
        let transform = transforms
            .iter()
            .find(|(mm, _)| *mm == m)
            .map(|(_, t)| *t)
            .unwrap_or_else(|| Transform::default_for(m));
        let raw = panel.column(m);
        let mut floor = None;
        let prepared: Vec<f64> = if transform == Transform::Log {
            let Some(min_pos) = raw[in_sample.clone()]
                .iter()
                .copied()
                .filter(|v| *v > 0.0)
                .min_by(f64::total_cmp)
            else {
                warn!("dropping {}: no positive in-sample values", m.name());
                dropped.push((m, "no positive in-sample values".to_string()));
                continue;
            };
            let zeros = raw.iter().filter(|v| **v <= 0.0).count();
            if zeros > 0 {
                warn!("{}: {zeros} non-positive value(s) floored at {min_pos}", m.name());
            }
            floor = Some(min_pos);
            raw.iter().map(|v| v.max(min_pos)).collect()
        } else {
            raw
        };
        let transformed: Vec<f64> = prepared.iter().map(|&v| transform.apply(v)).collect();
        let (mean, std) = mean_std(&transformed[in_sample.clone()]);
        if !(std > 1e-12 * mean.abs().max(1.0)) || !std.is_finite() {
            warn!("dropping {}: zero in-sample variance", m.name());
            dropped.push((m, "zero in-sample variance".to_string()));
            continue;
        }
        columns_data.push(transformed.iter().map(|v| (v - mean) / std).collect());
        stats.push(ColumnStats {
            measure: m,
            transform,
            mean,
            std,
            floor,
        });
    }
    if stats.is_empty() {
        return Err(Error::data("every panel column was dropped during standardization"));
    }
    let t = panel.len();
    let data = DMatrix::from_fn(t, columns_data.len(), |i, j| columns_data[j][i]);
    let dates = panel.dates();
    let table = StandardizedTable {
        dates: dates.clone(),
        columns: stats.iter().map(|s| s.measure).collect(),
        data,
    };
    Ok((
        table,
        StandardizationStats {
            columns: stats,
            dropped,
            in_sample_start: in_sample.start,
            in_sample_end: in_sample.end,
            in_sample_first_date: dates[in_sample.start],
            in_sample_last_date: dates[in_sample.end - 1],
        },
    ))
}

/// Common factor scores with their loadings.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSeries {
    pub dates: Vec<NaiveDate>,
    /// One row per date, `r` values per row.
    pub values: Vec<Vec<f64>>,
    pub measures: Vec<Measure>,
    /// K x r, unit-norm columns.
    pub loadings: Vec<Vec<f64>>,
    pub explained: Vec<f64>,
}

impl FactorSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[j]).collect()
    }

    /// Factor series with no loadings, e.g. a simulated exogenous driver.
    pub fn from_values(dates: Vec<NaiveDate>, values: Vec<Vec<f64>>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::data("factor dates and values differ in length"));
        }
        let r = values.first().map_or(0, Vec::len);
        if values.iter().any(|v| v.len() != r || v.iter().any(|x| !x.is_finite())) {
            return Err(Error::data("factor rows must be finite and equally long"));
        }
        Ok(Self {
            dates,
            values,
            measures: Vec::new(),
            loadings: Vec::new(),
            explained: Vec::new(),
        })
    }

    pub fn to_csv(&self) -> String {
        let r = self.rank();
        let mut out = String::from("date");
        for j in 0..r {
            out.push_str(&format!(",f{}", j + 1));
        }
        out.push('\n');
        for (d, row) in self.dates.iter().zip(&self.values) {
            out.push_str(&d.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn loadings_csv(&self) -> String {
        let r = self.rank();
        let mut out = String::from("measure");
        for j in 0..r {
            out.push_str(&format!(",lambda{}", j + 1));
        }
        out.push('\n');
        for (m, row) in self.measures.iter().zip(&self.loadings) {
            out.push_str(m.name());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses `date,f1[,f2,...]`.
    pub fn parse_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::parse(1, e.to_string()))?
            .clone();
        let r = header.len().saturating_sub(1);
        let well_formed = header.get(0) == Some("date")
            && r >= 1
            && (1..=r).all(|j| header.get(j) == Some(format!("f{j}").as_str()));
        if !well_formed {
            return Err(Error::parse(1, "expected header `date,f1[,f2,...]`"));
        }
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
            dates.push(
                NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                    .map_err(|_| Error::parse(line, format!("bad date `{}`", &rec[0])))?,
            );
            let row = (1..=r)
                .map(|j| {
                    rec[j]
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::parse(line, format!("bad value `{}`", &rec[j])))
                })
                .collect::<Result<Vec<f64>>>()?;
            values.push(row);
        }
        if dates.is_empty() {
            return Err(Error::data("factor file has no rows"));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::data(format!("factor dates not increasing at {}", w[1])));
        }
        Self::from_values(dates, values)
    }
}

/// First `r` principal components of the in-sample correlation structure.
///
/// Scores are `table * loadings` for every date. Each loading vector is
/// signed so that its RV entry is positive (largest entry if RV was dropped).
pub fn extract_pc_factor(
    table: &StandardizedTable,
    r: usize,
    in_sample: Range<usize>,
) -> Result<FactorSeries> {
    let k = table.columns.len();
    if r == 0 || r > k {
        return Err(Error::Config(format!("factor count {r} must be in 1..={k}")));
    }
    if in_sample.end > table.data.nrows() || in_sample.len() < r + 1 {
        return Err(Error::data(format!(
            "need at least {} in-sample rows for {r} factor(s)",
            r + 1
        )));
    }
    let x = table.data.rows(in_sample.start, in_sample.len());
    let n = x.nrows() as f64;
    let means = x.row_mean();
    let centered = DMatrix::from_fn(x.nrows(), k, |i, j| x[(i, j)] - means[j]);
    let cov = centered.transpose() * &centered / (n - 1.0);

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|&&v| v > 1e-10 * top.max(f64::MIN_POSITIVE))
        .count();
    if !(total > 0.0) || rank < r {
        return Err(Error::data(format!(
            "degenerate covariance: rank {rank} below requested {r} factor(s)"
        )));
    }

    let anchor = table.columns.iter().position(|&m| m == Measure::Rv);
    let mut loadings = vec![vec![0.0; r]; k];
    let mut explained = Vec::with_capacity(r);
    for (j, &idx) in order.iter().take(r).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let norm = v.norm();
        let pivot = anchor.unwrap_or_else(|| v.iamax());
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..k {
            loadings[i][j] = sign * v[i] / norm;
        }
        explained.push(eig.eigenvalues[idx].max(0.0) / total);
    }

    let values = (0..table.data.nrows())
        .map(|t| {
            (0..r)
                .map(|j| (0..k).map(|i| table.data[(t, i)] * loadings[i][j]).sum())
                .collect()
        })
        .collect();
    Ok(FactorSeries {
        dates: table.dates.clone(),
        values,
        measures: table.columns.clone(),
        loadings,
        explained,
    })
}

/// Where the factor is extracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorSource {
    /// Standardized (log) measure levels.
    #[default]
    Levels,
    /// Innovations of per-column AR(1) fits to the standardized levels.
    Innovations,
}

/// Replaces each column by its AR(1) innovation (OLS on the in-sample rows),
/// re-standardized with in-sample moments. The first row has no lag and is 0.
pub fn innovation_table(table: &StandardizedTable, in_sample: Range<usize>) -> Result<StandardizedTable> {
    let t = table.data.nrows();
    let k = table.columns.len();
    if in_sample.len() < 3 || in_sample.end > t {
        return Err(Error::data("innovation table needs at least 3 in-sample rows"));
    }
    let mut out = DMatrix::zeros(t, k);
    for j in 0..k {
        let col: Vec<f64> = table.data.column(j).iter().copied().collect();
        let (c, rho) = ar1_ols(&col[in_sample.clone()]);
        let mut resid = vec![0.0; t];
        for i in 1..t {
            resid[i] = col[i] - c - rho * col[i - 1];
        }
        let start = in_sample.start.max(1);
        let (m, s) = mean_std(&resid[start..in_sample.end]);
        if !(s > 0.0) {
            return Err(Error::data(format!(
                "{}: zero-variance innovations",
                table.columns[j].name()
            )));
        }
        for i in 1..t {
            out[(i, j)] = (resid[i] - m) / s;
        }
    }
    Ok(StandardizedTable {
        dates: table.dates.clone(),
        columns: table.columns.clone(),
        data: out,
    })
}

fn ar1_ols(y: &[f64]) -> (f64, f64) {
    let n = (y.len() - 1) as f64;
    let x = &y[..y.len() - 1];
    let z = &y[1..];
    let mx = x.iter().sum::<f64>() / n;
    let mz = z.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxz: f64 = x.iter().zip(z).map(|(a, b)| (a - mx) * (b - mz)).sum();
    let rho = if sxx > 0.0 { sxz / sxx } else { f64::NAN };
    (mz - rho * mx, rho)
}

/// Fitted parameters of the scalar AR(1)-plus-noise state space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Smoother {
    pub mean: f64,
    pub rho: f64,
    pub state_var: f64,
    pub noise_var: f64,
}

#[derive(Debug, Clone)]
pub struct SmoothOutcome {
    pub factor: FactorSeries,
    /// Fitted parameters per factor column; `None` where the fallback fired.
    pub fits: Vec<Option<Ar1Smoother>>,
}

impl Ar1Smoother {
    /// Kalman filter: returns (one-sided state estimates, log-likelihood).
    fn filter(&self, y: &[f64]) -> (Vec<f64>, f64) {
        let uncond = self.state_var / (1.0 - self.rho * self.rho);
        let mut s = 0.0;
        let mut p = uncond;
        let mut loglik = 0.0;
        let mut out = Vec::with_capacity(y.len());
        for (t, &obs) in y.iter().enumerate() {
            if t > 0 {
                s *= self.rho;
                p = self.rho * self.rho * p + self.state_var;
            }
            let v = obs - self.mean - s;
            let f = p + self.noise_var;
            loglik -= 0.5 * ((2.0 * std::f64::consts::PI * f).ln() + v * v / f);
            let gain = p / f;
            s += gain * v;
            p *= 1.0 - gain;
            out.push(self.mean + s);
        }
        (out, loglik)
    }

    fn fit(y: &[f64]) -> Option<Self> {
        let (mean, var) = mean_std(y);
        let (_, rho0) = ar1_ols(y);
        if !(var > 1e-12) || !rho0.is_finite() || rho0.abs() >= 1.0 {
            return None;
        }
        let var = var * var;
        let unpack = |p: &[f64]| Ar1Smoother {
            mean,
            rho: p[0].tanh(),
            state_var: p[1].exp(),
            noise_var: p[2].exp(),
        };
        let start = [
            rho0.clamp(-0.95, 0.95).atanh(),
            (0.5 * var * (1.0 - rho0 * rho0)).max(1e-8).ln(),
            (0.5 * var).ln(),
        ];
        let nm = NelderMead {
            ftol: 1e-10,
            ..Default::default()
        };
        let best = nm.minimize(
            |p| {
                if p[1] < -40.0 || p[2] < -40.0 {
                    return f64::INFINITY;
                }
                -unpack(p).filter(y).1
            },
            &start,
        );
        let fitted = unpack(&best.x);
        (best.f.is_finite() && fitted.rho.abs() < 0.999).then_some(fitted)
    }
}

/// Optional AR(1) state-space refinement of each factor column.
///
/// Parameters are fit by maximum likelihood on the in-sample rows; the
/// returned series is the one-sided (filtered) state so that a time-t value
/// never uses observations after t. A column with a degenerate or
/// non-stationary fit is returned unchanged.
pub fn ar1_smooth(factor: &FactorSeries, in_sample: Range<usize>) -> Result<SmoothOutcome> {
    if factor.len() < 20 || in_sample.len() < 20 || in_sample.end > factor.len() {
        return Err(Error::data("AR(1) smoothing needs at least 20 observations"));
    }
    let mut out = factor.clone();
    let mut fits = Vec::new();
    for j in 0..factor.rank() {
        let col = factor.column(j);
        match Ar1Smoother::fit(&col[in_sample.clone()]) {
            Some(fit) => {
                let (smoothed, _) = fit.filter(&col);
                for (row, v) in out.values.iter_mut().zip(smoothed) {
                    row[j] = v;
                }
                fits.push(Some(fit));
            }
            None => {
                warn!("factor {}: AR(1) fit degenerate or non-stationary; left unsmoothed", j + 1);
                fits.push(None);
            }
        }
    }
    Ok(SmoothOutcome { factor: out, fits })
}

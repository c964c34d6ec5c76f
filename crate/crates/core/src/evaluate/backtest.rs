//! VaR coverage and ES exceedance-residual backtests.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::model::ForecastSeries;

#[derive(Debug, Clone, PartialEq)]
pub struct HitSeries {
    pub dates: Vec<NaiveDate>,
    /// `1{r_t <= VaR_t}`
    pub hits: Vec<u8>,
    pub alpha: f64,
}

impl HitSeries {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.hits.iter().map(|h| *h as usize).sum()
    }

    pub fn violation_rate(&self) -> f64 {
        if self.hits.is_empty() {
            return 0.0;
        }
        self.count() as f64 / self.len() as f64
    }

    /// Actual over expected violations, `rate / alpha`.
    pub fn var_ae(&self) -> f64 {
        self.violation_rate() / self.alpha
    }
}

pub fn hits(dates: &[NaiveDate], returns: &[f64], var: &[f64], alpha: f64) -> Result<HitSeries> {
    if returns.len() != var.len() || dates.len() != var.len() {
        return Err(Error::data(format!(
            "hit series needs aligned inputs: {} dates, {} returns, {} VaR values",
            dates.len(),
            returns.len(),
            var.len()
        )));
    }
    Ok(HitSeries {
        dates: dates.to_vec(),
        hits: returns
            .iter()
            .zip(var)
            .map(|(r, q)| u8::from(r <= q))
            .collect(),
        alpha,
    })
}

/// Outcome of one backtest. A degenerate test keeps its statistic for
/// reference but may have no p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub counts: BTreeMap<String, f64>,
}

impl TestResult {
    fn new(method: &str, statistic: f64, p_value: Option<f64>) -> Self {
        Self {
            method: method.to_string(),
            statistic,
            p_value: p_value.map(|p| p.clamp(0.0, 1.0)),
            degenerate: false,
            counts: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.counts.insert(key.to_string(), value);
        self
    }

    fn degenerate(mut self) -> Self {
        self.degenerate = true;
        self
    }
}

pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    let c = ChiSquared::new(df).expect("positive degrees of freedom");
    (1.0 - c.cdf(x)).clamp(0.0, 1.0)
}

/// `a ln b` with `0 ln 0 = 0`.
fn xlogy(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * b.ln()
    }
}

fn bernoulli_ll(ones: f64, zeros: f64, p: f64) -> f64 {
    xlogy(ones, p) + xlogy(zeros, 1.0 - p)
}

const MIN_BACKTEST_LEN: usize = 50;

fn check_len(hits: &HitSeries, what: &str) -> Result<()> {
    if hits.len() < MIN_BACKTEST_LEN {
        return Err(Error::data(format!(
            "{what} needs at least {MIN_BACKTEST_LEN} observations, got {}",
            hits.len()
        )));
    }
    Ok(())
}

fn uc_statistic(hits: &HitSeries) -> f64 {
    let t = hits.len() as f64;
    let x = hits.count() as f64;
    let p_hat = x / t;
    let lr = -2.0 * (bernoulli_ll(x, t - x, hits.alpha) - bernoulli_ll(x, t - x, p_hat));
    lr.max(0.0)
}

/// Kupiec unconditional coverage LR against chi-square(1).
pub fn kupiec_uc(hits: &HitSeries) -> Result<TestResult> {
    check_len(hits, "Kupiec test")?;
    let lr = uc_statistic(hits);
    Ok(TestResult::new("VaR_UC-Kupiec", lr, Some(chi2_sf(lr, 1.0)))
        .with("n", hits.len() as f64)
        .with("violations", hits.count() as f64))
}

/// Christoffersen conditional coverage: `LR_uc + LR_ind` against
/// chi-square(2), with the independence part from a two-state Markov chain.
pub fn christoffersen_cc(hits: &HitSeries) -> Result<TestResult> {
    check_len(hits, "Christoffersen test")?;
    let mut n = [[0f64; 2]; 2];
    for w in hits.hits.windows(2) {
        n[w[0] as usize][w[1] as usize] += 1.0;
    }
    let pairs = n[0][0] + n[0][1] + n[1][0] + n[1][1];
    let lr_uc = uc_statistic(hits);
    let ones = n[0][1] + n[1][1];
    let from0 = n[0][0] + n[0][1];
    let from1 = n[1][0] + n[1][1];
    let degenerate = pairs == 0.0 || ones == 0.0 || from1 == 0.0 || from0 == 0.0;
    let lr_ind = if pairs == 0.0 {
        0.0
    } else {
        let pi = ones / pairs;
        let pi01 = if from0 > 0.0 { n[0][1] / from0 } else { 0.0 };
        let pi11 = if from1 > 0.0 { n[1][1] / from1 } else { 0.0 };
        let restricted = bernoulli_ll(ones, pairs - ones, pi);
        let free = bernoulli_ll(n[0][1], n[0][0], pi01) + bernoulli_ll(n[1][1], n[1][0], pi11);
        (-2.0 * (restricted - free)).max(0.0)
    };
    let lr = lr_uc + lr_ind;
    let mut res = TestResult::new("VaR_CC-Christoffersen", lr, Some(chi2_sf(lr, 2.0)))
        .with("lr_uc", lr_uc)
        .with("lr_ind", lr_ind)
        .with("n00", n[0][0])
        .with("n01", n[0][1])
        .with("n10", n[1][0])
        .with("n11", n[1][1]);
    if degenerate {
        res = res.degenerate();
    }
    Ok(res)
}

/// Engle-Manganelli dynamic quantile test: demeaned hits regressed on a
/// constant, `lags` own lags and the contemporaneous VaR.
pub fn dq_test(hits: &HitSeries, var: &[f64], lags: usize) -> Result<TestResult> {
    if var.len() != hits.len() {
        return Err(Error::data("DQ test needs one VaR value per hit"));
    }
    if hits.len() < lags + 20 {
        return Err(Error::data(format!(
            "DQ test with {lags} lags needs at least {} observations, got {}",
            lags + 20,
            hits.len()
        )));
    }
    let a = hits.alpha;
    let h: Vec<f64> = hits.hits.iter().map(|v| *v as f64 - a).collect();
    let rows = h.len() - lags;
    let k = lags + 2;
    let x = DMatrix::from_fn(rows, k, |i, j| {
        let t = i + lags;
        match j {
            0 => 1.0,
            j if j <= lags => h[t - j],
            _ => var[t],
        }
    });
    let y = DVector::from_iterator(rows, h[lags..].iter().copied());
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let (beta, ridge) = match xtx.clone().cholesky() {
        Some(c) => (c.solve(&xty), false),
        None => {
            let lambda = 1e-8 * xtx.trace().max(1.0);
            let reg = &xtx + DMatrix::identity(k, k) * lambda;
            match reg.cholesky() {
                Some(c) => (c.solve(&xty), true),
                None => {
                    return Ok(TestResult::new("VaR_DQ", f64::NAN, None).degenerate());
                }
            }
        }
    };
    let fitted = &x * &beta;
    let stat = fitted.dot(&fitted) / (a * (1.0 - a));
    let mut res = TestResult::new("VaR_DQ", stat, Some(chi2_sf(stat, k as f64)))
        .with("lags", lags as f64)
        .with("ridge", if ridge { 1.0 } else { 0.0 });
    if ridge {
        res = res.degenerate();
    }
    Ok(res)
}

pub const MIN_ES_VIOLATIONS: usize = 10;

/// `(r_t - ES_t) / |ES_t|` on violation days, in date order.
pub fn exceedance_residuals(returns: &[f64], var: &[f64], es: &[f64]) -> Vec<f64> {
    (0..returns.len())
        .filter(|&t| returns[t] <= var[t])
        .map(|t| (returns[t] - es[t]) / es[t].abs())
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn t_stat(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return if m == 0.0 { 0.0 } else { m.signum() * f64::INFINITY };
    }
    m / (var / n).sqrt()
}

/// Wald statistic for `mean(e) = 0` and zero slope of `e_k` on `e_{k-1}`.
fn cc_wald(e: &[f64]) -> f64 {
    let t_mean = t_stat(e);
    let x = &e[..e.len() - 1];
    let y = &e[1..];
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let t_slope = if sxx > 0.0 && n > 2.0 {
        let b = x.iter().zip(y).map(|(a, c)| (a - mx) * (c - my)).sum::<f64>() / sxx;
        let a0 = my - b * mx;
        let rss: f64 = x.iter().zip(y).map(|(a, c)| (c - a0 - b * a).powi(2)).sum();
        let se = (rss / (n - 2.0) / sxx).sqrt();
        if se > 0.0 {
            b / se
        } else {
            0.0
        }
    } else {
        0.0
    };
    t_mean * t_mean + t_slope * t_slope
}

fn bootstrap_p<F>(e: &[f64], stat: f64, b: usize, seed: u64, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let m = mean(e);
    let centered: Vec<f64> = e.iter().map(|v| v - m).collect();
    let n = e.len();
    let exceed: usize = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let draw: Vec<f64> = (0..n).map(|_| centered[rng.gen_range(0..n)]).collect();
            usize::from(f(&draw) >= stat)
        })
        .sum();
    (exceed as f64 + 1.0) / (b as f64 + 1.0)
}

fn es_inputs(returns: &[f64], var: &[f64], es: &[f64]) -> Result<Vec<f64>> {
    if returns.len() != var.len() || var.len() != es.len() {
        return Err(Error::data("ES backtest needs aligned returns, VaR and ES"));
    }
    Ok(exceedance_residuals(returns, var, es))
}

/// Two-sided bootstrap test of zero mean exceedance residual, using the
/// studentized mean and resampling the centred residuals.
pub fn es_uc_test(returns: &[f64], var: &[f64], es: &[f64], b: usize, seed: u64) -> Result<TestResult> {
    let e = es_inputs(returns, var, es)?;
    if e.len() < MIN_ES_VIOLATIONS {
        return Ok(TestResult::new("ES_UC-bootstrap", f64::NAN, None)
            .with("violations", e.len() as f64)
            .degenerate());
    }
    let stat = t_stat(&e).abs();
    let p = bootstrap_p(&e, stat, b, seed, |d| t_stat(d).abs());
    Ok(TestResult::new("ES_UC-bootstrap", stat, Some(p))
        .with("violations", e.len() as f64)
        .with("mean_residual", mean(&e))
        .with("replications", b as f64))
}

/// Joint bootstrap test of zero mean and no first-order dependence in the
/// exceedance residuals of consecutive violation days.
pub fn es_cc_test(returns: &[f64], var: &[f64], es: &[f64], b: usize, seed: u64) -> Result<TestResult> {
    let e = es_inputs(returns, var, es)?;
    if e.len() < MIN_ES_VIOLATIONS {
        return Ok(TestResult::new("ES_CC-bootstrap", f64::NAN, None)
            .with("violations", e.len() as f64)
            .degenerate());
    }
    let stat = cc_wald(&e);
    let p = bootstrap_p(&e, stat, b, seed, cc_wald);
    Ok(TestResult::new("ES_CC-bootstrap", stat, Some(p))
        .with("violations", e.len() as f64)
        .with("replications", b as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub dq_lags: usize,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            dq_lags: 4,
            bootstrap: 2000,
            seed: 0,
        }
    }
}

/// One row of the backtest report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRow {
    pub model_id: String,
    pub alpha: f64,
    pub n: usize,
    pub viol_rate: f64,
    #[serde(rename = "VaR_AE")]
    pub var_ae: f64,
    #[serde(rename = "VaR_UC")]
    pub var_uc: TestResult,
    #[serde(rename = "VaR_CC")]
    pub var_cc: TestResult,
    #[serde(rename = "VaR_DQ")]
    pub var_dq: TestResult,
    #[serde(rename = "ES_UC")]
    pub es_uc: TestResult,
    #[serde(rename = "ES_CC")]
    pub es_cc: TestResult,
}

/// Runs every backtest on one forecast series. `returns` must cover the
/// forecast dates; they are matched by date.
pub fn backtest_series(
    forecast: &ForecastSeries,
    return_dates: &[NaiveDate],
    returns: &[f64],
    cfg: &BacktestConfig,
) -> Result<BacktestRow> {
    let r = returns_on(&forecast.dates, return_dates, returns)?;
    let h = hits(&forecast.dates, &r, &forecast.var, forecast.alpha)?;
    Ok(BacktestRow {
        model_id: forecast.model_id.clone(),
        alpha: forecast.alpha,
        n: h.len(),
        viol_rate: h.violation_rate(),
        var_ae: h.var_ae(),
        var_uc: kupiec_uc(&h)?,
        var_cc: christoffersen_cc(&h)?,
        var_dq: dq_test(&h, &forecast.var, cfg.dq_lags)?,
        es_uc: es_uc_test(&r, &forecast.var, &forecast.es, cfg.bootstrap, cfg.seed)?,
        es_cc: es_cc_test(&r, &forecast.var, &forecast.es, cfg.bootstrap, cfg.seed)?,
    })
}

/// Returns on `want` dates, erroring with the first few missing dates.
pub fn returns_on(want: &[NaiveDate], dates: &[NaiveDate], returns: &[f64]) -> Result<Vec<f64>> {
    let index: BTreeMap<NaiveDate, f64> = dates.iter().copied().zip(returns.iter().copied()).collect();
    let mut missing = Vec::new();
    let out: Vec<f64> = want
        .iter()
        .map(|d| {
            index.get(d).copied().unwrap_or_else(|| {
                missing.push(*d);
                f64::NAN
            })
        })
        .collect();
    if !missing.is_empty() {
        let shown: Vec<String> = missing.iter().take(5).map(|d| d.to_string()).collect();
        return Err(Error::data(format!(
            "no realized return for {} forecast date(s): {}{}",
            missing.len(),
            shown.join(", "),
            if missing.len() > 5 { ", ..." } else { "" }
        )));
    }
    Ok(out)
}

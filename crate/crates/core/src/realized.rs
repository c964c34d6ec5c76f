//! Daily realized measures computed from intraday log-returns.
//!
//! Every measure except RKurt is in daily variance units. The semivariance
//! and REX splits assign each squared return to exactly one bucket, so both
//! decompositions add back up to RV.

use std::f64::consts::FRAC_PI_2;
use std::io::Read;

use chrono::NaiveDate;
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::IntradayDay;

/// Panel columns in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Measure {
    Cv,
    Rv,
    Rk,
    RsPos,
    RsNeg,
    RexNeg,
    RexMid,
    RexPos,
    RKurt,
}

impl Measure {
    pub const ALL: [Measure; 9] = [
        Measure::Cv,
        Measure::Rv,
        Measure::Rk,
        Measure::RsPos,
        Measure::RsNeg,
        Measure::RexNeg,
        Measure::RexMid,
        Measure::RexPos,
        Measure::RKurt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Cv => "CV",
            Measure::Rv => "RV",
            Measure::Rk => "RK",
            Measure::RsPos => "RS_pos",
            Measure::RsNeg => "RS_neg",
            Measure::RexNeg => "REX_neg",
            Measure::RexMid => "REX_mid",
            Measure::RexPos => "REX_pos",
            Measure::RKurt => "RKurt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(name.trim()))
    }

    /// RKurt is dimensionless and defaults to an untransformed column.
    pub fn is_variance_unit(self) -> bool {
        self != Measure::RKurt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureRow {
    pub date: NaiveDate,
    pub cv: f64,
    pub rv: f64,
    pub rk: f64,
    pub rs_pos: f64,
    pub rs_neg: f64,
    pub rex_neg: f64,
    pub rex_mid: f64,
    pub rex_pos: f64,
    pub rkurt: f64,
}

impl MeasureRow {
    pub fn get(&self, m: Measure) -> f64 {
        match m {
            Measure::Cv => self.cv,
            Measure::Rv => self.rv,
            Measure::Rk => self.rk,
            Measure::RsPos => self.rs_pos,
            Measure::RsNeg => self.rs_neg,
            Measure::RexNeg => self.rex_neg,
            Measure::RexMid => self.rex_mid,
            Measure::RexPos => self.rex_pos,
            Measure::RKurt => self.rkurt,
        }
    }

    pub fn values(&self) -> [f64; 9] {
        Measure::ALL.map(|m| self.get(m))
    }

    fn from_values(date: NaiveDate, v: [f64; 9]) -> Self {
        Self {
            date,
            cv: v[0],
            rv: v[1],
            rk: v[2],
            rs_pos: v[3],
            rs_neg: v[4],
            rex_neg: v[5],
            rex_mid: v[6],
            rex_pos: v[7],
            rkurt: v[8],
        }
    }

    fn validate(&self) -> Result<()> {
        let date = self.date;
        if let Some(m) = Measure::ALL
            .into_iter()
            .find(|&m| !self.get(m).is_finite() || self.get(m) < 0.0)
        {
            return Err(Error::data(format!(
                "{date}: {} = {} is not a finite non-negative value",
                m.name(),
                self.get(m)
            )));
        }
        let tol = 1e-12 * self.rv.max(f64::MIN_POSITIVE);
        if (self.rs_pos + self.rs_neg - self.rv).abs() > tol {
            return Err(Error::data(format!("{date}: RS+ + RS- differs from RV")));
        }
        if (self.rex_neg + self.rex_mid + self.rex_pos - self.rv).abs() > tol {
            return Err(Error::data(format!("{date}: REX parts do not sum to RV")));
        }
        Ok(())
    }
}

/// Date-ordered table of the nine realized measures.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurePanel {
    pub rows: Vec<MeasureRow>,
}

impl MeasurePanel {
    pub fn new(rows: Vec<MeasureRow>) -> Result<Self> {
        if let Some(w) = rows.windows(2).find(|w| w[0].date >= w[1].date) {
            return Err(Error::data(format!("panel dates not increasing at {}", w[1].date)));
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.rows.iter().map(|r| r.date).collect()
    }

    pub fn column(&self, m: Measure) -> Vec<f64> {
        self.rows.iter().map(|r| r.get(m)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date");
        for m in Measure::ALL {
            out.push(',');
            out.push_str(m.name());
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.date.to_string());
            for v in row.values() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the panel CSV written by [`MeasurePanel::to_csv`].
    pub fn parse_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::parse(1, e.to_string()))?
            .clone();
        let expected: Vec<&str> = std::iter::once("date")
            .chain(Measure::ALL.iter().map(|m| m.name()))
            .collect();
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(Error::parse(
                1,
                format!("expected header `{}`", expected.join(",")),
            ));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                .map_err(|_| Error::parse(line, format!("bad date `{}`", &rec[0])))?;
            let mut values = [0.0; 9];
            for (k, v) in values.iter_mut().enumerate() {
                *v = rec[k + 1]
                    .parse::<f64>()
                    .map_err(|_| Error::parse(line, format!("bad value `{}`", &rec[k + 1])))?;
            }
            let row = MeasureRow::from_values(date, values);
            row.validate()
                .map_err(|e| Error::parse(line, e.to_string()))?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::data("panel has no rows"));
        }
        Self::new(rows)
    }
}

fn require_returns(day: &IntradayDay, min: usize) -> Result<&[f64]> {
    if day.returns.len() < min {
        return Err(Error::data(format!(
            "{}: {} intraday return(s), need at least {min}",
            day.date,
            day.returns.len()
        )));
    }
    Ok(&day.returns)
}

pub fn realized_variance(day: &IntradayDay) -> Result<f64> {
    let r = require_returns(day, 1)?;
    Ok(r.iter().map(|x| x * x).sum())
}

/// Bipower variation with the n/(n-1) small-sample factor.
pub fn bipower_variation(day: &IntradayDay) -> Result<f64> {
    let r = require_returns(day, 2)?;
    let n = r.len() as f64;
    let sum: f64 = r.windows(2).map(|w| w[0].abs() * w[1].abs()).sum();
    // mu_1^-2 = pi / 2
    Ok(FRAC_PI_2 * n / (n - 1.0) * sum)
}

/// Kernel bandwidth: fixed lag count or ceil(n^0.6) capped at n-1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Bandwidth {
    #[default]
    Auto,
    Fixed(usize),
}

pub fn parzen(x: f64) -> f64 {
    let x = x.abs();
    if x <= 0.5 {
        1.0 - 6.0 * x * x + 6.0 * x * x * x
    } else if x <= 1.0 {
        2.0 * (1.0 - x).powi(3)
    } else {
        0.0
    }
}

/// Flat-top Parzen realized kernel
/// `gamma_0 + sum_{h=1..H} k((h-1)/H) * 2 * gamma_h`.
///
/// The flat-top weights can produce a negative value on strongly
/// mean-reverting days; the result is floored at zero.
pub fn realized_kernel(day: &IntradayDay, bandwidth: Bandwidth) -> Result<f64> {
    let r = require_returns(day, 2)?;
    let n = r.len();
    let h_max = match bandwidth {
        Bandwidth::Fixed(h) => {
            if h >= n {
                return Err(Error::data(format!(
                    "{}: bandwidth {h} must be below n = {n}",
                    day.date
                )));
            }
            h
        }
        Bandwidth::Auto => ((n as f64).powf(0.6).ceil() as usize).min(n - 1),
    };
    let autocov = |h: usize| -> f64 { r[h..].iter().zip(r).map(|(a, b)| a * b).sum() };
    let mut rk = autocov(0);
    for h in 1..=h_max {
        let w = parzen((h - 1) as f64 / h_max as f64);
        rk += 2.0 * w * autocov(h);
    }
    if rk < 0.0 {
        warn!("{}: realized kernel {rk} floored at 0", day.date);
        rk = 0.0;
    }
    Ok(rk)
}

/// Returns (RS+, RS-). Exact zeros contribute to neither side.
pub fn semivariances(day: &IntradayDay) -> Result<(f64, f64)> {
    let r = require_returns(day, 1)?;
    let mut pos = 0.0;
    let mut neg = 0.0;
    for &x in r {
        if x > 0.0 {
            pos += x * x;
        } else if x < 0.0 {
            neg += x * x;
        }
    }
    Ok((pos, neg))
}

/// Settings for the quantile split of squared returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RexConfig {
    pub tail_frac: f64,
    /// Days shorter than this put all mass in the middle bucket.
    pub min_n: usize,
}

impl Default for RexConfig {
    fn default() -> Self {
        Self {
            tail_frac: 0.05,
            min_n: 20,
        }
    }
}

/// Linear-interpolation empirical quantile of sorted data.
pub(crate) fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sample_std(r: &[f64]) -> f64 {
    let n = r.len() as f64;
    if r.len() < 2 {
        return 0.0;
    }
    let mean = r.iter().sum::<f64>() / n;
    (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Returns (REX-, REXm, REX+): squared returns whose standardized value
/// lies at or beyond the day's empirical `tail_frac` / `1 - tail_frac`
/// quantiles go to the tail buckets, the rest to the middle.
pub fn rex_decomposition(day: &IntradayDay, cfg: RexConfig) -> Result<(f64, f64, f64)> {
    let r = require_returns(day, 1)?;
    if !(cfg.tail_frac > 0.0 && cfg.tail_frac < 0.5) {
        return Err(Error::Config(format!(
            "REX tail fraction {} outside (0, 0.5)",
            cfg.tail_frac
        )));
    }
    let sd = sample_std(r);
    let flat = r.iter().all(|x| *x == r[0]);
    if r.len() < cfg.min_n || flat || !(sd > 0.0) {
        return Ok((0.0, r.iter().map(|x| x * x).sum(), 0.0));
    }
    let mut z: Vec<f64> = r.iter().map(|x| x / sd).collect();
    z.sort_by(f64::total_cmp);
    let lo = sorted_quantile(&z, cfg.tail_frac);
    let hi = sorted_quantile(&z, 1.0 - cfg.tail_frac);
    let (mut neg, mut mid, mut pos) = (0.0, 0.0, 0.0);
    for &x in r {
        let zx = x / sd;
        if zx <= lo {
            neg += x * x;
        } else if zx >= hi {
            pos += x * x;
        } else {
            mid += x * x;
        }
    }
    Ok((neg, mid, pos))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KurtosisFormula {
    /// n * sum r^4 / (sum r^2)^2
    #[default]
    Standardized,
    /// sum r^4
    RawFourthMoment,
}

pub fn realized_kurtosis(day: &IntradayDay, formula: KurtosisFormula) -> Result<f64> {
    let r = require_returns(day, 2)?;
    let quartic: f64 = r.iter().map(|x| x.powi(4)).sum();
    match formula {
        KurtosisFormula::RawFourthMoment => Ok(quartic),
        KurtosisFormula::Standardized => {
            let rv: f64 = r.iter().map(|x| x * x).sum();
            if !(rv > 0.0) {
                return Err(Error::data(format!(
                    "{}: realized kurtosis undefined for zero variance",
                    day.date
                )));
            }
            Ok(r.len() as f64 * quartic / (rv * rv))
        }
    }
}

/// Continuous proxy CV = RBV and truncated jump J = max(RV - RBV, 0).
pub fn continuous_and_jump(rv: f64, rbv: f64) -> (f64, f64) {
    (rbv, (rv - rbv).max(0.0))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureConfig {
    pub bandwidth: Bandwidth,
    pub rex: RexConfig,
    pub kurtosis: KurtosisFormula,
}

pub fn measure_row(day: &IntradayDay, cfg: &MeasureConfig) -> Result<MeasureRow> {
    let rv = realized_variance(day)?;
    let rbv = bipower_variation(day)?;
    let (cv, _jump) = continuous_and_jump(rv, rbv);
    let rk = realized_kernel(day, cfg.bandwidth)?;
    let (rs_pos, rs_neg) = semivariances(day)?;
    let (rex_neg, rex_mid, rex_pos) = rex_decomposition(day, cfg.rex)?;
    let rkurt = realized_kurtosis(day, cfg.kurtosis)?;
    let row = MeasureRow {
        date: day.date,
        cv,
        rv,
        rk,
        rs_pos,
        rs_neg,
        rex_neg,
        rex_mid,
        rex_pos,
        rkurt,
    };
    row.validate()?;
    Ok(row)
}

/// Panel plus the days that could not be measured.
#[derive(Debug, Clone)]
pub struct PanelBuild {
    pub panel: MeasurePanel,
    pub skipped: Vec<(NaiveDate, String)>,
}

pub fn build_panel(days: &[IntradayDay], cfg: &MeasureConfig) -> Result<PanelBuild> {
    if days.is_empty() {
        return Err(Error::data("no intraday days to measure"));
    }
    let results: Vec<Result<MeasureRow>> = days.par_iter().map(|d| measure_row(d, cfg)).collect();
    let mut rows = Vec::with_capacity(days.len());
    let mut skipped = Vec::new();
    for (day, res) in days.iter().zip(results) {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => {
                warn!("skipping {}: {e}", day.date);
                skipped.push((day.date, e.to_string()));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::data(format!("all {} day(s) failed measurement", days.len())));
    }
    rows.sort_by_key(|r| r.date);
    Ok(PanelBuild {
        panel: MeasurePanel::new(rows)?,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    
    fn day(r: &[f64]) -> IntradayDay {
        IntradayDay::new(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(), r.to_vec()).unwrap()
    }

    fn normal_day(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> IntradayDay {
        day(&(0..n)
            .map(|_| scale * crate::simulate::gauss(rng))
            .collect::<Vec<f64>>())
    }

    const HAND: [f64; 3] = [0.01, -0.02, 0.015];

    #[test]
    fn rv_examples() {
        assert!((realized_variance(&day(&HAND)).unwrap() - 0.000725).abs() < 1e-18);
        assert_eq!(realized_variance(&day(&[0.0, 0.0])).unwrap(), 0.0);
        assert!((realized_variance(&day(&[0.02])).unwrap() - 0.0004).abs() < 1e-18);
        assert!(realized_variance(&day(&[])).is_err());
    }

    #[test]
    fn bipower_examples() {
        let v = bipower_variation(&day(&HAND)).unwrap();
        assert!((v - FRAC_PI_2 * 1.5 * 0.0005).abs() < 1e-15);
        assert!((v - 0.0011781).abs() < 1e-7);
        let c = 0.013;
        assert!((bipower_variation(&day(&[c, c])).unwrap() - FRAC_PI_2 * 2.0 * c * c).abs() < 1e-16);
        // zero annihilates both adjacent products
        let v = bipower_variation(&day(&[0.01, 0.0, 0.02])).unwrap();
        assert_eq!(v, 0.0);
        assert!(bipower_variation(&day(&[0.01])).is_err());
    }

    #[test]
    fn kernel_zero_bandwidth_is_rv() {
        let d = day(&HAND);
        assert_eq!(
            realized_kernel(&d, Bandwidth::Fixed(0)).unwrap(),
            realized_variance(&d).unwrap()
        );
        assert!(realized_kernel(&d, Bandwidth::Fixed(3)).is_err());
    }

    #[test]
    fn kernel_close_to_rv_without_autocorrelation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut rk, mut rv) = (0.0, 0.0);
        for _ in 0..500 {
            let d = normal_day(&mut rng, 1000, 0.001);
            rk += realized_kernel(&d, Bandwidth::Auto).unwrap();
            rv += realized_variance(&d).unwrap();
        }
        assert!((rk / rv - 1.0).abs() < 0.10, "ratio {}", rk / rv);
    }

    #[test]
    fn kernel_beats_rv_under_ma1_noise() {
        // efficient returns plus differenced i.i.d. noise -> MA(1) contamination
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1000;
        let sigma = 0.01 / (n as f64).sqrt();
        let iv = 0.0001;
        let noise = 0.0005;
        let (mut se_rk, mut se_rv) = (0.0, 0.0);
        for _ in 0..500 {
            let mut prev: f64 = noise * crate::simulate::gauss(&mut rng);
            let r: Vec<f64> = (0..n)
                .map(|_| {
                    let e: f64 = noise * crate::simulate::gauss(&mut rng);
                    let x = sigma * crate::simulate::gauss(&mut rng) + e - prev;
                    prev = e;
                    x
                })
                .collect();
            let d = day(&r);
            se_rk += (realized_kernel(&d, Bandwidth::Auto).unwrap() - iv).powi(2);
            se_rv += (realized_variance(&d).unwrap() - iv).powi(2);
        }
        assert!(se_rk < se_rv, "rmse rk {} vs rv {}", se_rk.sqrt(), se_rv.sqrt());
    }

    #[test]
    fn semivariance_examples() {
        let (p, n) = semivariances(&day(&HAND)).unwrap();
        assert!((p - 0.000325).abs() < 1e-18);
        assert!((n - 0.0004).abs() < 1e-18);
        assert_eq!(semivariances(&day(&[0.1, 0.2])).unwrap().1, 0.0);
        let c = 0.03;
        let (p, n) = semivariances(&day(&[c, -c])).unwrap();
        assert_eq!(p, c * c);
        assert_eq!(n, c * c);
    }

    #[test]
    fn rex_examples() {
        let equal = day(&[0.01; 40]);
        let (a, b, c) = rex_decomposition(&equal, RexConfig::default()).unwrap();
        assert_eq!((a, c), (0.0, 0.0));
        assert!((b - realized_variance(&equal).unwrap()).abs() < 1e-18);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = normal_day(&mut rng, 100, 1.0);
        let (a, b, c) = rex_decomposition(&d, RexConfig::default()).unwrap();
        let rv = realized_variance(&d).unwrap();
        assert!((a + b + c - rv).abs() <= 1e-12 * rv);
        assert!(a > 0.0 && c > 0.0);

        let mut r: Vec<f64> = (0..99).map(|i| 0.001 * ((i as f64) * 1.3).sin()).collect();
        r.push(-0.1);
        let (neg, _, _) = rex_decomposition(&day(&r), RexConfig::default()).unwrap();
        assert!(neg >= 0.01);
    }

    #[test]
    fn rex_short_day_goes_to_middle() {
        let (a, b, c) = rex_decomposition(&day(&HAND), RexConfig::default()).unwrap();
        assert_eq!((a, c), (0.0, 0.0));
        assert!((b - 0.000725).abs() < 1e-18);
    }

    #[test]
    fn kurtosis_examples() {
        let k = realized_kurtosis(&day(&HAND), KurtosisFormula::Standardized).unwrap();
        assert!((k - 3.0 * 2.20625e-7 / 5.25625e-7).abs() < 1e-12);
        assert!((k - 1.2592).abs() < 1e-4);
        let k = realized_kurtosis(&day(&[0.01, -0.01, 0.01, -0.01]), KurtosisFormula::Standardized)
            .unwrap();
        assert!((k - 1.0).abs() < 1e-12);
        assert!(realized_kurtosis(&day(&[0.0, 0.0]), KurtosisFormula::Standardized).is_err());
        let raw = realized_kurtosis(&day(&HAND), KurtosisFormula::RawFourthMoment).unwrap();
        assert!((raw - 2.20625e-7).abs() < 1e-20);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mean: f64 = (0..200)
            .map(|_| {
                realized_kurtosis(&normal_day(&mut rng, 1000, 1.0), KurtosisFormula::Standardized)
                    .unwrap()
            })
            .sum::<f64>()
            / 200.0;
        // sd of a single day's estimate is about sqrt(96/1000) ~ 0.31
        assert!((mean - 3.0).abs() < 0.1, "mean RKurt {mean}");
    }

    #[test]
    fn continuous_and_jump_examples() {
        let rbv = FRAC_PI_2 * 1.5 * 0.0005;
        assert_eq!(continuous_and_jump(0.000725, rbv), (rbv, 0.0));
        let (cv, j) = continuous_and_jump(0.002, 0.0005);
        assert_eq!(cv, 0.0005);
        assert!((j - 0.0015).abs() < 1e-18);
        assert_eq!(continuous_and_jump(0.3, 0.3).1, 0.0);
    }

    #[test]
    fn build_panel_skips_short_days() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut days: Vec<IntradayDay> = (0..10)
            .map(|i| {
                let mut d = normal_day(&mut rng, 50, 0.001);
                d.date = NaiveDate::from_ymd_opt(2024, 1, 1 + i).unwrap();
                d
            })
            .collect();
        let built = build_panel(&days, &MeasureConfig::default()).unwrap();
        assert_eq!(built.panel.len(), 10);
        for row in &built.panel.rows {
            assert!((row.rs_pos + row.rs_neg - row.rv).abs() <= 1e-12 * row.rv);
            assert!((row.rex_neg + row.rex_mid + row.rex_pos - row.rv).abs() <= 1e-12 * row.rv);
        }
        days[4].returns.truncate(1);
        let built = build_panel(&days, &MeasureConfig::default()).unwrap();
        assert_eq!(built.panel.len(), 9);
        assert_eq!(built.skipped.len(), 1);
    }

    #[test]
    fn panel_csv_has_fixed_column_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let days = vec![normal_day(&mut rng, 30, 0.001)];
        let panel = build_panel(&days, &MeasureConfig::default()).unwrap().panel;
        let csv = panel.to_csv();
        assert!(csv.starts_with("date,CV,RV,RK,RS_pos,RS_neg,REX_neg,REX_mid,REX_pos,RKurt\n"));
        let back = MeasurePanel::parse_csv(csv.as_bytes()).unwrap();
        assert_eq!(back, panel);
    }

    #[test]
    fn brownian_bipower_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (mut rbv, mut rv) = (0.0, 0.0);
        for _ in 0..2000 {
            let d = normal_day(&mut rng, 78, 0.002);
            rbv += bipower_variation(&d).unwrap();
            rv += realized_variance(&d).unwrap();
        }
        assert!((rbv / rv - 1.0).abs() < 0.02, "ratio {}", rbv / rv);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn returns() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-0.05f64..0.05, 2..120)
        }

        proptest! {
            #[test]
            fn decompositions_sum_to_rv(r in returns()) {
                let d = day(&r);
                let rv = realized_variance(&d).unwrap();
                let (p, n) = semivariances(&d).unwrap();
                let (a, b, c) = rex_decomposition(&d, RexConfig::default()).unwrap();
                prop_assert!((p + n - rv).abs() <= 1e-12 * rv.max(1e-300));
                prop_assert!((a + b + c - rv).abs() <= 1e-12 * rv.max(1e-300));
            }

            #[test]
            fn scaling_homogeneity(r in returns(), lambda in 0.1f64..10.0) {
                let d = day(&r);
                let s = day(&r.iter().map(|x| lambda * x).collect::<Vec<_>>());
                let l2 = lambda * lambda;
                let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300);
                prop_assert!(close(realized_variance(&s).unwrap(), l2 * realized_variance(&d).unwrap()));
                prop_assert!(close(bipower_variation(&s).unwrap(), l2 * bipower_variation(&d).unwrap()));
                prop_assert!(close(
                    realized_kernel(&s, Bandwidth::Auto).unwrap(),
                    l2 * realized_kernel(&d, Bandwidth::Auto).unwrap()
                ));
                let (p0, n0) = semivariances(&d).unwrap();
                let (p1, n1) = semivariances(&s).unwrap();
                prop_assert!(close(p1, l2 * p0) && close(n1, l2 * n0));
                let x0 = rex_decomposition(&d, RexConfig::default()).unwrap();
                let x1 = rex_decomposition(&s, RexConfig::default()).unwrap();
                prop_assert!(close(x1.0, l2 * x0.0) && close(x1.1, l2 * x0.1) && close(x1.2, l2 * x0.2));
                if realized_variance(&d).unwrap() > 0.0 {
                    prop_assert!(close(
                        realized_kurtosis(&s, KurtosisFormula::Standardized).unwrap(),
                        realized_kurtosis(&d, KurtosisFormula::Standardized).unwrap()
                    ));
                }
            }

            #[test]
            fn prepending_zero_keeps_rv_and_semivariances(r in returns()) {
                let d = day(&r);
                let mut z = vec![0.0];
                z.extend_from_slice(&r);
                let dz = day(&z);
                prop_assert_eq!(realized_variance(&dz).unwrap(), realized_variance(&d).unwrap());
                prop_assert_eq!(semivariances(&dz).unwrap(), semivariances(&d).unwrap());
                let (a, b, c) = rex_decomposition(&dz, RexConfig::default()).unwrap();
                let rv = realized_variance(&d).unwrap();
                prop_assert!((a + b + c - rv).abs() <= 1e-12 * rv.max(1e-300));
            }
        }
    }
}

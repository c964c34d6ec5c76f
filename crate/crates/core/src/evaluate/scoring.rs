//! Joint (VaR, ES) loss functions and the per-day loss matrix.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ForecastSeries;

fn indicator(r: f64, q: f64) -> f64 {
    if r <= q {
        1.0
    } else {
        0.0
    }
}

/// `(I - alpha)(q - r) / alpha + (e - q) / alpha + log(-e)`, `I = 1{r <= q}`.
pub fn fz0_loss(q: f64, e: f64, r: f64, alpha: f64) -> Result<f64> {
    if !(e < 0.0) {
        return Err(Error::Data(format!("FZ0 loss needs ES < 0, got {e}")));
    }
    let i = indicator(r, q);
    Ok((i - alpha) * (q - r) / alpha + (e - q) / alpha + (-e).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum G1 {
    #[default]
    Identity,
    Zero,
}

impl G1 {
    fn eval(self, x: f64) -> f64 {
        match self {
            G1::Identity => x,
            G1::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum G2 {
    /// `log(-x)`
    #[default]
    LogNeg,
}

impl G2 {
    fn eval(self, x: f64) -> Result<f64> {
        match self {
            G2::LogNeg => {
                if !(x < 0.0) {
                    return Err(Error::Data(format!("log(-x) needs x < 0, got {x}")));
                }
                Ok((-x).ln())
            }
        }
    }
}

/// `(I - alpha) G1(q) + (1/alpha) I [G2(e) - G2(r)] + G2(e)`; `G2(r)` is
/// evaluated on violation days only.
pub fn fzg_loss(q: f64, e: f64, r: f64, alpha: f64, g1: G1, g2: G2) -> Result<f64> {
    let i = indicator(r, q);
    let g2e = g2.eval(e)?;
    let jump = if i == 1.0 { (g2e - g2.eval(r)?) / alpha } else { 0.0 };
    Ok((i - alpha) * g1.eval(q) + jump + g2e)
}

/// `(1/alpha)(e - r) I + (q - r)(alpha - I)`.
pub fn al_loss(q: f64, e: f64, r: f64, alpha: f64) -> f64 {
    let i = indicator(r, q);
    (e - r) * i / alpha + (q - r) * (alpha - i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LossTag {
    #[serde(rename = "FZ0")]
    Fz0,
    #[serde(rename = "FZG")]
    Fzg,
    #[serde(rename = "AL")]
    Al,
}

impl LossTag {
    pub const ALL: [LossTag; 3] = [LossTag::Fz0, LossTag::Fzg, LossTag::Al];

    pub fn loss(self, q: f64, e: f64, r: f64, alpha: f64) -> Result<f64> {
        match self {
            LossTag::Fz0 => fz0_loss(q, e, r, alpha),
            LossTag::Fzg => fzg_loss(q, e, r, alpha, G1::Identity, G2::LogNeg),
            LossTag::Al => Ok(al_loss(q, e, r, alpha)),
        }
    }
}

impl fmt::Display for LossTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossTag::Fz0 => "FZ0",
            LossTag::Fzg => "FZG",
            LossTag::Al => "AL",
        })
    }
}

impl FromStr for LossTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FZ0" => Ok(LossTag::Fz0),
            "FZG" => Ok(LossTag::Fzg),
            "AL" => Ok(LossTag::Al),
            _ => Err(Error::Config(format!("unknown loss {s:?}, expected FZ0, FZG or AL"))),
        }
    }
}

/// Per-day losses, one column per model.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    pub tag: LossTag,
    pub alpha: f64,
    pub dates: Vec<NaiveDate>,
    pub models: Vec<String>,
    /// `losses[t][i]` for date `t` and model `i`.
    pub losses: Vec<Vec<f64>>,
}

impl LossMatrix {
    pub fn column_means(&self) -> Vec<f64> {
        let t = self.losses.len() as f64;
        (0..self.models.len())
            .map(|i| self.losses.iter().map(|row| row[i]).sum::<f64>() / t)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date");
        for m in &self.models {
            out.push(',');
            out.push_str(m);
        }
        out.push('\n');
        for (d, row) in self.dates.iter().zip(&self.losses) {
            out.push_str(&d.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Losses of every forecast series on the union of their dates. All series
/// must share one alpha and cover every date.
pub fn score_models(
    forecasts: &[ForecastSeries],
    return_dates: &[NaiveDate],
    returns: &[f64],
    tag: LossTag,
) -> Result<LossMatrix> {
    let Some(first) = forecasts.first() else {
        return Err(Error::Config("scoring needs at least one forecast series".into()));
    };
    let alpha = first.alpha;
    if let Some(f) = forecasts.iter().find(|f| f.alpha != alpha) {
        return Err(Error::data(format!(
            "cannot score series at different levels together ({} at {} vs {alpha})",
            f.model_id, f.alpha
        )));
    }
    let dates: Vec<NaiveDate> = forecasts
        .iter()
        .flat_map(|f| f.dates.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    for f in forecasts {
        if f.dates != dates {
            let have: BTreeSet<NaiveDate> = f.dates.iter().copied().collect();
            let missing: Vec<String> = dates
                .iter()
                .filter(|d| !have.contains(d))
                .take(5)
                .map(|d| d.to_string())
                .collect();
            return Err(Error::data(format!(
                "{} is missing forecast dates: {}",
                f.model_id,
                missing.join(", ")
            )));
        }
    }
    let r = super::backtest::returns_on(&dates, return_dates, returns)?;
    let mut losses = Vec::with_capacity(dates.len());
    for t in 0..dates.len() {
        let row = forecasts
            .iter()
            .map(|f| tag.loss(f.var[t], f.es[t], r[t], alpha))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "{} loss of {} is not finite on {}",
                tag, forecasts[i].model_id, dates[t]
            )));
        }
        losses.push(row);
    }
    Ok(LossMatrix {
        tag,
        alpha,
        dates,
        models: forecasts.iter().map(|f| f.model_id.clone()).collect(),
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fz0_hand_values() {
        assert!((fz0_loss(-2.0, -2.5, -3.0, 0.05).unwrap() - 9.91629).abs() < 1e-5);
        assert!((fz0_loss(-2.0, -2.5, 0.0, 0.05).unwrap() - -7.08371).abs() < 1e-5);
        // collapsed case
        let q = -1.7;
        assert!((fz0_loss(q, q, q, 0.05).unwrap() - (-q).ln()).abs() < 1e-12);
        assert!(fz0_loss(-2.0, 0.0, -3.0, 0.05).is_err());
    }

    #[test]
    fn fzg_hand_values() {
        let v = fzg_loss(-2.0, -2.5, -3.0, 0.05, G1::Identity, G2::LogNeg).unwrap();
        let exact = 0.95 * -2.0 + 20.0 * (2.5f64 / 3.0).ln() + 2.5f64.ln();
        assert!((v - exact).abs() < 1e-12, "{v}");
        assert!((v - -4.630140).abs() < 1e-6);
        let v = fzg_loss(-2.0, -2.5, 0.0, 0.05, G1::Identity, G2::LogNeg).unwrap();
        assert!((v - 1.01629).abs() < 1e-5, "{v}");
        let v = fzg_loss(-2.0, -2.5, 0.5, 0.05, G1::Zero, G2::LogNeg).unwrap();
        assert!((v - 2.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn al_hand_values() {
        assert!((al_loss(-2.0, -2.5, -3.0, 0.05) - 9.05).abs() < 1e-12);
        assert!((al_loss(-2.0, -2.5, 0.0, 0.05) - -0.1).abs() < 1e-12);
        assert_eq!(al_loss(-2.0, -2.0, -2.0, 0.05), 0.0);
    }

    #[test]
    fn loss_tags_parse() {
        for t in LossTag::ALL {
            assert_eq!(t.to_string().parse::<LossTag>().unwrap(), t);
        }
        assert!("QL".parse::<LossTag>().is_err());
    }
}

//! Benchmark VaR/ES forecasters built on a GARCH volatility filter:
//! parametric tails, filtered historical simulation and peaks over
//! threshold.
//!
//! Every baseline treats the mean as the constant sample mean `mu` and
//! forecasts `VaR_t = mu + sigma_t q`, `ES_t = mu + sigma_t e` for tail
//! multipliers `e < q < 0` of the standardized residuals.

mod garch;
mod rolling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

pub use garch::{fit_garch, garch_sigma, GarchFamily, GarchFit, GarchParams, GarchSpec, InnovationDist};
pub use rolling::{rolling_baselines, BaselineConfig, BaselineRun, SkippedSeries};

use crate::error::{Error, Result};
use crate::optim::NelderMead;
use crate::realized::sorted_quantile;

/// Tail multipliers of a unit-variance innovation: VaR `q` and ES `e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailMultipliers {
    pub var: f64,
    pub es: f64,
}

impl TailMultipliers {
    pub fn apply(&self, mu: f64, sigma: f64) -> (f64, f64) {
        (mu + sigma * self.var, mu + sigma * self.es)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 0.5)")));
    }
    Ok(())
}

/// Normal: `q = Phi^-1(alpha)`, `e = -phi(q) / alpha`. Standardized t:
/// the t quantile and tail mean rescaled by `sqrt((nu - 2) / nu)`.
pub fn parametric_multipliers(dist: InnovationDist, nu: Option<f64>, alpha: f64) -> Result<TailMultipliers> {
    check_alpha(alpha)?;
    match dist {
        InnovationDist::Normal => {
            let n = Normal::new(0.0, 1.0).unwrap();
            let q = n.inverse_cdf(alpha);
            Ok(TailMultipliers {
                var: q,
                es: -n.pdf(q) / alpha,
            })
        }
        InnovationDist::StudentT => {
            let v = nu.ok_or_else(|| Error::Config("Student-t multipliers need degrees of freedom".into()))?;
            if !(v > 2.0) {
                return Err(Error::Config(format!("Student-t needs nu > 2, got {v}")));
            }
            let t = StudentsT::new(0.0, 1.0, v).map_err(|e| Error::Config(e.to_string()))?;
            let q = t.inverse_cdf(alpha);
            let scale = ((v - 2.0) / v).sqrt();
            let es = -t.pdf(q) / alpha * (v + q * q) / (v - 1.0);
            Ok(TailMultipliers {
                var: q * scale,
                es: es * scale,
            })
        }
    }
}

/// (VaR, ES) paths over the fit's own dates.
pub fn parametric_var_es(fit: &GarchFit, alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = parametric_multipliers(fit.spec.dist, fit.params.nu, alpha)?;
    Ok(fit.sigma.iter().map(|s| m.apply(fit.mu, *s)).unzip())
}

/// Empirical alpha-quantile of the residuals and the mean at or below it.
pub fn fhs_multipliers(z: &[f64], alpha: f64) -> Result<TailMultipliers> {
    check_alpha(alpha)?;
    const MIN_TAIL: f64 = 10.0;
    if alpha * (z.len() as f64) < MIN_TAIL {
        return Err(Error::Config(format!(
            "FHS window of {} residuals leaves fewer than {MIN_TAIL} tail observations at alpha {alpha}; use a larger window",
            z.len()
        )));
    }
    if z.iter().all(|v| *v == z[0]) {
        return Err(Error::Degenerate("FHS residuals are all identical".into()));
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = sorted_quantile(&sorted, alpha);
    let tail: Vec<f64> = sorted.iter().copied().take_while(|v| *v <= q).collect();
    let es = tail.iter().sum::<f64>() / tail.len() as f64;
    if !(es < q) {
        return Err(Error::Degenerate(format!("FHS tail has no spread below the quantile {q}")));
    }
    Ok(TailMultipliers { var: q, es })
}

pub fn fhs_var_es(fit: &GarchFit, alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = fhs_multipliers(&fit.z, alpha)?;
    Ok(fit.sigma.iter().map(|s| m.apply(fit.mu, *s)).unzip())
}

/// Generalized Pareto tail of the standardized losses `-z` above `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvtTail {
    pub threshold: f64,
    pub xi: f64,
    pub scale: f64,
    pub exceedances: usize,
    pub n: usize,
}

pub const MIN_EXCEEDANCES: usize = 30;

/// GPD negative log-likelihood of the excesses `x > 0`.
fn gpd_nll(x: &[f64], xi: f64, scale: f64) -> f64 {
    if !(scale > 0.0) {
        return f64::INFINITY;
    }
    let n = x.len() as f64;
    if xi.abs() < 1e-9 {
        return n * scale.ln() + x.iter().sum::<f64>() / scale;
    }
    let mut acc = 0.0;
    for v in x {
        let a = 1.0 + xi * v / scale;
        if !(a > 0.0) {
            return f64::INFINITY;
        }
        acc += a.ln();
    }
    n * scale.ln() + (1.0 + 1.0 / xi) * acc
}

/// Peaks over threshold on `-z` with the threshold at the
/// `1 - tail_fraction` empirical quantile; GPD by maximum likelihood.
pub fn fit_evt_tail(z: &[f64], tail_fraction: f64) -> Result<EvtTail> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::Config(format!("tail fraction {tail_fraction} outside (0, 1)")));
    }
    let mut losses: Vec<f64> = z.iter().map(|v| -v).collect();
    losses.sort_by(f64::total_cmp);
    let u = sorted_quantile(&losses, 1.0 - tail_fraction);
    let excess: Vec<f64> = losses.iter().filter(|l| **l > u).map(|l| l - u).collect();
    if excess.len() < MIN_EXCEEDANCES {
        return Err(Error::Config(format!(
            "only {} exceedances above the EVT threshold, need {MIN_EXCEEDANCES}",
            excess.len()
        )));
    }
    let mean_excess = excess.iter().sum::<f64>() / excess.len() as f64;
    let nm = NelderMead {
        ftol: 1e-12,
        ..NelderMead::default()
    };
    let m = nm.minimize(|p| gpd_nll(&excess, p[0], p[1].exp()), &[0.1, mean_excess.ln()]);
    if !m.f.is_finite() {
        return Err(Error::Estimation("GPD likelihood is not finite at the optimum".into()));
    }
    let (xi, scale) = (m.x[0], m.x[1].exp());
    if xi >= 1.0 {
        return Err(Error::Estimation(format!(
            "GPD shape {xi:.3} >= 1 implies an infinite tail mean"
        )));
    }
    Ok(EvtTail {
        threshold: u,
        xi,
        scale,
        exceedances: excess.len(),
        n: z.len(),
    })
}

impl EvtTail {
    /// Loss quantile `z_alpha` and tail-mean multiplier for level `alpha`,
    /// returned as (negative) return multipliers.
    pub fn multipliers(&self, alpha: f64) -> Result<TailMultipliers> {
        check_alpha(alpha)?;
        let tail_mass = self.exceedances as f64 / self.n as f64;
        let ratio = alpha / tail_mass;
        let z_alpha = if self.xi.abs() < 1e-9 {
            self.threshold - self.scale * ratio.ln()
        } else {
            self.threshold + self.scale / self.xi * (ratio.powf(-self.xi) - 1.0)
        };
        let es = z_alpha / (1.0 - self.xi) + (self.scale - self.xi * self.threshold) / (1.0 - self.xi);
        Ok(TailMultipliers {
            var: -z_alpha,
            es: -es,
        })
    }
}

pub fn evt_var_es(fit: &GarchFit, alpha: f64, tail_fraction: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = fit_evt_tail(&fit.z, tail_fraction)?.multipliers(alpha)?;
    Ok(fit.sigma.iter().map(|s| m.apply(fit.mu, *s)).unzip())
}

/// One benchmark forecaster; its `Display` form is the forecast `model_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineModel {
    /// `P-<family>-<dist>`
    Parametric(GarchSpec),
    /// `H-<family>-<dist>`
    Fhs(GarchSpec),
    /// `EVT-GARCH`: POT on Normal-QMLE GARCH(1,1) residuals.
    Evt,
}

impl BaselineModel {
    pub fn spec(&self) -> GarchSpec {
        match *self {
            BaselineModel::Parametric(s) | BaselineModel::Fhs(s) => s,
            BaselineModel::Evt => GarchSpec::new(GarchFamily::Garch11, InnovationDist::Normal),
        }
    }

    /// The six parametric models, the matching FHS models and EVT-GARCH.
    pub fn full_roster() -> Vec<BaselineModel> {
        let mut out = Vec::new();
        for fam in GarchFamily::ALL {
            for dist in [InnovationDist::Normal, InnovationDist::StudentT] {
                out.push(BaselineModel::Parametric(GarchSpec::new(fam, dist)));
            }
        }
        for fam in GarchFamily::ALL {
            for dist in [InnovationDist::Normal, InnovationDist::StudentT] {
                out.push(BaselineModel::Fhs(GarchSpec::new(fam, dist)));
            }
        }
        out.push(BaselineModel::Evt);
        out
    }
}

impl fmt::Display for BaselineModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineModel::Parametric(s) => write!(f, "P-{s}"),
            BaselineModel::Fhs(s) => write!(f, "H-{s}"),
            BaselineModel::Evt => write!(f, "EVT-GARCH"),
        }
    }
}

impl FromStr for BaselineModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "EVT-GARCH" {
            return Ok(BaselineModel::Evt);
        }
        match s.split_once('-') {
            Some(("P", rest)) => Ok(BaselineModel::Parametric(rest.parse()?)),
            Some(("H", rest)) => Ok(BaselineModel::Fhs(rest.parse()?)),
            _ => Err(Error::Config(format!("unknown baseline model id {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_constants() {
        let m = parametric_multipliers(InnovationDist::Normal, None, 0.05).unwrap();
        assert!((m.var - -1.6449).abs() < 1e-4);
        assert!((m.es - -2.0627).abs() < 1e-4);
        assert!((m.es / m.var - 1.2540).abs() < 1e-4);
    }

    #[test]
    fn student_t_tends_to_normal() {
        let n = parametric_multipliers(InnovationDist::Normal, None, 0.025).unwrap();
        let t = parametric_multipliers(InnovationDist::StudentT, Some(5000.0), 0.025).unwrap();
        assert!((n.var - t.var).abs() < 1e-3 && (n.es - t.es).abs() < 1e-3);
        let t4 = parametric_multipliers(InnovationDist::StudentT, Some(4.0), 0.01).unwrap();
        assert!(t4.es < t4.var && t4.var < 0.0);
        assert!(parametric_multipliers(InnovationDist::StudentT, None, 0.01).is_err());
    }

    #[test]
    fn student_t_es_matches_quadrature() {
        let nu = 5.0;
        let t = StudentsT::new(0.0, 1.0, nu).unwrap();
        let q = t.inverse_cdf(0.05);
        let h = 1e-4;
        let mut acc = 0.0;
        let mut x = -400.0;
        while x < q {
            acc += x * t.pdf(x) * h;
            x += h;
        }
        let m = parametric_multipliers(InnovationDist::StudentT, Some(nu), 0.05).unwrap();
        let scale = ((nu - 2.0) / nu).sqrt();
        assert!((acc / 0.05 * scale - m.es).abs() < 2e-3, "{} vs {}", acc / 0.05 * scale, m.es);
    }

    #[test]
    fn fhs_guards() {
        let z: Vec<f64> = (0..100).map(|i| (i as f64 * 0.7).sin()).collect();
        assert!(fhs_multipliers(&z, 0.05).is_err());
        assert!(matches!(fhs_multipliers(&[1.0; 400], 0.05), Err(Error::Degenerate(_))));
        let z: Vec<f64> = (0..400).map(|i| (i as f64 * 0.7).sin()).collect();
        let m = fhs_multipliers(&z, 0.05).unwrap();
        assert!(m.es < m.var);
    }

    #[test]
    fn evt_boundary_identity() {
        let z: Vec<f64> = (0..1000).map(|i| -((i as f64 + 0.5) / 1000.0 * 6.0)).collect();
        let tail = fit_evt_tail(&z, 0.10).unwrap();
        let at_u = tail.exceedances as f64 / tail.n as f64;
        let m = tail.multipliers(at_u).unwrap();
        assert!((-m.var - tail.threshold).abs() < 1e-12);
    }

    #[test]
    fn evt_guards() {
        let z: Vec<f64> = (0..200).map(|i| (i as f64 * 0.3).sin()).collect();
        assert!(fit_evt_tail(&z, 0.10).is_err());
    }

    #[test]
    fn model_ids_round_trip() {
        for m in BaselineModel::full_roster() {
            assert_eq!(m.to_string().parse::<BaselineModel>().unwrap(), m);
        }
        assert_eq!(BaselineModel::Evt.to_string(), "EVT-GARCH");
        assert_eq!(
            BaselineModel::Parametric(GarchSpec::new(GarchFamily::Egarch, InnovationDist::StudentT)).to_string(),
            "P-EGARCH-T"
        );
        assert!("Q-GARCH-N".parse::<BaselineModel>().is_err());
    }
}

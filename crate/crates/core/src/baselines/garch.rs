//! GARCH(1,1), GJR-GARCH and EGARCH with Normal or standardized Student-t
//! innovations, fitted by maximum likelihood around a constant mean.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::optim::NelderMead;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GarchFamily {
    #[serde(rename = "GARCH")]
    Garch11,
    #[serde(rename = "GJR")]
    Gjr,
    #[serde(rename = "EGARCH")]
    Egarch,
}

impl GarchFamily {
    pub const ALL: [GarchFamily; 3] = [GarchFamily::Garch11, GarchFamily::Egarch, GarchFamily::Gjr];

    pub fn tag(self) -> &'static str {
        match self {
            GarchFamily::Garch11 => "GARCH",
            GarchFamily::Gjr => "GJR",
            GarchFamily::Egarch => "EGARCH",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InnovationDist {
    #[serde(rename = "N")]
    Normal,
    /// Unit-variance Student-t with estimated degrees of freedom.
    #[serde(rename = "T")]
    StudentT,
}

impl InnovationDist {
    pub fn tag(self) -> &'static str {
        match self {
            InnovationDist::Normal => "N",
            InnovationDist::StudentT => "T",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GarchSpec {
    pub family: GarchFamily,
    pub dist: InnovationDist,
}

impl GarchSpec {
    pub fn new(family: GarchFamily, dist: InnovationDist) -> Self {
        Self { family, dist }
    }
}

impl fmt::Display for GarchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.family.tag(), self.dist.tag())
    }
}

impl FromStr for GarchSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (fam, dist) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("bad GARCH spec {s:?}, expected e.g. GARCH-N")))?;
        let family = match fam {
            "GARCH" => GarchFamily::Garch11,
            "GJR" => GarchFamily::Gjr,
            "EGARCH" => GarchFamily::Egarch,
            _ => return Err(Error::Config(format!("unknown GARCH family {fam:?}"))),
        };
        let dist = match dist {
            "N" => InnovationDist::Normal,
            "T" => InnovationDist::StudentT,
            _ => return Err(Error::Config(format!("unknown innovation tag {dist:?}"))),
        };
        Ok(Self { family, dist })
    }
}

/// Variance-equation parameters. `gamma` is the GJR leverage term `delta`
/// or the EGARCH sign term `theta`, and zero for GARCH(1,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Degrees of freedom for Student-t innovations.
    pub nu: Option<f64>,
}

impl GarchParams {
    pub fn admissible(&self, family: GarchFamily) -> bool {
        let finite = [self.omega, self.alpha, self.beta, self.gamma]
            .iter()
            .all(|v| v.is_finite());
        let nu_ok = self.nu.map_or(true, |v| v > 2.0 && v <= 500.0);
        finite
            && nu_ok
            && match family {
                GarchFamily::Garch11 => {
                    self.omega > 0.0 && self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta < 1.0
                }
                GarchFamily::Gjr => {
                    self.omega > 0.0
                        && self.alpha >= 0.0
                        && self.alpha + self.gamma >= 0.0
                        && self.beta >= 0.0
                        && self.alpha + self.beta + 0.5 * self.gamma < 1.0
                }
                GarchFamily::Egarch => self.beta.abs() < 1.0,
            }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarchFit {
    pub spec: GarchSpec,
    pub mu: f64,
    pub params: GarchParams,
    /// Conditional standard deviation for each in-sample date.
    pub sigma: Vec<f64>,
    /// Standardized residuals `(r_t - mu) / sigma_t`.
    pub z: Vec<f64>,
    pub loglik: f64,
    /// Variance used to seed the recursion.
    pub seed_var: f64,
    pub converged: bool,
}

/// Mean absolute value of a unit-variance innovation.
fn mean_abs(dist: InnovationDist, nu: Option<f64>) -> f64 {
    match (dist, nu) {
        (InnovationDist::StudentT, Some(v)) => {
            ((v - 2.0).sqrt() * (ln_gamma((v - 1.0) / 2.0) - ln_gamma(v / 2.0)).exp()) / PI.sqrt()
        }
        _ => (2.0 / PI).sqrt(),
    }
}

/// Conditional standard deviations for `returns` under fixed parameters;
/// `sigma[t]` uses data up to `t - 1`, and `sigma[0]^2 = seed_var`.
pub fn garch_sigma(spec: GarchSpec, params: &GarchParams, mu: f64, seed_var: f64, returns: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(returns.len());
    let ez = mean_abs(spec.dist, params.nu);
    let mut var = seed_var;
    for t in 0..returns.len() {
        if t > 0 {
            let e = returns[t - 1] - mu;
            let prev_sd: f64 = out[t - 1];
            var = match spec.family {
                GarchFamily::Garch11 => params.omega + params.alpha * e * e + params.beta * var,
                GarchFamily::Gjr => {
                    let lev = if e < 0.0 { params.gamma } else { 0.0 };
                    params.omega + (params.alpha + lev) * e * e + params.beta * var
                }
                GarchFamily::Egarch => {
                    let z = e / prev_sd;
                    (params.omega + params.alpha * (z.abs() - ez) + params.gamma * z + params.beta * var.ln())
                        .exp()
                }
            };
        }
        out.push(var.sqrt());
    }
    out
}

fn log_density(dist: InnovationDist, nu: Option<f64>, e: f64, sd: f64) -> f64 {
    match (dist, nu) {
        (InnovationDist::StudentT, Some(v)) => {
            let z2 = (e / sd).powi(2);
            ln_gamma((v + 1.0) / 2.0)
                - ln_gamma(v / 2.0)
                - 0.5 * (PI * (v - 2.0)).ln()
                - sd.ln()
                - 0.5 * (v + 1.0) * (1.0 + z2 / (v - 2.0)).ln()
        }
        _ => -0.5 * ((2.0 * PI).ln() + 2.0 * sd.ln() + (e / sd).powi(2)),
    }
}

fn loglik(spec: GarchSpec, params: &GarchParams, mu: f64, seed_var: f64, returns: &[f64]) -> f64 {
    if !params.admissible(spec.family) {
        return f64::NEG_INFINITY;
    }
    let sigma = garch_sigma(spec, params, mu, seed_var, returns);
    let mut ll = 0.0;
    for (r, sd) in returns.iter().zip(&sigma) {
        if !(*sd > 0.0) || !sd.is_finite() {
            return f64::NEG_INFINITY;
        }
        ll += log_density(spec.dist, params.nu, r - mu, *sd);
    }
    ll
}

/// Optimizer coordinates: `[log omega, alpha, beta, gamma, log(nu - 2)]`
/// (EGARCH: `omega` itself), scaled so that a unit step is meaningful.
fn to_params(spec: GarchSpec, x: &[f64]) -> GarchParams {
    let omega = match spec.family {
        GarchFamily::Egarch => x[0],
        _ => x[0].exp(),
    };
    GarchParams {
        omega,
        alpha: x[1],
        beta: x[2],
        gamma: x[3],
        nu: match spec.dist {
            InnovationDist::Normal => None,
            InnovationDist::StudentT => Some(2.0 + x[4].exp()),
        },
    }
}

fn start_points(spec: GarchSpec, var: f64) -> Vec<Vec<f64>> {
    let mut starts = Vec::new();
    for (persist, a) in [(0.95, 0.06), (0.90, 0.10), (0.98, 0.04)] {
        let x = match spec.family {
            GarchFamily::Garch11 => vec![(var * (1.0 - persist)).ln(), a, persist - a, 0.0],
            GarchFamily::Gjr => vec![(var * (1.0 - persist)).ln(), a * 0.5, persist - a, a],
            GarchFamily::Egarch => vec![(1.0 - persist) * var.ln(), a * 1.5, persist, -0.03],
        };
        starts.push(x);
    }
    if spec.dist == InnovationDist::StudentT {
        for x in &mut starts {
            x.push((8.0f64 - 2.0).ln());
        }
    }
    starts
}

/// Maximum likelihood with the mean fixed at the sample mean and the
/// variance recursion seeded at the sample variance.
pub fn fit_garch(returns: &[f64], spec: GarchSpec) -> Result<GarchFit> {
    const MIN_LEN: usize = 250;
    if returns.len() < MIN_LEN {
        return Err(Error::Estimation(format!(
            "GARCH fit needs at least {MIN_LEN} returns, got {}",
            returns.len()
        )));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::data("GARCH input contains non-finite returns"));
    }
    let n = returns.len() as f64;
    let mu = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / n;
    if !(var > 1e-300) || returns.iter().all(|r| *r == returns[0]) {
        return Err(Error::Degenerate("constant return series has no variance to model".into()));
    }
    let nm = NelderMead {
        max_iter: 4000,
        ftol: 1e-10,
        ..NelderMead::default()
    };
    let objective = |x: &[f64]| -> f64 { -loglik(spec, &to_params(spec, x), mu, var, returns) };
    let mut best: Option<crate::optim::Minimum> = None;
    for x0 in start_points(spec, var) {
        if !objective(&x0).is_finite() {
            continue;
        }
        let m = nm.minimize(objective, &x0);
        if best.as_ref().map_or(true, |b| m.f < b.f) {
            best = Some(m);
        }
    }
    let m = best.ok_or_else(|| Error::Estimation(format!("{spec}: no admissible start point")))?;
    if !m.f.is_finite() {
        return Err(Error::Estimation(format!("{spec}: likelihood not finite at optimum ({})", m.f)));
    }
    let params = to_params(spec, &m.x);
    let sigma = garch_sigma(spec, &params, mu, var, returns);
    let z = returns.iter().zip(&sigma).map(|(r, s)| (r - mu) / s).collect();
    Ok(GarchFit {
        spec,
        mu,
        params,
        sigma,
        z,
        loglik: -m.f,
        seed_var: var,
        converged: m.converged,
    })
}

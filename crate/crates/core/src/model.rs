//! Deterministic filtering of the factor-augmented realized ES-CAViaR
//! recursions.
//!
//! Given parameters, returns, factors and a positive measurement series,
//! the filter produces VaR `Q_t < 0`, the ES-VaR gap `omega_t > 0`,
//! `ES_t = Q_t - omega_t`, standardized returns `eps_t = r_t / Q_t` and
//! measurement residuals `u_t`. The time-t VaR and gap use only (t-1)-dated
//! inputs; `r_t` and `x_t` enter only `eps_t` and `u_t`.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::realized::sorted_quantile;

/// Number of leading returns used to initialize the filter.
pub const INIT_WINDOW: usize = 250;
/// Lower bound for the initial ES-VaR gap.
pub const MIN_INIT_GAP: f64 = 1e-4;

/// Full parameter vector of the VaR, gap and measurement equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega_star: f64,
    pub beta: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub gamma_f: Vec<f64>,
    pub nu0: f64,
    pub nu1: f64,
    pub psi_f: Vec<f64>,
    pub xi: f64,
    pub phi: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub sigma_u: f64,
    pub alpha: f64,
}

impl ModelParams {
    /// Empirical Bitcoin calibration reported for the 1%, 2.5% and 5% levels.
    pub fn reference_calibration(alpha: f64) -> Option<Self> {
        let col = [0.01, 0.025, 0.05]
            .iter()
            .position(|a| (a - alpha).abs() < 1e-12)?;
        let pick = |v: [f64; 3]| v[col];
        Some(Self {
            omega_star: pick([-0.210, -0.185, -0.160]),
            beta: pick([0.965, 0.955, 0.940]),
            tau1: pick([0.060, 0.045, 0.030]),
            tau2: pick([0.040, 0.030, 0.020]),
            gamma_f: vec![pick([0.090, 0.070, 0.050])],
            nu0: pick([0.012, 0.010, 0.008]),
            nu1: pick([0.920, 0.900, 0.870]),
            psi_f: vec![pick([0.080, 0.060, 0.045])],
            xi: pick([0.020, 0.015, 0.010]),
            phi: pick([0.250, 0.220, 0.200]),
            delta1: pick([0.030, 0.020, 0.010]),
            delta2: pick([0.015, 0.010, 0.006]),
            sigma_u: pick([0.550, 0.520, 0.500]),
            alpha,
        })
    }

    pub fn factor_count(&self) -> usize {
        self.gamma_f.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("invalid parameters: {what}")));
        let all = [
            self.omega_star,
            self.beta,
            self.tau1,
            self.tau2,
            self.nu0,
            self.nu1,
            self.xi,
            self.phi,
            self.delta1,
            self.delta2,
            self.sigma_u,
            self.alpha,
        ];
        if all
            .iter()
            .chain(&self.gamma_f)
            .chain(&self.psi_f)
            .any(|v| !v.is_finite())
        {
            return bad("non-finite value");
        }
        if self.gamma_f.len() != self.psi_f.len() {
            return bad("gamma_f and psi_f lengths differ");
        }
        if self.beta.abs() >= 1.0 {
            return bad("|beta| must be < 1");
        }
        if self.nu0 < 0.0 {
            return bad("nu0 must be >= 0");
        }
        if !(0.0..1.0).contains(&self.nu1) {
            return bad("nu1 must lie in [0, 1)");
        }
        if self.psi_f.iter().any(|p| *p < 0.0) {
            return bad("psi_f must be >= 0");
        }
        if !(self.sigma_u > 0.0) {
            return bad("sigma_u must be > 0");
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad("alpha must lie in (0, 0.5)");
        }
        Ok(())
    }

    /// Drops every factor and measurement-shock channel, leaving the pure
    /// return-driven recursion.
    pub fn nested(&self) -> Self {
        Self {
            gamma_f: vec![0.0; self.gamma_f.len()],
            psi_f: vec![0.0; self.psi_f.len()],
            phi: 0.0,
            delta1: 0.0,
            delta2: 0.0,
            ..self.clone()
        }
    }
}

/// Filter state at one date.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskState {
    pub log_neg_q: f64,
    pub omega: f64,
    pub eps: f64,
    pub f: Vec<f64>,
}

impl RiskState {
    pub fn q(&self) -> f64 {
        -self.log_neg_q.exp()
    }
}

/// `log(-Q_t) = omega* + beta log(-Q_{t-1}) + tau1 eps_{t-1} + tau2 eps_{t-1}^2 + gamma_f' f_{t-1}`.
pub fn var_step(prev_log_neg_q: f64, params: &ModelParams, eps_prev: f64, f_prev: &[f64]) -> f64 {
    let factor: f64 = params.gamma_f.iter().zip(f_prev).map(|(g, f)| g * f).sum();
    params.omega_star
        + params.beta * prev_log_neg_q
        + params.tau1 * eps_prev
        + params.tau2 * eps_prev * eps_prev
        + factor
}

/// `omega_t = nu0 + nu1 omega_{t-1} + psi_f' |f_{t-1}|`.
pub fn gap_step(prev_omega: f64, params: &ModelParams, f_prev: &[f64]) -> f64 {
    let factor: f64 = params.psi_f.iter().zip(f_prev).map(|(p, f)| p * f.abs()).sum();
    params.nu0 + params.nu1 * prev_omega + factor
}

pub fn es_from_gap(q: f64, omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::Data(format!("ES-VaR gap must be positive, got {omega}")));
    }
    if !(q < 0.0) {
        return Err(Error::Data(format!("VaR must be negative, got {q}")));
    }
    Ok(q - omega)
}

/// `u_t = log x_t - (xi + phi log(-Q_t) + delta1 eps_t + delta2 eps_t^2)`.
pub fn measurement_residual(params: &ModelParams, x: f64, q: f64, eps: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Data(format!("measurement must be positive, got {x}")));
    }
    Ok(residual_from_log(params, x.ln(), (-q).ln(), eps))
}

#[inline]
fn residual_from_log(params: &ModelParams, log_x: f64, log_neg_q: f64, eps: f64) -> f64 {
    log_x - (params.xi + params.phi * log_neg_q + params.delta1 * eps + params.delta2 * eps * eps)
}

/// Borrowed model inputs over one window. `factors[t]` holds f_t; it must
/// have `params.factor_count()` entries (zero when the model has none).
#[derive(Debug, Clone, Copy)]
pub struct FilterInput<'a> {
    pub returns: &'a [f64],
    pub factors: &'a [Vec<f64>],
    pub log_x: &'a [f64],
}

impl<'a> FilterInput<'a> {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> FilterInput<'a> {
        FilterInput {
            returns: &self.returns[range.clone()],
            factors: &self.factors[range.clone()],
            log_x: &self.log_x[range],
        }
    }

    fn check(&self, params: &ModelParams) -> Result<()> {
        let t = self.returns.len();
        if self.factors.len() != t || self.log_x.len() != t {
            return Err(Error::data(format!(
                "filter inputs misaligned: {t} returns, {} factor rows, {} measurements",
                self.factors.len(),
                self.log_x.len()
            )));
        }
        if let Some(i) = self
            .factors
            .iter()
            .position(|f| f.len() != params.factor_count())
        {
            return Err(Error::data(format!(
                "factor row {i} has {} entries, model expects {}",
                self.factors[i].len(),
                params.factor_count()
            )));
        }
        Ok(())
    }
}

/// Starting values (Q0, omega0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterInit {
    pub q0: f64,
    pub omega0: f64,
}

impl FilterInit {
    /// Q0 is the empirical alpha-quantile of the first (up to) 250 returns;
    /// omega0 is the mean of returns at or below Q0 minus Q0, floored.
    pub fn empirical(returns: &[f64], alpha: f64) -> Result<Self> {
        if returns.is_empty() {
            return Err(Error::data("cannot initialize the filter from no returns"));
        }
        let mut head: Vec<f64> = returns[..returns.len().min(INIT_WINDOW)].to_vec();
        head.sort_by(f64::total_cmp);
        let q0 = sorted_quantile(&head, alpha).min(-MIN_INIT_GAP);
        let tail: Vec<f64> = head.iter().copied().filter(|r| *r <= q0).collect();
        let tail_mean = if tail.is_empty() {
            head[0]
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        };
        Ok(Self {
            q0,
            omega0: (q0 - tail_mean).max(MIN_INIT_GAP),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q0 < 0.0 && self.q0.is_finite()) || !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(Error::Config(format!(
                "filter init needs Q0 < 0 and omega0 > 0, got ({}, {})",
                self.q0, self.omega0
            )));
        }
        Ok(())
    }
}

/// Filtered sequences; all vectors share one length.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskPath {
    pub dates: Vec<NaiveDate>,
    pub q: Vec<f64>,
    pub omega: Vec<f64>,
    pub es: Vec<f64>,
    pub eps: Vec<f64>,
    pub u: Vec<f64>,
    pub log_neg_q: Vec<f64>,
}

impl RiskPath {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn with_dates(mut self, dates: &[NaiveDate]) -> Result<Self> {
        if dates.len() != self.len() {
            return Err(Error::data("path and date index differ in length"));
        }
        self.dates = dates.to_vec();
        Ok(self)
    }

    /// State at the last date, for one-step-ahead forecasting.
    pub fn last_state(&self, f_last: &[f64]) -> Option<RiskState> {
        let t = self.len().checked_sub(1)?;
        Some(RiskState {
            log_neg_q: self.log_neg_q[t],
            omega: self.omega[t],
            eps: self.eps[t],
            f: f_last.to_vec(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,Q,omega,ES,eps,u\n");
        for t in 0..self.len() {
            let date = self
                .dates
                .get(t)
                .map(|d| d.to_string())
                .unwrap_or_else(|| t.to_string());
            out.push_str(&format!(
                "{date},{},{},{},{},{}\n",
                self.q[t], self.omega[t], self.es[t], self.eps[t], self.u[t]
            ));
        }
        out
    }
}

/// What drives the VaR recursion besides its own lags.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Driver {
    Factor,
    /// Lagged measurement residual with the given coefficient (diagnostic).
    Measurement(f64),
}

pub fn filter_path(params: &ModelParams, input: FilterInput<'_>, init: FilterInit) -> Result<RiskPath> {
    run_filter(params, input, init, Driver::Factor)
}

/// Diagnostic variant where `gamma_u * u_{t-1}` replaces the factor term in
/// the VaR equation. The gap equation keeps its factor term.
pub fn filter_path_measurement_driven(
    params: &ModelParams,
    gamma_u: f64,
    input: FilterInput<'_>,
    init: FilterInit,
) -> Result<RiskPath> {
    run_filter(params, input, init, Driver::Measurement(gamma_u))
}

fn run_filter(
    params: &ModelParams,
    input: FilterInput<'_>,
    init: FilterInit,
    driver: Driver,
) -> Result<RiskPath> {
    input.check(params)?;
    init.validate()?;
    let t_len = input.len();
    let mut path = RiskPath {
        dates: Vec::new(),
        q: Vec::with_capacity(t_len),
        omega: Vec::with_capacity(t_len),
        es: Vec::with_capacity(t_len),
        eps: Vec::with_capacity(t_len),
        u: Vec::with_capacity(t_len),
        log_neg_q: Vec::with_capacity(t_len),
    };
    let mut lq = (-init.q0).ln();
    let mut omega = init.omega0;
    let no_factor = vec![0.0; params.factor_count()];
    for t in 0..t_len {
        if t > 0 {
            let f_prev = &input.factors[t - 1];
            lq = match driver {
                Driver::Factor => var_step(lq, params, path.eps[t - 1], f_prev),
                Driver::Measurement(g) => {
                    var_step(lq, params, path.eps[t - 1], &no_factor) + g * path.u[t - 1]
                }
            };
            omega = gap_step(omega, params, f_prev);
        }
        let q = -lq.exp();
        if !lq.is_finite() || !(q < 0.0) || !q.is_finite() {
            return Err(Error::FilterAbort {
                index: t,
                message: format!("log(-Q) = {lq}"),
            });
        }
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::FilterAbort {
                index: t,
                message: format!("omega = {omega}"),
            });
        }
        let eps = input.returns[t] / q;
        let u = residual_from_log(params, input.log_x[t], lq, eps);
        if !eps.is_finite() || !u.is_finite() {
            return Err(Error::FilterAbort {
                index: t,
                message: format!("eps = {eps}, u = {u}"),
            });
        }
        path.log_neg_q.push(lq);
        path.q.push(q);
        path.omega.push(omega);
        path.es.push(q - omega);
        path.eps.push(eps);
        path.u.push(u);
    }
    Ok(path)
}

/// One-step-ahead (VaR, ES) from the last filtered state.
pub fn forecast_one_step(last: &RiskState, params: &ModelParams) -> Result<(f64, f64)> {
    let lq = var_step(last.log_neg_q, params, last.eps, &last.f);
    let omega = gap_step(last.omega, params, &last.f);
    let q = -lq.exp();
    if !(q < 0.0) || !q.is_finite() {
        return Err(Error::FilterAbort {
            index: usize::MAX,
            message: format!("forecast log(-Q) = {lq}"),
        });
    }
    Ok((q, es_from_gap(q, omega)?))
}

/// One-step-ahead (VaR, ES) forecasts of one model at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSeries {
    pub model_id: String,
    pub alpha: f64,
    pub dates: Vec<NaiveDate>,
    pub var: Vec<f64>,
    pub es: Vec<f64>,
}

impl ForecastSeries {
    /// Checks lengths and `ES_t < VaR_t < 0` at every date.
    pub fn new(
        model_id: impl Into<String>,
        alpha: f64,
        dates: Vec<NaiveDate>,
        var: Vec<f64>,
        es: Vec<f64>,
    ) -> Result<Self> {
        let model_id = model_id.into();
        if dates.len() != var.len() || var.len() != es.len() {
            return Err(Error::data(format!(
                "forecast {model_id}: {} dates, {} VaR, {} ES values",
                dates.len(),
                var.len(),
                es.len()
            )));
        }
        if let Some(t) = (0..var.len()).find(|&t| !(es[t] < var[t] && var[t] < 0.0)) {
            return Err(Error::data(format!(
                "forecast {model_id} on {}: need ES < VaR < 0, got VaR {} ES {}",
                dates[t], var[t], es[t]
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::data(format!("forecast {model_id}: dates not strictly increasing")));
        }
        Ok(Self {
            model_id,
            alpha,
            dates,
            var,
            es,
        })
    }

    pub fn len(&self) -> usize {
        self.var.len()
    }

    pub fn is_empty(&self) -> bool {
        self.var.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,alpha,VaR,ES,model_id\n");
        self.write_rows(&mut out);
        out
    }

    /// Rows without a header, for concatenating several series in one file.
    pub fn write_rows(&self, out: &mut String) {
        for t in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.dates[t], self.alpha, self.var[t], self.es[t], self.model_id
            ));
        }
    }

    /// Parses a forecast file holding any number of (model, alpha) series,
    /// returned in order of first appearance.
    pub fn parse_csv<R: std::io::Read>(reader: R) -> Result<Vec<ForecastSeries>> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
        let expected = ["date", "alpha", "VaR", "ES", "model_id"];
        if header.len() != 5 || header.iter().zip(expected).any(|(a, b)| a != b) {
            return Err(Error::parse(1, "expected header date,alpha,VaR,ES,model_id"));
        }
        let mut groups: Vec<(String, f64, Vec<NaiveDate>, Vec<f64>, Vec<f64>)> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
            if rec.len() != 5 {
                return Err(Error::parse(line, format!("expected 5 fields, found {}", rec.len())));
            }
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                .map_err(|e| Error::parse(line, format!("bad date {:?}: {e}", &rec[0])))?;
            let num = |j: usize| -> Result<f64> {
                rec[j]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(line, format!("bad number {:?}", &rec[j])))
            };
            let (alpha, var, es) = (num(1)?, num(2)?, num(3)?);
            let id = rec[4].to_string();
            if id.is_empty() {
                return Err(Error::parse(line, "empty model_id"));
            }
            let pos = groups.iter().position(|g| g.0 == id && g.1 == alpha);
            let g = match pos {
                Some(k) => &mut groups[k],
                None => {
                    groups.push((id, alpha, Vec::new(), Vec::new(), Vec::new()));
                    groups.last_mut().unwrap()
                }
            };
            g.2.push(date);
            g.3.push(var);
            g.4.push(es);
        }
        groups
            .into_iter()
            .map(|(id, a, d, v, e)| ForecastSeries::new(id, a, d, v, e))
            .collect()
    }
}

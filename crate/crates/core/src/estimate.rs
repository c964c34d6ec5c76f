//! Joint quasi-likelihood estimation and rolling re-estimation.
//!
//! The objective is `L_R + w L_M`: the asymmetric-Laplace negative
//! quasi-log-likelihood of the (VaR, ES) path plus the Gaussian negative
//! log-likelihood of the measurement residuals. The measurement parameters
//! enter `L_M` only, and linearly through `u_t`, so by default they are
//! profiled out by least squares at every evaluation. The optimizer then
//! searches the dynamic parameters alone in an unconstrained coordinate
//! system.

use std::f64::consts::PI;
use std::ops::Range;

use chrono::NaiveDate;
use log::warn;
use nalgebra::{Matrix4, Vector4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AlignedDataset, MIN_IN_SAMPLE};
use crate::model::{
    filter_path, gap_step, var_step, FilterInit, FilterInput, ForecastSeries, ModelParams, RiskPath,
};
use crate::optim::{logistic, logit, softplus, softplus_inv, NelderMead};
use crate::realized::Measure;

/// Model identifier used in forecast files.
pub const MODEL_ID: &str = "DFM-RES-CAViaR";

/// Log asymmetric-Laplace quasi-likelihood of one observation,
/// `log((alpha - 1) / es) + (r - q)(alpha - 1{r <= q}) / (alpha es)`.
/// `-inf` when `es >= 0`.
pub fn al_log_score(q: f64, es: f64, r: f64, alpha: f64) -> f64 {
    if !(es < 0.0) {
        return f64::NEG_INFINITY;
    }
    let hit = if r <= q { 1.0 } else { 0.0 };
    ((alpha - 1.0) / es).ln() + (r - q) * (alpha - hit) / (alpha * es)
}

/// `L_R = -sum_t al_log_score`; `+inf` when any `ES_t >= 0`.
pub fn al_nll(path: &RiskPath, returns: &[f64], alpha: f64) -> f64 {
    if returns.len() != path.len() {
        return f64::INFINITY;
    }
    -(0..path.len())
        .map(|t| al_log_score(path.q[t], path.es[t], returns[t], alpha))
        .sum::<f64>()
}

/// `L_M = 0.5 sum_t (u_t^2 / sigma_u^2 + log(2 pi sigma_u^2))`; `+inf` when
/// `sigma_u <= 0`.
pub fn meas_nll(u: &[f64], sigma_u: f64) -> f64 {
    if !(sigma_u > 0.0) {
        return f64::INFINITY;
    }
    let s2 = sigma_u * sigma_u;
    0.5 * u.iter().map(|x| x * x / s2 + (2.0 * PI * s2).ln()).sum::<f64>()
}

/// `L_R + weight * L_M` on the filtered path, `+inf` on an invalid
/// parameter vector or a filter abort.
pub fn joint_objective(params: &ModelParams, input: FilterInput<'_>, init: FilterInit, weight: f64) -> f64 {
    if params.validate().is_err() {
        return f64::INFINITY;
    }
    let mut ev = Evaluator::new(input, init, params.alpha, weight);
    match ev.run(params, false) {
        Some(parts) => parts.total(weight),
        None => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParts {
    pub l_r: f64,
    pub l_m: f64,
}

impl ObjectiveParts {
    pub fn total(&self, weight: f64) -> f64 {
        self.l_r + weight * self.l_m
    }
}

/// Measurement parameters minimizing `L_M` for a given VaR path:
/// OLS of `log x` on `[1, log(-Q), eps, eps^2]`, `sigma_u^2 = mean(u^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementFit {
    pub xi: f64,
    pub phi: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub sigma_u: f64,
}

pub fn profile_measurement(log_neg_q: &[f64], eps: &[f64], log_x: &[f64]) -> Option<MeasurementFit> {
    let n = log_x.len();
    if n < 5 || log_neg_q.len() != n || eps.len() != n {
        return None;
    }
    let mut xtx = Matrix4::<f64>::zeros();
    let mut xty = Vector4::<f64>::zeros();
    for t in 0..n {
        let x = Vector4::new(1.0, log_neg_q[t], eps[t], eps[t] * eps[t]);
        xtx += x * x.transpose();
        xty += x * log_x[t];
    }
    let b = match xtx.cholesky() {
        Some(c) => c.solve(&xty),
        None => {
            let ridge = 1e-10 * xtx.trace().max(1.0);
            (xtx + Matrix4::identity() * ridge).cholesky()?.solve(&xty)
        }
    };
    let mut ss = 0.0;
    for t in 0..n {
        let u = log_x[t] - (b[0] + b[1] * log_neg_q[t] + b[2] * eps[t] + b[3] * eps[t] * eps[t]);
        ss += u * u;
    }
    let sigma_u = (ss / n as f64).sqrt();
    if !(sigma_u > 0.0) || !b.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(MeasurementFit {
        xi: b[0],
        phi: b[1],
        delta1: b[2],
        delta2: b[3],
        sigma_u,
    })
}

/// Allocation-free evaluation of the objective over one window.
struct Evaluator<'a> {
    input: FilterInput<'a>,
    init: FilterInit,
    alpha: f64,
    weight: f64,
    lq: Vec<f64>,
    eps: Vec<f64>,
    profiled: Option<MeasurementFit>,
}

impl<'a> Evaluator<'a> {
    fn new(input: FilterInput<'a>, init: FilterInit, alpha: f64, weight: f64) -> Self {
        Self {
            input,
            init,
            alpha,
            weight,
            lq: vec![0.0; input.len()],
            eps: vec![0.0; input.len()],
            profiled: None,
        }
    }

    /// Runs the filter; with `profile` the measurement parameters in
    /// `params` are ignored and replaced by their least-squares values.
    fn run(&mut self, params: &ModelParams, profile: bool) -> Option<ObjectiveParts> {
        let alpha = self.alpha;
        let input = self.input;
        let mut lq = (-self.init.q0).ln();
        let mut omega = self.init.omega0;
        let mut l_r = 0.0;
        for t in 0..input.len() {
            if t > 0 {
                let f_prev = &input.factors[t - 1];
                lq = var_step(lq, params, self.eps[t - 1], f_prev);
                omega = gap_step(omega, params, f_prev);
            }
            let q = -lq.exp();
            if !(q < 0.0 && q.is_finite()) || !(omega > 0.0 && omega.is_finite()) {
                return None;
            }
            let r = input.returns[t];
            let eps = r / q;
            let score = al_log_score(q, q - omega, r, alpha);
            if !score.is_finite() || !eps.is_finite() {
                return None;
            }
            l_r -= score;
            self.lq[t] = lq;
            self.eps[t] = eps;
        }
        let l_m = if profile {
            let m = profile_measurement(&self.lq, &self.eps, input.log_x)?;
            self.profiled = Some(m);
            let n = input.len() as f64;
            0.5 * n * (1.0 + (2.0 * PI * m.sigma_u * m.sigma_u).ln())
        } else {
            let s2 = params.sigma_u * params.sigma_u;
            let mut acc = 0.0;
            for t in 0..input.len() {
                let e = self.eps[t];
                let u = input.log_x[t]
                    - (params.xi + params.phi * self.lq[t] + params.delta1 * e + params.delta2 * e * e);
                acc += u * u / s2;
            }
            0.5 * (acc + input.len() as f64 * (2.0 * PI * s2).ln())
        };
        let parts = ObjectiveParts { l_r, l_m };
        parts.total(self.weight).is_finite().then_some(parts)
    }
}

/// How `beta` is kept inside its admissible region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaTransform {
    /// `beta = tanh(z)`, the full `|beta| < 1` region.
    #[default]
    Tanh,
    /// `beta = logistic(z)`, restricting to `0 < beta < 1`.
    Logistic,
}

/// Ranges the Latin-hypercube start points are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StartRanges {
    pub beta: (f64, f64),
    pub nu1: (f64, f64),
    pub tau1: (f64, f64),
    pub tau2: (f64, f64),
    pub gamma_f: (f64, f64),
    /// Share of the initial gap level carried by the factor term.
    pub psi_share: (f64, f64),
}

impl Default for StartRanges {
    fn default() -> Self {
        Self {
            beta: (0.85, 0.99),
            nu1: (0.80, 0.97),
            tau1: (0.0, 0.10),
            tau2: (0.0, 0.05),
            gamma_f: (-0.10, 0.10),
            psi_share: (0.0, 0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub multistart: usize,
    /// Nelder-Mead iteration budget per start.
    pub max_iter: usize,
    /// Relative objective tolerance.
    pub tol: f64,
    pub seed: u64,
    pub beta_transform: BetaTransform,
    pub ranges: StartRanges,
    /// Weight on `L_M`.
    pub weight: f64,
    /// Profile the measurement parameters out by least squares.
    pub profile_measurement: bool,
    /// Extra start point, e.g. the previous window's estimate.
    #[serde(skip)]
    pub warm_start: Option<ModelParams>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            multistart: 12,
            max_iter: 4000,
            tol: 1e-7,
            seed: 0,
            beta_transform: BetaTransform::Tanh,
            ranges: StartRanges::default(),
            weight: 1.0,
            profile_measurement: true,
            warm_start: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.multistart == 0 && self.warm_start.is_none() {
            return Err(Error::Config("multistart must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be > 0".into()));
        }
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(Error::Config("weight must be finite and >= 0".into()));
        }
        let r = &self.ranges;
        for (name, (lo, hi)) in [
            ("beta", r.beta),
            ("nu1", r.nu1),
            ("tau1", r.tau1),
            ("tau2", r.tau2),
            ("gamma_f", r.gamma_f),
            ("psi_share", r.psi_share),
        ] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("start range for {name} is empty")));
            }
        }
        if !(r.beta.0 > -1.0 && r.beta.1 < 1.0) || !(r.nu1.0 >= 0.0 && r.nu1.1 < 1.0) {
            return Err(Error::Config("beta and nu1 start ranges must lie inside the constraint set".into()));
        }
        if !(r.psi_share.0 >= 0.0 && r.psi_share.1 < 1.0) {
            return Err(Error::Config("psi_share range must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Map between model parameters and optimizer coordinates.
///
/// Coordinates are `[c, b, tau1, tau2, gamma_f.., g, n1, p..]` followed, when
/// not profiling, by `[xi, phi, delta1, delta2, s]`, where
/// `omega_star = c (1 - beta)`, `beta = T(b)`, `nu1 = logistic(n1)`,
/// `nu0 = (1 - nu1) softplus(g)`, `psi_f = softplus(p)` and
/// `sigma_u = softplus(s)`. Writing the intercepts as levels decouples them
/// from the persistence parameters.
#[derive(Debug, Clone, Copy)]
struct Codec {
    r: usize,
    beta: BetaTransform,
    profile: bool,
    alpha: f64,
}

/// Keeps transformed positive parameters away from exact zero so that
/// encoding stays finite.
const POS_FLOOR: f64 = 1e-10;

impl Codec {
    fn dim(&self) -> usize {
        6 + 2 * self.r + if self.profile { 0 } else { 5 }
    }

    fn decode(&self, z: &[f64]) -> ModelParams {
        let r = self.r;
        let beta = match self.beta {
            BetaTransform::Tanh => z[1].tanh(),
            BetaTransform::Logistic => logistic(z[1]),
        };
        let nu1 = logistic(z[5 + r]);
        let mut p = ModelParams {
            omega_star: z[0] * (1.0 - beta),
            beta,
            tau1: z[2],
            tau2: z[3],
            gamma_f: z[4..4 + r].to_vec(),
            nu0: (1.0 - nu1) * softplus(z[4 + r]),
            nu1,
            psi_f: z[6 + r..6 + 2 * r].iter().map(|v| softplus(*v)).collect(),
            xi: 0.0,
            phi: 0.0,
            delta1: 0.0,
            delta2: 0.0,
            sigma_u: 1.0,
            alpha: self.alpha,
        };
        if !self.profile {
            let m = &z[6 + 2 * r..];
            p.xi = m[0];
            p.phi = m[1];
            p.delta1 = m[2];
            p.delta2 = m[3];
            p.sigma_u = softplus(m[4]);
        }
        p
    }

    fn encode(&self, p: &ModelParams) -> Vec<f64> {
        let b = match self.beta {
            BetaTransform::Tanh => p.beta.clamp(-0.999_999, 0.999_999).atanh(),
            BetaTransform::Logistic => logit(p.beta.clamp(1e-6, 1.0 - 1e-6)),
        };
        let nu1 = p.nu1.clamp(1e-6, 1.0 - 1e-6);
        let mut z = vec![p.omega_star / (1.0 - p.beta), b, p.tau1, p.tau2];
        z.extend(&p.gamma_f);
        z.push(softplus_inv((p.nu0 / (1.0 - nu1)).max(POS_FLOOR)));
        z.push(logit(nu1));
        z.extend(p.psi_f.iter().map(|v| softplus_inv(v.max(POS_FLOOR))));
        if !self.profile {
            z.extend([p.xi, p.phi, p.delta1, p.delta2, softplus_inv(p.sigma_u.max(POS_FLOOR))]);
        }
        z
    }
}

/// Start points: the centre of the ranges followed by Latin-hypercube
/// draws. The VaR intercept puts the unconditional log-VaR at the initial
/// quantile and the gap intercepts put the unconditional gap at the
/// initial gap.
fn start_points(
    cfg: &FitConfig,
    input: FilterInput<'_>,
    init: FilterInit,
    alpha: f64,
) -> Vec<ModelParams> {
    let r = input.factors.first().map_or(0, Vec::len);
    let n = cfg.multistart;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = 5 + 2 * r;
    let mut strata: Vec<Vec<f64>> = Vec::with_capacity(dims);
    for _ in 0..dims {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        strata.push(perm.iter().map(|&k| (k as f64 + rng.gen::<f64>()) / n as f64).collect());
    }
    let lerp = |(lo, hi): (f64, f64), u: f64| lo + (hi - lo) * u;

    let head = &input.returns[..input.len().min(crate::model::INIT_WINDOW)];
    let eps0: Vec<f64> = head.iter().map(|x| x / init.q0).collect();
    let m1 = eps0.iter().sum::<f64>() / eps0.len() as f64;
    let m2 = eps0.iter().map(|e| e * e).sum::<f64>() / eps0.len() as f64;
    let t = input.len() as f64;
    let mean_f: Vec<f64> = (0..r)
        .map(|j| input.factors.iter().map(|f| f[j]).sum::<f64>() / t)
        .collect();
    let mean_abs_f: Vec<f64> = (0..r)
        .map(|j| input.factors.iter().map(|f| f[j].abs()).sum::<f64>() / t)
        .collect();
    let level = (-init.q0).ln();

    let rg = &cfg.ranges;
    (0..n)
        .map(|i| {
            // start 0 is the centre of the ranges, so smaller start sets are
            // always contained in larger ones
            let u = |d: usize| if i == 0 { 0.5 } else { strata[d][i] };
            let beta = lerp(rg.beta, u(0));
            let nu1 = lerp(rg.nu1, u(1));
            let tau1 = lerp(rg.tau1, u(2));
            let tau2 = lerp(rg.tau2, u(3));
            let share = lerp(rg.psi_share, u(4));
            let gamma_f: Vec<f64> = (0..r).map(|j| lerp(rg.gamma_f, u(5 + j))).collect();
            let psi_f: Vec<f64> = (0..r)
                .map(|j| {
                    let w = u(5 + r + j);
                    if mean_abs_f[j] > 0.0 {
                        (1.0 - nu1) * init.omega0 * share * 2.0 * w / (r as f64 * mean_abs_f[j])
                    } else {
                        0.0
                    }
                })
                .collect();
            let factor_gap: f64 = psi_f.iter().zip(&mean_abs_f).map(|(p, m)| p * m).sum();
            let nu0 = ((1.0 - nu1) * init.omega0 - factor_gap).max((1.0 - nu1) * init.omega0 * 0.05);
            let factor_level: f64 = gamma_f.iter().zip(&mean_f).map(|(g, m)| g * m).sum();
            ModelParams {
                omega_star: (1.0 - beta) * level - tau1 * m1 - tau2 * m2 - factor_level,
                beta,
                tau1,
                tau2,
                gamma_f,
                nu0,
                nu1,
                psi_f,
                xi: 0.0,
                phi: 0.0,
                delta1: 0.0,
                delta2: 0.0,
                sigma_u: 1.0,
                alpha,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub starts: usize,
    pub finite_starts: usize,
    /// Objective at each start point, `+inf` where the filter aborted.
    pub start_objectives: Vec<f64>,
    pub best_start: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub params: ModelParams,
    pub objective: f64,
    pub parts: ObjectiveParts,
    pub diagnostics: FitDiagnostics,
    pub path: RiskPath,
    pub init: FilterInit,
    /// Estimation window as indices into the caller's data.
    pub window: Range<usize>,
    /// Optima from the other starts, best first.
    pub alternates: Vec<(f64, ModelParams)>,
}

/// Serializable summary of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model_id: String,
    pub alpha: f64,
    pub params: ModelParams,
    pub objective: f64,
    pub l_r: f64,
    pub l_m: f64,
    pub weight: f64,
    pub starts: usize,
    pub finite_starts: usize,
    pub best_start: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub seed: u64,
    pub init: FilterInit,
    pub window_start: Option<NaiveDate>,
    pub window_end: Option<NaiveDate>,
    pub violation_rate: f64,
}

impl FittedModel {
    pub fn report(&self, cfg: &FitConfig, returns: &[f64], dates: &[NaiveDate]) -> FitReport {
        let hits = self
            .path
            .q
            .iter()
            .zip(returns)
            .filter(|(q, r)| *r <= *q)
            .count();
        FitReport {
            model_id: MODEL_ID.to_string(),
            alpha: self.params.alpha,
            params: self.params.clone(),
            objective: self.objective,
            l_r: self.parts.l_r,
            l_m: self.parts.l_m,
            weight: cfg.weight,
            starts: self.diagnostics.starts,
            finite_starts: self.diagnostics.finite_starts,
            best_start: self.diagnostics.best_start,
            iterations: self.diagnostics.iterations,
            evaluations: self.diagnostics.evaluations,
            converged: self.diagnostics.converged,
            seed: cfg.seed,
            init: self.init,
            window_start: dates.get(self.window.start).copied(),
            window_end: self.window.end.checked_sub(1).and_then(|i| dates.get(i).copied()),
            violation_rate: hits as f64 / self.path.len().max(1) as f64,
        }
    }
}

/// Best-of-multistart Nelder-Mead fit on one window. The filter is
/// initialized from the window's own leading returns.
pub fn fit(input: FilterInput<'_>, alpha: f64, cfg: &FitConfig) -> Result<FittedModel> {
    cfg.validate()?;
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 0.5)")));
    }
    if input.len() < MIN_IN_SAMPLE {
        return Err(Error::Estimation(format!(
            "in-sample window has {} observations, need at least {MIN_IN_SAMPLE}",
            input.len()
        )));
    }
    let r = input.factors.first().map_or(0, Vec::len);
    if input.factors.len() != input.len()
        || input.log_x.len() != input.len()
        || input.factors.iter().any(|f| f.len() != r)
    {
        return Err(Error::data("estimation inputs misaligned"));
    }
    if input.log_x.iter().any(|v| !v.is_finite()) || input.returns.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("estimation inputs contain non-finite values"));
    }
    let init = FilterInit::empirical(input.returns, alpha)?;
    let codec = Codec {
        r,
        beta: cfg.beta_transform,
        profile: cfg.profile_measurement,
        alpha,
    };

    let mut starts = start_points(cfg, input, init, alpha);
    if let Some(w) = &cfg.warm_start {
        if w.factor_count() == r && w.validate().is_ok() {
            starts.push(ModelParams { alpha, ..w.clone() });
        }
    }
    let nm = NelderMead {
        max_iter: cfg.max_iter,
        ftol: cfg.tol,
        ..NelderMead::default()
    };
    let weight = cfg.weight;
    let objective_at = move |ev: &mut Evaluator<'_>, z: &[f64]| -> f64 {
        let p = codec.decode(z);
        if p.validate().is_err() {
            return f64::INFINITY;
        }
        ev.run(&p, codec.profile).map_or(f64::INFINITY, |parts| parts.total(weight))
    };

    let runs: Vec<(f64, crate::optim::Minimum)> = starts
        .par_iter()
        .map(|start| {
            let mut ev = Evaluator::new(input, init, alpha, weight);
            let z0 = codec.encode(start);
            debug_assert_eq!(z0.len(), codec.dim());
            let f0 = objective_at(&mut ev, &z0);
            let m = nm.minimize(|z| objective_at(&mut ev, z), &z0);
            (f0, m)
        })
        .collect();

    let start_objectives: Vec<f64> = runs.iter().map(|(f0, _)| *f0).collect();
    let finite_starts = start_objectives.iter().filter(|f| f.is_finite()).count();
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, (_, m))| m.f.is_finite())
        .min_by(|a, b| a.1 .1.f.total_cmp(&b.1 .1.f).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i);
    let Some(best) = best else {
        return Err(Error::Estimation(format!(
            "all {} start points aborted the filter (Q0 = {:.6}, omega0 = {:.6})",
            starts.len(),
            init.q0,
            init.omega0
        )));
    };
    let m = &runs[best].1;

    let finalize = |x: &[f64]| -> Option<(ModelParams, ObjectiveParts)> {
        let mut params = codec.decode(x);
        let mut ev = Evaluator::new(input, init, alpha, weight);
        let parts = ev.run(&params, codec.profile)?;
        if codec.profile {
            let mf = ev.profiled?;
            params.xi = mf.xi;
            params.phi = mf.phi;
            params.delta1 = mf.delta1;
            params.delta2 = mf.delta2;
            params.sigma_u = mf.sigma_u;
        }
        params.validate().ok()?;
        Some((params, parts))
    };
    let (params, parts) =
        finalize(&m.x).ok_or_else(|| Error::Estimation("optimum aborted the filter on re-evaluation".into()))?;
    let objective = parts.total(weight);
    let path = filter_path(&params, input, init)?;
    let mut alternates: Vec<(f64, ModelParams)> = runs
        .iter()
        .enumerate()
        .filter(|(i, (_, m))| *i != best && m.f.is_finite())
        .filter_map(|(_, (_, m))| finalize(&m.x).map(|(p, parts)| (parts.total(weight), p)))
        .collect();
    alternates.sort_by(|a, b| a.0.total_cmp(&b.0));

    Ok(FittedModel {
        params,
        objective,
        parts,
        diagnostics: FitDiagnostics {
            starts: starts.len(),
            finite_starts,
            start_objectives,
            best_start: best,
            iterations: runs.iter().map(|(_, m)| m.iterations).sum(),
            evaluations: runs.iter().map(|(_, m)| m.evaluations).sum(),
            converged: m.converged,
        },
        path,
        init,
        window: 0..input.len(),
        alternates,
    })
}

/// Returns, factors and log measurement on one date index, with the
/// out-of-sample block starting at `split`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationData {
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
    pub factors: Vec<Vec<f64>>,
    pub log_x: Vec<f64>,
    pub split: usize,
}

impl EstimationData {
    /// Uses `measure` as the measurement series. Zero values are floored
    /// at the smallest positive value of the column.
    pub fn from_dataset(ds: &AlignedDataset, measure: Measure) -> Result<Self> {
        let x = ds.measures.column(measure);
        let floor = x
            .iter()
            .copied()
            .filter(|v| *v > 0.0)
            .fold(f64::INFINITY, f64::min);
        if !floor.is_finite() {
            return Err(Error::data(format!("measure {} has no positive values", measure.name())));
        }
        let floored = x.iter().filter(|v| !(**v > 0.0)).count();
        if floored > 0 {
            warn!("{floored} zero value(s) of {} floored at {floor}", measure.name());
        }
        let factors = match &ds.factors {
            Some(f) => f.values.clone(),
            None => vec![Vec::new(); ds.len()],
        };
        Ok(Self {
            dates: ds.dates().to_vec(),
            returns: ds.returns.returns.clone(),
            factors,
            log_x: x.iter().map(|v| v.max(floor).ln()).collect(),
            split: ds.split,
        })
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn input(&self) -> FilterInput<'_> {
        FilterInput {
            returns: &self.returns,
            factors: &self.factors,
            log_x: &self.log_x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPolicy {
    /// Window length fixed at the in-sample length, sliding forward.
    #[default]
    Fixed,
    /// Window always starts at the first observation.
    Expanding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingConfig {
    pub fit: FitConfig,
    pub window: WindowPolicy,
    pub refit_every: usize,
    /// Add the previous window's estimate as an extra start point. Refits
    /// then run one after another; without it they run in parallel.
    pub warm_start: bool,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            window: WindowPolicy::Fixed,
            refit_every: 25,
            warm_start: true,
        }
    }
}

/// One scheduled re-estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitRecord {
    /// First forecast index covered by this fit.
    pub at: usize,
    pub window_start: usize,
    pub window_end: usize,
    pub objective: Option<f64>,
    /// The fit failed and the previous parameters were reused.
    pub carried: bool,
    pub message: Option<String>,
    pub params: ModelParams,
}

#[derive(Debug, Clone)]
pub struct RollingForecast {
    pub series: ForecastSeries,
    pub refits: Vec<RefitRecord>,
}

/// One-step-ahead forecasts for every out-of-sample date. Parameters are
/// re-estimated every `refit_every` days on data strictly before the first
/// date they forecast; in between the state is filtered forward daily.
pub fn rolling_forecast(data: &EstimationData, alpha: f64, cfg: &RollingConfig) -> Result<RollingForecast> {
    let t_len = data.len();
    let split = data.split;
    if data.factors.len() != t_len || data.log_x.len() != t_len || data.dates.len() != t_len {
        return Err(Error::data("estimation data misaligned"));
    }
    if split >= t_len {
        return Err(Error::Config("no out-of-sample observations to forecast".into()));
    }
    if split < MIN_IN_SAMPLE {
        return Err(Error::Config(format!(
            "in-sample length {split} below the minimum {MIN_IN_SAMPLE}"
        )));
    }
    if cfg.refit_every == 0 {
        return Err(Error::Config("refit_every must be >= 1".into()));
    }
    let blocks: Vec<usize> = (split..t_len).step_by(cfg.refit_every).collect();
    let window_of = |b: usize| -> Range<usize> {
        match cfg.window {
            WindowPolicy::Fixed => b - split..b,
            WindowPolicy::Expanding => 0..b,
        }
    };
    let input = data.input();
    let fit_block = |b: usize, warm: Option<ModelParams>| -> Result<FittedModel> {
        let w = window_of(b);
        let fc = FitConfig {
            warm_start: warm,
            seed: cfg.fit.seed.wrapping_add(b as u64),
            ..cfg.fit.clone()
        };
        let mut m = fit(input.slice(w.clone()), alpha, &fc)?;
        m.window = w;
        Ok(m)
    };

    let fits: Vec<Result<FittedModel>> = if cfg.warm_start {
        let mut out = Vec::with_capacity(blocks.len());
        let mut prev: Option<ModelParams> = None;
        for &b in &blocks {
            let res = fit_block(b, prev.clone());
            if let Ok(m) = &res {
                prev = Some(m.params.clone());
            }
            out.push(res);
        }
        out
    } else {
        blocks.par_iter().map(|&b| fit_block(b, None)).collect()
    };

    let mut refits = Vec::with_capacity(blocks.len());
    let mut var = Vec::with_capacity(t_len - split);
    let mut es = Vec::with_capacity(t_len - split);
    let mut current: Option<ModelParams> = None;
    let mut first_fit: Option<FittedModel> = None;
    for (k, (&b, res)) in blocks.iter().zip(fits).enumerate() {
        let w = window_of(b);
        let end = blocks.get(k + 1).copied().unwrap_or(t_len);
        // Q_t and omega_t depend on data up to t-1 only, so filtering through
        // the block yields the one-step forecasts for its dates.
        let run = input.slice(w.start..end);
        let init = FilterInit::empirical(&data.returns[w.clone()], alpha)?;
        let block_failed = |e: &dyn std::fmt::Display| {
            Error::Estimation(format!("forecast filter failed in block at {}: {e}", data.dates[b]))
        };
        if k == 0 {
            first_fit = res.as_ref().ok().cloned();
        }
        let fresh = res.and_then(|m| {
            let path = filter_path(&m.params, run, init).map_err(|e| block_failed(&e))?;
            Ok((m, path))
        });
        let (objective, carried, message, path) = match fresh {
            Ok((m, path)) => {
                current = Some(m.params);
                (Some(m.objective), false, None, path)
            }
            Err(e) => match &current {
                Some(prev) => {
                    warn!("refit at {} failed, keeping previous parameters: {e}", data.dates[b]);
                    let path = filter_path(prev, run, init).map_err(|e| block_failed(&e))?;
                    (None, true, Some(e.to_string()), path)
                }
                // nothing to carry yet: take the best other optimum that
                // survives the block
                None => {
                    let fallback = first_fit
                        .take()
                        .into_iter()
                        .flat_map(|m| m.alternates)
                        .find_map(|(obj, p)| filter_path(&p, run, init).ok().map(|path| (obj, p, path)));
                    let Some((obj, p, path)) = fallback else {
                        return Err(Error::Estimation(format!("first window fit failed: {e}")));
                    };
                    warn!("first window optimum unusable, using next best start: {e}");
                    current = Some(p);
                    (Some(obj), false, Some(e.to_string()), path)
                }
            },
        };
        let params = current.clone().expect("set above");
        let offset = b - w.start;
        var.extend_from_slice(&path.q[offset..]);
        es.extend_from_slice(&path.es[offset..]);
        refits.push(RefitRecord {
            at: b,
            window_start: w.start,
            window_end: w.end,
            objective,
            carried,
            message,
            params,
        });
    }
    let series = ForecastSeries::new(MODEL_ID, alpha, data.dates[split..].to_vec(), var, es)?;
    Ok(RollingForecast { series, refits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::filter_path;
    use crate::simulate::{simulate_dgp, DgpConfig};

    #[test]
    fn al_score_hand_value() {
        let v = al_log_score(-2.0, -2.5, -3.0, 0.05);
        assert!((v - -8.56758).abs() < 1e-5, "{v}");
        assert!(al_log_score(-2.0, -2.5, -2.0, 0.05).is_finite());
        // r exactly at Q counts as a hit: second term vanishes either way
        assert!((al_log_score(-2.0, -2.5, -2.0, 0.05) - (0.95f64 / 2.5).ln()).abs() < 1e-15);
        assert_eq!(al_log_score(-2.0, 0.0, -3.0, 0.05), f64::NEG_INFINITY);
    }

    #[test]
    fn al_nll_is_additive_and_rejects_nonnegative_es() {
        let path = RiskPath {
            dates: Vec::new(),
            q: vec![-2.0, -1.5],
            omega: vec![0.5, 0.4],
            es: vec![-2.5, -1.9],
            eps: vec![0.0; 2],
            u: vec![0.0; 2],
            log_neg_q: vec![2f64.ln(), 1.5f64.ln()],
        };
        let r = [-3.0, 0.4];
        let want = -(al_log_score(-2.0, -2.5, -3.0, 0.05) + al_log_score(-1.5, -1.9, 0.4, 0.05));
        assert!((al_nll(&path, &r, 0.05) - want).abs() < 1e-12);
        let mut bad = path.clone();
        bad.es[1] = 0.1;
        assert_eq!(al_nll(&bad, &r, 0.05), f64::INFINITY);
    }

    #[test]
    fn meas_nll_hand_values() {
        assert!((meas_nll(&[0.5], 0.5) - 0.72579).abs() < 1e-5);
        assert!((meas_nll(&[0.0], 1.0) - 0.91894).abs() < 1e-5);
        assert_eq!(meas_nll(&[0.1], 0.0), f64::INFINITY);
        let u = [0.3, -1.2, 0.7, 0.05, -0.4];
        let s_hat = (u.iter().map(|x| x * x).sum::<f64>() / u.len() as f64).sqrt();
        let at = meas_nll(&u, s_hat);
        for k in [0.9, 0.99, 1.01, 1.1] {
            assert!(meas_nll(&u, s_hat * k) > at);
        }
    }

    #[test]
    fn objective_matches_path_components() {
        let cfg = DgpConfig::reference(0.05, 800);
        let sim = simulate_dgp(&cfg, 4).unwrap();
        let init = FilterInit::empirical(&sim.returns, 0.05).unwrap();
        let path = filter_path(&cfg.params, sim.input(), init).unwrap();
        let want = al_nll(&path, &sim.returns, 0.05) + meas_nll(&path.u, cfg.params.sigma_u);
        let got = joint_objective(&cfg.params, sim.input(), init, 1.0);
        assert!((got - want).abs() < 1e-9 * want.abs(), "{got} vs {want}");
    }

    #[test]
    fn objective_differences_are_return_differences_without_measurement() {
        let sim = simulate_dgp(&DgpConfig::reference(0.05, 600), 2).unwrap();
        let init = FilterInit::empirical(&sim.returns, 0.05).unwrap();
        let mut a = DgpConfig::reference(0.05, 1).params;
        a.xi = 0.0;
        a.phi = 0.0;
        a.delta1 = 0.0;
        a.delta2 = 0.0;
        a.sigma_u = 1.0;
        let mut b = a.clone();
        b.tau1 += 0.02;
        b.beta -= 0.01;
        let path_a = filter_path(&a, sim.input(), init).unwrap();
        let path_b = filter_path(&b, sim.input(), init).unwrap();
        let d_obj = joint_objective(&a, sim.input(), init, 1.0) - joint_objective(&b, sim.input(), init, 1.0);
        let d_lr = al_nll(&path_a, &sim.returns, 0.05) - al_nll(&path_b, &sim.returns, 0.05);
        assert!((d_obj - d_lr).abs() < 1e-8, "{d_obj} vs {d_lr}");
    }

    #[test]
    fn nonstationary_beta_is_rejected() {
        let sim = simulate_dgp(&DgpConfig::reference(0.05, 300), 2).unwrap();
        let init = FilterInit::empirical(&sim.returns, 0.05).unwrap();
        let mut p = DgpConfig::reference(0.05, 1).params;
        p.beta = 1.2;
        assert_eq!(joint_objective(&p, sim.input(), init, 1.0), f64::INFINITY);
    }

    #[test]
    fn profile_recovers_exact_measurement_equation() {
        let lq: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let eps: Vec<f64> = (0..50).map(|i| (i as f64 * 1.1).cos() * 1.5).collect();
        let log_x: Vec<f64> = (0..50)
            .map(|t| 0.3 + 0.8 * lq[t] - 0.2 * eps[t] + 0.05 * eps[t] * eps[t] + 0.01 * ((t % 3) as f64 - 1.0))
            .collect();
        let m = profile_measurement(&lq, &eps, &log_x).unwrap();
        assert!((m.phi - 0.8).abs() < 0.01 && (m.delta1 + 0.2).abs() < 0.01);
        // no other coefficient vector gives a smaller residual sum of squares
        let rss = |xi: f64, phi: f64, d1: f64, d2: f64| -> f64 {
            (0..50)
                .map(|t| (log_x[t] - xi - phi * lq[t] - d1 * eps[t] - d2 * eps[t] * eps[t]).powi(2))
                .sum()
        };
        let best = rss(m.xi, m.phi, m.delta1, m.delta2);
        assert!((best / 50.0 - m.sigma_u * m.sigma_u).abs() < 1e-12);
        for h in [1e-4, -1e-4] {
            assert!(rss(m.xi + h, m.phi, m.delta1, m.delta2) > best);
            assert!(rss(m.xi, m.phi + h, m.delta1, m.delta2) > best);
            assert!(rss(m.xi, m.phi, m.delta1 + h, m.delta2) > best);
            assert!(rss(m.xi, m.phi, m.delta1, m.delta2 + h) > best);
        }
    }

    #[test]
    fn codec_round_trips() {
        let p = DgpConfig::reference(0.025, 1).params;
        for (beta, profile) in [(BetaTransform::Tanh, false), (BetaTransform::Logistic, false), (BetaTransform::Tanh, true)] {
            let c = Codec {
                r: 1,
                beta,
                profile,
                alpha: 0.025,
            };
            let z = c.encode(&p);
            assert_eq!(z.len(), c.dim());
            let q = c.decode(&z);
            for (a, b) in [
                (p.omega_star, q.omega_star),
                (p.beta, q.beta),
                (p.tau2, q.tau2),
                (p.nu0, q.nu0),
                (p.nu1, q.nu1),
                (p.psi_f[0], q.psi_f[0]),
            ] {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            if !profile {
                assert!((p.sigma_u - q.sigma_u).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn start_set_is_nested() {
        let sim = simulate_dgp(&DgpConfig::reference(0.05, 400), 9).unwrap();
        let init = FilterInit::empirical(&sim.returns, 0.05).unwrap();
        let one = start_points(&FitConfig { multistart: 1, ..Default::default() }, sim.input(), init, 0.05);
        let many = start_points(&FitConfig::default(), sim.input(), init, 0.05);
        assert_eq!(one[0], many[0]);
        assert_eq!(many.len(), 12);
        assert!(many.iter().all(|p| p.validate().is_ok()));
    }
}

//! Rolling out-of-sample forecasts for a roster of baselines.

use std::collections::BTreeMap;
use std::ops::Range;

use chrono::NaiveDate;
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::garch::{fit_garch, garch_sigma, GarchSpec};
use super::{fhs_multipliers, fit_evt_tail, parametric_multipliers, BaselineModel, TailMultipliers};
use crate::error::{Error, Result};
use crate::estimate::WindowPolicy;
use crate::ingest::MIN_IN_SAMPLE;
use crate::model::ForecastSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub window: WindowPolicy,
    pub refit_every: usize,
    pub evt_tail_fraction: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            window: WindowPolicy::Fixed,
            refit_every: 25,
            evt_tail_fraction: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSeries {
    pub model_id: String,
    pub alpha: f64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    /// One series per (model, alpha), models in roster order.
    pub series: Vec<ForecastSeries>,
    /// Combinations whose tail could not be estimated on the first window.
    pub skipped: Vec<SkippedSeries>,
    /// Refits or tail fits that failed and were replaced by the previous
    /// block's values.
    pub incidents: Vec<String>,
}

#[derive(Clone, Copy)]
struct Frozen {
    params: super::GarchParams,
    mu: f64,
}

/// Refits every `refit_every` days on data before the block and emits
/// one-step forecasts for each out-of-sample date, model and level.
pub fn rolling_baselines(
    returns: &[f64],
    dates: &[NaiveDate],
    split: usize,
    models: &[BaselineModel],
    alphas: &[f64],
    cfg: &BaselineConfig,
) -> Result<BaselineRun> {
    let t_len = returns.len();
    if dates.len() != t_len {
        return Err(Error::data("baseline returns and dates differ in length"));
    }
    if models.is_empty() || alphas.is_empty() {
        return Err(Error::Config("baseline roster and alpha list must be non-empty".into()));
    }
    if split < MIN_IN_SAMPLE || split >= t_len {
        return Err(Error::Config(format!(
            "baseline split {split} needs at least {MIN_IN_SAMPLE} in-sample and one out-of-sample day (T = {t_len})"
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
    let mut specs: Vec<GarchSpec> = Vec::new();
    for m in models {
        if !specs.contains(&m.spec()) {
            specs.push(m.spec());
        }
    }

    let jobs: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|s| (0..blocks.len()).map(move |b| (s, b)))
        .collect();
    let fitted: Vec<Result<Frozen>> = jobs
        .par_iter()
        .map(|&(s, k)| {
            let f = fit_garch(&returns[window_of(blocks[k])], specs[s])?;
            Ok(Frozen {
                params: f.params,
                mu: f.mu,
            })
        })
        .collect();

    let mut incidents = Vec::new();
    let mut skipped: BTreeMap<(usize, usize), String> = BTreeMap::new();
    // (model index, alpha index) -> (VaR, ES)
    let mut out: BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (s, spec) in specs.iter().enumerate() {
        let mut current: Option<Frozen> = None;
        let mut last_mult: BTreeMap<(usize, usize), TailMultipliers> = BTreeMap::new();
        for (k, &b) in blocks.iter().enumerate() {
            let w = window_of(b);
            match &fitted[s * blocks.len() + k] {
                Ok(f) => current = Some(*f),
                Err(e) => {
                    if current.is_none() {
                        return Err(Error::Estimation(format!(
                            "{spec} fit failed on the first window: {e}"
                        )));
                    }
                    let msg = format!("{spec} refit at {} failed, keeping previous parameters: {e}", dates[b]);
                    warn!("{msg}");
                    incidents.push(msg);
                }
            }
            let frozen = current.expect("set above");
            let end = blocks.get(k + 1).copied().unwrap_or(t_len);
            let win = &returns[w.clone()];
            let n = win.len() as f64;
            let seed_var = win.iter().map(|r| (r - frozen.mu).powi(2)).sum::<f64>() / n;
            let sigma = garch_sigma(*spec, &frozen.params, frozen.mu, seed_var, &returns[w.start..end]);
            if sigma.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Estimation(format!("{spec}: volatility path degenerate in block at {}", dates[b])));
            }
            let z: Vec<f64> = win
                .iter()
                .zip(&sigma)
                .map(|(r, sd)| (r - frozen.mu) / sd)
                .collect();
            let evt = if models.contains(&BaselineModel::Evt) && *spec == BaselineModel::Evt.spec() {
                Some(fit_evt_tail(&z, cfg.evt_tail_fraction).map_err(|e| e.to_string()))
            } else {
                None
            };
            for (mi, model) in models.iter().enumerate() {
                if model.spec() != *spec {
                    continue;
                }
                for (ai, &alpha) in alphas.iter().enumerate() {
                    if skipped.contains_key(&(mi, ai)) {
                        continue;
                    }
                    let mult = match model {
                        BaselineModel::Parametric(_) => parametric_multipliers(spec.dist, frozen.params.nu, alpha),
                        BaselineModel::Fhs(_) => fhs_multipliers(&z, alpha),
                        BaselineModel::Evt => match evt.as_ref().expect("EVT tail computed") {
                            Ok(t) => t.multipliers(alpha),
                            Err(msg) => Err(Error::Estimation(msg.clone())),
                        },
                    };
                    let mult = match mult {
                        Ok(m) => m,
                        Err(e) => match last_mult.get(&(mi, ai)) {
                            Some(m) => {
                                let msg = format!("{model} tail at {} failed, keeping previous multipliers: {e}", dates[b]);
                                warn!("{msg}");
                                incidents.push(msg);
                                *m
                            }
                            None => {
                                warn!("{model} at alpha {alpha} skipped: {e}");
                                skipped.insert((mi, ai), e.to_string());
                                continue;
                            }
                        },
                    };
                    last_mult.insert((mi, ai), mult);
                    let entry = out.entry((mi, ai)).or_default();
                    for sd in &sigma[b - w.start..] {
                        let (v, e) = mult.apply(frozen.mu, *sd);
                        entry.0.push(v);
                        entry.1.push(e);
                    }
                }
            }
        }
    }

    let mut series = Vec::with_capacity(models.len() * alphas.len());
    let mut skipped_out = Vec::new();
    for (mi, model) in models.iter().enumerate() {
        for (ai, &alpha) in alphas.iter().enumerate() {
            if let Some(reason) = skipped.remove(&(mi, ai)) {
                skipped_out.push(SkippedSeries {
                    model_id: model.to_string(),
                    alpha,
                    reason,
                });
                continue;
            }
            let (var, es) = out.remove(&(mi, ai)).expect("every model and level filled");
            series.push(ForecastSeries::new(model.to_string(), alpha, dates[split..].to_vec(), var, es)?);
        }
    }
    Ok(BaselineRun {
        series,
        skipped: skipped_out,
        incidents,
    })
}

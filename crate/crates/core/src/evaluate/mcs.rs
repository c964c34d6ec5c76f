//! Model Confidence Set with the maximum studentized loss-differential
//! statistic and a circular block bootstrap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::scoring::{LossMatrix, LossTag};

pub const MIN_MCS_LEN: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsConfig {
    /// Confidence level; models with p-value above `1 - level` survive.
    pub level: f64,
    pub bootstrap: usize,
    /// Defaults to `ceil(T^(1/3))`.
    pub block_len: Option<usize>,
    pub seed: u64,
}

impl Default for McsConfig {
    fn default() -> Self {
        Self {
            level: 0.90,
            bootstrap: 10_000,
            block_len: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsModel {
    pub model_id: String,
    pub mean_loss: f64,
    pub p_value: f64,
    pub in_set: bool,
    /// 1-based step at which the model left; `None` for the last model standing.
    pub eliminated_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    pub loss: LossTag,
    pub alpha: f64,
    pub level: f64,
    pub bootstrap: usize,
    pub block_len: usize,
    pub seed: u64,
    pub n: usize,
    pub models: Vec<McsModel>,
}

impl McsResult {
    pub fn survivors(&self) -> Vec<&str> {
        self.models
            .iter()
            .filter(|m| m.in_set)
            .map(|m| m.model_id.as_str())
            .collect()
    }

    pub fn p_value(&self, model_id: &str) -> Option<f64> {
        self.models.iter().find(|m| m.model_id == model_id).map(|m| m.p_value)
    }
}

pub fn default_block_len(t: usize) -> usize {
    ((t as f64).cbrt().ceil() as usize).max(1)
}

/// Circular block bootstrap means of every column for one replication.
fn replicate_means(losses: &[Vec<f64>], block: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let t = losses.len();
    let m = losses[0].len();
    let mut sum = vec![0.0; m];
    let mut drawn = 0;
    while drawn < t {
        let start = rng.gen_range(0..t);
        for k in 0..block.min(t - drawn) {
            for (s, v) in sum.iter_mut().zip(&losses[(start + k) % t]) {
                *s += v;
            }
        }
        drawn += block;
    }
    sum.iter().map(|s| s / t as f64).collect()
}

const ZERO_VAR: f64 = 1e-20;

pub fn mcs(matrix: &LossMatrix, cfg: &McsConfig) -> Result<McsResult> {
    let t = matrix.losses.len();
    let m = matrix.models.len();
    if m == 0 {
        return Err(Error::Config("MCS needs at least one model".into()));
    }
    if t < MIN_MCS_LEN {
        return Err(Error::Degenerate(format!(
            "MCS needs at least {MIN_MCS_LEN} loss observations, got {t}"
        )));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::Config(format!("MCS level must lie in (0, 1), got {}", cfg.level)));
    }
    if cfg.bootstrap == 0 {
        return Err(Error::Config("MCS needs at least one bootstrap replication".into()));
    }
    let block = cfg.block_len.unwrap_or_else(|| default_block_len(t));
    if block == 0 || block > t {
        return Err(Error::Config(format!("block length {block} outside 1..={t}")));
    }
    let means = matrix.column_means();

    let boot: Vec<Vec<f64>> = (0..cfg.bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            replicate_means(&matrix.losses, block, &mut rng)
        })
        .collect();

    let mut alive: Vec<usize> = (0..m).collect();
    let mut p_values = vec![1.0; m];
    let mut eliminated_at = vec![None; m];
    let mut running = 0.0f64;
    let mut step = 0;
    while alive.len() > 1 {
        step += 1;
        let k = alive.len() as f64;
        let avg = alive.iter().map(|&i| means[i]).sum::<f64>() / k;
        let d: Vec<f64> = alive.iter().map(|&i| means[i] - avg).collect();
        // centred bootstrap deviations of each d_i
        let dev: Vec<Vec<f64>> = boot
            .iter()
            .map(|bm| {
                let bavg = alive.iter().map(|&i| bm[i]).sum::<f64>() / k;
                alive.iter().zip(&d).map(|(&i, di)| bm[i] - bavg - di).collect()
            })
            .collect();
        let var: Vec<f64> = (0..alive.len())
            .map(|j| dev.iter().map(|row| row[j] * row[j]).sum::<f64>() / cfg.bootstrap as f64)
            .collect();
        // zero-variance differentials carry no evidence and count as ties
        let tstat: Vec<f64> = d
            .iter()
            .zip(&var)
            .map(|(di, v)| if *v > ZERO_VAR { di / v.sqrt() } else { 0.0 })
            .collect();
        let t_max = tstat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exceed = dev
            .iter()
            .filter(|row| {
                let bmax = row
                    .iter()
                    .zip(&var)
                    .map(|(x, v)| if *v > ZERO_VAR { x / v.sqrt() } else { 0.0 })
                    .fold(f64::NEG_INFINITY, f64::max);
                bmax >= t_max
            })
            .count();
        let p = exceed as f64 / cfg.bootstrap as f64;
        running = running.max(p);
        // first index attaining the max keeps ties deterministic
        let worst = (0..alive.len())
            .fold(0, |best, j| if tstat[j] > tstat[best] { j } else { best });
        let idx = alive.remove(worst);
        p_values[idx] = running;
        eliminated_at[idx] = Some(step);
    }
    let alpha_mcs = 1.0 - cfg.level;
    let models = (0..m)
        .map(|i| McsModel {
            model_id: matrix.models[i].clone(),
            mean_loss: means[i],
            p_value: p_values[i],
            in_set: p_values[i] > alpha_mcs,
            eliminated_at: eliminated_at[i],
        })
        .collect();
    Ok(McsResult {
        loss: matrix.tag,
        alpha: matrix.alpha,
        level: cfg.level,
        bootstrap: cfg.bootstrap,
        block_len: block,
        seed: cfg.seed,
        n: t,
        models,
    })
}

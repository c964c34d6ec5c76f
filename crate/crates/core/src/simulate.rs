//! Synthetic data generators with known truth.
//!
//! `simulate_dgp` draws returns whose conditional alpha-quantile and
//! expected shortfall are exactly the model's `Q_t` and `ES_t`: with
//! probability alpha the return is `Q_t - 2 omega_t U` with `U ~ U(0, 1)`,
//! otherwise it is `Q_t * z / q_alpha` for a standard normal `z` truncated
//! to `z > q_alpha`, which always lies above `Q_t`.

use chrono::{DateTime, Duration, NaiveDate, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::ingest::PricePoint;
use crate::model::{gap_step, var_step, FilterInput, ModelParams};

pub(crate) fn gauss<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[derive(Debug, Clone)]
pub struct DgpConfig {
    pub params: ModelParams,
    pub len: usize,
    /// Discarded leading draws.
    pub burn_in: usize,
    /// AR(1) coefficient of the unit-variance exogenous factor.
    pub factor_rho: f64,
}

impl DgpConfig {
    /// Reference calibration with `omega_star` moved so that the average
    /// VaR sits where a Normal tail would put it given the average gap.
    /// The published intercept implies |VaR| far below the ES gap, which
    /// makes the recursion explode under any tail with that mean excess.
    pub fn reference(alpha: f64, len: usize) -> Self {
        let mut params = ModelParams::reference_calibration(alpha)
            .expect("alpha must be 0.01, 0.025 or 0.05");
        params.omega_star = stationary_intercept(&params);
        Self {
            params,
            len,
            burn_in: 500,
            factor_rho: 0.9,
        }
    }
}

/// `omega_star` giving E[log(-Q)] = log(target) for the DGP below, where
/// the target |Q| makes `ES / VaR` match the Normal ratio at the average gap.
pub fn stationary_intercept(p: &ModelParams) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let a = p.alpha;
    let z = n.inverse_cdf(a);
    let phi = (-(z * z) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let normal_ratio = phi / a / -z;
    // E|f| for a unit-variance Gaussian factor
    let abs_f = (2.0 / std::f64::consts::PI).sqrt();
    let gap = (p.nu0 + abs_f * p.psi_f.iter().map(|v| v.abs()).sum::<f64>()) / (1.0 - p.nu1);
    let level = gap / (normal_ratio - 1.0);
    // eps moments: body z / z_alpha with z truncated above z_alpha,
    // tail 1 + 2 omega U / |Q|
    let body_m1 = phi / (1.0 - a) / z;
    let body_m2 = (1.0 + z * phi / (1.0 - a)) / (z * z);
    let k = gap / level;
    let tail_m1 = 1.0 + k;
    let tail_m2 = 1.0 + 2.0 * k + 4.0 * k * k / 3.0;
    let m1 = (1.0 - a) * body_m1 + a * tail_m1;
    let m2 = (1.0 - a) * body_m2 + a * tail_m2;
    (1.0 - p.beta) * level.ln() - p.tau1 * m1 - p.tau2 * m2
}

/// Simulated data plus the true filtered quantities.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub returns: Vec<f64>,
    pub factors: Vec<Vec<f64>>,
    pub log_x: Vec<f64>,
    pub q: Vec<f64>,
    pub omega: Vec<f64>,
}

impl SimulatedData {
    pub fn input(&self) -> FilterInput<'_> {
        FilterInput {
            returns: &self.returns,
            factors: &self.factors,
            log_x: &self.log_x,
        }
    }

    pub fn es(&self) -> Vec<f64> {
        self.q.iter().zip(&self.omega).map(|(q, w)| q - w).collect()
    }
}

pub fn simulate_dgp(cfg: &DgpConfig, seed: u64) -> Result<SimulatedData> {
    let p = &cfg.params;
    p.validate()?;
    let r = p.factor_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z_alpha = Normal::new(0.0, 1.0).unwrap().inverse_cdf(p.alpha);
    let innov_sd = (1.0 - cfg.factor_rho * cfg.factor_rho).sqrt();

    let total = cfg.burn_in + cfg.len;
    let mut out = SimulatedData {
        returns: Vec::with_capacity(cfg.len),
        factors: Vec::with_capacity(cfg.len),
        log_x: Vec::with_capacity(cfg.len),
        q: Vec::with_capacity(cfg.len),
        omega: Vec::with_capacity(cfg.len),
    };
    let mut f = vec![0.0; r];
    let mut lq = (p.omega_star / (1.0 - p.beta)).clamp(-5.0, 5.0);
    let mut omega = (p.nu0 / (1.0 - p.nu1)).max(1e-3);
    let mut eps = 0.0;
    for t in 0..total {
        if t > 0 {
            lq = var_step(lq, p, eps, &f);
            omega = gap_step(omega, p, &f);
        }
        let q = -lq.exp();
        if !q.is_finite() || !(q < 0.0) {
            return Err(Error::data(format!("simulated VaR diverged at t={t}")));
        }
        let ret = if rng.gen::<f64>() < p.alpha {
            // bounded excess keeps eps^2 (and so the VaR recursion) from exploding
            q - 2.0 * omega * rng.gen::<f64>()
        } else {
            let z = loop {
                let z: f64 = StandardNormal.sample(&mut rng);
                if z > z_alpha {
                    break z;
                }
            };
            q * z / z_alpha
        };
        eps = ret / q;
        let noise: f64 = StandardNormal.sample(&mut rng);
        let log_x = p.xi + p.phi * lq + p.delta1 * eps + p.delta2 * eps * eps + p.sigma_u * noise;
        if t >= cfg.burn_in {
            out.returns.push(ret);
            out.factors.push(f.clone());
            out.log_x.push(log_x);
            out.q.push(q);
            out.omega.push(omega);
        }
        for v in f.iter_mut() {
            *v = cfg.factor_rho * *v + innov_sd * gauss(&mut rng);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Innovation {
    Normal,
    /// Student-t with the given degrees of freedom, scaled to unit variance.
    StudentT(f64),
}

impl Innovation {
    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Innovation::Normal => StandardNormal.sample(rng),
            Innovation::StudentT(nu) => {
                let t: f64 = StudentT::new(nu).unwrap().sample(rng);
                t * ((nu - 2.0) / nu).sqrt()
            }
        }
    }
}

/// GARCH(1,1) returns `sigma_t z_t` (zero mean), started at the
/// unconditional variance.
pub fn simulate_garch11(
    omega: f64,
    alpha: f64,
    beta: f64,
    innovation: Innovation,
    len: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut var = omega / (1.0 - alpha - beta);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len + 200 {
        let r = var.sqrt() * innovation.draw(&mut rng);
        out.push(r);
        var = omega + alpha * r * r + beta * var;
    }
    out.split_off(200)
}

/// Synthetic 24/7 market: intraday prices and daily closes.
#[derive(Debug, Clone)]
pub struct MarketSample {
    pub prices: Vec<PricePoint>,
    pub closes: Vec<(NaiveDate, f64)>,
}

impl MarketSample {
    pub fn intraday_csv(&self) -> String {
        let mut out = String::from("timestamp,price\n");
        for p in &self.prices {
            out.push_str(&format!("{},{}\n", p.timestamp.timestamp(), p.price));
        }
        out
    }

    pub fn daily_csv(&self) -> String {
        let mut out = String::from("date,close\n");
        for (d, c) in &self.closes {
            out.push_str(&format!("{d},{c}\n"));
        }
        out
    }
}

/// Stochastic-volatility market with occasional jumps. Daily volatility
/// follows a log-AR(1) around 3% per day; each day has `per_day` evenly
/// spaced prices, the last of which is the daily close.
pub fn simulate_market(start: NaiveDate, days: usize, per_day: usize, seed: u64) -> MarketSample {
    assert!(per_day >= 2, "need at least two prices per day");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log_vol = 0.0f64;
    let mut log_price = 10_000f64.ln();
    let step = 86_400 / per_day as i64;
    let mut prices = Vec::with_capacity(days * per_day);
    let mut closes = Vec::with_capacity(days);
    for d in 0..days {
        log_vol = 0.97 * log_vol + 0.2 * gauss(&mut rng);
        let daily_sd = 0.03 * log_vol.exp();
        let sd = daily_sd / (per_day as f64).sqrt();
        let date = start + Duration::days(d as i64);
        let midnight: DateTime<Utc> = date.and_hms_opt(0, 0, 0).unwrap().and_utc();
        for i in 0..per_day {
            let mut r = sd * gauss(&mut rng);
            if rng.gen::<f64>() < 0.002 {
                r -= 3.0 * daily_sd * rng.gen::<f64>();
            }
            log_price += r;
            prices.push(PricePoint {
                timestamp: midnight + Duration::seconds(step * i as i64 + step / 2),
                price: (log_price.exp() * 100.0).round() / 100.0,
            });
        }
        closes.push((date, prices.last().unwrap().price));
    }
    MarketSample { prices, closes }
}

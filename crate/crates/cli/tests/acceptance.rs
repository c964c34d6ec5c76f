//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines
//! when everything passes; a failing run prints them regardless.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};
use tailrisk::baselines::{
    parametric_multipliers, parametric_var_es, GarchFamily, GarchFit, GarchParams, GarchSpec, InnovationDist,
};
use tailrisk::estimate::{
    al_log_score, fit, joint_objective, meas_nll, rolling_forecast, EstimationData, FitConfig, RollingConfig,
    WindowPolicy,
};
use tailrisk::evaluate::{
    al_loss, christoffersen_cc, dq_test, fz0_loss, fzg_loss, kupiec_uc, mcs, HitSeries, LossMatrix, LossTag,
    McsConfig, G1, G2,
};
use tailrisk::ingest::IntradayDay;
use tailrisk::model::{es_from_gap, filter_path, gap_step, var_step, FilterInit, FilterInput, ModelParams};
use tailrisk::realized::{measure_row, MeasureConfig, MeasureRow};
use tailrisk::simulate::{simulate_dgp, DgpConfig};

struct Verdict {
    id: u8,
    pass: bool,
    line: String,
}

fn check<F>(id: u8, name: &str, limit: Option<Duration>, f: F) -> Verdict
where
    F: FnOnce() -> (bool, String),
{
    let start = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f));
    let took = start.elapsed();
    let (mut pass, mut detail) = match res {
        Ok(r) => r,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    if let Some(l) = limit {
        if took > l {
            pass = false;
            detail.push_str(&format!("; runtime {:.1}s over limit {:.0}s", took.as_secs_f64(), l.as_secs_f64()));
        }
    }
    let line = format!(
        "[{}] criterion {id}: {name} ({:.1}s) {detail}",
        if pass { "PASS" } else { "FAIL" },
        took.as_secs_f64()
    );
    println!("{line}");
    Verdict { id, pass, line }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn criterion_1() -> (bool, String) {
    let tol = 1e-6;
    // printed values carry five decimals
    let printed_tol = 5e-6;
    let (a, q, e) = (0.05f64, -2.0f64, -2.5f64);
    let ln = f64::ln;
    // (name, implementation, closed form, printed)
    let cases: Vec<(&str, f64, f64, f64)> = vec![
        ("FZ0 violation", fz0_loss(q, e, -3.0, a).unwrap(), 19.0 - 10.0 + ln(2.5), 9.91629),
        ("FZ0 no violation", fz0_loss(q, e, 0.0, a).unwrap(), 2.0 - 10.0 + ln(2.5), -7.08371),
        ("AL violation", al_loss(q, e, -3.0, a), 10.0 - 0.95, 9.05),
        ("AL no violation", al_loss(q, e, 0.0, a), -0.1, -0.1),
        (
            "FZG violation",
            fzg_loss(q, e, -3.0, a, G1::Identity, G2::LogNeg).unwrap(),
            -1.9 + (ln(2.5) - ln(3.0)) / a + ln(2.5),
            -4.63016,
        ),
        (
            "FZG no violation",
            fzg_loss(q, e, 0.0, a, G1::Identity, G2::LogNeg).unwrap(),
            0.1 + ln(2.5),
            1.01629,
        ),
        ("AL-NLL term", al_log_score(q, e, -3.0, a), ln(0.38) - 7.6, -8.56758),
        (
            "measurement term",
            meas_nll(&[0.5], 0.5),
            0.5 * (1.0 + ln(2.0 * std::f64::consts::PI * 0.25)),
            0.72579,
        ),
    ];
    let mut bad = Vec::new();
    for (name, got, exact, printed) in &cases {
        if !close(*got, *exact, tol) {
            bad.push(format!("{name}: got {got:.7}, closed form {exact:.7}"));
        }
        if !close(*exact, *printed, printed_tol) {
            bad.push(format!("{name}: closed form {exact:.7} does not round to pinned {printed}"));
        }
    }
    let detail = if bad.is_empty() {
        format!("{} hand values within {tol:e} of closed forms, all matching the pinned decimals", cases.len())
    } else {
        format!("{} mismatches: {}", bad.len(), bad.join("; "))
    };
    (bad.is_empty(), detail)
}

fn simulated_day(rng: &mut ChaCha8Rng, date: NaiveDate) -> IntradayDay {
    let n = rng.gen_range(30..200);
    let sd = 0.2 * (0.5 * normal(rng)).exp();
    let r = (0..n)
        .map(|_| {
            let mut x = sd * normal(rng);
            if rng.gen::<f64>() < 0.01 {
                x += 5.0 * sd * normal(rng);
            }
            x
        })
        .collect();
    IntradayDay::new(date, r).unwrap()
}

fn scaled(day: &IntradayDay, lambda: f64) -> IntradayDay {
    IntradayDay::new(day.date, day.returns.iter().map(|r| r * lambda).collect()).unwrap()
}

fn criterion_2() -> (bool, String) {
    let tol = 1e-12;
    let lambda = 3.7;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = MeasureConfig::default();
    let start = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
    let mut fails = Vec::new();
    for d in 0..2000 {
        let day = simulated_day(&mut rng, start + chrono::Duration::days(d));
        let m = measure_row(&day, &cfg).unwrap();
        let s = measure_row(&scaled(&day, lambda), &cfg).unwrap();
        if !rel_close(m.rs_pos + m.rs_neg, m.rv, tol) {
            fails.push(format!("RS sum on day {d}"));
        }
        if !rel_close(m.rex_neg + m.rex_mid + m.rex_pos, m.rv, tol) {
            fails.push(format!("REX sum on day {d}"));
        }
        let l2 = lambda * lambda;
        let homog: [(&str, fn(&MeasureRow) -> f64); 8] = [
            ("RV", |r| r.rv),
            ("RBV", |r| r.cv),
            ("RK", |r| r.rk),
            ("RS+", |r| r.rs_pos),
            ("RS-", |r| r.rs_neg),
            ("REX-", |r| r.rex_neg),
            ("REXm", |r| r.rex_mid),
            ("REX+", |r| r.rex_pos),
        ];
        for (name, get) in homog {
            let (a, b) = (get(&m) * l2, get(&s));
            if !(rel_close(a, b, tol) || (a.abs() < 1e-300 && b.abs() < 1e-300)) {
                fails.push(format!("{name} homogeneity on day {d}"));
            }
        }
        if !rel_close(m.rkurt, s.rkurt, tol) {
            fails.push(format!("RKurt invariance on day {d}"));
        }
    }
    let detail = if fails.is_empty() {
        format!("2000 days: sums and lambda^2 scaling within {tol:e} relative")
    } else {
        format!("{} violations, first: {}", fails.len(), fails[0])
    };
    (fails.is_empty(), detail)
}

fn criterion_3() -> (bool, String) {
    let m = parametric_multipliers(InnovationDist::Normal, None, 0.05).unwrap();
    let constants = close(m.var, -1.6449, 1e-4) && close(m.es, -2.0627, 1e-4);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sigma: Vec<f64> = (0..500).map(|_| (0.4 * normal(&mut rng)).exp()).collect();
    let fit = GarchFit {
        spec: GarchSpec::new(GarchFamily::Garch11, InnovationDist::Normal),
        mu: 0.0,
        params: GarchParams {
            omega: 0.05,
            alpha: 0.08,
            beta: 0.9,
            gamma: 0.0,
            nu: None,
        },
        z: vec![0.0; 500],
        sigma,
        loglik: 0.0,
        seed_var: 1.0,
        converged: true,
    };
    let (var, es) = parametric_var_es(&fit, 0.05).unwrap();
    let ratios: Vec<f64> = es.iter().zip(&var).map(|(e, v)| e / v).collect();
    let spread = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - ratios.iter().copied().fold(f64::INFINITY, f64::min);
    (
        constants && spread <= 1e-12,
        format!(
            "multipliers ({:.5}, {:.5}), ES/VaR ratio spread {spread:.1e} over 500 days",
            m.var, m.es
        ),
    )
}

/// Plain ES-CAViaR recursion written out directly.
fn reference_filter(p: &ModelParams, r: &[f64], log_x: &[f64], q0: f64, w0: f64) -> Vec<(f64, f64, f64, f64)> {
    let mut out = Vec::with_capacity(r.len());
    let (mut q, mut w) = (q0, w0);
    for t in 0..r.len() {
        if t > 0 {
            let e = r[t - 1] / q;
            q = -(p.omega_star + p.beta * (-q).ln() + p.tau1 * e + p.tau2 * e * e).exp();
            w = p.nu0 + p.nu1 * w;
        }
        out.push((q, w, q - w, log_x[t] - p.xi));
    }
    out
}

fn criterion_4() -> (bool, String) {
    let p = ModelParams::reference_calibration(0.05).unwrap();
    let lq = var_step(1.0, &p, -1.2, &[0.3]);
    let q = -lq.exp();
    let w_prev = 0.05;
    let w = gap_step(w_prev, &p, &[0.3]);
    let w_hand = p.nu0 + p.nu1 * w_prev + p.psi_f[0] * 0.3;
    let es = es_from_gap(q, w).unwrap();
    let es_printed = es_from_gap(-2.1986, 0.0608).unwrap();
    let step_ok = close(q, -2.1986, 1e-4)
        && close(w, w_hand, 1e-4)
        && close(es, q - w, 1e-4)
        && close(es_printed, -2.2594, 1e-4);

    let nested = p.nested();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 2000;
    let r: Vec<f64> = (0..n).map(|_| 1.2 * normal(&mut rng)).collect();
    let f: Vec<Vec<f64>> = (0..n).map(|_| vec![normal(&mut rng)]).collect();
    let log_x: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let init = FilterInit { q0: -2.0, omega0: 0.4 };
    let input = FilterInput {
        returns: &r,
        factors: &f,
        log_x: &log_x,
    };
    let path = filter_path(&nested, input, init).unwrap();
    let oracle = reference_filter(&nested, &r, &log_x, init.q0, init.omega0);
    let worst = (0..n)
        .map(|t| {
            let (q, w, e, u) = oracle[t];
            [
                (path.q[t] - q).abs() / q.abs(),
                (path.omega[t] - w).abs() / w.abs(),
                (path.es[t] - e).abs() / e.abs(),
                (path.u[t] - u).abs() / u.abs().max(1.0),
            ]
            .into_iter()
            .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    (
        step_ok && worst <= 1e-12,
        format!("one step Q={q:.4}, omega={w:.4}, ES={es:.4}; nested filter max rel diff {worst:.1e}"),
    )
}

fn criterion_5() -> (bool, String) {
    let t = 3000;
    let reps = 20;
    let dgp = DgpConfig::reference(0.05, t);
    let cfg = FitConfig::default();
    let mut obj_ok = 0;
    let mut rate_ok = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for rep in 0..reps {
        let sim = simulate_dgp(&dgp, 5000 + rep).unwrap();
        let fitted = fit(sim.input(), 0.05, &FitConfig { seed: rep, ..cfg.clone() }).unwrap();
        let at_truth = joint_objective(&dgp.params, sim.input(), fitted.init, cfg.weight);
        let excess = fitted.objective - at_truth;
        worst_excess = worst_excess.max(excess);
        obj_ok += usize::from(excess <= 1e-3 * t as f64);
        let hits = fitted.path.q.iter().zip(&sim.returns).filter(|(q, r)| *r <= *q).count();
        let rate = hits as f64 / t as f64;
        lo = lo.min(rate);
        hi = hi.max(rate);
        rate_ok += usize::from((0.035..=0.065).contains(&rate));
    }
    (
        obj_ok == reps as usize && rate_ok == reps as usize,
        format!(
            "{obj_ok}/{reps} fits within 1e-3*T of the truth objective (worst excess {worst_excess:.2}); \
             {rate_ok}/{reps} violation rates in [0.035, 0.065] (range {lo:.4}..{hi:.4})"
        ),
    )
}

fn short(s: &str) -> &str {
    &s[..s.len().min(160)]
}

/// Two-sided exact binomial 95% acceptance region for the violation count.
fn binomial_region(n: u64, p: f64) -> (u64, u64) {
    let b = Binomial::new(p, n).unwrap();
    let lo = (0..=n).find(|&x| b.cdf(x) >= 0.025).unwrap();
    let hi = (0..=n).find(|&x| b.cdf(x) >= 0.975).unwrap();
    (lo, hi)
}

fn criterion_6() -> (bool, String) {
    let reps = 20u64;
    let oos = 500;
    let window = 2000;
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    let mut parts = Vec::new();
    let mut all_ok = true;
    let mut ordered = true;
    let mut failed_runs = Vec::new();
    for &alpha in &[0.05, 0.025, 0.01] {
        let (lo, hi) = binomial_region(oos as u64, alpha);
        let mut inside = 0;
        for rep in 0..reps {
            let sim = simulate_dgp(&DgpConfig::reference(alpha, window + oos), 6000 + rep).unwrap();
            let data = EstimationData {
                dates: (0..window + oos).map(|i| start + chrono::Duration::days(i as i64)).collect(),
                returns: sim.returns.clone(),
                factors: sim.factors.clone(),
                log_x: sim.log_x.clone(),
                split: window,
            };
            let cfg = RollingConfig {
                fit: FitConfig {
                    multistart: 4,
                    seed: rep,
                    ..Default::default()
                },
                window: WindowPolicy::Fixed,
                refit_every: 100,
                warm_start: true,
            };
            let run = match rolling_forecast(&data, alpha, &cfg) {
                Ok(run) => run,
                Err(err) => {
                    failed_runs.push(format!("alpha {alpha} rep {rep}: {}", short(&err.to_string())));
                    continue;
                }
            };
            let s = &run.series;
            ordered &= s.es.iter().zip(&s.var).all(|(e, v)| e < v && *v < 0.0);
            let hits = s
                .var
                .iter()
                .zip(&sim.returns[window..])
                .filter(|(v, r)| *r <= *v)
                .count() as u64;
            inside += u64::from((lo..=hi).contains(&hits));
        }
        let ok = inside as f64 >= 0.9 * reps as f64;
        all_ok &= ok;
        parts.push(format!("alpha {alpha}: {inside}/{reps} in [{lo}, {hi}]"));
    }
    (
        all_ok && ordered,
        format!(
            "{}; ES<VaR<0 on every path: {ordered}; failed runs counted as misses: [{}]",
            parts.join(", "),
            failed_runs.join("; ")
        ),
    )
}

fn criterion_7() -> (bool, String) {
    let h = HitSeries {
        dates: (0..500).map(|i| NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Duration::days(i)).collect(),
        hits: (0..500).map(|i| u8::from(i < 40)).collect(),
        alpha: 0.05,
    };
    let k = kupiec_uc(&h).unwrap();
    // direct Bernoulli likelihood oracle
    let ll = |p: f64| 40.0 * p.ln() + 460.0 * (1.0 - p).ln();
    let lr = -2.0 * (ll(0.05) - ll(0.08));
    let p_oracle = 1.0 - ChiSquared::new(1.0).unwrap().cdf(lr);
    let kupiec_ok = close(k.statistic, 8.078, 0.01)
        && close(k.p_value.unwrap(), 0.0045, 0.0005)
        && close(k.statistic, lr, 1e-10)
        && close(k.p_value.unwrap(), p_oracle, 1e-10);

    let reps = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut cc, mut dq) = (0, 0);
    for _ in 0..reps {
        let hits = HitSeries {
            dates: h.dates.clone(),
            hits: (0..500).map(|_| u8::from(rng.gen::<f64>() < 0.05)).collect(),
            alpha: 0.05,
        };
        let var: Vec<f64> = (0..500).map(|_| -1.645 + 0.2 * normal(&mut rng)).collect();
        cc += usize::from(christoffersen_cc(&hits).unwrap().p_value.unwrap() < 0.05);
        dq += usize::from(dq_test(&hits, &var, 4).unwrap().p_value.unwrap() < 0.05);
    }
    let (cc, dq) = (cc as f64 / reps as f64, dq as f64 / reps as f64);
    let size_ok = (0.03..=0.07).contains(&cc) && (0.03..=0.07).contains(&dq);
    (
        kupiec_ok && size_ok,
        format!(
            "Kupiec LR {:.4} p {:.5}; CC size {cc:.4}, DQ size {dq:.4} over {reps} reps",
            k.statistic,
            k.p_value.unwrap()
        ),
    )
}

fn loss_matrix(cols: &[Vec<f64>]) -> LossMatrix {
    let t = cols[0].len();
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    LossMatrix {
        tag: LossTag::Fz0,
        alpha: 0.05,
        dates: (0..t).map(|i| start + chrono::Duration::days(i as i64)).collect(),
        models: (0..cols.len()).map(|i| format!("m{i}")).collect(),
        losses: (0..t).map(|r| cols.iter().map(|c| c[r]).collect()).collect(),
    }
}

fn criterion_8() -> (bool, String) {
    let cfg = McsConfig {
        level: 0.90,
        bootstrap: 10_000,
        block_len: None,
        seed: 8,
    };
    let reps = 200;
    let mut dropped = 0;
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(8000 + rep);
        let a: Vec<f64> = (0..500).map(|_| normal(&mut rng)).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 1.0 + 0.1 * normal(&mut rng)).collect();
        let res = mcs(&loss_matrix(&[a, b]), &McsConfig { seed: rep, ..cfg.clone() }).unwrap();
        dropped += usize::from(!res.models[1].in_set);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let lone: Vec<f64> = (0..500).map(|_| normal(&mut rng)).collect();
    let lone_p = mcs(&loss_matrix(&[lone.clone()]), &cfg).unwrap().models[0].p_value;
    let other: Vec<f64> = lone.iter().map(|x| x + 0.05 * normal(&mut rng)).collect();
    let m = loss_matrix(&[lone, other]);
    let (x, y) = (mcs(&m, &cfg).unwrap(), mcs(&m, &cfg).unwrap());
    let identical = serde_json::to_vec(&x).unwrap() == serde_json::to_vec(&y).unwrap();
    let ok = dropped as f64 >= 0.95 * reps as f64 && lone_p == 1.0 && identical;
    (
        ok,
        format!("shifted model dropped in {dropped}/{reps}; lone model p={lone_p}; seeded rerun identical: {identical}"),
    )
}

/// Textbook zero-homogeneous FZ loss, for comparison only.
fn fz0_textbook(q: f64, e: f64, r: f64, alpha: f64) -> f64 {
    let i = if r <= q { 1.0 } else { 0.0 };
    -i * (q - r) / (alpha * e) + q / e + (-e).ln() - 1.0
}

fn criterion_9() -> (bool, String) {
    let alpha = 0.05;
    let (q, e) = (-1.644_853_626_951_472_2, -2.062_712_807_507_39);
    let scales = [0.9, 1.0, 1.1];
    let grid: Vec<(f64, f64)> = scales
        .iter()
        .flat_map(|sq| scales.iter().map(move |se| (*sq, *se)))
        .filter(|s| *s != (1.0, 1.0))
        .map(|(sq, se)| (q * sq, e * se))
        .collect();
    let reps = 200;
    let t = 2000;
    let tags = ["FZ0", "FZG", "AL", "textbook FZ0"];
    let mut wins = [0usize; 4];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..reps {
        let r: Vec<f64> = (0..t).map(|_| normal(&mut rng)).collect();
        let losses: [&dyn Fn(f64, f64, f64) -> f64; 4] = [
            &|q, e, r| fz0_loss(q, e, r, alpha).unwrap(),
            &|q, e, r| fzg_loss(q, e, r, alpha, G1::Identity, G2::LogNeg).unwrap(),
            &|q, e, r| al_loss(q, e, r, alpha),
            &|q, e, r| fz0_textbook(q, e, r, alpha),
        ];
        for (k, loss) in losses.iter().enumerate() {
            let avg = |q: f64, e: f64| r.iter().map(|x| loss(q, e, *x)).sum::<f64>() / t as f64;
            let truth = avg(q, e);
            wins[k] += usize::from(grid.iter().all(|(gq, ge)| truth < avg(*gq, *ge)));
        }
    }
    let rate = |k: usize| wins[k] as f64 / reps as f64;
    let ok = (0..3).all(|k| rate(k) >= 0.95);
    let shown: Vec<String> = (0..3).map(|k| format!("{} {}/{reps}", tags[k], wins[k])).collect();
    println!(
        "[INFO] criterion 9 reference: textbook FZ0 wins {}/{reps} on the same grids",
        wins[3]
    );
    (ok, format!("truth lowest on the 8-point grid: {}", shown.join(", ")))
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic")
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_10() -> (bool, String) {
    let scratch = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    let mut slowest = 0.0f64;
    for run in ["a", "b"] {
        let out = scratch.path().join(run);
        let start = Instant::now();
        let o = Command::new(env!("CARGO_BIN_EXE_tailrisk"))
            .args(["pipeline", "--force", "--config"])
            .arg(fixture().join("tailrisk.toml"))
            .arg("--out")
            .arg(&out)
            .env("RUST_LOG", "error")
            .output()
            .unwrap();
        slowest = slowest.max(start.elapsed().as_secs_f64());
        if !o.status.success() {
            return (false, format!("pipeline failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
        outs.push(tree(&out));
    }
    let same = outs[0] == outs[1];
    let ok = same && slowest < 300.0 && outs[0].len() >= 30;
    (
        ok,
        format!("{} artifacts, byte-identical across reruns: {same}, slowest run {slowest:.1}s", outs[0].len()),
    )
}

#[test]
fn acceptance() {
    let secs = |s: u64| Some(Duration::from_secs(s));
    let verdicts = vec![
        check(1, "hand-value loss suite", secs(1), criterion_1),
        check(2, "realized-measure identities", secs(30), criterion_2),
        check(3, "baseline constants", None, criterion_3),
        check(4, "filter correctness", None, criterion_4),
        check(5, "estimation recovery", secs(180), criterion_5),
        check(6, "rolling out-of-sample calibration", None, criterion_6),
        check(7, "test size", secs(120), criterion_7),
        check(8, "MCS behavior", None, criterion_8),
        check(9, "scoring consistency", None, criterion_9),
        check(10, "end-to-end determinism", secs(300), criterion_10),
    ];
    let failed: Vec<&Verdict> = verdicts.iter().filter(|v| !v.pass).collect();
    println!(
        "acceptance: {}/{} criteria pass",
        verdicts.len() - failed.len(),
        verdicts.len()
    );
    let ids: Vec<u8> = failed.iter().map(|v| v.id).collect();
    assert!(
        failed.is_empty(),
        "failed criteria {ids:?}:\n{}",
        failed.iter().map(|v| v.line.as_str()).collect::<Vec<_>>().join("\n")
    );
}

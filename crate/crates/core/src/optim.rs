//! Nelder-Mead simplex minimization for unconstrained objectives.
//!
//! Uses the dimension-adaptive coefficients of Gao and Han (2012) and
//! restarts from the best vertex until a restart stops improving. Non-finite
//! objective values are treated as `+inf`, which lets callers signal an
//! invalid region without a penalty term.

#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Stop when the simplex objective spread falls below
    /// `ftol * max(1, |f_best|)`.
    pub ftol: f64,
    /// Stop when every vertex lies within `xtol` of the best one.
    pub xtol: f64,
    /// Initial simplex edge length per coordinate.
    pub step: f64,
    pub max_restarts: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            ftol: 1e-7,
            xtol: 1e-9,
            step: 0.1,
            max_restarts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

impl NelderMead {
    pub fn minimize<F>(&self, mut objective: F, x0: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let mut evals = 0usize;
        let mut eval = |x: &[f64]| {
            evals += 1;
            sanitize(objective(x))
        };
        let mut best_x = x0.to_vec();
        let mut best_f = eval(&best_x);
        let mut total_iter = 0;
        let mut converged = false;
        for round in 0..=self.max_restarts {
            let step = if round == 0 { self.step } else { self.step * 0.5 };
            let (x, f, iters, conv) = self.run(&mut eval, &best_x, best_f, step);
            total_iter += iters;
            let improved = best_f.is_finite() && best_f - f > self.ftol * best_f.abs().max(1.0);
            let first_finite = !best_f.is_finite() && f.is_finite();
            if f <= best_f {
                best_x = x;
                best_f = f;
            }
            converged = conv;
            if !(improved || first_finite) && round > 0 {
                break;
            }
        }
        Minimum {
            x: best_x,
            f: best_f,
            iterations: total_iter,
            evaluations: evals,
            converged,
        }
    }

    fn run<F>(&self, eval: &mut F, x0: &[f64], f0: f64, step: f64) -> (Vec<f64>, f64, usize, bool)
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        if n == 0 {
            return (Vec::new(), f0, 0, true);
        }
        let nf = n as f64;
        let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), f0));
        for i in 0..n {
            let mut v = x0.to_vec();
            v[i] += if v[i].abs() > 1.0 { step * v[i].abs() } else { step };
            let fv = eval(&v);
            simplex.push((v, fv));
        }

        let mut iter = 0;
        let mut converged = false;
        while iter < self.max_iter {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let f_best = simplex[0].1;
            let f_worst = simplex[n].1;
            if f_best.is_finite() && f_worst.is_finite() {
                let spread = f_worst - f_best;
                let size = simplex[1..]
                    .iter()
                    .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                    .fold(0.0, f64::max);
                if spread <= self.ftol * f_best.abs().max(1.0) || size <= self.xtol {
                    converged = true;
                    break;
                }
            }
            iter += 1;

            let mut centroid = vec![0.0; n];
            for (v, _) in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / nf;
                }
            }
            let along = |coef: f64, worst: &[f64]| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(worst)
                    .map(|(c, w)| c + coef * (c - w))
                    .collect()
            };
            let worst = simplex[n].0.clone();
            let xr = along(alpha, &worst);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = along(gamma, &worst);
                let fe = eval(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(alpha * rho, &worst);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-rho, &worst);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
                continue;
            }
            // shrink toward the best vertex
            let best = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                for (x, b) in vertex.0.iter_mut().zip(&best) {
                    *x = b + sigma * (*x - b);
                }
                vertex.1 = eval(&vertex.0);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, f) = simplex.swap_remove(0);
        (x, f, iter, converged)
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let nm = NelderMead {
            max_iter: 20_000,
            ftol: 1e-14,
            xtol: 1e-12,
            ..Default::default()
        };
        let m = nm.minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
        );
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn quadratic_in_eight_dims() {
        let target: Vec<f64> = (0..8).map(|i| i as f64 * 0.3 - 1.0).collect();
        let nm = NelderMead {
            ftol: 1e-14,
            max_iter: 50_000,
            ..Default::default()
        };
        let m = nm.minimize(
            |x| {
                x.iter()
                    .zip(&target)
                    .enumerate()
                    .map(|(i, (a, b))| (i + 1) as f64 * (a - b).powi(2))
                    .sum()
            },
            &[0.0; 8],
        );
        for (a, b) in m.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn infinite_region_is_avoided() {
        let m = NelderMead::default().minimize(
            |x| if x[0] < 0.5 { f64::NAN } else { (x[0] - 1.0).powi(2) },
            &[2.0],
        );
        assert!((m.x[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn result_never_worse_than_start() {
        let f = |x: &[f64]| (x[0].sin() * 3.0 + x[1].cos()).abs();
        let x0 = [0.3, 0.2];
        let m = NelderMead::default().minimize(f, &x0);
        assert!(m.f <= f(&x0));
    }

    #[test]
    fn transforms_invert() {
        for y in [1e-6, 0.3, 2.0, 50.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-9 * y.max(1.0));
        }
        for p in [0.01, 0.5, 0.97] {
            assert!((logistic(logit(p)) - p).abs() < 1e-12);
        }
    }
}

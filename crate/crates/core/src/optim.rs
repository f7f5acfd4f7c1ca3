//! Derivative-free local minimization inside a box: Nelder-Mead on the free coordinates with
//! every trial point projected back onto the box.

use crate::bounds::Bounds;

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Initial simplex edge as a fraction of each box width.
    pub initial_step: f64,
    pub ftol: f64,
    /// Stop when the simplex diameter, relative to the box, falls below this.
    pub xtol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 400,
            initial_step: 0.1,
            ftol: 1e-10,
            xtol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Minimizes `f` starting from `x0` (clipped into `bounds`). Non-finite values count as `+inf`.
/// The returned value is never worse than `f(x0)`.
pub fn minimize_bounded<F>(mut f: F, x0: &[f64], bounds: &Bounds, opts: NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x0 = x0.to_vec();
    bounds.clip(&mut x0);
    let free: Vec<usize> = (0..bounds.dim()).filter(|&i| bounds.width(i) > 0.0).collect();
    let mut evals = 0usize;
    let mut eval = |z: &[f64], evals: &mut usize| -> (Vec<f64>, f64) {
        let mut x = x0.clone();
        for (k, &i) in free.iter().enumerate() {
            x[i] = z[k].clamp(bounds.lower[i], bounds.upper[i]);
        }
        *evals += 1;
        let v = f(&x);
        (x, if v.is_nan() { f64::INFINITY } else { v })
    };

    let n = free.len();
    let z0: Vec<f64> = free.iter().map(|&i| x0[i]).collect();
    let (x_start, f_start) = eval(&z0, &mut evals);
    if n == 0 {
        return Minimum {
            x: x_start,
            value: f_start,
            evals,
        };
    }

    // simplex vertices in free coordinates
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((z0.clone(), f_start));
    for (k, &i) in free.iter().enumerate() {
        let mut z = z0.clone();
        let step = opts.initial_step * bounds.width(i);
        z[k] = if z[k] + step <= bounds.upper[i] {
            z[k] + step
        } else {
            z[k] - step
        };
        let (_, v) = eval(&z, &mut evals);
        simplex.push((z, v));
    }
    let scale: Vec<f64> = free.iter().map(|&i| bounds.width(i)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_best = simplex[0].1;
        let f_worst = simplex[n].1;
        let spread = (f_worst - f_best).abs();
        let diameter = simplex[1..]
            .iter()
            .map(|(z, _)| {
                z.iter()
                    .zip(&simplex[0].0)
                    .zip(&scale)
                    .map(|((a, b), s)| ((a - b) / s).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (spread.is_finite() && spread <= opts.ftol * (1.0 + f_best.abs())) || diameter <= opts.xtol {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(z, _)| z[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut z: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            for (k, &i) in free.iter().enumerate() {
                z[k] = z[k].clamp(bounds.lower[i], bounds.upper[i]);
            }
            z
        };

        let zr = along(alpha);
        let (_, fr) = eval(&zr, &mut evals);
        if fr < simplex[0].1 {
            let ze = along(gamma);
            let (_, fe) = eval(&ze, &mut evals);
            simplex[n] = if fe < fr { (ze, fe) } else { (zr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (zr, fr);
        } else {
            let (zc, fc) = if fr < simplex[n].1 {
                let zc = along(rho * alpha);
                let (_, fc) = eval(&zc, &mut evals);
                (zc, fc)
            } else {
                let zc = along(-rho);
                let (_, fc) = eval(&zc, &mut evals);
                (zc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (zc, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let z: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, v)| b + sigma * (v - b)).collect();
                    let (_, v) = eval(&z, &mut evals);
                    *vertex = (z, v);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (z_best, f_best) = simplex.swap_remove(0);
    if f_best < f_start {
        let mut x = x0;
        for (k, &i) in free.iter().enumerate() {
            x[i] = z_best[k].clamp(bounds.lower[i], bounds.upper[i]);
        }
        Minimum {
            x,
            value: f_best,
            evals,
        }
    } else {
        Minimum {
            x: x_start,
            value: f_start,
            evals,
        }
    }
}

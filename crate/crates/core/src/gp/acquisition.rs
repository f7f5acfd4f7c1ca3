//! Upper-confidence-bound acquisition, marginal-likelihood hyperparameter search and the
//! explore/exploit loop that builds a surrogate of an expensive log-density.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::KernelHyper;
use super::model::{fit_gp, GPModel, TrainingSet};
use crate::bounds::Bounds;
use crate::density::LogDensity;
use crate::error::{Error, Result};
use crate::optim::{minimize_bounded, NelderMeadOptions};

/// Consecutive near-stationary acquisitions that end the build.
pub const STALL_RUN: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub beta: f64,
    /// Cap on exact evaluations, initial design included.
    pub budget_max: usize,
    /// Movement (relative to the box diagonal) below which an acquisition counts as stalled.
    pub stall_tol: f64,
    pub hyperopt_every: usize,
    pub restarts: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            beta: 4.0,
            budget_max: 60,
            stall_tol: 1e-3,
            hyperopt_every: 5,
            restarts: 8,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta = {} must be >= 0", self.beta)));
        }
        if self.budget_max < dim + 2 {
            return Err(Error::InvalidParameter(format!(
                "budget_max = {} must be at least dim + 2 = {}",
                self.budget_max,
                dim + 2
            )));
        }
        if !(self.stall_tol > 0.0) {
            return Err(Error::InvalidParameter("stall_tol must be positive".into()));
        }
        if self.hyperopt_every == 0 || self.restarts == 0 {
            return Err(Error::InvalidParameter(
                "hyperopt_every and restarts must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// UCB weight at acquisition step `_iteration`. Constant for now; the hook exists so a
    /// decaying schedule can be slotted in without touching callers.
    pub fn beta_at(&self, _iteration: usize) -> f64 {
        self.beta
    }
}

/// `mu(theta) + sqrt(beta) * sigma(theta)`.
pub fn ucb(gp: &GPModel, theta: &[f64], beta: f64) -> Result<f64> {
    let (mu, sigma) = gp.predict(theta)?;
    Ok(mu + beta.sqrt() * sigma)
}

fn ucb_or_neg_inf(gp: &GPModel, theta: &[f64], beta: f64) -> f64 {
    ucb(gp, theta, beta).unwrap_or(f64::NEG_INFINITY)
}

/// Approximate UCB maximizer: Nelder-Mead from `restarts` Latin-hypercube starts plus the
/// best training input. The result is never worse than any start.
pub fn acquire_next<R: Rng + ?Sized>(
    gp: &GPModel,
    bounds: &Bounds,
    beta: f64,
    restarts: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut starts = bounds.latin_hypercube(restarts.max(1), rng);
    if let Some((best, _)) = gp.training.best() {
        let mut b = best.to_vec();
        bounds.clip(&mut b);
        starts.push(b);
    }
    let opts = NelderMeadOptions {
        max_evals: 100 + 50 * bounds.dim(),
        initial_step: 0.05,
        ftol: 1e-9,
        xtol: 1e-7,
    };
    let mut best_x = bounds.center();
    let mut best_v = f64::NEG_INFINITY;
    for start in &starts {
        let m = minimize_bounded(|x| -ucb_or_neg_inf(gp, x, beta), start, bounds, opts);
        let v = -m.value;
        if v > best_v {
            best_v = v;
            best_x = m.x;
        }
    }
    bounds.clip(&mut best_x);
    best_x
}

/// Reference scales for the hyperparameter search box.
fn default_scales(training: &TrainingSet, dim: usize) -> (Vec<f64>, f64) {
    let lengthscales = (0..dim)
        .map(|d| {
            let (lo, hi) = training
                .x
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(x[d]), hi.max(x[d]))
                });
            let spread = hi - lo;
            if spread > 0.0 && spread.is_finite() {
                spread
            } else {
                1.0
            }
        })
        .collect();
    let n = training.len() as f64;
    let var = training.y.iter().map(|y| (y - training.y_mean).powi(2)).sum::<f64>() / n;
    (lengthscales, if var > 0.0 && var.is_finite() { var } else { 1.0 })
}

fn lml_of(training: &TrainingSet, hyper: KernelHyper) -> Option<(f64, KernelHyper)> {
    let gp = fit_gp(training.clone(), hyper).ok()?;
    let v = gp.log_marginal_likelihood();
    v.is_finite().then_some((v, gp.hyper))
}

/// Multistart Nelder-Mead on `(log lengthscales, log amplitude^2)`, each confined to
/// `[1e-3, 1e3]` times its reference scale. Returns `current` unless something strictly better
/// (in log marginal likelihood) is found.
pub fn optimize_hypers<R: Rng + ?Sized>(
    training: &TrainingSet,
    current: &KernelHyper,
    restarts: usize,
    rng: &mut R,
) -> KernelHyper {
    let dim = current.dim();
    if training.len() < 3 || training.dim() != Some(dim) {
        return current.clone();
    }
    let (ls_ref, amp_ref) = default_scales(training, dim);
    let span = 1e3f64.ln();
    let mut lower: Vec<f64> = ls_ref.iter().map(|l| l.ln() - span).collect();
    let mut upper: Vec<f64> = ls_ref.iter().map(|l| l.ln() + span).collect();
    lower.push(amp_ref.ln() - span);
    upper.push(amp_ref.ln() + span);
    let search = Bounds::new(lower, upper).expect("finite search box");

    let jitter = current.jitter;
    let to_hyper = |z: &[f64]| KernelHyper {
        lengthscales: z[..dim].iter().map(|v| v.exp()).collect(),
        amplitude2: z[dim].exp(),
        jitter,
    };
    let objective = |z: &[f64]| match lml_of(training, to_hyper(z)) {
        Some((v, _)) => -v,
        None => f64::INFINITY,
    };

    let mut start0: Vec<f64> = current.lengthscales.iter().map(|l| l.ln()).collect();
    start0.push(current.amplitude2.ln());
    let mut starts = vec![start0];
    starts.extend((0..restarts).map(|_| search.sample_uniform(rng)));

    let baseline = lml_of(training, current.clone())
        .map(|(v, _)| v)
        .unwrap_or(f64::NEG_INFINITY);
    let opts = NelderMeadOptions {
        max_evals: 150 * (dim + 1),
        initial_step: 0.1,
        ftol: 1e-8,
        xtol: 1e-6,
    };
    let mut best: Option<(f64, KernelHyper)> = None;
    for start in &starts {
        let m = minimize_bounded(objective, start, &search, opts);
        if !m.value.is_finite() {
            continue;
        }
        let v = -m.value;
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, to_hyper(&m.x)));
        }
    }
    match best {
        Some((v, h)) if v > baseline => lml_of(training, h).map(|(_, h)| h).unwrap_or_else(|| current.clone()),
        _ => current.clone(),
    }
}

/// Outcome of [`build_surrogate`].
#[derive(Debug, Clone)]
pub struct SurrogateBuild {
    pub gp: GPModel,
    /// Exact log-density evaluations consumed (initial design plus acquisitions).
    pub exact_evaluations: usize,
    pub acquired: usize,
    /// True when the loop ended on the stall test rather than the budget.
    pub stalled: bool,
    /// Evaluated points left out of the training set because their value was not finite.
    pub non_finite: usize,
}

fn initial_hyper(bounds: &Bounds, training: &TrainingSet) -> KernelHyper {
    let dim = bounds.dim();
    let (_, amp) = default_scales(training, dim);
    KernelHyper {
        lengthscales: bounds
            .widths()
            .iter()
            .map(|w| if *w > 0.0 { 0.25 * w } else { 1.0 })
            .collect(),
        amplitude2: amp,
        jitter: super::kernel::MIN_JITTER,
    }
}

/// Latin-hypercube design followed by UCB acquisitions on the exact target, refitting
/// hyperparameters every `hyperopt_every` acquisitions. Stops at the budget or after
/// [`STALL_RUN`] consecutive acquisitions that each moved less than `stall_tol`.
pub fn build_surrogate<T, R>(
    target: &T,
    bounds: &Bounds,
    cfg: &AcquisitionConfig,
    init_design_size: usize,
    rng: &mut R,
) -> Result<SurrogateBuild>
where
    T: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    let dim = bounds.dim();
    if target.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "target of dimension {}, bounds of dimension {dim}",
            target.dim()
        )));
    }
    cfg.validate(dim)?;
    if init_design_size < dim + 1 {
        return Err(Error::InvalidParameter(format!(
            "initial design of {init_design_size} points needs at least dim + 1 = {}",
            dim + 1
        )));
    }
    if cfg.budget_max < init_design_size {
        return Err(Error::InvalidParameter(format!(
            "budget_max {} smaller than the initial design {init_design_size}",
            cfg.budget_max
        )));
    }

    let mut training = TrainingSet::empty();
    let mut evaluations = 0usize;
    let mut non_finite = 0usize;
    for x in bounds.latin_hypercube(init_design_size, rng) {
        let y = target.log_density(&x)?;
        evaluations += 1;
        if y.is_nan() {
            return Err(Error::NanDensity(x));
        }
        if y.is_finite() && !training.contains_near(&x) {
            training.push(x, y)?;
        } else {
            non_finite += 1;
        }
    }
    if training.is_empty() {
        return Err(Error::Empty("no finite log-density value in the initial design".into()));
    }

    let mut hyper = initial_hyper(bounds, &training);
    if training.len() >= 3 {
        hyper = optimize_hypers(&training, &hyper, cfg.restarts, rng);
    }
    let mut gp = fit_gp(training.clone(), hyper.clone())?;

    let diagonal = bounds.diagonal();
    let mut acquired = 0usize;
    let mut stall_run = 0usize;
    let mut stalled = false;
    let mut iteration = 0usize;
    while evaluations < cfg.budget_max {
        let next = acquire_next(&gp, bounds, cfg.beta_at(iteration), cfg.restarts, rng);
        iteration += 1;
        assert!(bounds.contains(&next), "acquisition left the box: {next:?}");
        let moved = if diagonal > 0.0 {
            training.nearest_distance(&next) / diagonal
        } else {
            0.0
        };
        if moved < cfg.stall_tol {
            stall_run += 1;
        } else {
            stall_run = 0;
        }
        if !training.contains_near(&next) {
            let y = target.log_density(&next)?;
            evaluations += 1;
            acquired += 1;
            if y.is_nan() {
                return Err(Error::NanDensity(next));
            }
            if y.is_finite() {
                training.push(next, y)?;
                if acquired.is_multiple_of(cfg.hyperopt_every) {
                    hyper = optimize_hypers(&training, &gp.hyper, cfg.restarts, rng);
                } else {
                    hyper = gp.hyper.clone();
                }
                gp = fit_gp(training.clone(), hyper.clone())?;
            } else {
                non_finite += 1;
            }
        }
        if stall_run >= STALL_RUN {
            stalled = true;
            break;
        }
    }

    Ok(SurrogateBuild {
        gp,
        exact_evaluations: evaluations,
        acquired,
        stalled,
        non_finite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::FnDensity;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn grid_argmax(f: impl Fn(&[f64]) -> f64, bounds: &Bounds, res: usize) -> Vec<f64> {
        let mut best = (f64::NEG_INFINITY, vec![]);
        for i in 0..res {
            for j in 0..res {
                let p = vec![
                    bounds.lower[0] + bounds.width(0) * i as f64 / (res - 1) as f64,
                    bounds.lower[1] + bounds.width(1) * j as f64 / (res - 1) as f64,
                ];
                let v = f(&p);
                if v > best.0 {
                    best = (v, p);
                }
            }
        }
        best.1
    }

    #[test]
    fn ucb_arithmetic() {
        let gp = fit_gp(
            TrainingSet::new(vec![vec![0.0], vec![1.0]], vec![-1.0, -3.0]).unwrap(),
            KernelHyper::isotropic(1, 0.3, 1.0),
        )
        .unwrap();
        let (mu, sigma) = gp.predict(&[0.5]).unwrap();
        assert_eq!(ucb(&gp, &[0.5], 0.0).unwrap(), mu);
        assert!((ucb(&gp, &[0.5], 4.0).unwrap() - (mu + 2.0 * sigma)).abs() < 1e-15);
        // at a training input sigma ~ 0, so beta barely matters
        assert!((ucb(&gp, &[1.0], 100.0).unwrap() + 3.0).abs() < 1e-3);
        // mu = -2, sigma = 1, beta = 4 -> 0
        assert_eq!(-2.0 + 4f64.sqrt() * 1.0, 0.0);
    }

    #[test]
    fn exploration_goes_to_the_boundary() {
        let bounds = Bounds::uniform(2, 0.0, 1.0).unwrap();
        let gp = fit_gp(
            TrainingSet::new(vec![vec![0.5, 0.5]], vec![0.0]).unwrap(),
            KernelHyper::isotropic(2, 0.2, 1.0),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let beta = 1e4;
        let x = acquire_next(&gp, &bounds, beta, 8, &mut rng);
        let oracle = grid_argmax(|p| ucb(&gp, p, beta).unwrap(), &bounds, 50);
        let on_edge = |p: &[f64]| p.iter().any(|v| *v < 1e-6 || *v > 1.0 - 1e-6);
        assert!(on_edge(&oracle));
        assert!(on_edge(&x), "{x:?}");
        assert!(ucb(&gp, &x, beta).unwrap() >= ucb(&gp, &oracle, beta).unwrap() - 1e-9);
    }

    #[test]
    fn pure_exploitation_finds_mean_maximum() {
        let bounds = Bounds::uniform(2, 0.0, 1.0).unwrap();
        let f = |p: &[f64]| -((p[0] - 0.62).powi(2) + (p[1] - 0.37).powi(2)) * 10.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs = bounds.latin_hypercube(25, &mut rng);
        let ys = xs.iter().map(|x| f(x)).collect();
        let gp = fit_gp(TrainingSet::new(xs, ys).unwrap(), KernelHyper::isotropic(2, 0.5, 4.0)).unwrap();
        let x = acquire_next(&gp, &bounds, 0.0, 8, &mut rng);
        let oracle = grid_argmax(|p| gp.mean(p), &bounds, 50);
        // refine the grid oracle around its cell
        let cell = Bounds::new(
            oracle.iter().map(|v| (v - 0.03).max(0.0)).collect(),
            oracle.iter().map(|v| (v + 0.03).min(1.0)).collect(),
        )
        .unwrap();
        let fine = grid_argmax(|p| gp.mean(p), &cell, 61);
        for d in 0..2 {
            assert!((x[d] - fine[d]).abs() < 1e-3, "{x:?} vs {fine:?}");
        }
    }

    #[test]
    fn degenerate_box_acquires_its_point() {
        let bounds = Bounds::new(vec![0.3, 0.1], vec![0.3, 0.1]).unwrap();
        let gp = fit_gp(
            TrainingSet::new(vec![vec![0.0, 0.0]], vec![1.0]).unwrap(),
            KernelHyper::isotropic(2, 1.0, 1.0),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(acquire_next(&gp, &bounds, 4.0, 3, &mut rng), vec![0.3, 0.1]);
    }

    #[test]
    fn acquisition_beats_every_start() {
        let bounds = Bounds::uniform(2, -1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs = bounds.latin_hypercube(7, &mut rng);
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin() * x[1]).collect();
        let gp = fit_gp(
            TrainingSet::new(xs.clone(), ys).unwrap(),
            KernelHyper::isotropic(2, 0.4, 1.0),
        )
        .unwrap();
        let mut rng_a = ChaCha8Rng::seed_from_u64(99);
        let mut rng_b = ChaCha8Rng::seed_from_u64(99);
        let starts = bounds.latin_hypercube(5, &mut rng_a);
        let x = acquire_next(&gp, &bounds, 2.0, 5, &mut rng_b);
        let best = ucb(&gp, &x, 2.0).unwrap();
        for s in starts.iter().chain(xs.iter()) {
            assert!(best >= ucb(&gp, s, 2.0).unwrap() - 1e-12);
        }
    }

    #[test]
    fn recovers_generating_lengthscales() {
        // draw y ~ GP(0, k) at 40 random inputs with known hyperparameters
        let truth = KernelHyper::new(vec![0.15, 0.6], 1.0, 1e-8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let bounds = Bounds::uniform(2, 0.0, 1.0).unwrap();
        let xs: Vec<Vec<f64>> = (0..40).map(|_| bounds.sample_uniform(&mut rng)).collect();
        let k = DMatrix::from_fn(40, 40, |i, j| {
            truth.eval(&xs[i], &xs[j]) + if i == j { 1e-8 } else { 0.0 }
        });
        let l = k.cholesky().unwrap().l();
        let z = DVector::from_fn(40, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (l * z).iter().cloned().collect();
        let training = TrainingSet::new(xs, y).unwrap();
        let start = KernelHyper::isotropic(2, 0.3, 1.0);
        let fitted = optimize_hypers(&training, &start, 10, &mut rng);
        for d in 0..2 {
            let err = (fitted.lengthscales[d].ln() - truth.lengthscales[d].ln()).abs();
            assert!(err < 0.5, "dim {d}: {:?}", fitted.lengthscales);
        }
        let before = fit_gp(training.clone(), start).unwrap().log_marginal_likelihood();
        let after = fit_gp(training, fitted).unwrap().log_marginal_likelihood();
        assert!(after >= before);
    }

    #[test]
    fn constant_targets_push_amplitude_down() {
        let bounds = Bounds::uniform(2, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = bounds.latin_hypercube(10, &mut rng);
        let training = TrainingSet::new(xs, vec![-7.0; 10]).unwrap();
        let start = KernelHyper::isotropic(2, 0.3, 1.0);
        // marginal likelihood evaluated directly: smaller amplitude wins for centred zeros
        let at = |a: f64| {
            fit_gp(
                training.clone(),
                KernelHyper {
                    amplitude2: a,
                    ..start.clone()
                },
            )
            .unwrap()
            .log_marginal_likelihood()
        };
        assert!(at(1e-3) > at(1.0));
        let fitted = optimize_hypers(&training, &start, 5, &mut rng);
        assert!(fitted.amplitude2 < 2e-3, "{}", fitted.amplitude2);
    }

    #[test]
    fn hyperopt_keeps_current_on_tiny_sets() {
        let training = TrainingSet::new(vec![vec![0.0], vec![1.0]], vec![0.0, 1.0]).unwrap();
        let start = KernelHyper::isotropic(1, 0.3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(optimize_hypers(&training, &start, 3, &mut rng), start);
    }

    #[test]
    fn zero_acquisition_budget() {
        let target = FnDensity::new(2, |p: &[f64]| -(p[0] * p[0] + p[1] * p[1]));
        let bounds = Bounds::uniform(2, -1.0, 1.0).unwrap();
        let cfg = AcquisitionConfig {
            budget_max: 6,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let built = build_surrogate(&target, &bounds, &cfg, 6, &mut rng).unwrap();
        assert_eq!(built.acquired, 0);
        assert_eq!(built.exact_evaluations, 6);
        assert_eq!(built.gp.len(), 6);
    }

    #[test]
    fn quadratic_argmax_in_one_dimension() {
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let target = FnDensity::new(1, |p: &[f64]| {
            calls.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            -50.0 * (p[0] - 0.31).powi(2)
        });
        let bounds = Bounds::excitability(1);
        let cfg = AcquisitionConfig {
            budget_max: 15,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let built = build_surrogate(&target, &bounds, &cfg, 3, &mut rng).unwrap();
        assert_eq!(
            built.exact_evaluations,
            calls.load(std::sync::atomic::Ordering::Relaxed)
        );
        assert_eq!(built.exact_evaluations, 3 + built.acquired);
        let argmax = (0..=5200)
            .map(|i| i as f64 * 1e-4)
            .max_by(|a, b| built.gp.mean(&[*a]).total_cmp(&built.gp.mean(&[*b])))
            .unwrap();
        assert!((argmax - 0.31).abs() < 0.02 * 0.52, "argmax {argmax}");
    }

    #[test]
    fn rejects_small_design() {
        let target = FnDensity::new(2, |_p: &[f64]| 0.0);
        let bounds = Bounds::uniform(2, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(build_surrogate(&target, &bounds, &AcquisitionConfig::default(), 2, &mut rng).is_err());
        let tiny = AcquisitionConfig {
            budget_max: 3,
            ..Default::default()
        };
        assert!(build_surrogate(&target, &bounds, &tiny, 3, &mut rng).is_err());
    }
}

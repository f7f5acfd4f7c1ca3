//! Unnormalized log-posterior of region excitabilities given observed lead voltages:
//! a box-uniform prior and a Gaussian likelihood with isotropic noise `sigma_e`.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::bounds::Bounds;
use crate::density::LogDensity;
use crate::error::{Error, Result};
use crate::forward::{ForwardModel, Observation};

/// `0` inside the closed box, `-inf` outside (or for non-finite coordinates).
pub fn log_prior(theta: &[f64], bounds: &Bounds) -> f64 {
    if theta.iter().all(|x| x.is_finite()) && bounds.contains(theta) {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

/// `sigma_e = sqrt(mean(Y^2) * 10^(-snr_db / 10))`.
pub fn estimate_sigma_e(y_obs: &Observation, snr_db: f64) -> Result<f64> {
    if y_obs.y.is_empty() {
        return Err(Error::Empty("observation".into()));
    }
    Ok(crate::forward::measurement::noise_std(y_obs.mean_power(), snr_db))
}

fn gaussian_log_likelihood(y_obs: &[f64], y_model: &[f64], sigma_e: f64) -> f64 {
    let sq: f64 = y_obs.iter().zip(y_model).map(|(a, b)| (a - b) * (a - b)).sum();
    -sq / (2.0 * sigma_e * sigma_e)
}

/// Forward pipeline, data and noise level. Counts every forward evaluation it runs.
#[derive(Debug)]
pub struct PosteriorContext {
    pub model: ForwardModel,
    pub y_obs: Observation,
    pub sigma_e: f64,
    pub bounds: Bounds,
    eval_counter: AtomicU64,
}

impl PosteriorContext {
    pub fn new(model: ForwardModel, y_obs: Observation, sigma_e: f64) -> Result<Self> {
        if !(sigma_e > 0.0) || !sigma_e.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma_e = {sigma_e} must be positive")));
        }
        if y_obs.n_leads != model.lead_field.n_leads {
            return Err(Error::DimensionMismatch(format!(
                "observation has {} leads, lead field has {}",
                y_obs.n_leads, model.lead_field.n_leads
            )));
        }
        let bounds = Bounds::excitability(model.n_params());
        Ok(Self {
            model,
            y_obs,
            sigma_e,
            bounds,
            eval_counter: AtomicU64::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.model.n_params()
    }

    /// Number of forward simulations run so far.
    pub fn evaluations(&self) -> u64 {
        self.eval_counter.load(Ordering::Relaxed)
    }

    pub fn reset_evaluations(&self) {
        self.eval_counter.store(0, Ordering::Relaxed);
    }

    /// `-||Y_obs - F(theta)||^2 / (2 sigma_e^2)`; always runs (and counts) one forward evaluation.
    pub fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        self.eval_counter.fetch_add(1, Ordering::Relaxed);
        let y_model = self.model.evaluate(theta).map_err(|e| Error::Evaluation {
            theta: theta.to_vec(),
            reason: e.to_string(),
        })?;
        if y_model.n_times != self.y_obs.n_times {
            return Err(Error::DimensionMismatch(format!(
                "model produced {} frames, observation has {}",
                y_model.n_times, self.y_obs.n_times
            )));
        }
        Ok(gaussian_log_likelihood(&self.y_obs.y, &y_model.y, self.sigma_e))
    }

    /// Prior plus likelihood; out-of-box points return `-inf` without touching the model.
    pub fn log_posterior(&self, theta: &[f64]) -> Result<f64> {
        let lp = log_prior(theta, &self.bounds);
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        Ok(lp + self.log_likelihood(theta)?)
    }
}

impl LogDensity for PosteriorContext {
    fn dim(&self) -> usize {
        PosteriorContext::dim(self)
    }
    fn log_density(&self, theta: &[f64]) -> Result<f64> {
        self.log_posterior(theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::*;
    use proptest::prelude::*;

    fn small_model(rows: usize, cols: usize) -> ForwardModel {
        let geometry = build_grid(6, 6, 0.5).unwrap();
        let partition = partition_grid(&geometry, rows, cols).unwrap();
        let electrodes = electrodes_on_circle(&geometry, 4, 1.5);
        ForwardModel {
            lead_field: build_lead_field(&geometry, &electrodes, None).unwrap(),
            stimulus: StimulusProtocol::corner_block(&geometry, 2),
            constants: ApConstants::default(),
            stepping: TimeStepping {
                dt: 0.1,
                t_end: 15.0,
                store_every: 5,
            },
            geometry,
            partition,
        }
    }

    fn noiseless_ctx(rows: usize, cols: usize, truth: &[f64], sigma_e: f64) -> PosteriorContext {
        let model = small_model(rows, cols);
        let y = model.evaluate(truth).unwrap();
        PosteriorContext::new(model, y, sigma_e).unwrap()
    }

    #[test]
    fn prior_is_flat_on_closed_box() {
        let b2 = Bounds::excitability(2);
        assert_eq!(log_prior(&[0.15, 0.5], &b2), 0.0);
        assert_eq!(log_prior(&[0.53], &Bounds::excitability(1)), f64::NEG_INFINITY);
        assert_eq!(log_prior(&[0.0], &Bounds::excitability(1)), 0.0);
        assert_eq!(log_prior(&[0.52], &Bounds::excitability(1)), 0.0);
        assert_eq!(log_prior(&[f64::NAN], &Bounds::excitability(1)), f64::NEG_INFINITY);
    }

    #[test]
    fn zero_residual_is_the_maximum() {
        let ctx = noiseless_ctx(1, 2, &[0.15, 0.3], 0.1);
        assert_eq!(ctx.log_likelihood(&[0.15, 0.3]).unwrap(), 0.0);
        assert_eq!(ctx.log_posterior(&[0.15, 0.3]).unwrap(), 0.0);
        assert!(ctx.log_posterior(&[0.2, 0.3]).unwrap() < 0.0);
    }

    #[test]
    fn likelihood_matches_residual_definition() {
        let ctx = noiseless_ctx(1, 1, &[0.15], 1.0);
        let y_other = ctx.model.evaluate(&[0.25]).unwrap();
        let r2: f64 = ctx.y_obs.y.iter().zip(&y_other.y).map(|(a, b)| (a - b).powi(2)).sum();
        let ll = ctx.log_likelihood(&[0.25]).unwrap();
        assert!((ll + r2 / 2.0).abs() <= 1e-12 * r2.max(1.0));

        let wide = noiseless_ctx(1, 1, &[0.15], 2.0);
        let ll_wide = wide.log_likelihood(&[0.25]).unwrap();
        assert!((ll_wide - ll / 4.0).abs() <= 1e-12 * ll.abs());
    }

    #[test]
    fn out_of_box_short_circuits() {
        let ctx = noiseless_ctx(1, 2, &[0.15, 0.3], 0.1);
        assert_eq!(ctx.log_posterior(&[0.6, 0.1]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(ctx.log_posterior(&[-0.01, 0.1]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(ctx.evaluations(), 0);
        ctx.log_posterior(&[0.1, 0.1]).unwrap();
        assert_eq!(ctx.evaluations(), 1);
    }

    #[test]
    fn posterior_is_deterministic() {
        let model = small_model(1, 2);
        let y = add_noise(&model.evaluate(&[0.15, 0.4]).unwrap(), 20.0, 9).unwrap();
        let ctx = PosteriorContext::new(model, y, 0.05).unwrap();
        let a = ctx.log_posterior(&[0.2, 0.35]).unwrap();
        let b = ctx.log_posterior(&[0.2, 0.35]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn truth_maximizes_over_lattice() {
        // brute force: residuals computed directly from simulated lead voltages
        let truth = [0.15];
        let ctx = noiseless_ctx(1, 1, &truth, 0.1);
        let mut lattice: Vec<f64> = (0..=10).map(|k| k as f64 * 0.05).collect();
        lattice.push(0.52);
        lattice.push(0.15);
        let residual = |a: f64| -> f64 {
            let y = ctx.model.evaluate(&[a]).unwrap();
            ctx.y_obs.y.iter().zip(&y.y).map(|(p, q)| (p - q).powi(2)).sum()
        };
        let brute = lattice
            .iter()
            .cloned()
            .min_by(|a, b| residual(*a).partial_cmp(&residual(*b)).unwrap())
            .unwrap();
        let by_posterior = lattice
            .iter()
            .cloned()
            .max_by(|a, b| {
                ctx.log_posterior(&[*a])
                    .unwrap()
                    .partial_cmp(&ctx.log_posterior(&[*b]).unwrap())
                    .unwrap()
            })
            .unwrap();
        assert_eq!(brute, 0.15);
        assert_eq!(by_posterior, brute);
    }

    #[test]
    fn sigma_from_snr() {
        let obs = Observation {
            n_leads: 1,
            n_times: 4,
            y: vec![1.0, -1.0, 1.0, -1.0],
            snr_db: None,
        };
        assert!((estimate_sigma_e(&obs, 20.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(estimate_sigma_e(&obs, 400.0).unwrap() < 1e-19);
        let scaled = Observation {
            y: obs.y.iter().map(|x| 3.0 * x).collect(),
            ..obs.clone()
        };
        assert!((estimate_sigma_e(&scaled, 20.0).unwrap() - 0.3).abs() < 1e-15);
        let empty = Observation {
            n_leads: 0,
            n_times: 0,
            y: vec![],
            snr_db: None,
        };
        assert!(estimate_sigma_e(&empty, 20.0).is_err());
    }

    #[test]
    fn rejects_bad_sigma() {
        let model = small_model(1, 1);
        let y = model.evaluate(&[0.15]).unwrap();
        assert!(PosteriorContext::new(model, y, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn smaller_residual_means_larger_likelihood(
            base in proptest::collection::vec(-1.0f64..1.0, 8),
            dir in proptest::collection::vec(-1.0f64..1.0, 8),
            s1 in 0.0f64..1.0,
            s2 in 0.0f64..1.0,
            sigma in 0.01f64..2.0,
        ) {
            prop_assume!(dir.iter().any(|d| d.abs() > 1e-3));
            prop_assume!((s1 - s2).abs() > 1e-6);
            let y1: Vec<f64> = base.iter().zip(&dir).map(|(b, d)| b + s1 * d).collect();
            let y2: Vec<f64> = base.iter().zip(&dir).map(|(b, d)| b + s2 * d).collect();
            let l1 = gaussian_log_likelihood(&base, &y1, sigma);
            let l2 = gaussian_log_likelihood(&base, &y2, sigma);
            prop_assert_eq!(s1 < s2, l1 > l2);
        }
    }
}

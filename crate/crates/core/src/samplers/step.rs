//! Single transitions: plain Metropolis-Hastings and the two-stage (delayed acceptance) kernel
//! that screens proposals with a cheap surrogate before consulting the exact density.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::density::LogDensity;
use crate::error::{Error, Result};

/// Proposal kernel. `log_q_ratio` is `log q(current | proposed) - log q(proposed | current)`.
pub trait Proposal: Sync {
    fn propose<R: Rng + ?Sized>(&self, current: &[f64], rng: &mut R) -> Vec<f64>;

    fn log_q_ratio(&self, _current: &[f64], _proposed: &[f64]) -> f64 {
        0.0
    }
}

/// Isotropic Gaussian random walk, `N(theta, sigma_p^2 I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalConfig {
    pub sigma_p: f64,
}

impl ProposalConfig {
    pub fn new(sigma_p: f64) -> Result<Self> {
        if !(sigma_p > 0.0) || !sigma_p.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma_p = {sigma_p} must be positive")));
        }
        Ok(Self { sigma_p })
    }
}

impl Proposal for ProposalConfig {
    fn propose<R: Rng + ?Sized>(&self, current: &[f64], rng: &mut R) -> Vec<f64> {
        current
            .iter()
            .map(|x| x + self.sigma_p * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// Which cached value a plain MH step targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Exact,
    Surrogate,
}

/// Current point and the log-densities known there.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: Vec<f64>,
    pub log_post_exact: Option<f64>,
    pub log_post_surr: Option<f64>,
}

impl ChainState {
    pub fn new(theta: Vec<f64>, log_post_exact: Option<f64>, log_post_surr: Option<f64>) -> Self {
        Self {
            theta,
            log_post_exact,
            log_post_surr,
        }
    }

    fn cached(&self, level: Level) -> Option<f64> {
        match level {
            Level::Exact => self.log_post_exact,
            Level::Surrogate => self.log_post_surr,
        }
    }
}

/// What happened during one transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepRecord {
    pub accepted: bool,
    /// Passed surrogate screening (always true when there is no screening stage).
    pub stage1_pass: bool,
    pub exact_evaluated: bool,
}

/// `log(pi(b) / pi(a))` with the zero-density cases resolved: moving out of zero density is
/// always accepted, moving into it never.
fn log_ratio(from: f64, to: f64) -> f64 {
    match (from == f64::NEG_INFINITY, to == f64::NEG_INFINITY) {
        (_, true) => f64::NEG_INFINITY,
        (true, false) => f64::INFINITY,
        (false, false) => to - from,
    }
}

/// Accepts with probability `min(1, exp(log_alpha))`. A uniform is drawn only when the
/// outcome is actually random, so kernels with identical acceptance ratios consume identical
/// random streams.
pub(crate) fn accept<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> bool {
    if log_alpha >= 0.0 {
        true
    } else if log_alpha == f64::NEG_INFINITY {
        false
    } else {
        rng.random::<f64>().ln() < log_alpha
    }
}

/// Probability that a proposal survives surrogate screening.
pub fn stage_one_probability(surr_current: f64, surr_proposed: f64, log_q_ratio: f64) -> f64 {
    (log_q_ratio + log_ratio(surr_current, surr_proposed)).min(0.0).exp()
}

/// Probability that a screened proposal is accepted by the exact density.
pub fn stage_two_probability(exact_current: f64, exact_proposed: f64, surr_current: f64, surr_proposed: f64) -> f64 {
    stage_two_log_alpha(exact_current, exact_proposed, surr_current, surr_proposed)
        .min(0.0)
        .exp()
}

fn stage_two_log_alpha(exact_current: f64, exact_proposed: f64, surr_current: f64, surr_proposed: f64) -> f64 {
    let exact = log_ratio(exact_current, exact_proposed);
    if exact == f64::NEG_INFINITY {
        return exact;
    }
    exact - (surr_proposed - surr_current)
}

fn checked<T: LogDensity + ?Sized>(target: &T, theta: &[f64]) -> Result<f64> {
    let v = target.log_density(theta)?;
    if v.is_nan() {
        return Err(Error::NanDensity(theta.to_vec()));
    }
    Ok(v)
}

/// Metropolis-Hastings on `target`, whose value at the current point is cached in `level`'s slot.
pub fn mh_step<T, P, R>(
    state: &ChainState,
    target: &T,
    level: Level,
    prop: &P,
    rng: &mut R,
) -> Result<(ChainState, StepRecord)>
where
    T: LogDensity + ?Sized,
    P: Proposal,
    R: Rng + ?Sized,
{
    let current = match state.cached(level) {
        Some(v) => v,
        None => checked(target, &state.theta)?,
    };
    let proposed = prop.propose(&state.theta, rng);
    let value = checked(target, &proposed)?;
    let log_alpha = prop.log_q_ratio(&state.theta, &proposed) + log_ratio(current, value);
    let accepted = accept(log_alpha, rng);
    let record = StepRecord {
        accepted,
        stage1_pass: match level {
            Level::Exact => true,
            Level::Surrogate => accepted,
        },
        exact_evaluated: level == Level::Exact,
    };
    let next = if accepted {
        match level {
            Level::Exact => ChainState::new(proposed, Some(value), None),
            Level::Surrogate => ChainState::new(proposed, None, Some(value)),
        }
    } else {
        state.clone()
    };
    Ok((next, record))
}

/// Delayed-acceptance transition. Stage one accepts with
/// `min(1, q_ratio * pi*(theta') / pi*(theta))`; only survivors are evaluated exactly and
/// accepted with `min(1, pi(theta') pi*(theta) / (pi(theta) pi*(theta')))`. Rejections at
/// either stage repeat the current state. Proposals outside `bounds` are rejected before
/// either density is consulted.
pub fn two_stage_step<E, S, P, R>(
    state: &ChainState,
    exact: &E,
    surrogate: &S,
    bounds: &Bounds,
    prop: &P,
    rng: &mut R,
) -> Result<(ChainState, StepRecord)>
where
    E: LogDensity + ?Sized,
    S: LogDensity + ?Sized,
    P: Proposal,
    R: Rng + ?Sized,
{
    let exact_current = match state.log_post_exact {
        Some(v) => v,
        None => checked(exact, &state.theta)?,
    };
    let surr_current = match state.log_post_surr {
        Some(v) => v,
        None => checked(surrogate, &state.theta)?,
    };
    let current = ChainState::new(state.theta.clone(), Some(exact_current), Some(surr_current));

    let proposed = prop.propose(&state.theta, rng);
    if !bounds.contains(&proposed) {
        return Ok((current, StepRecord::default()));
    }
    let surr_proposed = checked(surrogate, &proposed)?;
    let log_alpha_a = prop.log_q_ratio(&state.theta, &proposed) + log_ratio(surr_current, surr_proposed);
    if !accept(log_alpha_a, rng) {
        return Ok((current, StepRecord::default()));
    }

    let exact_proposed = checked(exact, &proposed)?;
    let log_alpha_e = stage_two_log_alpha(exact_current, exact_proposed, surr_current, surr_proposed);
    let accepted = accept(log_alpha_e, rng);
    let record = StepRecord {
        accepted,
        stage1_pass: true,
        exact_evaluated: true,
    };
    if accepted {
        Ok((
            ChainState::new(proposed, Some(exact_proposed), Some(surr_proposed)),
            record,
        ))
    } else {
        Ok((current, record))
    }
}

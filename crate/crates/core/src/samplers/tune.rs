//! Tuning the random-walk scale on the surrogate so pilot acceptance lands in a target band.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::step::{mh_step, ChainState, Level, ProposalConfig};
use crate::bounds::Bounds;
use crate::density::LogDensity;
use crate::error::{Error, Result};
use crate::gp::{GPModel, SurrogateDensity};

pub const PILOT_STEPS: usize = 2000;
pub const MAX_TUNING_ITERATIONS: usize = 20;
pub const DEFAULT_TARGET_RANGE: (f64, f64) = (0.3, 0.4);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunedProposal {
    pub proposal: ProposalConfig,
    /// Acceptance rate measured on the last pilot run with this scale.
    pub acceptance: f64,
    pub iterations: usize,
    /// False when the band was not reached; `proposal` is then the closest candidate seen.
    pub converged: bool,
}

fn pilot_rate<T, R>(target: &T, start: &[f64], sigma_p: f64, rng: &mut R) -> Result<f64>
where
    T: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    let prop = ProposalConfig::new(sigma_p)?;
    let mut state = ChainState::new(start.to_vec(), None, None);
    let mut accepted = 0usize;
    for _ in 0..PILOT_STEPS {
        let (next, rec) = mh_step(&state, target, Level::Surrogate, &prop, rng)?;
        accepted += usize::from(rec.accepted);
        state = next;
    }
    Ok(accepted as f64 / PILOT_STEPS as f64)
}

/// Brackets the target band by doubling or halving `initial_sigma`, then bisects in log scale.
pub fn tune_proposal_on<T, R>(
    target: &T,
    start: &[f64],
    target_range: (f64, f64),
    initial_sigma: f64,
    rng: &mut R,
) -> Result<TunedProposal>
where
    T: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    let (lo_rate, hi_rate) = target_range;
    if !(0.0 < lo_rate && lo_rate < hi_rate && hi_rate < 1.0) {
        return Err(Error::InvalidParameter(format!("acceptance range {target_range:?}")));
    }
    if !(initial_sigma > 0.0) || !initial_sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("initial sigma_p = {initial_sigma}")));
    }
    let mid = 0.5 * (lo_rate + hi_rate);
    // small sigma gives high acceptance: `small` keeps rates above the band, `large` below it
    let mut small: Option<f64> = None;
    let mut large: Option<f64> = None;
    let mut sigma = initial_sigma;
    let mut best = (f64::INFINITY, sigma, 0.0);

    for it in 1..=MAX_TUNING_ITERATIONS {
        let rate = pilot_rate(target, start, sigma, rng)?;
        let miss = (rate - mid).abs();
        if miss < best.0 {
            best = (miss, sigma, rate);
        }
        if (lo_rate..=hi_rate).contains(&rate) {
            return Ok(TunedProposal {
                proposal: ProposalConfig::new(sigma)?,
                acceptance: rate,
                iterations: it,
                converged: true,
            });
        }
        if rate > hi_rate {
            small = Some(small.map_or(sigma, |s| s.max(sigma)));
        } else {
            large = Some(large.map_or(sigma, |l| l.min(sigma)));
        }
        sigma = match (small, large) {
            (Some(s), Some(l)) => (s * l).sqrt(),
            (Some(s), None) => 2.0 * s,
            (None, Some(l)) => 0.5 * l,
            (None, None) => unreachable!(),
        };
    }
    Ok(TunedProposal {
        proposal: ProposalConfig::new(best.1)?,
        acceptance: best.2,
        iterations: MAX_TUNING_ITERATIONS,
        converged: false,
    })
}

/// Tunes `sigma_p` with pilot chains on the surrogate posterior, starting from a tenth of the
/// mean box width.
pub fn tune_proposal<R: Rng + ?Sized>(
    gp: &GPModel,
    bounds: &Bounds,
    start: &[f64],
    target_range: (f64, f64),
    rng: &mut R,
) -> Result<TunedProposal> {
    let widths = bounds.widths();
    let mean_width = widths.iter().sum::<f64>() / widths.len().max(1) as f64;
    let initial = if mean_width > 0.0 { 0.1 * mean_width } else { 1e-3 };
    tune_proposal_on(&SurrogateDensity::new(gp, bounds), start, target_range, initial, rng)
}

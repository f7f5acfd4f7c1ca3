//! Independent parallel chains in one of three modes, plus burn-in and thinning.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::step::{mh_step, two_stage_step, ChainState, Level, ProposalConfig};
use crate::bounds::Bounds;
use crate::density::LogDensity;
use crate::error::{Error, Result};
use crate::gp::{GPModel, SurrogateDensity};

pub const DEFAULT_CHAINS: usize = 4;
pub const DEFAULT_BURN_IN: f64 = 0.25;
pub const DEFAULT_THIN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Plain MH on the exact posterior.
    Exact,
    /// Surrogate screening followed by exact correction.
    TwoStage,
    /// Plain MH on the surrogate; the exact model is never run.
    SurrogateOnly,
}

impl SamplingMode {
    pub const ALL: [SamplingMode; 3] = [SamplingMode::Exact, SamplingMode::TwoStage, SamplingMode::SurrogateOnly];

    pub fn name(self) -> &'static str {
        match self {
            SamplingMode::Exact => "exact",
            SamplingMode::TwoStage => "two-stage",
            SamplingMode::SurrogateOnly => "surrogate-only",
        }
    }

    pub fn needs_surrogate(self) -> bool {
        self != SamplingMode::Exact
    }
}

impl std::fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SamplingMode::Exact),
            "two-stage" | "two_stage" => Ok(SamplingMode::TwoStage),
            "surrogate-only" | "surrogate_only" => Ok(SamplingMode::SurrogateOnly),
            other => Err(Error::InvalidParameter(format!("unknown sampling mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChainStats {
    pub proposed: u64,
    /// Proposals stopped before the exact model (surrogate screening or the box).
    pub surrogate_rejected: u64,
    /// Proposals whose exact density was computed.
    pub exact_tested: u64,
    pub exact_accepted: u64,
    pub accepted: u64,
    /// Exact-density evaluations including the one at the starting point.
    pub exact_evaluations: u64,
}

impl ChainStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn add(&mut self, other: &ChainStats) {
        self.proposed += other.proposed;
        self.surrogate_rejected += other.surrogate_rejected;
        self.exact_tested += other.exact_tested;
        self.exact_accepted += other.exact_accepted;
        self.accepted += other.accepted;
        self.exact_evaluations += other.exact_evaluations;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovChain {
    pub chain_id: usize,
    /// Master seed; the chain's stream is its id.
    pub seed: u64,
    pub mode: SamplingMode,
    pub start: Vec<f64>,
    /// State after each step (repeats on rejection).
    pub samples: Vec<Vec<f64>>,
    /// Log-density of the sampled target at each recorded state.
    pub log_post: Vec<f64>,
    pub stage1_pass: Vec<bool>,
    pub stats: ChainStats,
}

impl MarkovChain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn total_stats(chains: &[MarkovChain]) -> ChainStats {
    let mut total = ChainStats::default();
    for c in chains {
        total.add(&c.stats);
    }
    total
}

/// The RNG for chain `chain_id`: a ChaCha8 stream keyed by the master seed, independent of
/// scheduling order.
pub fn chain_rng(master_seed: u64, chain_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(chain_id as u64);
    rng
}

/// Exact density restricted to the box, counting the evaluations that reach the model.
struct Counted<'a, E: ?Sized> {
    inner: &'a E,
    bounds: &'a Bounds,
    count: AtomicU64,
}

impl<E: LogDensity + ?Sized> LogDensity for Counted<'_, E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn log_density(&self, theta: &[f64]) -> Result<f64> {
        if !self.bounds.contains(theta) {
            return Ok(f64::NEG_INFINITY);
        }
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.log_density(theta)
    }
}

#[allow(clippy::too_many_arguments)]
fn run_one<E: LogDensity + ?Sized>(
    exact: &E,
    gp: Option<&GPModel>,
    bounds: &Bounds,
    start: &[f64],
    prop: &ProposalConfig,
    n_steps: usize,
    mode: SamplingMode,
    master_seed: u64,
    chain_id: usize,
) -> Result<MarkovChain> {
    let mut rng = chain_rng(master_seed, chain_id);
    let counted = Counted {
        inner: exact,
        bounds,
        count: AtomicU64::new(0),
    };
    let surrogate = gp.map(|g| SurrogateDensity::new(g, bounds));
    let surr = || {
        surrogate
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter(format!("mode {mode} needs a surrogate")))
    };

    let mut state = match mode {
        SamplingMode::Exact => ChainState::new(start.to_vec(), Some(counted.log_density(start)?), None),
        SamplingMode::TwoStage => ChainState::new(
            start.to_vec(),
            Some(counted.log_density(start)?),
            Some(surr()?.log_density(start)?),
        ),
        SamplingMode::SurrogateOnly => ChainState::new(start.to_vec(), None, Some(surr()?.log_density(start)?)),
    };

    let mut stats = ChainStats::default();
    let mut samples = Vec::with_capacity(n_steps);
    let mut log_post = Vec::with_capacity(n_steps);
    let mut stage1_pass = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let before = counted.count.load(Ordering::Relaxed);
        let (next, rec) = match mode {
            SamplingMode::Exact => mh_step(&state, &counted, Level::Exact, prop, &mut rng)?,
            SamplingMode::TwoStage => two_stage_step(&state, &counted, surr()?, bounds, prop, &mut rng)?,
            SamplingMode::SurrogateOnly => mh_step(&state, surr()?, Level::Surrogate, prop, &mut rng)?,
        };
        state = next;
        stats.proposed += 1;
        stats.accepted += u64::from(rec.accepted);
        match mode {
            SamplingMode::SurrogateOnly => {}
            SamplingMode::Exact | SamplingMode::TwoStage => {
                if counted.count.load(Ordering::Relaxed) > before {
                    stats.exact_tested += 1;
                    stats.exact_accepted += u64::from(rec.accepted);
                } else {
                    stats.surrogate_rejected += 1;
                }
            }
        }
        let lp = match mode {
            SamplingMode::SurrogateOnly => state.log_post_surr,
            _ => state.log_post_exact,
        };
        log_post.push(lp.unwrap_or(f64::NAN));
        stage1_pass.push(rec.stage1_pass);
        samples.push(state.theta.clone());
    }
    stats.exact_evaluations = counted.count.load(Ordering::Relaxed);
    Ok(MarkovChain {
        chain_id,
        seed: master_seed,
        mode,
        start: start.to_vec(),
        samples,
        log_post,
        stage1_pass,
        stats,
    })
}

/// Runs one chain per start in parallel. Chain `i` draws from stream `i` of `master_seed`, so
/// results do not depend on thread scheduling. `gp` is required for the surrogate modes.
#[allow(clippy::too_many_arguments)]
pub fn run_chains<E: LogDensity + ?Sized>(
    exact: &E,
    gp: Option<&GPModel>,
    bounds: &Bounds,
    starts: &[Vec<f64>],
    prop: ProposalConfig,
    n_steps: usize,
    mode: SamplingMode,
    master_seed: u64,
) -> Result<Vec<MarkovChain>> {
    if starts.is_empty() {
        return Err(Error::Empty("chain starts".into()));
    }
    if mode.needs_surrogate() && gp.is_none() {
        return Err(Error::InvalidParameter(format!("mode {mode} needs a surrogate")));
    }
    for (i, s) in starts.iter().enumerate() {
        if s.len() != bounds.dim() {
            return Err(Error::LengthMismatch {
                expected: bounds.dim(),
                got: s.len(),
            });
        }
        if !bounds.contains(s) {
            return Err(Error::Chain {
                chain: i,
                source: Box::new(Error::InvalidParameter(format!("start {s:?} outside the box"))),
            });
        }
    }
    starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            run_one(exact, gp, bounds, s, &prop, n_steps, mode, master_seed, i).map_err(|e| Error::Chain {
                chain: i,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Each chain after dropping the first `floor(burn_in_frac * len)` states and keeping every
/// `thin`-th state of the rest.
pub fn trimmed(chains: &[MarkovChain], burn_in_frac: f64, thin: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    if !(0.0..1.0).contains(&burn_in_frac) {
        return Err(Error::InvalidParameter(format!(
            "burn_in_frac = {burn_in_frac} must lie in [0, 1)"
        )));
    }
    if thin == 0 {
        return Err(Error::InvalidParameter("thin must be >= 1".into()));
    }
    Ok(chains
        .iter()
        .map(|c| {
            let skip = (burn_in_frac * c.len() as f64).floor() as usize;
            c.samples[skip..].iter().step_by(thin).cloned().collect()
        })
        .collect())
}

/// Burn-in removal, thinning and concatenation of all chains.
pub fn postprocess(chains: &[MarkovChain], burn_in_frac: f64, thin: usize) -> Result<Vec<Vec<f64>>> {
    let pooled: Vec<Vec<f64>> = trimmed(chains, burn_in_frac, thin)?.into_iter().flatten().collect();
    if pooled.is_empty() {
        return Err(Error::Empty("pooled samples after burn-in and thinning".into()));
    }
    Ok(pooled)
}

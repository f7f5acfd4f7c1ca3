//! In-memory pipeline stages shared by the subcommands and the acceptance suite.

use std::time::Instant;

use gpda_core::bounds::Bounds;
use gpda_core::diagnostics::{diagnose, summarize, DiagnosticsReport, PosteriorSummary};
use gpda_core::forward::{add_noise, expand_parameters, Observation};
use gpda_core::gp::{build_surrogate, fit_gp, GPModel, KernelHyper, TrainingSet};
use gpda_core::posterior::{estimate_sigma_e, PosteriorContext};
use gpda_core::samplers::{
    fit_mixture, postprocess, run_chains, slice_sample_surrogate, total_stats, trimmed, tune_proposal, ChainStats,
    MarkovChain, MixtureInit, ProposalConfig, SamplingMode, TunedProposal,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{CaseConfig, ExperimentConfig, SamplingConfig, SurrogateConfig};
use crate::error::CliError;

/// Stream ids for the stages that draw random numbers; chains use streams `0..chains`.
pub mod stream {
    pub const NOISE: u64 = 1 << 32;
    pub const SURROGATE: u64 = (1 << 32) + 1;
    pub const TUNE: u64 = (1 << 32) + 2;
    pub const SLICE: u64 = (1 << 32) + 3;
    pub const MIXTURE: u64 = (1 << 32) + 4;
    pub const STARTS: u64 = (1 << 32) + 5;
}

pub fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Ground truth and synthetic data of one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseBundle {
    pub theta_true: Vec<f64>,
    pub a_field: Vec<f64>,
    pub y_clean: Observation,
    pub y_obs: Observation,
    pub sigma_e: f64,
}

pub fn generate_case(case: &CaseConfig) -> Result<CaseBundle, CliError> {
    case.validate()?;
    let model = case.forward_model()?;
    let a_field = expand_parameters(&case.theta_true, &model.partition)?;
    let y_clean = model.evaluate(&case.theta_true)?;
    let noise_seed = {
        use rand::Rng;
        stage_rng(case.seed, stream::NOISE).random::<u64>()
    };
    let y_obs = add_noise(&y_clean, case.snr_db, noise_seed)?;
    let sigma_e = estimate_sigma_e(&y_obs, case.snr_db)?;
    Ok(CaseBundle {
        theta_true: case.theta_true.clone(),
        a_field,
        y_clean,
        y_obs,
        sigma_e,
    })
}

pub fn posterior_context(case: &CaseConfig, bundle: &CaseBundle) -> Result<PosteriorContext, CliError> {
    Ok(PosteriorContext::new(
        case.forward_model()?,
        bundle.y_obs.clone(),
        bundle.sigma_e,
    )?)
}

/// Everything needed to rebuild the surrogate bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateCheckpoint {
    pub training: TrainingSet,
    pub hyper: KernelHyper,
    pub config: SurrogateConfig,
    pub seed: u64,
    pub exact_evaluations: u64,
    pub acquired: usize,
    pub stalled: bool,
    pub non_finite: usize,
}

impl SurrogateCheckpoint {
    pub fn model(&self) -> Result<GPModel, CliError> {
        Ok(fit_gp(self.training.clone(), self.hyper.clone())?)
    }
}

pub fn construct_surrogate(
    ctx: &PosteriorContext,
    cfg: &SurrogateConfig,
    seed: u64,
) -> Result<(SurrogateCheckpoint, GPModel), CliError> {
    let before = ctx.evaluations();
    let mut rng = stage_rng(seed, stream::SURROGATE);
    let build = build_surrogate(ctx, &ctx.bounds, &cfg.acquisition, cfg.init_design_size, &mut rng)?;
    let used = ctx.evaluations() - before;
    debug_assert_eq!(used, build.exact_evaluations as u64);
    let checkpoint = SurrogateCheckpoint {
        training: build.gp.training.clone(),
        hyper: build.gp.hyper.clone(),
        config: cfg.clone(),
        seed,
        exact_evaluations: used,
        acquired: build.acquired,
        stalled: build.stalled,
        non_finite: build.non_finite,
    };
    // refit from the checkpoint so the in-memory model matches a reloaded one bit for bit
    let gp = checkpoint.model()?;
    Ok((checkpoint, gp))
}

/// Proposal scale and chain starts, chosen on the surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSetup {
    pub proposal: ProposalConfig,
    /// Absent when the scale was fixed in the config.
    pub tuned: Option<TunedProposal>,
    pub mixture: Option<MixtureInit>,
    pub starts: Vec<Vec<f64>>,
}

/// Tunes the proposal on the surrogate, slice samples it and places one chain at each mixture
/// mean (cycling through the means when there are more chains than components).
pub fn prepare_sampler(
    gp: &GPModel,
    bounds: &Bounds,
    cfg: &SamplingConfig,
    seed: u64,
) -> Result<SamplerSetup, CliError> {
    let start = gp
        .training
        .best()
        .map(|(x, _)| x.to_vec())
        .unwrap_or_else(|| bounds.center());
    let range = (cfg.target_acceptance[0], cfg.target_acceptance[1]);
    let (proposal, tuned) = match cfg.sigma_p {
        Some(s) => (ProposalConfig::new(s)?, None),
        None => {
            let t = tune_proposal(gp, bounds, &start, range, &mut stage_rng(seed, stream::TUNE))?;
            (t.proposal, Some(t))
        }
    };
    let draws = slice_sample_surrogate(gp, bounds, cfg.slice_draws, &mut stage_rng(seed, stream::SLICE))?;
    let mixture = fit_mixture(&draws, cfg.mixture_k, &mut stage_rng(seed, stream::MIXTURE))?;
    let mut starts: Vec<Vec<f64>> = (0..cfg.chains)
        .map(|c| mixture.means[c % mixture.k()].clone())
        .collect();
    for s in starts.iter_mut() {
        bounds.clip(s);
    }
    Ok(SamplerSetup {
        proposal,
        tuned,
        mixture: Some(mixture),
        starts,
    })
}

/// Setup without a surrogate: a fixed proposal scale and Latin-hypercube starts.
pub fn prepare_without_surrogate(bounds: &Bounds, cfg: &SamplingConfig, seed: u64) -> Result<SamplerSetup, CliError> {
    let sigma_p = cfg.sigma_p.ok_or_else(|| {
        CliError::Config("exact sampling without a surrogate checkpoint needs sampling.sigma_p".into())
    })?;
    Ok(SamplerSetup {
        proposal: ProposalConfig::new(sigma_p)?,
        tuned: None,
        mixture: None,
        starts: bounds.latin_hypercube(cfg.chains, &mut stage_rng(seed, stream::STARTS)),
    })
}

#[derive(Debug, Clone)]
pub struct SampleRun {
    pub mode: SamplingMode,
    pub chains: Vec<MarkovChain>,
    pub pooled: Vec<Vec<f64>>,
    pub diagnostics: DiagnosticsReport,
    pub summary: PosteriorSummary,
    pub totals: ChainStats,
    pub wall_clock_s: f64,
}

/// Runs the chains of one mode, then burn-in, thinning, diagnostics and summaries.
pub fn run_sampling(
    ctx: &PosteriorContext,
    gp: Option<&GPModel>,
    setup: &SamplerSetup,
    cfg: &SamplingConfig,
    mode: SamplingMode,
    seed: u64,
) -> Result<SampleRun, CliError> {
    let started = Instant::now();
    let chains = run_chains(
        ctx,
        gp,
        &ctx.bounds,
        &setup.starts,
        setup.proposal,
        cfg.steps,
        mode,
        seed,
    )?;
    let wall_clock_s = started.elapsed().as_secs_f64();
    analyse(chains, &ctx.model.partition, cfg, mode, wall_clock_s)
}

pub fn analyse(
    chains: Vec<MarkovChain>,
    partition: &gpda_core::forward::RegionPartition,
    cfg: &SamplingConfig,
    mode: SamplingMode,
    wall_clock_s: f64,
) -> Result<SampleRun, CliError> {
    let pooled = postprocess(&chains, cfg.burn_in_frac, cfg.thin)?;
    let per_chain = trimmed(&chains, cfg.burn_in_frac, cfg.thin)?;
    let diagnostics = diagnose(&per_chain)?;
    let summary = summarize(&pooled, partition)?;
    let totals = total_stats(&chains);
    Ok(SampleRun {
        mode,
        chains,
        pooled,
        diagnostics,
        summary,
        totals,
        wall_clock_s,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub mode: SamplingMode,
    pub pooled_samples: usize,
    /// Exact evaluations spent by the chains.
    pub sampling_evaluations: u64,
    /// Exact evaluations spent building the surrogate (zero for the exact baseline).
    pub surrogate_evaluations: u64,
    pub total_evaluations: u64,
    pub wall_clock_s: f64,
    pub delta_mean: Vec<f64>,
    pub delta_mode: Vec<f64>,
    pub delta_std: Vec<f64>,
    /// Average and spread over parameters, as in a mean ± sd error table.
    pub mean_error: Aggregate,
    pub mode_error: Aggregate,
    pub std_error: Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub average: f64,
    /// Sample standard deviation; zero for a single parameter.
    pub spread: f64,
}

impl Aggregate {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let average = xs.iter().sum::<f64>() / n;
        let spread = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - average).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { average, spread }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub modes: Vec<ModeComparison>,
    /// `1 - total(two-stage) / total(exact)`.
    pub two_stage_reduction: f64,
}

fn abs_delta(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect()
}

/// Per-mode deltas against the exact baseline. The surrogate cost is charged to every mode
/// that used the surrogate while sampling.
pub fn compare_runs(baseline: &SampleRun, others: &[&SampleRun], surrogate_evaluations: u64) -> ComparisonReport {
    let entry = |run: &SampleRun| {
        let overhead = if run.mode.needs_surrogate() {
            surrogate_evaluations
        } else {
            0
        };
        let delta_mean = abs_delta(&run.summary.mean, &baseline.summary.mean);
        let delta_mode = abs_delta(&run.summary.mode, &baseline.summary.mode);
        let delta_std = abs_delta(&run.summary.std, &baseline.summary.std);
        ModeComparison {
            mode: run.mode,
            pooled_samples: run.pooled.len(),
            sampling_evaluations: run.totals.exact_evaluations,
            surrogate_evaluations: overhead,
            total_evaluations: run.totals.exact_evaluations + overhead,
            wall_clock_s: run.wall_clock_s,
            mean_error: Aggregate::of(&delta_mean),
            mode_error: Aggregate::of(&delta_mode),
            std_error: Aggregate::of(&delta_std),
            delta_mean,
            delta_mode,
            delta_std,
        }
    };
    let mut modes = vec![entry(baseline)];
    modes.extend(others.iter().map(|r| entry(r)));
    let exact_total = modes[0].total_evaluations as f64;
    let two_stage_reduction = modes
        .iter()
        .find(|m| m.mode == SamplingMode::TwoStage)
        .map(|m| 1.0 - m.total_evaluations as f64 / exact_total)
        .unwrap_or(f64::NAN);
    ComparisonReport {
        modes,
        two_stage_reduction,
    }
}

/// Case, surrogate, setup and context for an experiment, all in memory.
pub struct Prepared {
    pub bundle: CaseBundle,
    pub ctx: PosteriorContext,
    pub checkpoint: SurrogateCheckpoint,
    pub gp: GPModel,
    pub setup: SamplerSetup,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let bundle = generate_case(&cfg.case)?;
    let ctx = posterior_context(&cfg.case, &bundle)?;
    let (checkpoint, gp) = construct_surrogate(&ctx, &cfg.surrogate, cfg.seed)?;
    let setup = prepare_sampler(&gp, &ctx.bounds, &cfg.sampling, cfg.seed)?;
    Ok(Prepared {
        bundle,
        ctx,
        checkpoint,
        gp,
        setup,
    })
}

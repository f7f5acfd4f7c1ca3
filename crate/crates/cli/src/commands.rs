//! The subcommands. Each reads what earlier stages left under the output directory and writes
//! its own artifacts next to them.

use std::time::Instant;

use gpda_core::diagnostics::DiagnosticsReport;
use gpda_core::forward::expand_parameters;
use gpda_core::gp::GPModel;
use gpda_core::posterior::PosteriorContext;
use gpda_core::samplers::{ChainStats, MixtureInit, SamplingMode, TunedProposal};
use serde::{Deserialize, Serialize};

use crate::config::{CaseConfig, ExperimentConfig, SamplingConfig, SurrogateConfig};
use crate::error::CliError;
use crate::io::{self, Layout, CHECKPOINT, DIAGNOSTICS, KDE, MANIFEST, SUMMARY};
use crate::pipeline::{
    analyse, compare_runs, construct_surrogate, generate_case, posterior_context, prepare_sampler,
    prepare_without_surrogate, run_sampling, stream, CaseBundle, ComparisonReport, SampleRun, SamplerSetup,
    SurrogateCheckpoint,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseManifest {
    pub case: CaseConfig,
    pub case_seed: u64,
    /// Stream of the case seed that drew the noise seed.
    pub noise_stream: u64,
    pub snr_db: f64,
    pub sigma_e: f64,
    pub n_params: usize,
    pub n_nodes: usize,
    pub n_leads: usize,
    pub n_times: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateManifest {
    pub master_seed: u64,
    pub stream: u64,
    pub config: SurrogateConfig,
    /// Exact posterior evaluations spent on the surrogate, initial design included.
    pub exact_evaluations: u64,
    pub training_points: usize,
    pub acquired: usize,
    pub stalled: bool,
    pub non_finite: usize,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub mode: SamplingMode,
    pub master_seed: u64,
    /// Chain `c` uses stream `c` of the master seed.
    pub chain_streams: Vec<u64>,
    pub sampling: SamplingConfig,
    pub sigma_p: f64,
    pub tuning: Option<TunedProposal>,
    pub mixture: Option<MixtureInit>,
    pub starts: Vec<Vec<f64>>,
    pub per_chain: Vec<ChainStats>,
    pub totals: ChainStats,
    pub pooled_samples: usize,
    /// Exact evaluations made by the chains, as counted by the samplers.
    pub sampling_exact_evaluations: u64,
    /// The same quantity read off the posterior's own counter.
    pub posterior_counter: u64,
    /// Exact evaluations spent on the surrogate this run relied on.
    pub surrogate_exact_evaluations: u64,
    pub converged: bool,
    pub wall_clock_s: f64,
}

fn missing(what: &str, path: &std::path::Path, hint: &str) -> CliError {
    CliError::Config(format!("{what} not found at {}; {hint}", path.display()))
}

pub fn cmd_simulate(cfg: &ExperimentConfig, layout: &Layout) -> Result<CaseManifest, CliError> {
    let case = &cfg.case;
    let bundle = generate_case(case)?;
    let model = case.forward_model()?;
    let dir = layout.case_dir();
    io::create_dir(&dir)?;
    io::write_theta(&dir.join("theta_true.csv"), &bundle.theta_true)?;
    io::write_a_field(
        &dir.join("a_field.csv"),
        &model.geometry,
        &model.partition,
        &bundle.a_field,
    )?;
    io::write_observation(&dir.join("y_clean.csv"), &bundle.y_clean)?;
    io::write_observation(&dir.join("y_obs.csv"), &bundle.y_obs)?;
    io::write_lead_field(&dir.join("lead_field.csv"), &model.lead_field)?;
    let manifest = CaseManifest {
        case: case.clone(),
        case_seed: case.seed,
        noise_stream: stream::NOISE,
        snr_db: case.snr_db,
        sigma_e: bundle.sigma_e,
        n_params: bundle.theta_true.len(),
        n_nodes: model.geometry.n_nodes(),
        n_leads: bundle.y_obs.n_leads,
        n_times: bundle.y_obs.n_times,
    };
    io::write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Reads the case bundle back and checks it was generated from this config's case.
pub fn load_case(cfg: &ExperimentConfig, layout: &Layout) -> Result<(CaseBundle, PosteriorContext), CliError> {
    let dir = layout.case_dir();
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.exists() {
        return Err(missing("case bundle", &dir, "run `simulate` first"));
    }
    let manifest: CaseManifest = io::read_json(&manifest_path)?;
    if manifest.case != cfg.case {
        return Err(CliError::Config(format!(
            "case bundle in {} was generated from a different case definition; rerun `simulate`",
            dir.display()
        )));
    }
    let model = cfg.case.forward_model()?;
    let theta_true = io::read_theta(&dir.join("theta_true.csv"))?;
    let a_field = expand_parameters(&theta_true, &model.partition)?;
    let y_clean = io::read_observation(&dir.join("y_clean.csv"), None)?;
    let y_obs = io::read_observation(&dir.join("y_obs.csv"), Some(manifest.snr_db))?;
    if (y_obs.n_leads, y_obs.n_times) != (manifest.n_leads, manifest.n_times) {
        return Err(CliError::Io(format!(
            "{}: observation shape disagrees with the manifest",
            dir.display()
        )));
    }
    let bundle = CaseBundle {
        theta_true,
        a_field,
        y_clean,
        y_obs,
        sigma_e: manifest.sigma_e,
    };
    let ctx = posterior_context(&cfg.case, &bundle)?;
    Ok((bundle, ctx))
}

pub fn cmd_build_surrogate(cfg: &ExperimentConfig, layout: &Layout) -> Result<SurrogateManifest, CliError> {
    let (_, ctx) = load_case(cfg, layout)?;
    let started = Instant::now();
    let (checkpoint, _) = construct_surrogate(&ctx, &cfg.surrogate, cfg.seed)?;
    let wall_clock_s = started.elapsed().as_secs_f64();
    let dir = layout.surrogate_dir();
    io::create_dir(&dir)?;
    io::write_json(&dir.join(CHECKPOINT), &checkpoint)?;
    let manifest = SurrogateManifest {
        master_seed: cfg.seed,
        stream: stream::SURROGATE,
        config: cfg.surrogate.clone(),
        exact_evaluations: checkpoint.exact_evaluations,
        training_points: checkpoint.training.len(),
        acquired: checkpoint.acquired,
        stalled: checkpoint.stalled,
        non_finite: checkpoint.non_finite,
        wall_clock_s,
    };
    io::write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// The stored surrogate, if any. A checkpoint built from another seed or config is an error.
pub fn load_surrogate(
    cfg: &ExperimentConfig,
    layout: &Layout,
) -> Result<Option<(SurrogateCheckpoint, GPModel)>, CliError> {
    let path = layout.surrogate_dir().join(CHECKPOINT);
    if !path.exists() {
        return Ok(None);
    }
    let checkpoint: SurrogateCheckpoint = io::read_json(&path)?;
    if checkpoint.seed != cfg.seed || checkpoint.config != cfg.surrogate {
        return Err(CliError::Config(format!(
            "surrogate checkpoint {} was built with a different seed or surrogate config; rerun `build-surrogate`",
            path.display()
        )));
    }
    let gp = checkpoint.model()?;
    Ok(Some((checkpoint, gp)))
}

fn write_run(
    cfg: &ExperimentConfig,
    layout: &Layout,
    run: &SampleRun,
    setup: &SamplerSetup,
    sampling: &SamplingConfig,
    posterior_counter: u64,
    surrogate_exact_evaluations: u64,
) -> Result<SampleManifest, CliError> {
    let dir = layout.sample_dir(run.mode);
    io::create_dir(&dir)?;
    for chain in &run.chains {
        io::write_chain(&dir.join(io::chain_file(chain.chain_id)), chain)?;
    }
    write_analysis(layout, run)?;
    let manifest = SampleManifest {
        mode: run.mode,
        master_seed: cfg.seed,
        chain_streams: (0..run.chains.len() as u64).collect(),
        sampling: SamplingConfig {
            mode: run.mode,
            ..sampling.clone()
        },
        sigma_p: setup.proposal.sigma_p,
        tuning: setup.tuned,
        mixture: setup.mixture.clone(),
        starts: setup.starts.clone(),
        per_chain: run.chains.iter().map(|c| c.stats).collect(),
        totals: run.totals,
        pooled_samples: run.pooled.len(),
        sampling_exact_evaluations: run.totals.exact_evaluations,
        posterior_counter,
        surrogate_exact_evaluations,
        converged: run.diagnostics.converged,
        wall_clock_s: run.wall_clock_s,
    };
    io::write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn write_analysis(layout: &Layout, run: &SampleRun) -> Result<(), CliError> {
    let dir = layout.sample_dir(run.mode);
    io::write_json(&dir.join(DIAGNOSTICS), &run.diagnostics)?;
    io::write_json(&dir.join(SUMMARY), &run.summary)?;
    io::write_kde(&dir.join(KDE), &run.summary.kde)
}

fn check_convergence(report: &DiagnosticsReport, mode: SamplingMode, strict: bool) -> Result<(), CliError> {
    if report.converged {
        return Ok(());
    }
    if strict {
        return Err(CliError::Unconverged);
    }
    eprintln!("warning: {mode} chains did not pass the convergence checks (Geweke |z| < 2, R-hat < 1.1)");
    Ok(())
}

/// A sampling run plus what it cost.
pub struct SampleOutcome {
    pub run: SampleRun,
    pub manifest: SampleManifest,
}

fn sample_with(
    cfg: &ExperimentConfig,
    layout: &Layout,
    ctx: &PosteriorContext,
    surrogate: Option<&(SurrogateCheckpoint, GPModel)>,
    sampling: &SamplingConfig,
    mode: SamplingMode,
) -> Result<SampleOutcome, CliError> {
    let setup = match surrogate {
        Some((_, gp)) => prepare_sampler(gp, &ctx.bounds, sampling, cfg.seed)?,
        None => prepare_without_surrogate(&ctx.bounds, sampling, cfg.seed)?,
    };
    let before = ctx.evaluations();
    let run = run_sampling(ctx, surrogate.map(|s| &s.1), &setup, sampling, mode, cfg.seed)?;
    let counter = ctx.evaluations() - before;
    let overhead = match surrogate {
        Some((cp, _)) if mode.needs_surrogate() => cp.exact_evaluations,
        _ => 0,
    };
    let manifest = write_run(cfg, layout, &run, &setup, sampling, counter, overhead)?;
    Ok(SampleOutcome { run, manifest })
}

/// Samples in `mode`. Modes that screen or replace the exact density need the checkpoint; the
/// exact mode uses it for tuning and starts when present.
pub fn cmd_sample(
    cfg: &ExperimentConfig,
    layout: &Layout,
    mode: SamplingMode,
    strict: bool,
) -> Result<SampleOutcome, CliError> {
    let (_, ctx) = load_case(cfg, layout)?;
    let surrogate = load_surrogate(cfg, layout)?;
    if mode.needs_surrogate() && surrogate.is_none() {
        return Err(missing(
            "surrogate checkpoint",
            &layout.surrogate_dir(),
            "run `build-surrogate` first",
        ));
    }
    let outcome = sample_with(cfg, layout, &ctx, surrogate.as_ref(), &cfg.sampling, mode)?;
    check_convergence(&outcome.run.diagnostics, mode, strict)?;
    Ok(outcome)
}

/// Re-reads the chains of a finished run and redoes burn-in, thinning and the analysis.
pub fn load_run(
    cfg: &ExperimentConfig,
    layout: &Layout,
    mode: SamplingMode,
) -> Result<(SampleRun, SampleManifest), CliError> {
    let dir = layout.sample_dir(mode);
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.exists() {
        return Err(missing(
            &format!("{mode} run"),
            &dir,
            &format!("run `sample --mode {mode}` first"),
        ));
    }
    let manifest: SampleManifest = io::read_json(&manifest_path)?;
    let chains = manifest
        .per_chain
        .iter()
        .enumerate()
        .map(|(c, stats)| {
            io::read_chain(
                &dir.join(io::chain_file(c)),
                c,
                manifest.master_seed,
                mode,
                manifest.starts[c].clone(),
                *stats,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let partition = cfg.case.region_partition(&cfg.case.geometry()?)?;
    let run = analyse(chains, &partition, &manifest.sampling, mode, manifest.wall_clock_s)?;
    Ok((run, manifest))
}

pub fn cmd_diagnose(
    cfg: &ExperimentConfig,
    layout: &Layout,
    mode: SamplingMode,
    strict: bool,
) -> Result<SampleRun, CliError> {
    let (run, _) = load_run(cfg, layout, mode)?;
    write_analysis(layout, &run)?;
    check_convergence(&run.diagnostics, mode, strict)?;
    Ok(run)
}

/// Runs two-stage and surrogate-only sampling with the exact baseline's chain count and length,
/// then reports their errors and costs against the baseline.
pub fn cmd_compare(cfg: &ExperimentConfig, layout: &Layout) -> Result<ComparisonReport, CliError> {
    let baseline_dir = layout.sample_dir(SamplingMode::Exact);
    if !baseline_dir.join(MANIFEST).exists() {
        return Err(missing(
            "missing baseline: exact run",
            &baseline_dir,
            "run `sample --mode exact` first",
        ));
    }
    let (baseline, baseline_manifest) = load_run(cfg, layout, SamplingMode::Exact)?;
    let (_, ctx) = load_case(cfg, layout)?;
    let surrogate = load_surrogate(cfg, layout)?.ok_or_else(|| {
        missing(
            "surrogate checkpoint",
            &layout.surrogate_dir(),
            "run `build-surrogate` first",
        )
    })?;
    let sampling = SamplingConfig {
        chains: baseline_manifest.sampling.chains,
        steps: baseline_manifest.sampling.steps,
        burn_in_frac: baseline_manifest.sampling.burn_in_frac,
        thin: baseline_manifest.sampling.thin,
        ..cfg.sampling.clone()
    };
    let two_stage = sample_with(cfg, layout, &ctx, Some(&surrogate), &sampling, SamplingMode::TwoStage)?;
    let surrogate_only = sample_with(
        cfg,
        layout,
        &ctx,
        Some(&surrogate),
        &sampling,
        SamplingMode::SurrogateOnly,
    )?;
    let report = compare_runs(
        &baseline,
        &[&two_stage.run, &surrogate_only.run],
        surrogate.0.exact_evaluations,
    );
    io::write_json(&layout.comparison_path(), &report)?;
    Ok(report)
}

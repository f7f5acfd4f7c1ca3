use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gpda_cli::commands::{cmd_build_surrogate, cmd_compare, cmd_diagnose, cmd_sample, cmd_simulate};
use gpda_cli::config::ExperimentConfig;
use gpda_cli::error::CliError;
use gpda_cli::io::Layout;
use gpda_core::samplers::SamplingMode;

/// Surrogate-accelerated posterior sampling for synthetic cardiac excitability cases.
#[derive(Debug, Parser)]
#[command(name = "gpda", version)]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides both the master seed and the case seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with status 3 when the chains fail the convergence checks.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the ground truth, noiseless and noisy ECG, and the lead field.
    Simulate,
    /// Build the GP surrogate of the log-posterior and checkpoint it.
    BuildSurrogate,
    /// Run the chains in one mode and write chains, manifest and diagnostics.
    Sample {
        #[arg(long)]
        mode: Option<SamplingMode>,
    },
    /// Recompute diagnostics and summaries from the chain files of a finished run.
    Diagnose {
        #[arg(long)]
        mode: Option<SamplingMode>,
    },
    /// Compare two-stage and surrogate-only sampling against the exact baseline.
    Compare,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.case.seed = seed;
    }
    let layout = Layout::new(cli.out.unwrap_or_else(|| PathBuf::from(&cfg.output_dir)));
    match cli.command {
        Command::Simulate => {
            let m = cmd_simulate(&cfg, &layout)?;
            println!(
                "case {}: {} parameters, {} leads x {} samples, sigma_e = {}",
                m.case.name, m.n_params, m.n_leads, m.n_times, m.sigma_e
            );
        }
        Command::BuildSurrogate => {
            let m = cmd_build_surrogate(&cfg, &layout)?;
            println!(
                "surrogate: {} training points, {} exact evaluations{}",
                m.training_points,
                m.exact_evaluations,
                if m.stalled { " (stalled)" } else { "" }
            );
        }
        Command::Sample { mode } => {
            let mode = mode.unwrap_or(cfg.sampling.mode);
            let out = cmd_sample(&cfg, &layout, mode, cli.strict)?;
            let m = &out.manifest;
            println!(
                "{mode}: {} pooled samples, {} exact evaluations, acceptance {:.3}, converged {}",
                m.pooled_samples,
                m.sampling_exact_evaluations,
                m.totals.acceptance_rate(),
                m.converged
            );
        }
        Command::Diagnose { mode } => {
            let mode = mode.unwrap_or(cfg.sampling.mode);
            let run = cmd_diagnose(&cfg, &layout, mode, cli.strict)?;
            for (j, p) in run.diagnostics.parameters.iter().enumerate() {
                let zmax = p.geweke_z.iter().fold(0.0f64, |a, z| a.max(z.abs()));
                println!(
                    "theta_{}: mean {:.4} mode {:.4} std {:.4} rhat {:.4} max|z| {:.2} ess {:.0}",
                    j + 1,
                    run.summary.mean[j],
                    run.summary.mode[j],
                    run.summary.std[j],
                    p.rhat,
                    zmax,
                    p.ess
                );
            }
        }
        Command::Compare => {
            let report = cmd_compare(&cfg, &layout)?;
            for m in &report.modes {
                println!(
                    "{}: {} exact evaluations, |dmean| {:.4}, |dmode| {:.4}, |dstd| {:.4}",
                    m.mode, m.total_evaluations, m.mean_error.average, m.mode_error.average, m.std_error.average
                );
            }
            println!(
                "two-stage evaluation reduction: {:.1}%",
                100.0 * report.two_stage_reduction
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

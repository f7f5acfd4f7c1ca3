//! Convergence diagnostics and posterior summaries. Everything here is a pure function of the
//! chains passed in.

pub mod convergence;
pub mod summary;

pub use convergence::{
    autocorr_ess, autocorr_ess_scalar, column, gelman_rubin, gelman_rubin_scalar, geweke, geweke_scalar, AutocorrEss,
};
pub use summary::{
    marginal_kde, silverman_bandwidth, summarize, switching_indicator, switching_score, Kde, PosteriorSummary,
    SwitchingIndicator,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GEWEKE_LIMIT: f64 = 2.0;
pub const RHAT_LIMIT: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    /// One Geweke z per chain.
    pub geweke_z: Vec<f64>,
    pub rhat: f64,
    /// Summed over chains.
    pub ess: f64,
    /// Autocorrelation of the first chain, lags 1..=50.
    pub acf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub parameters: Vec<ParameterDiagnostics>,
    /// Every `|z| < 2` and every `rhat < 1.1`.
    pub converged: bool,
}

/// Diagnostics over post-burn-in chains of equal length.
pub fn diagnose(chains: &[Vec<Vec<f64>>]) -> Result<DiagnosticsReport> {
    if chains.len() < 2 {
        return Err(Error::InvalidParameter("diagnostics need at least two chains".into()));
    }
    let rhat = gelman_rubin(chains)?;
    let z: Vec<Vec<f64>> = chains.iter().map(|c| geweke(c)).collect::<Result<_>>()?;
    let acf: Vec<Vec<AutocorrEss>> = chains.iter().map(|c| autocorr_ess(c)).collect::<Result<_>>()?;
    let parameters: Vec<ParameterDiagnostics> = (0..rhat.len())
        .map(|j| ParameterDiagnostics {
            geweke_z: z.iter().map(|zc| zc[j]).collect(),
            rhat: rhat[j],
            ess: acf.iter().map(|a| a[j].ess).sum(),
            acf: acf[0][j].acf.clone(),
        })
        .collect();
    let converged = parameters
        .iter()
        .all(|p| p.rhat < RHAT_LIMIT && p.geweke_z.iter().all(|z| z.abs() < GEWEKE_LIMIT));
    Ok(DiagnosticsReport {
        n_chains: chains.len(),
        draws_per_chain: chains[0].len(),
        parameters,
        converged,
    })
}

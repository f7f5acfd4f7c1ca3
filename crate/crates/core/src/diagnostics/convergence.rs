//! Geweke, split Gelman-Rubin and autocorrelation-based effective sample size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GEWEKE_FIRST: f64 = 0.1;
pub const GEWEKE_LAST: f64 = 0.5;
pub const GEWEKE_BATCHES: usize = 20;
pub const ACF_LAGS: usize = 50;
const MIN_GEWEKE_LEN: usize = 100;
const MIN_RHAT_LEN: usize = 10;
const MIN_ACF_LEN: usize = 100;

/// Column `j` of a chain stored as one row per draw.
pub fn column(chain: &[Vec<f64>], j: usize) -> Vec<f64> {
    chain.iter().map(|x| x[j]).collect()
}

/// Arithmetic mean, exact for constant input (plain summation drifts by a few ulps).
pub(crate) fn mean(xs: &[f64]) -> f64 {
    match xs.first() {
        Some(&x0) if xs.iter().all(|&x| x == x0) => x0,
        _ => xs.iter().sum::<f64>() / xs.len() as f64,
    }
}

/// Unbiased sample variance (zero for fewer than two values).
pub(crate) fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

fn chain_dim(chain: &[Vec<f64>]) -> Result<usize> {
    let dim = chain
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Empty("chain".into()))?;
    if let Some(bad) = chain.iter().find(|x| x.len() != dim) {
        return Err(Error::LengthMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    Ok(dim)
}

/// Mean of a segment and the variance of that mean from non-overlapping batch means.
fn batch_mean_stats(xs: &[f64], batches: usize) -> (f64, f64) {
    let m = mean(xs);
    let size = xs.len() / batches;
    if size == 0 {
        return (m, variance(xs) / xs.len() as f64);
    }
    let means: Vec<f64> = xs.chunks_exact(size).take(batches).map(mean).collect();
    (m, variance(&means) / means.len() as f64)
}

/// Geweke z-score of a scalar trace comparing its first `frac_a` with its last `frac_b`.
pub fn geweke_scalar(xs: &[f64], frac_a: f64, frac_b: f64) -> Result<f64> {
    if xs.len() < MIN_GEWEKE_LEN {
        return Err(Error::InvalidParameter(format!(
            "Geweke needs at least {MIN_GEWEKE_LEN} draws, got {}",
            xs.len()
        )));
    }
    if !(frac_a > 0.0 && frac_b > 0.0 && frac_a + frac_b <= 1.0) {
        return Err(Error::InvalidParameter(format!("Geweke fractions {frac_a}, {frac_b}")));
    }
    let n = xs.len();
    let n_a = ((frac_a * n as f64).round() as usize).max(2);
    let n_b = ((frac_b * n as f64).round() as usize).max(2);
    let (m_a, v_a) = batch_mean_stats(&xs[..n_a], GEWEKE_BATCHES);
    let (m_b, v_b) = batch_mean_stats(&xs[n - n_b..], GEWEKE_BATCHES);
    let denom = (v_a + v_b).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((m_a - m_b) / denom)
}

/// Geweke z per parameter with the default 10% / 50% segments.
pub fn geweke(chain: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = chain_dim(chain)?;
    (0..dim)
        .map(|j| geweke_scalar(&column(chain, j), GEWEKE_FIRST, GEWEKE_LAST))
        .collect()
}

/// Potential scale reduction of scalar traces, each split into halves. Clamped below at 1;
/// zero within-chain variance gives 1.
pub fn gelman_rubin_scalar(traces: &[Vec<f64>]) -> Result<f64> {
    if traces.len() < 2 {
        return Err(Error::InvalidParameter("Gelman-Rubin needs at least two chains".into()));
    }
    let len = traces[0].len();
    if traces.iter().any(|t| t.len() != len) {
        return Err(Error::InvalidParameter(
            "Gelman-Rubin needs chains of equal length".into(),
        ));
    }
    if len < MIN_RHAT_LEN {
        return Err(Error::InvalidParameter(format!(
            "Gelman-Rubin needs chains of at least {MIN_RHAT_LEN} draws"
        )));
    }
    let half = len / 2;
    let halves: Vec<&[f64]> = traces.iter().flat_map(|t| [&t[..half], &t[len - half..]]).collect();
    let n = half as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = halves.iter().map(|h| variance(h)).sum::<f64>() / halves.len() as f64;
    let b = n * variance(&means);
    if w <= 0.0 {
        return Ok(1.0);
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt().max(1.0))
}

/// Split R-hat per parameter.
pub fn gelman_rubin(chains: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
    let first = chains.first().ok_or_else(|| Error::Empty("chains".into()))?;
    let dim = chain_dim(first)?;
    for c in chains {
        if chain_dim(c)? != dim {
            return Err(Error::DimensionMismatch("chains of different dimension".into()));
        }
    }
    (0..dim)
        .map(|j| {
            let traces: Vec<Vec<f64>> = chains.iter().map(|c| column(c, j)).collect();
            gelman_rubin_scalar(&traces)
        })
        .collect()
}

fn autocorr_at(centered: &[f64], c0: f64, lag: usize) -> f64 {
    let n = centered.len();
    let c: f64 = centered[..n - lag]
        .iter()
        .zip(&centered[lag..])
        .map(|(a, b)| a * b)
        .sum();
    c / n as f64 / c0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrEss {
    /// Autocorrelation at lags 1..=50 (fewer for short traces).
    pub acf: Vec<f64>,
    pub ess: f64,
}

/// Autocorrelation by direct sums, and `ESS = n / (1 + 2 sum rho_k)` with the sum stopped at
/// the first negative `rho_k`, clamped to `[1, n]`.
pub fn autocorr_ess_scalar(xs: &[f64]) -> Result<AutocorrEss> {
    let n = xs.len();
    if n < MIN_ACF_LEN {
        return Err(Error::InvalidParameter(format!(
            "autocorrelation needs at least {MIN_ACF_LEN} draws, got {n}"
        )));
    }
    let m = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    let max_lag = ACF_LAGS.min(n - 1);
    if c0 <= 0.0 {
        return Ok(AutocorrEss {
            acf: vec![1.0; max_lag],
            ess: 1.0,
        });
    }
    let acf: Vec<f64> = (1..=max_lag).map(|k| autocorr_at(&centered, c0, k)).collect();
    let mut sum = 0.0;
    for k in 1..n {
        let rho = if k <= max_lag {
            acf[k - 1]
        } else {
            autocorr_at(&centered, c0, k)
        };
        if rho < 0.0 {
            break;
        }
        sum += rho;
    }
    let ess = (n as f64 / (1.0 + 2.0 * sum)).clamp(1.0, n as f64);
    Ok(AutocorrEss { acf, ess })
}

/// Autocorrelation and ESS per parameter of one chain.
pub fn autocorr_ess(chain: &[Vec<f64>]) -> Result<Vec<AutocorrEss>> {
    let dim = chain_dim(chain)?;
    (0..dim).map(|j| autocorr_ess_scalar(&column(chain, j))).collect()
}

//! Diagonal-covariance Gaussian mixture fitted by EM, used to pick well-spread chain starts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_COMPONENTS: usize = 4;
const MAX_ITER: usize = 200;
const LOGLIK_TOL: f64 = 1e-6;
const MAX_RESEEDS: usize = 5;
/// Variance floor relative to the overall per-axis variance (absolute floor for flat axes).
const VAR_FLOOR_REL: f64 = 1e-6;
const VAR_FLOOR_ABS: f64 = 1e-12;
/// A component whose total responsibility falls below this is treated as empty.
const EMPTY_MASS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureInit {
    pub means: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Diagonal covariances.
    pub variances: Vec<Vec<f64>>,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl MixtureInit {
    pub fn k(&self) -> usize {
        self.means.len()
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp<R: Rng + ?Sized>(samples: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = samples.len();
    let mut centers = vec![samples[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = samples.iter().map(|s| dist2(s, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = samples[idx].clone();
        for (s, d) in samples.iter().zip(d2.iter_mut()) {
            *d = d.min(dist2(s, &c));
        }
        centers.push(c);
    }
    centers
}

fn log_normal_diag(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((xi, mi), vi) in x.iter().zip(mean).zip(var) {
        let r = xi - mi;
        acc += r * r / vi + vi.ln() + std::f64::consts::TAU.ln();
    }
    -0.5 * acc
}

/// Fits a `k`-component diagonal Gaussian mixture to `samples` (k-means++ start, at most 200 EM
/// iterations, stopping when the mean log-likelihood improves by less than 1e-6).
pub fn fit_mixture<R: Rng + ?Sized>(samples: &[Vec<f64>], k: usize, rng: &mut R) -> Result<MixtureInit> {
    if k == 0 {
        return Err(Error::InvalidParameter("mixture needs k >= 1".into()));
    }
    if samples.len() < 10 * k {
        return Err(Error::InvalidParameter(format!(
            "mixture with k = {k} needs at least {} samples, got {}",
            10 * k,
            samples.len()
        )));
    }
    let dim = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
        return Err(Error::LengthMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mixture samples".into()));
    }
    let n = samples.len();
    let nf = n as f64;

    let overall_mean: Vec<f64> = (0..dim)
        .map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / nf)
        .collect();
    let overall_var: Vec<f64> = (0..dim)
        .map(|j| samples.iter().map(|s| (s[j] - overall_mean[j]).powi(2)).sum::<f64>() / nf)
        .collect();
    let floor: Vec<f64> = overall_var
        .iter()
        .map(|v| (v * VAR_FLOOR_REL).max(VAR_FLOOR_ABS))
        .collect();
    let start_var: Vec<f64> = overall_var.iter().zip(&floor).map(|(v, f)| v.max(*f)).collect();

    let mut means = kmeans_pp(samples, k, rng);
    let mut variances = vec![start_var.clone(); k];
    let mut weights = vec![1.0 / k as f64; k];
    let mut resp = vec![0.0; n * k];
    let mut prev_ll = f64::NEG_INFINITY;
    let mut ll = f64::NEG_INFINITY;
    let mut reseeds = 0;
    let mut iterations = 0;

    for it in 0..MAX_ITER {
        iterations = it + 1;
        // E step
        let mut total = 0.0;
        for (i, s) in samples.iter().enumerate() {
            let row = &mut resp[i * k..(i + 1) * k];
            for c in 0..k {
                row[c] = weights[c].ln() + log_normal_diag(s, &means[c], &variances[c]);
            }
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|r| (r - m).exp()).sum();
            let lse = m + z.ln();
            for r in row.iter_mut() {
                *r = (*r - lse).exp();
            }
            total += lse;
        }
        ll = total / nf;

        // M step
        let mut reseeded = false;
        for c in 0..k {
            let mass: f64 = (0..n).map(|i| resp[i * k + c]).sum();
            if mass < EMPTY_MASS {
                if reseeds < MAX_RESEEDS {
                    reseeds += 1;
                    reseeded = true;
                    means[c] = samples[rng.random_range(0..n)].clone();
                    variances[c] = start_var.clone();
                    weights[c] = 1.0 / k as f64;
                } else {
                    weights[c] = 0.0;
                }
                continue;
            }
            weights[c] = mass / nf;
            for j in 0..dim {
                let m = (0..n).map(|i| resp[i * k + c] * samples[i][j]).sum::<f64>() / mass;
                let v = (0..n)
                    .map(|i| resp[i * k + c] * (samples[i][j] - m).powi(2))
                    .sum::<f64>()
                    / mass;
                means[c][j] = m;
                variances[c][j] = v.max(floor[j]);
            }
        }
        let wsum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= wsum;
        }
        if !reseeded && (ll - prev_ll).abs() < LOGLIK_TOL {
            break;
        }
        prev_ll = ll;
    }

    // a component that stayed empty after every re-seed keeps its last (data-point) mean
    for w in weights.iter_mut().take(k) {
        if *w == 0.0 {
            *w = f64::MIN_POSITIVE;
        }
    }
    let wsum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= wsum;
    }

    Ok(MixtureInit {
        means,
        weights,
        variances,
        iterations,
        log_likelihood: ll,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn separates_two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let centers = [[0.1, 0.4], [0.45, 0.1]];
        let noise = Normal::new(0.0, 0.02).unwrap();
        let samples: Vec<Vec<f64>> = (0..2000)
            .map(|i| centers[i % 2].iter().map(|c| c + noise.sample(&mut rng)).collect())
            .collect();
        let mix = fit_mixture(&samples, 2, &mut rng).unwrap();
        for c in centers {
            let nearest = mix
                .means
                .iter()
                .map(|m| dist2(m, &c).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 0.1, "no mean near {c:?}: {:?}", mix.means);
        }
        assert!((mix.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(mix.weights.iter().all(|w| (w - 0.5).abs() < 0.05));
    }

    #[test]
    fn identical_samples_give_that_point() {
        let samples = vec![vec![0.2, 0.3]; 50];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mix = fit_mixture(&samples, 1, &mut rng).unwrap();
        assert!((mix.means[0][0] - 0.2).abs() < 1e-14 && (mix.means[0][1] - 0.3).abs() < 1e-14);
        assert_eq!(mix.weights, vec![1.0]);
    }

    #[test]
    fn four_components_on_unimodal_data_stay_in_the_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.25, 0.05).unwrap();
        let samples: Vec<Vec<f64>> = (0..5000)
            .map(|_| vec![noise.sample(&mut rng), noise.sample(&mut rng)])
            .collect();
        let mix = fit_mixture(&samples, 4, &mut rng).unwrap();
        assert_eq!(mix.k(), 4);
        for j in 0..2 {
            let lo = samples.iter().map(|s| s[j]).fold(f64::INFINITY, f64::min);
            let hi = samples.iter().map(|s| s[j]).fold(f64::NEG_INFINITY, f64::max);
            assert!(mix.means.iter().all(|m| m[j] >= lo - 1e-12 && m[j] <= hi + 1e-12));
        }
        assert!((mix.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples_rejected() {
        let samples = vec![vec![0.0]; 39];
        assert!(fit_mixture(&samples, 4, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let samples: Vec<Vec<f64>> = (0..400)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let a = fit_mixture(&samples, 4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = fit_mixture(&samples, 4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}

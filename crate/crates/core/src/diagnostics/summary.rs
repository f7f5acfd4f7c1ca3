//! Posterior summaries: moments, KDE modes, bimodality flags, node maps, correlations and the
//! switching indicator for coupled parameters.

use serde::{Deserialize, Serialize};

use super::convergence::{column, mean, variance};
use crate::error::{Error, Result};
use crate::forward::grid::{expand_unchecked, RegionPartition, A_MAX, A_MIN};

pub const KDE_GRID_POINTS: usize = 512;
/// A secondary KDE peak at least this fraction of the main peak marks a marginal as bimodal.
pub const BIMODAL_RATIO: f64 = 0.5;
/// Two local maxima count as separate peaks only if the density dips below this fraction of
/// the lower one between them.
const PEAK_SEPARATION: f64 = 0.9;
pub const SWITCHING_THRESHOLD: f64 = -0.5;
const MIN_SUMMARY_SAMPLES: usize = 100;
const MIN_SWITCHING_LEN: usize = 1000;

/// Gaussian kernel density estimate of one marginal on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `0.9 min(sd, IQR / 1.34) n^(-1/5)`, falling back to `sd` when the IQR is 0.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let sd = variance(xs).sqrt();
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (xs.len() as f64).powf(-0.2)
}

/// KDE on `n_grid` points spanning `[lo, hi]`. A zero bandwidth (point mass) gives an
/// all-zero density except at the grid point nearest the value.
pub fn marginal_kde(xs: &[f64], lo: f64, hi: f64, n_grid: usize) -> Kde {
    let n_grid = n_grid.max(2);
    let step = (hi - lo) / (n_grid - 1) as f64;
    let grid: Vec<f64> = (0..n_grid).map(|k| lo + step * k as f64).collect();
    let h = silverman_bandwidth(xs);
    let density = if h > 0.0 {
        let norm = 1.0 / (xs.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        grid.iter()
            .map(|g| {
                norm * xs
                    .iter()
                    .map(|x| {
                        let z = (g - x) / h;
                        (-0.5 * z * z).exp()
                    })
                    .sum::<f64>()
            })
            .collect()
    } else {
        let mut d = vec![0.0; n_grid];
        let k = (((xs[0] - lo) / step).round().max(0.0) as usize).min(n_grid - 1);
        d[k] = 1.0;
        d
    };
    Kde {
        grid,
        density,
        bandwidth: h,
    }
}

/// Indices of the separated local maxima of `d`, highest first.
fn peaks(d: &[f64]) -> Vec<usize> {
    let n = d.len();
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || d[i] > d[i - 1];
            let right = i + 1 == n || d[i] >= d[i + 1];
            left && right && d[i] > 0.0
        })
        .collect();
    candidates.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        let separated = kept.iter().all(|&k| {
            let (a, b) = if k < c { (k, c) } else { (c, k) };
            let valley = d[a..=b].iter().cloned().fold(f64::INFINITY, f64::min);
            valley < PEAK_SEPARATION * d[c]
        });
        if separated {
            kept.push(c);
        }
    }
    kept
}

impl Kde {
    /// Grid argmax, clamped into `[min, max]` of the data.
    pub fn mode(&self, xs: &[f64]) -> f64 {
        let best = self
            .density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if self.bandwidth <= 0.0 {
            return xs[0];
        }
        self.grid[best].clamp(lo, hi)
    }

    pub fn is_bimodal(&self) -> bool {
        let p = peaks(&self.density);
        p.len() >= 2 && self.density[p[1]] >= BIMODAL_RATIO * self.density[p[0]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_samples: usize,
    pub mean: Vec<f64>,
    pub mode: Vec<f64>,
    pub std: Vec<f64>,
    pub bimodal: Vec<bool>,
    pub mean_map: Vec<f64>,
    pub mode_map: Vec<f64>,
    pub std_map: Vec<f64>,
    /// Pairwise Pearson correlations (0 where a marginal has no spread).
    pub correlation: Vec<Vec<f64>>,
    #[serde(skip)]
    pub kde: Vec<Kde>,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Mean, standard deviation and KDE mode of every marginal (KDE on 512 points over the
/// excitability range), pushed through `partition` to per-node maps.
pub fn summarize(pooled: &[Vec<f64>], partition: &RegionPartition) -> Result<PosteriorSummary> {
    if pooled.len() < MIN_SUMMARY_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "summaries need at least {MIN_SUMMARY_SAMPLES} samples, got {}",
            pooled.len()
        )));
    }
    let dim = partition.n_regions;
    if let Some(bad) = pooled.iter().find(|x| x.len() != dim) {
        return Err(Error::LengthMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let cols: Vec<Vec<f64>> = (0..dim).map(|j| column(pooled, j)).collect();
    let mut means = Vec::with_capacity(dim);
    let mut modes = Vec::with_capacity(dim);
    let mut stds = Vec::with_capacity(dim);
    let mut bimodal = Vec::with_capacity(dim);
    let mut kdes = Vec::with_capacity(dim);
    for xs in &cols {
        let kde = marginal_kde(xs, A_MIN, A_MAX, KDE_GRID_POINTS);
        let m = mean(xs);
        let sd = variance(xs).sqrt();
        means.push(m);
        stds.push(sd);
        modes.push(if sd == 0.0 { m } else { kde.mode(xs) });
        bimodal.push(kde.is_bimodal());
        kdes.push(kde);
    }
    let correlation = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| if i == j { 1.0 } else { pearson(&cols[i], &cols[j]) })
                .collect()
        })
        .collect();
    Ok(PosteriorSummary {
        n_samples: pooled.len(),
        mean_map: expand_unchecked(&means, partition),
        mode_map: expand_unchecked(&modes, partition),
        std_map: expand_unchecked(&stds, partition),
        mean: means,
        mode: modes,
        std: stds,
        bimodal,
        correlation,
        kde: kdes,
    })
}

/// Correlation between the traces of parameters `i` and `j`.
pub fn switching_score(chain: &[Vec<f64>], i: usize, j: usize) -> Result<f64> {
    if chain.len() < MIN_SWITCHING_LEN {
        return Err(Error::InvalidParameter(format!(
            "switching score needs at least {MIN_SWITCHING_LEN} draws, got {}",
            chain.len()
        )));
    }
    let dim = chain[0].len();
    if i >= dim || j >= dim {
        return Err(Error::DimensionMismatch(format!(
            "parameters {i}, {j} of a {dim}-dimensional chain"
        )));
    }
    Ok(pearson(&column(chain, i), &column(chain, j)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchingIndicator {
    pub score: f64,
    pub bimodal_i: bool,
    pub bimodal_j: bool,
    /// Strong anticorrelation with both marginals bimodal.
    pub switching: bool,
}

pub fn switching_indicator(chain: &[Vec<f64>], i: usize, j: usize) -> Result<SwitchingIndicator> {
    let score = switching_score(chain, i, j)?;
    let flag = |k: usize| {
        let xs = column(chain, k);
        marginal_kde(&xs, A_MIN, A_MAX, KDE_GRID_POINTS).is_bimodal()
    };
    let (bimodal_i, bimodal_j) = (flag(i), flag(j));
    Ok(SwitchingIndicator {
        score,
        bimodal_i,
        bimodal_j,
        switching: score < SWITCHING_THRESHOLD && bimodal_i && bimodal_j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::grid::{build_grid, partition_grid};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn partition(rows: usize, cols: usize) -> RegionPartition {
        partition_grid(&build_grid(6, 6, 0.5).unwrap(), rows, cols).unwrap()
    }

    #[test]
    fn point_mass() {
        let pooled = vec![vec![0.31]; 200];
        let s = summarize(&pooled, &partition(1, 1)).unwrap();
        assert_eq!(s.mean, vec![0.31]);
        assert_eq!(s.mode, vec![0.31]);
        assert_eq!(s.std, vec![0.0]);
        assert!(!s.bimodal[0]);
    }

    #[test]
    fn narrow_gaussian_mean_and_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let nrm = Normal::new(0.2, 0.01).unwrap();
        let pooled: Vec<Vec<f64>> = (0..20_000)
            .map(|_| vec![nrm.sample(&mut rng)])
            .filter(|x: &Vec<f64>| (A_MIN..=A_MAX).contains(&x[0]))
            .collect();
        let s = summarize(&pooled, &partition(1, 1)).unwrap();
        assert!((s.mean[0] - 0.2).abs() < 0.005);
        assert!((s.mode[0] - 0.2).abs() < 0.005);
        assert!((s.std[0] - 0.01).abs() < 0.001);
        assert!(!s.bimodal[0]);
    }

    #[test]
    fn two_equal_bumps_are_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pooled: Vec<Vec<f64>> = (0..10_000)
            .map(|i| {
                let c = if i % 2 == 0 { 0.15 } else { 0.5 };
                vec![(c + 0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal)).clamp(A_MIN, A_MAX)]
            })
            .collect();
        let s = summarize(&pooled, &partition(1, 1)).unwrap();
        assert!(s.bimodal[0]);
        assert!(
            (s.mode[0] - 0.15).abs() < 0.01 || (s.mode[0] - 0.5).abs() < 0.01,
            "{}",
            s.mode[0]
        );
    }

    #[test]
    fn unequal_bumps_below_the_ratio_are_not_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pooled: Vec<Vec<f64>> = (0..10_000)
            .map(|i| {
                let c = if i % 5 == 0 { 0.15 } else { 0.4 };
                vec![c + 0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal)]
            })
            .collect();
        let s = summarize(&pooled, &partition(1, 1)).unwrap();
        assert!(!s.bimodal[0]);
    }

    #[test]
    fn maps_are_constant_on_regions() {
        let p = partition(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pooled: Vec<Vec<f64>> = (0..500)
            .map(|_| (0..6).map(|_| rng.random_range(0.0..0.52)).collect())
            .collect();
        let s = summarize(&pooled, &p).unwrap();
        for r in 0..6 {
            for n in p.nodes_in(r) {
                assert_eq!(s.mean_map[n], s.mean[r]);
                assert_eq!(s.mode_map[n], s.mode[r]);
                assert_eq!(s.std_map[n], s.std[r]);
            }
        }
        for i in 0..6 {
            assert_eq!(s.correlation[i][i], 1.0);
            for j in 0..6 {
                assert_eq!(s.correlation[i][j], s.correlation[j][i]);
            }
        }
    }

    #[test]
    fn switching_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let anti: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                let x = rng.random_range(0.0..0.5);
                vec![x, -x]
            })
            .collect();
        assert!((switching_score(&anti, 0, 1).unwrap() + 1.0).abs() < 1e-12);

        let indep: Vec<Vec<f64>> = (0..10_000)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        assert!(switching_score(&indep, 0, 1).unwrap().abs() < 0.1);

        let constant = vec![vec![0.1, 0.2]; 1000];
        assert_eq!(switching_score(&constant, 0, 1).unwrap(), 0.0);
        assert!(switching_score(&constant[..999], 0, 1).is_err());

        // two-state alternation: one high while the other is low, with dwell periods
        let noise = Normal::new(0.0, 0.015).unwrap();
        let mut high_first = true;
        let pair: Vec<Vec<f64>> = (0..5000)
            .map(|k| {
                if k % 250 == 0 {
                    high_first = !high_first;
                }
                let (a, b) = if high_first { (0.45, 0.15) } else { (0.15, 0.45) };
                vec![a + noise.sample(&mut rng), b + noise.sample(&mut rng)]
            })
            .collect();
        let ind = switching_indicator(&pair, 0, 1).unwrap();
        assert!(ind.score < -0.9);
        assert!(ind.bimodal_i && ind.bimodal_j && ind.switching);
    }

    proptest! {
        #[test]
        fn mode_lies_within_the_sample_range(xs in proptest::collection::vec(0.0f64..0.52, 100..300)) {
            let pooled: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
            let s = summarize(&pooled, &partition(1, 1)).unwrap();
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s.mode[0] >= lo && s.mode[0] <= hi);
            prop_assert!(s.std[0] >= 0.0);
        }
    }
}

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kernel::KernelHyper;
use crate::error::{Error, Result};

/// Jitter is escalated by x10 on factorization failure, up to this value.
pub const MAX_JITTER: f64 = 1e-4;
const DUPLICATE_TOL: f64 = 1e-12;

/// Training inputs and finite targets. Targets are centred on `y_mean` before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub y_mean: f64,
}

impl TrainingSet {
    pub fn empty() -> Self {
        Self {
            x: Vec::new(),
            y: Vec::new(),
            y_mean: 0.0,
        }
    }

    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        let mut set = Self::empty();
        for (xi, yi) in x.into_iter().zip(y) {
            set.push(xi, yi)?;
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.x.first().map(Vec::len)
    }

    pub fn nearest_distance(&self, x: &[f64]) -> f64 {
        self.x
            .iter()
            .map(|xi| xi.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains_near(&self, x: &[f64]) -> bool {
        self.nearest_distance(x) < DUPLICATE_TOL
    }

    /// Appends a point; rejects non-finite values, wrong dimensions and duplicates.
    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("training point {x:?} -> {y}")));
        }
        if let Some(d) = self.dim() {
            if x.len() != d {
                return Err(Error::LengthMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
        }
        if self.contains_near(&x) {
            return Err(Error::InvalidParameter(format!("duplicate training input {x:?}")));
        }
        self.x.push(x);
        self.y.push(y);
        self.y_mean = self.y.iter().sum::<f64>() / self.y.len() as f64;
        Ok(())
    }

    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.y
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &y)| (self.x[i].as_slice(), y))
    }

    pub(crate) fn centered(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.y.iter().map(|y| y - self.y_mean))
    }
}

/// A fitted GP: the factor of `K + jitter I` and the weights `(K + jitter I)^{-1} (y - y_mean)`.
#[derive(Debug, Clone)]
pub struct GPModel {
    pub training: TrainingSet,
    pub hyper: KernelHyper,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
}

pub(crate) fn kernel_matrix(x: &[Vec<f64>], hyper: &KernelHyper) -> DMatrix<f64> {
    let m = x.len();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        k[(i, i)] = hyper.amplitude2;
        for j in 0..i {
            let v = hyper.eval(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Factorizes the kernel matrix, escalating the jitter x10 up to [`MAX_JITTER`] on failure.
pub fn fit_gp(training: TrainingSet, hyper: KernelHyper) -> Result<GPModel> {
    if training.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if training.dim() != Some(hyper.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "training inputs of dimension {:?}, kernel of dimension {}",
            training.dim(),
            hyper.dim()
        )));
    }
    hyper.validate()?;
    let k = kernel_matrix(&training.x, &hyper);
    let mut hyper = hyper;
    loop {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += hyper.jitter;
        }
        if let Some(chol) = kj.cholesky() {
            let weights = chol.solve(&training.centered());
            return Ok(GPModel {
                training,
                hyper,
                chol,
                weights,
            });
        }
        if hyper.jitter >= MAX_JITTER {
            return Err(Error::NotPositiveDefinite { jitter: hyper.jitter });
        }
        hyper.jitter = (hyper.jitter * 10.0).min(MAX_JITTER);
    }
}

impl GPModel {
    pub fn dim(&self) -> usize {
        self.hyper.dim()
    }

    pub fn len(&self) -> usize {
        self.training.len()
    }

    pub fn is_empty(&self) -> bool {
        self.training.is_empty()
    }

    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    fn cross_cov(&self, theta: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.training.x.iter().map(|xi| self.hyper.eval(xi, theta)))
    }

    /// Posterior mean only, in O(M).
    pub fn mean(&self, theta: &[f64]) -> f64 {
        let mut acc = self.training.y_mean;
        for (xi, w) in self.training.x.iter().zip(self.weights.iter()) {
            acc += w * self.hyper.eval(xi, theta);
        }
        acc
    }

    /// Posterior mean and standard deviation at `theta`.
    pub fn predict(&self, theta: &[f64]) -> Result<(f64, f64)> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "query of dimension {}, model of dimension {}",
                theta.len(),
                self.dim()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("query {theta:?}")));
        }
        let ks = self.cross_cov(theta);
        let mu = self.training.y_mean + ks.dot(&self.weights);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("Cholesky factor has a positive diagonal");
        let var = self.hyper.amplitude2 - v.norm_squared();
        Ok((mu, var.max(0.0).sqrt()))
    }

    /// `log p(y | X, hyper)` for the centred targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let z = self.training.centered();
        let m = self.len() as f64;
        let log_det_half: f64 = self
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .take(self.len())
            .map(|d| d.ln())
            .sum();
        -0.5 * z.dot(&self.weights) - log_det_half - 0.5 * m * (2.0 * std::f64::consts::PI).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense oracle: explicit kernel matrix solved by LU, no cached factorization.
    fn oracle_predict(x: &[Vec<f64>], y: &[f64], hyper: &KernelHyper, q: &[f64]) -> (f64, f64) {
        let m = x.len();
        let y_mean = y.iter().sum::<f64>() / m as f64;
        let k = DMatrix::from_fn(m, m, |i, j| {
            super::super::kernel::matern52(&x[i], &x[j], hyper).unwrap() + if i == j { hyper.jitter } else { 0.0 }
        });
        let ks = DVector::from_fn(m, |i, _| super::super::kernel::matern52(&x[i], q, hyper).unwrap());
        let z = DVector::from_fn(m, |i, _| y[i] - y_mean);
        let lu = k.lu();
        let alpha = lu.solve(&z).unwrap();
        let beta = lu.solve(&ks).unwrap();
        let var = hyper.amplitude2 - ks.dot(&beta);
        (y_mean + ks.dot(&alpha), var.max(0.0).sqrt())
    }

    fn random_set(rng: &mut ChaCha8Rng, m: usize, r: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..m).map(|_| (0..r).map(|_| rng.random::<f64>()).collect()).collect();
        let y = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        (x, y)
    }

    #[test]
    fn single_point_interpolates() {
        let hyper = KernelHyper::isotropic(2, 0.5, 1.0);
        let gp = fit_gp(
            TrainingSet::new(vec![vec![0.2, 0.3]], vec![-4.0]).unwrap(),
            hyper.clone(),
        )
        .unwrap();
        let (mu, sigma) = gp.predict(&[0.2, 0.3]).unwrap();
        assert!((mu + 4.0).abs() < 1e-9);
        assert!((sigma * sigma - hyper.jitter).abs() < 1e-12);
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let hyper = KernelHyper::isotropic(1, 0.1, 2.0);
        let gp = fit_gp(
            TrainingSet::new(vec![vec![0.0], vec![0.3]], vec![1.0, 3.0]).unwrap(),
            hyper,
        )
        .unwrap();
        let (mu, sigma) = gp.predict(&[1e6]).unwrap();
        assert_eq!(mu, 2.0);
        assert!((sigma - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cholesky_reconstructs_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (x, y) = random_set(&mut rng, 5, 3);
        let hyper = KernelHyper::new(vec![0.4, 0.7, 1.1], 1.5, 1e-8).unwrap();
        let gp = fit_gp(TrainingSet::new(x.clone(), y).unwrap(), hyper.clone()).unwrap();
        let l = gp.cholesky_factor();
        let mut k = kernel_matrix(&x, &hyper);
        for i in 0..5 {
            k[(i, i)] += gp.hyper.jitter;
        }
        let err = (&l * l.transpose() - &k).norm() / k.norm();
        assert!(err < 1e-8);
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (x, y) = random_set(&mut rng, 10, 2);
            let hyper =
                KernelHyper::new(vec![rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)], 1.0, 1e-8).unwrap();
            let gp = fit_gp(TrainingSet::new(x.clone(), y.clone()).unwrap(), hyper.clone()).unwrap();
            for _ in 0..5 {
                let q = [rng.random::<f64>(), rng.random::<f64>()];
                let (mu, sigma) = gp.predict(&q).unwrap();
                let (mu_o, sigma_o) = oracle_predict(&x, &y, &hyper, &q);
                assert!((mu - mu_o).abs() < 1e-8, "{mu} vs {mu_o}");
                assert!((sigma - sigma_o).abs() < 1e-8, "{sigma} vs {sigma_o}");
            }
        }
    }

    #[test]
    fn interpolates_training_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (x, y) = random_set(&mut rng, 12, 3);
        let hyper = KernelHyper::new(vec![0.3, 0.5, 0.4], 2.0, 1e-10).unwrap();
        let gp = fit_gp(TrainingSet::new(x.clone(), y.clone()).unwrap(), hyper).unwrap();
        let range = y.iter().cloned().fold(f64::MIN, f64::max) - y.iter().cloned().fold(f64::MAX, f64::min);
        for (xi, yi) in x.iter().zip(&y) {
            let (mu, _) = gp.predict(xi).unwrap();
            assert!((mu - yi).abs() <= 1e-4 * range);
            assert!((mu - yi).abs() <= 10.0 * gp.hyper.jitter.sqrt());
        }
    }

    #[test]
    fn far_point_leaves_local_predictions_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (x, y) = random_set(&mut rng, 6, 2);
        let hyper = KernelHyper::isotropic(2, 0.3, 1.0);
        let before = fit_gp(TrainingSet::new(x.clone(), y.clone()).unwrap(), hyper.clone()).unwrap();
        let mut x2 = x.clone();
        let mut y2 = y.clone();
        x2.push(vec![40.0, 40.0]);
        y2.push(-2.5);
        let after = fit_gp(TrainingSet::new(x2.clone(), y2.clone()).unwrap(), hyper.clone()).unwrap();
        for xi in &x {
            // the centring constant moves with the new target, so only probes close to
            // old data are shielded from it
            for offset in [[0.0, 0.0], [1e-7, 0.0], [0.0, -1e-7]] {
                let q = [xi[0] + offset[0], xi[1] + offset[1]];
                let (old_o, _) = oracle_predict(&x, &y, &hyper, &q);
                let (new_o, _) = oracle_predict(&x2, &y2, &hyper, &q);
                assert!((old_o - new_o).abs() < 1e-6, "oracle shift {}", old_o - new_o);
                let shift = after.predict(&q).unwrap().0 - before.predict(&q).unwrap().0;
                assert!(shift.abs() < 1e-6, "shift {shift}");
            }
        }
    }

    #[test]
    fn adding_points_never_raises_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, y) = random_set(&mut rng, 8, 2);
        let hyper = KernelHyper::isotropic(2, 0.25, 1.0);
        let probes: Vec<[f64; 2]> = (0..20).map(|_| [rng.random(), rng.random()]).collect();
        let mut prev: Option<Vec<f64>> = None;
        for m in 1..=x.len() {
            let gp = fit_gp(
                TrainingSet::new(x[..m].to_vec(), y[..m].to_vec()).unwrap(),
                hyper.clone(),
            )
            .unwrap();
            let var: Vec<f64> = probes.iter().map(|p| gp.predict(p).unwrap().1.powi(2)).collect();
            if let Some(prev) = &prev {
                for (a, b) in var.iter().zip(prev) {
                    assert!(*a <= b + 1e-10);
                }
            }
            prev = Some(var);
        }
    }

    #[test]
    fn jitter_escalates_for_near_duplicates() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![0.5 + i as f64 * 1e-9]).collect();
        let y = vec![1.0; 6];
        let gp = fit_gp(TrainingSet::new(x, y).unwrap(), KernelHyper::isotropic(1, 1.0, 1e9)).unwrap();
        assert!(gp.hyper.jitter > 1e-10);
    }

    #[test]
    fn rejects_duplicates_and_non_finite() {
        let mut t = TrainingSet::empty();
        t.push(vec![0.1, 0.2], 1.0).unwrap();
        assert!(t.push(vec![0.1, 0.2], 2.0).is_err());
        assert!(t.push(vec![0.3, 0.2], f64::NEG_INFINITY).is_err());
        assert!(t.push(vec![0.3], 0.0).is_err());
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn predict_rejects_non_finite() {
        let gp = fit_gp(
            TrainingSet::new(vec![vec![0.0]], vec![0.0]).unwrap(),
            KernelHyper::isotropic(1, 1.0, 1.0),
        )
        .unwrap();
        assert!(gp.predict(&[f64::NAN]).is_err());
        assert!(gp.predict(&[0.0, 1.0]).is_err());
    }
}

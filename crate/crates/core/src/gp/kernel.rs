use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_JITTER: f64 = 1e-10;

/// Hyperparameters of the anisotropic Matern 5/2 kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHyper {
    pub lengthscales: Vec<f64>,
    /// Signal variance `alpha^2`.
    pub amplitude2: f64,
    pub jitter: f64,
}

impl KernelHyper {
    pub fn new(lengthscales: Vec<f64>, amplitude2: f64, jitter: f64) -> Result<Self> {
        let h = Self {
            lengthscales,
            amplitude2,
            jitter,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn isotropic(dim: usize, lengthscale: f64, amplitude2: f64) -> Self {
        Self {
            lengthscales: vec![lengthscale; dim],
            amplitude2,
            jitter: MIN_JITTER,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = !self.lengthscales.is_empty()
            && self.lengthscales.iter().all(|l| *l > 0.0 && l.is_finite())
            && self.amplitude2 > 0.0
            && self.amplitude2.is_finite()
            && self.jitter >= MIN_JITTER
            && self.jitter.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("kernel hyperparameters {self:?}")))
        }
    }

    /// Scaled squared distance `sum_i (x1_i - x2_i)^2 / l_i^2`.
    #[inline]
    pub fn scaled_dist2(&self, x1: &[f64], x2: &[f64]) -> f64 {
        x1.iter()
            .zip(x2)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| {
                let r = (a - b) / l;
                r * r
            })
            .sum()
    }

    #[inline]
    pub(crate) fn eval(&self, x1: &[f64], x2: &[f64]) -> f64 {
        matern52_from_dist2(self.scaled_dist2(x1, x2), self.amplitude2)
    }
}

/// `alpha^2 (1 + s + s^2/3) exp(-s)` with `s = sqrt(5 d^2)`.
#[inline]
pub fn matern52_from_dist2(d2: f64, amplitude2: f64) -> f64 {
    let s = (5.0 * d2).sqrt();
    amplitude2 * (1.0 + s + s * s / 3.0) * (-s).exp()
}

pub fn matern52(x1: &[f64], x2: &[f64], hyper: &KernelHyper) -> Result<f64> {
    if x1.len() != x2.len() || x1.len() != hyper.dim() {
        return Err(Error::DimensionMismatch(format!(
            "kernel inputs of length {} and {} with {} lengthscales",
            x1.len(),
            x2.len(),
            hyper.dim()
        )));
    }
    Ok(hyper.eval(x1, x2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    #[test]
    fn zero_distance_gives_amplitude() {
        let h = KernelHyper::new(vec![0.3, 2.0], 1.7, 1e-8).unwrap();
        assert_eq!(matern52(&[0.1, 0.2], &[0.1, 0.2], &h).unwrap(), 1.7);
    }

    #[test]
    fn unit_distance_value() {
        // closed form evaluated independently: (1 + sqrt5 + 5/3) e^{-sqrt5}
        let r5 = 5f64.sqrt();
        let expected = (1.0 + r5 + 5.0 / 3.0) * (-r5).exp();
        assert!((expected - 0.52399).abs() < 1e-5);
        let h = KernelHyper::isotropic(1, 1.0, 1.0);
        let got = matern52(&[0.0], &[1.0], &h).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn decays_monotonically() {
        let h = KernelHyper::isotropic(1, 1.0, 1.0);
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let v = matern52(&[0.0], &[k as f64 * 0.25], &h).unwrap();
            assert!(v < prev || (v == 0.0 && prev == 0.0));
            prev = v;
        }
        assert!(prev < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let h = KernelHyper::isotropic(2, 1.0, 1.0);
        assert!(matern52(&[0.0], &[1.0, 2.0], &h).is_err());
        assert!(matern52(&[0.0], &[1.0], &h).is_err());
    }

    #[test]
    fn invalid_hyper_rejected() {
        assert!(KernelHyper::new(vec![0.0], 1.0, 1e-8).is_err());
        assert!(KernelHyper::new(vec![1.0], -1.0, 1e-8).is_err());
        assert!(KernelHyper::new(vec![1.0], 1.0, 1e-12).is_err());
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric(x1 in proptest::collection::vec(-2.0f64..2.0, 3),
                               x2 in proptest::collection::vec(-2.0f64..2.0, 3),
                               ls in proptest::collection::vec(0.05f64..3.0, 3)) {
            let h = KernelHyper::new(ls, 1.3, 1e-8).unwrap();
            prop_assert_eq!(matern52(&x1, &x2, &h).unwrap(), matern52(&x2, &x1, &h).unwrap());
        }

        #[test]
        fn kernel_matrix_is_psd(pts in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 2), 1..20),
                                ls in proptest::collection::vec(0.05f64..2.0, 2)) {
            let h = KernelHyper::new(ls, 1.0, 1e-8).unwrap();
            let m = pts.len();
            let k = DMatrix::from_fn(m, m, |i, j| h.eval(&pts[i], &pts[j]));
            let min_eig = k.symmetric_eigen().eigenvalues.min();
            prop_assert!(min_eig > -1e-10, "min eigenvalue {}", min_eig);
        }
    }
}

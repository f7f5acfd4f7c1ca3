use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{A_MAX, A_MIN};

/// Axis-aligned closed box `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::LengthMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::Empty("bounds".into()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l <= u) || !l.is_finite() || !u.is_finite() {
                return Err(Error::InvalidParameter(format!("bad bound pair [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    /// The excitability prior box `[0, 0.52]^dim`.
    pub fn excitability(dim: usize) -> Self {
        Self::uniform(dim, A_MIN, A_MAX).expect("prior box is valid")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.width(i)).collect()
    }

    pub fn diagonal(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn clip(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Maps a point of the unit cube onto the box.
    pub fn from_unit(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, zi)| self.lower[i] + zi * self.width(i))
            .collect()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.lower[i] + rng.random::<f64>() * self.width(i))
            .collect()
    }

    /// Latin-hypercube design of `n` points: each axis is cut into `n` equal strata and
    /// every stratum is hit exactly once.
    pub fn latin_hypercube<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let dim = self.dim();
        let mut points = vec![vec![0.0; dim]; n];
        let mut perm: Vec<usize> = (0..n).collect();
        for d in 0..dim {
            // Fisher-Yates
            for k in (1..n).rev() {
                let j = rng.random_range(0..=k);
                perm.swap(k, j);
            }
            for (p, &stratum) in points.iter_mut().zip(&perm) {
                let z = (stratum as f64 + rng.random::<f64>()) / n as f64;
                p[d] = self.lower[d] + z * self.width(d);
            }
        }
        points
    }
}

//! Gaussian-process surrogate of the log-posterior.

pub mod acquisition;
pub mod kernel;
pub mod model;

pub use acquisition::{acquire_next, build_surrogate, optimize_hypers, ucb, AcquisitionConfig, SurrogateBuild};
pub use kernel::{matern52, matern52_from_dist2, KernelHyper};
pub use model::{fit_gp, GPModel, TrainingSet};

use crate::bounds::Bounds;
use crate::density::LogDensity;
use crate::error::Result;

/// The surrogate log-posterior: GP mean inside the box, `-inf` outside.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateDensity<'a> {
    pub gp: &'a GPModel,
    pub bounds: &'a Bounds,
}

impl<'a> SurrogateDensity<'a> {
    pub fn new(gp: &'a GPModel, bounds: &'a Bounds) -> Self {
        Self { gp, bounds }
    }
}

impl LogDensity for SurrogateDensity<'_> {
    fn dim(&self) -> usize {
        self.gp.dim()
    }

    fn log_density(&self, theta: &[f64]) -> Result<f64> {
        if !self.bounds.contains(theta) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.gp.mean(theta))
    }
}

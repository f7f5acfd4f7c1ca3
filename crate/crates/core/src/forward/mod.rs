//! Aliev-Panfilov forward simulation and the linear ECG measurement model.

pub mod ap;
pub mod grid;
pub mod measurement;

pub use ap::{simulate_ap, stability_bound, ApConstants, ApParams, SimulationResult, StimulusProtocol, TimeStepping};
pub use grid::{build_grid, expand_parameters, partition_grid, GridGeometry, RegionPartition, A_MAX, A_MIN};
pub use measurement::{add_noise, build_lead_field, electrodes_on_circle, measure_ecg, LeadField, Observation};

use crate::error::Result;

/// Everything needed to map region parameters to lead voltages.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub geometry: GridGeometry,
    pub partition: RegionPartition,
    pub constants: ApConstants,
    pub stimulus: StimulusProtocol,
    pub lead_field: LeadField,
    pub stepping: TimeStepping,
}

impl ForwardModel {
    pub fn n_params(&self) -> usize {
        self.partition.n_regions
    }

    pub fn simulate(&self, theta: &[f64]) -> Result<SimulationResult> {
        let a_field = expand_parameters(theta, &self.partition)?;
        let params = self.constants.with_excitability(a_field)?;
        simulate_ap(&self.geometry, &params, &self.stimulus, self.stepping)
    }

    /// `F(theta)`: simulate then measure.
    pub fn evaluate(&self, theta: &[f64]) -> Result<Observation> {
        measure_ecg(&self.simulate(theta)?, &self.lead_field)
    }
}

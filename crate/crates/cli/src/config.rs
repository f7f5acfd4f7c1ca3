//! JSON experiment configuration: the synthetic case, surrogate construction and sampling.

use std::path::Path;

use gpda_core::forward::{
    build_grid, build_lead_field, electrodes_on_circle, partition_grid, ApConstants, ForwardModel, GridGeometry,
    RegionPartition, StimulusProtocol, TimeStepping,
};
use gpda_core::gp::AcquisitionConfig;
use gpda_core::samplers::{SamplingMode, DEFAULT_BURN_IN, DEFAULT_CHAINS, DEFAULT_THIN};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub rows: usize,
    pub cols: usize,
}

/// Where the pacing current goes. Blocks are inclusive-exclusive node index ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StimulusConfig {
    Corner {
        size: usize,
        #[serde(default = "default_t_off")]
        t_off: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
    Block {
        i: [usize; 2],
        j: [usize; 2],
        #[serde(default = "default_t_off")]
        t_off: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
}

fn default_t_off() -> f64 {
    1.0
}

fn default_amplitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElectrodeConfig {
    /// Evenly spaced on a circle around the grid centre; radius in half-diagonals.
    Circle { count: usize, radius_factor: f64 },
    /// Explicit positions in grid coordinates.
    Explicit { positions: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: String,
    pub grid: GridConfig,
    pub partition: PartitionConfig,
    #[serde(default)]
    pub constants: ApConstants,
    pub theta_true: Vec<f64>,
    pub stimulus: StimulusConfig,
    pub stepping: TimeStepping,
    pub electrodes: ElectrodeConfig,
    /// Perturb electrode positions by up to 5% of the spacing, seeded from `seed`.
    #[serde(default)]
    pub electrode_jitter: bool,
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    pub init_design_size: usize,
}

fn default_chains() -> usize {
    DEFAULT_CHAINS
}
fn default_burn_in() -> f64 {
    DEFAULT_BURN_IN
}
fn default_thin() -> usize {
    DEFAULT_THIN
}
fn default_slice_draws() -> usize {
    20_000
}
fn default_mixture_k() -> usize {
    4
}
fn default_target_acceptance() -> [f64; 2] {
    [0.3, 0.4]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub mode: SamplingMode,
    #[serde(default = "default_chains")]
    pub chains: usize,
    pub steps: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in_frac: f64,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_slice_draws")]
    pub slice_draws: usize,
    #[serde(default = "default_mixture_k")]
    pub mixture_k: usize,
    #[serde(default = "default_target_acceptance")]
    pub target_acceptance: [f64; 2],
    /// Fixed proposal scale; skips tuning when set.
    #[serde(default)]
    pub sigma_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: CaseConfig,
    pub surrogate: SurrogateConfig,
    pub sampling: SamplingConfig,
    /// Master seed for everything after case generation.
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: String,
}

fn default_output() -> String {
    "out".into()
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl CaseConfig {
    pub fn geometry(&self) -> Result<GridGeometry, CliError> {
        Ok(build_grid(self.grid.nx, self.grid.ny, self.grid.h)?)
    }

    pub fn region_partition(&self, geometry: &GridGeometry) -> Result<RegionPartition, CliError> {
        Ok(partition_grid(geometry, self.partition.rows, self.partition.cols)?)
    }

    pub fn stimulus_protocol(&self, geometry: &GridGeometry) -> Result<StimulusProtocol, CliError> {
        let stim = match &self.stimulus {
            StimulusConfig::Corner { size, t_off, amplitude } => StimulusProtocol {
                t_off: *t_off,
                amplitude: *amplitude,
                ..StimulusProtocol::corner_block(geometry, *size)
            },
            StimulusConfig::Block { i, j, t_off, amplitude } => {
                if i[0] >= i[1] || j[0] >= j[1] || i[1] > geometry.nx || j[1] > geometry.ny {
                    return Err(invalid(format!("stimulus block i={i:?} j={j:?} outside the grid")));
                }
                StimulusProtocol {
                    stim_nodes: (i[0]..i[1])
                        .flat_map(|a| (j[0]..j[1]).map(move |b| geometry.index(a, b)))
                        .collect(),
                    t_on: 0.0,
                    t_off: *t_off,
                    amplitude: *amplitude,
                }
            }
        };
        stim.validate(geometry.n_nodes())?;
        Ok(stim)
    }

    pub fn electrode_positions(&self, geometry: &GridGeometry) -> Vec<[f64; 2]> {
        match &self.electrodes {
            ElectrodeConfig::Circle { count, radius_factor } => electrodes_on_circle(geometry, *count, *radius_factor),
            ElectrodeConfig::Explicit { positions } => positions.clone(),
        }
    }

    pub fn forward_model(&self) -> Result<ForwardModel, CliError> {
        self.constants.validate()?;
        let geometry = self.geometry()?;
        let partition = self.region_partition(&geometry)?;
        let stimulus = self.stimulus_protocol(&geometry)?;
        let electrodes = self.electrode_positions(&geometry);
        let lead_field = build_lead_field(&geometry, &electrodes, self.electrode_jitter.then_some(self.seed))?;
        Ok(ForwardModel {
            geometry,
            partition,
            constants: self.constants,
            stimulus,
            lead_field,
            stepping: self.stepping,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let model = self.forward_model()?;
        if self.theta_true.len() != model.n_params() {
            return Err(invalid(format!(
                "theta_true has {} entries but the partition has {} regions",
                self.theta_true.len(),
                model.n_params()
            )));
        }
        gpda_core::forward::grid::check_in_box(&self.theta_true)?;
        if !self.snr_db.is_finite() {
            return Err(invalid("snr_db must be finite"));
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| invalid(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => invalid(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.case.validate()?;
        let dim = self.case.theta_true.len();
        self.surrogate.acquisition.validate(dim)?;
        if self.surrogate.init_design_size < 2
            || self.surrogate.init_design_size > self.surrogate.acquisition.budget_max
        {
            return Err(invalid(format!(
                "init_design_size = {} must lie in [2, budget_max = {}]",
                self.surrogate.init_design_size, self.surrogate.acquisition.budget_max
            )));
        }
        let s = &self.sampling;
        if s.chains < 2 {
            return Err(invalid("sampling.chains must be at least 2"));
        }
        if s.steps == 0 {
            return Err(invalid("sampling.steps must be positive"));
        }
        if !(0.0..1.0).contains(&s.burn_in_frac) || s.thin == 0 {
            return Err(invalid("burn_in_frac must lie in [0, 1) and thin must be >= 1"));
        }
        if s.mixture_k == 0 || s.slice_draws < 10 * s.mixture_k {
            return Err(invalid("slice_draws must be at least 10 * mixture_k"));
        }
        let [lo, hi] = s.target_acceptance;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(invalid(format!("target_acceptance {:?}", s.target_acceptance)));
        }
        if let Some(sp) = s.sigma_p {
            if !(sp > 0.0) || !sp.is_finite() {
                return Err(invalid(format!("sigma_p = {sp} must be positive")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

//! Built-in case templates. The JSON files under `configs/` are these, serialized.

use gpda_core::forward::{ApConstants, TimeStepping};
use gpda_core::gp::AcquisitionConfig;
use gpda_core::samplers::SamplingMode;

use crate::config::{
    CaseConfig, ElectrodeConfig, ExperimentConfig, GridConfig, PartitionConfig, SamplingConfig, StimulusConfig,
    SurrogateConfig,
};

pub const HEALTHY: f64 = 0.15;
pub const INFARCT: f64 = 0.5;

fn sampling(steps: usize) -> SamplingConfig {
    SamplingConfig {
        mode: SamplingMode::TwoStage,
        chains: 4,
        steps,
        burn_in_frac: 0.25,
        thin: 2,
        slice_draws: 20_000,
        mixture_k: 4,
        target_acceptance: [0.3, 0.4],
        sigma_p: None,
    }
}

/// 20x20 sheet split into 3x3 regions with one infarcted block, paced from a corner and
/// observed by 120 leads at 20 dB.
pub fn standard_case() -> CaseConfig {
    let mut theta_true = vec![HEALTHY; 9];
    theta_true[4] = INFARCT;
    CaseConfig {
        name: "standard-3x3".into(),
        grid: GridConfig { nx: 20, ny: 20, h: 0.5 },
        partition: PartitionConfig { rows: 3, cols: 3 },
        constants: ApConstants::default(),
        theta_true,
        stimulus: StimulusConfig::Corner {
            size: 3,
            t_off: 1.0,
            amplitude: 1.0,
        },
        stepping: TimeStepping {
            dt: 0.01,
            t_end: 80.0,
            store_every: 100,
        },
        electrodes: ElectrodeConfig::Circle {
            count: 120,
            radius_factor: 1.2,
        },
        electrode_jitter: true,
        snr_db: 20.0,
        seed: 2018,
    }
}

pub fn standard_experiment() -> ExperimentConfig {
    ExperimentConfig {
        case: standard_case(),
        surrogate: SurrogateConfig {
            acquisition: AcquisitionConfig::default(),
            init_design_size: 20,
        },
        sampling: sampling(20_000),
        seed: 7,
        output_dir: "out/standard".into(),
    }
}

/// Cheap two-region variant: left and right halves of the sheet, coarse time step, a dozen
/// leads and a low SNR so that both parameters keep visible posterior spread.
pub fn pair_case() -> CaseConfig {
    CaseConfig {
        name: "pair-1x2".into(),
        grid: GridConfig { nx: 20, ny: 20, h: 0.5 },
        partition: PartitionConfig { rows: 1, cols: 2 },
        constants: ApConstants::default(),
        theta_true: vec![HEALTHY, HEALTHY],
        stimulus: StimulusConfig::Corner {
            size: 3,
            t_off: 1.0,
            amplitude: 1.0,
        },
        stepping: TimeStepping {
            dt: 0.1,
            t_end: 50.0,
            store_every: 10,
        },
        electrodes: ElectrodeConfig::Circle {
            count: 12,
            radius_factor: 1.2,
        },
        electrode_jitter: false,
        snr_db: -5.0,
        seed: 11,
    }
}

pub fn pair_experiment() -> ExperimentConfig {
    ExperimentConfig {
        case: pair_case(),
        surrogate: SurrogateConfig {
            acquisition: AcquisitionConfig {
                budget_max: 40,
                ..AcquisitionConfig::default()
            },
            init_design_size: 10,
        },
        sampling: sampling(33_334),
        seed: 3,
        output_dir: "out/pair".into(),
    }
}

/// Two regions mirrored across the middle column, paced symmetrically and observed only from
/// electrodes on the mirror line, so swapping the two parameters leaves the data unchanged.
pub fn switching_case() -> CaseConfig {
    let nx = 20;
    let h = 0.5;
    let cy = (nx as f64 - 1.0) * h / 2.0;
    let xm = (nx as f64 - 1.0) * h;
    let positions = (1..=4)
        .flat_map(|k| {
            let d = 1.5 * k as f64;
            [[-d, cy], [xm + d, cy]]
        })
        .collect();
    CaseConfig {
        name: "switching-1x2".into(),
        grid: GridConfig { nx, ny: nx, h },
        partition: PartitionConfig { rows: 1, cols: 2 },
        constants: ApConstants::default(),
        theta_true: vec![0.12, 0.18],
        stimulus: StimulusConfig::Block {
            i: [0, 3],
            j: [8, 12],
            t_off: 1.0,
            amplitude: 1.0,
        },
        stepping: TimeStepping {
            dt: 0.1,
            t_end: 50.0,
            store_every: 10,
        },
        electrodes: ElectrodeConfig::Explicit { positions },
        electrode_jitter: false,
        snr_db: 10.0,
        seed: 5,
    }
}

pub fn switching_experiment() -> ExperimentConfig {
    ExperimentConfig {
        case: switching_case(),
        surrogate: SurrogateConfig {
            acquisition: AcquisitionConfig {
                budget_max: 40,
                ..AcquisitionConfig::default()
            },
            init_design_size: 10,
        },
        sampling: sampling(10_000),
        seed: 1,
        output_dir: "out/switching".into(),
    }
}

/// Template by name, for `--config` shortcuts and the bundled JSON files.
pub fn by_name(name: &str) -> Option<ExperimentConfig> {
    match name {
        "standard" => Some(standard_experiment()),
        "pair" => Some(pair_experiment()),
        "switching" => Some(switching_experiment()),
        _ => None,
    }
}

pub const NAMES: [&str; 3] = ["standard", "pair", "switching"];

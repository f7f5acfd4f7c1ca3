//! Linear lead-field measurement model and synthetic measurement noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ap::SimulationResult;
use super::grid::GridGeometry;
use crate::error::{Error, Result};

/// `n_leads x n_nodes` transfer matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadField {
    pub n_leads: usize,
    pub n_nodes: usize,
    pub h: Vec<f64>,
}

impl LeadField {
    pub fn new(n_leads: usize, n_nodes: usize, h: Vec<f64>) -> Result<Self> {
        if n_leads == 0 {
            return Err(Error::Empty("lead field has no leads".into()));
        }
        if h.len() != n_leads * n_nodes {
            return Err(Error::DimensionMismatch(format!(
                "lead field data has {} entries, expected {n_leads}x{n_nodes}",
                h.len()
            )));
        }
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("lead field".into()));
        }
        if let Some(l) = (0..n_leads).find(|&l| h[l * n_nodes..(l + 1) * n_nodes].iter().all(|&x| x == 0.0)) {
            return Err(Error::InvalidParameter(format!("lead {l} has an all-zero row")));
        }
        Ok(Self { n_leads, n_nodes, h })
    }

    pub fn identity(n: usize) -> Self {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
        Self {
            n_leads: n,
            n_nodes: n,
            h,
        }
    }

    pub fn row(&self, lead: usize) -> &[f64] {
        &self.h[lead * self.n_nodes..(lead + 1) * self.n_nodes]
    }
}

/// `n_leads x n_times` lead voltages, row-major (one row per lead).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub n_leads: usize,
    pub n_times: usize,
    pub y: Vec<f64>,
    pub snr_db: Option<f64>,
}

impl Observation {
    pub fn mean_power(&self) -> f64 {
        if self.y.is_empty() {
            return 0.0;
        }
        self.y.iter().map(|x| x * x).sum::<f64>() / self.y.len() as f64
    }

    pub fn lead(&self, l: usize) -> &[f64] {
        &self.y[l * self.n_times..(l + 1) * self.n_times]
    }
}

/// Electrodes evenly spaced on a circle around the grid centre. `radius_factor` is in
/// units of the half-diagonal of the grid, so values `>= 1` keep every electrode off the tissue.
pub fn electrodes_on_circle(geometry: &GridGeometry, count: usize, radius_factor: f64) -> Vec<[f64; 2]> {
    let (xm, ym) = geometry.extent();
    let (cx, cy) = (xm / 2.0, ym / 2.0);
    let radius = radius_factor * (cx * cx + cy * cy).sqrt();
    (0..count)
        .map(|l| {
            let phi = 2.0 * std::f64::consts::PI * l as f64 / count as f64;
            [cx + radius * phi.cos(), cy + radius * phi.sin()]
        })
        .collect()
}

/// Inverse-distance lead field `H[l][n] = 1 / (|e_l - x_n| + h)`.
///
/// With a seed, each electrode is first displaced by a uniform offset of at most `0.05 h`
/// per axis; without one the construction is fully deterministic in the positions.
pub fn build_lead_field(geometry: &GridGeometry, electrodes: &[[f64; 2]], seed: Option<u64>) -> Result<LeadField> {
    if electrodes.is_empty() {
        return Err(Error::Empty("electrode list".into()));
    }
    if electrodes.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("electrode position".into()));
    }
    let positions: Vec<[f64; 2]> = match seed {
        None => electrodes.to_vec(),
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let amp = 0.05 * geometry.h;
            electrodes
                .iter()
                .map(|e| [e[0] + rng.random_range(-amp..=amp), e[1] + rng.random_range(-amp..=amp)])
                .collect()
        }
    };
    let n = geometry.n_nodes();
    let mut h = Vec::with_capacity(positions.len() * n);
    for e in &positions {
        for node in 0..n {
            let (x, y) = geometry.coords(node);
            let dist = ((e[0] - x).powi(2) + (e[1] - y).powi(2)).sqrt();
            h.push(1.0 / (dist + geometry.h));
        }
    }
    LeadField::new(positions.len(), n, h)
}

/// `Y[:, t] = H u[t, :]` for every stored frame.
pub fn measure_ecg(sim: &SimulationResult, lead_field: &LeadField) -> Result<Observation> {
    if lead_field.n_nodes != sim.n_nodes {
        return Err(Error::DimensionMismatch(format!(
            "lead field has {} columns, simulation has {} nodes",
            lead_field.n_nodes, sim.n_nodes
        )));
    }
    let (n_leads, n_times) = (lead_field.n_leads, sim.n_stored);
    let mut y = vec![0.0; n_leads * n_times];
    for t in 0..n_times {
        let u = sim.u_at(t);
        for l in 0..n_leads {
            y[l * n_times + t] = lead_field.row(l).iter().zip(u).map(|(a, b)| a * b).sum();
        }
    }
    Ok(Observation {
        n_leads,
        n_times,
        y,
        snr_db: None,
    })
}

/// Adds iid Gaussian noise of variance `mean(Y^2) * 10^(-snr_db / 10)`.
/// An infinite `snr_db` leaves the data untouched.
pub fn add_noise(obs: &Observation, snr_db: f64, seed: u64) -> Result<Observation> {
    if obs.y.is_empty() {
        return Err(Error::Empty("observation".into()));
    }
    if obs.y.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("observation".into()));
    }
    if snr_db.is_nan() {
        return Err(Error::NonFinite("snr_db".into()));
    }
    let mut out = obs.clone();
    out.snr_db = Some(snr_db);
    if snr_db == f64::INFINITY {
        return Ok(out);
    }
    let sigma = noise_std(obs.mean_power(), snr_db);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for x in &mut out.y {
        let z: f64 = rng.sample(StandardNormal);
        *x += sigma * z;
    }
    Ok(out)
}

pub(crate) fn noise_std(mean_power: f64, snr_db: f64) -> f64 {
    (mean_power * 10f64.powf(-snr_db / 10.0)).sqrt()
}

//! Two-variable Aliev-Panfilov reaction-diffusion model on a [`GridGeometry`].
//!
//! ```text
//! du/dt = d * lap(u) - k u (u - a)(u - 1) - u v + stim
//! dv/dt = eps(u, v) * (-v - k u (u - a - 1)),   eps = e0 + mu1 v / (u + mu2)
//! ```
//!
//! Integrated with forward Euler for the reaction terms and an explicit 5-point
//! diffusion step, starting from `u = v = 0`.

use serde::{Deserialize, Serialize};

use super::grid::{GridGeometry, A_MAX, A_MIN};
use crate::error::{Error, Result};

/// Tissue constants shared by every node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApConstants {
    pub k: f64,
    pub d: f64,
    pub e0: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl Default for ApConstants {
    fn default() -> Self {
        Self {
            k: 8.0,
            d: 0.1,
            e0: 0.002,
            mu1: 0.2,
            mu2: 0.3,
        }
    }
}

impl ApConstants {
    pub fn validate(&self) -> Result<()> {
        let ok = self.k > 0.0 && self.d >= 0.0 && self.e0 > 0.0 && self.mu1 >= 0.0 && self.mu2 > 0.0;
        let finite = [self.k, self.d, self.e0, self.mu1, self.mu2]
            .iter()
            .all(|x| x.is_finite());
        if ok && finite {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("AP constants out of range: {self:?}")))
        }
    }

    pub fn with_excitability(self, a_field: Vec<f64>) -> Result<ApParams> {
        let params = ApParams {
            constants: self,
            a_field,
        };
        params.validate()?;
        Ok(params)
    }

    #[inline]
    fn epsilon(&self, u: f64, v: f64) -> f64 {
        self.e0 + self.mu1 * v / (u + self.mu2)
    }
}

/// Constants plus the per-node excitability `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApParams {
    pub constants: ApConstants,
    pub a_field: Vec<f64>,
}

impl ApParams {
    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        for (index, &value) in self.a_field.iter().enumerate() {
            if !(A_MIN..=A_MAX).contains(&value) {
                return Err(Error::OutOfBounds {
                    index,
                    value,
                    lower: A_MIN,
                    upper: A_MAX,
                });
            }
        }
        Ok(())
    }
}

/// Current injected into `stim_nodes` while `t_on <= t < t_off`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusProtocol {
    pub stim_nodes: Vec<usize>,
    pub t_on: f64,
    pub t_off: f64,
    pub amplitude: f64,
}

impl StimulusProtocol {
    /// Default pacing: a `size x size` block in the `(0, 0)` corner, amplitude 1 for one time unit.
    pub fn corner_block(geometry: &GridGeometry, size: usize) -> Self {
        let size_i = size.min(geometry.nx);
        let size_j = size.min(geometry.ny);
        let stim_nodes = (0..size_i)
            .flat_map(|i| (0..size_j).map(move |j| geometry.index(i, j)))
            .collect();
        Self {
            stim_nodes,
            t_on: 0.0,
            t_off: 1.0,
            amplitude: 1.0,
        }
    }

    /// No stimulation at all.
    pub fn none() -> Self {
        Self {
            stim_nodes: Vec::new(),
            t_on: 0.0,
            t_off: 0.0,
            amplitude: 0.0,
        }
    }

    fn is_none(&self) -> bool {
        self.stim_nodes.is_empty() && self.amplitude == 0.0
    }

    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        if self.is_none() {
            return Ok(());
        }
        if !(self.t_on >= 0.0 && self.t_off > self.t_on) {
            return Err(Error::InvalidParameter(format!(
                "stimulus window [{}, {}) is empty",
                self.t_on, self.t_off
            )));
        }
        if !(self.amplitude > 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "stimulus amplitude {} must be positive",
                self.amplitude
            )));
        }
        if self.stim_nodes.is_empty() {
            return Err(Error::InvalidParameter("stimulus has no nodes".into()));
        }
        if let Some(&bad) = self.stim_nodes.iter().find(|&&n| n >= n_nodes) {
            return Err(Error::InvalidParameter(format!(
                "stimulus node {bad} outside grid of {n_nodes} nodes"
            )));
        }
        Ok(())
    }
}

/// Time integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStepping {
    pub dt: f64,
    pub t_end: f64,
    pub store_every: usize,
}

/// Stored states; `u` and `v` are `n_stored x n_nodes`, row-major in time.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Integration step.
    pub dt: f64,
    pub store_every: usize,
    pub n_nodes: usize,
    pub n_stored: usize,
}

impl SimulationResult {
    pub fn u_at(&self, t: usize) -> &[f64] {
        &self.u[t * self.n_nodes..(t + 1) * self.n_nodes]
    }

    pub fn v_at(&self, t: usize) -> &[f64] {
        &self.v[t * self.n_nodes..(t + 1) * self.n_nodes]
    }

    /// Time of stored frame `t` (frames are stored after each `store_every` steps).
    pub fn time_of(&self, t: usize) -> f64 {
        ((t + 1) * self.store_every) as f64 * self.dt
    }
}

/// Largest explicit diffusion step for this geometry and conductivity.
pub fn stability_bound(geometry: &GridGeometry, d: f64) -> f64 {
    if d > 0.0 {
        geometry.h * geometry.h / (4.0 * d)
    } else {
        f64::INFINITY
    }
}

pub fn simulate_ap(
    geometry: &GridGeometry,
    params: &ApParams,
    stim: &StimulusProtocol,
    stepping: TimeStepping,
) -> Result<SimulationResult> {
    let TimeStepping { dt, t_end, store_every } = stepping;
    let n = geometry.n_nodes();
    if params.a_field.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: params.a_field.len(),
        });
    }
    params.validate()?;
    stim.validate(n)?;
    if !(dt > 0.0) || !(t_end > 0.0) || !dt.is_finite() || !t_end.is_finite() || store_every == 0 {
        return Err(Error::InvalidParameter(format!(
            "time stepping dt={dt}, t_end={t_end}, store_every={store_every}"
        )));
    }
    let c = params.constants;
    let bound = stability_bound(geometry, c.d);
    if dt > bound {
        return Err(Error::Unstable { dt, bound });
    }

    let n_steps = (t_end / dt).round().max(1.0) as usize;
    let n_stored = n_steps / store_every;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut lap = vec![0.0; n];
    let mut stim_mask = vec![0.0; n];
    for &node in &stim.stim_nodes {
        stim_mask[node] = stim.amplitude;
    }
    let mut out_u = Vec::with_capacity(n_stored * n);
    let mut out_v = Vec::with_capacity(n_stored * n);
    let a = &params.a_field;

    for step in 0..n_steps {
        let t = step as f64 * dt;
        let stim_on = t >= stim.t_on && t < stim.t_off;
        if c.d > 0.0 {
            geometry.laplacian_into(&u, &mut lap);
        }
        let mut finite = true;
        for node in 0..n {
            let un = u[node];
            let vn = v[node];
            let an = a[node];
            let mut du = c.d * lap[node] - c.k * un * (un - an) * (un - 1.0) - un * vn;
            if stim_on {
                du += stim_mask[node];
            }
            let dv = c.epsilon(un, vn) * (-vn - c.k * un * (un - an - 1.0));
            let un1 = un + dt * du;
            let vn1 = vn + dt * dv;
            finite &= un1.is_finite() && vn1.is_finite();
            u[node] = un1;
            v[node] = vn1;
        }
        if !finite {
            return Err(Error::NonFiniteState { step: step + 1 });
        }
        if (step + 1) % store_every == 0 {
            out_u.extend_from_slice(&u);
            out_v.extend_from_slice(&v);
        }
    }

    Ok(SimulationResult {
        u: out_u,
        v: out_v,
        dt,
        store_every,
        n_nodes: n,
        n_stored,
    })
}

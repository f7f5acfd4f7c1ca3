//! Rectangular node grid, region partition and the parameter expansion onto nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound of the excitability prior box.
pub const A_MIN: f64 = 0.0;
/// Upper bound of the excitability prior box.
pub const A_MAX: f64 = 0.52;

/// A 2D grid of `nx * ny` nodes spaced `h` apart. Node `(i, j)` has index `i * ny + j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
}

pub fn build_grid(nx: usize, ny: usize, h: f64) -> Result<GridGeometry> {
    if nx < 2 || ny < 2 || !(h > 0.0) || !h.is_finite() {
        return Err(Error::GridTooSmall { nx, ny, h });
    }
    Ok(GridGeometry { nx, ny, h })
}

impl GridGeometry {
    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn coords(&self, node: usize) -> (f64, f64) {
        let i = node / self.ny;
        let j = node % self.ny;
        (i as f64 * self.h, j as f64 * self.h)
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let i = node / self.ny;
        let j = node % self.ny;
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }

    pub fn neighbor_count(&self, node: usize) -> usize {
        let i = node / self.ny;
        let j = node % self.ny;
        usize::from(i > 0) + usize::from(i + 1 < self.nx) + usize::from(j > 0) + usize::from(j + 1 < self.ny)
    }

    /// Bounding box `(x_max, y_max)`; the minimum corner is the origin.
    pub fn extent(&self) -> (f64, f64) {
        ((self.nx - 1) as f64 * self.h, (self.ny - 1) as f64 * self.h)
    }

    /// 5-point Laplacian with zero-flux boundaries: each node sums `(u_nb - u) / h^2`
    /// over the neighbours it actually has.
    pub fn laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let inv_h2 = 1.0 / (self.h * self.h);
        for i in 0..nx {
            for j in 0..ny {
                let n = i * ny + j;
                let c = u[n];
                let mut acc = 0.0;
                if i > 0 {
                    acc += u[n - ny] - c;
                }
                if i + 1 < nx {
                    acc += u[n + ny] - c;
                }
                if j > 0 {
                    acc += u[n - 1] - c;
                }
                if j + 1 < ny {
                    acc += u[n + 1] - c;
                }
                out[n] = acc * inv_h2;
            }
        }
    }

    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.laplacian_into(u, &mut out);
        out
    }
}

/// Assignment of every grid node to one of `n_regions` regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub region_of_node: Vec<usize>,
    pub n_regions: usize,
}

impl RegionPartition {
    /// Builds a partition from an explicit node map, checking that every region is used.
    pub fn from_map(region_of_node: Vec<usize>, n_regions: usize) -> Result<Self> {
        let mut used = vec![false; n_regions];
        for &r in &region_of_node {
            if r >= n_regions {
                return Err(Error::InvalidParameter(format!(
                    "region id {r} >= region count {n_regions}"
                )));
            }
            used[r] = true;
        }
        if let Some(missing) = used.iter().position(|u| !u) {
            return Err(Error::InvalidParameter(format!("region {missing} has no nodes")));
        }
        Ok(Self {
            region_of_node,
            n_regions,
        })
    }

    pub fn nodes_in(&self, region: usize) -> impl Iterator<Item = usize> + '_ {
        self.region_of_node
            .iter()
            .enumerate()
            .filter(move |(_, &r)| r == region)
            .map(|(n, _)| n)
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_regions];
        for &r in &self.region_of_node {
            sizes[r] += 1;
        }
        sizes
    }
}

/// Splits the grid into `rows x cols` contiguous rectangular blocks. Rows split the
/// `i` axis and columns the `j` axis; region id is `row * cols + col`.
pub fn partition_grid(geometry: &GridGeometry, rows: usize, cols: usize) -> Result<RegionPartition> {
    let invalid = || Error::InvalidPartition {
        rows,
        cols,
        nx: geometry.nx,
        ny: geometry.ny,
    };
    if rows == 0 || cols == 0 || rows > geometry.nx || cols > geometry.ny {
        return Err(invalid());
    }
    let n_regions = rows * cols;
    if n_regions > geometry.n_nodes() {
        return Err(invalid());
    }
    let mut map = vec![0; geometry.n_nodes()];
    for i in 0..geometry.nx {
        let r = i * rows / geometry.nx;
        for j in 0..geometry.ny {
            let c = j * cols / geometry.ny;
            map[geometry.index(i, j)] = r * cols + c;
        }
    }
    RegionPartition::from_map(map, n_regions)
}

pub fn check_in_box(theta: &[f64]) -> Result<()> {
    for (index, &value) in theta.iter().enumerate() {
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

/// Per-node excitability field: `a[n] = theta[region_of_node[n]]`.
pub fn expand_parameters(theta: &[f64], partition: &RegionPartition) -> Result<Vec<f64>> {
    if theta.len() != partition.n_regions {
        return Err(Error::LengthMismatch {
            expected: partition.n_regions,
            got: theta.len(),
        });
    }
    check_in_box(theta)?;
    Ok(expand_unchecked(theta, partition))
}

/// Pushes any per-region vector through the partition, without the prior-box check.
pub(crate) fn expand_unchecked(values: &[f64], partition: &RegionPartition) -> Vec<f64> {
    partition.region_of_node.iter().map(|&r| values[r]).collect()
}

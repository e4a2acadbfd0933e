//! World discretization and empirical topic densities.

use serde::{Deserialize, Serialize};

use crate::error::{GdrfError, Result};
use crate::model::{Location, World};

/// Regular grid over a [`World`]. Cells are half-open `[a, b)` per axis,
/// except that the top edge of the world belongs to the last cell. Flat cell
/// indices are row-major with the first dimension varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationGrid {
    world: World,
    cells_per_dim: Vec<usize>,
}

impl DiscretizationGrid {
    pub fn new(world: World, cells_per_dim: Vec<usize>) -> Result<Self> {
        if cells_per_dim.len() != world.dim() {
            return Err(GdrfError::contract(format!(
                "{} cell counts for a {}-dimensional world",
                cells_per_dim.len(),
                world.dim()
            )));
        }
        if cells_per_dim.iter().any(|&n| n == 0) {
            return Err(GdrfError::contract("every dimension needs at least one cell"));
        }
        Ok(DiscretizationGrid {
            world,
            cells_per_dim,
        })
    }

    /// Default resolution: 500 cells for a 1-D (time-series) world, otherwise
    /// one cell per integer lattice point. Bounds on half-integers (as from
    /// [`World::lattice`]) already enclose whole cells; integer bounds
    /// `[a, b]` hold `b - a + 1` lattice points.
    pub fn default_for(world: World) -> Result<Self> {
        let cells = if world.dim() == 1 {
            vec![500]
        } else {
            world
                .bounds()
                .iter()
                .map(|&(lo, hi)| {
                    let steps = (hi - lo).round().max(1.0) as usize;
                    if lo.fract() == 0.0 {
                        steps + 1
                    } else {
                        steps
                    }
                })
                .collect()
        };
        DiscretizationGrid::new(world, cells)
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn dim(&self) -> usize {
        self.world.dim()
    }

    pub fn cells_per_dim(&self) -> &[usize] {
        &self.cells_per_dim
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_dim.iter().product()
    }

    pub fn cell_width(&self, d: usize) -> f64 {
        self.world.extent(d) / self.cells_per_dim[d] as f64
    }

    /// Hypervolume of one cell.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.cell_width(d)).product()
    }

    /// Per-axis cell coordinates of `location`.
    pub fn bin_coords(&self, location: &[f64]) -> Result<Vec<usize>> {
        if !self.world.contains(location) {
            return Err(GdrfError::Ingestion(vec![format!(
                "location {location:?} outside world {:?}",
                self.world.bounds()
            )]));
        }
        Ok(location
            .iter()
            .enumerate()
            .map(|(d, &x)| {
                let (lo, hi) = self.world.bounds()[d];
                let n = self.cells_per_dim[d];
                let t = ((x - lo) * n as f64 / (hi - lo)).floor() as usize;
                t.min(n - 1)
            })
            .collect())
    }

    /// Flat cell index of `location`.
    pub fn bin(&self, location: &[f64]) -> Result<usize> {
        Ok(self.flat_index(&self.bin_coords(location)?))
    }

    pub fn flat_index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.cells_per_dim)
            .fold(0, |acc, (&c, &n)| acc * n + c)
    }

    pub fn cell_coords(&self, mut flat: usize) -> Vec<usize> {
        let mut coords = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            coords[d] = flat % self.cells_per_dim[d];
            flat /= self.cells_per_dim[d];
        }
        coords
    }

    pub fn cell_center(&self, flat: usize) -> Location {
        self.cell_coords(flat)
            .iter()
            .enumerate()
            .map(|(d, &c)| self.world.bounds()[d].0 + (c as f64 + 0.5) * self.cell_width(d))
            .collect()
    }

    pub fn cell_centers(&self) -> Vec<Location> {
        (0..self.num_cells()).map(|c| self.cell_center(c)).collect()
    }

    /// Lower and upper corner of a cell.
    pub fn cell_bounds(&self, flat: usize) -> Vec<(f64, f64)> {
        self.cell_coords(flat)
            .iter()
            .enumerate()
            .map(|(d, &c)| {
                let lo = self.world.bounds()[d].0 + c as f64 * self.cell_width(d);
                (lo, lo + self.cell_width(d))
            })
            .collect()
    }

    /// Inducing locations: the cell centres when there are at most `cap`
    /// cells, otherwise the centres of the finest coarser regular grid that
    /// fits under the cap.
    pub fn inducing_locations(&self, cap: usize) -> Vec<Location> {
        let cap = cap.max(1);
        if self.num_cells() <= cap {
            return self.cell_centers();
        }
        let dim = self.dim();
        let ratio = (cap as f64 / self.num_cells() as f64).powf(1.0 / dim as f64);
        let mut counts: Vec<usize> = self
            .cells_per_dim
            .iter()
            .map(|&n| ((n as f64 * ratio).floor() as usize).clamp(1, n))
            .collect();
        // Grow greedily while we stay under the cap.
        loop {
            let mut grown = false;
            for d in 0..dim {
                if counts[d] < self.cells_per_dim[d] {
                    let total: usize = counts.iter().product::<usize>() / counts[d] * (counts[d] + 1);
                    if total <= cap {
                        counts[d] += 1;
                        grown = true;
                    }
                }
            }
            if !grown {
                break;
            }
        }
        let coarse = DiscretizationGrid::new(self.world.clone(), counts)
            .expect("coarse grid has valid shape");
        coarse.cell_centers()
    }
}

/// Per-cell topic densities (counts per unit hypervolume).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: DiscretizationGrid,
    /// `rho[c][j]`: density of topic `j` in cell `c`.
    pub rho: Vec<Vec<f64>>,
    pub rho_total: Vec<f64>,
}

impl DensityField {
    pub fn k(&self) -> usize {
        self.rho.first().map_or(0, Vec::len)
    }

    /// `(rho_j + alpha) / (rho + K alpha)` in cell `c`.
    pub fn smoothed_topic_probs(&self, cell: usize, alpha: f64) -> Vec<f64> {
        let k = self.k() as f64;
        let denom = self.rho_total[cell] + k * alpha;
        self.rho[cell].iter().map(|r| (r + alpha) / denom).collect()
    }
}

/// Topic density of each cell from `(location, topic)` pairs.
pub fn estimate_density<'a, I>(grid: &DiscretizationGrid, k: usize, assignments: I) -> Result<DensityField>
where
    I: IntoIterator<Item = (&'a Location, usize)>,
{
    let c = grid.num_cells();
    let mut counts = vec![vec![0u64; k]; c];
    for (loc, topic) in assignments {
        if topic >= k {
            return Err(GdrfError::contract(format!("topic {topic} outside 0..{k}")));
        }
        counts[grid.bin(loc)?][topic] += 1;
    }
    let volume = grid.cell_volume();
    let rho: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|&n| n as f64 / volume).collect())
        .collect();
    let rho_total = counts
        .iter()
        .map(|row| row.iter().sum::<u64>() as f64 / volume)
        .collect();
    Ok(DensityField {
        grid: grid.clone(),
        rho,
        rho_total,
    })
}

/// GP regression data: cell centres and `log(rho_j + alpha)` per cell and
/// topic (`targets[c][j]`). Empty cells are included.
pub fn gp_targets(field: &DensityField, alpha: f64) -> Result<(Vec<Location>, Vec<Vec<f64>>)> {
    if !(alpha > 0.0) {
        return Err(GdrfError::contract(format!("alpha must be positive, got {alpha}")));
    }
    let targets = field
        .rho
        .iter()
        .map(|row| row.iter().map(|r| (r + alpha).ln()).collect())
        .collect();
    Ok((field.grid.cell_centers(), targets))
}

//! Neighbourhood topic model used as a baseline.
//!
//! The spatial factor of each observation counts topics over the cells in a
//! Von Neumann neighbourhood (Manhattan distance in cell units, the cell
//! itself included) instead of a latent field.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::density::DiscretizationGrid;
use crate::engine::{validate_data, IterationDiagnostics, TopicModel};
use crate::error::{GdrfError, Result};
use crate::gibbs::{self, conditional_weights, draw};
use crate::model::{word_topic_posterior, CountMatrices, Hyperparameters, Location, Observation};
use crate::rng::{self, Stream};

pub const DEFAULT_RADIUS: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RostModel {
    pub grid: DiscretizationGrid,
    pub counts: CountMatrices,
    /// Topic counts per cell, row-major `num_cells x k`.
    pub cell_topic: Vec<u32>,
    pub radius: usize,
    pub alpha: f64,
    pub beta: f64,
    pub phi: Vec<Vec<f64>>,
    pub diagnostics: Vec<IterationDiagnostics>,
    neighbours: Vec<Vec<usize>>,
    cells: Vec<usize>,
}

/// Cells within Manhattan distance `radius` of each cell, itself included.
pub fn von_neumann_neighbours(grid: &DiscretizationGrid, radius: usize) -> Vec<Vec<usize>> {
    let dims = grid.cells_per_dim();
    (0..grid.num_cells())
        .map(|cell| {
            let centre = grid.cell_coords(cell);
            let lo: Vec<usize> = centre.iter().map(|&c| c.saturating_sub(radius)).collect();
            let hi: Vec<usize> = centre.iter().zip(dims).map(|(&c, &n)| (c + radius).min(n - 1)).collect();
            // odometer over the clipped box, last dimension fastest
            let mut out = Vec::new();
            let mut at = lo.clone();
            loop {
                let dist: usize = at.iter().zip(&centre).map(|(a, c)| a.abs_diff(*c)).sum();
                if dist <= radius {
                    out.push(grid.flat_index(&at));
                }
                let mut d = at.len();
                loop {
                    if d == 0 {
                        return out;
                    }
                    d -= 1;
                    if at[d] < hi[d] {
                        at[d] += 1;
                        break;
                    }
                    at[d] = lo[d];
                }
            }
        })
        .collect()
}

impl RostModel {
    /// Random initial assignments for `data`.
    pub fn new(
        data: &[Observation],
        grid: &DiscretizationGrid,
        hp: &Hyperparameters,
        radius: usize,
        seed: u64,
    ) -> Result<Self> {
        hp.validate()?;
        validate_data(data, grid, hp.w)?;
        let mut init_rng = rng::derive(seed, Stream::Initialization);
        let counts = gibbs::initialize(data, hp.k, hp.w, &mut init_rng)?;
        let cells = data.iter().map(|o| grid.bin(&o.location)).collect::<Result<Vec<_>>>()?;
        let mut cell_topic = vec![0u32; grid.num_cells() * hp.k];
        for (&c, &z) in cells.iter().zip(&counts.assignments) {
            cell_topic[c * hp.k + z] += 1;
        }
        Ok(RostModel {
            phi: word_topic_posterior(&counts, hp.beta),
            grid: grid.clone(),
            counts,
            cell_topic,
            radius,
            alpha: hp.alpha,
            beta: hp.beta,
            diagnostics: Vec::new(),
            neighbours: von_neumann_neighbours(grid, radius),
            cells,
        })
    }

    pub fn k(&self) -> usize {
        self.counts.k()
    }

    pub fn cell_row(&self, cell: usize) -> &[u32] {
        let k = self.k();
        &self.cell_topic[cell * k..(cell + 1) * k]
    }

    /// Topic counts summed over the neighbourhood of `cell`.
    pub fn neighbourhood_counts(&self, cell: usize, out: &mut [f64]) {
        out.fill(0.0);
        for &n in &self.neighbours[cell] {
            for (o, &c) in out.iter_mut().zip(self.cell_row(n)) {
                *o += c as f64;
            }
        }
    }

    /// `(n_j + alpha) / (n + K alpha)` over the neighbourhood of `cell`.
    pub fn spatial_factor(&self, cell: usize, out: &mut [f64]) {
        self.neighbourhood_counts(cell, out);
        let total: f64 = out.iter().sum();
        let denom = total + self.k() as f64 * self.alpha;
        out.iter_mut().for_each(|o| *o = (*o + self.alpha) / denom);
    }

    /// One pass over all observations in random order.
    pub fn sweep<R: Rng + ?Sized>(&mut self, data: &[Observation], rng: &mut R) -> Result<()> {
        if data.len() != self.cells.len() {
            return Err(GdrfError::contract(format!(
                "model holds {} observations, got {}",
                self.cells.len(),
                data.len()
            )));
        }
        let k = self.k();
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(rng);
        let mut spatial = vec![0.0; k];
        let mut weights = vec![0.0; k];
        for i in order {
            let word = data[i].word;
            let cell = self.cells[i];
            let old = self.counts.assignments[i];
            self.counts.decrement(word, old)?;
            self.cell_topic[cell * k + old] -= 1;
            self.spatial_factor(cell, &mut spatial);
            let total = conditional_weights(&self.counts, word, &spatial, self.beta, &mut weights);
            if !(total > 0.0 && total.is_finite()) {
                return Err(GdrfError::numerical(format!(
                    "conditional of observation {i} has total mass {total}"
                )));
            }
            let new = draw(&weights, total, rng);
            self.counts.increment(word, new)?;
            self.cell_topic[cell * k + new] += 1;
            self.counts.assignments[i] = new;
        }
        Ok(())
    }

    /// Replace the current assignments, keeping all counts consistent.
    pub fn set_assignments(&mut self, data: &[Observation], assignments: &[usize]) -> Result<()> {
        let words: Vec<usize> = data.iter().map(|o| o.word).collect();
        self.counts = CountMatrices::from_assignments(self.k(), self.counts.w(), &words, assignments)?;
        let k = self.k();
        self.cell_topic.fill(0);
        for (&c, &z) in self.cells.iter().zip(assignments) {
            self.cell_topic[c * k + z] += 1;
        }
        self.phi = word_topic_posterior(&self.counts, self.beta);
        Ok(())
    }

    /// Run the same sweep budget as the GDRF outer loop: `n_outer` blocks of
    /// `n_gibbs_inner` sweeps, with `phi` refreshed and diagnostics recorded
    /// after every block.
    pub fn fit(
        data: &[Observation],
        hp: &Hyperparameters,
        grid: &DiscretizationGrid,
        radius: usize,
        seed: u64,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(GdrfError::Ingestion(vec!["no observations to fit".into()]));
        }
        let mut model = RostModel::new(data, grid, hp, radius, seed)?;
        let mut rng = rng::derive(seed, Stream::Rost);
        for iteration in 0..hp.schedule.n_outer {
            for _ in 0..hp.schedule.n_gibbs_inner {
                model.sweep(data, &mut rng)?;
            }
            model.phi = word_topic_posterior(&model.counts, model.beta);
            let train_log_likelihood = model.train_log_likelihood(data);
            model.diagnostics.push(IterationDiagnostics {
                iteration,
                train_log_likelihood,
                elbo: Vec::new(),
                rejected_steps: 0,
            });
        }
        Ok(model)
    }

    fn train_log_likelihood(&self, data: &[Observation]) -> f64 {
        let mut p = vec![0.0; self.k()];
        data.iter()
            .zip(&self.cells)
            .map(|(o, &c)| {
                self.spatial_factor(c, &mut p);
                p.iter().zip(&self.phi).map(|(t, row)| t * row[o.word]).sum::<f64>().ln()
            })
            .sum::<f64>()
            / data.len() as f64
    }

    /// Rebuild a model from stored parts, e.g. after deserialisation.
    pub fn from_parts(
        grid: DiscretizationGrid,
        counts: CountMatrices,
        cell_topic: Vec<u32>,
        radius: usize,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        let k = counts.k();
        if cell_topic.len() != grid.num_cells() * k {
            return Err(GdrfError::contract("cell topic table does not match the grid"));
        }
        for j in 0..k {
            let sum: u64 = (0..grid.num_cells()).map(|c| cell_topic[c * k + j] as u64).sum();
            if sum != counts.topic_total(j) as u64 {
                return Err(GdrfError::contract(format!("cell counts of topic {j} disagree with totals")));
            }
        }
        Ok(RostModel {
            phi: word_topic_posterior(&counts, beta),
            neighbours: von_neumann_neighbours(&grid, radius),
            grid,
            counts,
            cell_topic,
            radius,
            alpha,
            beta,
            diagnostics: Vec::new(),
            cells: Vec::new(),
        })
    }
}

impl TopicModel for RostModel {
    fn grid(&self) -> &DiscretizationGrid {
        &self.grid
    }

    fn phi(&self) -> &[Vec<f64>] {
        &self.phi
    }

    /// Fails for queries outside the grid: the neighbourhood model has no
    /// notion of distance beyond it.
    fn predict_topics(&self, query: &[Location]) -> Result<Vec<Vec<f64>>> {
        query
            .iter()
            .map(|q| {
                if !self.grid.world().contains(q) {
                    return Err(GdrfError::contract(format!("query {q:?} lies outside the grid")));
                }
                let mut out = vec![0.0; self.k()];
                self.spatial_factor(self.grid.bin(q)?, &mut out);
                Ok(out)
            })
            .collect()
    }
}

//! Forward sampling from the GDRF generative process.
//!
//! Latent fields are drawn at cell centres only and are constant within a
//! cell; observation locations are uniform over the world.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Gamma;

use crate::density::DiscretizationGrid;
use crate::engine::{argmax, link, mix_words};
use crate::error::{GdrfError, Result};
use crate::kernel::{sample_prior_capped, DENSE_CAP};
use crate::model::{Hyperparameters, Location, Observation};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedObservation {
    pub location: Location,
    pub word: usize,
    /// Topic that generated the word.
    pub topic: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub grid: DiscretizationGrid,
    /// Latent field values, one row of `k` per cell.
    pub mu: Vec<Vec<f64>>,
    /// Word distribution of each topic.
    pub phi: Vec<Vec<f64>>,
    pub observations: Vec<SimulatedObservation>,
    pub ml_topic_map: Vec<usize>,
    pub ml_word_map: Vec<usize>,
}

impl GroundTruth {
    pub fn k(&self) -> usize {
        self.phi.len()
    }

    pub fn w(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    /// Observations with the generating topic dropped.
    pub fn data(&self) -> Vec<Observation> {
        self.observations
            .iter()
            .map(|o| Observation::new(o.location.clone(), o.word))
            .collect()
    }

    /// Topic distribution of every cell.
    pub fn topic_probs(&self) -> Result<Vec<Vec<f64>>> {
        self.mu.iter().map(|m| link(m)).collect()
    }

    /// Word distribution of every cell.
    pub fn word_probs(&self) -> Result<Vec<Vec<f64>>> {
        Ok(mix_words(&self.topic_probs()?, &self.phi))
    }
}

/// Most likely topic and most likely word of every cell, lowest index on ties.
pub fn ml_maps(mu: &[Vec<f64>], phi: &[Vec<f64>]) -> Result<(Vec<usize>, Vec<usize>)> {
    let topics = mu.iter().map(|m| link(m)).collect::<Result<Vec<_>>>()?;
    let words = mix_words(&topics, phi);
    Ok((
        topics.iter().map(|t| argmax(t)).collect(),
        words.iter().map(|w| argmax(w)).collect(),
    ))
}

/// Symmetric Dirichlet draw via normalised Gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(concentration: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| GdrfError::contract(format!("Dirichlet concentration {concentration}: {e}")))?;
    loop {
        let mut row: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let total: f64 = row.iter().sum();
        // Every variate can underflow for tiny concentrations; redraw then.
        if total > 0.0 && total.is_finite() {
            row.iter_mut().for_each(|v| *v /= total);
            return Ok(row);
        }
    }
}

/// Draw a world, its topic fields and `n_obs` observations. The GP prior
/// mean is zero and the kernel is `hp.kernel`.
pub fn simulate(grid: &DiscretizationGrid, hp: &Hyperparameters, n_obs: usize, seed: u64) -> Result<GroundTruth> {
    if n_obs == 0 {
        return Err(GdrfError::contract("n_obs must be at least 1"));
    }
    hp.validate()?;
    let mut rng = rng::derive(seed, Stream::Simulation);
    let centers = grid.cell_centers();
    let kernel = hp.kernel.expanded(grid.dim())?;

    let fields = (0..hp.k)
        .map(|_| sample_prior_capped(&centers, &kernel, 0.0, DENSE_CAP, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mu: Vec<Vec<f64>> = (0..centers.len())
        .map(|c| fields.iter().map(|f| f[c]).collect())
        .collect();
    let phi = (0..hp.k)
        .map(|_| sample_dirichlet(hp.beta, hp.w, &mut rng))
        .collect::<Result<Vec<_>>>()?;

    let weights_err = |e| GdrfError::numerical(format!("invalid sampling weights: {e}"));
    let topic_dists = mu
        .iter()
        .map(|m| WeightedIndex::new(link(m)?).map_err(weights_err))
        .collect::<Result<Vec<_>>>()?;
    let word_dists = phi
        .iter()
        .map(|row| WeightedIndex::new(row).map_err(weights_err))
        .collect::<Result<Vec<_>>>()?;

    let observations = (0..n_obs)
        .map(|_| {
            let cell = rng.random_range(0..grid.num_cells());
            let location = grid
                .cell_bounds(cell)
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..hi))
                .collect();
            let topic = topic_dists[cell].sample(&mut rng);
            let word = word_dists[topic].sample(&mut rng);
            SimulatedObservation { location, word, topic }
        })
        .collect();

    let (ml_topic_map, ml_word_map) = ml_maps(&mu, &phi)?;
    Ok(GroundTruth {
        grid: grid.clone(),
        mu,
        phi,
        observations,
        ml_topic_map,
        ml_word_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelParams;
    use crate::model::World;

    fn lattice_grid(n: usize) -> DiscretizationGrid {
        DiscretizationGrid::default_for(World::lattice(&[n, n]).unwrap()).unwrap()
    }

    fn hp(k: usize, w: usize, ls: f64, scale: f64) -> Hyperparameters {
        Hyperparameters::new(k, w, KernelParams::new(ls, scale))
    }

    /// Fraction of `(count, n, p)` triples outside the multinomial 3σ band.
    fn outside_band(cases: &[(usize, usize, f64)]) -> f64 {
        let outside = cases
            .iter()
            .filter(|&&(c, n, p)| {
                let sd = (n as f64 * p * (1.0 - p)).sqrt();
                (c as f64 - n as f64 * p).abs() > 3.0 * sd.max(1e-12)
            })
            .count();
        outside as f64 / cases.len() as f64
    }

    #[test]
    fn phi_rows_are_simplices_and_topics_recorded() {
        let gt = simulate(&lattice_grid(6), &hp(3, 20, 2.0, 5.0), 500, 1).unwrap();
        for row in &gt.phi {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(gt.observations.len(), 500);
        assert!(gt.observations.iter().all(|o| o.topic < 3 && o.word < 20));
        assert!(gt.observations.iter().all(|o| gt.grid.world().contains(&o.location)));
        assert_eq!(gt.mu.len(), 36);
    }

    #[test]
    fn seeded_runs_identical() {
        let a = simulate(&lattice_grid(5), &hp(2, 8, 2.5, 5.0), 300, 42).unwrap();
        let b = simulate(&lattice_grid(5), &hp(2, 8, 2.5, 5.0), 300, 42).unwrap();
        let c = simulate(&lattice_grid(5), &hp(2, 8, 2.5, 5.0), 300, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn single_topic_word_marginal_in_band() {
        let n = 100_000;
        let gt = simulate(&lattice_grid(4), &hp(1, 12, 2.0, 1.0), n, 3).unwrap();
        let mut counts = vec![0; 12];
        for o in &gt.observations {
            counts[o.word] += 1;
        }
        let cases: Vec<_> = counts.iter().zip(&gt.phi[0]).map(|(&c, &p)| (c, n, p)).collect();
        assert!(outside_band(&cases) <= 1.0 / 12.0);
        assert!(gt.ml_topic_map.iter().all(|&t| t == 0));
    }

    #[test]
    fn conditional_word_frequencies_in_band() {
        let gt = simulate(&lattice_grid(5), &hp(3, 15, 2.0, 5.0), 60_000, 8).unwrap();
        let mut counts = vec![vec![0usize; 15]; 3];
        for o in &gt.observations {
            counts[o.topic][o.word] += 1;
        }
        let mut cases = Vec::new();
        for (row, phi) in counts.iter().zip(&gt.phi) {
            let n: usize = row.iter().sum();
            cases.extend(row.iter().zip(phi).map(|(&c, &p)| (c, n, p)));
        }
        assert!(outside_band(&cases) <= 0.013 + 2.0 / 45.0);
    }

    #[test]
    fn per_cell_topic_frequencies_in_band() {
        let n = 100_000;
        let gt = simulate(&lattice_grid(2), &hp(3, 5, 1.0, 2.0), n, 5).unwrap();
        let mut counts = vec![vec![0usize; 3]; 4];
        for o in &gt.observations {
            counts[gt.grid.bin(&o.location).unwrap()][o.topic] += 1;
        }
        let probs = gt.topic_probs().unwrap();
        let mut cases = Vec::new();
        for (row, p) in counts.iter().zip(&probs) {
            let n: usize = row.iter().sum();
            cases.extend(row.iter().zip(p).map(|(&c, &q)| (c, n, q)));
        }
        assert!(outside_band(&cases) <= 1.0 / 12.0);
    }

    #[test]
    fn zero_fields_give_zero_topic_map() {
        let mu = vec![vec![0.0; 4]; 9];
        let phi = vec![vec![0.5, 0.5]; 4];
        let (topics, words) = ml_maps(&mu, &phi).unwrap();
        assert!(topics.iter().all(|&t| t == 0));
        assert!(words.iter().all(|&w| w == 0));
    }

    #[test]
    fn dominant_field_tracks_pointwise_max() {
        let mu: Vec<Vec<f64>> = (0..12).map(|c| {
            let mut row = vec![0.0; 3];
            row[c % 3] = 50.0;
            row
        }).collect();
        let phi = vec![vec![1.0 / 3.0; 3]; 3];
        let (topics, _) = ml_maps(&mu, &phi).unwrap();
        assert_eq!(topics, (0..12).map(|c| c % 3).collect::<Vec<_>>());
    }

    #[test]
    fn ml_maps_match_brute_force() {
        let gt = simulate(&lattice_grid(7), &hp(4, 10, 2.5, 5.0), 10, 17).unwrap();
        for (c, m) in gt.mu.iter().enumerate() {
            let e: Vec<f64> = m.iter().map(|v| v.exp()).collect();
            let z: f64 = e.iter().sum();
            let mut best_t = 0;
            for j in 0..4 {
                if e[j] > e[best_t] {
                    best_t = j;
                }
            }
            assert_eq!(gt.ml_topic_map[c], best_t);
            let mut best_w = (0, f64::NEG_INFINITY);
            for w in 0..10 {
                let p: f64 = (0..4).map(|j| e[j] / z * gt.phi[j][w]).sum();
                if p > best_w.1 + 1e-12 {
                    best_w = (w, p);
                }
            }
            assert_eq!(gt.ml_word_map[c], best_w.0);
        }
    }

    #[test]
    fn reference_lattice_uses_every_topic() {
        let grid = lattice_grid(26);
        let full = (0..5)
            .filter(|&seed| {
                let gt = simulate(&grid, &hp(4, 50, 2.5, 5.0), 10_000, seed).unwrap();
                (0..4).all(|j| gt.ml_topic_map.contains(&j))
            })
            .count();
        assert!(full >= 3, "only {full} of 5 seeds used all topics");
    }

    #[test]
    fn small_concentration_dirichlet_is_simplex() {
        let mut rng = rng::derive(0, Stream::Simulation);
        for _ in 0..200 {
            let row = sample_dirichlet(0.01, 50, &mut rng).unwrap();
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
        assert!(simulate(&lattice_grid(2), &hp(1, 2, 1.0, 1.0), 0, 0).is_err());
    }
}

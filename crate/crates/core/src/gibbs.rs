//! Collapsed Gibbs sampling of topic assignments under a spatial prior.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{GdrfError, Result};
use crate::model::{CountMatrices, Observation};

/// Per-location topic probabilities used as the spatial factor of the
/// conditional.
pub trait SpatialPrior {
    /// Write the K-simplex for observation `index` at `location` into `out`.
    fn topic_probs(&self, index: usize, location: &[f64], out: &mut [f64]);
}

/// The same uniform simplex everywhere.
#[derive(Debug, Clone, Copy)]
pub struct UniformPrior;

impl SpatialPrior for UniformPrior {
    fn topic_probs(&self, _: usize, _: &[f64], out: &mut [f64]) {
        let p = 1.0 / out.len() as f64;
        out.fill(p);
    }
}

/// A precomputed simplex for every observation, row-major `n x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorTable {
    k: usize,
    probs: Vec<f64>,
}

impl PriorTable {
    pub fn new(k: usize, probs: Vec<f64>) -> Result<Self> {
        if k == 0 || probs.len() % k != 0 {
            return Err(GdrfError::contract("prior table is not n x k"));
        }
        for row in probs.chunks(k) {
            let s: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(GdrfError::numerical(format!("prior row {row:?} is not a simplex")));
            }
        }
        Ok(PriorTable { k, probs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        PriorTable::new(k, rows.iter().flatten().copied().collect())
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.probs[index * self.k..(index + 1) * self.k]
    }

    pub fn len(&self) -> usize {
        self.probs.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

impl SpatialPrior for PriorTable {
    fn topic_probs(&self, index: usize, _: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.row(index));
    }
}

/// Unnormalised conditional weights into `out`; returns their sum.
///
/// `counts` must already exclude the observation being resampled.
pub(crate) fn conditional_weights(
    counts: &CountMatrices,
    word: usize,
    prior: &[f64],
    beta: f64,
    out: &mut [f64],
) -> f64 {
    let wb = counts.w() as f64 * beta;
    let mut total = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        let word_factor =
            (counts.word_topic(j, word) as f64 + beta) / (counts.topic_total(j) as f64 + wb);
        *o = word_factor * prior[j];
        total += *o;
    }
    total
}

/// Normalised conditional topic distribution of one observation,
/// proportional to `(n_jw + beta) / (n_j + W beta) * prior_j`.
pub fn conditional(counts: &CountMatrices, word: usize, prior: &[f64], beta: f64) -> Result<Vec<f64>> {
    if word >= counts.w() {
        return Err(GdrfError::contract(format!("word {word} outside vocabulary")));
    }
    if prior.len() != counts.k() {
        return Err(GdrfError::contract("prior length differs from topic count"));
    }
    let mut out = vec![0.0; counts.k()];
    let total = conditional_weights(counts, word, prior, beta, &mut out);
    if !(total > 0.0 && total.is_finite()) {
        return Err(GdrfError::numerical(format!(
            "conditional has total mass {total} for word {word}"
        )));
    }
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

/// Draw an index from unnormalised `weights` with the given total.
pub(crate) fn draw<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let mut u = rng.random::<f64>() * total;
    for (j, &w) in weights.iter().enumerate() {
        if u < w {
            return j;
        }
        u -= w;
    }
    // rounding left u just past the last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Uniformly random initial topic for every observation.
pub fn initialize<R: Rng + ?Sized>(data: &[Observation], k: usize, w: usize, rng: &mut R) -> Result<CountMatrices> {
    if k == 0 {
        return Err(GdrfError::contract("need at least one topic"));
    }
    let words: Vec<usize> = data.iter().map(|o| o.word).collect();
    let topics: Vec<usize> = data.iter().map(|_| rng.random_range(0..k)).collect();
    CountMatrices::from_assignments(k, w, &words, &topics)
}

/// Resample every assignment once, visiting observations in a fresh random
/// order.
pub fn sweep<P, R>(
    data: &[Observation],
    counts: &mut CountMatrices,
    prior: &P,
    beta: f64,
    rng: &mut R,
) -> Result<()>
where
    P: SpatialPrior + ?Sized,
    R: Rng + ?Sized,
{
    if counts.assignments.len() != data.len() {
        return Err(GdrfError::contract(format!(
            "{} assignments for {} observations",
            counts.assignments.len(),
            data.len()
        )));
    }
    let k = counts.k();
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut pi = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for i in order {
        let obs = &data[i];
        let old = counts.assignments[i];
        counts.decrement(obs.word, old)?;
        prior.topic_probs(i, &obs.location, &mut pi);
        let total = conditional_weights(counts, obs.word, &pi, beta, &mut weights);
        if !(total > 0.0 && total.is_finite()) {
            return Err(GdrfError::numerical(format!(
                "conditional of observation {i} has total mass {total}"
            )));
        }
        let new = draw(&weights, total, rng);
        counts.increment(obs.word, new)?;
        counts.assignments[i] = new;
    }
    Ok(())
}

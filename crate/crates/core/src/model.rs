//! Shared domain types: worlds, observations, hyperparameters and the
//! word-topic count bookkeeping behind the collapsed sampler.

use serde::{Deserialize, Serialize};

use crate::error::{GdrfError, Result};
use crate::kernel::KernelParams;

/// The domain a model lives on: a box in `dim` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    bounds: Vec<(f64, f64)>,
}

impl World {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(GdrfError::contract("world needs at least one dimension"));
        }
        for (d, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(GdrfError::contract(format!(
                    "world dimension {d} has invalid bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(World { bounds })
    }

    /// A lattice world with `n_d` unit cells per dimension centred on the
    /// integers `0..n_d`, i.e. bounds `[-0.5, n_d - 0.5]`.
    pub fn lattice(points_per_dim: &[usize]) -> Result<Self> {
        World::new(
            points_per_dim
                .iter()
                .map(|&n| (-0.5, n as f64 - 0.5))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn extent(&self, d: usize) -> f64 {
        self.bounds[d].1 - self.bounds[d].0
    }

    pub fn contains(&self, coords: &[f64]) -> bool {
        coords.len() == self.dim()
            && coords
                .iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }
}

/// A point in the world.
pub type Location = Vec<f64>;

/// One categorical observation: a word index seen at a location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub location: Location,
    pub word: usize,
}

impl Observation {
    pub fn new(location: Location, word: usize) -> Self {
        Observation { location, word }
    }
}

pub const LEARN_KERNEL_DEFAULT: bool = false;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSchedule {
    /// Gibbs sweeps per outer iteration.
    pub n_gibbs_inner: usize,
    /// Variational gradient steps per topic GP per outer iteration.
    pub n_svi_inner: usize,
    pub learning_rate: f64,
    pub n_outer: usize,
    /// Stop once the per-observation training log-likelihood improves by less
    /// than this over the last five outer iterations. `None` disables.
    pub early_stop_tol: Option<f64>,
    /// Upper bound on inducing points per GP.
    pub inducing_cap: usize,
    /// Whether length scales and output scale are optimised along with the
    /// variational state.
    pub learn_kernel: bool,
    /// Worker threads for the per-topic GP updates.
    pub threads: usize,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        TrainingSchedule {
            n_gibbs_inner: 50,
            n_svi_inner: 5,
            learning_rate: 0.25,
            n_outer: 100,
            early_stop_tol: Some(1e-4),
            inducing_cap: 512,
            learn_kernel: LEARN_KERNEL_DEFAULT,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Number of topics.
    pub k: usize,
    /// Vocabulary size.
    pub w: usize,
    /// Topic pseudo-density added before the spatial factor is normalised.
    pub alpha: f64,
    /// Symmetric Dirichlet concentration of each topic's word distribution.
    pub beta: f64,
    pub kernel: KernelParams,
    pub schedule: TrainingSchedule,
}

impl Hyperparameters {
    pub fn new(k: usize, w: usize, kernel: KernelParams) -> Self {
        Hyperparameters {
            k,
            w,
            alpha: 1.0,
            beta: 0.1,
            kernel,
            schedule: TrainingSchedule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.k == 0 {
            problems.push("k must be at least 1".to_string());
        }
        if self.w == 0 {
            problems.push("w must be at least 1".to_string());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            problems.push(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            problems.push(format!("beta must be positive, got {}", self.beta));
        }
        let s = &self.schedule;
        if s.n_gibbs_inner == 0 || s.n_svi_inner == 0 || s.n_outer == 0 {
            problems.push("schedule iteration counts must be positive".to_string());
        }
        if !(s.learning_rate > 0.0 && s.learning_rate.is_finite()) {
            problems.push(format!(
                "learning_rate must be positive, got {}",
                s.learning_rate
            ));
        }
        if s.inducing_cap == 0 {
            problems.push("inducing_cap must be positive".to_string());
        }
        if s.threads == 0 {
            problems.push("threads must be at least 1".to_string());
        }
        if let Err(e) = self.kernel.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GdrfError::Config(problems))
        }
    }
}

/// Word-topic occurrence counts plus the current topic assignment of every
/// observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMatrices {
    k: usize,
    w: usize,
    /// Row-major `k x w`.
    word_topic: Vec<u32>,
    topic_total: Vec<u32>,
    pub assignments: Vec<usize>,
}

impl CountMatrices {
    pub fn new(k: usize, w: usize) -> Self {
        CountMatrices {
            k,
            w,
            word_topic: vec![0; k * w],
            topic_total: vec![0; k],
            assignments: Vec::new(),
        }
    }

    /// Counts consistent with the given assignment of `words[i]` to
    /// `topics[i]`.
    pub fn from_assignments(k: usize, w: usize, words: &[usize], topics: &[usize]) -> Result<Self> {
        if words.len() != topics.len() {
            return Err(GdrfError::contract("words and topics differ in length"));
        }
        let mut counts = CountMatrices::new(k, w);
        for (&word, &topic) in words.iter().zip(topics) {
            counts.increment(word, topic)?;
        }
        counts.assignments = topics.to_vec();
        Ok(counts)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn word_topic(&self, topic: usize, word: usize) -> u32 {
        self.word_topic[topic * self.w + word]
    }

    pub fn topic_row(&self, topic: usize) -> &[u32] {
        &self.word_topic[topic * self.w..(topic + 1) * self.w]
    }

    pub fn topic_total(&self, topic: usize) -> u32 {
        self.topic_total[topic]
    }

    pub fn topic_totals(&self) -> &[u32] {
        &self.topic_total
    }

    fn check(&self, word: usize, topic: usize) -> Result<()> {
        if word >= self.w || topic >= self.k {
            return Err(GdrfError::contract(format!(
                "index (word {word}, topic {topic}) outside {}x{} counts",
                self.k, self.w
            )));
        }
        Ok(())
    }

    pub fn increment(&mut self, word: usize, topic: usize) -> Result<()> {
        self.check(word, topic)?;
        self.word_topic[topic * self.w + word] += 1;
        self.topic_total[topic] += 1;
        Ok(())
    }

    pub fn decrement(&mut self, word: usize, topic: usize) -> Result<()> {
        self.check(word, topic)?;
        let cell = &mut self.word_topic[topic * self.w + word];
        if *cell == 0 {
            return Err(GdrfError::contract(format!(
                "decrement below zero at (topic {topic}, word {word})"
            )));
        }
        *cell -= 1;
        self.topic_total[topic] -= 1;
        Ok(())
    }

    /// Total number of counted observations.
    pub fn total(&self) -> u64 {
        self.topic_total.iter().map(|&n| n as u64).sum()
    }

    /// Rebuild from raw tables, checking that row sums match the totals.
    pub fn from_parts(
        word_topic: Vec<Vec<u32>>,
        topic_total: Vec<u32>,
        assignments: Vec<usize>,
    ) -> Result<Self> {
        let k = word_topic.len();
        let w = word_topic.first().map_or(0, Vec::len);
        if topic_total.len() != k || word_topic.iter().any(|r| r.len() != w) {
            return Err(GdrfError::contract("ragged count matrices"));
        }
        for (j, row) in word_topic.iter().enumerate() {
            let s: u64 = row.iter().map(|&n| n as u64).sum();
            if s != topic_total[j] as u64 {
                return Err(GdrfError::contract(format!(
                    "topic {j} total {} does not match row sum {s}",
                    topic_total[j]
                )));
            }
        }
        if assignments.iter().any(|&z| z >= k) {
            return Err(GdrfError::contract("assignment outside topic range"));
        }
        Ok(CountMatrices {
            k,
            w,
            word_topic: word_topic.into_iter().flatten().collect(),
            topic_total,
            assignments,
        })
    }

    pub fn word_topic_rows(&self) -> Vec<Vec<u32>> {
        (0..self.k).map(|j| self.topic_row(j).to_vec()).collect()
    }
}

/// Smoothed posterior-mean word distribution of every topic,
/// `(n_j^w + beta) / (n_j + W beta)`.
pub fn word_topic_posterior(counts: &CountMatrices, beta: f64) -> Vec<Vec<f64>> {
    let w = counts.w();
    (0..counts.k())
        .map(|j| {
            let denom = counts.topic_total(j) as f64 + w as f64 * beta;
            counts
                .topic_row(j)
                .iter()
                .map(|&n| (n as f64 + beta) / denom)
                .collect()
        })
        .collect()
}

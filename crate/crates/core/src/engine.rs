//! GDRF inference: alternating collapsed Gibbs sweeps over topic assignments
//! with variational updates of one latent GP per topic, coupled through the
//! softmax link.

use crate::density::{estimate_density, gp_targets, DiscretizationGrid};
use crate::error::{GdrfError, Result};
use crate::gibbs::{self, PriorTable};
use crate::model::{word_topic_posterior, CountMatrices, Hyperparameters, Location, Observation, TrainingSchedule};
use crate::rng::{self, Stream};
use crate::svgp::GpState;

/// Softmax of `mu`, computed after subtracting the maximum.
pub fn link(mu: &[f64]) -> Result<Vec<f64>> {
    if mu.iter().any(|m| !m.is_finite()) {
        return Err(GdrfError::numerical(format!("non-finite link input {mu:?}")));
    }
    let mut out = vec![0.0; mu.len()];
    link_into(mu, &mut out);
    Ok(out)
}

pub(crate) fn link_into(mu: &[f64], out: &mut [f64]) {
    let max = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &m) in out.iter_mut().zip(mu) {
        *o = (m - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// `topics * phi` for every row: the word distribution implied by a topic
/// mixture.
pub fn mix_words(topics: &[Vec<f64>], phi: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let w = phi.first().map_or(0, Vec::len);
    topics
        .iter()
        .map(|t| {
            let mut row = vec![0.0; w];
            for (p, phi_row) in t.iter().zip(phi) {
                for (r, f) in row.iter_mut().zip(phi_row) {
                    *r += p * f;
                }
            }
            row
        })
        .collect()
}

/// Anything that maps locations to topic and word distributions.
pub trait TopicModel {
    fn grid(&self) -> &DiscretizationGrid;

    /// Word distribution of every topic (`k x w`).
    fn phi(&self) -> &[Vec<f64>];

    fn predict_topics(&self, query: &[Location]) -> Result<Vec<Vec<f64>>>;

    fn predict_words(&self, query: &[Location]) -> Result<Vec<Vec<f64>>> {
        Ok(mix_words(&self.predict_topics(query)?, self.phi()))
    }

    /// Most likely topic and most likely word at every cell centre of `grid`.
    fn max_likelihood_maps(&self, grid: &DiscretizationGrid) -> Result<(Vec<usize>, Vec<usize>)> {
        let centers = grid.cell_centers();
        let topics = self.predict_topics(&centers)?;
        let words = mix_words(&topics, self.phi());
        Ok((
            topics.iter().map(|r| argmax(r)).collect(),
            words.iter().map(|r| argmax(r)).collect(),
        ))
    }
}

/// What happened during one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    /// Mean log predictive probability of the training words.
    pub train_log_likelihood: f64,
    /// Final ELBO of every topic GP.
    pub elbo: Vec<f64>,
    /// GP steps rejected by the line search in this iteration.
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdrfModel {
    pub hp: Hyperparameters,
    pub grid: DiscretizationGrid,
    pub counts: CountMatrices,
    pub gps: Vec<GpState>,
    pub phi: Vec<Vec<f64>>,
    pub diagnostics: Vec<IterationDiagnostics>,
}

impl TopicModel for GdrfModel {
    fn grid(&self) -> &DiscretizationGrid {
        &self.grid
    }

    fn phi(&self) -> &[Vec<f64>] {
        &self.phi
    }

    fn predict_topics(&self, query: &[Location]) -> Result<Vec<Vec<f64>>> {
        let means = self
            .gps
            .iter()
            .map(|gp| gp.predict_mean(query))
            .collect::<Result<Vec<_>>>()?;
        let k = self.gps.len();
        let mut mu = vec![0.0; k];
        (0..query.len())
            .map(|q| {
                for j in 0..k {
                    mu[j] = means[j][q];
                }
                if mu.iter().any(|m| !m.is_finite()) {
                    return Err(GdrfError::numerical(format!("non-finite latent field value at {:?}", query[q])));
                }
                let mut out = vec![0.0; k];
                link_into(&mu, &mut out);
                Ok(out)
            })
            .collect()
    }
}

/// Check that every observation lies in the world and uses a known word.
pub fn validate_data(data: &[Observation], grid: &DiscretizationGrid, w: usize) -> Result<()> {
    let mut problems = Vec::new();
    for (i, o) in data.iter().enumerate() {
        if !grid.world().contains(&o.location) {
            problems.push(format!("observation {i}: location {:?} outside the world", o.location));
        }
        if o.word >= w {
            problems.push(format!("observation {i}: word {} outside vocabulary of {w}", o.word));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(GdrfError::Ingestion(problems))
    }
}

impl GdrfModel {
    /// The model as it stands before any inference: random assignments,
    /// GPs equal to their prior (uniform topic field).
    pub fn untrained(data: &[Observation], hp: &Hyperparameters, grid: &DiscretizationGrid, seed: u64) -> Result<Self> {
        hp.validate()?;
        validate_data(data, grid, hp.w)?;
        let mut init_rng = rng::derive(seed, Stream::Initialization);
        let counts = gibbs::initialize(data, hp.k, hp.w, &mut init_rng)?;
        let inducing = grid.inducing_locations(hp.schedule.inducing_cap);
        let gps = (0..hp.k)
            .map(|_| GpState::new(hp.kernel.clone(), 0.0, inducing.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(GdrfModel {
            phi: word_topic_posterior(&counts, hp.beta),
            hp: hp.clone(),
            grid: grid.clone(),
            counts,
            gps,
            diagnostics: Vec::new(),
        })
    }

    /// Fit a model to `data`. Deterministic given `seed`.
    pub fn fit(data: &[Observation], hp: &Hyperparameters, grid: &DiscretizationGrid, seed: u64) -> Result<Self> {
        Self::fit_from(data, hp, grid, seed, None)
    }

    /// As [`Self::fit`], optionally starting from given topic assignments
    /// instead of random ones.
    pub fn fit_from(
        data: &[Observation],
        hp: &Hyperparameters,
        grid: &DiscretizationGrid,
        seed: u64,
        assignments: Option<&[usize]>,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(GdrfError::Ingestion(vec!["no observations to fit".into()]));
        }
        let mut model = GdrfModel::untrained(data, hp, grid, seed)?;
        if let Some(z) = assignments {
            let words: Vec<usize> = data.iter().map(|o| o.word).collect();
            model.counts = CountMatrices::from_assignments(hp.k, hp.w, &words, z)?;
        }
        let mut sweep_rng = rng::derive(seed, Stream::Sweep);
        let k = hp.k;
        let schedule = hp.schedule;
        let locations: Vec<&Location> = data.iter().map(|o| &o.location).collect();

        // Before any GP exists the spatial factor comes from the empirical
        // densities of the current assignments.
        let empirical_prior = |counts: &CountMatrices| -> Result<PriorTable> {
            let field = estimate_density(grid, k, locations.iter().copied().zip(counts.assignments.iter().copied()))?;
            PriorTable::from_rows(
                &data
                    .iter()
                    .map(|o| Ok(field.smoothed_topic_probs(grid.bin(&o.location)?, hp.alpha)))
                    .collect::<Result<Vec<_>>>()?,
            )
        };
        let mut prior = empirical_prior(&model.counts)?;

        let mut history: Vec<f64> = Vec::new();
        for iteration in 0..schedule.n_outer {
            for _ in 0..schedule.n_gibbs_inner {
                gibbs::sweep(data, &mut model.counts, &prior, hp.beta, &mut sweep_rng)?;
            }
            model.phi = word_topic_posterior(&model.counts, hp.beta);

            let field = estimate_density(
                grid,
                k,
                locations.iter().copied().zip(model.counts.assignments.iter().copied()),
            )?;
            let (centers, targets) = gp_targets(&field, hp.alpha)?;
            // Only cells holding observations are regressed on. An empty cell
            // says nothing about topic proportions, and treating it as zero
            // density would drag every field down wherever data is missing.
            let (centers, targets): (Vec<Location>, Vec<Vec<f64>>) = centers
                .into_iter()
                .zip(targets)
                .zip(&field.rho_total)
                .filter(|(_, &total)| total > 0.0)
                .map(|(pair, _)| pair)
                .unzip();
            let per_topic: Vec<Vec<f64>> = (0..k).map(|j| targets.iter().map(|row| row[j]).collect()).collect();
            if iteration == 0 {
                // Start each GP from the exact variational optimum for the
                // first targets so the spatial prior is informative at once.
                for (gp, y) in model.gps.iter_mut().zip(&per_topic) {
                    gp.const_mean = y.iter().sum::<f64>() / y.len() as f64;
                    *gp = gp.with_optimal_variational(&centers, y)?;
                }
            }

            let updates = update_gps(&model.gps, &centers, &per_topic, &schedule)?;
            let mut elbo = Vec::with_capacity(k);
            let mut rejected_steps = 0;
            for (j, (gp, last_elbo, rejected)) in updates.into_iter().enumerate() {
                model.gps[j] = gp;
                elbo.push(last_elbo);
                rejected_steps += rejected;
            }

            prior = model.prior_at_observations(data)?;
            let ll = data
                .iter()
                .enumerate()
                .map(|(i, o)| {
                    prior
                        .row(i)
                        .iter()
                        .zip(&model.phi)
                        .map(|(p, phi_row)| p * phi_row[o.word])
                        .sum::<f64>()
                        .ln()
                })
                .sum::<f64>()
                / data.len() as f64;
            model.diagnostics.push(IterationDiagnostics {
                iteration,
                train_log_likelihood: ll,
                elbo,
                rejected_steps,
            });
            history.push(ll);
            if let Some(tol) = schedule.early_stop_tol {
                if history.len() > 5 && history[history.len() - 1] - history[history.len() - 6] < tol {
                    break;
                }
            }
        }
        Ok(model)
    }

    /// `link(mu(x_i))` at every observation.
    fn prior_at_observations(&self, data: &[Observation]) -> Result<PriorTable> {
        let predictors = self.gps.iter().map(GpState::predictor).collect::<Result<Vec<_>>>()?;
        let k = self.gps.len();
        let mut probs = vec![0.0; data.len() * k];
        let mut mu = vec![0.0; k];
        for (o, out) in data.iter().zip(probs.chunks_mut(k)) {
            for (m, p) in mu.iter_mut().zip(&predictors) {
                *m = p.eval(&o.location);
            }
            if mu.iter().any(|m| !m.is_finite()) {
                return Err(GdrfError::numerical("non-finite latent field value"));
            }
            link_into(&mu, out);
        }
        PriorTable::new(k, probs)
    }
}

/// Run `steps` variational updates on every topic GP, optionally in
/// parallel. Returns the new state, its ELBO and the number of rejected steps.
fn update_gps(
    gps: &[GpState],
    x: &[Location],
    targets: &[Vec<f64>],
    schedule: &TrainingSchedule,
) -> Result<Vec<(GpState, f64, usize)>> {
    let threads = schedule.threads;
    let update = |gp: &GpState, y: &[f64]| -> Result<(GpState, f64, usize)> {
        let mut gp = gp.clone();
        let mut rejected = 0;
        let mut last = f64::NAN;
        for _ in 0..schedule.n_svi_inner {
            let (next, report) = gp.fit_step_with(x, y, schedule.learning_rate, schedule.learn_kernel)?;
            rejected += usize::from(!report.accepted);
            last = report.elbo_after;
            gp = next;
        }
        Ok((gp, last, rejected))
    };
    if threads <= 1 || gps.len() <= 1 {
        return gps.iter().zip(targets).map(|(gp, y)| update(gp, y)).collect();
    }
    let chunk = gps.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = gps
            .chunks(chunk)
            .zip(targets.chunks(chunk))
            .map(|(g, t)| {
                let update = &update;
                scope.spawn(move || g.iter().zip(t).map(|(gp, y)| update(gp, y)).collect::<Result<Vec<_>>>())
            })
            .collect();
        let mut out = Vec::with_capacity(gps.len());
        for h in handles {
            out.extend(h.join().expect("GP worker panicked")?);
        }
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelParams;
    use crate::model::World;
    use rand::{Rng, SeedableRng};

    #[test]
    fn link_symmetric() {
        for p in link(&[0.0, 0.0, 0.0]).unwrap() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn link_shift_invariant() {
        assert_eq!(link(&[1.0, 1.0, 1.0]).unwrap(), link(&[0.0, 0.0, 0.0]).unwrap());
        let a = link(&[0.3, -2.0, 5.0]).unwrap();
        let b = link(&[1000.3, 998.0, 1005.0]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn link_hand_values() {
        let p = link(&[2f64.ln(), 0.0, 0.0]).unwrap();
        // exp ratios 2 : 1 : 1
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.25).abs() < 1e-15);
        assert!((p[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn link_rejects_non_finite() {
        assert!(link(&[f64::NAN, 0.0]).is_err());
        assert!(link(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    fn small_hp(k: usize, w: usize) -> Hyperparameters {
        let mut hp = Hyperparameters::new(k, w, KernelParams::new(2.0, 1.0));
        hp.schedule.n_outer = 4;
        hp.schedule.n_gibbs_inner = 5;
        hp
    }

    fn random_data(n: usize, w: usize, seed: u64) -> Vec<Observation> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Observation::new(vec![rng.random_range(0.0..10.0)], rng.random_range(0..w)))
            .collect()
    }

    fn line_grid(cells: usize) -> DiscretizationGrid {
        DiscretizationGrid::new(World::new(vec![(0.0, 10.0)]).unwrap(), vec![cells]).unwrap()
    }

    #[test]
    fn single_topic_matches_closed_form() {
        let data = random_data(200, 5, 1);
        let hp = small_hp(1, 5);
        let model = GdrfModel::fit(&data, &hp, &line_grid(10), 3).unwrap();
        // closed form: smoothed word frequencies
        let mut freq = [0.0; 5];
        for o in &data {
            freq[o.word] += 1.0;
        }
        for (w, f) in freq.iter().enumerate() {
            let expected = (f + hp.beta) / (200.0 + 5.0 * hp.beta);
            assert!((model.phi[0][w] - expected).abs() < 1e-12);
        }
        let topics = model.predict_topics(&[vec![1.0], vec![7.5]]).unwrap();
        assert!(topics.iter().all(|t| t == &vec![1.0]));
        let words = model.predict_words(&[vec![4.0]]).unwrap();
        for (a, b) in words[0].iter().zip(&model.phi[0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let (tmap, _) = model.max_likelihood_maps(&model.grid).unwrap();
        assert!(tmap.iter().all(|&t| t == 0));
    }

    #[test]
    fn fit_is_deterministic() {
        let data = random_data(150, 4, 2);
        let hp = small_hp(2, 4);
        let a = GdrfModel::fit(&data, &hp, &line_grid(10), 9).unwrap();
        let b = GdrfModel::fit(&data, &hp, &line_grid(10), 9).unwrap();
        assert_eq!(a, b);
        let mut hp_threads = hp.clone();
        hp_threads.schedule.threads = 2;
        let c = GdrfModel::fit(&data, &hp_threads, &line_grid(10), 9).unwrap();
        assert_eq!(a.gps, c.gps);
        assert_eq!(a.counts, c.counts);
    }

    #[test]
    fn warm_start_uses_the_given_assignments() {
        let data = random_data(120, 4, 5);
        let mut hp = small_hp(2, 4);
        hp.schedule.n_outer = 1;
        hp.schedule.n_gibbs_inner = 1;
        let grid = line_grid(6);
        let z: Vec<usize> = (0..data.len()).map(|i| i % 2).collect();
        let warm = GdrfModel::fit_from(&data, &hp, &grid, 1, Some(&z)).unwrap();
        let cold = GdrfModel::fit(&data, &hp, &grid, 1).unwrap();
        assert_ne!(warm.counts, cold.counts);
        assert_eq!(warm.counts.assignments.len(), data.len());
        assert!(GdrfModel::fit_from(&data, &hp, &grid, 1, Some(&z[1..])).is_err());
        assert!(GdrfModel::fit_from(&data, &hp, &grid, 1, Some(&vec![2; data.len()])).is_err());
    }

    #[test]
    fn untrained_model_predicts_uniform_topics_and_mean_words() {
        let data = random_data(50, 3, 4);
        let model = GdrfModel::untrained(&data, &small_hp(3, 3), &line_grid(5), 0).unwrap();
        let t = model.predict_topics(&[vec![0.0], vec![100.0]]).unwrap();
        for row in &t {
            for p in row {
                assert!((p - 1.0 / 3.0).abs() < 1e-12);
            }
        }
        let w = model.predict_words(&[vec![2.0]]).unwrap();
        for v in 0..3 {
            let mean = model.phi.iter().map(|r| r[v]).sum::<f64>() / 3.0;
            assert!((w[0][v] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn shifting_const_means_preserves_topics() {
        let data = random_data(120, 4, 6);
        let model = GdrfModel::fit(&data, &small_hp(3, 4), &line_grid(8), 1).unwrap();
        let mut shifted = model.clone();
        for gp in shifted.gps.iter_mut() {
            gp.const_mean += 7.5;
        }
        let q: Vec<Location> = (0..20).map(|i| vec![i as f64 * 0.5]).collect();
        let a = model.predict_topics(&q).unwrap();
        let b = shifted.predict_topics(&q).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-9);
            }
        }
        for row in model.predict_words(&q).unwrap() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
        assert!(model.diagnostics.iter().all(|d| d.elbo.iter().all(|e| e.is_finite())));
    }

    #[test]
    fn mixture_argmax_differs_from_conditional_argmax() {
        // Topic 0 slightly more likely, but its best word is rare overall,
        // while word 2 carries weight in both topics.
        let phi = vec![vec![0.5, 0.0, 0.5 - 1e-3, 1e-3], vec![0.0, 0.45, 0.55, 0.0]];
        let topics = vec![vec![0.55, 0.45]];
        let words = mix_words(&topics, &phi);
        let ml_topic = argmax(&topics[0]);
        let conditional_best = argmax(&phi[ml_topic]);
        let mixture_best = argmax(&words[0]);
        assert_eq!(conditional_best, 0);
        assert_eq!(mixture_best, 2);
    }

    #[test]
    fn rejects_out_of_world_data() {
        let data = vec![Observation::new(vec![11.0], 0)];
        assert!(matches!(
            GdrfModel::fit(&data, &small_hp(2, 2), &line_grid(5), 0),
            Err(GdrfError::Ingestion(_))
        ));
        assert!(GdrfModel::fit(&[], &small_hp(2, 2), &line_grid(5), 0).is_err());
    }

    fn separable_fixture(seed: u64) -> (Vec<Observation>, DiscretizationGrid) {
        // Left half speaks words 0..4, right half words 5..9.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let world = World::lattice(&[10, 10]).unwrap();
        let grid = DiscretizationGrid::default_for(world).unwrap();
        let data = (0..2000)
            .map(|_| {
                let x = rng.random_range(-0.5..9.5);
                let y = rng.random_range(-0.5..9.5);
                let base = if x < 4.5 { 0 } else { 5 };
                Observation::new(vec![x, y], base + rng.random_range(0..5))
            })
            .collect();
        (data, grid)
    }

    #[test]
    fn separable_fixture_is_recovered() {
        let (data, grid) = separable_fixture(11);
        let mut hp = Hyperparameters::new(2, 10, KernelParams::new(2.0, 5.0));
        hp.schedule.n_outer = 20;
        hp.schedule.n_gibbs_inner = 10;
        let model = GdrfModel::fit(&data, &hp, &grid, 5).unwrap();
        let left_topic = argmax(&model.phi.iter().map(|r| r[..5].iter().sum::<f64>()).collect::<Vec<_>>());
        let centers = grid.cell_centers();
        let topics = model.predict_topics(&centers).unwrap();
        let mut correct = 0;
        for (c, t) in centers.iter().zip(&topics) {
            let expected = if c[0] < 4.5 { left_topic } else { 1 - left_topic };
            // cells on the boundary column are shared by both halves of the kernel
            if (c[0] - 4.0).abs() > 1.0 && (c[0] - 5.0).abs() > 1.0 {
                // 20 observations per cell against alpha = 1 caps a pure cell near 0.95
                assert!(t[expected] > 0.7, "cell {c:?}: {t:?}");
            }
            correct += usize::from(argmax(t) == expected);
        }
        assert!(correct as f64 >= 0.95 * centers.len() as f64);
        let (tmap, _) = model.max_likelihood_maps(&grid).unwrap();
        assert_eq!(tmap.len(), 100);
    }

    #[test]
    fn far_queries_fall_back_to_const_means() {
        let (data, grid) = separable_fixture(12);
        let mut hp = Hyperparameters::new(2, 10, KernelParams::new(2.0, 5.0));
        hp.schedule.n_outer = 3;
        let model = GdrfModel::fit(&data, &hp, &grid, 5).unwrap();
        let far = model.predict_topics(&[vec![1e4, -1e4]]).unwrap();
        let c: Vec<f64> = model.gps.iter().map(|g| g.const_mean).collect();
        let expected = link(&c).unwrap();
        for (a, b) in far[0].iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn argmax_survives_monotone_rescaling(row in proptest::collection::vec(1e-6f64..1.0, 1..12)) {
            let cubed: Vec<f64> = row.iter().map(|v| v.powi(3)).collect();
            let logged: Vec<f64> = row.iter().map(|v| v.ln()).collect();
            proptest::prop_assert_eq!(argmax(&row), argmax(&cubed));
            proptest::prop_assert_eq!(argmax(&row), argmax(&logged));
        }
    }
}

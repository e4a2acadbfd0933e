//! Metrics and experiment protocols. Logarithms are natural throughout.

use std::collections::BTreeMap;

use crate::density::DiscretizationGrid;
use crate::engine::{GdrfModel, TopicModel};
use crate::error::{GdrfError, Result};
use crate::model::{Hyperparameters, Observation};

/// One label per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalMap {
    pub grid: DiscretizationGrid,
    pub labels: Vec<usize>,
    pub categories: usize,
}

impl CategoricalMap {
    pub fn new(grid: DiscretizationGrid, labels: Vec<usize>, categories: usize) -> Result<Self> {
        if labels.len() != grid.num_cells() {
            return Err(GdrfError::contract(format!(
                "{} labels for {} cells",
                labels.len(),
                grid.num_cells()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= categories) {
            return Err(GdrfError::contract(format!("label {bad} outside {categories} categories")));
        }
        Ok(CategoricalMap { grid, labels, categories })
    }
}

/// Mutual information of two maps, with cell counts as probabilities.
pub fn mutual_information(a: &CategoricalMap, b: &CategoricalMap) -> Result<f64> {
    if a.grid != b.grid {
        return Err(GdrfError::contract("maps are defined on different grids"));
    }
    Ok(label_mutual_information(&a.labels, &b.labels))
}

/// Mutual information of two equally long label sequences.
///
/// Summation runs over joint cells in ascending `(a, b)` order, each term
/// `p_ab * ln(n_ab * n / (n_a * n_b))`.
pub fn label_mutual_information(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "label sequences differ in length");
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut na: BTreeMap<usize, usize> = BTreeMap::new();
    let mut nb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *na.entry(x).or_default() += 1;
        *nb.entry(y).or_default() += 1;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &nxy)| {
            let nxy = nxy as f64;
            nxy / n * (nxy * n / (na[&x] as f64 * nb[&y] as f64)).ln()
        })
        .sum();
    mi.max(0.0)
}

/// `I(model, truth) / I(truth, truth)`.
pub fn afmi(model_map: &CategoricalMap, truth_map: &CategoricalMap) -> Result<f64> {
    if model_map.grid != truth_map.grid {
        return Err(GdrfError::contract("maps are defined on different grids"));
    }
    label_afmi(&model_map.labels, &truth_map.labels)
}

pub fn label_afmi(model: &[usize], truth: &[usize]) -> Result<f64> {
    if model.len() != truth.len() {
        return Err(GdrfError::contract("maps differ in length"));
    }
    let h = label_mutual_information(truth, truth);
    if h <= 0.0 {
        return Err(GdrfError::contract("ground-truth map has a single class; AFMI is undefined"));
    }
    Ok(label_mutual_information(model, truth) / h)
}

/// `KL(p || q)` in nats. Terms with `p_i = 0` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(GdrfError::contract(format!("simplices of length {} and {}", p.len(), q.len())));
    }
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(GdrfError::numerical(format!("q[{i}] is zero where p[{i}] = {pi}")));
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinKl {
    pub bin: usize,
    pub center: f64,
    pub n_obs: usize,
    /// `None` for bins without observations.
    pub kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlSeries {
    pub bins: Vec<BinKl>,
}

impl KlSeries {
    /// Mean over bins that have observations.
    pub fn mean(&self) -> Option<f64> {
        mean(self.bins.iter().filter_map(|b| b.kl))
    }

    pub fn skipped(&self) -> usize {
        self.bins.iter().filter(|b| b.kl.is_none()).count()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Empirical word frequencies of each equal-width bin of a 1-D world
/// against the model's word prediction at the bin centre,
/// `KL(empirical || model)`.
pub fn windowed_kl<M: TopicModel + ?Sized>(model: &M, data: &[Observation], n_bins: usize) -> Result<KlSeries> {
    let world = model.grid().world().clone();
    if world.dim() != 1 {
        return Err(GdrfError::contract("windowed KL needs a one-dimensional world"));
    }
    let bins = DiscretizationGrid::new(world, vec![n_bins])?;
    bin_kl(model, data, &bins, 0..n_bins)
}

/// KL series over a subset of the bins of `bins`.
fn bin_kl<M: TopicModel + ?Sized>(
    model: &M,
    data: &[Observation],
    bins: &DiscretizationGrid,
    range: std::ops::Range<usize>,
) -> Result<KlSeries> {
    let w = model.phi().first().map_or(0, Vec::len);
    let mut counts = vec![vec![0usize; w]; bins.num_cells()];
    for o in data {
        counts[bins.bin(&o.location)?][o.word] += 1;
    }
    let centers: Vec<_> = range.clone().map(|b| bins.cell_center(b)).collect();
    let predicted = model.predict_words(&centers)?;
    let series = range
        .zip(centers)
        .zip(predicted)
        .map(|((b, center), q)| {
            let n: usize = counts[b].iter().sum();
            let kl = if n == 0 {
                None
            } else {
                let p: Vec<f64> = counts[b].iter().map(|&c| c as f64 / n as f64).collect();
                Some(kl_divergence(&p, &q)?)
            };
            Ok(BinKl { bin: b, center: center[0], n_obs: n, kl })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KlSeries { bins: series })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRatio {
    pub start_bin: usize,
    /// One past the last bin of the window.
    pub end_bin: usize,
    pub n_held_out: usize,
    /// Mean KL inside the window for the model trained on everything.
    pub kl_full: Option<f64>,
    /// Mean KL inside the window for the model that never saw it.
    pub kl_held_out: Option<f64>,
    /// `kl_held_out / kl_full`; `None` for windows without observations.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutResult {
    pub windows: Vec<WindowRatio>,
}

impl HoldoutResult {
    pub fn ratios(&self) -> Vec<f64> {
        self.windows.iter().filter_map(|w| w.ratio).collect()
    }

    pub fn mean(&self) -> Option<f64> {
        mean(self.ratios().into_iter())
    }

    pub fn max(&self) -> Option<f64> {
        self.ratios().into_iter().reduce(f64::max)
    }
}

/// Window start bins: `0, stride, 2 stride, ...` while the window fits.
pub fn window_starts(n_bins: usize, width: usize, stride: usize) -> Vec<usize> {
    if width == 0 || stride == 0 || width > n_bins {
        return Vec::new();
    }
    (0..=n_bins - width).step_by(stride).collect()
}

/// Slide a window of `width` grid cells across a 1-D dataset. For each
/// position a model is trained without the window's observations and its
/// mean KL inside the window is compared to that of a model trained on all
/// data. Both trainings use `seed`.
pub fn holdout_experiment(
    data: &[Observation],
    hp: &Hyperparameters,
    grid: &DiscretizationGrid,
    width: usize,
    stride: usize,
    seed: u64,
) -> Result<HoldoutResult> {
    if grid.dim() != 1 {
        return Err(GdrfError::contract("the hold-out experiment needs a one-dimensional world"));
    }
    if width == 0 || stride == 0 {
        return Err(GdrfError::config("window width and stride must be positive"));
    }
    let n_bins = grid.num_cells();
    if width > n_bins {
        return Err(GdrfError::config(format!("window of {width} bins exceeds the {n_bins}-bin axis")));
    }
    let cells = data.iter().map(|o| grid.bin(&o.location)).collect::<Result<Vec<_>>>()?;
    let full = GdrfModel::fit(data, hp, grid, seed)?;
    let starts = window_starts(n_bins, width, stride);

    let run = |start: usize| -> Result<WindowRatio> {
        let end = start + width;
        let inside = |c: usize| (start..end).contains(&c);
        let held: Vec<Observation> = data
            .iter()
            .zip(&cells)
            .filter(|(_, &c)| inside(c))
            .map(|(o, _)| o.clone())
            .collect();
        if held.is_empty() {
            return Ok(WindowRatio {
                start_bin: start,
                end_bin: end,
                n_held_out: 0,
                kl_full: None,
                kl_held_out: None,
                ratio: None,
            });
        }
        let kept: Vec<Observation> = data
            .iter()
            .zip(&cells)
            .filter(|(_, &c)| !inside(c))
            .map(|(o, _)| o.clone())
            .collect();
        let kl_full = bin_kl(&full, &held, grid, start..end)?.mean();
        let kl_held_out = if kept.is_empty() {
            None
        } else {
            let partial = GdrfModel::fit(&kept, hp, grid, seed)?;
            bin_kl(&partial, &held, grid, start..end)?.mean()
        };
        let ratio = match (kl_full, kl_held_out) {
            (Some(a), Some(b)) if a > 0.0 => Some(b / a),
            _ => None,
        };
        Ok(WindowRatio {
            start_bin: start,
            end_bin: end,
            n_held_out: held.len(),
            kl_full,
            kl_held_out,
            ratio,
        })
    };

    let threads = hp.schedule.threads.max(1);
    let windows = if threads == 1 {
        starts.iter().map(|&s| run(s)).collect::<Result<Vec<_>>>()?
    } else {
        // Each window's fit already pins its seed, so splitting windows
        // across workers cannot change the results.
        let chunk = starts.len().div_ceil(threads).max(1);
        std::thread::scope(|scope| {
            let handles: Vec<_> = starts
                .chunks(chunk)
                .map(|part| {
                    let run = &run;
                    scope.spawn(move || part.iter().map(|&s| run(s)).collect::<Result<Vec<_>>>())
                })
                .collect();
            let mut out = Vec::with_capacity(starts.len());
            for h in handles {
                out.extend(h.join().expect("hold-out worker panicked")?);
            }
            Ok::<_, GdrfError>(out)
        })?
    };
    Ok(HoldoutResult { windows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelParams;
    use crate::model::{Location, World};
    use proptest::prelude::*;

    fn grid(n: usize) -> DiscretizationGrid {
        DiscretizationGrid::new(World::lattice(&[n]).unwrap(), vec![n]).unwrap()
    }

    fn map(labels: Vec<usize>, k: usize) -> CategoricalMap {
        CategoricalMap::new(grid(labels.len()), labels, k).unwrap()
    }

    #[test]
    fn mi_examples() {
        let ln2 = 2f64.ln();
        let a = map(vec![0, 0, 1, 1], 2);
        assert!((mutual_information(&a, &a).unwrap() - ln2).abs() < 1e-15);
        assert!(mutual_information(&a, &map(vec![0, 1, 0, 1], 2)).unwrap().abs() < 1e-15);
        let other_grid = CategoricalMap::new(grid(4), vec![0, 0, 1, 1], 2).unwrap();
        let mut moved = other_grid.clone();
        moved.grid = DiscretizationGrid::new(World::new(vec![(0.0, 4.0)]).unwrap(), vec![4]).unwrap();
        assert!(mutual_information(&other_grid, &moved).is_err());
    }

    #[test]
    fn checkerboard_vs_stripes_is_independent() {
        let g = DiscretizationGrid::new(World::lattice(&[8, 8]).unwrap(), vec![8, 8]).unwrap();
        let checker: Vec<usize> = (0..64).map(|c| (c / 8 + c % 8) % 2).collect();
        let stripes: Vec<usize> = (0..64).map(|c| (c / 8) % 2).collect();
        let a = CategoricalMap::new(g.clone(), checker, 2).unwrap();
        let b = CategoricalMap::new(g, stripes, 2).unwrap();
        assert!(mutual_information(&a, &b).unwrap() < 1e-12);
        assert!(afmi(&a, &b).unwrap() < 1e-12);
    }

    #[test]
    fn afmi_examples() {
        let truth = map(vec![0, 1, 2, 2, 1, 0, 0, 1], 3);
        assert_eq!(afmi(&truth, &truth).unwrap(), 1.0);
        let permuted = map(truth.labels.iter().map(|&l| (l + 1) % 3).collect(), 3);
        assert!((afmi(&permuted, &truth).unwrap() - 1.0).abs() < 1e-12);
        assert!(afmi(&truth, &map(vec![1; 8], 3)).is_err());
        assert!(CategoricalMap::new(grid(2), vec![0, 3], 3).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - 2f64.ln()).abs() < 1e-15);
        let p = [0.9, 0.1];
        let q = [0.5, 0.5];
        let forward = kl_divergence(&p, &q).unwrap();
        let backward = kl_divergence(&q, &p).unwrap();
        assert!((forward - backward).abs() > 1e-3);
        assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).is_err());
        assert!(kl_divergence(&[1.0], &[0.5, 0.5]).is_err());
    }

    /// A model that returns fixed word distributions per bin.
    struct Fixed {
        grid: DiscretizationGrid,
        phi: Vec<Vec<f64>>,
    }

    impl TopicModel for Fixed {
        fn grid(&self) -> &DiscretizationGrid {
            &self.grid
        }
        fn phi(&self) -> &[Vec<f64>] {
            &self.phi
        }
        fn predict_topics(&self, query: &[Location]) -> Result<Vec<Vec<f64>>> {
            // topic j is certain in bin j
            query
                .iter()
                .map(|q| {
                    let mut row = vec![0.0; self.phi.len()];
                    row[self.grid.bin(q)?] = 1.0;
                    Ok(row)
                })
                .collect()
        }
    }

    fn obs(x: f64, w: usize) -> Observation {
        Observation::new(vec![x], w)
    }

    #[test]
    fn windowed_kl_hand_values() {
        let model = Fixed { grid: grid(2), phi: vec![vec![0.5, 0.5], vec![0.25, 0.75]] };
        // bin 0: words (0,0,0,1) -> p=(3/4,1/4); bin 1: words (1,1) -> p=(0,1)
        let data = vec![obs(0.0, 0), obs(0.1, 0), obs(-0.2, 0), obs(0.3, 1), obs(1.0, 1), obs(1.2, 1)];
        let s = windowed_kl(&model, &data, 2).unwrap();
        let kl0 = 0.75 * (0.75f64 / 0.5).ln() + 0.25 * (0.25f64 / 0.5).ln();
        let kl1 = (1.0f64 / 0.75).ln();
        assert!((s.bins[0].kl.unwrap() - kl0).abs() < 1e-15);
        assert!((s.bins[1].kl.unwrap() - kl1).abs() < 1e-15);
        assert!((s.mean().unwrap() - (kl0 + kl1) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn windowed_kl_perfect_model_and_gaps() {
        let model = Fixed { grid: grid(3), phi: vec![vec![0.5, 0.5], vec![0.0, 1.0], vec![0.2, 0.8]] };
        let data = vec![obs(0.0, 0), obs(0.1, 1), obs(1.0, 1)];
        let s = windowed_kl(&model, &data, 3).unwrap();
        assert_eq!(s.bins[0].kl, Some(0.0));
        assert_eq!(s.bins[1].kl, Some(0.0));
        assert_eq!(s.bins[2].kl, None);
        assert_eq!(s.skipped(), 1);
        let flat = Fixed { grid: grid(3), phi: vec![vec![0.5, 0.5]; 3] };
        let single = windowed_kl(&flat, &data, 1).unwrap();
        assert_eq!(single.bins.len(), 1);
    }

    #[test]
    fn window_arithmetic() {
        assert_eq!(window_starts(20, 5, 5), vec![0, 5, 10, 15]);
        assert_eq!(window_starts(500, 5, 25).len(), 20);
        assert_eq!(window_starts(5, 5, 3), vec![0]);
        assert!(window_starts(4, 5, 1).is_empty());
    }

    fn series(n: usize, seed: u64) -> Vec<Observation> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x: f64 = rng.random_range(-0.5..19.5);
                let w = if rng.random::<f64>() < (x / 20.0) { 0 } else { 1 + rng.random_range(0..2) };
                obs(x, w)
            })
            .collect()
    }

    fn small_hp() -> Hyperparameters {
        let mut hp = Hyperparameters::new(2, 3, KernelParams::new(4.0, 2.0));
        hp.schedule.n_outer = 3;
        hp.schedule.n_gibbs_inner = 3;
        hp
    }

    #[test]
    fn holdout_counts_windows_and_is_deterministic() {
        let data = series(400, 1);
        let a = holdout_experiment(&data, &small_hp(), &grid(20), 5, 5, 3).unwrap();
        assert_eq!(a.windows.len(), 4);
        assert!(a.windows.iter().all(|w| w.ratio.is_some_and(|r| r > 0.0)));
        let b = holdout_experiment(&data, &small_hp(), &grid(20), 5, 5, 3).unwrap();
        assert_eq!(a, b);
        let mut threaded = small_hp();
        threaded.schedule.threads = 3;
        assert_eq!(holdout_experiment(&data, &threaded, &grid(20), 5, 5, 3).unwrap(), a);
        let one = holdout_experiment(&data, &small_hp(), &grid(20), 20, 1, 3).unwrap();
        assert_eq!(one.windows.len(), 1);
    }

    #[test]
    fn window_without_data_is_flagged_and_identical_training_gives_ratio_one() {
        // No observations in bins 15..20: model B sees exactly model A's data.
        let data: Vec<_> = series(300, 2).into_iter().filter(|o| o.location[0] < 14.5).collect();
        let r = holdout_experiment(&data, &small_hp(), &grid(20), 5, 5, 4).unwrap();
        let last = &r.windows[3];
        assert_eq!(last.n_held_out, 0);
        assert_eq!(last.ratio, None);
        assert_eq!(r.ratios().len(), 3);
    }

    fn brute_mi(a: &[usize], b: &[usize], ka: usize, kb: usize) -> f64 {
        let n = a.len() as f64;
        let mut joint = vec![vec![0usize; kb]; ka];
        for (&x, &y) in a.iter().zip(b) {
            joint[x][y] += 1;
        }
        let ra: Vec<usize> = joint.iter().map(|r| r.iter().sum()).collect();
        let rb: Vec<usize> = (0..kb).map(|y| joint.iter().map(|r| r[y]).sum()).collect();
        let mut mi = 0.0;
        for x in 0..ka {
            for y in 0..kb {
                if joint[x][y] > 0 {
                    let nxy = joint[x][y] as f64;
                    mi += nxy / n * (nxy * n / (ra[x] as f64 * rb[y] as f64)).ln();
                }
            }
        }
        mi.max(0.0)
    }

    fn simplex(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(1e-3f64..1.0, len).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn mi_matches_joint_histogram(
            (a, b) in (1usize..40).prop_flat_map(|n| (
                proptest::collection::vec(0usize..4, n),
                proptest::collection::vec(0usize..5, n),
            ))
        ) {
            let mi = label_mutual_information(&a, &b);
            prop_assert_eq!(mi, brute_mi(&a, &b, 4, 5));
            prop_assert!((mi - label_mutual_information(&b, &a)).abs() < 1e-12);
            let ha = label_mutual_information(&a, &a);
            let hb = label_mutual_information(&b, &b);
            prop_assert!(mi <= ha.min(hb) + 1e-12);
        }

        #[test]
        fn kl_properties((p, q) in (2usize..8).prop_flat_map(|n| (simplex(n), simplex(n)))) {
            let d = kl_divergence(&p, &q).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-15);
            if p.iter().zip(&q).any(|(a, b)| (a - b).abs() > 1e-6) {
                prop_assert!(d > 0.0);
            }
        }
    }
}

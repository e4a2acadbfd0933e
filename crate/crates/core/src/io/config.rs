//! Run configuration.
//!
//! A config file is flat text with one `key = value` per line; `#` starts a
//! comment. Every key has a matching command-line flag (`n_outer` is
//! `--n-outer`) and flags override the file. All problems found while
//! reading are reported together.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::density::DiscretizationGrid;
use crate::error::{GdrfError, Result};
use crate::io::read_text;
use crate::kernel::KernelParams;
use crate::model::{Hyperparameters, TrainingSchedule, World};
use crate::rost::DEFAULT_RADIUS;

/// A recognised configuration key.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub help: &'static str,
}

pub const KEYS: &[Key] = &[
    Key { name: "model", help: "model kind: gdrf or rost" },
    Key { name: "seed", help: "master seed (unsigned 64-bit)" },
    Key { name: "k", help: "number of topics" },
    Key { name: "w", help: "vocabulary size for simulation (fitting takes it from the data)" },
    Key { name: "alpha", help: "topic pseudo-density / ROST neighbourhood pseudocount" },
    Key { name: "beta", help: "Dirichlet concentration of the word distributions" },
    Key { name: "length_scale", help: "Matern length scale, one value or one per dimension (comma separated)" },
    Key { name: "kernel_scale", help: "Matern output variance" },
    Key { name: "noise_variance", help: "initial Gaussian noise variance of the GP regressions" },
    Key { name: "learn_kernel", help: "optimise length scales and output variance during fitting (true/false)" },
    Key { name: "n_outer", help: "maximum outer iterations" },
    Key { name: "n_gibbs_inner", help: "Gibbs sweeps per outer iteration" },
    Key { name: "n_svi_inner", help: "GP gradient steps per outer iteration" },
    Key { name: "learning_rate", help: "GP optimiser step size" },
    Key { name: "early_stop_tol", help: "early stopping tolerance per observation, or none" },
    Key { name: "inducing_cap", help: "maximum inducing points per GP" },
    Key { name: "threads", help: "worker threads" },
    Key { name: "rost_radius", help: "ROST Von Neumann neighbourhood radius in cells" },
    Key { name: "lattice", help: "integer lattice world with one cell per point, e.g. 11,11" },
    Key { name: "bounds", help: "world bounds as lo:hi per dimension, e.g. 0:1,0:2" },
    Key { name: "cells", help: "grid cells per dimension, e.g. 500" },
    Key { name: "n_obs", help: "observations to simulate" },
    Key { name: "data", help: "observation CSV" },
    Key { name: "truth", help: "ground-truth companion file" },
    Key { name: "model_file", help: "model JSON (defaults to <out_dir>/model.json)" },
    Key { name: "out_dir", help: "output directory" },
    Key { name: "run_id", help: "run identifier written to metric tables" },
    Key { name: "afmi", help: "compute AFMI against the truth file (true/false)" },
    Key { name: "kl_bins", help: "bins of the windowed KL series (1-D worlds)" },
    Key { name: "window_width", help: "hold-out window width in grid cells" },
    Key { name: "window_stride", help: "hold-out window stride in grid cells" },
];

pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Gdrf,
    Rost,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Gdrf => "gdrf",
            ModelKind::Rost => "rost",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gdrf" => Ok(ModelKind::Gdrf),
            "rost" => Ok(ModelKind::Rost),
            _ => Err(format!("expected gdrf or rost, got {s:?}")),
        }
    }
}

/// A raw value and where it came from, for error messages.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub value: String,
    pub origin: String,
}

/// Raw settings by key. Later insertions override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings(BTreeMap<String, Setting>);

impl Settings {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut settings = Settings::default();
        let mut problems = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let origin = format!("{source} line {}", i + 1);
            match line.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => {
                    let key = k.trim();
                    if settings.0.contains_key(key) {
                        problems.push(format!("{origin}: duplicate key {key:?}"));
                    }
                    settings.insert(key, v.trim(), &origin);
                }
                _ => problems.push(format!("{origin}: expected `key = value`")),
            }
        }
        if problems.is_empty() {
            Ok(settings)
        } else {
            Err(GdrfError::Config(problems))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Settings::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn insert(&mut self, key: &str, value: &str, origin: &str) {
        self.0.insert(
            key.to_string(),
            Setting {
                value: value.to_string(),
                origin: origin.to_string(),
            },
        );
    }

    /// Overlay `other` on top of `self`.
    pub fn merge(mut self, other: Settings) -> Settings {
        self.0.extend(other.0);
        self
    }

    pub fn get(&self, key: &str) -> Option<&Setting> {
        self.0.get(key)
    }
}

/// A fully validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub seed: u64,
    pub k: usize,
    pub w: usize,
    pub alpha: f64,
    pub beta: f64,
    pub length_scales: Vec<f64>,
    pub kernel_scale: f64,
    pub noise_variance: f64,
    pub schedule: TrainingSchedule,
    pub rost_radius: usize,
    pub lattice: Option<Vec<usize>>,
    pub bounds: Option<Vec<(f64, f64)>>,
    pub cells: Option<Vec<usize>>,
    pub n_obs: usize,
    pub data: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub model_file: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub run_id: String,
    pub afmi: bool,
    pub kl_bins: Option<usize>,
    pub window_width: usize,
    pub window_stride: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::Gdrf,
            seed: 0,
            k: 3,
            w: 15,
            alpha: 1.0,
            beta: 0.1,
            length_scales: vec![2.5],
            kernel_scale: 5.0,
            noise_variance: KernelParams::new(1.0, 1.0).noise_variance,
            schedule: TrainingSchedule::default(),
            rost_radius: DEFAULT_RADIUS,
            lattice: None,
            bounds: None,
            cells: None,
            n_obs: 10_000,
            data: None,
            truth: None,
            model_file: None,
            out_dir: PathBuf::from("."),
            run_id: "run".into(),
            afmi: false,
            kl_bins: None,
            window_width: 5,
            window_stride: 5,
        }
    }
}

/// Collects parse failures instead of stopping at the first one.
struct Reader<'a> {
    settings: &'a Settings,
    problems: Vec<String>,
}

impl Reader<'_> {
    fn read<T>(&mut self, key: &str, target: &mut T, parse: impl Fn(&str) -> std::result::Result<T, String>) {
        if let Some(s) = self.settings.get(key) {
            match parse(&s.value) {
                Ok(v) => *target = v,
                Err(e) => self.problems.push(format!("{}: {key}: {e}", s.origin)),
            }
        }
    }
}

fn number<T: FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("cannot parse {s:?}"))
}

fn list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',').map(|p| number(p.trim())).collect()
}

fn boolean(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, got {s:?}")),
    }
}

fn range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    Ok((number(lo.trim())?, number(hi.trim())?))
}

impl RunConfig {
    pub fn from_settings(settings: &Settings) -> Result<Self> {
        let mut problems: Vec<String> = settings
            .0
            .iter()
            .filter(|(k, _)| !KEYS.iter().any(|key| key.name == k.as_str()))
            .map(|(k, s)| format!("{}: unknown key {k:?}", s.origin))
            .collect();
        let mut c = RunConfig::default();
        let mut r = Reader {
            settings,
            problems: Vec::new(),
        };
        r.read("model", &mut c.model, |s| s.parse());
        r.read("seed", &mut c.seed, number);
        r.read("k", &mut c.k, number);
        r.read("w", &mut c.w, number);
        r.read("alpha", &mut c.alpha, number);
        r.read("beta", &mut c.beta, number);
        r.read("length_scale", &mut c.length_scales, list);
        r.read("kernel_scale", &mut c.kernel_scale, number);
        r.read("noise_variance", &mut c.noise_variance, number);
        let s = &mut c.schedule;
        r.read("learn_kernel", &mut s.learn_kernel, boolean);
        r.read("n_outer", &mut s.n_outer, number);
        r.read("n_gibbs_inner", &mut s.n_gibbs_inner, number);
        r.read("n_svi_inner", &mut s.n_svi_inner, number);
        r.read("learning_rate", &mut s.learning_rate, number);
        r.read("early_stop_tol", &mut s.early_stop_tol, |v| match v {
            "none" => Ok(None),
            _ => number(v).map(Some),
        });
        r.read("inducing_cap", &mut s.inducing_cap, number);
        r.read("threads", &mut s.threads, number);
        r.read("rost_radius", &mut c.rost_radius, number);
        r.read("lattice", &mut c.lattice, |v| list(v).map(Some));
        r.read("bounds", &mut c.bounds, |v| v.split(',').map(|p| range(p.trim())).collect::<std::result::Result<Vec<_>, _>>().map(Some));
        r.read("cells", &mut c.cells, |v| list(v).map(Some));
        r.read("n_obs", &mut c.n_obs, number);
        r.read("data", &mut c.data, |v| Ok(Some(PathBuf::from(v))));
        r.read("truth", &mut c.truth, |v| Ok(Some(PathBuf::from(v))));
        r.read("model_file", &mut c.model_file, |v| Ok(Some(PathBuf::from(v))));
        r.read("out_dir", &mut c.out_dir, |v| Ok(PathBuf::from(v)));
        r.read("run_id", &mut c.run_id, |v| Ok(v.to_string()));
        r.read("afmi", &mut c.afmi, boolean);
        r.read("kl_bins", &mut c.kl_bins, |v| number(v).map(Some));
        r.read("window_width", &mut c.window_width, number);
        r.read("window_stride", &mut c.window_stride, number);
        problems.extend(r.problems);
        problems.extend(c.semantic_problems());
        if problems.is_empty() {
            Ok(c)
        } else {
            Err(GdrfError::Config(problems))
        }
    }

    fn semantic_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if let Err(GdrfError::Config(p)) = self.hyperparameters(self.w).validate() {
            problems.extend(p);
        }
        if self.lattice.is_some() && (self.bounds.is_some() || self.cells.is_some()) {
            problems.push("lattice cannot be combined with bounds or cells".into());
        }
        if let Some(l) = &self.lattice {
            if l.is_empty() || l.contains(&0) {
                problems.push("lattice sizes must be positive".into());
            }
        }
        if let Some(b) = &self.bounds {
            if let Err(e) = World::new(b.clone()) {
                problems.push(e.to_string());
            }
        }
        if let Some(cells) = &self.cells {
            if cells.contains(&0) {
                problems.push("cells must be positive".into());
            }
            if let Some(b) = &self.bounds {
                if b.len() != cells.len() {
                    problems.push(format!("cells has {} entries but bounds has {}", cells.len(), b.len()));
                }
            }
        }
        if self.window_width == 0 || self.window_stride == 0 {
            problems.push("window_width and window_stride must be positive".into());
        }
        if self.kl_bins == Some(0) {
            problems.push("kl_bins must be positive".into());
        }
        problems
    }

    pub fn hyperparameters(&self, w: usize) -> Hyperparameters {
        let mut kernel = KernelParams::with_length_scales(self.length_scales.clone(), self.kernel_scale);
        kernel.noise_variance = self.noise_variance;
        Hyperparameters {
            k: self.k,
            w,
            alpha: self.alpha,
            beta: self.beta,
            kernel,
            schedule: self.schedule,
        }
    }

    /// The world fixed by `lattice` or `bounds`, if either is set.
    pub fn world(&self) -> Result<Option<World>> {
        match (&self.lattice, &self.bounds) {
            (Some(l), _) => World::lattice(l).map(Some),
            (None, Some(b)) => World::new(b.clone()).map(Some),
            (None, None) => Ok(None),
        }
    }

    /// Grid over `world` at the configured resolution.
    pub fn grid(&self, world: World) -> Result<DiscretizationGrid> {
        match (&self.lattice, &self.cells) {
            (Some(l), _) => DiscretizationGrid::new(world, l.clone()),
            (None, Some(c)) => {
                if c.len() != world.dim() {
                    return Err(GdrfError::config(format!(
                        "cells has {} entries for a {}-dimensional world",
                        c.len(),
                        world.dim()
                    )));
                }
                DiscretizationGrid::new(world, c.clone())
            }
            (None, None) => DiscretizationGrid::default_for(world),
        }
    }

    pub fn model_path(&self) -> PathBuf {
        self.model_file.clone().unwrap_or_else(|| self.out_dir.join("model.json"))
    }

    pub fn require_data(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| GdrfError::config("no observation file given (key `data`)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> Result<RunConfig> {
        RunConfig::from_settings(&Settings::parse(text, "test")?)
    }

    fn problems(r: Result<RunConfig>) -> Vec<String> {
        match r {
            Err(GdrfError::Config(p)) => p,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_every_kind_of_value() {
        let c = config(
            "# a comment\nmodel = rost\nseed = 18446744073709551615\nlength_scale = 1.5, 2\n\
             early_stop_tol = none  # trailing comment\nlearn_kernel = true\nbounds = 0:1, -2:2\ncells = 4,8\n",
        )
        .unwrap();
        assert_eq!(c.model, ModelKind::Rost);
        assert_eq!(c.seed, u64::MAX);
        assert_eq!(c.length_scales, vec![1.5, 2.0]);
        assert_eq!(c.schedule.early_stop_tol, None);
        assert!(c.schedule.learn_kernel);
        assert_eq!(c.bounds, Some(vec![(0.0, 1.0), (-2.0, 2.0)]));
        let grid = c.grid(c.world().unwrap().unwrap()).unwrap();
        assert_eq!(grid.cells_per_dim(), &[4, 8]);
    }

    #[test]
    fn empty_config_is_the_default() {
        assert_eq!(config("").unwrap(), RunConfig::default());
    }

    #[test]
    fn errors_are_aggregated() {
        let p = problems(config("no equals sign\nk = 1\n= 2\n"));
        assert_eq!(p.len(), 2, "{p:?}");
        let p = problems(config("k = three\nalpha = -1\nbogus = 1\nmodel = lda\n"));
        assert_eq!(p.len(), 4, "{p:?}");
        assert!(p.iter().any(|m| m.contains("bogus")));
        assert!(p.iter().any(|m| m.contains("alpha")));
        assert!(p.iter().any(|m| m.contains("test line 1")));
    }

    #[test]
    fn flags_override_the_file() {
        let file = Settings::parse("k = 4\nseed = 1\n", "file").unwrap();
        let mut flags = Settings::default();
        flags.insert("seed", "9", "--seed");
        let c = RunConfig::from_settings(&file.merge(flags)).unwrap();
        assert_eq!((c.k, c.seed), (4, 9));
    }

    #[test]
    fn conflicting_world_keys() {
        let p = problems(config("lattice = 3,3\nbounds = 0:1,0:1\n"));
        assert_eq!(p.len(), 1);
        let p = problems(config("bounds = 0:1\ncells = 3,3\n"));
        assert_eq!(p.len(), 1);
        let p = problems(config("bounds = 1:0\n"));
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn duplicate_keys_are_reported() {
        let p = problems(config("k = 2\nk = 3\n"));
        assert!(p[0].contains("duplicate"));
    }

    #[test]
    fn lattice_grid_and_default_grid() {
        let c = config("lattice = 11,11\n").unwrap();
        let grid = c.grid(c.world().unwrap().unwrap()).unwrap();
        assert_eq!(grid.num_cells(), 121);
        let c = config("").unwrap();
        let grid = c.grid(World::new(vec![(0.0, 10.0)]).unwrap()).unwrap();
        assert_eq!(grid.num_cells(), 500);
    }

    #[test]
    fn every_key_is_read() {
        for key in KEYS {
            let value = match key.name {
                "model" => "rost",
                "learn_kernel" | "afmi" => "true",
                "bounds" => "0:1",
                "early_stop_tol" => "none",
                "lattice" | "cells" | "length_scale" => "3",
                "data" | "truth" | "model_file" | "out_dir" | "run_id" => "x",
                _ => "2",
            };
            let mut s = Settings::default();
            s.insert(key.name, value, "flag");
            if key.name == "cells" {
                s.insert("bounds", "0:1", "flag");
            }
            let c = RunConfig::from_settings(&s).unwrap_or_else(|e| panic!("{}: {e}", key.name));
            assert_ne!(c, RunConfig::default(), "{} had no effect", key.name);
        }
    }
}

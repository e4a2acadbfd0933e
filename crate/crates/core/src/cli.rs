//! Command-line front end: `simulate`, `fit`, `evaluate` and `holdout`.
//!
//! Each command takes a [`RunConfig`] and writes its artifacts under
//! `out_dir`. Errors map to exit codes through [`GdrfError::exit_code`]:
//! 2 for configuration, 3 for ingestion, 4 for numerical failures and 1 for
//! file system problems.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgMatches, Command};

use crate::engine::{GdrfModel, TopicModel};
use crate::error::{GdrfError, Result};
use crate::eval::{holdout_experiment, label_afmi, windowed_kl};
use crate::io::config::{flag_name, ModelKind, RunConfig, Settings, KEYS};
use crate::io::dataset::{ingest_csv, word_labels, ObservationDataset};
use crate::io::model_file::{ModelDocument, StoredModel};
use crate::io::tables::{
    cell_fields, cell_header, diagnostics_table, holdout_table, kl_series_table, ml_maps_table, opt_float, Table,
};
use crate::io::truth::TruthFile;
use crate::io::fmt_float;
use crate::model::Observation;
use crate::rost::RostModel;
use crate::simulator::simulate;

/// What a command did: human-readable summary lines and the files written.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Report {
    fn write_table(&mut self, table: &Table, path: PathBuf) -> Result<()> {
        table.write(&path)?;
        self.files.push(path);
        Ok(())
    }
}

pub fn command() -> Command {
    let sub = |name: &'static str, about: &'static str| {
        let mut c = Command::new(name).about(about).arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .value_name("FILE")
                .help("flat key = value configuration file"),
        );
        for key in KEYS {
            c = c.arg(Arg::new(key.name).long(flag_name(key.name)).value_name("VALUE").help(key.help));
        }
        c
    };
    Command::new("gdrf")
        .about("Gaussian-Dirichlet random fields for categorical spatiotemporal data")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(sub("simulate", "draw a synthetic dataset and its ground truth"))
        .subcommand(sub("fit", "fit a gdrf or rost model to an observation CSV"))
        .subcommand(sub("evaluate", "compute AFMI, windowed KL and maximum-likelihood maps"))
        .subcommand(sub("holdout", "slide a held-out window across a 1-D dataset"))
}

/// Configuration from the optional `--config` file overlaid with flags.
pub fn config_from_matches(matches: &ArgMatches) -> Result<RunConfig> {
    let mut settings = match matches.get_one::<String>("config") {
        Some(path) => Settings::load(Path::new(path))?,
        None => Settings::default(),
    };
    let mut flags = Settings::default();
    for key in KEYS {
        if let Some(v) = matches.get_one::<String>(key.name) {
            flags.insert(key.name, v, &format!("--{}", flag_name(key.name)));
        }
    }
    settings = settings.merge(flags);
    RunConfig::from_settings(&settings)
}

/// Parse `args` (program name first), run the command and return the exit
/// code. Summaries go to stdout and errors to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let result = config_from_matches(sub).and_then(|config| match name {
        "simulate" => cmd_simulate(&config),
        "fit" => cmd_fit(&config),
        "evaluate" => cmd_evaluate(&config),
        "holdout" => cmd_holdout(&config),
        _ => unreachable!("unknown subcommand {name}"),
    });
    match result {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn cmd_simulate(config: &RunConfig) -> Result<Report> {
    let world = config
        .world()?
        .ok_or_else(|| GdrfError::config("simulation needs a world: set `lattice` or `bounds`"))?;
    let grid = config.grid(world.clone())?;
    let hp = config.hyperparameters(config.w);
    let truth = simulate(&grid, &hp, config.n_obs, config.seed)?;
    let vocabulary = word_labels(config.w);
    let dataset = ObservationDataset::new(world, vocabulary.clone(), truth.data())?;

    let mut report = Report::default();
    let out = &config.out_dir;
    let path = out.join("observations.csv");
    dataset.write(&path)?;
    report.files.push(path);
    let path = out.join("truth.txt");
    TruthFile::from_ground_truth(&truth, config.seed, vocabulary.clone())?.write(&path)?;
    report.files.push(path);

    let header = |last: &str| cell_header(grid.dim()).into_iter().chain([last.to_string()]);
    let mut topics = Table::new(header("topic"));
    let mut words = Table::new(header("word"));
    for cell in 0..grid.num_cells() {
        let mut row = cell_fields(&grid, cell);
        row.push(truth.ml_topic_map[cell].to_string());
        topics.push(row.clone());
        *row.last_mut().unwrap() = vocabulary[truth.ml_word_map[cell]].clone();
        words.push(row);
    }
    report.write_table(&topics, out.join("ml_topic_map.csv"))?;
    report.write_table(&words, out.join("ml_word_map.csv"))?;
    report.lines.push(format!(
        "simulated N={} K={} W={} seed={}",
        config.n_obs, hp.k, hp.w, config.seed
    ));
    Ok(report)
}

fn load_dataset(config: &RunConfig) -> Result<ObservationDataset> {
    ingest_csv(config.require_data()?, config.world()?.as_ref())
}

pub fn cmd_fit(config: &RunConfig) -> Result<Report> {
    let dataset = load_dataset(config)?;
    let grid = config.grid(dataset.world.clone())?;
    let hp = config.hyperparameters(dataset.vocabulary.len());
    let data = &dataset.observations;
    let (model, diagnostics) = match config.model {
        ModelKind::Gdrf => {
            let m = GdrfModel::fit(data, &hp, &grid, config.seed)?;
            let d = m.diagnostics.clone();
            (StoredModel::Gdrf(m), d)
        }
        ModelKind::Rost => {
            let m = RostModel::fit(data, &hp, &grid, config.rost_radius, config.seed)?;
            let d = m.diagnostics.clone();
            (StoredModel::Rost(m), d)
        }
    };
    let mut report = Report::default();
    let path = config.model_path();
    ModelDocument::new(model, dataset.vocabulary.clone())?.write(&path)?;
    report.files.push(path);
    report.write_table(&diagnostics_table(&diagnostics, hp.k), config.out_dir.join("diagnostics.csv"))?;
    let last = diagnostics.last().map(|d| d.train_log_likelihood);
    report.lines.push(format!(
        "fitted {} N={} K={} W={} iterations={} train_log_likelihood={}",
        config.model,
        data.len(),
        hp.k,
        hp.w,
        diagnostics.len(),
        last.map_or("n/a".into(), fmt_float)
    ));
    Ok(report)
}

/// Re-index model word labels against the truth vocabulary. Labels the truth
/// never saw get fresh indices past its end.
fn words_in_truth_labels(model_words: &[usize], model_vocab: &[String], truth_vocab: &[String]) -> Vec<usize> {
    model_words
        .iter()
        .map(|&w| {
            truth_vocab
                .iter()
                .position(|l| *l == model_vocab[w])
                .unwrap_or(truth_vocab.len() + w)
        })
        .collect()
}

pub fn cmd_evaluate(config: &RunConfig) -> Result<Report> {
    let doc = ModelDocument::load(&config.model_path())?;
    let model: &dyn TopicModel = doc.model.topic_model();
    let grid = model.grid().clone();
    if let Some(world) = config.world()? {
        if config.grid(world)? != grid {
            return Err(GdrfError::config("the configured grid differs from the model's grid"));
        }
    }

    let mut data: Option<Vec<Observation>> = None;
    if let Some(path) = &config.data {
        let dataset = ingest_csv(path, None)?;
        if dataset.dim() != grid.dim() || dataset.observations.iter().any(|o| !grid.world().contains(&o.location)) {
            return Err(GdrfError::config(format!(
                "{} does not fit the model's {}-dimensional grid",
                path.display(),
                grid.dim()
            )));
        }
        data = Some(dataset.remap(&doc.vocabulary)?);
    }

    let mut report = Report::default();
    let out = &config.out_dir;
    let (topics, words) = model.max_likelihood_maps(&grid)?;
    report.write_table(&ml_maps_table(&grid, &topics, &words, &doc.vocabulary), out.join("ml_maps.csv"))?;

    if config.afmi {
        let path = config
            .truth
            .as_deref()
            .ok_or_else(|| GdrfError::config("AFMI requested but no truth file given (key `truth`)"))?;
        if !path.exists() {
            return Err(GdrfError::config(format!(
                "AFMI requested but the truth file {} does not exist",
                path.display()
            )));
        }
        let truth = TruthFile::load(path)?;
        if truth.grid != grid {
            return Err(GdrfError::config("the truth file's grid differs from the model's grid"));
        }
        let word_labels = words_in_truth_labels(&words, &doc.vocabulary, &truth.vocabulary);
        // A single-class truth map leaves AFMI undefined; the field stays empty.
        let topic_afmi = label_afmi(&topics, &truth.ml_topic_map).ok();
        let word_afmi = label_afmi(&word_labels, &truth.ml_word_map).ok();
        let mut t = Table::new(["run_id", "seed", "model_kind", "topic_afmi", "word_afmi"]);
        t.push(vec![
            config.run_id.clone(),
            config.seed.to_string(),
            doc.model.kind().tag().into(),
            opt_float(topic_afmi),
            opt_float(word_afmi),
        ]);
        report.write_table(&t, out.join("afmi.csv"))?;
        report.lines.push(format!(
            "topic_afmi={} word_afmi={}",
            topic_afmi.map_or("undefined".into(), fmt_float),
            word_afmi.map_or("undefined".into(), fmt_float)
        ));
    }

    if let Some(data) = &data {
        if grid.dim() == 1 {
            let bins = config.kl_bins.unwrap_or(grid.num_cells());
            let series = windowed_kl(model, data, bins)?;
            report.write_table(&kl_series_table(&series), out.join("kl_series.csv"))?;
            report.lines.push(format!(
                "mean_kl={} bins={} empty_bins={}",
                series.mean().map_or("n/a".into(), fmt_float),
                bins,
                series.skipped()
            ));
        } else {
            report.lines.push("windowed KL skipped: the world is not one-dimensional".into());
        }
    }
    report.lines.push(format!("evaluated {} model on {} cells", doc.model.kind(), grid.num_cells()));
    Ok(report)
}

pub fn cmd_holdout(config: &RunConfig) -> Result<Report> {
    if config.model != ModelKind::Gdrf {
        return Err(GdrfError::config("hold-out runs are defined for the gdrf model only"));
    }
    let dataset = load_dataset(config)?;
    let grid = config.grid(dataset.world.clone())?;
    let hp = config.hyperparameters(dataset.vocabulary.len());
    let result = holdout_experiment(
        &dataset.observations,
        &hp,
        &grid,
        config.window_width,
        config.window_stride,
        config.seed,
    )?;

    let mut report = Report::default();
    let out = &config.out_dir;
    report.write_table(&holdout_table(&result), out.join("holdout.csv"))?;
    let evaluated = result.ratios().len();
    let mut summary = Table::new(["windows", "evaluated", "skipped", "mean_ratio", "max_ratio"]);
    summary.push(vec![
        result.windows.len().to_string(),
        evaluated.to_string(),
        (result.windows.len() - evaluated).to_string(),
        opt_float(result.mean()),
        opt_float(result.max()),
    ]);
    report.write_table(&summary, out.join("holdout_summary.csv"))?;
    report.lines.push(format!(
        "windows={} evaluated={} mean_ratio={} max_ratio={}",
        result.windows.len(),
        evaluated,
        opt_float(result.mean()),
        opt_float(result.max())
    ));
    Ok(report)
}

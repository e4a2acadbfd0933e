mod common;

use std::fs;
use std::path::{Path, PathBuf};

use common::{gdrf, path_str, write};
use gdrf::io::dataset::{parse_csv, word_labels, ObservationDataset};
use gdrf::model::{Observation, World};
use proptest::prelude::*;
use tempfile::tempdir;

const GOLDEN_FILES: [&str; 7] = [
    "observations.csv",
    "truth.txt",
    "model.json",
    "diagnostics.csv",
    "ml_maps.csv",
    "afmi.csv",
    "kl_series.csv",
];

/// Simulate, fit and evaluate a small 1-D run in `dir`.
fn pipeline(dir: &Path, threads: usize) -> PathBuf {
    let out = dir.join("out");
    let conf = write(
        dir,
        "golden.conf",
        &format!(
            "lattice = 12\nk = 2\nw = 5\nn_obs = 300\nseed = 11\nlength_scale = 3\nn_outer = 3\n\
             n_gibbs_inner = 4\nthreads = {threads}\nafmi = true\nwindow_width = 4\nout_dir = {}\n\
             data = {}\ntruth = {}\n",
            path_str(&out),
            path_str(&out.join("observations.csv")),
            path_str(&out.join("truth.txt")),
        ),
    );
    let conf = path_str(&conf);
    for cmd in ["simulate", "fit", "evaluate"] {
        assert_eq!(gdrf(&[cmd, "-c", &conf]), 0, "{cmd}");
    }
    out
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let (out_a, out_b) = (pipeline(a.path(), 1), pipeline(b.path(), 1));
    for name in GOLDEN_FILES {
        let x = fs::read(out_a.join(name)).unwrap();
        let y = fs::read(out_b.join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let (out_a, out_b) = (pipeline(a.path(), 1), pipeline(b.path(), 3));
    // The model file records its own schedule, thread count included.
    let without_threads = |p: PathBuf| {
        let text = fs::read_to_string(p).unwrap();
        text.lines().filter(|l| !l.contains("\"threads\"")).collect::<Vec<_>>().join("\n")
    };
    for name in GOLDEN_FILES {
        assert_eq!(without_threads(out_a.join(name)), without_threads(out_b.join(name)), "{name}");
    }
}

/// Outputs match the checked-in golden copies. Set `GDRF_BLESS=1` to
/// rewrite them after an intentional change.
#[test]
fn outputs_match_golden_files() {
    let dir = tempdir().unwrap();
    let out = pipeline(dir.path(), 1);
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let bless = std::env::var_os("GDRF_BLESS").is_some();
    for name in GOLDEN_FILES {
        let actual = fs::read_to_string(out.join(name)).unwrap();
        assert!(!actual.contains(&path_str(dir.path())), "{name} embeds a temporary path");
        let expected_path = golden.join(name);
        if bless {
            fs::create_dir_all(&golden).unwrap();
            fs::write(&expected_path, &actual).unwrap();
            continue;
        }
        let expected = fs::read_to_string(&expected_path)
            .unwrap_or_else(|_| panic!("missing {}; run with GDRF_BLESS=1", expected_path.display()));
        assert!(actual == expected, "{name} differs from its golden copy");
    }
}

#[test]
fn reference_dataset_round_trips() {
    let world = World::new(vec![(0.0, 4.0), (-1.0, 1.0)]).unwrap();
    let observations = vec![
        Observation::new(vec![0.0, -1.0], 0),
        Observation::new(vec![4.0, 1.0], 2),
        Observation::new(vec![1.0 / 3.0, 0.1], 1),
        Observation::new(vec![2.5e-300, -0.0], 1),
    ];
    let ds = ObservationDataset::new(world.clone(), vec!["\"kelp\"".into(), "rock".into(), "sand, wet".into()], observations).unwrap();
    let back = parse_csv(&ds.to_csv(), Some(&world)).unwrap();
    assert_eq!(back, ds);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_datasets_round_trip(
        points in prop::collection::vec((prop::collection::vec(-1e6f64..1e6, 3), 0usize..7), 1..40),
    ) {
        let world = World::new(vec![(-1e6, 1e6); 3]).unwrap();
        let observations: Vec<Observation> = points.into_iter().map(|(x, w)| Observation::new(x, w)).collect();
        let ds = ObservationDataset::new(world.clone(), word_labels(7), observations).unwrap();
        // Only labels that occur survive ingestion, so compare in the full vocabulary.
        let back = parse_csv(&ds.to_csv(), Some(&world)).unwrap().remap(&ds.vocabulary).unwrap();
        prop_assert_eq!(back, ds.observations);
    }
}

//! Write and read back every file format: observation CSV, truth companion
//! and model JSON.
//!
//!     cargo run --release --example file_formats

use gdrf::density::DiscretizationGrid;
use gdrf::engine::GdrfModel;
use gdrf::io::dataset::{ingest_csv, word_labels, ObservationDataset};
use gdrf::io::model_file::{ModelDocument, StoredModel};
use gdrf::io::truth::TruthFile;
use gdrf::kernel::KernelParams;
use gdrf::model::{Hyperparameters, World};
use gdrf::simulator::simulate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("gdrf-file-formats");
    let world = World::lattice(&[6, 6])?;
    let grid = DiscretizationGrid::default_for(world.clone())?;
    let mut hp = Hyperparameters::new(2, 8, KernelParams::new(2.0, 5.0));
    hp.schedule.n_outer = 3;
    let truth = simulate(&grid, &hp, 400, 2)?;
    let labels = word_labels(hp.w);

    let csv = dir.join("observations.csv");
    ObservationDataset::new(world.clone(), labels.clone(), truth.data())?.write(&csv)?;
    let back = ingest_csv(&csv, Some(&world))?;
    println!("{}: {} observations, vocabulary {:?}", csv.display(), back.observations.len(), back.vocabulary);

    let truth_path = dir.join("truth.txt");
    TruthFile::from_ground_truth(&truth, 2, labels)?.write(&truth_path)?;
    println!("{}: {} cells", truth_path.display(), TruthFile::load(&truth_path)?.ml_topic_map.len());

    let model = GdrfModel::fit(&back.observations, &hp, &grid, 2)?;
    let model_path = dir.join("model.json");
    ModelDocument::new(StoredModel::Gdrf(model), back.vocabulary.clone())?.write(&model_path)?;
    let loaded = ModelDocument::load(&model_path)?;
    println!("{}: {} model with {} topics", model_path.display(), loaded.model.kind(), loaded.model.k());
    Ok(())
}

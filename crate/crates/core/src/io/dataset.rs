//! Observation CSVs: a header `x1,...,xD,label` followed by one observation
//! per row.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{GdrfError, Result};
use crate::io::tables::Table;
use crate::io::{fmt_float, read_text, write_text};
use crate::model::{Observation, World};

/// Observations together with the world they live in and the label of every
/// word index. Vocabulary order is lexicographic, so ingesting the same
/// labels always yields the same indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationDataset {
    pub world: World,
    pub vocabulary: Vec<String>,
    pub observations: Vec<Observation>,
}

/// Labels `w0, w1, ...` zero-padded so that lexicographic order is index
/// order.
pub fn word_labels(w: usize) -> Vec<String> {
    let width = w.saturating_sub(1).to_string().len();
    (0..w).map(|i| format!("w{i:0width$}")).collect()
}

impl ObservationDataset {
    pub fn new(world: World, vocabulary: Vec<String>, observations: Vec<Observation>) -> Result<Self> {
        let mut problems = Vec::new();
        if vocabulary.windows(2).any(|p| p[0] >= p[1]) {
            problems.push("vocabulary must be strictly increasing".to_string());
        }
        for (i, o) in observations.iter().enumerate() {
            if o.word >= vocabulary.len() {
                problems.push(format!("observation {i}: word {} outside vocabulary", o.word));
            }
            if o.location.len() != world.dim() || !world.contains(&o.location) {
                problems.push(format!("observation {i}: location {:?} outside the world", o.location));
            }
        }
        if !problems.is_empty() {
            return Err(GdrfError::Ingestion(problems));
        }
        Ok(ObservationDataset {
            world,
            vocabulary,
            observations,
        })
    }

    pub fn dim(&self) -> usize {
        self.world.dim()
    }

    /// Observations re-indexed against another vocabulary, e.g. the one a
    /// model was trained with. Labels missing from it are an error.
    pub fn remap(&self, vocabulary: &[String]) -> Result<Vec<Observation>> {
        let index: HashMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mapping: Vec<Option<usize>> = self.vocabulary.iter().map(|l| index.get(l.as_str()).copied()).collect();
        let unknown: Vec<String> = self
            .vocabulary
            .iter()
            .zip(&mapping)
            .filter(|(_, m)| m.is_none())
            .map(|(l, _)| format!("label {l:?} is not in the model vocabulary"))
            .collect();
        if !unknown.is_empty() {
            return Err(GdrfError::Ingestion(unknown));
        }
        Ok(self
            .observations
            .iter()
            .map(|o| Observation::new(o.location.clone(), mapping[o.word].unwrap()))
            .collect())
    }

    pub fn to_csv(&self) -> String {
        let mut t = Table::new((1..=self.dim()).map(|d| format!("x{d}")).chain(["label".into()]));
        for o in &self.observations {
            let mut row: Vec<String> = o.location.iter().map(|&x| fmt_float(x)).collect();
            row.push(self.vocabulary[o.word].clone());
            t.push(row);
        }
        t.to_csv()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }
}

/// Read an observation CSV. The world is `world` when given (every location
/// must then lie inside it), otherwise the bounding box of the data.
pub fn ingest_csv(path: &Path, world: Option<&World>) -> Result<ObservationDataset> {
    let text = read_text(path)?;
    parse_csv(&text, world).map_err(|e| match e {
        GdrfError::Ingestion(lines) => {
            GdrfError::Ingestion(lines.into_iter().map(|l| format!("{}: {l}", path.display())).collect())
        }
        other => other,
    })
}

pub fn parse_csv(text: &str, world: Option<&World>) -> Result<ObservationDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        None => return Err(GdrfError::Ingestion(vec!["empty file".into()])),
        Some(Err(e)) => return Err(GdrfError::Ingestion(vec![format!("line 1: {e}")])),
        Some(Ok(h)) => h,
    };
    let dim = header_dim(&header)?;

    let mut problems = Vec::new();
    let mut rows: Vec<(Vec<f64>, String)> = Vec::new();
    for record in records {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("{e}"));
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != dim + 1 {
            problems.push(format!("line {line}: expected {} fields, found {}", dim + 1, record.len()));
            continue;
        }
        let coords: std::result::Result<Vec<f64>, String> = (0..dim)
            .map(|d| {
                let field = &record[d];
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| format!("line {line}: x{} = {field:?} is not a finite number", d + 1))
            })
            .collect();
        let label = &record[dim];
        match coords {
            Err(msg) => problems.push(msg),
            Ok(_) if label.is_empty() => problems.push(format!("line {line}: empty label")),
            Ok(coords) => {
                if let Some(w) = world {
                    if !w.contains(&coords) {
                        problems.push(format!("line {line}: location {coords:?} outside the configured world"));
                        continue;
                    }
                }
                rows.push((coords, label.to_string()));
            }
        }
    }
    if !problems.is_empty() {
        return Err(GdrfError::Ingestion(problems));
    }
    if rows.is_empty() {
        return Err(GdrfError::Ingestion(vec!["no observations after the header".into()]));
    }

    let vocabulary: Vec<String> = rows.iter().map(|(_, l)| l.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let index: HashMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let observations: Vec<Observation> = rows
        .iter()
        .map(|(x, l)| Observation::new(x.clone(), index[l.as_str()]))
        .collect();
    let world = match world {
        Some(w) => w.clone(),
        None => bounding_world(&observations, dim)?,
    };
    ObservationDataset::new(world, vocabulary, observations)
}

fn header_dim(header: &csv::StringRecord) -> Result<usize> {
    let n = header.len();
    let valid = n >= 2
        && &header[n - 1] == "label"
        && (0..n - 1).all(|d| header[d] == format!("x{}", d + 1));
    if valid {
        Ok(n - 1)
    } else {
        let found: Vec<&str> = header.iter().collect();
        Err(GdrfError::Ingestion(vec![format!(
            "line 1: expected a header x1,...,xD,label, found {}",
            found.join(",")
        )]))
    }
}

/// Bounding box of the data. A dimension where every observation shares one
/// coordinate is widened by half a unit on either side.
fn bounding_world(observations: &[Observation], dim: usize) -> Result<World> {
    let bounds = (0..dim)
        .map(|d| {
            let (lo, hi) = observations.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| {
                (lo.min(o.location[d]), hi.max(o.location[d]))
            });
            if lo < hi {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        })
        .collect();
    World::new(bounds)
}

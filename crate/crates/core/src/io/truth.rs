//! Ground-truth companion files.
//!
//! A truth file holds several CSV blocks, each introduced by a marker line
//! `# section: <name>`:
//!
//! ```text
//! # section: meta          key,value... rows: seed, n_obs, cells, lower, upper, vocabulary
//! # section: mu            cell,x1..xD,mu_0..mu_{K-1}
//! # section: phi           topic,<one column per word label>
//! # section: ml_topic_map  cell,x1..xD,topic
//! # section: ml_word_map   cell,x1..xD,word
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::density::DiscretizationGrid;
use crate::error::{GdrfError, Result};
use crate::io::tables::{cell_fields, cell_header, csv_writer};
use crate::io::{fmt_float, read_text, write_text};
use crate::model::World;
use crate::simulator::GroundTruth;

const MARKER: &str = "# section:";
const SECTIONS: [&str; 5] = ["meta", "mu", "phi", "ml_topic_map", "ml_word_map"];

#[derive(Debug, Clone, PartialEq)]
pub struct TruthFile {
    pub seed: u64,
    pub n_obs: usize,
    pub grid: DiscretizationGrid,
    pub vocabulary: Vec<String>,
    /// Field values, one row of `k` per cell.
    pub mu: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub ml_topic_map: Vec<usize>,
    /// Indices into `vocabulary`.
    pub ml_word_map: Vec<usize>,
}

impl TruthFile {
    pub fn from_ground_truth(truth: &GroundTruth, seed: u64, vocabulary: Vec<String>) -> Result<Self> {
        if vocabulary.len() != truth.w() {
            return Err(GdrfError::contract("vocabulary does not match the simulated word count"));
        }
        Ok(TruthFile {
            seed,
            n_obs: truth.observations.len(),
            grid: truth.grid.clone(),
            vocabulary,
            mu: truth.mu.clone(),
            phi: truth.phi.clone(),
            ml_topic_map: truth.ml_topic_map.clone(),
            ml_word_map: truth.ml_word_map.clone(),
        })
    }

    pub fn k(&self) -> usize {
        self.phi.len()
    }

    pub fn to_text(&self) -> String {
        let grid = &self.grid;
        let dim = grid.dim();
        let mut out = String::new();
        let mut block = |name: &str, rows: Vec<Vec<String>>| {
            let mut w = csv_writer();
            for row in rows {
                w.write_record(&row).expect("in-memory write");
            }
            out.push_str(&format!("{MARKER} {name}\n"));
            out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8"));
        };

        let bound = |f: fn(&(f64, f64)) -> f64| grid.world().bounds().iter().map(f).map(fmt_float);
        block(
            "meta",
            vec![
                vec!["seed".into(), self.seed.to_string()],
                vec!["n_obs".into(), self.n_obs.to_string()],
                std::iter::once("cells".into()).chain(grid.cells_per_dim().iter().map(|c| c.to_string())).collect(),
                std::iter::once("lower".into()).chain(bound(|b| b.0)).collect(),
                std::iter::once("upper".into()).chain(bound(|b| b.1)).collect(),
                std::iter::once("vocabulary".into()).chain(self.vocabulary.iter().cloned()).collect(),
            ],
        );

        let per_cell = |last: Vec<String>, value: &dyn Fn(usize) -> Vec<String>| {
            let mut rows = vec![cell_header(dim).into_iter().chain(last).collect::<Vec<_>>()];
            rows.extend((0..grid.num_cells()).map(|c| {
                let mut r = cell_fields(grid, c);
                r.extend(value(c));
                r
            }));
            rows
        };
        block(
            "mu",
            per_cell((0..self.k()).map(|j| format!("mu_{j}")).collect(), &|c| {
                self.mu[c].iter().map(|&x| fmt_float(x)).collect()
            }),
        );
        let mut phi_rows = vec![std::iter::once("topic".to_string()).chain(self.vocabulary.iter().cloned()).collect()];
        phi_rows.extend(self.phi.iter().enumerate().map(|(j, row)| {
            std::iter::once(j.to_string()).chain(row.iter().map(|&x| fmt_float(x))).collect()
        }));
        block("phi", phi_rows);
        block(
            "ml_topic_map",
            per_cell(vec!["topic".into()], &|c| vec![self.ml_topic_map[c].to_string()]),
        );
        block(
            "ml_word_map",
            per_cell(vec!["word".into()], &|c| vec![self.vocabulary[self.ml_word_map[c]].clone()]),
        );
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        TruthFile::parse(&read_text(path)?, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let fail = |message: String| GdrfError::Format {
            path: path.to_path_buf(),
            message,
        };
        let sections = split_sections(text).map_err(&fail)?;
        let rows = |name: &str| -> Result<Vec<csv::StringRecord>> {
            let body = sections.get(name).ok_or_else(|| fail(format!("missing section {name:?}")))?;
            csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .from_reader(body.as_bytes())
                .records()
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| fail(format!("section {name}: {e}")))
        };
        let num = |section: &str, field: &str| -> Result<f64> {
            field.parse().map_err(|_| fail(format!("section {section}: cannot parse {field:?}")))
        };
        let int = |section: &str, field: &str| -> Result<usize> {
            field.parse().map_err(|_| fail(format!("section {section}: cannot parse {field:?}")))
        };

        let meta: BTreeMap<String, Vec<String>> = rows("meta")?
            .iter()
            .filter_map(|r| {
                let mut it = r.iter().map(String::from);
                it.next().map(|k| (k, it.collect()))
            })
            .collect();
        let meta_field = |key: &str| meta.get(key).ok_or_else(|| fail(format!("meta is missing {key:?}")));
        let single = |key: &str| -> Result<String> {
            meta_field(key)?.first().cloned().ok_or_else(|| fail(format!("meta {key:?} has no value")))
        };
        let seed: u64 = single("seed")?.parse().map_err(|_| fail("meta seed is not an integer".into()))?;
        let n_obs = int("meta", &single("n_obs")?)?;
        let cells = meta_field("cells")?.iter().map(|c| int("meta", c)).collect::<Result<Vec<_>>>()?;
        let lower = meta_field("lower")?.iter().map(|c| num("meta", c)).collect::<Result<Vec<_>>>()?;
        let upper = meta_field("upper")?.iter().map(|c| num("meta", c)).collect::<Result<Vec<_>>>()?;
        if lower.len() != upper.len() || lower.len() != cells.len() {
            return Err(fail("meta bounds and cells disagree in dimension".into()));
        }
        let world = World::new(lower.into_iter().zip(upper).collect()).map_err(|e| fail(e.to_string()))?;
        let grid = DiscretizationGrid::new(world, cells).map_err(|e| fail(e.to_string()))?;
        let vocabulary = meta_field("vocabulary")?.clone();
        let dim = grid.dim();
        let n_cells = grid.num_cells();

        // Per-cell sections: a header, then one row per cell in order.
        let cell_rows = |name: &str, width: usize| -> Result<Vec<Vec<String>>> {
            let all = rows(name)?;
            if all.len() != n_cells + 1 {
                return Err(fail(format!("section {name}: expected {n_cells} cell rows, found {}", all.len().saturating_sub(1))));
            }
            all[1..]
                .iter()
                .enumerate()
                .map(|(c, r)| {
                    if r.len() != 1 + dim + width || r[0] != c.to_string() {
                        return Err(fail(format!("section {name}: malformed row for cell {c}")));
                    }
                    Ok(r.iter().skip(1 + dim).map(String::from).collect())
                })
                .collect()
        };

        let phi_all = rows("phi")?;
        let k = phi_all.len().saturating_sub(1);
        if k == 0 || phi_all[0].len() != vocabulary.len() + 1 {
            return Err(fail("section phi: header does not match the vocabulary".into()));
        }
        let phi = phi_all[1..]
            .iter()
            .map(|r| {
                if r.len() != vocabulary.len() + 1 {
                    return Err(fail("section phi: ragged row".into()));
                }
                r.iter().skip(1).map(|x| num("phi", x)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mu = cell_rows("mu", k)?
            .iter()
            .map(|r| r.iter().map(|x| num("mu", x)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let ml_topic_map = cell_rows("ml_topic_map", 1)?
            .iter()
            .map(|r| int("ml_topic_map", &r[0]))
            .collect::<Result<Vec<_>>>()?;
        let ml_word_map = cell_rows("ml_word_map", 1)?
            .iter()
            .map(|r| {
                vocabulary
                    .iter()
                    .position(|l| *l == r[0])
                    .ok_or_else(|| fail(format!("section ml_word_map: unknown word {:?}", r[0])))
            })
            .collect::<Result<Vec<_>>>()?;
        if ml_topic_map.iter().any(|&z| z >= k) {
            return Err(fail("section ml_topic_map: topic out of range".into()));
        }
        Ok(TruthFile {
            seed,
            n_obs,
            grid,
            vocabulary,
            mu,
            phi,
            ml_topic_map,
            ml_word_map,
        })
    }
}

fn split_sections(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut sections: BTreeMap<String, String> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        if let Some(name) = line.strip_prefix(MARKER) {
            let name = name.trim().to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(format!("line {}: unknown section {name:?}", i + 1));
            }
            if sections.contains_key(&name) {
                return Err(format!("line {}: repeated section {name:?}", i + 1));
            }
            sections.insert(name.clone(), String::new());
            current = Some(name);
        } else if let Some(name) = &current {
            let body = sections.get_mut(name).expect("section inserted above");
            body.push_str(line);
            body.push('\n');
        } else if !line.trim().is_empty() {
            return Err(format!("line {}: content before the first section marker", i + 1));
        }
    }
    Ok(sections)
}

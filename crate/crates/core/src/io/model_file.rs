//! Versioned JSON model documents.
//!
//! Both model kinds share one layout, told apart by `model_kind`. Field
//! names are fixed by `schema/model.schema.json`. Covariance factors are
//! stored as their lower triangle, row by row.

use std::path::Path;

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::ser::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::density::DiscretizationGrid;
use crate::engine::{GdrfModel, TopicModel};
use crate::error::{GdrfError, Result};
use crate::io::config::ModelKind;
use crate::io::{fmt_float, read_text, write_text};
use crate::kernel::KernelParams;
use crate::model::{CountMatrices, Hyperparameters, TrainingSchedule, World};
use crate::rost::RostModel;
use crate::svgp::GpState;

pub const FORMAT_VERSION: u32 = 1;

/// A float written with 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Fl(f64);

impl Serialize for Fl {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(S::Error::custom(format!("cannot store non-finite value {}", self.0)));
        }
        RawValue::from_string(fmt_float(self.0)).map_err(S::Error::custom)?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Fl {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let x = f64::deserialize(d)?;
        if x.is_finite() {
            Ok(Fl(x))
        } else {
            Err(D::Error::custom("non-finite number"))
        }
    }
}

fn fl(xs: &[f64]) -> Vec<Fl> {
    xs.iter().copied().map(Fl).collect()
}

fn unfl(xs: &[Fl]) -> Vec<f64> {
    xs.iter().map(|x| x.0).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format_version: u32,
    model_kind: String,
    vocabulary: Vec<String>,
    hyperparameters: HyperparametersDoc,
    world: WorldDoc,
    grid: GridDoc,
    counts: CountsDoc,
    phi: Vec<Vec<Fl>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gps: Option<Vec<GpDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rost: Option<RostDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HyperparametersDoc {
    k: usize,
    w: usize,
    alpha: Fl,
    beta: Fl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<KernelDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schedule: Option<ScheduleDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelDoc {
    length_scales: Vec<Fl>,
    scale: Fl,
    noise_variance: Fl,
    jitter: Fl,
}

impl From<&KernelParams> for KernelDoc {
    fn from(k: &KernelParams) -> Self {
        KernelDoc {
            length_scales: fl(&k.length_scales),
            scale: Fl(k.scale),
            noise_variance: Fl(k.noise_variance),
            jitter: Fl(k.jitter),
        }
    }
}

impl From<&KernelDoc> for KernelParams {
    fn from(k: &KernelDoc) -> Self {
        KernelParams {
            length_scales: unfl(&k.length_scales),
            scale: k.scale.0,
            noise_variance: k.noise_variance.0,
            jitter: k.jitter.0,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleDoc {
    n_gibbs_inner: usize,
    n_svi_inner: usize,
    learning_rate: Fl,
    n_outer: usize,
    early_stop_tol: Option<Fl>,
    inducing_cap: usize,
    learn_kernel: bool,
    threads: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldDoc {
    bounds: Vec<[Fl; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDoc {
    cells_per_dim: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountsDoc {
    word_topic: Vec<Vec<u32>>,
    topic_total: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GpDoc {
    kernel: KernelDoc,
    const_mean: Fl,
    inducing: Vec<Vec<Fl>>,
    variational_mean: Vec<Fl>,
    variational_cov_factor: Vec<Fl>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RostDoc {
    radius: usize,
    cell_topic: Vec<Vec<u32>>,
}

/// A fitted model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Gdrf(GdrfModel),
    Rost(RostModel),
}

impl StoredModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            StoredModel::Gdrf(_) => ModelKind::Gdrf,
            StoredModel::Rost(_) => ModelKind::Rost,
        }
    }

    pub fn topic_model(&self) -> &dyn TopicModel {
        match self {
            StoredModel::Gdrf(m) => m,
            StoredModel::Rost(m) => m,
        }
    }

    pub fn grid(&self) -> &DiscretizationGrid {
        self.topic_model().grid()
    }

    pub fn k(&self) -> usize {
        self.topic_model().phi().len()
    }
}

/// A model together with the labels of its word indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDocument {
    pub model: StoredModel,
    pub vocabulary: Vec<String>,
}

fn lower_triangle(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows()).flat_map(|i| (0..=i).map(move |j| m[(i, j)])).collect()
}

fn from_lower_triangle(values: &[f64]) -> Option<DMatrix<f64>> {
    // n (n + 1) / 2 = len
    let n = ((((8 * values.len() + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    if n * (n + 1) / 2 != values.len() {
        return None;
    }
    let mut m = DMatrix::zeros(n, n);
    let mut it = values.iter();
    for i in 0..n {
        for j in 0..=i {
            m[(i, j)] = *it.next()?;
        }
    }
    Some(m)
}

impl ModelDocument {
    pub fn new(model: StoredModel, vocabulary: Vec<String>) -> Result<Self> {
        let w = model.topic_model().phi().first().map_or(0, Vec::len);
        if vocabulary.len() != w {
            return Err(GdrfError::contract(format!(
                "{} labels for a model with {w} words",
                vocabulary.len()
            )));
        }
        Ok(ModelDocument { model, vocabulary })
    }

    pub fn to_json(&self) -> Result<String> {
        let (grid, counts, phi) = match &self.model {
            StoredModel::Gdrf(m) => (&m.grid, &m.counts, &m.phi),
            StoredModel::Rost(m) => (&m.grid, &m.counts, &m.phi),
        };
        let (alpha, beta) = match &self.model {
            StoredModel::Gdrf(m) => (m.hp.alpha, m.hp.beta),
            StoredModel::Rost(m) => (m.alpha, m.beta),
        };
        let k = counts.k();
        let mut doc = Document {
            format_version: FORMAT_VERSION,
            model_kind: self.model.kind().tag().to_string(),
            vocabulary: self.vocabulary.clone(),
            hyperparameters: HyperparametersDoc {
                k,
                w: counts.w(),
                alpha: Fl(alpha),
                beta: Fl(beta),
                kernel: None,
                schedule: None,
            },
            world: WorldDoc {
                bounds: grid.world().bounds().iter().map(|&(lo, hi)| [Fl(lo), Fl(hi)]).collect(),
            },
            grid: GridDoc {
                cells_per_dim: grid.cells_per_dim().to_vec(),
            },
            counts: CountsDoc {
                word_topic: counts.word_topic_rows(),
                topic_total: counts.topic_totals().to_vec(),
            },
            phi: phi.iter().map(|r| fl(r)).collect(),
            gps: None,
            rost: None,
        };
        match &self.model {
            StoredModel::Gdrf(m) => {
                let s = &m.hp.schedule;
                doc.hyperparameters.kernel = Some(KernelDoc::from(&m.hp.kernel));
                doc.hyperparameters.schedule = Some(ScheduleDoc {
                    n_gibbs_inner: s.n_gibbs_inner,
                    n_svi_inner: s.n_svi_inner,
                    learning_rate: Fl(s.learning_rate),
                    n_outer: s.n_outer,
                    early_stop_tol: s.early_stop_tol.map(Fl),
                    inducing_cap: s.inducing_cap,
                    learn_kernel: s.learn_kernel,
                    threads: s.threads,
                });
                doc.gps = Some(
                    m.gps
                        .iter()
                        .map(|gp| GpDoc {
                            kernel: KernelDoc::from(&gp.kernel),
                            const_mean: Fl(gp.const_mean),
                            inducing: gp.inducing.iter().map(|z| fl(z)).collect(),
                            variational_mean: fl(gp.variational_mean.as_slice()),
                            variational_cov_factor: fl(&lower_triangle(&gp.variational_cov_factor)),
                        })
                        .collect(),
                );
            }
            StoredModel::Rost(m) => {
                doc.rost = Some(RostDoc {
                    radius: m.radius,
                    cell_topic: m.cell_topic.chunks(k.max(1)).map(<[u32]>::to_vec).collect(),
                });
            }
        }
        let mut text = serde_json::to_string_pretty(&doc)
            .map_err(|e| GdrfError::numerical(format!("cannot serialise model: {e}")))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let fail = |message: String| GdrfError::Format {
            path: path.to_path_buf(),
            message,
        };
        let version: serde_json::Value = serde_json::from_str(text).map_err(|e| fail(e.to_string()))?;
        match version.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => return Err(fail(format!("unsupported format version {v}"))),
            None => return Err(fail("missing format_version".into())),
        }
        let doc: Document = serde_json::from_str(text).map_err(|e| fail(e.to_string()))?;
        let bad = |e: GdrfError| fail(e.to_string());

        let world = World::new(doc.world.bounds.iter().map(|b| (b[0].0, b[1].0)).collect()).map_err(bad)?;
        let grid = DiscretizationGrid::new(world, doc.grid.cells_per_dim.clone()).map_err(bad)?;
        let counts = CountMatrices::from_parts(doc.counts.word_topic, doc.counts.topic_total, Vec::new()).map_err(bad)?;
        let hp_doc = &doc.hyperparameters;
        if counts.k() != hp_doc.k || counts.w() != hp_doc.w || doc.vocabulary.len() != hp_doc.w {
            return Err(fail("counts, vocabulary and hyperparameters disagree in shape".into()));
        }
        let phi: Vec<Vec<f64>> = doc.phi.iter().map(|r| unfl(r)).collect();
        if phi.len() != hp_doc.k || phi.iter().any(|r| r.len() != hp_doc.w) {
            return Err(fail("phi does not have k rows of w entries".into()));
        }

        let kind: ModelKind = doc.model_kind.parse().map_err(fail)?;
        let model = match kind {
            ModelKind::Gdrf => {
                let (Some(kernel), Some(s), Some(gps)) = (&hp_doc.kernel, &hp_doc.schedule, &doc.gps) else {
                    return Err(fail("a gdrf model needs kernel, schedule and gps".into()));
                };
                if doc.rost.is_some() {
                    return Err(fail("a gdrf model cannot carry a rost section".into()));
                }
                let hp = Hyperparameters {
                    k: hp_doc.k,
                    w: hp_doc.w,
                    alpha: hp_doc.alpha.0,
                    beta: hp_doc.beta.0,
                    kernel: kernel.into(),
                    schedule: TrainingSchedule {
                        n_gibbs_inner: s.n_gibbs_inner,
                        n_svi_inner: s.n_svi_inner,
                        learning_rate: s.learning_rate.0,
                        n_outer: s.n_outer,
                        early_stop_tol: s.early_stop_tol.map(|x| x.0),
                        inducing_cap: s.inducing_cap,
                        learn_kernel: s.learn_kernel,
                        threads: s.threads,
                    },
                };
                hp.validate().map_err(bad)?;
                if gps.len() != hp.k {
                    return Err(fail(format!("expected {} gps, found {}", hp.k, gps.len())));
                }
                let gps = gps
                    .iter()
                    .map(|g| {
                        let factor = from_lower_triangle(&unfl(&g.variational_cov_factor))
                            .ok_or_else(|| fail("covariance factor is not a triangle".into()))?;
                        if g.inducing.iter().any(|z| z.len() != grid.dim()) {
                            return Err(fail("inducing point of the wrong dimension".into()));
                        }
                        GpState::from_parts(
                            (&g.kernel).into(),
                            g.const_mean.0,
                            g.inducing.iter().map(|z| unfl(z)).collect(),
                            unfl(&g.variational_mean),
                            factor,
                        )
                        .map_err(bad)
                    })
                    .collect::<Result<Vec<_>>>()?;
                StoredModel::Gdrf(GdrfModel {
                    hp,
                    grid,
                    counts,
                    gps,
                    phi,
                    diagnostics: Vec::new(),
                })
            }
            ModelKind::Rost => {
                let Some(r) = &doc.rost else {
                    return Err(fail("a rost model needs a rost section".into()));
                };
                if doc.gps.is_some() {
                    return Err(fail("a rost model cannot carry gps".into()));
                }
                if r.cell_topic.iter().any(|row| row.len() != hp_doc.k) {
                    return Err(fail("cell_topic rows must have k entries".into()));
                }
                let cell_topic = r.cell_topic.concat();
                let mut m = RostModel::from_parts(grid, counts, cell_topic, r.radius, hp_doc.alpha.0, hp_doc.beta.0)
                    .map_err(bad)?;
                m.phi = phi;
                StoredModel::Rost(m)
            }
        };
        ModelDocument::new(model, doc.vocabulary).map_err(bad)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ModelDocument::from_json(&read_text(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::dataset::word_labels;
    use crate::simulator::simulate;

    fn fixture() -> (Vec<crate::model::Observation>, Hyperparameters, DiscretizationGrid) {
        let grid = DiscretizationGrid::new(World::lattice(&[4, 4]).unwrap(), vec![4, 4]).unwrap();
        let mut hp = Hyperparameters::new(2, 6, KernelParams::new(2.0, 3.0));
        hp.schedule.n_outer = 2;
        hp.schedule.n_gibbs_inner = 2;
        let data = simulate(&grid, &hp, 120, 5).unwrap().data();
        (data, hp, grid)
    }

    fn round_trip(doc: &ModelDocument) -> ModelDocument {
        ModelDocument::from_json(&doc.to_json().unwrap(), Path::new("m.json")).unwrap()
    }

    #[test]
    fn gdrf_round_trip_preserves_predictions() {
        let (data, hp, grid) = fixture();
        let mut model = GdrfModel::fit(&data, &hp, &grid, 1).unwrap();
        let doc = ModelDocument::new(StoredModel::Gdrf(model.clone()), word_labels(6)).unwrap();
        let back = round_trip(&doc);
        model.diagnostics.clear();
        model.counts.assignments.clear();
        assert_eq!(back.model, StoredModel::Gdrf(model.clone()));
        let centers = grid.cell_centers();
        assert_eq!(
            back.model.topic_model().predict_words(&centers).unwrap(),
            model.predict_words(&centers).unwrap()
        );
        assert_eq!(back.to_json().unwrap(), doc.to_json().unwrap());
    }

    #[test]
    fn rost_round_trip_keeps_kind_tag() {
        let (data, hp, grid) = fixture();
        let model = RostModel::fit(&data, &hp, &grid, 1, 1).unwrap();
        let doc = ModelDocument::new(StoredModel::Rost(model), word_labels(6)).unwrap();
        let text = doc.to_json().unwrap();
        assert!(text.contains("\"model_kind\": \"rost\""));
        let back = round_trip(&doc);
        assert_eq!(back.model.kind(), ModelKind::Rost);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn rejects_other_versions_and_shapes() {
        let (data, hp, grid) = fixture();
        let model = GdrfModel::untrained(&data, &hp, &grid, 0).unwrap();
        let text = ModelDocument::new(StoredModel::Gdrf(model), word_labels(6)).unwrap().to_json().unwrap();
        let p = Path::new("m.json");
        let v2 = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
        assert!(matches!(ModelDocument::from_json(&v2, p), Err(GdrfError::Format { .. })));
        let wrong_kind = text.replacen("\"gdrf\"", "\"rost\"", 1);
        assert!(ModelDocument::from_json(&wrong_kind, p).is_err());
        let extra = text.replacen('{', "{\"surprise\": 1,", 1);
        assert!(ModelDocument::from_json(&extra, p).is_err());
        assert!(ModelDocument::from_json("not json", p).is_err());
    }

    #[test]
    fn triangle_packing() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 2.0, 3.0, 0.0, 4.0, 5.0, 6.0]);
        let packed = lower_triangle(&m);
        assert_eq!(packed, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(from_lower_triangle(&packed).unwrap(), m);
        assert!(from_lower_triangle(&[1.0, 2.0]).is_none());
        assert_eq!(from_lower_triangle(&[]).unwrap().nrows(), 0);
    }
}

//! Two-phase UMAP: a fuzzy k-NN graph in sensor space, then an SGD layout
//! in `D` dimensions.

pub mod curve;
pub mod fuzzy;
pub mod knn;
pub mod layout;
pub mod sparse;
pub mod spectral;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use curve::{fit_ab, KernelParams};
pub use fuzzy::{fuzzy_weights, smooth_knn, symmetrize, SmoothKnn};
pub use knn::{knn_graph, KnnBackend, KnnGraph};
pub use layout::{optimize_layout, LayoutParams};
pub use sparse::Csr;
pub use spectral::{spectral_init, SpectralInit};

use crate::dataset::{stack_rows, UnitSeries};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UmapConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub n_components: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negative_sample_rate: usize,
    pub seed: u64,
    pub sigma_floor: f64,
    pub knn: KnnBackend,
}

impl Default for UmapConfig {
    fn default() -> Self {
        Self {
            n_neighbors: 80,
            min_dist: 1.0,
            n_components: 2,
            epochs: 500,
            learning_rate: 1.0,
            negative_sample_rate: 5,
            seed: 42,
            sigma_floor: fuzzy::DEFAULT_SIGMA_FLOOR,
            knn: KnnBackend::Exact,
        }
    }
}

impl UmapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_neighbors < 2 {
            return Err(Error::Parameter("n_neighbors must be at least 2".into()));
        }
        if !(self.min_dist > 0.0) {
            return Err(Error::Parameter("min_dist must be positive".into()));
        }
        if self.n_components == 0 {
            return Err(Error::Parameter("n_components must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Parameter("learning_rate must be positive".into()));
        }
        Ok(())
    }

    fn layout(&self) -> LayoutParams {
        LayoutParams {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            negative_sample_rate: self.negative_sample_rate,
            seed: self.seed,
        }
    }
}

/// Fitted layout state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutModel {
    pub config: UmapConfig,
    pub kernel: KernelParams,
    pub n_points: usize,
    pub n_graph_edges: usize,
    pub n_graph_components: usize,
    pub spectral_random_components: usize,
    /// Points whose σ search failed and took the floor value.
    pub sigma_floor_count: usize,
}

/// One `D`-dimensional point per input row, keyed by `(unit_id, cycle)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub keys: Vec<(u32, u32)>,
    pub rul: Vec<Option<u32>>,
    pub dim: usize,
    pub points: Vec<f64>,
    pub model: LayoutModel,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// CSV with columns `unit_id, cycle, rul, y_1..y_D`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["unit_id".to_string(), "cycle".into(), "rul".into()];
        header.extend((1..=self.dim).map(|c| format!("y_{c}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let (u, c) = self.keys[i];
            let mut rec = vec![
                u.to_string(),
                c.to_string(),
                self.rul[i].map(|r| r.to_string()).unwrap_or_default(),
            ];
            rec.extend(self.point(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Read an embedding CSV. The layout model is supplied separately.
    pub fn read_csv(path: &Path, model: LayoutModel) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let dim = r.headers()?.len().saturating_sub(3);
        let (mut keys, mut rul, mut points) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = || Error::Parse {
                path: path.display().to_string(),
                line: i + 2,
                msg: "malformed embedding row".into(),
            };
            keys.push((rec[0].parse().map_err(|_| bad())?, rec[1].parse().map_err(|_| bad())?));
            rul.push(if rec[2].is_empty() {
                None
            } else {
                Some(rec[2].parse().map_err(|_| bad())?)
            });
            for k in 3..3 + dim {
                points.push(rec[k].parse::<f64>().map_err(|_| bad())?);
            }
        }
        Ok(Self {
            keys,
            rul,
            dim,
            points,
            model,
        })
    }
}

/// Fuzzy graph for an `N × S` row-major matrix.
pub fn fuzzy_graph(points: &[f64], n_features: usize, config: &UmapConfig) -> Result<(Csr, SmoothKnn)> {
    let knn = knn_graph(points, n_features, config.n_neighbors, config.knn)?;
    let smooth = smooth_knn(&knn, config.sigma_floor);
    let w = fuzzy_weights(&knn, &smooth);
    let directed = fuzzy::directed_matrix(&knn, &w);
    Ok((symmetrize(&directed), smooth))
}

/// Embed an `N × S` row-major matrix. Returns the coordinates and the fitted
/// layout model.
pub fn embed_matrix(points: &[f64], n_features: usize, config: &UmapConfig) -> Result<(Vec<f64>, LayoutModel)> {
    config.validate()?;
    let (a, smooth) = fuzzy_graph(points, n_features, config)?;
    let kernel = fit_ab(config.min_dist)?;
    let init = spectral_init(&a, config.n_components, config.seed);
    let mut y = init.coords;
    optimize_layout(&a, &mut y, config.n_components, kernel, &config.layout(), None)?;
    let model = LayoutModel {
        config: config.clone(),
        kernel,
        n_points: a.n,
        n_graph_edges: a.nnz(),
        n_graph_components: init.n_components,
        spectral_random_components: init.random_components,
        sigma_floor_count: smooth.floored.len(),
    };
    Ok((y, model))
}

/// Embed every cycle of every unit.
pub fn embed(units: &[UnitSeries], config: &UmapConfig) -> Result<Embedding> {
    let s = units
        .first()
        .map(UnitSeries::n_sensors)
        .ok_or_else(|| Error::Parameter("nothing to embed".into()))?;
    let (data, keys) = stack_rows(units);
    let rul = units
        .iter()
        .flat_map(|u| (0..u.len()).map(move |t| u.rul_at(t)))
        .collect();
    let (points, model) = embed_matrix(&data, s, config)?;
    log::info!(
        "embedded {} rows into {} dims ({} graph edges, {} components, {} σ-floor points)",
        keys.len(),
        config.n_components,
        model.n_graph_edges,
        model.n_graph_components,
        model.sigma_floor_count
    );
    Ok(Embedding {
        keys,
        rul,
        dim: config.n_components,
        points,
        model,
    })
}

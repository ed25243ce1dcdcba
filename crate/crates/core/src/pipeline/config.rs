//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::jointmodel::TrainConfig;
use crate::trajectory::KMeansParams;
use crate::umap::UmapConfig;
use crate::{Error, Result};

/// Environment variable holding the directory with the raw text files.
pub const DATA_ENV: &str = "CMAPSS_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Sub-dataset id, e.g. `FD003`. Files default to
    /// `<root>/train_<id>.txt`, `test_<id>.txt` and `RUL_<id>.txt`.
    pub id: String,
    /// Falls back to `$CMAPSS_DIR`.
    pub root: Option<PathBuf>,
    pub train_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
    pub truth_file: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            id: "FD003".into(),
            root: None,
            train_file: None,
            test_file: None,
            truth_file: None,
        }
    }
}

/// Resolved input file paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataFiles {
    pub train: PathBuf,
    pub test: PathBuf,
    pub truth: PathBuf,
}

impl DatasetSection {
    pub fn files(&self) -> Result<DataFiles> {
        let root = self
            .root
            .clone()
            .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from));
        let pick = |explicit: &Option<PathBuf>, stem: &str| -> Result<PathBuf> {
            let p = match (explicit, &root) {
                (Some(p), _) => p.clone(),
                (None, Some(r)) => r.join(format!("{stem}_{}.txt", self.id)),
                (None, None) => {
                    return Err(Error::Config(format!(
                        "no data location: set [dataset] root or {stem}_file, or export {DATA_ENV}"
                    )))
                }
            };
            if !p.is_file() {
                return Err(Error::Config(format!("data file {} does not exist", p.display())));
            }
            Ok(p)
        };
        Ok(DataFiles {
            train: pick(&self.train_file, "train")?,
            test: pick(&self.test_file, "test")?,
            truth: pick(&self.truth_file, "RUL")?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub ntw: usize,
    pub stride: usize,
    pub pad_short: bool,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self {
            ntw: 60,
            stride: 1,
            pad_short: true,
        }
    }
}

/// Either a fixed number of failure modes or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeCount {
    Auto,
    #[serde(untagged)]
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub n_modes: ModeCount,
    /// Upper bound tried when `n_modes = "auto"`.
    pub max_modes: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for ClusterSection {
    fn default() -> Self {
        let k = KMeansParams::default();
        Self {
            n_modes: ModeCount::Fixed(2),
            max_modes: 4,
            restarts: k.restarts,
            max_iter: k.max_iter,
            tol: k.tol,
            seed: k.seed,
        }
    }
}

impl ClusterSection {
    pub fn kmeans(&self, n_clusters: usize) -> KMeansParams {
        KMeansParams {
            n_clusters,
            restarts: self.restarts,
            max_iter: self.max_iter,
            tol: self.tol,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    #[serde(flatten)]
    pub params: TrainConfig,
    /// Cross-validate every admissible hidden size and keep the best.
    pub hidden_search: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproduceSection {
    /// Penalty weights compared at the configured λ.
    pub etas: Vec<f64>,
    /// Loss balances compared at η = 0; `inf` trains the RUL-only model.
    pub lambdas: Vec<f64>,
}

impl Default for ReproduceSection {
    fn default() -> Self {
        Self {
            etas: vec![0.0, 0.1, 0.5, 1.0, 2.0, 4.0],
            lambdas: vec![1.0, 10.0, f64::INFINITY],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub preprocess: PreprocessSection,
    pub umap: UmapConfig,
    pub cluster: ClusterSection,
    pub train: TrainSection,
    pub reproduce: ReproduceSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        // flattened sections accept anything, so check their keys here
        if let Some(train) = raw.get("train").and_then(toml::Value::as_table) {
            let known = toml::Table::try_from(TrainSection::default()).map_err(|e| Error::Config(e.to_string()))?;
            if let Some(k) = train.keys().find(|k| !known.contains_key(*k)) {
                return Err(Error::Config(format!("unknown key {k:?} in [train]")));
            }
        }
        let c: Self = raw
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Use one seed for the layout, the clustering and the training.
    pub fn set_seed(&mut self, seed: u64) {
        self.umap.seed = seed;
        self.cluster.seed = seed;
        self.train.params.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.preprocess.ntw == 0 || self.preprocess.stride == 0 {
            return Err(Error::Parameter("ntw and stride must be positive".into()));
        }
        self.umap.validate()?;
        if let ModeCount::Fixed(0) = self.cluster.n_modes {
            return Err(Error::Parameter("n_modes must be positive or \"auto\"".into()));
        }
        if self.cluster.max_modes < 2 && self.cluster.n_modes == ModeCount::Auto {
            return Err(Error::Parameter("max_modes must be at least 2".into()));
        }
        self.train.params.validate()?;
        for &eta in &self.reproduce.etas {
            TrainConfig {
                eta,
                ..self.train.params
            }
            .validate()?;
        }
        for &lambda in &self.reproduce.lambdas {
            TrainConfig {
                lambda,
                eta: 0.0,
                ..self.train.params
            }
            .validate()?;
        }
        Ok(())
    }
}

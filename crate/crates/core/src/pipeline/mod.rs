//! Stage orchestration over a run directory.
//!
//! Each stage writes into its own sub-directory and is recorded in
//! `manifest.json` under a key that hashes its config section together with
//! the key of the stage it reads from. A stage whose key and files are
//! unchanged is skipped unless forced; recomputing a stage drops the records
//! of everything downstream.

pub mod config;
pub mod manifest;
mod stages;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{
    ClusterSection, DataFiles, DatasetSection, ModeCount, PreprocessSection, ReproduceSection, RunConfig, TrainSection,
    DATA_ENV,
};
pub use manifest::{hash_value, sha256_file, sha256_hex, Artifact, RunLock, RunManifest, StageRecord};
pub use stages::{EvaluationSummary, SummaryRow};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Preprocess,
    Embed,
    Cluster,
    Train,
    Evaluate,
    Reproduce,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Preprocess,
        Stage::Embed,
        Stage::Cluster,
        Stage::Train,
        Stage::Evaluate,
        Stage::Reproduce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::Embed => "embed",
            Stage::Cluster => "cluster",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Reproduce => "reproduce",
        }
    }

    /// The stage whose outputs this one reads.
    pub fn upstream(self) -> Option<Stage> {
        match self {
            Stage::Preprocess => None,
            Stage::Embed => Some(Stage::Preprocess),
            Stage::Cluster => Some(Stage::Embed),
            Stage::Train => Some(Stage::Cluster),
            Stage::Evaluate => Some(Stage::Train),
            Stage::Reproduce => Some(Stage::Cluster),
        }
    }

    fn describes(self) -> &'static str {
        match self {
            Stage::Preprocess => "prepared dataset",
            Stage::Embed => "embedding",
            Stage::Cluster => "failure-mode labels",
            Stage::Train => "trained fold models",
            Stage::Evaluate => "evaluation report",
            Stage::Reproduce => "study summary",
        }
    }

    /// Every stage that depends on this one, directly or not.
    pub fn downstream(self) -> Vec<Stage> {
        Stage::ALL
            .into_iter()
            .filter(|s| {
                let mut u = s.upstream();
                while let Some(x) = u {
                    if x == self {
                        return true;
                    }
                    u = x.upstream();
                }
                false
            })
            .collect()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    pub cached: bool,
    pub wall_seconds: f64,
    pub artifacts: Vec<PathBuf>,
    /// Human-readable result, e.g. the study table.
    pub summary: Option<String>,
}

/// Holds the lock on a run directory and runs stages against it.
pub struct Runner {
    dir: PathBuf,
    config: RunConfig,
    force: bool,
    manifest: RunManifest,
    _lock: RunLock,
}

impl Runner {
    pub fn open(dir: &Path, config: RunConfig, force: bool) -> Result<Self> {
        config.validate()?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let lock = RunLock::acquire(dir)?;
        let mut manifest = RunManifest::load(dir)?.unwrap_or_default();
        manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
        manifest.config = serde_json::to_value(&config)?;
        manifest.config_hash = hash_value(&config)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config,
            force,
            manifest,
            _lock: lock,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.dir.join(stage.name())
    }

    /// Cache key of `stage` under the current config.
    pub fn key(&self, stage: Stage) -> Result<String> {
        let c = &self.config;
        let section = match stage {
            Stage::Preprocess => {
                let env_root = c.dataset.root.is_none().then(|| std::env::var(DATA_ENV).ok()).flatten();
                serde_json::json!({ "dataset": c.dataset, "env_root": env_root, "preprocess": c.preprocess })
            }
            Stage::Embed => serde_json::to_value(&c.umap)?,
            Stage::Cluster => serde_json::to_value(c.cluster)?,
            Stage::Train => serde_json::to_value(c.train)?,
            Stage::Evaluate => serde_json::Value::Null,
            Stage::Reproduce => serde_json::json!({ "train": c.train, "reproduce": c.reproduce }),
        };
        let upstream = stage.upstream().map(|u| self.key(u)).transpose()?;
        hash_value(&serde_json::json!({ "stage": stage.name(), "upstream": upstream, "section": section }))
    }

    fn is_current(&self, stage: Stage) -> Result<bool> {
        Ok(self.manifest.is_current(&self.dir, stage.name(), &self.key(stage)?))
    }

    fn require_upstream(&self, stage: Stage) -> Result<()> {
        if let Some(u) = stage.upstream() {
            if !self.is_current(u)? {
                return Err(Error::MissingStage {
                    what: u.describes().to_string(),
                    command: format!("prognos {u}"),
                });
            }
        }
        Ok(())
    }

    /// Run one stage. `reproduce` first brings its upstream stages up to
    /// date; every other stage needs its upstream stage to be current.
    pub fn run(&mut self, stage: Stage) -> Result<StageReport> {
        if stage == Stage::Reproduce {
            for s in [Stage::Preprocess, Stage::Embed, Stage::Cluster] {
                self.run(s)?;
            }
        }
        let key = self.key(stage)?;
        if !self.force && self.manifest.is_current(&self.dir, stage.name(), &key) {
            self.manifest.note_cache_hit(stage.name());
            self.manifest.save(&self.dir)?;
            log::info!("{stage}: up to date, skipped");
            return Ok(StageReport {
                stage,
                cached: true,
                wall_seconds: 0.0,
                artifacts: self.manifest.stages[stage.name()]
                    .artifacts
                    .iter()
                    .map(|a| self.dir.join(&a.path))
                    .collect(),
                summary: None,
            });
        }
        self.require_upstream(stage)?;
        let out = self.stage_dir(stage);
        if out.exists() {
            std::fs::remove_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        }
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        // outputs are about to change, so nothing downstream stays valid
        self.manifest
            .invalidate(&stage.downstream().iter().map(|s| s.name()).collect::<Vec<_>>());
        self.manifest.stages.remove(stage.name());
        self.manifest.save(&self.dir)?;

        log::info!("{stage}: running");
        let t0 = Instant::now();
        let (files, summary) = stages::execute(self, stage, &out)?;
        let wall = t0.elapsed().as_secs_f64();
        self.manifest.record(&self.dir, stage.name(), key, &files, wall)?;
        self.manifest.save(&self.dir)?;
        Ok(StageReport {
            stage,
            cached: false,
            wall_seconds: wall,
            artifacts: files,
            summary,
        })
    }
}

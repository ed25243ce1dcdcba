//! Joint failure-mode classifier and per-mode LSTM RUL regressors.
//!
//! The combined estimate is `ŷ = Σ_ν G_c^ν · G_r^ν`: mode probabilities from
//! a feed-forward classifier over the flattened window weight the outputs of
//! one LSTM regressor per mode. Training minimises
//! `Σ ℓ_c + λ Σ ℓ_hs + η Σ max(0, |Δŷ - ζ| - a)` with Adam.

pub mod loss;
pub mod net;
pub mod train;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use loss::{loss_ce, loss_ce_label, loss_hs, loss_hs_grad, loss_mono, loss_mono_grad};
pub use net::{Arch, JointModel, Prediction};
pub use train::{
    cross_validate, eligible_hidden, fold_units, grad_check, loss_and_grad, mono_pairs, predict_sequence, predict_set,
    samples, score, select_hidden, total_loss, train, FoldOutcome, GradCheck, HiddenSearch, LossParts, PredictedWindow,
    Sample, TrainConfig, TrainLog, Trained, HIDDEN_GRID, MAX_PARAMS_PER_INSTANCE,
};

use crate::dataset::MinMaxScaler;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to reuse a trained model on new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: JointModel,
    pub config: TrainConfig,
    pub scaler: MinMaxScaler,
    /// Unit id to 0-based failure mode used for training.
    pub mode_map: BTreeMap<u32, usize>,
    /// Hash of the dataset manifest the model was trained on.
    pub dataset_hash: String,
    pub fold: Option<usize>,
    pub log: TrainLog,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Self = serde_json::from_str(&text)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Integrity(format!(
                "{}: checkpoint version {} is not supported",
                path.display(),
                c.version
            )));
        }
        if c.model.theta.len() != c.model.arch.n_params() {
            return Err(Error::Integrity(format!(
                "{}: {} parameters stored, architecture needs {}",
                path.display(),
                c.model.theta.len(),
                c.model.arch.n_params()
            )));
        }
        if c.scaler.min.len() != c.model.arch.n_sensors {
            return Err(Error::Integrity(format!(
                "{}: scaler does not match the model inputs",
                path.display()
            )));
        }
        Ok(c)
    }
}

/// `unit_id, cycle, true_rul, pred_rul, p_mode_1..p_mode_V`.
pub fn write_predictions_csv(path: &Path, preds: &[PredictedWindow]) -> Result<()> {
    let v = preds.first().map_or(1, |p| p.prediction.probs.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "unit_id".to_string(),
        "cycle".into(),
        "true_rul".into(),
        "pred_rul".into(),
    ];
    header.extend((1..=v).map(|m| format!("p_mode_{m}")));
    w.write_record(&header)?;
    for p in preds {
        let mut row = vec![
            p.unit_id.to_string(),
            p.cycle.to_string(),
            p.true_rul.map_or(String::new(), |y| y.to_string()),
            format!("{:?}", p.prediction.rul),
        ];
        row.extend(p.prediction.probs.iter().map(|q| format!("{q:?}")));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

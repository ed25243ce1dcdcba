//! C-MAPSS ingestion, sensor filtering, RUL labelling, scaling and windowing.

mod cmapss;
mod filter;
mod scale;
mod store;
mod window;

pub use cmapss::{load_cmapss, parse_records, units_from_records, write_records, RawRecord, Split};
pub use filter::{apply_filter, filter_sensors, DropReason, DroppedSensor, SensorFilterReport};
pub use scale::{normalize_minmax, MinMaxScaler};
pub use store::{load_dataset, prepare, save_dataset, DatasetManifest, PreparedDataset};
pub use window::{make_windows, WindowIndex, WindowInstance, WindowSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of sensor channels in a C-MAPSS row.
pub const N_SENSORS: usize = 21;
/// Number of operational setting columns in a C-MAPSS row.
pub const N_OP_SETTINGS: usize = 3;

/// Sensor symbols in file column order.
pub const SENSOR_NAMES: [&str; N_SENSORS] = [
    "T2",
    "T24",
    "T30",
    "T50",
    "P2",
    "P15",
    "P30",
    "Nf",
    "Nc",
    "epr",
    "Ps30",
    "phi",
    "NRf",
    "NRc",
    "BPR",
    "farB",
    "htBleed",
    "Nf_dmd",
    "PCNfR_dmd",
    "W31",
    "W32",
];

/// One unit's multivariate series.
///
/// Row `t` (0-based) is cycle `t + 1`. `values` is row-major `T × S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSeries {
    pub unit_id: u32,
    pub sensor_names: Vec<String>,
    pub values: Vec<f64>,
    pub op_settings: Vec<[f64; N_OP_SETTINGS]>,
    /// Per-cycle RUL. `None` for test units loaded without a truth file.
    pub rul: Option<Vec<u32>>,
}

impl UnitSeries {
    pub fn len(&self) -> usize {
        self.op_settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.op_settings.is_empty()
    }

    pub fn n_sensors(&self) -> usize {
        self.sensor_names.len()
    }

    /// Sensor vector at 0-based row `t`.
    pub fn row(&self, t: usize) -> &[f64] {
        let s = self.n_sensors();
        &self.values[t * s..(t + 1) * s]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_sensors().max(1))
    }

    /// RUL at 0-based row `t`, if labelled.
    pub fn rul_at(&self, t: usize) -> Option<u32> {
        self.rul.as_ref().map(|r| r[t])
    }

    pub(crate) fn check_shape(&self) -> Result<()> {
        let t = self.op_settings.len();
        if self.values.len() != t * self.sensor_names.len() {
            return Err(Error::Shape(format!(
                "unit {}: {} values for {} rows x {} sensors",
                self.unit_id,
                self.values.len(),
                t,
                self.sensor_names.len()
            )));
        }
        if let Some(r) = &self.rul {
            if r.len() != t {
                return Err(Error::Shape(format!(
                    "unit {}: {} RUL labels for {} rows",
                    self.unit_id,
                    r.len(),
                    t
                )));
            }
        }
        Ok(())
    }
}

/// Stack every row of every unit into one `N × S` row-major matrix, returning
/// the matrix plus the `(unit_id, cycle)` key of each row.
pub fn stack_rows(units: &[UnitSeries]) -> (Vec<f64>, Vec<(u32, u32)>) {
    let total: usize = units.iter().map(|u| u.values.len()).sum();
    let mut data = Vec::with_capacity(total);
    let mut keys = Vec::with_capacity(units.iter().map(UnitSeries::len).sum());
    for u in units {
        data.extend_from_slice(&u.values);
        keys.extend((1..=u.len() as u32).map(|c| (u.unit_id, c)));
    }
    (data, keys)
}

/// Working-condition id per row from op settings rounded to `decimals`.
///
/// Distinct rounded setting triples are numbered in order of first
/// appearance. C-MAPSS multi-condition subsets give six triples at
/// `decimals = 0` (altitude in kft, Mach and TRA are far from rounding
/// boundaries at that resolution).
pub fn working_conditions(units: &[UnitSeries], decimals: i32) -> Vec<usize> {
    let scale = 10f64.powi(decimals);
    let mut seen: Vec<[i64; N_OP_SETTINGS]> = Vec::new();
    let mut out = Vec::new();
    for u in units {
        for ops in &u.op_settings {
            let key = ops.map(|v| (v * scale).round() as i64);
            let id = match seen.iter().position(|k| *k == key) {
                Some(i) => i,
                None => {
                    seen.push(key);
                    seen.len() - 1
                }
            };
            out.push(id);
        }
    }
    out
}

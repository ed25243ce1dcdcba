use serde::{Deserialize, Serialize};

use super::UnitSeries;
use crate::{Error, Result};

/// Per-sensor min/max fitted on pooled training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub sensor_names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(units: &[UnitSeries]) -> Result<Self> {
        let first = units
            .first()
            .ok_or_else(|| Error::Parameter("cannot fit a scaler on zero units".into()))?;
        let s = first.n_sensors();
        let mut min = vec![f64::INFINITY; s];
        let mut max = vec![f64::NEG_INFINITY; s];
        for u in units {
            if u.sensor_names != first.sensor_names {
                return Err(Error::Integrity(format!(
                    "unit {} has a different sensor set",
                    u.unit_id
                )));
            }
            for row in u.rows() {
                for j in 0..s {
                    min[j] = min[j].min(row[j]);
                    max[j] = max[j].max(row[j]);
                }
            }
        }
        for j in 0..s {
            if !(max[j] > min[j]) {
                return Err(Error::Invariant(format!(
                    "sensor {} has zero range; it should have been filtered",
                    first.sensor_names[j]
                )));
            }
        }
        Ok(Self {
            sensor_names: first.sensor_names.clone(),
            min,
            max,
        })
    }

    pub fn scale_value(&self, j: usize, v: f64) -> f64 {
        ((v - self.min[j]) / (self.max[j] - self.min[j])).clamp(0.0, 1.0)
    }

    /// Scale units into `[0, 1]`, clamping values outside the fitted range.
    pub fn transform(&self, units: &[UnitSeries]) -> Result<Vec<UnitSeries>> {
        let s = self.sensor_names.len();
        units
            .iter()
            .map(|u| {
                if u.sensor_names != self.sensor_names {
                    return Err(Error::Integrity(format!(
                        "unit {} sensors do not match the scaler",
                        u.unit_id
                    )));
                }
                let values = u
                    .values
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| self.scale_value(k % s, v))
                    .collect();
                Ok(UnitSeries { values, ..u.clone() })
            })
            .collect()
    }
}

/// Fit on `train`, scale both splits. Test values outside the training range
/// are clamped to `[0, 1]`.
pub fn normalize_minmax(
    train: &[UnitSeries],
    test: &[UnitSeries],
) -> Result<(Vec<UnitSeries>, Vec<UnitSeries>, MinMaxScaler)> {
    let scaler = MinMaxScaler::fit(train)?;
    let train_scaled = scaler.transform(train)?;
    let test_scaled = scaler.transform(test)?;
    Ok((train_scaled, test_scaled, scaler))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column_unit(id: u32, col: &[f64]) -> UnitSeries {
        UnitSeries {
            unit_id: id,
            sensor_names: vec!["s".into()],
            values: col.to_vec(),
            op_settings: vec![[0.0; 3]; col.len()],
            rul: None,
        }
    }

    #[test]
    fn scales_train_and_clamps_test() {
        let train = [column_unit(1, &[0.0, 5.0, 10.0])];
        let test = [column_unit(2, &[12.0, 5.0, -3.0])];
        let (tr, te, sc) = normalize_minmax(&train, &test).unwrap();
        assert_eq!(tr[0].values, vec![0.0, 0.5, 1.0]);
        assert_eq!(te[0].values, vec![1.0, 0.5, 0.0]);
        assert_eq!((sc.min[0], sc.max[0]), (0.0, 10.0));
    }

    #[test]
    fn zero_range_is_invariant_violation() {
        let train = [column_unit(1, &[3.0, 3.0])];
        assert!(matches!(MinMaxScaler::fit(&train), Err(Error::Invariant(_))));
    }

    proptest! {
        #[test]
        fn idempotent_on_own_stats(col in proptest::collection::vec(-1e3f64..1e3, 2..50)) {
            prop_assume!(col.iter().any(|&v| v != col[0]));
            let train = [column_unit(1, &col)];
            let (once, _, _) = normalize_minmax(&train, &[]).unwrap();
            let (twice, _, _) = normalize_minmax(&once, &[]).unwrap();
            prop_assert!(once[0].values.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(&once[0].values, &twice[0].values);
        }
    }
}

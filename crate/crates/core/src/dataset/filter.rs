use serde::{Deserialize, Serialize};

use super::UnitSeries;
use crate::{Error, Result};

/// Sensors whose pooled sample standard deviation falls below this are dropped.
pub const MIN_STD: f64 = 0.01;
/// Sensors with at least this fraction of missing readings are dropped.
pub const MAX_MISSING_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    SingleValue,
    #[serde(rename = "missing")]
    Missing,
    LowStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedSensor {
    pub name: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFilterReport {
    pub retained: Vec<String>,
    pub dropped: Vec<DroppedSensor>,
}

fn classify(column: &[f64]) -> Option<DropReason> {
    let present: Vec<f64> = column.iter().copied().filter(|v| !v.is_nan()).collect();
    let missing = column.len() - present.len();
    if present.is_empty() || missing as f64 >= MAX_MISSING_FRACTION * column.len() as f64 {
        return Some(DropReason::Missing);
    }
    let first = present[0];
    if present.iter().all(|&v| v == first) {
        return Some(DropReason::SingleValue);
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    let var = present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    if var.sqrt() < MIN_STD {
        return Some(DropReason::LowStd);
    }
    None
}

/// Drop non-informative sensors using statistics pooled over every row of
/// every unit. The same sensor set is removed from each unit.
pub fn filter_sensors(units: &[UnitSeries]) -> Result<(Vec<UnitSeries>, SensorFilterReport)> {
    let first = units
        .first()
        .ok_or_else(|| Error::Parameter("filter_sensors needs at least one unit".into()))?;
    let names = first.sensor_names.clone();
    for u in units {
        u.check_shape()?;
        if u.sensor_names != names {
            return Err(Error::Integrity(format!(
                "unit {} has a different sensor set",
                u.unit_id
            )));
        }
    }

    let s = names.len();
    let mut retained = Vec::new();
    let mut dropped = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let column: Vec<f64> = units
            .iter()
            .flat_map(|u| u.values.iter().skip(j).step_by(s).copied())
            .collect();
        match classify(&column) {
            Some(reason) => dropped.push(DroppedSensor {
                name: name.clone(),
                reason,
            }),
            None => retained.push(name.clone()),
        }
    }
    if retained.is_empty() {
        return Err(Error::Config("every sensor was dropped by the filter".into()));
    }
    let report = SensorFilterReport { retained, dropped };
    let filtered = apply_filter(&report, units)?;
    Ok((filtered, report))
}

/// Keep only the sensors the report retained. Any NaN left afterwards is an
/// integrity error.
pub fn apply_filter(report: &SensorFilterReport, units: &[UnitSeries]) -> Result<Vec<UnitSeries>> {
    units
        .iter()
        .map(|u| {
            u.check_shape()?;
            let idx: Vec<usize> = report
                .retained
                .iter()
                .map(|name| {
                    u.sensor_names
                        .iter()
                        .position(|n| n == name)
                        .ok_or_else(|| Error::Integrity(format!("unit {} lacks sensor {name}", u.unit_id)))
                })
                .collect::<Result<_>>()?;
            let mut values = Vec::with_capacity(u.len() * idx.len());
            for (t, row) in u.rows().enumerate() {
                for &j in &idx {
                    let v = row[j];
                    if v.is_nan() {
                        return Err(Error::Integrity(format!(
                            "unit {} cycle {}: missing value in retained sensor {}",
                            u.unit_id,
                            t + 1,
                            u.sensor_names[j]
                        )));
                    }
                    values.push(v);
                }
            }
            Ok(UnitSeries {
                unit_id: u.unit_id,
                sensor_names: report.retained.clone(),
                values,
                op_settings: u.op_settings.clone(),
                rul: u.rul.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(id: u32, cols: &[Vec<f64>]) -> UnitSeries {
        let t = cols[0].len();
        let mut values = Vec::new();
        for i in 0..t {
            for c in cols {
                values.push(c[i]);
            }
        }
        UnitSeries {
            unit_id: id,
            sensor_names: (0..cols.len()).map(|j| format!("s{j}")).collect(),
            values,
            op_settings: vec![[0.0; 3]; t],
            rul: Some((0..t as u32).rev().collect()),
        }
    }

    #[test]
    fn drops_by_each_rule() {
        let n = 40;
        let informative: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let constant = vec![5.0; n];
        let low_std: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.0 } else { 0.01 }).collect();
        let mostly_missing: Vec<f64> = (0..n).map(|i| if i < n / 2 { f64::NAN } else { i as f64 }).collect();
        let u = unit(1, &[informative, constant, low_std, mostly_missing]);
        let (out, report) = filter_sensors(&[u]).unwrap();
        assert_eq!(report.retained, vec!["s0"]);
        let reasons: Vec<_> = report.dropped.iter().map(|d| (d.name.as_str(), d.reason)).collect();
        assert_eq!(
            reasons,
            vec![
                ("s1", DropReason::SingleValue),
                ("s2", DropReason::LowStd),
                ("s3", DropReason::Missing)
            ]
        );
        assert_eq!(out[0].n_sensors(), 1);
        assert_eq!(out[0].values.len(), n);
    }

    #[test]
    fn std_is_pooled_across_units() {
        // each unit is constant on its own but the pooled column is not
        let a = unit(1, &[vec![0.0; 10], (0..10).map(f64::from).collect()]);
        let b = unit(2, &[vec![1.0; 10], (0..10).map(f64::from).collect()]);
        let (_, report) = filter_sensors(&[a, b]).unwrap();
        assert_eq!(report.retained, vec!["s0", "s1"]);
    }

    #[test]
    fn report_partitions_sensor_set() {
        let cols: Vec<Vec<f64>> = (0..6)
            .map(|j| (0..20).map(|i| if j % 2 == 0 { i as f64 } else { 1.0 }).collect())
            .collect();
        let (_, r) = filter_sensors(&[unit(1, &cols)]).unwrap();
        let mut all: Vec<String> = r.retained.clone();
        all.extend(r.dropped.iter().map(|d| d.name.clone()));
        all.sort();
        let mut expected: Vec<String> = (0..6).map(|j| format!("s{j}")).collect();
        expected.sort();
        assert_eq!(all, expected);
        assert!(r.retained.iter().all(|n| r.dropped.iter().all(|d| &d.name != n)));
    }

    #[test]
    fn all_dropped_is_config_error() {
        let u = unit(1, &[vec![1.0; 5], vec![2.0; 5]]);
        assert!(matches!(filter_sensors(&[u]), Err(Error::Config(_))));
    }

    #[test]
    fn residual_nan_is_rejected() {
        let mut col: Vec<f64> = (0..10).map(f64::from).collect();
        col[3] = f64::NAN;
        let u = unit(1, &[col]);
        assert!(matches!(filter_sensors(&[u]), Err(Error::Integrity(_))));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(filter_sensors(&[]).is_err());
    }
}

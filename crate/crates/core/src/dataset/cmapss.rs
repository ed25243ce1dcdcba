use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{UnitSeries, N_OP_SETTINGS, N_SENSORS, SENSOR_NAMES};
use crate::{Error, Result};

const N_COLUMNS: usize = 2 + N_OP_SETTINGS + N_SENSORS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Parameter(format!("unknown split {other:?}"))),
        }
    }
}

/// One row of a C-MAPSS file. Missing readings are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    pub unit_id: u32,
    pub cycle: u32,
    pub op_settings: [f64; N_OP_SETTINGS],
    pub sensors: [f64; N_SENSORS],
}

/// Parse whitespace separated C-MAPSS rows. `source` only labels errors.
pub fn parse_records(text: &str, source: &str) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != N_COLUMNS {
            return Err(Error::Parse {
                path: source.to_string(),
                line: line_no,
                msg: format!("expected {N_COLUMNS} columns, found {}", fields.len()),
            });
        }
        let bad = |what: &str, tok: &str| Error::Parse {
            path: source.to_string(),
            line: line_no,
            msg: format!("cannot parse {what} from {tok:?}"),
        };
        let int = |tok: &str, what: &str| -> Result<u32> {
            tok.parse::<u32>()
                .ok()
                .or_else(|| {
                    // some redistributions write ids as 1.0
                    tok.parse::<f64>()
                        .ok()
                        .filter(|v| v.fract() == 0.0 && *v >= 0.0 && *v <= u32::MAX as f64)
                        .map(|v| v as u32)
                })
                .filter(|&v| v > 0)
                .ok_or_else(|| bad(what, tok))
        };
        let real = |tok: &str| -> Result<f64> { tok.parse::<f64>().map_err(|_| bad("value", tok)) };

        let unit_id = int(fields[0], "unit id")?;
        let cycle = int(fields[1], "cycle")?;
        let mut op_settings = [0.0; N_OP_SETTINGS];
        for (k, slot) in op_settings.iter_mut().enumerate() {
            *slot = real(fields[2 + k])?;
        }
        let mut sensors = [0.0; N_SENSORS];
        for (k, slot) in sensors.iter_mut().enumerate() {
            *slot = real(fields[2 + N_OP_SETTINGS + k])?;
        }
        out.push(RawRecord {
            unit_id,
            cycle,
            op_settings,
            sensors,
        });
    }
    Ok(out)
}

/// Serialize records in C-MAPSS layout. Floats use shortest round-trip
/// formatting, so `parse_records(write_records(r))` reproduces `r` exactly.
pub fn write_records(records: &[RawRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = write!(s, "{} {}", r.unit_id, r.cycle);
        for v in r.op_settings.iter().chain(r.sensors.iter()) {
            let _ = write!(s, " {v:?}");
        }
        s.push('\n');
    }
    s
}

/// Parse a companion truth file: one RUL per line, in unit order.
fn parse_truth(text: &str, source: &str) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v = t
            .parse::<u32>()
            .ok()
            .or_else(|| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.fract() == 0.0 && *v >= 0.0)
                    .map(|v| v as u32)
            })
            .ok_or_else(|| Error::Parse {
                path: source.to_string(),
                line: idx + 1,
                msg: format!("cannot parse RUL from {t:?}"),
            })?;
        out.push(v);
    }
    Ok(out)
}

/// Group records into per-unit series and attach RUL labels.
///
/// Training units are run to failure, so the label at cycle `t` is
/// `T_i - t`. Test units are truncated; `truth[k]` is the RUL at the last
/// observed cycle of the `k`-th unit (in order of first appearance) and the
/// label at cycle `t` is `truth[k] + T_i - t`.
pub fn units_from_records(records: &[RawRecord], split: Split, truth: Option<&[u32]>) -> Result<Vec<UnitSeries>> {
    let mut order: Vec<u32> = Vec::new();
    let mut groups: HashMap<u32, Vec<&RawRecord>> = HashMap::new();
    for r in records {
        groups
            .entry(r.unit_id)
            .or_insert_with(|| {
                order.push(r.unit_id);
                Vec::new()
            })
            .push(r);
    }
    if let Some(t) = truth {
        if t.len() != order.len() {
            return Err(Error::Integrity(format!(
                "truth file has {} entries for {} units",
                t.len(),
                order.len()
            )));
        }
    }

    let names: Vec<String> = SENSOR_NAMES.iter().map(|s| s.to_string()).collect();
    let mut units = Vec::with_capacity(order.len());
    for (k, id) in order.iter().enumerate() {
        let rows = &groups[id];
        for (i, r) in rows.iter().enumerate() {
            if r.cycle as usize != i + 1 {
                return Err(Error::Integrity(format!(
                    "unit {id}: expected cycle {} but found {}",
                    i + 1,
                    r.cycle
                )));
            }
        }
        let len = rows.len() as u32;
        let rul = match (split, truth) {
            (Split::Train, _) => Some((1..=len).map(|c| len - c).collect()),
            (Split::Test, Some(t)) => Some((1..=len).map(|c| t[k] + len - c).collect()),
            (Split::Test, None) => None,
        };
        units.push(UnitSeries {
            unit_id: *id,
            sensor_names: names.clone(),
            values: rows.iter().flat_map(|r| r.sensors).collect(),
            op_settings: rows.iter().map(|r| r.op_settings).collect(),
            rul,
        });
    }
    Ok(units)
}

/// Load a C-MAPSS train or test file into labelled unit series.
pub fn load_cmapss(path: &Path, split: Split, rul_truth_path: Option<&Path>) -> Result<Vec<UnitSeries>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = parse_records(&text, &path.display().to_string())?;
    let truth = match rul_truth_path {
        Some(p) => {
            let t = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Some(parse_truth(&t, &p.display().to_string())?)
        }
        None => None,
    };
    units_from_records(&records, split, truth.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(unit: u32, cycle: u32, fill: f64) -> String {
        let mut s = format!("{unit} {cycle} 0.001 -0.0003 100.0");
        for k in 0..N_SENSORS {
            s.push_str(&format!(" {}", fill + k as f64));
        }
        s
    }

    #[test]
    fn train_rul_counts_down_to_zero() {
        let text: String = (1..=192).map(|c| row(1, c, c as f64) + "\n").collect();
        let units = units_from_records(&parse_records(&text, "t").unwrap(), Split::Train, None).unwrap();
        assert_eq!(units.len(), 1);
        let rul = units[0].rul.as_ref().unwrap();
        assert_eq!(rul[0], 191);
        assert_eq!(rul[191], 0);
        assert!(rul.windows(2).all(|w| w[0] == w[1] + 1));
    }

    #[test]
    fn test_rul_offsets_by_truth() {
        let text: String = (1..=5).map(|c| row(7, c, 0.0) + "\n").collect();
        let recs = parse_records(&text, "t").unwrap();
        let units = units_from_records(&recs, Split::Test, Some(&[30])).unwrap();
        assert_eq!(units[0].rul.as_deref().unwrap(), &[34, 33, 32, 31, 30]);
        let unlabeled = units_from_records(&recs, Split::Test, None).unwrap();
        assert!(unlabeled[0].rul.is_none());
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let text = format!("{}\n1 2 3\n", row(1, 1, 0.0));
        match parse_records(&text, "f.txt") {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(path, "f.txt");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gap_in_cycles_is_integrity_error() {
        let text = format!("{}\n{}\n", row(1, 1, 0.0), row(1, 3, 0.0));
        let recs = parse_records(&text, "f").unwrap();
        assert!(matches!(
            units_from_records(&recs, Split::Train, None),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn truth_count_mismatch() {
        let text = format!("{}\n{}\n", row(1, 1, 0.0), row(2, 1, 0.0));
        let recs = parse_records(&text, "f").unwrap();
        assert!(units_from_records(&recs, Split::Test, Some(&[1])).is_err());
    }

    #[test]
    fn nan_is_accepted_as_missing() {
        let text = row(1, 1, 0.0).replacen(" 0 ", " NaN ", 1);
        let recs = parse_records(&text, "f").unwrap();
        assert!(recs[0].sensors[0].is_nan());
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6f64..1e6, any::<f64>().prop_filter("finite", |v| v.is_finite()),]
    }

    proptest! {
        #[test]
        fn serialize_round_trip(vals in proptest::collection::vec(finite(), N_SENSORS + N_OP_SETTINGS), unit in 1u32..500, cycle in 1u32..400) {
            let mut rec = RawRecord { unit_id: unit, cycle, op_settings: [0.0; 3], sensors: [0.0; N_SENSORS] };
            rec.op_settings.copy_from_slice(&vals[..3]);
            rec.sensors.copy_from_slice(&vals[3..]);
            let text = write_records(&[rec]);
            let back = parse_records(&text, "rt").unwrap();
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(back[0], rec);
        }
    }
}

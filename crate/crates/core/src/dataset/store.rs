//! On-disk layout of a prepared dataset:
//!
//! ```text
//! <dir>/manifest.json      filter report, scaler, window params, file list
//! <dir>/train_units.csv    scaled per-cycle rows (unit_id, cycle, rul, op1..3, sensors…)
//! <dir>/test_units.csv
//! <dir>/train_windows.csv  window index (unit_id, end_cycle, pad_rows, rul_target)
//! <dir>/test_windows.csv
//! ```
//!
//! Window tensors are rebuilt from the unit rows and the index on load.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    apply_filter, filter_sensors, make_windows, normalize_minmax, MinMaxScaler, SensorFilterReport, UnitSeries,
    WindowSet,
};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub filter_report: SensorFilterReport,
    pub scaler: MinMaxScaler,
    pub ntw: usize,
    pub stride: usize,
    pub pad_short: bool,
    pub n_train_units: usize,
    pub n_test_units: usize,
    pub n_train_windows: usize,
    pub n_test_windows: usize,
    pub files: Vec<String>,
}

/// Everything the preprocess stage produces.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub manifest: DatasetManifest,
    pub train: WindowSet,
    pub test: WindowSet,
}

impl PreparedDataset {
    pub fn train_units(&self) -> &[UnitSeries] {
        &self.train.units
    }

    pub fn test_units(&self) -> &[UnitSeries] {
        &self.test.units
    }
}

/// Filter sensors on the training units, min-max scale both splits with the
/// training ranges and cut windows.
pub fn prepare(
    dataset_id: &str,
    train_raw: &[UnitSeries],
    test_raw: &[UnitSeries],
    ntw: usize,
    stride: usize,
    pad_short: bool,
) -> Result<PreparedDataset> {
    let (train_f, report) = filter_sensors(train_raw)?;
    let test_f = apply_filter(&report, test_raw)?;
    let (train_s, test_s, scaler) = normalize_minmax(&train_f, &test_f)?;
    let train = make_windows(train_s, ntw, stride, pad_short)?;
    let test = make_windows(test_s, ntw, stride, pad_short)?;
    let manifest = DatasetManifest {
        dataset_id: dataset_id.to_string(),
        filter_report: report,
        scaler,
        ntw,
        stride,
        pad_short,
        n_train_units: train.units.len(),
        n_test_units: test.units.len(),
        n_train_windows: train.len(),
        n_test_windows: test.len(),
        files: Vec::new(),
    };
    Ok(PreparedDataset { manifest, train, test })
}

fn write_units(path: &Path, units: &[UnitSeries]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["unit_id".to_string(), "cycle".into(), "rul".into()];
    header.extend(["op1", "op2", "op3"].map(String::from));
    if let Some(u) = units.first() {
        header.extend(u.sensor_names.iter().cloned());
    }
    w.write_record(&header)?;
    for u in units {
        for t in 0..u.len() {
            let mut rec = vec![
                u.unit_id.to_string(),
                (t + 1).to_string(),
                u.rul_at(t).map(|r| r.to_string()).unwrap_or_default(),
            ];
            rec.extend(u.op_settings[t].iter().map(|v| format!("{v:?}")));
            rec.extend(u.row(t).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_units(path: &Path) -> Result<Vec<UnitSeries>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 7 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: "unit table needs at least one sensor column".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(6).map(String::from).collect();
    let mut units: Vec<UnitSeries> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: i + 2,
            msg,
        };
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .map_err(|_| bad(format!("bad number {:?}", &rec[k])))
        };
        let unit_id: u32 = rec[0].parse().map_err(|_| bad("bad unit id".into()))?;
        let cycle: usize = rec[1].parse().map_err(|_| bad("bad cycle".into()))?;
        let rul = if rec[2].is_empty() {
            None
        } else {
            Some(rec[2].parse::<u32>().map_err(|_| bad("bad rul".into()))?)
        };
        if units.last().map(|u| u.unit_id) != Some(unit_id) {
            units.push(UnitSeries {
                unit_id,
                sensor_names: names.clone(),
                values: Vec::new(),
                op_settings: Vec::new(),
                rul: rul.map(|_| Vec::new()),
            });
        }
        let u = units.last_mut().expect("pushed above");
        if cycle != u.len() + 1 {
            return Err(Error::Integrity(format!(
                "{}: unit {unit_id} cycle {cycle} out of order",
                path.display()
            )));
        }
        u.op_settings.push([num(3)?, num(4)?, num(5)?]);
        for k in 6..rec.len() {
            u.values.push(num(k)?);
        }
        match (&mut u.rul, rul) {
            (Some(v), Some(r)) => v.push(r),
            (None, None) => {}
            _ => return Err(bad("RUL present on some rows of a unit only".into())),
        }
    }
    Ok(units)
}

fn write_window_index(path: &Path, ws: &WindowSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["unit_id", "end_cycle", "pad_rows", "rul_target"])?;
    for x in &ws.windows {
        w.write_record([
            x.unit_id.to_string(),
            x.end_cycle.to_string(),
            x.pad_rows.to_string(),
            x.rul_target.map(|r| r.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_window_index(path: &Path) -> Result<Vec<(u32, u32)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<u32> {
            rec[k].parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: i + 2,
                msg: format!("bad integer {:?}", &rec[k]),
            })
        };
        out.push((parse(0)?, parse(1)?));
    }
    Ok(out)
}

/// Persist a prepared dataset. Returns the written file paths.
pub fn save_dataset(dir: &Path, data: &PreparedDataset) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        "train_units.csv",
        "test_units.csv",
        "train_windows.csv",
        "test_windows.csv",
    ];
    write_units(&dir.join(files[0]), data.train_units())?;
    write_units(&dir.join(files[1]), data.test_units())?;
    write_window_index(&dir.join(files[2]), &data.train)?;
    write_window_index(&dir.join(files[3]), &data.test)?;
    let mut manifest = data.manifest.clone();
    manifest.files = files.iter().map(|s| s.to_string()).collect();
    let mpath = dir.join(MANIFEST_FILE);
    std::fs::write(&mpath, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&mpath, e))?;
    let mut out: Vec<PathBuf> = files.iter().map(|f| dir.join(f)).collect();
    out.push(mpath);
    Ok(out)
}

/// Load a dataset written by [`save_dataset`] and rebuild its windows.
pub fn load_dataset(dir: &Path) -> Result<PreparedDataset> {
    let mpath = dir.join(MANIFEST_FILE);
    let bytes = std::fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: DatasetManifest = serde_json::from_slice(&bytes)?;
    let train_units = read_units(&dir.join("train_units.csv"))?;
    let test_units = read_units(&dir.join("test_units.csv"))?;
    let train = make_windows(train_units, manifest.ntw, manifest.stride, manifest.pad_short)?;
    let test = make_windows(test_units, manifest.ntw, manifest.stride, manifest.pad_short)?;
    for (ws, file, expected) in [
        (&train, "train_windows.csv", manifest.n_train_windows),
        (&test, "test_windows.csv", manifest.n_test_windows),
    ] {
        let index = read_window_index(&dir.join(file))?;
        let rebuilt: Vec<(u32, u32)> = ws.windows.iter().map(|w| (w.unit_id, w.end_cycle)).collect();
        if index != rebuilt || index.len() != expected {
            return Err(Error::Integrity(format!(
                "{file} does not match the windows rebuilt from the unit tables"
            )));
        }
    }
    Ok(PreparedDataset { manifest, train, test })
}

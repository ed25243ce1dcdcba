//! Sequence-level RUL metrics and clustering diagnostics.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Instances with true RUL below this are left out of MAPE.
pub const MAPE_MIN_TRUE_RUL: f64 = 1.0;
/// Default RUL bucket width for the interval MAE table.
pub const INTERVAL_SIZE: f64 = 50.0;

/// One predicted instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub unit_id: u32,
    pub cycle: u32,
    pub y_true: f64,
    pub y_pred: f64,
}

fn nonempty<T>(xs: &[T], what: &str) -> Result<()> {
    if xs.is_empty() {
        Err(Error::Parameter(format!("{what} needs at least one instance")))
    } else {
        Ok(())
    }
}

/// Root mean squared error over `(prediction, truth)` pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    nonempty(pairs, "RMSE")?;
    let s: f64 = pairs.iter().map(|(p, y)| (p - y) * (p - y)).sum();
    Ok((s / pairs.len() as f64).sqrt())
}

pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    nonempty(pairs, "MAE")?;
    Ok(pairs.iter().map(|(p, y)| (p - y).abs()).sum::<f64>() / pairs.len() as f64)
}

/// Mean of `|ŷ - y| / y` over instances with `y ≥ 1`; returns the value and
/// the number of instances used.
pub fn mape(pairs: &[(f64, f64)]) -> Result<(f64, usize)> {
    let used: Vec<f64> = pairs
        .iter()
        .filter(|(_, y)| *y >= MAPE_MIN_TRUE_RUL)
        .map(|(p, y)| (p - y).abs() / y)
        .collect();
    if used.is_empty() {
        return Err(Error::Parameter(
            "every instance was excluded from MAPE (true RUL < 1)".into(),
        ));
    }
    Ok((used.iter().sum::<f64>() / used.len() as f64, used.len()))
}

/// Monotonicity ratio: share of instances whose prediction is strictly
/// below the previous one of the same unit. The first instance of every
/// unit has no predecessor and is not counted.
pub fn monotonicity_ratio<S: AsRef<[f64]>>(per_unit: &[S]) -> Result<f64> {
    let (mut num, mut den) = (0usize, 0usize);
    for seq in per_unit {
        for w in seq.as_ref().windows(2) {
            den += 1;
            if w[1] - w[0] < 0.0 {
                num += 1;
            }
        }
    }
    if den == 0 {
        return Err(Error::Parameter("MR needs at least one unit with two instances".into()));
    }
    Ok(num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalMae {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mae: f64,
}

/// MAE per true-RUL bucket `[k·size, (k+1)·size)`. Empty buckets are absent.
pub fn interval_mae(pairs: &[(f64, f64)], size: f64) -> Vec<IntervalMae> {
    let mut buckets: BTreeMap<i64, (usize, f64)> = BTreeMap::new();
    for &(p, y) in pairs {
        let b = (y / size).floor() as i64;
        let e = buckets.entry(b).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += (p - y).abs();
    }
    buckets
        .into_iter()
        .map(|(b, (count, sum))| IntervalMae {
            lower: b as f64 * size,
            upper: (b + 1) as f64 * size,
            count,
            mae: sum / count as f64,
        })
        .collect()
}

pub fn write_intervals_csv(path: &Path, rows: &[IntervalMae]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rul_lower", "rul_upper", "count", "mae"])?;
    for r in rows {
        w.write_record([
            r.lower.to_string(),
            r.upper.to_string(),
            r.count.to_string(),
            format!("{:?}", r.mae),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub mae: f64,
    pub mape: f64,
    pub mr: f64,
    pub n_instances: usize,
    pub n_mape_instances: usize,
    pub mape_rule: String,
    pub intervals: Vec<IntervalMae>,
}

impl MetricReport {
    /// Score full predicted sequences. Instances are grouped per unit and
    /// ordered by cycle for MR.
    pub fn from_scored(scored: &[Scored]) -> Result<Self> {
        let pairs: Vec<(f64, f64)> = scored.iter().map(|s| (s.y_pred, s.y_true)).collect();
        let mut by_unit: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
        for s in scored {
            by_unit.entry(s.unit_id).or_default().push((s.cycle, s.y_pred));
        }
        let seqs: Vec<Vec<f64>> = by_unit
            .into_values()
            .map(|mut v| {
                v.sort_by_key(|e| e.0);
                v.into_iter().map(|e| e.1).collect()
            })
            .collect();
        let (mape_v, n_mape) = mape(&pairs)?;
        let report = Self {
            rmse: rmse(&pairs)?,
            mae: mae(&pairs)?,
            mape: mape_v,
            mr: monotonicity_ratio(&seqs)?,
            n_instances: pairs.len(),
            n_mape_instances: n_mape,
            mape_rule: format!("instances with true RUL < {MAPE_MIN_TRUE_RUL} excluded from MAPE"),
            intervals: interval_mae(&pairs, INTERVAL_SIZE),
        };
        report.check()?;
        Ok(report)
    }

    /// RMSE ≥ MAE, metrics non-negative, MR in [0, 1].
    pub fn check(&self) -> Result<()> {
        let tol = 1e-12 * self.rmse.max(1.0);
        if self.rmse + tol < self.mae {
            return Err(Error::Invariant(format!("RMSE {} < MAE {}", self.rmse, self.mae)));
        }
        if self.mae < 0.0 || self.mape < 0.0 || !(0.0..=1.0).contains(&self.mr) {
            return Err(Error::Invariant("metric out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(xs: &[f64]) -> MeanStd {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MeanStd { mean, std: var.sqrt() }
}

/// Mean and sample standard deviation of each metric across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldStats {
    pub folds: usize,
    pub rmse: MeanStd,
    pub mae: MeanStd,
    pub mape: MeanStd,
    pub mr: MeanStd,
}

pub fn fold_stats(reports: &[MetricReport]) -> Result<FoldStats> {
    nonempty(reports, "fold statistics")?;
    let col = |f: fn(&MetricReport) -> f64| mean_std(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(FoldStats {
        folds: reports.len(),
        rmse: col(|r| r.rmse),
        mae: col(|r| r.mae),
        mape: col(|r| r.mape),
        mr: col(|r| r.mr),
    })
}

/// Mean silhouette over a precomputed row-major distance matrix. `None`
/// with fewer than two clusters or when every point is its own cluster.
/// Points in singleton clusters score 0.
pub fn silhouette(dist: &[f64], labels: &[usize]) -> Option<f64> {
    let n = labels.len();
    assert_eq!(dist.len(), n * n, "distance matrix must be n x n");
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let used = sizes.iter().filter(|&&s| s > 0).count();
    if used < 2 || used >= n {
        return None;
    }
    let mut total = 0.0;
    for i in 0..n {
        let li = labels[i];
        if sizes[li] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist[i * n + j];
            }
        }
        let a = sums[li] / (sizes[li] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != li && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Some(total / n as f64)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len();
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut ra: BTreeMap<usize, u64> = BTreeMap::new();
    let mut rb: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let total = c2(n as u64);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < 1e-300 {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringDiagnostics {
    pub silhouette: Option<f64>,
    pub adjusted_rand: Option<f64>,
}

pub fn clustering_diagnostics(labels: &[usize], dist: &[f64], reference: Option<&[usize]>) -> ClusteringDiagnostics {
    ClusteringDiagnostics {
        silhouette: silhouette(dist, labels),
        adjusted_rand: reference.map(|r| adjusted_rand(labels, r)),
    }
}

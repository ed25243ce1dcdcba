//! Per-unit degradation trajectories in the embedding and their DTW
//! clustering into failure modes.

pub mod dtw;
pub mod kmeans;
pub mod mean;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dtw::dtw;
pub use kmeans::{dtw_kmeans, ClusterResult, KMeansParams, RestartRecord};
pub use mean::{mean_trajectory, resample, tube};

use crate::eval::silhouette;
use crate::umap::Embedding;
use crate::{Error, Result};

/// Time-ordered embedded path of one unit, row-major `T × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub unit_id: u32,
    pub dim: usize,
    pub points: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, t: usize) -> &[f64] {
        &self.points[t * self.dim..(t + 1) * self.dim]
    }
}

/// Group embedded rows by unit and order them by cycle. Units appear in
/// order of first occurrence. Cycles must run `1..=T_i` without gaps.
pub fn build_trajectories(embedding: &Embedding) -> Result<Vec<Trajectory>> {
    let dim = embedding.dim;
    let mut order = Vec::new();
    let mut rows: BTreeMap<u32, Vec<(u32, usize)>> = BTreeMap::new();
    for (i, &(u, c)) in embedding.keys.iter().enumerate() {
        let e = rows.entry(u).or_default();
        if e.is_empty() {
            order.push(u);
        }
        e.push((c, i));
    }
    order
        .into_iter()
        .map(|u| {
            let mut r = rows.remove(&u).expect("grouped above");
            r.sort_unstable();
            for (k, &(c, _)) in r.iter().enumerate() {
                if c as usize != k + 1 {
                    return Err(Error::Integrity(format!(
                        "unit {u}: embedding has cycle {c} where {} was expected",
                        k + 1
                    )));
                }
            }
            if r.len() < 2 {
                return Err(Error::Integrity(format!(
                    "unit {u}: trajectory needs at least 2 cycles"
                )));
            }
            let points = r
                .iter()
                .flat_map(|&(_, i)| embedding.point(i).iter().copied())
                .collect();
            Ok(Trajectory {
                unit_id: u,
                dim,
                points,
            })
        })
        .collect()
}

/// Symmetric pairwise DTW matrix, row-major `n × n`.
pub fn dtw_matrix(trajs: &[Trajectory]) -> Vec<f64> {
    let n = trajs.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| dtw(&trajs[i].points, &trajs[j].points, trajs[i].dim))
        .collect();
    let mut m = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(vals) {
        m[i * n + j] = v;
        m[j * n + i] = v;
    }
    m
}

/// Ratio `inertia(V=2) / inertia(V=1)` above which a single mode is chosen.
pub const SINGLE_MODE_INERTIA_RATIO: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCountChoice {
    pub chosen: usize,
    pub inertia: Vec<(usize, f64)>,
    pub silhouette: Vec<(usize, f64)>,
}

/// Automatic fallback when no cluster count is supplied: one mode if
/// splitting in two removes less than half of the single-cluster inertia,
/// otherwise the count in `2..=max_v` with the highest DTW silhouette.
pub fn choose_mode_count(trajs: &[Trajectory], max_v: usize, base: &KMeansParams) -> Result<ModeCountChoice> {
    let max_v = max_v.min(trajs.len());
    let dist = dtw_matrix(trajs);
    let mut inertia = Vec::new();
    let mut sil = Vec::new();
    for v in 1..=max_v {
        let res = dtw_kmeans(trajs, &KMeansParams { n_clusters: v, ..*base })?;
        inertia.push((v, res.inertia));
        if v >= 2 {
            if let Some(s) = silhouette(&dist, &res.labels) {
                sil.push((v, s));
            }
        }
    }
    let ratio = match (inertia.first(), inertia.get(1)) {
        (Some(&(_, i1)), Some(&(_, i2))) if i1 > 0.0 => i2 / i1,
        _ => 1.0,
    };
    let chosen = if ratio > SINGLE_MODE_INERTIA_RATIO || sil.is_empty() {
        1
    } else {
        sil.iter()
            .fold(
                (1usize, f64::NEG_INFINITY),
                |b, &(v, s)| if s > b.1 { (v, s) } else { b },
            )
            .0
    };
    Ok(ModeCountChoice {
        chosen,
        inertia,
        silhouette: sil,
    })
}

/// `unit_id, failure_mode` with modes numbered from 1.
pub fn write_labels_csv(path: &Path, result: &ClusterResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["unit_id", "failure_mode"])?;
    for (u, l) in result.unit_ids.iter().zip(&result.labels) {
        w.write_record([u.to_string(), (l + 1).to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a labels CSV back into 0-based modes.
pub fn read_labels_csv(path: &Path) -> Result<BTreeMap<u32, usize>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Parse {
            path: path.display().to_string(),
            line: i + 2,
            msg: "expected unit_id,failure_mode".into(),
        };
        let u: u32 = rec.get(0).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let m: usize = rec.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if m == 0 {
            return Err(bad());
        }
        out.insert(u, m - 1);
    }
    Ok(out)
}

/// Per-cluster mean trajectory with a one-standard-deviation tube:
/// `failure_mode, step, progress, mean_1..mean_D, std_1..std_D`.
pub fn write_centroids_csv(path: &Path, result: &ClusterResult, trajs: &[Trajectory]) -> Result<()> {
    let dim = result.dim;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["failure_mode".to_string(), "step".into(), "progress".into()];
    header.extend((1..=dim).map(|c| format!("mean_{c}")));
    header.extend((1..=dim).map(|c| format!("std_{c}")));
    w.write_record(&header)?;
    for c in 0..result.n_clusters {
        let members = result.members(trajs, c);
        if members.is_empty() {
            continue;
        }
        let len = mean::median_len(&members);
        let (mu, sd) = tube(&members, len);
        for s in 0..len {
            let progress = if len > 1 { s as f64 / (len - 1) as f64 } else { 0.0 };
            let mut rec = vec![(c + 1).to_string(), s.to_string(), format!("{progress:?}")];
            rec.extend(mu[s * dim..(s + 1) * dim].iter().map(|v| format!("{v:?}")));
            rec.extend(sd[s * dim..(s + 1) * dim].iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

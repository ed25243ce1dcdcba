//! k-means over trajectories with DTW as the distance and resampled
//! pointwise means as centroids.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dtw::dtw;
use super::mean::{mean_trajectory, median_len};
use super::Trajectory;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansParams {
    pub n_clusters: usize,
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop when the relative inertia improvement drops below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            n_clusters: 2,
            restarts: 10,
            max_iter: 100,
            tol: 1e-4,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub restart: usize,
    pub iterations: usize,
    pub converged: bool,
    pub inertia: f64,
    pub inertia_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub n_clusters: usize,
    pub unit_ids: Vec<u32>,
    /// 0-based cluster per unit, aligned with `unit_ids`. Clusters are
    /// numbered by their smallest member unit id.
    pub labels: Vec<usize>,
    pub dim: usize,
    /// One row-major centroid trajectory per cluster.
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub seed: u64,
    pub best_restart: usize,
    pub restarts: Vec<RestartRecord>,
}

impl ClusterResult {
    pub fn label_of(&self, unit_id: u32) -> Option<usize> {
        self.unit_ids.iter().position(|&u| u == unit_id).map(|p| self.labels[p])
    }

    pub fn members<'a>(&self, trajs: &'a [Trajectory], cluster: usize) -> Vec<&'a Trajectory> {
        trajs
            .iter()
            .filter(|t| self.label_of(t.unit_id) == Some(cluster))
            .collect()
    }
}

struct State {
    labels: Vec<usize>,
    dists: Vec<f64>,
    centroids: Vec<Vec<f64>>,
    inertia: f64,
}

fn assign(trajs: &[&Trajectory], centroids: &[Vec<f64>], dim: usize) -> (Vec<usize>, Vec<f64>) {
    trajs
        .par_iter()
        .map(|t| {
            let mut best = (0usize, f64::INFINITY);
            for (c, mu) in centroids.iter().enumerate() {
                let d = dtw(&t.points, mu, dim);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

/// Refill empty clusters with the trajectory farthest from its centroid.
fn reseed_empty(state: &mut State, trajs: &[&Trajectory], k: usize) {
    for c in 0..k {
        if state.labels.contains(&c) {
            continue;
        }
        let mut counts = vec![0usize; k];
        state.labels.iter().for_each(|&l| counts[l] += 1);
        let far = (0..trajs.len())
            .filter(|&i| counts[state.labels[i]] > 1)
            .max_by(|&a, &b| state.dists[a].total_cmp(&state.dists[b]).then(b.cmp(&a)));
        if let Some(i) = far {
            state.labels[i] = c;
            state.dists[i] = 0.0;
            state.centroids[c] = trajs[i].points.clone();
        }
    }
}

fn centroids_from(labels: &[usize], trajs: &[&Trajectory], k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|c| {
            let members: Vec<&Trajectory> = labels
                .iter()
                .zip(trajs)
                .filter(|(&l, _)| l == c)
                .map(|(_, t)| *t)
                .collect();
            mean_trajectory(&members, median_len(&members))
        })
        .collect()
}

fn plus_plus_init(trajs: &[&Trajectory], k: usize, dim: usize, r: &mut rng::Rng) -> Vec<Vec<f64>> {
    let n = trajs.len();
    let mut chosen = vec![r.gen_range(0..n)];
    let mut d2: Vec<f64> = trajs
        .par_iter()
        .map(|t| dtw(&t.points, &trajs[chosen[0]].points, dim).powi(2))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut x = r.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if x < w {
                    pick = i;
                    break;
                }
                x -= w;
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        let newd: Vec<f64> = trajs
            .par_iter()
            .map(|t| dtw(&t.points, &trajs[next].points, dim).powi(2))
            .collect();
        d2.iter_mut().zip(newd).for_each(|(a, b)| *a = a.min(b));
    }
    chosen.into_iter().map(|i| trajs[i].points.clone()).collect()
}

fn run_once(trajs: &[&Trajectory], p: &KMeansParams, restart: usize, dim: usize) -> (State, RestartRecord) {
    let k = p.n_clusters;
    let mut r = rng::stream(p.seed, restart as u64);
    let centroids = plus_plus_init(trajs, k, dim, &mut r);
    let (labels, dists) = assign(trajs, &centroids, dim);
    let mut state = State {
        inertia: dists.iter().map(|d| d * d).sum(),
        labels,
        dists,
        centroids,
    };
    reseed_empty(&mut state, trajs, k);
    state.inertia = state.dists.iter().map(|d| d * d).sum();
    let mut history = vec![state.inertia];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < p.max_iter {
        iterations += 1;
        let centroids = centroids_from(&state.labels, trajs, k);
        let (labels, dists) = assign(trajs, &centroids, dim);
        let mut next = State {
            inertia: 0.0,
            labels,
            dists,
            centroids,
        };
        reseed_empty(&mut next, trajs, k);
        next.inertia = next.dists.iter().map(|d| d * d).sum();
        if next.inertia > state.inertia {
            // the resampled mean is not a DTW barycenter and can overshoot;
            // keep the better previous partition and stop
            converged = true;
            break;
        }
        let unchanged = next.labels == state.labels;
        let improvement = (state.inertia - next.inertia) / state.inertia.max(f64::MIN_POSITIVE);
        state = next;
        history.push(state.inertia);
        if unchanged || improvement < p.tol {
            converged = true;
            break;
        }
    }
    let record = RestartRecord {
        restart,
        iterations,
        converged,
        inertia: state.inertia,
        inertia_history: history,
    };
    (state, record)
}

/// DTW k-means with k-means++ seeding and several restarts; the restart
/// with the lowest inertia `Σ DTW(P_i, μ)²` wins.
///
/// Trajectories are processed in unit-id order internally so the result
/// does not depend on the input order.
pub fn dtw_kmeans(trajectories: &[Trajectory], p: &KMeansParams) -> Result<ClusterResult> {
    let n = trajectories.len();
    if p.n_clusters == 0 || p.n_clusters > n {
        return Err(Error::Parameter(format!(
            "cluster count {} must be in 1..={n}",
            p.n_clusters
        )));
    }
    if p.restarts == 0 || p.max_iter == 0 {
        return Err(Error::Parameter("restarts and max_iter must be positive".into()));
    }
    let dim = trajectories[0].dim;
    if trajectories.iter().any(|t| t.dim != dim || t.is_empty()) {
        return Err(Error::Shape(
            "trajectories must be non-empty and share one dimension".into(),
        ));
    }
    let mut sorted: Vec<&Trajectory> = trajectories.iter().collect();
    sorted.sort_by_key(|t| t.unit_id);

    let mut best: Option<(State, usize)> = None;
    let mut records = Vec::with_capacity(p.restarts);
    for restart in 0..p.restarts {
        let (state, rec) = run_once(&sorted, p, restart, dim);
        log::debug!(
            "restart {restart}: inertia {:.6} after {} iterations",
            rec.inertia,
            rec.iterations
        );
        records.push(rec);
        if best.as_ref().is_none_or(|(b, _)| state.inertia < b.inertia) {
            best = Some((state, restart));
        }
    }
    let (state, best_restart) = best.expect("at least one restart");

    // number clusters by smallest member unit id (sorted order = unit id order)
    let mut relabel = vec![usize::MAX; p.n_clusters];
    let mut next = 0;
    for &l in &state.labels {
        if relabel[l] == usize::MAX {
            relabel[l] = next;
            next += 1;
        }
    }
    let mut centroids = vec![Vec::new(); p.n_clusters];
    for (old, c) in state.centroids.into_iter().enumerate() {
        if relabel[old] != usize::MAX {
            centroids[relabel[old]] = c;
        }
    }
    let by_id: std::collections::HashMap<u32, usize> = sorted
        .iter()
        .zip(&state.labels)
        .map(|(t, &l)| (t.unit_id, relabel[l]))
        .collect();
    Ok(ClusterResult {
        n_clusters: p.n_clusters,
        unit_ids: trajectories.iter().map(|t| t.unit_id).collect(),
        labels: trajectories.iter().map(|t| by_id[&t.unit_id]).collect(),
        dim,
        centroids,
        inertia: state.inertia,
        seed: p.seed,
        best_restart,
        restarts: records,
    })
}

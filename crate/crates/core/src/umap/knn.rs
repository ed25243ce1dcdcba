//! k-nearest-neighbour search under the Euclidean metric.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

/// Row-major `N × k` neighbour lists, self excluded, ascending by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    pub n_points: usize,
    pub k: usize,
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl KnnGraph {
    pub fn neighbors(&self, i: usize) -> (&[usize], &[f64]) {
        let r = i * self.k..(i + 1) * self.k;
        (&self.indices[r.clone()], &self.distances[r])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KnnBackend {
    #[default]
    Exact,
    /// Random-projection forest candidates refined by one round of
    /// neighbour-of-neighbour search.
    Approximate { n_trees: usize, seed: u64 },
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check(n: usize, dim: usize, len: usize, k: usize) -> Result<()> {
    if dim == 0 || len != n * dim {
        return Err(Error::Shape(format!(
            "{len} values is not a multiple of dimension {dim}"
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!("k = {k} must satisfy 1 <= k < N = {n}")));
    }
    Ok(())
}

/// Keep the `k` smallest `(dist², index)` candidates, ties broken by index.
fn take_k(mut cand: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if cand.len() > k {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_unstable_by(cmp);
    cand
}

fn assemble(n: usize, k: usize, rows: Vec<Vec<(f64, usize)>>) -> KnnGraph {
    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for row in rows {
        debug_assert_eq!(row.len(), k);
        for (d2, j) in row {
            indices.push(j);
            distances.push(d2.sqrt());
        }
    }
    KnnGraph {
        n_points: n,
        k,
        indices,
        distances,
    }
}

/// Exhaustive search, parallel over query points.
pub fn knn_exact(points: &[f64], dim: usize, k: usize) -> Result<KnnGraph> {
    let n = points.len() / dim.max(1);
    check(n, dim, points.len(), k)?;
    let rows: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = &points[i * dim..(i + 1) * dim];
            let cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(p, &points[j * dim..(j + 1) * dim]), j))
                .collect();
            take_k(cand, k)
        })
        .collect();
    Ok(assemble(n, k, rows))
}

fn rp_split(
    points: &[f64],
    dim: usize,
    ids: &mut Vec<usize>,
    leaf: usize,
    rng: &mut rng::Rng,
    leaves: &mut Vec<Vec<usize>>,
) {
    if ids.len() <= leaf {
        leaves.push(std::mem::take(ids));
        return;
    }
    let a = ids[rng.gen_range(0..ids.len())];
    let mut b = ids[rng.gen_range(0..ids.len())];
    for _ in 0..8 {
        if b != a {
            break;
        }
        b = ids[rng.gen_range(0..ids.len())];
    }
    let pa = &points[a * dim..(a + 1) * dim];
    let pb = &points[b * dim..(b + 1) * dim];
    let normal: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x - y).collect();
    let offset: f64 = normal
        .iter()
        .zip(pa.iter().zip(pb))
        .map(|(nv, (x, y))| nv * (x + y) * 0.5)
        .sum();
    let (mut left, mut right): (Vec<usize>, Vec<usize>) = ids.iter().partition(|&&i| {
        let side: f64 = normal
            .iter()
            .zip(&points[i * dim..(i + 1) * dim])
            .map(|(nv, x)| nv * x)
            .sum::<f64>()
            - offset;
        if side == 0.0 {
            rng.gen::<bool>()
        } else {
            side < 0.0
        }
    });
    if left.len() < leaf / 2 || right.len() < leaf / 2 {
        // degenerate hyperplane (duplicates); fall back to a random halving
        let mut all: Vec<usize> = left.into_iter().chain(right).collect();
        for i in (1..all.len()).rev() {
            all.swap(i, rng.gen_range(0..=i));
        }
        right = all.split_off(all.len() / 2);
        left = all;
    }
    rp_split(points, dim, &mut left, leaf, rng, leaves);
    rp_split(points, dim, &mut right, leaf, rng, leaves);
}

/// Approximate search: candidates from the leaves of `n_trees` random
/// projection trees, then one neighbour-of-neighbour refinement pass.
pub fn knn_approx(points: &[f64], dim: usize, k: usize, n_trees: usize, seed: u64) -> Result<KnnGraph> {
    let n = points.len() / dim.max(1);
    check(n, dim, points.len(), k)?;
    let leaf = (2 * (k + 1)).max(32).min(n);
    let mut cand: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in 0..n_trees.max(1) {
        let mut r = rng::stream(seed, t as u64);
        let mut ids: Vec<usize> = (0..n).collect();
        let mut leaves = Vec::new();
        rp_split(points, dim, &mut ids, leaf, &mut r, &mut leaves);
        for l in &leaves {
            for &i in l {
                cand[i].extend(l.iter().copied().filter(|&j| j != i));
            }
        }
    }
    let score = |i: usize, mut c: Vec<usize>| -> Vec<(f64, usize)> {
        c.sort_unstable();
        c.dedup();
        let p = &points[i * dim..(i + 1) * dim];
        let scored = c
            .into_iter()
            .map(|j| (sq_dist(p, &points[j * dim..(j + 1) * dim]), j))
            .collect();
        take_k(scored, k)
    };
    let first: Vec<Vec<(f64, usize)>> = cand.into_par_iter().enumerate().map(|(i, c)| score(i, c)).collect();
    let refined: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut c: Vec<usize> = first[i].iter().map(|&(_, j)| j).collect();
            for &(_, j) in &first[i] {
                c.extend(first[j].iter().map(|&(_, m)| m).filter(|&m| m != i));
            }
            score(i, c)
        })
        .collect();
    if refined.iter().any(|r| r.len() < k) {
        return Err(Error::Numerical(
            "approximate search produced fewer than k candidates".into(),
        ));
    }
    Ok(assemble(n, k, refined))
}

pub fn knn_graph(points: &[f64], dim: usize, k: usize, backend: KnnBackend) -> Result<KnnGraph> {
    match backend {
        KnnBackend::Exact => knn_exact(points, dim, k),
        KnnBackend::Approximate { n_trees, seed } => knn_approx(points, dim, k, n_trees, seed),
    }
}

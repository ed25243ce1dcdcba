//! High-dimensional fuzzy graph: local connectivity (ρ), smooth-kNN
//! normalisers (σ), directed membership weights and their fuzzy union.

use rayon::prelude::*;

use super::knn::KnnGraph;
use super::sparse::Csr;

pub const SMOOTH_KNN_TOL: f64 = 1e-5;
pub const SMOOTH_KNN_MAX_ITER: usize = 64;
pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-3;

/// Per-point ρ and σ plus a count of points where the σ search failed and
/// the floor was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothKnn {
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    pub floored: Vec<usize>,
}

/// Weight sum `Σ exp(-max(0, d - ρ) / σ)` over one neighbour list.
pub fn membership_sum(dists: &[f64], rho: f64, sigma: f64) -> f64 {
    dists.iter().map(|&d| (-(d - rho).max(0.0) / sigma).exp()).sum()
}

/// Solve for σ so the weight sum hits `target`. Returns `None` if the
/// search does not reach the tolerance within the iteration cap.
pub fn solve_sigma(dists: &[f64], rho: f64, target: f64) -> Option<f64> {
    let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
    for _ in 0..SMOOTH_KNN_MAX_ITER {
        let s = membership_sum(dists, rho, mid);
        if (s - target).abs() <= SMOOTH_KNN_TOL {
            return Some(mid);
        }
        if s > target {
            hi = mid;
            mid = 0.5 * (lo + hi);
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { 0.5 * (lo + hi) };
        }
    }
    None
}

/// ρ = smallest strictly positive neighbour distance; σ by bisection so
/// the weights sum to `log2(k)`.
pub fn smooth_knn(graph: &KnnGraph, sigma_floor: f64) -> SmoothKnn {
    let target = (graph.k as f64).log2();
    let per_point: Vec<(f64, f64, bool)> = (0..graph.n_points)
        .into_par_iter()
        .map(|i| {
            let (_, d) = graph.neighbors(i);
            let rho = d.iter().copied().filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min);
            let rho = if rho.is_finite() { rho } else { 0.0 };
            match solve_sigma(d, rho, target) {
                Some(s) if rho > 0.0 || d.iter().any(|&x| x > 0.0) => (rho, s, false),
                _ => (rho, sigma_floor, true),
            }
        })
        .collect();
    let floored = per_point
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.2.then_some(i))
        .collect::<Vec<_>>();
    if !floored.is_empty() {
        log::debug!("σ floor applied to {} of {} points", floored.len(), graph.n_points);
    }
    SmoothKnn {
        rho: per_point.iter().map(|p| p.0).collect(),
        sigma: per_point.iter().map(|p| p.1).collect(),
        floored,
    }
}

/// `w = exp(-max(0, d - ρ) / σ)` for each directed kNN edge; exactly 1 when
/// `d ≤ ρ`. Returned in the same `N × k` layout as the graph.
pub fn fuzzy_weights(graph: &KnnGraph, smooth: &SmoothKnn) -> Vec<f64> {
    let k = graph.k;
    graph
        .distances
        .iter()
        .enumerate()
        .map(|(e, &d)| {
            let i = e / k;
            let excess = (d - smooth.rho[i]).max(0.0);
            if excess == 0.0 {
                1.0
            } else {
                (-excess / smooth.sigma[i]).exp()
            }
        })
        .collect()
}

/// Directed weights as a sparse matrix.
pub fn directed_matrix(graph: &KnnGraph, weights: &[f64]) -> Csr {
    let trip = graph
        .indices
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(e, (&j, &w))| (e / graph.k, j, w))
        .collect();
    Csr::from_triplets(graph.n_points, trip)
}

/// Fuzzy union `A = W + Wᵀ - W ∘ Wᵀ`. Zero entries are dropped.
pub fn symmetrize(w: &Csr) -> Csr {
    let wt = w.transpose();
    let mut trip = Vec::with_capacity(2 * w.nnz());
    for i in 0..w.n {
        let (ca, va) = w.row(i);
        let (cb, vb) = wt.row(i);
        let (mut p, mut q) = (0, 0);
        while p < ca.len() || q < cb.len() {
            let (j, a, b) = match (ca.get(p), cb.get(q)) {
                (Some(&x), Some(&y)) if x == y => {
                    p += 1;
                    q += 1;
                    (x, va[p - 1], vb[q - 1])
                }
                (Some(&x), Some(&y)) if x < y => {
                    p += 1;
                    (x, va[p - 1], 0.0)
                }
                (Some(&x), None) => {
                    p += 1;
                    (x, va[p - 1], 0.0)
                }
                (_, Some(&y)) => {
                    q += 1;
                    (y, 0.0, vb[q - 1])
                }
                (None, None) => unreachable!(),
            };
            let v = a + b - a * b;
            if v > 0.0 {
                trip.push((i, j, v));
            }
        }
    }
    Csr::from_triplets(w.n, trip)
}

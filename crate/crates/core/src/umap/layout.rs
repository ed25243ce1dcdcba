//! SGD layout: edges attract along `∇ log b'(d)`, uniformly drawn points
//! repel along `∇ log(1 - b'(d))`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::curve::KernelParams;
use super::sparse::Csr;
use crate::{rng, Error, Result};

/// Per-component gradient clip.
pub const GRAD_CLIP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub negative_sample_rate: usize,
    pub seed: u64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 1.0,
            negative_sample_rate: 5,
            seed: 42,
        }
    }
}

#[inline]
fn clip(v: f64) -> f64 {
    v.clamp(-GRAD_CLIP, GRAD_CLIP)
}

/// Optimise `y` (row-major `N × dim`) in place.
///
/// Each edge of `a` is visited with frequency proportional to its weight;
/// each visit moves both endpoints together and pushes the head away from
/// `negative_sample_rate` uniformly drawn points. The step size decays
/// linearly from `learning_rate` to 0. Runs sequentially and is
/// deterministic for a fixed seed.
///
/// With `point_keys`, the optimiser works in key order internally, so a
/// permutation of the rows (with keys permuted alongside) permutes the
/// output the same way.
pub fn optimize_layout(
    a: &Csr,
    y: &mut [f64],
    dim: usize,
    kernel: KernelParams,
    params: &LayoutParams,
    point_keys: Option<&[u64]>,
) -> Result<()> {
    let n = a.n;
    if y.len() != n * dim {
        return Err(Error::Shape(format!("layout has {} values for {n} x {dim}", y.len())));
    }
    if let Some(keys) = point_keys {
        if keys.len() != n {
            return Err(Error::Shape(format!("{} keys for {n} points", keys.len())));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (keys[i], i));
        let mut rank = vec![0usize; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let trip = a.iter().map(|(i, j, w)| (rank[i], rank[j], w)).collect();
        let canon = Csr::from_triplets(n, trip);
        let mut cy = vec![0.0; n * dim];
        for (r, &i) in order.iter().enumerate() {
            cy[r * dim..(r + 1) * dim].copy_from_slice(&y[i * dim..(i + 1) * dim]);
        }
        optimize_layout(&canon, &mut cy, dim, kernel, params, None)?;
        for (r, &i) in order.iter().enumerate() {
            y[i * dim..(i + 1) * dim].copy_from_slice(&cy[r * dim..(r + 1) * dim]);
        }
        return Ok(());
    }

    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("initial layout has non-finite coordinates".into()));
    }
    if params.epochs == 0 || a.nnz() == 0 {
        return Ok(());
    }

    let epochs = params.epochs as f64;
    let max_w = a.values.iter().cloned().fold(0.0, f64::max);
    let edges: Vec<(usize, usize, f64)> = a
        .iter()
        .filter(|&(_, _, w)| w >= max_w / epochs)
        .map(|(i, j, w)| (i, j, max_w / w))
        .collect();
    let neg_rate = params.negative_sample_rate as f64;
    let mut next_sample: Vec<f64> = edges.iter().map(|e| e.2).collect();
    let per_neg: Vec<f64> = edges.iter().map(|e| e.2 / neg_rate.max(1e-300)).collect();
    let mut next_neg: Vec<f64> = per_neg.clone();
    let (alpha, beta) = (kernel.alpha, kernel.beta);
    let half_beta = 0.5 * beta;
    let mut rng = rng::stream(params.seed, 0x1a7);
    let mut diff = vec![0.0; dim];

    for epoch in 0..params.epochs {
        let lr = params.learning_rate * (1.0 - epoch as f64 / epochs);
        let now = epoch as f64;
        for (e, &(head, tail, eps)) in edges.iter().enumerate() {
            if next_sample[e] > now + 1.0 {
                continue;
            }
            let mut d2 = 0.0;
            for c in 0..dim {
                diff[c] = y[head * dim + c] - y[tail * dim + c];
                d2 += diff[c] * diff[c];
            }
            if d2 > 0.0 {
                let p = d2.powf(half_beta);
                let coeff = -alpha * beta * p / d2 / (1.0 + alpha * p);
                for c in 0..dim {
                    let g = clip(coeff * diff[c]) * lr;
                    y[head * dim + c] += g;
                    y[tail * dim + c] -= g;
                }
            }
            next_sample[e] += eps;

            if neg_rate > 0.0 {
                let n_neg = ((now + 1.0 - next_neg[e]) / per_neg[e]).floor().max(0.0) as usize;
                for _ in 0..n_neg {
                    let k = rng.gen_range(0..n);
                    if k == head {
                        continue;
                    }
                    let mut d2 = 0.0;
                    for c in 0..dim {
                        diff[c] = y[head * dim + c] - y[k * dim + c];
                        d2 += diff[c] * diff[c];
                    }
                    if d2 > 0.0 {
                        let coeff = beta / ((1e-3 + d2) * (1.0 + alpha * d2.powf(half_beta)));
                        for c in 0..dim {
                            y[head * dim + c] += clip(coeff * diff[c]) * lr;
                        }
                    }
                }
                next_neg[e] += n_neg as f64 * per_neg[e];
            }
        }
        if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "layout coordinate of point {} became non-finite at epoch {epoch}",
                bad / dim
            )));
        }
    }
    Ok(())
}

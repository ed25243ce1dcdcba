//! Spectral initialisation from the symmetric normalised graph Laplacian.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;

use super::sparse::Csr;
use crate::rng;

/// Coordinates are scaled into `[-INIT_EXTENT, INIT_EXTENT]`.
pub const INIT_EXTENT: f64 = 10.0;
/// Half-width of the uniform jitter added after scaling.
pub const INIT_JITTER: f64 = 1e-4;
/// Components up to this size use a dense eigensolver.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInit {
    /// Row-major `N × D`.
    pub coords: Vec<f64>,
    pub n_components: usize,
    /// Components that fell back to random coordinates.
    pub random_components: usize,
}

/// Connected components by union-find, each sorted, ordered by smallest member.
pub fn connected_components(a: &Csr) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..a.n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (i, j, _) in a.iter() {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..a.n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Normalised adjacency `D^{-1/2} A D^{-1/2}` restricted to `members`, plus
/// the square-root degree vector (the trivial eigenvector).
fn normalized_block(a: &Csr, members: &[usize]) -> (Csr, Vec<f64>) {
    let mut local = vec![usize::MAX; a.n];
    for (li, &g) in members.iter().enumerate() {
        local[g] = li;
    }
    let deg: Vec<f64> = members.iter().map(|&g| a.row(g).1.iter().sum()).collect();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut trip = Vec::new();
    for (li, &g) in members.iter().enumerate() {
        let (cols, vals) = a.row(g);
        for (&j, &w) in cols.iter().zip(vals) {
            let lj = local[j];
            trip.push((li, lj, w * inv_sqrt[li] * inv_sqrt[lj]));
        }
    }
    (
        Csr::from_triplets(members.len(), trip),
        deg.iter().map(|d| d.sqrt()).collect(),
    )
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Leading `dim` non-trivial eigenvectors via dense decomposition of the
/// Laplacian. Returns row-major `n × dim`.
fn dense_eigvecs(m: &Csr, dim: usize) -> Option<Vec<f64>> {
    let n = m.n;
    let mut lap = DMatrix::<f64>::identity(n, n);
    for (i, j, w) in m.iter() {
        lap[(i, j)] -= w;
    }
    let eig = SymmetricEigen::try_new(lap, 1e-12, 10_000)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut out = vec![0.0; n * dim];
    for (c, &col) in order.iter().skip(1).take(dim).enumerate() {
        for i in 0..n {
            out[i * dim + c] = eig.eigenvectors[(i, col)];
        }
    }
    Some(out)
}

/// Lanczos with full reorthogonalisation on `I + M` deflated of the trivial
/// eigenvector, explicitly restarted from the current Ritz vectors.
pub(crate) fn lanczos_eigvecs(m: &Csr, trivial: &[f64], dim: usize, seed: u64) -> Option<Vec<f64>> {
    let n = m.n;
    let steps = (n - 1).min((6 * dim + 40).max(120));
    if steps <= dim {
        return None;
    }
    let mut v0 = trivial.to_vec();
    normalize(&mut v0);
    let mut r = rng::stream(seed, 0x5eed);
    let mut start: Vec<f64> = (0..n).map(|_| r.gen::<f64>() - 0.5).collect();
    let apply = |x: &[f64], y: &mut [f64]| {
        m.mul_block(x, 1, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += xi;
        }
    };
    for _restart in 0..12 {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
        let mut alpha = Vec::with_capacity(steps);
        let mut beta: Vec<f64> = Vec::with_capacity(steps);
        let mut q = start.clone();
        let c = dot(&q, &v0);
        q.iter_mut().zip(&v0).for_each(|(x, v)| *x -= c * v);
        if normalize(&mut q) == 0.0 {
            return None;
        }
        let mut w = vec![0.0; n];
        let mut last_beta = 0.0;
        for j in 0..steps {
            apply(&q, &mut w);
            let a = dot(&w, &q);
            alpha.push(a);
            // full reorthogonalisation against the basis and the trivial vector
            basis.push(q.clone());
            for _ in 0..2 {
                let c0 = dot(&w, &v0);
                w.iter_mut().zip(&v0).for_each(|(x, v)| *x -= c0 * v);
                for b in &basis {
                    let cb = dot(&w, b);
                    w.iter_mut().zip(b).for_each(|(x, v)| *x -= cb * v);
                }
            }
            let bnorm = normalize(&mut w);
            last_beta = bnorm;
            if j + 1 == steps || bnorm < 1e-12 {
                break;
            }
            beta.push(bnorm);
            std::mem::swap(&mut q, &mut w);
        }
        let k = alpha.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::try_new(t, 1e-14, 10_000)?;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top: Vec<usize> = order.into_iter().take(dim).collect();
        if top.len() < dim {
            return None;
        }
        let converged = top
            .iter()
            .all(|&c| (last_beta * eig.eigenvectors[(k - 1, c)]).abs() < 1e-6);
        let mut out = vec![0.0; n * dim];
        for (cidx, &c) in top.iter().enumerate() {
            for (bi, b) in basis.iter().enumerate() {
                let s = eig.eigenvectors[(bi, c)];
                for i in 0..n {
                    out[i * dim + cidx] += s * b[i];
                }
            }
        }
        if converged || k < steps {
            return Some(out);
        }
        start = (0..n).map(|i| (0..dim).map(|c| out[i * dim + c]).sum()).collect();
    }
    None
}

fn scale_into(raw: &[f64], half_width: f64, center: &[f64], dim: usize) -> Vec<f64> {
    let maxabs = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let s = if maxabs > 0.0 { half_width / maxabs } else { 0.0 };
    raw.iter().enumerate().map(|(k, v)| v * s + center[k % dim]).collect()
}

/// Initial layout: per connected component, the first `dim` non-trivial
/// eigenvectors of the normalised Laplacian, scaled into `[-10, 10]`, plus
/// seeded jitter of at most `1e-4`. Components that are too small or whose
/// eigensolve fails get seeded uniform coordinates instead.
pub fn spectral_init(a: &Csr, dim: usize, seed: u64) -> SpectralInit {
    spectral_init_with_limit(a, dim, seed, DENSE_LIMIT)
}

pub(crate) fn spectral_init_with_limit(a: &Csr, dim: usize, seed: u64, dense_limit: usize) -> SpectralInit {
    let comps = connected_components(a);
    let n = a.n;
    let mut coords = vec![0.0; n * dim];
    let mut random_components = 0;
    let mut place = rng::stream(seed, 1);
    for (ci, members) in comps.iter().enumerate() {
        let nc = members.len();
        let (half, center) = if comps.len() == 1 {
            (INIT_EXTENT, vec![0.0; dim])
        } else {
            let frac = (nc as f64 / n as f64).powf(1.0 / dim as f64);
            let h = INIT_EXTENT * frac.clamp(0.1, 0.5);
            let c: Vec<f64> = (0..dim)
                .map(|_| place.gen_range(-(INIT_EXTENT - h)..=(INIT_EXTENT - h)))
                .collect();
            (h, c)
        };
        let raw = if nc > dim + 1 {
            let (m, triv) = normalized_block(a, members);
            if nc <= dense_limit {
                dense_eigvecs(&m, dim)
            } else {
                lanczos_eigvecs(&m, &triv, dim, seed ^ ci as u64)
            }
        } else {
            None
        };
        let block = match raw {
            Some(r) if r.iter().all(|v| v.is_finite()) => scale_into(&r, half, &center, dim),
            _ => {
                if nc > dim + 1 {
                    log::warn!("spectral eigensolve failed for a component of {nc} points; using random init");
                }
                random_components += 1;
                let mut r = rng::stream(seed, 2 + ci as u64);
                (0..nc * dim)
                    .map(|k| center[k % dim] + r.gen_range(-half..=half))
                    .collect()
            }
        };
        for (li, &g) in members.iter().enumerate() {
            coords[g * dim..(g + 1) * dim].copy_from_slice(&block[li * dim..(li + 1) * dim]);
        }
    }
    let mut jitter = rng::stream(seed, 0);
    for v in &mut coords {
        *v += jitter.gen_range(-INIT_JITTER..=INIT_JITTER);
    }
    SpectralInit {
        coords,
        n_components: comps.len(),
        random_components,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize, offset: usize) -> Vec<(usize, usize, f64)> {
        (0..n)
            .flat_map(|i| {
                let j = (i + 1) % n;
                [(offset + i, offset + j, 1.0), (offset + j, offset + i, 1.0)]
            })
            .collect()
    }

    fn path_graph(n: usize) -> Csr {
        let trip = (0..n - 1).flat_map(|i| [(i, i + 1, 1.0), (i + 1, i, 1.0)]).collect();
        Csr::from_triplets(n, trip)
    }

    #[test]
    fn bounded_by_extent_plus_jitter() {
        let a = path_graph(50);
        let init = spectral_init(&a, 2, 7);
        assert!(init.coords.iter().all(|v| v.abs() <= INIT_EXTENT + 1e-3));
        assert_eq!(init.random_components, 0);
    }

    #[test]
    fn jitter_is_bounded() {
        let a = path_graph(40);
        let with = spectral_init(&a, 2, 7);
        let (m, _) = normalized_block(&a, &(0..40).collect::<Vec<_>>());
        let raw = dense_eigvecs(&m, 2).unwrap();
        let clean = scale_into(&raw, INIT_EXTENT, &[0.0, 0.0], 2);
        for (x, y) in with.coords.iter().zip(&clean) {
            assert!((x - y).abs() <= 1e-3);
        }
    }

    #[test]
    fn path_graph_first_coordinate_is_monotone() {
        // Fiedler vector of a path is monotone along it; the √deg scaling of
        // the symmetric normalisation only disturbs the two end nodes
        let init = spectral_init(&path_graph(30), 1, 3);
        let c = &init.coords[1..29];
        let inc = c.windows(2).all(|w| w[1] > w[0]);
        let dec = c.windows(2).all(|w| w[1] < w[0]);
        assert!(inc || dec);
    }

    #[test]
    fn disconnected_components_are_initialised_separately() {
        let mut trip = ring(20, 0);
        trip.extend(ring(20, 20));
        let a = Csr::from_triplets(40, trip);
        let comps = connected_components(&a);
        assert_eq!(comps.len(), 2);
        let init = spectral_init(&a, 2, 5);
        assert_eq!(init.n_components, 2);
        assert_eq!(init.random_components, 0);
        assert!(init.coords.iter().all(|v| v.abs() <= INIT_EXTENT + 1e-3));
        // identical rings get the same shape up to sign and placement
        let spread = |r: std::ops::Range<usize>| {
            let xs: Vec<f64> = r.map(|i| init.coords[2 * i]).collect();
            xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min)
        };
        assert!((spread(0..20) - spread(20..40)).abs() < 1e-2);
    }

    #[test]
    fn lanczos_matches_dense() {
        // two loosely joined rings with chords: distinct leading eigenvalues
        let mut trip = ring(60, 0);
        trip.extend(ring(60, 60));
        for i in (0..60).step_by(7) {
            trip.push((i, (i + 13) % 60, 0.5));
            trip.push(((i + 13) % 60, i, 0.5));
        }
        trip.extend([(0, 60, 0.2), (60, 0, 0.2)]);
        let a = Csr::from_triplets(120, trip);
        let members: Vec<usize> = (0..120).collect();
        let (m, triv) = normalized_block(&a, &members);
        let dense = dense_eigvecs(&m, 2).unwrap();
        let lan = lanczos_eigvecs(&m, &triv, 2, 1).unwrap();
        for c in 0..2 {
            let col = |v: &[f64]| (0..120).map(|i| v[i * 2 + c]).collect::<Vec<f64>>();
            let (x, y) = (col(&dense), col(&lan));
            let cos = dot(&x, &y) / (dot(&x, &x).sqrt() * dot(&y, &y).sqrt());
            assert!(cos.abs() > 0.999, "column {c}: |cos| = {}", cos.abs());
        }
    }

    #[test]
    fn tiny_components_fall_back_to_random() {
        let a = Csr::from_triplets(4, vec![(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)]);
        let init = spectral_init(&a, 2, 1);
        assert_eq!(init.random_components, 2);
        assert!(init.coords.iter().all(|v| v.abs() <= INIT_EXTENT + 1e-3));
    }
}

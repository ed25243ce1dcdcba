use super::Trajectory;

/// Linear resampling onto `len` points evenly spaced in normalised cycle
/// index.
pub fn resample(points: &[f64], dim: usize, len: usize) -> Vec<f64> {
    let n = points.len() / dim;
    assert!(n > 0 && len > 0);
    let mut out = Vec::with_capacity(len * dim);
    for i in 0..len {
        let s = if len == 1 { 0.0 } else { i as f64 / (len - 1) as f64 };
        let pos = s * (n - 1) as f64;
        let lo = (pos.floor() as usize).min(n - 1);
        let hi = (lo + 1).min(n - 1);
        let f = pos - lo as f64;
        for c in 0..dim {
            let a = points[lo * dim + c];
            let b = points[hi * dim + c];
            out.push(a + (b - a) * f);
        }
    }
    out
}

/// Median member length (lower middle for an even count).
pub fn median_len(members: &[&Trajectory]) -> usize {
    let mut lens: Vec<usize> = members.iter().map(|t| t.len()).collect();
    lens.sort_unstable();
    lens[(lens.len() - 1) / 2]
}

/// Resample every member to `target_len` and average pointwise.
pub fn mean_trajectory(members: &[&Trajectory], target_len: usize) -> Vec<f64> {
    tube(members, target_len).0
}

/// Pointwise mean and per-coordinate standard deviation of the resampled
/// members (population form).
pub fn tube(members: &[&Trajectory], target_len: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(!members.is_empty(), "mean of an empty cluster");
    let dim = members[0].dim;
    let resampled: Vec<Vec<f64>> = members.iter().map(|t| resample(&t.points, dim, target_len)).collect();
    let n = resampled.len() as f64;
    let mut mean = vec![0.0; target_len * dim];
    for r in &resampled {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; target_len * dim];
    for r in &resampled {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    (mean, var.into_iter().map(|s| (s / n).sqrt()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(points: &[f64]) -> Trajectory {
        Trajectory {
            unit_id: 0,
            dim: 1,
            points: points.to_vec(),
        }
    }

    #[test]
    fn resample_ramp() {
        assert_eq!(resample(&[0.0, 2.0], 1, 3), vec![0.0, 1.0, 2.0]);
        assert_eq!(resample(&[0.0, 1.0, 2.0, 3.0], 1, 2), vec![0.0, 3.0]);
    }

    #[test]
    fn mean_of_unequal_lengths() {
        let a = traj(&[0.0, 2.0]);
        let b = traj(&[0.0, 0.0, 0.0]);
        assert_eq!(mean_trajectory(&[&a, &b], 3), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn single_and_identical_members() {
        let a = traj(&[1.0, 4.0, 2.0]);
        assert_eq!(mean_trajectory(&[&a], 3), a.points);
        assert_eq!(mean_trajectory(&[&a, &a], 3), a.points);
        assert_eq!(median_len(&[&a, &traj(&[0.0]), &traj(&[0.0; 5])]), 3);
    }
}

/// Dynamic time warping with Euclidean point cost over the full window and
/// steps `(1,0)`, `(0,1)`, `(1,1)`. Sequences are row-major with `dim`
/// columns; the result is the summed cost of the cheapest monotone alignment.
pub fn dtw(p: &[f64], q: &[f64], dim: usize) -> f64 {
    let n = p.len() / dim;
    let m = q.len() / dim;
    assert!(n > 0 && m > 0, "dtw needs non-empty sequences");
    let cost = |i: usize, j: usize| -> f64 {
        let a = &p[i * dim..(i + 1) * dim];
        let b = &q[j * dim..(j + 1) * dim];
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    // two rolling rows over q
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for i in 0..n {
        for j in 0..m {
            let c = cost(i, j);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { prev[j] } else { f64::INFINITY };
                let left = if j > 0 { cur[j - 1] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 { prev[j - 1] } else { f64::INFINITY };
                up.min(left).min(diag)
            };
            cur[j] = c + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

//! Synthetic run-to-failure data in C-MAPSS text layout.
#![allow(dead_code)]

use std::path::Path;

use prognos::dataset::{write_records, RawRecord, N_SENSORS};
use rand::Rng as _;

/// Sensors that never move, as in the single-condition C-MAPSS subsets.
pub const FLAT: [usize; 6] = [0, 4, 9, 15, 17, 18];

pub struct Synthetic {
    pub train: Vec<RawRecord>,
    pub test: Vec<RawRecord>,
    pub truth: Vec<u32>,
    /// Generating failure mode of each training unit, in unit order.
    pub train_modes: Vec<usize>,
}

fn unit(rng: &mut prognos::rng::Rng, id: u32, mode: usize, life: u32, observed: u32) -> Vec<RawRecord> {
    let base: Vec<f64> = (0..N_SENSORS).map(|j| 100.0 + 10.0 * j as f64).collect();
    (1..=observed)
        .map(|c| {
            let h = (c as f64 / life as f64).powi(2);
            let mut sensors = [0.0; N_SENSORS];
            for (j, s) in sensors.iter_mut().enumerate() {
                *s = if FLAT.contains(&j) {
                    base[j]
                } else {
                    let drive = match (mode, j % 2) {
                        (0, 0) | (1, 1) => 8.0,
                        _ => 0.5,
                    };
                    base[j] + drive * h + rng.gen_range(-0.2..0.2)
                };
            }
            RawRecord {
                unit_id: id,
                cycle: c,
                op_settings: [rng.gen_range(-1e-3..1e-3), rng.gen_range(-1e-4..1e-4), 100.0],
                sensors,
            }
        })
        .collect()
}

/// `n_train` run-to-failure units and `n_test` truncated ones, alternating
/// between two failure modes with different sensor signatures.
pub fn synthetic(n_train: usize, n_test: usize, min_life: u32, max_life: u32, seed: u64) -> Synthetic {
    let mut rng = prognos::rng::stream(seed, 0);
    let mut train = Vec::new();
    let mut train_modes = Vec::new();
    for i in 0..n_train {
        let life = rng.gen_range(min_life..=max_life);
        train.extend(unit(&mut rng, i as u32 + 1, i % 2, life, life));
        train_modes.push(i % 2);
    }
    let mut test = Vec::new();
    let mut truth = Vec::new();
    for i in 0..n_test {
        let life = rng.gen_range(min_life..=max_life);
        let observed = rng.gen_range(life / 2..life);
        test.extend(unit(&mut rng, i as u32 + 1, i % 2, life, observed));
        truth.push(life - observed);
    }
    Synthetic {
        train,
        test,
        truth,
        train_modes,
    }
}

impl Synthetic {
    /// Write `train_ID.txt`, `test_ID.txt` and `RUL_ID.txt` into `dir`.
    pub fn write(&self, dir: &Path, id: &str) {
        std::fs::create_dir_all(dir).unwrap();
        std::fs::write(dir.join(format!("train_{id}.txt")), write_records(&self.train)).unwrap();
        std::fs::write(dir.join(format!("test_{id}.txt")), write_records(&self.test)).unwrap();
        let truth: String = self.truth.iter().map(|r| format!("{r}\n")).collect();
        std::fs::write(dir.join(format!("RUL_{id}.txt")), truth).unwrap();
    }
}

/// A run config small enough for a test: short windows, few epochs.
pub fn small_config(root: &Path, id: &str) -> String {
    format!(
        r#"
[dataset]
id = "{id}"
root = "{root}"

[preprocess]
ntw = 8
stride = 2

[umap]
n_neighbors = 10
epochs = 60

[cluster]
n_modes = 2
restarts = 3

[train]
epochs = 3
batch_size = 8
hidden = [4, 4]
folds = 2
learning_rate = 0.001

[reproduce]
etas = [0.0, 0.5]
lambdas = [10.0, inf]
"#,
        root = root.display()
    )
}

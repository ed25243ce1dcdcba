//! Joint loss over a batch, Adam training, gradient checking and
//! unit-level cross-validation.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{loss_ce_label, loss_hs, loss_hs_grad, loss_mono, loss_mono_grad, PROB_FLOOR};
use super::net::{backward, forward, kinks, Arch, Cache, JointModel, Prediction};
use crate::dataset::WindowSet;
use crate::eval::{MetricReport, Scored};
use crate::{rng, Error, Result};

/// Candidate `(h1, h2)` hidden sizes.
pub const HIDDEN_GRID: [(usize, usize); 5] = [(16, 16), (16, 32), (32, 32), (32, 64), (64, 64)];
/// A hidden size is skipped when its parameter count exceeds this share of
/// the training instances.
pub const MAX_PARAMS_PER_INSTANCE: f64 = 2.0 / 3.0;
/// Samples per gradient chunk; chunk gradients are summed in a fixed order.
const GRAD_CHUNK: usize = 8;

mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {t:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the RUL loss. `inf` trains a single regressor without a
    /// classifier.
    #[serde(with = "float_or_inf")]
    pub lambda: f64,
    /// Weight of the monotonicity penalty.
    pub eta: f64,
    /// Target RUL slope per cycle.
    pub zeta: f64,
    /// Half-width of the penalty dead band.
    pub a: f64,
    pub epochs: usize,
    /// Consecutive windows taken from one unit per batch segment.
    pub batch_size: usize,
    /// Segments (from distinct shuffled units) stacked into one batch.
    pub units_per_batch: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub hidden: (usize, usize),
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            eta: 0.0,
            zeta: -1.0,
            a: 0.9,
            epochs: 2000,
            batch_size: 32,
            units_per_batch: 4,
            learning_rate: 1e-4,
            seed: 42,
            hidden: (32, 32),
            folds: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !self.eta.is_finite() || self.eta < 0.0 {
            return bad(format!("eta must be finite and >= 0, got {}", self.eta));
        }
        if self.eta > 0.0 && !(self.zeta < 0.0 && self.a > 0.0 && self.a < -self.zeta) {
            return bad(format!(
                "need zeta < 0 and 0 < a < -zeta, got zeta={} a={}",
                self.zeta, self.a
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.units_per_batch == 0 || self.folds < 2 {
            return bad("epochs and batch sizes must be positive and folds >= 2".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.hidden.0 == 0 || self.hidden.1 == 0 {
            return bad("hidden sizes must be positive".into());
        }
        Ok(())
    }

    /// Number of regressors actually trained for `labelled_modes` clusters.
    pub fn effective_modes(&self, labelled_modes: usize) -> usize {
        if self.lambda.is_infinite() {
            1
        } else {
            labelled_modes.max(1)
        }
    }
}

/// One training or evaluation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub unit_id: u32,
    pub cycle: u32,
    pub x: Vec<f64>,
    pub y: f64,
    pub mode: Option<usize>,
}

/// Gather windows `idx` of `set` as samples; RUL targets are required.
pub fn samples(set: &WindowSet, idx: impl IntoIterator<Item = usize>) -> Result<Vec<Sample>> {
    idx.into_iter()
        .map(|i| {
            let w = &set.windows[i];
            let y = w.rul_target.ok_or_else(|| {
                Error::Integrity(format!(
                    "unit {} cycle {}: window has no RUL target",
                    w.unit_id, w.end_cycle
                ))
            })?;
            let mut x = Vec::with_capacity(set.ntw * set.n_sensors());
            set.fill(i, &mut x);
            Ok(Sample {
                unit_id: w.unit_id,
                cycle: w.end_cycle,
                x,
                y,
                mode: w.mode_label,
            })
        })
        .collect()
}

/// Summed loss terms. `total = ce + λ·hs + η·mono` (or `hs + η·mono` when
/// λ is infinite).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub ce: f64,
    pub hs: f64,
    pub mono: f64,
    pub total: f64,
}

/// Index pairs `(prev, cur)` of samples from one unit at consecutive cycles.
pub fn mono_pairs(batch: &[Sample]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.sort_by_key(|&i| (batch[i].unit_id, batch[i].cycle));
    order
        .windows(2)
        .filter(|w| {
            let (p, c) = (&batch[w[0]], &batch[w[1]]);
            p.unit_id == c.unit_id && c.cycle == p.cycle + 1
        })
        .map(|w| (w[0], w[1]))
        .collect()
}

struct Eval {
    caches: Vec<Cache>,
    parts: LossParts,
    d_rul: Vec<f64>,
    pairs: Vec<(usize, usize)>,
}

fn rul_weight(cfg: &TrainConfig) -> f64 {
    if cfg.lambda.is_infinite() {
        1.0
    } else {
        cfg.lambda
    }
}

fn evaluate(model: &JointModel, theta: &[f64], batch: &[Sample], cfg: &TrainConfig) -> Result<Eval> {
    let a = &model.arch;
    for s in batch {
        if s.x.len() != a.input_len() {
            return Err(Error::Shape(format!(
                "sample has {} values, expected {}",
                s.x.len(),
                a.input_len()
            )));
        }
        if a.n_modes > 1 && !s.mode.is_some_and(|m| m < a.n_modes) {
            return Err(Error::Parameter(format!(
                "unit {} cycle {}: missing or out-of-range mode label",
                s.unit_id, s.cycle
            )));
        }
    }
    let caches: Vec<Cache> = batch
        .par_iter()
        .map(|s| forward(a, theta, model.rul_offset, model.rul_scale, &s.x))
        .collect();
    let lw = rul_weight(cfg);
    let mut parts = LossParts::default();
    let mut d_rul = vec![0.0; batch.len()];
    for (i, (s, c)) in batch.iter().zip(&caches).enumerate() {
        if a.n_modes > 1 && cfg.lambda.is_finite() {
            parts.ce += loss_ce_label(&c.probs, s.mode.unwrap_or(0));
        }
        parts.hs += loss_hs(c.rul, s.y);
        d_rul[i] = lw * loss_hs_grad(c.rul, s.y);
    }
    let pairs = if cfg.eta > 0.0 { mono_pairs(batch) } else { Vec::new() };
    for &(p, c) in &pairs {
        let (yc, yp) = (caches[c].rul, caches[p].rul);
        parts.mono += loss_mono(yc, yp, cfg.zeta, cfg.a);
        let g = cfg.eta * loss_mono_grad(yc, yp, cfg.zeta, cfg.a);
        d_rul[c] += g;
        d_rul[p] -= g;
    }
    parts.total = parts.ce + lw * parts.hs + cfg.eta * parts.mono;
    Ok(Eval {
        caches,
        parts,
        d_rul,
        pairs,
    })
}

/// Value of the joint objective on `batch`.
pub fn total_loss(model: &JointModel, batch: &[Sample], cfg: &TrainConfig) -> Result<LossParts> {
    Ok(evaluate(model, &model.theta, batch, cfg)?.parts)
}

fn accumulate(model: &JointModel, theta: &[f64], batch: &[Sample], cfg: &TrainConfig, ev: &Eval) -> Vec<f64> {
    let a = &model.arch;
    let use_ce = a.n_modes > 1 && cfg.lambda.is_finite();
    let idx: Vec<usize> = (0..batch.len()).collect();
    let partial: Vec<Vec<f64>> = idx
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; theta.len()];
            for &i in chunk {
                let c = &ev.caches[i];
                let ce = use_ce.then(|| {
                    let label = batch[i].mode.unwrap_or(0);
                    let mut d = c.probs.clone();
                    if c.probs[label] >= PROB_FLOOR {
                        d[label] -= 1.0;
                    } else {
                        d.iter_mut().for_each(|v| *v = 0.0);
                    }
                    d
                });
                backward(
                    a,
                    theta,
                    model.rul_scale,
                    &batch[i].x,
                    c,
                    ev.d_rul[i],
                    ce.as_deref(),
                    &mut g,
                );
            }
            g
        })
        .collect();
    let mut grad = vec![0.0; theta.len()];
    for g in partial {
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    grad
}

/// Loss and its gradient with respect to `model.theta`.
pub fn loss_and_grad(model: &JointModel, batch: &[Sample], cfg: &TrainConfig) -> Result<(LossParts, Vec<f64>)> {
    let ev = evaluate(model, &model.theta, batch, cfg)?;
    let g = accumulate(model, &model.theta, batch, cfg, &ev);
    Ok((ev.parts, g))
}

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates whose ±step crosses a non-differentiable point.
    pub skipped: usize,
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Gradients below this magnitude are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

fn signature(model: &JointModel, theta: &[f64], batch: &[Sample], cfg: &TrainConfig) -> Result<Vec<bool>> {
    let ev = evaluate(model, theta, batch, cfg)?;
    let mut sig = Vec::new();
    for (s, c) in batch.iter().zip(&ev.caches) {
        sig.extend(kinks(c));
        sig.push(c.rul >= s.y);
        sig.extend(c.probs.iter().map(|&p| p >= PROB_FLOOR));
    }
    for &(p, c) in &ev.pairs {
        let e = ev.caches[c].rul - ev.caches[p].rul - cfg.zeta;
        sig.push(e > cfg.a);
        sig.push(e < -cfg.a);
    }
    Ok(sig)
}

/// Compare the analytic gradient against central differences with step
/// [`GRAD_CHECK_STEP`], skipping coordinates where the step would cross a
/// kink (ReLU, output clamp, loss branch or penalty band edge).
pub fn grad_check(model: &JointModel, batch: &[Sample], cfg: &TrainConfig) -> Result<GradCheck> {
    let (_, g) = loss_and_grad(model, batch, cfg)?;
    let base = signature(model, &model.theta, batch, cfg)?;
    let mut theta = model.theta.clone();
    let mut out = GradCheck {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
    };
    for j in 0..theta.len() {
        let orig = theta[j];
        theta[j] = orig + GRAD_CHECK_STEP;
        let plus = evaluate(model, &theta, batch, cfg)?.parts.total;
        let sp = signature(model, &theta, batch, cfg)?;
        theta[j] = orig - GRAD_CHECK_STEP;
        let minus = evaluate(model, &theta, batch, cfg)?.parts.total;
        let sm = signature(model, &theta, batch, cfg)?;
        theta[j] = orig;
        if sp != base || sm != base {
            out.skipped += 1;
            continue;
        }
        let fd = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
        let err = (fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(GRAD_CHECK_FLOOR);
        out.max_rel_err = out.max_rel_err.max(err);
        out.checked += 1;
    }
    Ok(out)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, theta: &mut [f64], g: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g[i] * g[i];
            theta[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Per-epoch mean loss per instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub n_params: usize,
    pub n_instances: usize,
    pub epochs: Vec<LossParts>,
    /// Epoch at which the loss became non-finite; the model holds the
    /// parameters from the end of the previous epoch.
    pub diverged_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: JointModel,
    pub log: TrainLog,
}

/// Runs of up to `len` consecutive windows within one unit, in cycle order.
fn unit_segments(set: &WindowSet, len: usize) -> Vec<std::ops::Range<usize>> {
    set.unit_runs()
        .into_iter()
        .flat_map(|r| {
            let (s, e) = (r.start, r.end);
            (s..e).step_by(len).map(move |b| b..(b + len).min(e))
        })
        .collect()
}

/// Train on every window of `set`. Windows need RUL targets and, unless a
/// single regressor is trained, mode labels in `0..n_modes`.
pub fn train(set: &WindowSet, n_modes: usize, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::Parameter("no training windows".into()));
    }
    let data = samples(set, 0..set.len())?;
    let n = data.len() as f64;
    let mean = data.iter().map(|s| s.y).sum::<f64>() / n;
    let std = (data.iter().map(|s| (s.y - mean).powi(2)).sum::<f64>() / n)
        .sqrt()
        .max(1.0);
    let arch = Arch {
        ntw: set.ntw,
        n_sensors: set.n_sensors(),
        n_modes: cfg.effective_modes(n_modes),
        h1: cfg.hidden.0,
        h2: cfg.hidden.1,
    };
    let mut model = JointModel::init(arch, mean, std, cfg.seed);
    let mut log = TrainLog {
        n_params: model.n_params(),
        n_instances: data.len(),
        epochs: Vec::with_capacity(cfg.epochs),
        diverged_at: None,
    };
    log::info!(
        "training {} parameters on {} windows ({} modes, lambda {}, eta {})",
        log.n_params,
        log.n_instances,
        arch.n_modes,
        cfg.lambda,
        cfg.eta
    );
    let mut segments = unit_segments(set, cfg.batch_size);
    let mut adam = Adam::new(model.n_params(), cfg.learning_rate);
    let mut order_rng = rng::stream(cfg.seed, 1);
    for epoch in 0..cfg.epochs {
        let snapshot = model.theta.clone();
        segments.shuffle(&mut order_rng);
        let mut sum = LossParts::default();
        let mut failed = false;
        for group in segments.chunks(cfg.units_per_batch) {
            let batch: Vec<Sample> = group.iter().flat_map(|r| data[r.clone()].iter().cloned()).collect();
            let (parts, g) = loss_and_grad(&model, &batch, cfg)?;
            if !parts.total.is_finite() || g.iter().any(|v| !v.is_finite()) {
                failed = true;
                break;
            }
            adam.step(&mut model.theta, &g);
            sum.ce += parts.ce;
            sum.hs += parts.hs;
            sum.mono += parts.mono;
            sum.total += parts.total;
        }
        if failed || model.theta.iter().any(|v| !v.is_finite()) {
            log::warn!("loss diverged in epoch {epoch}; keeping parameters from the previous epoch");
            model.theta = snapshot;
            log.diverged_at = Some(epoch);
            break;
        }
        let per = LossParts {
            ce: sum.ce / n,
            hs: sum.hs / n,
            mono: sum.mono / n,
            total: sum.total / n,
        };
        if epoch % 100 == 0 || epoch + 1 == cfg.epochs {
            log::info!(
                "epoch {epoch}: loss {:.6} (ce {:.5}, hs {:.5}, mono {:.5})",
                per.total,
                per.ce,
                per.hs,
                per.mono
            );
        }
        log.epochs.push(per);
    }
    Ok(Trained { model, log })
}

/// Prediction for one window, keyed by unit and window end cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedWindow {
    pub unit_id: u32,
    pub cycle: u32,
    pub true_rul: Option<f64>,
    pub prediction: Prediction,
}

/// Predictions for consecutive windows of one unit, in the given order.
pub fn predict_sequence(model: &JointModel, windows: &[Vec<f64>]) -> Result<Vec<Prediction>> {
    windows.iter().map(|x| model.predict(x)).collect()
}

/// Predict every window of `set`, in window order.
pub fn predict_set(model: &JointModel, set: &WindowSet) -> Result<Vec<PredictedWindow>> {
    (0..set.len())
        .into_par_iter()
        .map(|i| {
            let w = &set.windows[i];
            let mut x = Vec::with_capacity(set.ntw * set.n_sensors());
            set.fill(i, &mut x);
            Ok(PredictedWindow {
                unit_id: w.unit_id,
                cycle: w.end_cycle,
                true_rul: w.rul_target,
                prediction: model.predict(&x)?,
            })
        })
        .collect()
}

/// Metric report over predictions that carry a true RUL.
pub fn score(preds: &[PredictedWindow]) -> Result<MetricReport> {
    let scored: Vec<Scored> = preds
        .iter()
        .filter_map(|p| {
            p.true_rul.map(|y| Scored {
                unit_id: p.unit_id,
                cycle: p.cycle,
                y_true: y,
                y_pred: p.prediction.rul,
            })
        })
        .collect();
    MetricReport::from_scored(&scored)
}

/// Split unit ids into `k` shuffled folds of near-equal size.
pub fn fold_units(unit_ids: &[u32], k: usize, seed: u64) -> Result<Vec<Vec<u32>>> {
    if k < 2 || k > unit_ids.len() {
        return Err(Error::Parameter(format!(
            "cannot split {} units into {k} folds",
            unit_ids.len()
        )));
    }
    let mut ids = unit_ids.to_vec();
    ids.sort_unstable();
    ids.shuffle(&mut rng::stream(seed, 2));
    let mut folds = vec![Vec::new(); k];
    for (i, u) in ids.into_iter().enumerate() {
        folds[i % k].push(u);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub validation_units: Vec<u32>,
    pub trained: Trained,
    pub validation: MetricReport,
}

/// Train one model per fold on the other folds' units and score it on the
/// held-out units.
pub fn cross_validate(set: &WindowSet, n_modes: usize, cfg: &TrainConfig) -> Result<Vec<FoldOutcome>> {
    let folds = fold_units(&set.unit_ids(), cfg.folds, cfg.seed)?;
    folds
        .iter()
        .enumerate()
        .map(|(f, val)| {
            let train_ids: Vec<u32> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, u)| u.iter().copied())
                .collect();
            log::info!("fold {}/{}: {} training units", f + 1, folds.len(), train_ids.len());
            let trained = train(&set.subset_units(&train_ids), n_modes, cfg)?;
            let preds = predict_set(&trained.model, &set.subset_units(val))?;
            Ok(FoldOutcome {
                fold: f,
                validation_units: val.clone(),
                validation: score(&preds)?,
                trained,
            })
        })
        .collect()
}

/// Grid entries whose parameter count stays within
/// [`MAX_PARAMS_PER_INSTANCE`] of the training instance count.
pub fn eligible_hidden(
    ntw: usize,
    n_sensors: usize,
    n_modes: usize,
    n_instances: usize,
) -> Vec<((usize, usize), usize)> {
    HIDDEN_GRID
        .iter()
        .map(|&(h1, h2)| {
            let a = Arch {
                ntw,
                n_sensors,
                n_modes,
                h1,
                h2,
            };
            ((h1, h2), a.n_params())
        })
        .filter(|&(_, p)| p as f64 <= MAX_PARAMS_PER_INSTANCE * n_instances as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenSearch {
    /// `(hidden, parameter count, mean validation RMSE)` per eligible size.
    pub candidates: Vec<((usize, usize), usize, f64)>,
    pub chosen: (usize, usize),
}

/// Pick the eligible hidden size with the lowest mean cross-validated RMSE.
pub fn select_hidden(set: &WindowSet, n_modes: usize, cfg: &TrainConfig) -> Result<HiddenSearch> {
    let v = cfg.effective_modes(n_modes);
    let per_fold = set.len() * (cfg.folds - 1) / cfg.folds;
    let eligible = eligible_hidden(set.ntw, set.n_sensors(), v, per_fold);
    if eligible.is_empty() {
        return Err(Error::Parameter(format!(
            "every hidden size exceeds {:.3} parameters per training instance ({per_fold} instances)",
            MAX_PARAMS_PER_INSTANCE
        )));
    }
    let mut candidates = Vec::new();
    for (hidden, params) in eligible {
        let folds = cross_validate(set, n_modes, &TrainConfig { hidden, ..*cfg })?;
        let rmse = folds.iter().map(|f| f.validation.rmse).sum::<f64>() / folds.len() as f64;
        candidates.push((hidden, params, rmse));
    }
    let chosen = candidates
        .iter()
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .map(|c| c.0)
        .expect("non-empty");
    Ok(HiddenSearch { candidates, chosen })
}

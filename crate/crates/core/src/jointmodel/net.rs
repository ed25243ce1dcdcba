//! Classifier and LSTM regressors over one flat parameter vector, with
//! hand-written reverse-mode gradients.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

/// Layer sizes of the joint model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub ntw: usize,
    pub n_sensors: usize,
    pub n_modes: usize,
    /// Classifier first hidden layer and LSTM state size.
    pub h1: usize,
    /// Classifier second hidden layer and regressor dense layer.
    pub h2: usize,
}

impl Arch {
    pub fn input_len(&self) -> usize {
        self.ntw * self.n_sensors
    }

    /// The classifier is bypassed when there is a single mode.
    pub fn classifier_len(&self) -> usize {
        if self.n_modes <= 1 {
            return 0;
        }
        let (h1, h2, v) = (self.h1, self.h2, self.n_modes);
        h1 * self.input_len() + h1 + h2 * h1 + h2 + v * h2 + v
    }

    pub fn regressor_len(&self) -> usize {
        let (h1, h2, s) = (self.h1, self.h2, self.n_sensors);
        4 * h1 * s + 4 * h1 * h1 + 4 * h1 + h2 * h1 + h2 + h2 + 1
    }

    pub fn n_params(&self) -> usize {
        self.classifier_len() + self.n_modes * self.regressor_len()
    }

    fn regressor_offset(&self, mode: usize) -> usize {
        self.classifier_len() + mode * self.regressor_len()
    }
}

/// Parameter slice offsets of one regressor block.
struct RegLayout {
    wx: usize,
    wh: usize,
    b: usize,
    dw: usize,
    db: usize,
    ow: usize,
    ob: usize,
}

impl RegLayout {
    fn new(a: &Arch, base: usize) -> Self {
        let g = 4 * a.h1;
        let wx = base;
        let wh = wx + g * a.n_sensors;
        let b = wh + g * a.h1;
        let dw = b + g;
        let db = dw + a.h2 * a.h1;
        let ow = db + a.h2;
        let ob = ow + a.h2;
        Self {
            wx,
            wh,
            b,
            dw,
            db,
            ow,
            ob,
        }
    }
}

struct ClsLayout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
}

impl ClsLayout {
    fn new(a: &Arch) -> Self {
        let w1 = 0;
        let b1 = w1 + a.h1 * a.input_len();
        let w2 = b1 + a.h1;
        let b2 = w2 + a.h2 * a.h1;
        let w3 = b2 + a.h2;
        let b3 = w3 + a.n_modes * a.h2;
        Self { w1, b1, w2, b2, w3, b3 }
    }
}

/// `y = W x + b` for row-major `W` (`out × in`).
fn affine(theta: &[f64], w: usize, b: usize, x: &[f64], out: usize, y: &mut [f64]) {
    let n = x.len();
    for (o, yo) in y.iter_mut().enumerate().take(out) {
        let row = &theta[w + o * n..w + (o + 1) * n];
        *yo = theta[b + o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Accumulate `dW += dy xᵀ`, `db += dy` and, if asked, `dx = Wᵀ dy`.
fn affine_back(theta: &[f64], grad: &mut [f64], w: usize, b: usize, x: &[f64], dy: &[f64], dx: Option<&mut [f64]>) {
    let n = x.len();
    for (o, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        grad[b + o] += d;
        for (g, xi) in grad[w + o * n..w + (o + 1) * n].iter_mut().zip(x) {
            *g += d * xi;
        }
    }
    if let Some(dx) = dx {
        dx.iter_mut().for_each(|v| *v = 0.0);
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (v, wv) in dx.iter_mut().zip(&theta[w + o * n..w + (o + 1) * n]) {
                *v += d * wv;
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ClsCache {
    a1: Vec<f64>,
    a2: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct RegCache {
    /// Hidden states `h_0..h_T`, `(T+1) × h1`.
    h: Vec<f64>,
    c: Vec<f64>,
    /// Activated gates `[i f g o]` per step, `T × 4h1`.
    gates: Vec<f64>,
    u: Vec<f64>,
    /// Pre-clamp output `offset + scale · z`.
    pub pre: f64,
    pub out: f64,
}

/// Forward values and everything the backward pass needs for one window.
#[derive(Debug, Clone, Default)]
pub(crate) struct Cache {
    pub cls: Option<ClsCache>,
    pub reg: Vec<RegCache>,
    pub probs: Vec<f64>,
    pub rul: f64,
}

/// Joint model parameters plus the fixed output affine map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointModel {
    pub arch: Arch,
    /// Regressor outputs are `max(0, rul_offset + rul_scale · z)`.
    pub rul_offset: f64,
    pub rul_scale: f64,
    pub theta: Vec<f64>,
}

/// Mode probabilities, per-mode RULs and their weighted sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub per_mode: Vec<f64>,
    pub rul: f64,
}

impl JointModel {
    /// Glorot-uniform weights, zero biases except the LSTM forget gate (1).
    pub fn init(arch: Arch, rul_offset: f64, rul_scale: f64, seed: u64) -> Self {
        let mut theta = vec![0.0; arch.n_params()];
        let mut r = rng::stream(seed, 0x1e57);
        let mut fill = |theta: &mut [f64], start: usize, rows: usize, cols: usize| {
            let lim = (6.0 / (rows + cols) as f64).sqrt();
            for v in &mut theta[start..start + rows * cols] {
                *v = r.gen_range(-lim..lim);
            }
        };
        if arch.n_modes > 1 {
            let l = ClsLayout::new(&arch);
            fill(&mut theta, l.w1, arch.h1, arch.input_len());
            fill(&mut theta, l.w2, arch.h2, arch.h1);
            fill(&mut theta, l.w3, arch.n_modes, arch.h2);
        }
        for m in 0..arch.n_modes {
            let l = RegLayout::new(&arch, arch.regressor_offset(m));
            let g = 4 * arch.h1;
            fill(&mut theta, l.wx, g, arch.n_sensors);
            fill(&mut theta, l.wh, g, arch.h1);
            theta[l.b + arch.h1..l.b + 2 * arch.h1]
                .iter_mut()
                .for_each(|v| *v = 1.0);
            fill(&mut theta, l.dw, arch.h2, arch.h1);
            fill(&mut theta, l.ow, 1, arch.h2);
        }
        Self {
            arch,
            rul_offset,
            rul_scale,
            theta,
        }
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.arch.input_len() {
            return Err(Error::Shape(format!(
                "window has {} values, model expects {} x {}",
                x.len(),
                self.arch.ntw,
                self.arch.n_sensors
            )));
        }
        let c = forward(&self.arch, &self.theta, self.rul_offset, self.rul_scale, x);
        Ok(Prediction {
            per_mode: c.reg.iter().map(|r| r.out).collect(),
            probs: c.probs,
            rul: c.rul,
        })
    }
}

fn forward_cls(a: &Arch, theta: &[f64], x: &[f64]) -> ClsCache {
    let l = ClsLayout::new(a);
    let mut a1 = vec![0.0; a.h1];
    affine(theta, l.w1, l.b1, x, a.h1, &mut a1);
    a1.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut a2 = vec![0.0; a.h2];
    affine(theta, l.w2, l.b2, &a1, a.h2, &mut a2);
    a2.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut logits = vec![0.0; a.n_modes];
    affine(theta, l.w3, l.b3, &a2, a.n_modes, &mut logits);
    ClsCache {
        a1,
        a2,
        probs: softmax(&logits),
    }
}

fn forward_reg(a: &Arch, theta: &[f64], mode: usize, offset: f64, scale: f64, x: &[f64]) -> RegCache {
    let l = RegLayout::new(a, a.regressor_offset(mode));
    let (h, s, t_len) = (a.h1, a.n_sensors, a.ntw);
    let g = 4 * h;
    let mut hs = vec![0.0; (t_len + 1) * h];
    let mut cs = vec![0.0; (t_len + 1) * h];
    let mut gates = vec![0.0; t_len * g];
    let mut z = vec![0.0; g];
    for t in 0..t_len {
        let xt = &x[t * s..(t + 1) * s];
        affine(theta, l.wx, l.b, xt, g, &mut z);
        let hp = &hs[t * h..(t + 1) * h];
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &theta[l.wh + o * h..l.wh + (o + 1) * h];
            *zo += row.iter().zip(hp).map(|(a, b)| a * b).sum::<f64>();
        }
        let gt = &mut gates[t * g..(t + 1) * g];
        for k in 0..h {
            gt[k] = sigmoid(z[k]);
            gt[h + k] = sigmoid(z[h + k]);
            gt[2 * h + k] = z[2 * h + k].tanh();
            gt[3 * h + k] = sigmoid(z[3 * h + k]);
        }
        for k in 0..h {
            let c = gt[h + k] * cs[t * h + k] + gt[k] * gt[2 * h + k];
            cs[(t + 1) * h + k] = c;
            hs[(t + 1) * h + k] = gt[3 * h + k] * c.tanh();
        }
    }
    let h_last = &hs[t_len * h..];
    let mut u = vec![0.0; a.h2];
    affine(theta, l.dw, l.db, h_last, a.h2, &mut u);
    u.iter_mut().for_each(|v| *v = v.max(0.0));
    let zout = theta[l.ob] + theta[l.ow..l.ow + a.h2].iter().zip(&u).map(|(w, v)| w * v).sum::<f64>();
    let pre = offset + scale * zout;
    RegCache {
        h: hs,
        c: cs,
        gates,
        u,
        pre,
        out: pre.max(0.0),
    }
}

pub(crate) fn forward(a: &Arch, theta: &[f64], offset: f64, scale: f64, x: &[f64]) -> Cache {
    assert_eq!(x.len(), a.input_len(), "window shape does not match the model");
    let reg: Vec<RegCache> = (0..a.n_modes)
        .map(|m| forward_reg(a, theta, m, offset, scale, x))
        .collect();
    let cls = (a.n_modes > 1).then(|| forward_cls(a, theta, x));
    let probs = cls.as_ref().map_or_else(|| vec![1.0], |c| c.probs.clone());
    let rul = probs.iter().zip(&reg).map(|(p, r)| p * r.out).sum();
    Cache { cls, reg, probs, rul }
}

fn backward_cls(a: &Arch, theta: &[f64], x: &[f64], c: &ClsCache, dlogits: &[f64], grad: &mut [f64]) {
    let l = ClsLayout::new(a);
    let mut da2 = vec![0.0; a.h2];
    affine_back(theta, grad, l.w3, l.b3, &c.a2, dlogits, Some(&mut da2));
    da2.iter_mut().zip(&c.a2).for_each(|(d, v)| {
        if *v <= 0.0 {
            *d = 0.0
        }
    });
    let mut da1 = vec![0.0; a.h1];
    affine_back(theta, grad, l.w2, l.b2, &c.a1, &da2, Some(&mut da1));
    da1.iter_mut().zip(&c.a1).for_each(|(d, v)| {
        if *v <= 0.0 {
            *d = 0.0
        }
    });
    affine_back(theta, grad, l.w1, l.b1, x, &da1, None);
}

#[allow(clippy::too_many_arguments)]
fn backward_reg(
    a: &Arch,
    theta: &[f64],
    mode: usize,
    scale: f64,
    x: &[f64],
    c: &RegCache,
    dout: f64,
    grad: &mut [f64],
) {
    if c.pre <= 0.0 || dout == 0.0 {
        return;
    }
    let l = RegLayout::new(a, a.regressor_offset(mode));
    let (h, s, t_len) = (a.h1, a.n_sensors, a.ntw);
    let g = 4 * h;
    let dz = dout * scale;
    grad[l.ob] += dz;
    let mut du = vec![0.0; a.h2];
    for k in 0..a.h2 {
        grad[l.ow + k] += dz * c.u[k];
        du[k] = if c.u[k] > 0.0 { dz * theta[l.ow + k] } else { 0.0 };
    }
    let mut dh = vec![0.0; h];
    affine_back(theta, grad, l.dw, l.db, &c.h[t_len * h..], &du, Some(&mut dh));
    let mut dc = vec![0.0; h];
    let mut dzg = vec![0.0; g];
    for t in (0..t_len).rev() {
        let gt = &c.gates[t * g..(t + 1) * g];
        let c_prev = &c.c[t * h..(t + 1) * h];
        let c_cur = &c.c[(t + 1) * h..(t + 2) * h];
        for k in 0..h {
            let (i, f, gg, o) = (gt[k], gt[h + k], gt[2 * h + k], gt[3 * h + k]);
            let tc = c_cur[k].tanh();
            let d_o = dh[k] * tc;
            let dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
            dzg[k] = dck * gg * i * (1.0 - i);
            dzg[h + k] = dck * c_prev[k] * f * (1.0 - f);
            dzg[2 * h + k] = dck * i * (1.0 - gg * gg);
            dzg[3 * h + k] = d_o * o * (1.0 - o);
            dc[k] = dck * f;
        }
        let xt = &x[t * s..(t + 1) * s];
        let h_prev = &c.h[t * h..(t + 1) * h];
        affine_back(theta, grad, l.wx, l.b, xt, &dzg, None);
        // recurrent weights share the gate bias already accumulated above
        for (o, &d) in dzg.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (gv, hv) in grad[l.wh + o * h..l.wh + (o + 1) * h].iter_mut().zip(h_prev) {
                *gv += d * hv;
            }
        }
        if t > 0 {
            dh.iter_mut().for_each(|v| *v = 0.0);
            for (o, &d) in dzg.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (v, wv) in dh.iter_mut().zip(&theta[l.wh + o * h..l.wh + (o + 1) * h]) {
                    *v += d * wv;
                }
            }
        }
    }
}

/// Backpropagate `dL/dŷ` and, for the classifier, `dL/dlogits` from the
/// cross-entropy term into `grad`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    a: &Arch,
    theta: &[f64],
    scale: f64,
    x: &[f64],
    cache: &Cache,
    d_rul: f64,
    d_logits_ce: Option<&[f64]>,
    grad: &mut [f64],
) {
    for (m, rc) in cache.reg.iter().enumerate() {
        backward_reg(a, theta, m, scale, x, rc, d_rul * cache.probs[m], grad);
    }
    if let Some(cc) = &cache.cls {
        // dŷ/dp_ν = r_ν, pushed through the softmax Jacobian
        let gp: Vec<f64> = cache.reg.iter().map(|r| d_rul * r.out).collect();
        let mean: f64 = cache.probs.iter().zip(&gp).map(|(p, g)| p * g).sum();
        let mut dl: Vec<f64> = cache.probs.iter().zip(&gp).map(|(p, g)| p * (g - mean)).collect();
        if let Some(ce) = d_logits_ce {
            dl.iter_mut().zip(ce).for_each(|(d, c)| *d += c);
        }
        backward_cls(a, theta, x, cc, &dl, grad);
    }
}

/// Branch decisions taken by the forward pass (ReLU signs, output clamps).
pub(crate) fn kinks(cache: &Cache) -> Vec<bool> {
    let mut k = Vec::new();
    if let Some(c) = &cache.cls {
        k.extend(c.a1.iter().chain(&c.a2).map(|v| *v > 0.0));
    }
    for r in &cache.reg {
        k.extend(r.u.iter().map(|v| *v > 0.0));
        k.push(r.pre > 0.0);
    }
    k
}

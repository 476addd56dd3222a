//! Recurrent Q-network: rectified linear encoder, GRU cell, linear head.
//!
//! All parameters live in one flat vector so the optimizer, the gradient
//! checker and checkpoints can treat them uniformly.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::network::{Observation, NODE_COUNT, REWARDS};
use crate::seed;

pub const INPUT: usize = NODE_COUNT * REWARDS.len();
pub const ENCODED: usize = 15;
pub const HIDDEN: usize = 15;
pub const ACTIONS: usize = NODE_COUNT;

const W_ENC: usize = 0;
const B_ENC: usize = W_ENC + ENCODED * INPUT;
const W_IH: usize = B_ENC + ENCODED;
const B_IH: usize = W_IH + 3 * HIDDEN * ENCODED;
const W_HH: usize = B_IH + 3 * HIDDEN;
const B_HH: usize = W_HH + 3 * HIDDEN * HIDDEN;
const W_OUT: usize = B_HH + 3 * HIDDEN;
const B_OUT: usize = W_OUT + ACTIONS * HIDDEN;
pub const PARAM_COUNT: usize = B_OUT + ACTIONS;

/// Named parameter blocks as `(name, offset, rows, cols)`.
pub const LAYOUT: [(&str, usize, usize, usize); 8] = [
    ("encoder.weight", W_ENC, ENCODED, INPUT),
    ("encoder.bias", B_ENC, ENCODED, 1),
    ("gru.weight_ih", W_IH, 3 * HIDDEN, ENCODED),
    ("gru.bias_ih", B_IH, 3 * HIDDEN, 1),
    ("gru.weight_hh", W_HH, 3 * HIDDEN, HIDDEN),
    ("gru.bias_hh", B_HH, 3 * HIDDEN, 1),
    ("head.weight", W_OUT, ACTIONS, HIDDEN),
    ("head.bias", B_OUT, ACTIONS, 1),
];

pub type Features = [f64; INPUT];
pub type QValues = [f64; ACTIONS];
pub type Hidden = [f64; HIDDEN];

/// Encoded observation as fed to the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Input {
    pub features: Features,
    pub mask: [bool; ACTIONS],
}

impl From<&Observation> for Input {
    fn from(o: &Observation) -> Self {
        Input { features: o.flat(), mask: o.mask }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    params: Vec<f64>,
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    active: Vec<usize>,
    x: Features,
    pre: [f64; ENCODED],
    enc: [f64; ENCODED],
    h_prev: Hidden,
    r: Hidden,
    z: Hidden,
    n: Hidden,
    hn: Hidden,
    h: Hidden,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gradient corruption used to confirm the gradient checker can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Backward {
    Exact,
    #[allow(dead_code)]
    DropRecurrentPath,
}

impl QNetwork {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization per block.
    pub fn new(seed: u64) -> Self {
        let mut rng = seed::rng_at(seed, &[seed::label("qnetwork-init")]);
        let mut params = vec![0.0; PARAM_COUNT];
        for &(_, offset, rows, cols) in &LAYOUT {
            let fan_in = match offset {
                B_ENC => INPUT,
                B_IH | B_HH => HIDDEN,
                B_OUT => HIDDEN,
                _ => cols,
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[offset..offset + rows * cols] {
                *p = rng.random_range(-bound..bound);
            }
        }
        QNetwork { params }
    }

    pub fn zeros() -> Self {
        QNetwork { params: vec![0.0; PARAM_COUNT] }
    }

    pub fn from_params(params: Vec<f64>) -> Option<Self> {
        (params.len() == PARAM_COUNT).then_some(QNetwork { params })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn initial_hidden() -> Hidden {
        [0.0; HIDDEN]
    }

    /// Raw Q-values (unmasked) for one step; advances `hidden`.
    pub fn step(&self, hidden: &mut Hidden, x: &Features) -> QValues {
        let (q, cache) = self.step_cached(hidden, x);
        *hidden = cache.h;
        q
    }

    /// Q-values with unreachable actions set to negative infinity.
    pub fn forward_q(&self, hidden: &mut Hidden, input: &Input) -> QValues {
        mask_q(self.step(hidden, &input.features), &input.mask)
    }

    pub(crate) fn step_cached(&self, hidden: &Hidden, x: &Features) -> (QValues, StepCache) {
        let p = &self.params;
        let active: Vec<usize> = (0..INPUT).filter(|&j| x[j] != 0.0).collect();
        let mut pre = [0.0; ENCODED];
        let mut enc = [0.0; ENCODED];
        for i in 0..ENCODED {
            let row = &p[W_ENC + i * INPUT..W_ENC + (i + 1) * INPUT];
            pre[i] = p[B_ENC + i] + active.iter().map(|&j| row[j] * x[j]).sum::<f64>();
            enc[i] = pre[i].max(0.0);
        }
        let mut gi = [0.0; 3 * HIDDEN];
        let mut gh = [0.0; 3 * HIDDEN];
        for k in 0..3 * HIDDEN {
            let wi = &p[W_IH + k * ENCODED..W_IH + (k + 1) * ENCODED];
            let wh = &p[W_HH + k * HIDDEN..W_HH + (k + 1) * HIDDEN];
            gi[k] = p[B_IH + k] + wi.iter().zip(&enc).map(|(w, e)| w * e).sum::<f64>();
            gh[k] = p[B_HH + k] + wh.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>();
        }
        let mut r = [0.0; HIDDEN];
        let mut z = [0.0; HIDDEN];
        let mut n = [0.0; HIDDEN];
        let mut hn = [0.0; HIDDEN];
        let mut h = [0.0; HIDDEN];
        for i in 0..HIDDEN {
            r[i] = sigmoid(gi[i] + gh[i]);
            z[i] = sigmoid(gi[HIDDEN + i] + gh[HIDDEN + i]);
            hn[i] = gh[2 * HIDDEN + i];
            n[i] = (gi[2 * HIDDEN + i] + r[i] * hn[i]).tanh();
            h[i] = (1.0 - z[i]) * n[i] + z[i] * hidden[i];
        }
        let mut q = [0.0; ACTIONS];
        for (a, qa) in q.iter_mut().enumerate() {
            let w = &p[W_OUT + a * HIDDEN..W_OUT + (a + 1) * HIDDEN];
            *qa = p[B_OUT + a] + w.iter().zip(&h).map(|(w, h)| w * h).sum::<f64>();
        }
        let cache = StepCache { active, x: *x, pre, enc, h_prev: *hidden, r, z, n, hn, h };
        (q, cache)
    }

    /// Runs a whole episode from a zero hidden state, returning raw
    /// Q-values and per-step caches.
    pub(crate) fn unroll(&self, inputs: &[Features]) -> (Vec<QValues>, Vec<StepCache>) {
        let mut hidden = Self::initial_hidden();
        let mut qs = Vec::with_capacity(inputs.len());
        let mut caches = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (q, c) = self.step_cached(&hidden, x);
            hidden = c.h;
            qs.push(q);
            caches.push(c);
        }
        (qs, caches)
    }

    /// Raw Q-values for a whole episode, without caches.
    pub fn unroll_q(&self, inputs: &[Features]) -> Vec<QValues> {
        let mut hidden = Self::initial_hidden();
        inputs.iter().map(|x| self.step(&mut hidden, x)).collect()
    }

    /// Backpropagation through time. `dq[t]` is dLoss/dQ at step t;
    /// gradients are accumulated into `grad`.
    pub(crate) fn backward(&self, caches: &[StepCache], dq: &[QValues], grad: &mut [f64], mode: Backward) {
        let p = &self.params;
        let mut dh_next = [0.0; HIDDEN];
        for (c, dqt) in caches.iter().zip(dq).rev() {
            let mut dh = dh_next;
            for (a, &g) in dqt.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grad[B_OUT + a] += g;
                for i in 0..HIDDEN {
                    grad[W_OUT + a * HIDDEN + i] += g * c.h[i];
                    dh[i] += g * p[W_OUT + a * HIDDEN + i];
                }
            }

            let mut dgi = [0.0; 3 * HIDDEN];
            let mut dgh = [0.0; 3 * HIDDEN];
            let mut dh_prev = [0.0; HIDDEN];
            for i in 0..HIDDEN {
                let dn = dh[i] * (1.0 - c.z[i]);
                let dz = dh[i] * (c.h_prev[i] - c.n[i]);
                dh_prev[i] = dh[i] * c.z[i];
                let dn_pre = dn * (1.0 - c.n[i] * c.n[i]);
                let dr = dn_pre * c.hn[i];
                let dr_pre = dr * c.r[i] * (1.0 - c.r[i]);
                let dz_pre = dz * c.z[i] * (1.0 - c.z[i]);
                dgi[i] = dr_pre;
                dgi[HIDDEN + i] = dz_pre;
                dgi[2 * HIDDEN + i] = dn_pre;
                dgh[i] = dr_pre;
                dgh[HIDDEN + i] = dz_pre;
                dgh[2 * HIDDEN + i] = dn_pre * c.r[i];
            }

            let mut denc = [0.0; ENCODED];
            for k in 0..3 * HIDDEN {
                grad[B_IH + k] += dgi[k];
                grad[B_HH + k] += dgh[k];
                for j in 0..ENCODED {
                    grad[W_IH + k * ENCODED + j] += dgi[k] * c.enc[j];
                    denc[j] += dgi[k] * p[W_IH + k * ENCODED + j];
                }
                for j in 0..HIDDEN {
                    grad[W_HH + k * HIDDEN + j] += dgh[k] * c.h_prev[j];
                    dh_prev[j] += dgh[k] * p[W_HH + k * HIDDEN + j];
                }
            }

            for i in 0..ENCODED {
                if c.pre[i] <= 0.0 {
                    continue;
                }
                grad[B_ENC + i] += denc[i];
                for &j in &c.active {
                    grad[W_ENC + i * INPUT + j] += denc[i] * c.x[j];
                }
            }
            dh_next = match mode {
                Backward::Exact => dh_prev,
                Backward::DropRecurrentPath => [0.0; HIDDEN],
            };
        }
    }
}

pub fn mask_q(mut q: QValues, mask: &[bool; ACTIONS]) -> QValues {
    for (v, &m) in q.iter_mut().zip(mask) {
        if !m {
            *v = f64::NEG_INFINITY;
        }
    }
    q
}

/// Index of the largest reachable Q-value; ties go to the smallest index.
pub fn masked_argmax(q: &QValues, mask: &[bool; ACTIONS]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for a in (0..ACTIONS).filter(|&a| mask[a]) {
        if best.is_none_or(|b| q[a] > q[b]) {
            best = Some(a);
        }
    }
    best
}

pub fn masked_max(q: &QValues, mask: &[bool; ACTIONS]) -> Option<f64> {
    masked_argmax(q, mask).map(|a| q[a])
}

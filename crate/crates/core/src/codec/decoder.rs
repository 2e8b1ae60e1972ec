//! Sum-product decoding on the Tanner graphs of the concatenated code.
//!
//! Check-node arithmetic runs in the log-tanh domain: an LLR of magnitude `x`
//! is carried as `ln tanh(x/2) ≤ 0`, the check rule becomes a sum, and
//! leave-one-out sums come from forward and backward partial sums. Both maps
//! are written with `expm1`/`ln1p` so they stay accurate for large and small
//! magnitudes alike.

use serde::{Deserialize, Serialize};

use super::graph::SparseBipartiteGraph;

/// Magnitude limit for channel values and variable-to-check messages.
pub const LLR_CLIP: f64 = 50.0;

/// Message change below which decoding has reached a fixed point.
const FIXED_POINT_TOLERANCE: f64 = 1e-9;

#[inline]
fn to_log_tanh(x: f64) -> f64 {
    -(2.0 / x.exp_m1()).ln_1p()
}

#[inline]
fn from_log_tanh(l: f64) -> f64 {
    let t = (-l).exp_m1();
    if t > 0.0 {
        (2.0 / t).ln_1p()
    } else {
        f64::INFINITY
    }
}

#[inline]
pub(crate) fn clip(x: f64) -> f64 {
    x.clamp(-LLR_CLIP, LLR_CLIP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    pub inner_iters: usize,
    pub outer_iters: usize,
    /// Global iterations of the joint schedule.
    pub joint_iters: usize,
    /// Stop a stage once its messages no longer change (or, for an LDPC
    /// outer code, once every check is satisfied).
    pub early_stop: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig { inner_iters: 100, outer_iters: 100, joint_iters: 100, early_stop: true }
    }
}

/// Message buffers for one graph, indexed by edge id.
#[derive(Debug, Clone)]
pub(crate) struct SpState {
    c2v: Vec<f64>,
    v2c_log: Vec<f64>,
    v2c_neg: Vec<bool>,
    v2c_mag: Vec<f64>,
    prefix: Vec<f64>,
}

impl SpState {
    pub(crate) fn new(graph: &SparseBipartiteGraph) -> Self {
        let e = graph.edge_count();
        SpState {
            c2v: vec![0.0; e],
            v2c_log: vec![0.0; e],
            v2c_neg: vec![false; e],
            v2c_mag: vec![0.0; e],
            prefix: Vec::new(),
        }
    }

    /// Variable update: each edge gets its prior plus every other incoming
    /// check message.
    pub(crate) fn vn_pass(&mut self, g: &SparseBipartiteGraph, prior: &[f64]) {
        for (i, &p) in prior.iter().enumerate() {
            let edges = g.vn_edges(i);
            let total: f64 = p + edges.iter().map(|&e| self.c2v[e as usize]).sum::<f64>();
            for &e in edges {
                let e = e as usize;
                let v = clip(total - self.c2v[e]);
                self.v2c_mag[e] = v.abs();
                self.v2c_log[e] = to_log_tanh(v.abs());
                self.v2c_neg[e] = v < 0.0;
            }
        }
    }

    /// Check update, optionally with a per-check observation. Returns the
    /// largest change of any check-to-variable message. When `audit` is
    /// given, records the largest amount by which an output magnitude exceeds
    /// the observation magnitude or the smallest other incoming magnitude.
    pub(crate) fn cn_pass(&mut self, g: &SparseBipartiteGraph, obs: Option<&[f64]>, mut audit: Option<&mut f64>) -> f64 {
        let mut change: f64 = 0.0;
        for j in 0..g.cn_count() {
            let range = g.cn_edge_range(j);
            let (obs_log, obs_neg, obs_mag) = match obs {
                Some(o) => {
                    let v = clip(o[j]);
                    (to_log_tanh(v.abs()), v < 0.0, v.abs())
                }
                None => (0.0, false, f64::INFINITY),
            };
            self.prefix.clear();
            let mut acc = obs_log;
            let mut parity = obs_neg;
            for e in range.clone() {
                self.prefix.push(acc);
                acc += self.v2c_log[e];
                parity ^= self.v2c_neg[e];
            }
            let mut suffix = 0.0;
            for (k, e) in range.clone().enumerate().rev() {
                let mag = from_log_tanh(self.prefix[k] + suffix).min(LLR_CLIP);
                let out = if parity ^ self.v2c_neg[e] { -mag } else { mag };
                change = change.max((out - self.c2v[e]).abs());
                self.c2v[e] = out;
                suffix += self.v2c_log[e];
            }
            if let Some(worst) = audit.as_deref_mut() {
                for e in range.clone() {
                    let others = range
                        .clone()
                        .filter(|&f| f != e)
                        .map(|f| self.v2c_mag[f])
                        .fold(f64::INFINITY, f64::min);
                    let excess = self.c2v[e].abs() - others.min(obs_mag);
                    *worst = worst.max(excess);
                }
            }
        }
        change
    }

    /// Sum of incoming check messages per variable.
    pub(crate) fn extrinsic(&self, g: &SparseBipartiteGraph, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = g.vn_edges(i).iter().map(|&e| self.c2v[e as usize]).sum();
        }
    }

    /// Check-rule combination of all incoming variable messages per check:
    /// the check's own verdict on its parity bit.
    pub(crate) fn check_verdict(&self, g: &SparseBipartiteGraph, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let range = g.cn_edge_range(j);
            let l: f64 = range.clone().map(|e| self.v2c_log[e]).sum();
            let neg = range.fold(false, |p, e| p ^ self.v2c_neg[e]);
            let mag = from_log_tanh(l).min(LLR_CLIP);
            *o = if neg { -mag } else { mag };
        }
    }
}

/// Hard decision; an exact zero reads as bit 1.
pub fn hard_decision(llr: f64) -> u8 {
    if llr > 0.0 {
        0
    } else {
        1
    }
}

/// Runs an LDGM decoder to completion and returns the posterior LLR of every
/// variable. `audit` collects the check-rule ceiling excess as in
/// [`SpState::cn_pass`].
pub fn decode_ldgm(
    graph: &SparseBipartiteGraph,
    vn_llr: &[f64],
    cn_llr: &[f64],
    iters: usize,
    early_stop: bool,
    mut audit: Option<&mut f64>,
) -> (Vec<f64>, usize) {
    let prior: Vec<f64> = vn_llr.iter().map(|&x| clip(x)).collect();
    let obs: Vec<f64> = cn_llr.iter().map(|&x| clip(x)).collect();
    let mut st = SpState::new(graph);
    let mut used = 0;
    for _ in 0..iters {
        st.vn_pass(graph, &prior);
        let change = st.cn_pass(graph, Some(&obs), audit.as_deref_mut());
        used += 1;
        if early_stop && change < FIXED_POINT_TOLERANCE {
            break;
        }
    }
    let mut post = vec![0.0; prior.len()];
    st.extrinsic(graph, &mut post);
    post.iter_mut().zip(&prior).for_each(|(p, q)| *p += q);
    (post, used)
}

/// Runs an LDPC decoder and returns posterior LLRs. With `early_stop`, stops
/// once the hard decisions satisfy every check.
pub fn decode_ldpc(graph: &SparseBipartiteGraph, vn_llr: &[f64], iters: usize, early_stop: bool) -> (Vec<f64>, usize) {
    let prior: Vec<f64> = vn_llr.iter().map(|&x| clip(x)).collect();
    let mut st = SpState::new(graph);
    let mut post = vec![0.0; prior.len()];
    let mut used = 0;
    for _ in 0..iters {
        st.vn_pass(graph, &prior);
        let change = st.cn_pass(graph, None, None);
        used += 1;
        st.extrinsic(graph, &mut post);
        post.iter_mut().zip(&prior).for_each(|(p, q)| *p += q);
        if early_stop && (change < FIXED_POINT_TOLERANCE || checks_satisfied(graph, &post)) {
            return (post, used);
        }
    }
    if used == 0 {
        post.copy_from_slice(&prior);
    }
    (post, used)
}

pub(crate) fn checks_satisfied(graph: &SparseBipartiteGraph, llr: &[f64]) -> bool {
    (0..graph.cn_count()).all(|j| {
        graph
            .cn_neighbors(j)
            .iter()
            .fold(0u8, |a, &v| a ^ hard_decision(llr[v as usize]))
            == 0
    })
}

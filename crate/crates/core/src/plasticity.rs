//! Synapse groups and trace-based STDP.
//!
//! A [`Projection`] stores its synapses grouped by postsynaptic neuron
//! (contiguous incoming rows) with a secondary index from each presynaptic
//! neuron to its outgoing synapses. Traces are kept per neuron, not per
//! synapse: the weight rule only depends on neuron-level spike timing.
//!
//! ```text
//! post spike:  w += eta_post * x_pre
//! pre spike:   w -= eta_pre  * x_post
//! ```
//!
//! Traces decay exponentially with `tau_pre` / `tau_post` and are reset to 1
//! by the owning neuron's spike, after the weight update it triggers.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dynamics::NeuronPopulation;
use crate::error::{config_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlasticityParams {
    pub eta_post: f64,
    pub eta_pre: f64,
    /// ms
    pub tau_pre: f64,
    /// ms
    pub tau_post: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// Upper bound of the uniform initial weight distribution.
    pub w_init_max: f64,
    /// Incoming weight-sum target per postsynaptic neuron, as a multiple of
    /// its fan-in. Ignored when `c_norm` is set.
    pub norm_per_input: f64,
    /// Absolute incoming weight-sum target.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_norm: Option<f64>,
}

impl Default for PlasticityParams {
    fn default() -> Self {
        Self {
            eta_post: 0.01,
            eta_pre: 0.0001,
            tau_pre: 20.0,
            tau_post: 20.0,
            w_min: 0.0,
            w_max: 1.0,
            w_init_max: 0.3,
            norm_per_input: 0.1,
            c_norm: None,
        }
    }
}

impl PlasticityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_pre >= 0.0 && self.eta_post >= 10.0 * self.eta_pre) {
            return Err(config_err(format!(
                "eta_post ({}) must be at least 10x eta_pre ({})",
                self.eta_post, self.eta_pre
            )));
        }
        if !(self.tau_pre > 0.0 && self.tau_post > 0.0) {
            return Err(config_err("trace time constants must be positive"));
        }
        if !(0.0 <= self.w_min && self.w_min < self.w_max) {
            return Err(config_err("weights require 0 <= w_min < w_max"));
        }
        if !(self.w_init_max >= self.w_min && self.w_init_max <= self.w_max) {
            return Err(config_err("w_init_max must lie in [w_min, w_max]"));
        }
        if self.norm_per_input < 0.0 || self.c_norm.is_some_and(|c| c < 0.0) {
            return Err(config_err("normalization target must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Excitatory,
    Inhibitory,
}

impl Sign {
    #[inline]
    pub fn gain(self) -> f64 {
        match self {
            Sign::Excitatory => 1.0,
            Sign::Inhibitory => -1.0,
        }
    }
}

#[derive(Clone, Debug)]
struct DecayCache {
    dt: f64,
    pre: f64,
    post: f64,
}

#[derive(Clone, Debug)]
pub struct Projection {
    n_pre: usize,
    n_post: usize,
    sign: Sign,
    plastic: bool,
    frozen: bool,
    params: PlasticityParams,
    post_offsets: Vec<u32>,
    pre_index: Vec<u32>,
    weights: Vec<f64>,
    // outgoing synapses per presynaptic neuron: (post, synapse id)
    pre_offsets: Vec<u32>,
    outgoing: Vec<(u32, u32)>,
    x_pre: Vec<f64>,
    x_post: Vec<f64>,
    decay: Option<DecayCache>,
}

impl Projection {
    /// Builds a projection from incoming rows: `rows[j]` lists the
    /// presynaptic partners of postsynaptic neuron `j` and `weights[j]`
    /// their weights.
    pub fn from_rows(
        n_pre: usize,
        rows: &[Vec<u32>],
        weights: &[Vec<f64>],
        sign: Sign,
        plastic: bool,
        params: PlasticityParams,
    ) -> Result<Self> {
        params.validate()?;
        if plastic && sign != Sign::Excitatory {
            return Err(config_err("plastic projections must be excitatory"));
        }
        if rows.len() != weights.len() {
            return Err(config_err("rows and weights differ in length"));
        }
        let mut post_offsets = Vec::with_capacity(rows.len() + 1);
        post_offsets.push(0u32);
        let mut pre_index = Vec::new();
        let mut flat = Vec::new();
        for (row, w) in rows.iter().zip(weights) {
            if row.len() != w.len() {
                return Err(config_err("row and weight lengths differ"));
            }
            for &i in row {
                if i as usize >= n_pre {
                    return Err(Error::IndexOutOfRange {
                        what: "presynaptic population",
                        index: i as usize,
                        len: n_pre,
                    });
                }
            }
            pre_index.extend_from_slice(row);
            flat.extend_from_slice(w);
            post_offsets.push(pre_index.len() as u32);
        }
        let mut proj = Self {
            n_pre,
            n_post: rows.len(),
            sign,
            plastic,
            frozen: false,
            params,
            post_offsets,
            pre_index,
            weights: flat,
            pre_offsets: Vec::new(),
            outgoing: Vec::new(),
            x_pre: vec![0.0; n_pre],
            x_post: vec![0.0; rows.len()],
            decay: None,
        };
        proj.index_outgoing();
        Ok(proj)
    }

    fn index_outgoing(&mut self) {
        let mut counts = vec![0u32; self.n_pre + 1];
        for &i in &self.pre_index {
            counts[i as usize + 1] += 1;
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        self.pre_offsets = counts.clone();
        let mut cursor = counts;
        self.outgoing = vec![(0, 0); self.pre_index.len()];
        for post in 0..self.n_post {
            for s in self.row_range(post) {
                let pre = self.pre_index[s] as usize;
                self.outgoing[cursor[pre] as usize] = (post as u32, s as u32);
                cursor[pre] += 1;
            }
        }
    }

    #[inline]
    fn row_range(&self, post: usize) -> std::ops::Range<usize> {
        self.post_offsets[post] as usize..self.post_offsets[post + 1] as usize
    }

    pub fn n_pre(&self) -> usize {
        self.n_pre
    }

    pub fn n_post(&self) -> usize {
        self.n_post
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn is_plastic(&self) -> bool {
        self.plastic
    }

    pub fn params(&self) -> &PlasticityParams {
        &self.params
    }

    pub fn synapse_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Incoming `(pre, weight)` pairs of a postsynaptic neuron.
    pub fn incoming(&self, post: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let r = self.row_range(post);
        self.pre_index[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    pub fn fan_in(&self, post: usize) -> usize {
        self.row_range(post).len()
    }

    pub fn weight(&self, pre: usize, post: usize) -> Option<f64> {
        self.incoming(post)
            .find(|&(i, _)| i as usize == pre)
            .map(|(_, w)| w)
    }

    pub fn x_pre(&self) -> &[f64] {
        &self.x_pre
    }

    pub fn x_post(&self) -> &[f64] {
        &self.x_post
    }

    pub fn x_pre_mut(&mut self) -> &mut [f64] {
        &mut self.x_pre
    }

    pub fn x_post_mut(&mut self) -> &mut [f64] {
        &mut self.x_post
    }

    /// Raw CSR view: `(post_offsets, pre_index, weights)`.
    pub fn csr(&self) -> (&[u32], &[u32], &[f64]) {
        (&self.post_offsets, &self.pre_index, &self.weights)
    }

    /// Replaces the synapse table, keeping parameters.
    pub fn set_csr(&mut self, post_offsets: Vec<u32>, pre_index: Vec<u32>, weights: Vec<f64>) -> Result<()> {
        let bad = post_offsets.len() != self.n_post + 1
            || post_offsets.first() != Some(&0)
            || post_offsets.windows(2).any(|w| w[0] > w[1])
            || *post_offsets.last().unwrap() as usize != pre_index.len()
            || pre_index.len() != weights.len()
            || pre_index.iter().any(|&i| i as usize >= self.n_pre);
        if bad {
            return Err(Error::Checkpoint("inconsistent synapse table".into()));
        }
        self.post_offsets = post_offsets;
        self.pre_index = pre_index;
        self.weights = weights;
        self.index_outgoing();
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn learning(&self) -> bool {
        self.plastic && !self.frozen
    }

    /// Delivers presynaptic spikes: each connected, non-refractory target's
    /// current changes by `G * w`.
    pub fn inject(&self, pre_spikes: &[u32], target: &mut NeuronPopulation, t: f64) -> Result<()> {
        if target.len() != self.n_post {
            return Err(config_err("projection target size mismatch"));
        }
        let g = self.sign.gain();
        for &i in pre_spikes {
            let i = i as usize;
            if i >= self.n_pre {
                return Err(Error::IndexOutOfRange {
                    what: "presynaptic population",
                    index: i,
                    len: self.n_pre,
                });
            }
            let out = &self.outgoing[self.pre_offsets[i] as usize..self.pre_offsets[i + 1] as usize];
            for &(post, s) in out {
                target.inject(post as usize, g * self.weights[s as usize], t)?;
            }
        }
        Ok(())
    }

    /// Exponential trace decay over `dt` (exact factor, cached per `dt`).
    pub fn decay_traces(&mut self, dt: f64) {
        if !self.plastic {
            return;
        }
        let cache = match &self.decay {
            Some(c) if c.dt == dt => c.clone(),
            _ => {
                let c = DecayCache {
                    dt,
                    pre: (-dt / self.params.tau_pre).exp(),
                    post: (-dt / self.params.tau_post).exp(),
                };
                self.decay = Some(c.clone());
                c
            }
        };
        for x in self.x_pre.iter_mut() {
            *x *= cache.pre;
        }
        for x in self.x_post.iter_mut() {
            *x *= cache.post;
        }
    }

    /// Depression on a presynaptic spike, then `x_pre[pre] = 1`.
    pub fn on_pre_spike(&mut self, pre: usize) {
        if !self.plastic {
            return;
        }
        if self.learning() {
            let (lo, hi, eta) = (self.params.w_min, self.params.w_max, self.params.eta_pre);
            let out = &self.outgoing[self.pre_offsets[pre] as usize..self.pre_offsets[pre + 1] as usize];
            for &(post, s) in out {
                let w = &mut self.weights[s as usize];
                *w = (*w - eta * self.x_post[post as usize]).clamp(lo, hi);
            }
        }
        self.x_pre[pre] = 1.0;
    }

    /// Potentiation on a postsynaptic spike, then `x_post[post] = 1`.
    pub fn on_post_spike(&mut self, post: usize) {
        if !self.plastic {
            return;
        }
        if self.learning() {
            let (lo, hi, eta) = (self.params.w_min, self.params.w_max, self.params.eta_post);
            let r = self.row_range(post);
            for (w, &i) in self.weights[r.clone()].iter_mut().zip(&self.pre_index[r]) {
                *w = (*w + eta * self.x_pre[i as usize]).clamp(lo, hi);
            }
        }
        self.x_post[post] = 1.0;
    }

    /// Weight-sum target for one postsynaptic neuron.
    pub fn norm_target(&self, post: usize) -> f64 {
        self.params
            .c_norm
            .unwrap_or(self.params.norm_per_input * self.fan_in(post) as f64)
    }

    /// Rescales incoming weights so each postsynaptic sum equals its target
    /// (`None` normalizes every neuron). All-zero rows are left untouched.
    pub fn normalize_incoming(&mut self, post: Option<usize>) {
        if !self.learning() {
            return;
        }
        let posts = match post {
            Some(j) => j..j + 1,
            None => 0..self.n_post,
        };
        let (lo, hi) = (self.params.w_min, self.params.w_max);
        for j in posts {
            let target = self.norm_target(j);
            let r = self.row_range(j);
            let sum: f64 = self.weights[r.clone()].iter().sum();
            if sum <= 0.0 {
                if !r.is_empty() {
                    warn!("postsynaptic neuron {j} has all-zero incoming weights; not normalized");
                }
                continue;
            }
            let scale = target / sum;
            for w in &mut self.weights[r] {
                *w = (*w * scale).clamp(lo, hi);
            }
        }
    }

    pub fn reset_traces(&mut self) {
        self.x_pre.fill(0.0);
        self.x_post.fill(0.0);
    }

    /// Drops synapses for which `keep(post, pre)` is false.
    pub fn retain(&mut self, mut keep: impl FnMut(usize, usize) -> bool) {
        let mut offsets = Vec::with_capacity(self.n_post + 1);
        offsets.push(0u32);
        let mut pre_index = Vec::with_capacity(self.pre_index.len());
        let mut weights = Vec::with_capacity(self.weights.len());
        for post in 0..self.n_post {
            for s in self.row_range(post) {
                let pre = self.pre_index[s];
                if keep(post, pre as usize) {
                    pre_index.push(pre);
                    weights.push(self.weights[s]);
                }
            }
            offsets.push(pre_index.len() as u32);
        }
        self.post_offsets = offsets;
        self.pre_index = pre_index;
        self.weights = weights;
        self.index_outgoing();
    }
}

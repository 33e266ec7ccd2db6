//! Current-based leaky integrate-and-fire dynamics.
//!
//! All populations advance with forward Euler on a fixed clock:
//!
//! ```text
//! tau_v dv/dt = v_rest - v + R I
//! tau_I dI/dt = -I            (spike increments are applied by projections)
//! tau_theta dtheta/dt = -theta (+ theta_plus on every spike)
//! ```
//!
//! The adaptive threshold is stored as an offset `theta >= 0` above
//! `v_thres`; a neuron fires when `v >= v_thres + theta`.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

/// Membrane gain applied to the synaptic current.
///
/// With `dt = 0.5 ms` and the decay-before-integrate ordering of a step, a
/// single spike of unit weight depolarizes the membrane by about 1 mV.
pub const DEFAULT_RESISTANCE: f64 = 200.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifParams {
    /// mV
    pub v_rest: f64,
    /// mV
    pub v_reset: f64,
    /// mV
    pub v_thres: f64,
    /// ms
    pub tau_v: f64,
    /// ms
    pub tau_i: f64,
    pub resistance: f64,
    /// ms
    pub t_ref: f64,
    /// mV
    pub theta_plus: f64,
    /// ms
    pub tau_theta: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            v_rest: -65.0,
            v_reset: -65.0,
            v_thres: -52.0,
            tau_v: 100.0,
            tau_i: 1.0,
            resistance: DEFAULT_RESISTANCE,
            t_ref: 5.0,
            theta_plus: 0.05,
            tau_theta: 1e7,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.v_rest,
            self.v_reset,
            self.v_thres,
            self.tau_v,
            self.tau_i,
            self.resistance,
            self.t_ref,
            self.theta_plus,
            self.tau_theta,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(config_err("neuron parameters must be finite"));
        }
        if self.tau_v <= 0.0 || self.tau_i <= 0.0 || self.tau_theta <= 0.0 {
            return Err(config_err("neuron time constants must be positive"));
        }
        if self.t_ref < 0.0 {
            return Err(config_err("refractory period must be non-negative"));
        }
        if self.v_reset > self.v_thres {
            return Err(config_err("v_reset must not exceed v_thres"));
        }
        if self.theta_plus < 0.0 {
            return Err(config_err("theta_plus must be non-negative"));
        }
        Ok(())
    }

    /// Integration step must not exceed the fastest time constant.
    pub fn check_dt(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0) || dt > self.tau_i {
            return Err(config_err(format!(
                "dt = {dt} ms must be positive and at most tau_I = {} ms",
                self.tau_i
            )));
        }
        Ok(())
    }
}

/// A group of LIF units sharing one parameter set.
#[derive(Clone, Debug)]
pub struct NeuronPopulation {
    params: LifParams,
    pub v: Vec<f64>,
    pub current: Vec<f64>,
    pub theta: Vec<f64>,
    pub refrac_until: Vec<f64>,
    pub spiked: Vec<bool>,
    fired: Vec<u32>,
    alive: Vec<bool>,
    homeostasis: bool,
}

impl NeuronPopulation {
    pub fn new(size: usize, params: LifParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            v: vec![params.v_rest; size],
            current: vec![0.0; size],
            theta: vec![0.0; size],
            refrac_until: vec![f64::NEG_INFINITY; size],
            spiked: vec![false; size],
            fired: Vec::new(),
            alive: vec![true; size],
            homeostasis: true,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn params(&self) -> &LifParams {
        &self.params
    }

    /// Indices that fired on the most recent `step_voltage`, ascending.
    pub fn fired(&self) -> &[u32] {
        &self.fired
    }

    pub fn is_refractory(&self, index: usize, t: f64) -> bool {
        t < self.refrac_until[index]
    }

    pub fn is_alive(&self, index: usize) -> bool {
        self.alive[index]
    }

    pub fn alive_mask(&self) -> &[bool] {
        &self.alive
    }

    /// Permanently silences a neuron (ablation).
    pub fn remove(&mut self, index: usize) {
        self.alive[index] = false;
        self.v[index] = self.params.v_rest;
        self.current[index] = 0.0;
    }

    pub fn set_alive_mask(&mut self, mask: &[bool]) -> Result<()> {
        if mask.len() != self.len() {
            return Err(Error::Checkpoint(format!(
                "alive mask of length {} for population of {}",
                mask.len(),
                self.len()
            )));
        }
        for (i, &keep) in mask.iter().enumerate() {
            if !keep {
                self.remove(i);
            }
        }
        Ok(())
    }

    /// Enables or disables threshold adaptation (both increments and decay).
    pub fn set_homeostasis(&mut self, enabled: bool) {
        self.homeostasis = enabled;
    }

    pub fn homeostasis(&self) -> bool {
        self.homeostasis
    }

    /// Adds `delta` to a neuron's current unless it is refractory or removed.
    /// Returns whether the injection was applied.
    #[inline]
    pub fn inject(&mut self, index: usize, delta: f64, t: f64) -> Result<bool> {
        let len = self.len();
        let until = *self.refrac_until.get(index).ok_or(Error::IndexOutOfRange {
            what: "population",
            index,
            len,
        })?;
        if t < until || !self.alive[index] {
            return Ok(false);
        }
        self.current[index] += delta;
        Ok(true)
    }

    /// Exponential (Euler) decay of every current toward zero.
    pub fn step_current(&mut self, dt: f64) {
        let k = dt / self.params.tau_i;
        for i in self.current.iter_mut() {
            *i -= k * *i;
        }
    }

    /// Advances membrane potentials by one Euler step at time `t` and
    /// applies threshold crossings. Refractory neurons only leak toward
    /// `v_rest`.
    pub fn step_voltage(&mut self, t: f64, dt: f64) -> Result<&[u32]> {
        let p = &self.params;
        let k = dt / p.tau_v;
        self.fired.clear();
        for i in 0..self.v.len() {
            self.spiked[i] = false;
            if !self.alive[i] {
                continue;
            }
            let v = self.v[i];
            let drive = if t < self.refrac_until[i] {
                p.v_rest - v
            } else {
                p.v_rest - v + p.resistance * self.current[i]
            };
            let next = v + k * drive;
            if !next.is_finite() {
                return Err(Error::NonFinite {
                    field: "membrane potential",
                    index: i,
                    value: next,
                });
            }
            if t >= self.refrac_until[i] && next >= p.v_thres + self.theta[i] {
                self.v[i] = self.reset_potential(i);
                self.refrac_until[i] = t + p.t_ref;
                self.spiked[i] = true;
                self.fired.push(i as u32);
            } else {
                self.v[i] = next;
            }
        }
        Ok(&self.fired)
    }

    /// Potential a neuron is reset to after firing. Repolarization schemes
    /// that depend on firing history would hook in here.
    #[inline]
    fn reset_potential(&self, _index: usize) -> f64 {
        self.params.v_reset
    }

    /// Threshold offset decay plus `theta_plus` for this step's spikes.
    pub fn step_threshold(&mut self, dt: f64) {
        if !self.homeostasis {
            return;
        }
        let k = dt / self.params.tau_theta;
        let plus = self.params.theta_plus;
        for (theta, &spiked) in self.theta.iter_mut().zip(&self.spiked) {
            *theta -= k * *theta;
            if spiked {
                *theta += plus;
            }
        }
    }

    /// Inter-presentation reset: potentials back to rest, currents and
    /// refractory timers cleared. Thresholds are kept.
    pub fn rest(&mut self) {
        self.v.fill(self.params.v_rest);
        self.current.fill(0.0);
        self.refrac_until.fill(f64::NEG_INFINITY);
        self.spiked.fill(false);
        self.fired.clear();
    }
}

/// Spikes of one population over one presentation, stored step by step.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeRecord {
    n_units: usize,
    dt: f64,
    step_offsets: Vec<u32>,
    neurons: Vec<u32>,
    counts: Vec<u32>,
}

impl SpikeRecord {
    pub fn new(n_units: usize, dt: f64) -> Self {
        Self {
            n_units,
            dt,
            step_offsets: vec![0],
            neurons: Vec::new(),
            counts: vec![0; n_units],
        }
    }

    pub fn from_steps<S: AsRef<[u32]>>(n_units: usize, dt: f64, steps: &[S]) -> Self {
        let mut rec = Self::new(n_units, dt);
        for s in steps {
            rec.push_step(s.as_ref());
        }
        rec
    }

    /// Appends the spikes of the next timestep, kept in ascending order.
    pub fn push_step(&mut self, spikes: &[u32]) {
        for &n in spikes {
            self.counts[n as usize] += 1;
        }
        let start = self.neurons.len();
        self.neurons.extend_from_slice(spikes);
        self.neurons[start..].sort_unstable();
        self.step_offsets.push(self.neurons.len() as u32);
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_steps(&self) -> usize {
        self.step_offsets.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Spikes emitted on step `k` (empty past the end).
    pub fn step(&self, k: usize) -> &[u32] {
        if k >= self.n_steps() {
            return &[];
        }
        &self.neurons[self.step_offsets[k] as usize..self.step_offsets[k + 1] as usize]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.neurons.len() as u64
    }

    /// `(time_ms, neurons)` for every step that has at least one spike.
    pub fn per_step_spikes(&self) -> impl Iterator<Item = (f64, &[u32])> + '_ {
        (0..self.n_steps())
            .map(move |k| (k as f64 * self.dt, self.step(k)))
            .filter(|(_, s)| !s.is_empty())
    }

    /// Spiking neurons in time order, simultaneous spikes by ascending index.
    pub fn ordered_neurons(&self) -> &[u32] {
        &self.neurons
    }
}

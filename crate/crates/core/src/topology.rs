//! Declarative network descriptions and structural accounting.
//!
//! A pathway tiles the `28 x 28 x C` input with square receptive fields of
//! size `k` and stride `s`; every location holds `F` competing neurons with
//! their own (unshared) weights. A fully connected pathway is the single
//! location case `k = 28`. Modules concatenate their pathways' outputs in
//! declared order (pathway major, location row-major, feature minor).
//!
//! Counting never materializes synapses, so full-size configurations can be
//! counted instantly.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::LifParams;
use crate::error::{config_err, Result};
use crate::network::Network;
use crate::rng;
use crate::{GRID, GRID_AREA};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathwayKind {
    Fc,
    Lc,
}

fn one() -> usize {
    1
}

fn is_one(n: &usize) -> bool {
    *n == 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathwaySpec {
    pub kind: PathwayKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    pub features: usize,
    /// Number of identical copies of this pathway, e.g. `(FC, F = 300) x 4`.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub repeat: usize,
}

impl PathwaySpec {
    pub fn fc(features: usize) -> Self {
        Self {
            kind: PathwayKind::Fc,
            kernel: None,
            stride: None,
            features,
            repeat: 1,
        }
    }

    pub fn lc(kernel: usize, stride: usize, features: usize) -> Self {
        Self {
            kind: PathwayKind::Lc,
            kernel: Some(kernel),
            stride: Some(stride),
            features,
            repeat: 1,
        }
    }

    pub fn times(mut self, repeat: usize) -> Self {
        self.repeat = repeat;
        self
    }

    pub fn describe(&self) -> String {
        let base = match self.kind {
            PathwayKind::Fc => format!("FC F={}", self.features),
            PathwayKind::Lc => format!(
                "LC ({},{})x{}",
                self.kernel.unwrap_or(0),
                self.stride.unwrap_or(0),
                self.features
            ),
        };
        if self.repeat > 1 {
            format!("({base})x{}", self.repeat)
        } else {
            base
        }
    }
}

/// Resolved receptive-field tiling of one pathway.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub kernel: usize,
    pub stride: usize,
    pub positions_per_dim: usize,
    pub channels: usize,
    pub features: usize,
}

impl Geometry {
    pub fn new(spec: &PathwaySpec, channels: usize) -> Result<Self> {
        if spec.features == 0 {
            return Err(config_err("pathway feature count F must be at least 1"));
        }
        if channels == 0 {
            return Err(config_err("input channel count must be at least 1"));
        }
        let (kernel, stride) = match spec.kind {
            PathwayKind::Fc => {
                if spec.kernel.is_some_and(|k| k != GRID) {
                    return Err(config_err("FC pathways have kernel 28"));
                }
                (GRID, 1)
            }
            PathwayKind::Lc => {
                let k = spec
                    .kernel
                    .ok_or_else(|| config_err("LC pathway requires a kernel size"))?;
                let s = spec
                    .stride
                    .ok_or_else(|| config_err("LC pathway requires a stride"))?;
                if k == 0 || k > GRID {
                    return Err(config_err(format!("LC kernel {k} must be in 1..=28")));
                }
                if s == 0 {
                    return Err(config_err("LC stride must be at least 1"));
                }
                (k, s)
            }
        };
        Ok(Self {
            kernel,
            stride,
            positions_per_dim: (GRID - kernel) / stride + 1,
            channels,
            features: spec.features,
        })
    }

    pub fn locations(&self) -> usize {
        self.positions_per_dim * self.positions_per_dim
    }

    pub fn neurons(&self) -> usize {
        self.locations() * self.features
    }

    pub fn rf_size(&self) -> usize {
        self.kernel * self.kernel * self.channels
    }

    pub fn plastic_synapses(&self) -> u64 {
        (self.neurons() * self.rf_size()) as u64
    }

    pub fn inhibitory_synapses(&self) -> u64 {
        let f = self.features as u64;
        self.locations() as u64 * f * (f - 1)
    }

    /// Input indices covered by the receptive field at `location`, in
    /// (row, column, channel) order. Inputs are laid out row-major with
    /// channel as the fastest axis.
    pub fn receptive_field(&self, location: usize) -> Vec<u32> {
        let (lr, lc) = (location / self.positions_per_dim, location % self.positions_per_dim);
        let (r0, c0) = (lr * self.stride, lc * self.stride);
        let mut out = Vec::with_capacity(self.rf_size());
        for r in r0..r0 + self.kernel {
            for c in c0..c0 + self.kernel {
                for ch in 0..self.channels {
                    out.push(((r * GRID + c) * self.channels + ch) as u32);
                }
            }
        }
        out
    }

    pub fn location_of(&self, neuron: usize) -> usize {
        neuron / self.features
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleSpec {
    pub pathways: Vec<PathwaySpec>,
    #[serde(default = "default_inhibition")]
    pub inhibition_weight: f64,
    /// Require equal F across pathways.
    #[serde(default)]
    pub balanced: bool,
}

pub const DEFAULT_INHIBITION: f64 = 17.5;

fn default_inhibition() -> f64 {
    DEFAULT_INHIBITION
}

impl ModuleSpec {
    pub fn new(pathways: Vec<PathwaySpec>) -> Self {
        Self {
            pathways,
            inhibition_weight: DEFAULT_INHIBITION,
            balanced: false,
        }
    }

    /// Pathways with `repeat` expanded, in concatenation order.
    pub fn expanded(&self) -> Vec<PathwaySpec> {
        self.pathways
            .iter()
            .flat_map(|p| {
                std::iter::repeat_n(PathwaySpec { repeat: 1, ..p.clone() }, p.repeat)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.pathways.is_empty() {
            return Err(config_err("module needs at least one pathway"));
        }
        if self.pathways.iter().any(|p| p.repeat == 0) {
            return Err(config_err("pathway repeat must be at least 1"));
        }
        let multi = self.pathways.len() > 1 || self.pathways[0].repeat > 1;
        if multi && !self.pathways.iter().any(|p| p.kind == PathwayKind::Fc) {
            return Err(config_err("multi-pathway module needs at least one FC pathway"));
        }
        if !(self.inhibition_weight.is_finite() && self.inhibition_weight >= 0.0) {
            return Err(config_err("inhibition_weight must be a non-negative magnitude"));
        }
        let f0 = self.pathways[0].features;
        let equal = self.pathways.iter().all(|p| p.features == f0);
        if self.balanced && !equal {
            return Err(config_err("balanced module requires the same F in every pathway"));
        }
        if !equal {
            warn!("naive module: pathways have unequal F; slowest pathway limits learning speed");
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        self.pathways
            .iter()
            .map(PathwaySpec::describe)
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

/// Pooling-reshape-activate layer inserted before a stacked module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PraSpec {
    /// Output channels C of the `28 x 28 x C` grid.
    pub channels: usize,
    pub w_p_init: f64,
    pub w_p_step: f64,
    pub w_p_max: f64,
    /// Minimum output spikes per presentation before `w_p` is raised.
    pub min_spikes: u32,
    /// Keep a raised `w_p` for later training inputs.
    pub persist: bool,
    pub neuron: LifParams,
}

/// Neuron parameters of PRA relay units: no homeostasis, a slow synaptic
/// current and a short refractory period, so one pooled spike drives a burst.
pub fn default_pra_neuron() -> LifParams {
    LifParams {
        theta_plus: 0.0,
        tau_i: 50.0,
        t_ref: 1.0,
        ..LifParams::default()
    }
}

impl Default for PraSpec {
    fn default() -> Self {
        Self {
            channels: 2,
            w_p_init: 1.0,
            w_p_step: 0.1,
            w_p_max: 20.0,
            min_spikes: 5,
            persist: true,
            neuron: default_pra_neuron(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pra: Option<PraSpec>,
    pub module: ModuleSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub stages: Vec<StageSpec>,
}

/// Validated per-stage shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct StageLayout {
    pub input_channels: usize,
    pub pathways: Vec<(PathwaySpec, Geometry)>,
    pub output_size: usize,
    /// `(upstream size, pool factor)` when the stage has a PRA layer.
    pub pooling: Option<(usize, usize)>,
}

impl StageLayout {
    pub fn input_size(&self) -> usize {
        GRID_AREA * self.input_channels
    }
}

/// Checks PRA divisibility and returns the pool factor.
pub fn pra_pool_factor(prev_output_size: usize, channels: usize) -> Result<usize> {
    let unit = GRID_AREA * channels;
    if channels == 0 || prev_output_size == 0 || !prev_output_size.is_multiple_of(unit) {
        let valid: Vec<usize> = (1..=prev_output_size / GRID_AREA)
            .filter(|c| prev_output_size.is_multiple_of(GRID_AREA * c))
            .collect();
        return Err(config_err(format!(
            "PRA layer cannot reshape {prev_output_size} units into 28x28x{channels}; valid C values: {valid:?}"
        )));
    }
    Ok(prev_output_size / unit)
}

impl NetworkSpec {
    pub fn single(module: ModuleSpec) -> Self {
        Self {
            stages: vec![StageSpec { pra: None, module }],
        }
    }

    pub fn layout(&self) -> Result<Vec<StageLayout>> {
        let mut out: Vec<StageLayout> = Vec::with_capacity(self.stages.len());
        for (n, stage) in self.stages.iter().enumerate() {
            stage
                .module
                .validate()
                .map_err(|e| config_err(format!("stage {}: {e}", n + 1)))?;
            let (channels, pooling) = match (&stage.pra, out.last()) {
                (None, None) => (1, None),
                (Some(_), None) => {
                    return Err(config_err("stage 1 reads the encoder and cannot have a PRA layer"))
                }
                (None, Some(_)) => {
                    return Err(config_err(format!(
                        "stage {} is stacked and needs a PRA layer",
                        n + 1
                    )))
                }
                (Some(pra), Some(prev)) => {
                    if !(pra.w_p_init > 0.0 && pra.w_p_step >= 0.0 && pra.w_p_max >= pra.w_p_init) {
                        return Err(config_err(format!(
                            "stage {}: PRA weights need 0 < w_p_init <= w_p_max and w_p_step >= 0",
                            n + 1
                        )));
                    }
                    pra.neuron.validate()?;
                    let pf = pra_pool_factor(prev.output_size, pra.channels)
                        .map_err(|e| config_err(format!("stage {}: {e}", n + 1)))?;
                    (pra.channels, Some((prev.output_size, pf)))
                }
            };
            let pathways = stage
                .module
                .expanded()
                .into_iter()
                .map(|p| Geometry::new(&p, channels).map(|g| (p, g)))
                .collect::<Result<Vec<_>>>()?;
            let output_size = pathways.iter().map(|(_, g)| g.neurons()).sum();
            out.push(StageLayout {
                input_channels: channels,
                pathways,
                output_size,
                pooling,
            });
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkStats {
    /// Competition-layer neurons (encoder and PRA units excluded).
    pub n_neuron: u64,
    /// Plastic + inhibitory + pooling synapses.
    pub n_synapse: u64,
    pub plastic: u64,
    pub inhibitory: u64,
    pub pooling: u64,
}

impl std::ops::Add for NetworkStats {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            n_neuron: self.n_neuron + o.n_neuron,
            n_synapse: self.n_synapse + o.n_synapse,
            plastic: self.plastic + o.plastic,
            inhibitory: self.inhibitory + o.inhibitory,
            pooling: self.pooling + o.pooling,
        }
    }
}

pub fn stage_resources(layout: &StageLayout) -> NetworkStats {
    let mut s = NetworkStats::default();
    for (_, g) in &layout.pathways {
        s.n_neuron += g.neurons() as u64;
        s.plastic += g.plastic_synapses();
        s.inhibitory += g.inhibitory_synapses();
    }
    if let Some((upstream, _)) = layout.pooling {
        s.pooling = upstream as u64;
    }
    s.n_synapse = s.plastic + s.inhibitory + s.pooling;
    s
}

/// Structural neuron and synapse totals of a network description.
pub fn count_resources(spec: &NetworkSpec) -> Result<NetworkStats> {
    Ok(spec
        .layout()?
        .iter()
        .map(stage_resources)
        .fold(NetworkStats::default(), |a, b| a + b))
}

/// Cumulative totals after each stage.
pub fn cumulative_resources(spec: &NetworkSpec) -> Result<Vec<NetworkStats>> {
    let mut acc = NetworkStats::default();
    Ok(spec
        .layout()?
        .iter()
        .map(|l| {
            acc = acc + stage_resources(l);
            acc
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationMode {
    Neurons,
    Synapses,
}

impl std::fmt::Display for AblationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AblationMode::Neurons => "neurons",
            AblationMode::Synapses => "synapses",
        })
    }
}

impl std::str::FromStr for AblationMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "neurons" => Ok(Self::Neurons),
            "synapses" => Ok(Self::Synapses),
            other => Err(format!("unknown ablation mode {other:?} (neurons|synapses)")),
        }
    }
}

/// Returns a copy of `network` with competition neurons (and all their
/// synapses) or plastic synapses independently removed with probability
/// `rho`. Deterministic under `seed`.
pub fn ablate(network: &Network, rho: f64, mode: AblationMode, seed: u64) -> Result<Network> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(config_err(format!("rho_delete {rho} must lie in [0, 1]")));
    }
    let mut out = network.clone();
    for (s, stage) in out.stages.iter_mut().enumerate() {
        for (p, pathway) in stage.module.pathways.iter_mut().enumerate() {
            let mut rng = rng::stream(seed, &[rng::purpose::ABLATE, s as u64, p as u64]);
            match mode {
                AblationMode::Neurons => {
                    let n = pathway.neurons.len();
                    let doomed: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < rho).collect();
                    for (j, &d) in doomed.iter().enumerate() {
                        if d {
                            pathway.neurons.remove(j);
                        }
                    }
                    let alive = pathway.neurons.alive_mask().to_vec();
                    pathway.feedforward.retain(|post, _| alive[post]);
                }
                AblationMode::Synapses => {
                    pathway.feedforward.retain(|_, _| rng.gen::<f64>() >= rho);
                }
            }
        }
    }
    Ok(out)
}

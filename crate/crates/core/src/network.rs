//! Runtime state of a built network and the per-timestep schedule.
//!
//! Within one step every pathway runs, in order:
//! 1. deliver input spikes and last step's lateral inhibition,
//! 2. decay synaptic currents,
//! 3. integrate membranes and fire,
//! 4. adapt thresholds,
//! 5. decay traces and apply STDP for this step's pre/post spikes.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{EncoderConfig, EncoderState};
use crate::dynamics::{LifParams, NeuronPopulation, SpikeRecord};
use crate::error::{config_err, Result};
use crate::plasticity::{PlasticityParams, Projection, Sign};
use crate::rng;
use crate::topology::{
    stage_resources, Geometry, NetworkSpec, NetworkStats, PathwaySpec, PraSpec, StageLayout,
};

/// Simulation hyperparameters shared by every competition layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// ms
    pub dt: f64,
    /// ms of simulated time per image presentation
    pub t_present: f64,
    pub neuron: LifParams,
    pub plasticity: PlasticityParams,
    pub encoder: EncoderConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.5,
            t_present: 350.0,
            neuron: LifParams::default(),
            plasticity: PlasticityParams::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.neuron.validate()?;
        self.neuron.check_dt(self.dt)?;
        self.plasticity.validate()?;
        self.encoder.validate()?;
        if !(self.t_present > 0.0 && self.t_present.is_finite()) {
            return Err(config_err("t_present must be positive"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_present / self.dt).round() as usize
    }
}

/// Fixed all-to-all inhibition among the neurons of each receptive field.
/// Synapses are implicit: a spike at a location inhibits every other live
/// neuron at that location by `weight`.
#[derive(Clone, Debug)]
pub struct LateralInhibition {
    pub locations: usize,
    pub features: usize,
    pub weight: f64,
    per_location: Vec<u32>,
    scratch: Vec<u32>,
}

impl LateralInhibition {
    pub fn new(geometry: &Geometry, weight: f64) -> Self {
        Self {
            locations: geometry.locations(),
            features: geometry.features,
            weight,
            per_location: vec![0; geometry.locations()],
            scratch: Vec::new(),
        }
    }

    /// Delivers inhibition caused by the population's previous-step spikes.
    pub fn inject(&mut self, pop: &mut NeuronPopulation, t: f64) -> Result<()> {
        if pop.fired().is_empty() || self.weight == 0.0 {
            return Ok(());
        }
        self.scratch.clear();
        self.scratch.extend_from_slice(pop.fired());
        for &n in &self.scratch {
            self.per_location[n as usize / self.features] += 1;
        }
        for &n in &self.scratch {
            let loc = n as usize / self.features;
            let m = std::mem::take(&mut self.per_location[loc]);
            if m == 0 {
                continue;
            }
            for j in loc * self.features..(loc + 1) * self.features {
                let k = m - pop.spiked[j] as u32;
                if k > 0 {
                    pop.inject(j, -self.weight * k as f64, t)?;
                }
            }
        }
        Ok(())
    }

    /// Directed inhibitory synapses between live neurons.
    pub fn synapse_count(&self, alive: &[bool]) -> u64 {
        alive
            .chunks(self.features)
            .map(|c| {
                let a = c.iter().filter(|&&x| x).count() as u64;
                a * a.saturating_sub(1)
            })
            .sum()
    }

    /// Whether an inhibitory synapse `from -> to` exists (same location,
    /// distinct neurons).
    pub fn connects(&self, from: usize, to: usize) -> bool {
        from != to && from / self.features == to / self.features
    }
}

#[derive(Clone, Debug)]
pub struct Pathway {
    pub spec: PathwaySpec,
    pub geometry: Geometry,
    pub neurons: NeuronPopulation,
    pub feedforward: Projection,
    pub inhibition: LateralInhibition,
}

impl Pathway {
    /// Competition population plus its plastic feedforward projection and
    /// intra-location inhibition. Weights start uniform in
    /// `[0, w_init_max]`.
    pub fn build(
        spec: PathwaySpec,
        geometry: Geometry,
        neuron: &LifParams,
        plasticity: &PlasticityParams,
        inhibition_weight: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let input_size = crate::GRID_AREA * geometry.channels;
        let fields: Vec<Vec<u32>> = (0..geometry.locations())
            .map(|l| geometry.receptive_field(l))
            .collect();
        let mut rows = Vec::with_capacity(geometry.neurons());
        let mut weights = Vec::with_capacity(geometry.neurons());
        for rf in &fields {
            for _ in 0..geometry.features {
                rows.push(rf.clone());
                weights.push(
                    (0..rf.len())
                        .map(|_| rng.gen::<f64>() * plasticity.w_init_max)
                        .collect(),
                );
            }
        }
        let feedforward = Projection::from_rows(
            input_size,
            &rows,
            &weights,
            Sign::Excitatory,
            true,
            plasticity.clone(),
        )?;
        Ok(Self {
            neurons: NeuronPopulation::new(geometry.neurons(), neuron.clone())?,
            inhibition: LateralInhibition::new(&geometry, inhibition_weight),
            spec,
            geometry,
            feedforward,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Module {
    pub pathways: Vec<Pathway>,
    input_size: usize,
    offsets: Vec<usize>,
    scratch: Vec<u32>,
}

impl Module {
    pub fn new(pathways: Vec<Pathway>, input_size: usize) -> Self {
        let mut offsets = Vec::with_capacity(pathways.len() + 1);
        offsets.push(0);
        for p in &pathways {
            offsets.push(offsets.last().unwrap() + p.neurons.len());
        }
        Self {
            pathways,
            input_size,
            offsets,
            scratch: Vec::new(),
        }
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn output_size(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Offset of pathway `p` in the concatenated output.
    pub fn offset(&self, p: usize) -> usize {
        self.offsets[p]
    }

    pub fn rest(&mut self) {
        for p in &mut self.pathways {
            p.neurons.rest();
            p.feedforward.reset_traces();
        }
    }

    /// Toggles STDP and threshold adaptation together.
    pub fn set_learning(&mut self, on: bool) {
        for p in &mut self.pathways {
            if on {
                p.feedforward.unfreeze();
            } else {
                p.feedforward.freeze();
            }
            p.neurons.set_homeostasis(on);
        }
    }

    pub fn normalize(&mut self) {
        for p in &mut self.pathways {
            p.feedforward.normalize_incoming(None);
        }
    }

    /// Runs steps `steps` of `input` from the current state, appending the
    /// concatenated output spikes to `out`.
    pub fn simulate(
        &mut self,
        input: &SpikeRecord,
        steps: Range<usize>,
        dt: f64,
        out: &mut SpikeRecord,
    ) -> Result<()> {
        if input.n_units() != self.input_size {
            return Err(config_err(format!(
                "module expects {} inputs, got {}",
                self.input_size,
                input.n_units()
            )));
        }
        for k in steps {
            let t = k as f64 * dt;
            let spikes = input.step(k);
            self.scratch.clear();
            for (pathway, &offset) in self.pathways.iter_mut().zip(&self.offsets) {
                pathway.feedforward.inject(spikes, &mut pathway.neurons, t)?;
                pathway.inhibition.inject(&mut pathway.neurons, t)?;
                pathway.neurons.step_current(dt);
                pathway.neurons.step_voltage(t, dt)?;
                pathway.neurons.step_threshold(dt);
                let ff = &mut pathway.feedforward;
                ff.decay_traces(dt);
                for &i in spikes {
                    ff.on_pre_spike(i as usize);
                }
                for &j in pathway.neurons.fired() {
                    ff.on_post_spike(j as usize);
                    self.scratch.push(j + offset as u32);
                }
            }
            out.push_step(&self.scratch);
        }
        Ok(())
    }

    /// One full presentation from a rested state.
    pub fn present(&mut self, input: &SpikeRecord, dt: f64) -> Result<SpikeRecord> {
        self.rest();
        let mut out = SpikeRecord::new(self.output_size(), dt);
        self.simulate(input, 0..input.n_steps(), dt, &mut out)?;
        Ok(out)
    }

    pub fn live_stats(&self) -> NetworkStats {
        let mut s = NetworkStats::default();
        for p in &self.pathways {
            let alive = p.neurons.alive_mask();
            s.n_neuron += alive.iter().filter(|&&a| a).count() as u64;
            s.plastic += p.feedforward.synapse_count() as u64;
            s.inhibitory += p.inhibition.synapse_count(alive);
        }
        s.n_synapse = s.plastic + s.inhibitory;
        s
    }
}

/// Pools consecutive blocks of upstream units with one shared weight `w_p`
/// into `28 x 28 x C` LIF relay units.
#[derive(Clone, Debug)]
pub struct PraLayer {
    pub spec: PraSpec,
    pub neurons: NeuronPopulation,
    pub pool_factor: usize,
    pub upstream_size: usize,
    pub w_p: f64,
}

impl PraLayer {
    pub fn new(spec: PraSpec, upstream_size: usize, pool_factor: usize) -> Result<Self> {
        let mut neurons = NeuronPopulation::new(upstream_size / pool_factor, spec.neuron.clone())?;
        neurons.set_homeostasis(spec.neuron.theta_plus > 0.0);
        Ok(Self {
            w_p: spec.w_p_init,
            spec,
            neurons,
            pool_factor,
            upstream_size,
        })
    }

    pub fn present(&mut self, upstream: &SpikeRecord, dt: f64) -> Result<SpikeRecord> {
        if upstream.n_units() != self.upstream_size {
            return Err(config_err(format!(
                "PRA layer expects {} upstream units, got {}",
                self.upstream_size,
                upstream.n_units()
            )));
        }
        self.neurons.rest();
        let mut out = SpikeRecord::new(self.neurons.len(), dt);
        for k in 0..upstream.n_steps() {
            let t = k as f64 * dt;
            for &u in upstream.step(k) {
                self.neurons.inject(u as usize / self.pool_factor, self.w_p, t)?;
            }
            self.neurons.step_current(dt);
            self.neurons.step_voltage(t, dt)?;
            self.neurons.step_threshold(dt);
            out.push_step(self.neurons.fired());
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct Stage {
    pub pra: Option<PraLayer>,
    pub module: Module,
    pub layout: StageLayout,
}

#[derive(Clone, Debug)]
pub struct Network {
    pub spec: NetworkSpec,
    pub sim: SimConfig,
    pub stages: Vec<Stage>,
    pub encoder: EncoderState,
}

impl Network {
    /// Instantiates every stage; plastic weights come from `seed`.
    pub fn build(spec: NetworkSpec, sim: SimConfig, seed: u64) -> Result<Self> {
        sim.validate()?;
        let layouts = spec.layout()?;
        let mut stages = Vec::with_capacity(layouts.len());
        for (s, layout) in layouts.into_iter().enumerate() {
            let module_spec = &spec.stages[s].module;
            let pathways = layout
                .pathways
                .iter()
                .enumerate()
                .map(|(p, (ps, g))| {
                    let mut rng = rng::stream(seed, &[rng::purpose::INIT, s as u64, p as u64]);
                    Pathway::build(
                        ps.clone(),
                        *g,
                        &sim.neuron,
                        &sim.plasticity,
                        module_spec.inhibition_weight,
                        &mut rng,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let pra = match (&spec.stages[s].pra, layout.pooling) {
                (Some(pra), Some((upstream, pf))) => Some(PraLayer::new(pra.clone(), upstream, pf)?),
                _ => None,
            };
            stages.push(Stage {
                pra,
                module: Module::new(pathways, layout.input_size()),
                layout,
            });
        }
        Ok(Self {
            encoder: EncoderState::new(&sim.encoder),
            spec,
            sim,
            stages,
        })
    }

    pub fn dt(&self) -> f64 {
        self.sim.dt
    }

    pub fn output_size(&self, stage: usize) -> usize {
        self.stages[stage].module.output_size()
    }

    /// Live neuron and synapse counts (reflects ablation).
    pub fn stats(&self) -> NetworkStats {
        self.stages
            .iter()
            .map(|st| {
                let mut s = st.module.live_stats();
                if let Some(pra) = &st.pra {
                    s.pooling = pra.upstream_size as u64;
                    s.n_synapse += s.pooling;
                }
                s
            })
            .fold(NetworkStats::default(), |a, b| a + b)
    }

    /// Structural counts of the unablated description.
    pub fn structural_stats(&self) -> NetworkStats {
        self.stages
            .iter()
            .map(|s| stage_resources(&s.layout))
            .fold(NetworkStats::default(), |a, b| a + b)
    }

    pub fn set_learning(&mut self, stage: usize, on: bool) {
        self.stages[stage].module.set_learning(on);
    }

    pub fn freeze_all(&mut self) {
        for s in &mut self.stages {
            s.module.set_learning(false);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{ModuleSpec, StageSpec};

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec::single(ModuleSpec::new(vec![
            PathwaySpec::fc(3),
            PathwaySpec::lc(24, 4, 2),
        ]))
    }

    #[test]
    fn built_counts_match_structure() {
        let net = Network::build(tiny_spec(), SimConfig::default(), 1).unwrap();
        assert_eq!(net.stats(), net.structural_stats());
        assert_eq!(net.output_size(0), 3 + 4 * 2);
        assert_eq!(net.stages[0].module.offset(1), 3);
    }

    #[test]
    fn initial_weights_in_range_and_seeded() {
        let a = Network::build(tiny_spec(), SimConfig::default(), 5).unwrap();
        let b = Network::build(tiny_spec(), SimConfig::default(), 5).unwrap();
        let c = Network::build(tiny_spec(), SimConfig::default(), 6).unwrap();
        let wa = a.stages[0].module.pathways[0].feedforward.weights();
        assert!(wa.iter().all(|&w| (0.0..=0.3).contains(&w)));
        assert_eq!(wa, b.stages[0].module.pathways[0].feedforward.weights());
        assert_ne!(wa, c.stages[0].module.pathways[0].feedforward.weights());
    }

    #[test]
    fn inhibition_is_intra_location() {
        let g = Geometry::new(&PathwaySpec::lc(16, 6, 3), 1).unwrap();
        let mut inh = LateralInhibition::new(&g, 2.0);
        let mut pop = NeuronPopulation::new(g.neurons(), LifParams::default()).unwrap();
        // make neuron 4 (location 1) fire
        pop.current[4] = 1e6;
        pop.step_voltage(0.0, 0.5).unwrap();
        assert_eq!(pop.fired(), &[4]);
        pop.current.fill(0.0);
        inh.inject(&mut pop, 0.5).unwrap();
        for j in 0..g.neurons() {
            let expect = if j == 3 || j == 5 { -2.0 } else { 0.0 };
            assert_eq!(pop.current[j], expect, "neuron {j}");
            assert_eq!(inh.connects(4, j), expect != 0.0);
        }
        assert_eq!(inh.synapse_count(pop.alive_mask()), 9 * 3 * 2);
    }

    #[test]
    fn pra_relays_pooled_blocks() {
        let mut pra = PraLayer::new(PraSpec { channels: 1, ..PraSpec::default() }, 1568, 2).unwrap();
        assert_eq!(pra.neurons.len(), 784);
        pra.w_p = 1000.0;
        let upstream = SpikeRecord::from_steps(1568, 0.5, &[vec![3u32], vec![], vec![], vec![]]);
        let out = pra.present(&upstream, 0.5).unwrap();
        assert!(out.total() >= 1);
        assert!(out.counts().iter().enumerate().all(|(i, &c)| c == 0 || i == 1));
        let wrong = SpikeRecord::new(10, 0.5);
        assert!(pra.present(&wrong, 0.5).is_err());
    }

    #[test]
    fn split_simulation_equals_full() {
        let mut net = Network::build(tiny_spec(), SimConfig::default(), 3).unwrap();
        let mut rng = rng::stream(9, &[1]);
        let steps: Vec<Vec<u32>> = (0..200)
            .map(|_| (0..784u32).filter(|_| rng.gen::<f64>() < 0.02).collect())
            .collect();
        let input = SpikeRecord::from_steps(784, 0.5, &steps);
        let mut a = net.clone();
        let full = a.stages[0].module.present(&input, 0.5).unwrap();
        let m = &mut net.stages[0].module;
        m.rest();
        let mut split = SpikeRecord::new(m.output_size(), 0.5);
        m.simulate(&input, 0..100, 0.5, &mut split).unwrap();
        m.simulate(&input, 100..200, 0.5, &mut split).unwrap();
        assert_eq!(full, split);
        assert!(full.total() > 0);
        let wa = a.stages[0].module.pathways[0].feedforward.weights();
        let wb = net.stages[0].module.pathways[0].feedforward.weights();
        assert_eq!(wa, wb);
    }

    #[test]
    fn stacked_build_has_pra() {
        let m = ModuleSpec::new(vec![PathwaySpec::fc(112), PathwaySpec::lc(24, 4, 112), PathwaySpec::lc(16, 6, 112)]);
        let spec = NetworkSpec {
            stages: vec![
                StageSpec { pra: None, module: m.clone() },
                StageSpec {
                    pra: Some(PraSpec::default()),
                    module: ModuleSpec::new(vec![PathwaySpec::fc(4)]),
                },
            ],
        };
        let net = Network::build(spec, SimConfig::default(), 0).unwrap();
        let pra = net.stages[1].pra.as_ref().unwrap();
        assert_eq!((pra.neurons.len(), pra.pool_factor), (1568, 1));
        assert_eq!(net.stages[1].module.input_size(), 1568);
        assert_eq!(net.stats(), net.structural_stats());
    }
}

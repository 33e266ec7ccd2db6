use proptest::prelude::*;
use spikecept::network::{Network, SimConfig};
use spikecept::topology::{ablate, count_resources, AblationMode, Geometry, ModuleSpec, NetworkSpec, PathwaySpec};

proptest! {
    #[test]
    fn geometry_counts_are_consistent(k in 1usize..=28, s in 1usize..10, f in 1usize..6, c in 1usize..3) {
        let g = Geometry::new(&PathwaySpec::lc(k, s, f), c).unwrap();
        let l = g.locations();
        prop_assert_eq!(g.positions_per_dim, (28 - k) / s + 1);
        prop_assert_eq!(g.neurons(), l * f);
        prop_assert_eq!(g.plastic_synapses(), (l * f * k * k * c) as u64);
        prop_assert_eq!(g.inhibitory_synapses(), (l * f * (f - 1)) as u64);
        for loc in [0, l / 2, l - 1] {
            let rf = g.receptive_field(loc);
            prop_assert_eq!(rf.len(), k * k * c);
            prop_assert!(rf.iter().all(|&i| (i as usize) < 784 * c));
            let mut u = rf.clone();
            u.sort_unstable();
            u.dedup();
            prop_assert_eq!(u.len(), rf.len());
        }
    }

    #[test]
    fn built_network_matches_accounting(f in 1usize..5, k in 8usize..=28, s in 2usize..8) {
        let spec = NetworkSpec::single(ModuleSpec::new(vec![PathwaySpec::fc(f), PathwaySpec::lc(k, s, f)]));
        let net = Network::build(spec.clone(), SimConfig::default(), 1).unwrap();
        prop_assert_eq!(net.stats(), count_resources(&spec).unwrap());
    }
}

fn small_net() -> Network {
    let spec = NetworkSpec::single(ModuleSpec::new(vec![PathwaySpec::fc(10), PathwaySpec::lc(16, 6, 10)]));
    Network::build(spec, SimConfig::default(), 3).unwrap()
}

#[test]
fn ablation_extremes() {
    let net = small_net();
    let same = ablate(&net, 0.0, AblationMode::Neurons, 1).unwrap();
    assert_eq!(same.stats(), net.stats());
    let gone = ablate(&net, 1.0, AblationMode::Neurons, 1).unwrap();
    let s = gone.stats();
    assert_eq!((s.n_neuron, s.plastic, s.inhibitory), (0, 0, 0));
    let bare = ablate(&net, 1.0, AblationMode::Synapses, 1).unwrap();
    assert_eq!(bare.stats().plastic, 0);
    assert_eq!(bare.stats().inhibitory, net.stats().inhibitory);
    assert!(ablate(&net, 1.5, AblationMode::Neurons, 1).is_err());
}

#[test]
fn ablation_is_seeded_and_proportional() {
    let net = small_net();
    let a = ablate(&net, 0.5, AblationMode::Synapses, 9).unwrap();
    let b = ablate(&net, 0.5, AblationMode::Synapses, 9).unwrap();
    assert_eq!(a.stats(), b.stats());
    let kept = a.stats().plastic as f64 / net.stats().plastic as f64;
    assert!((kept - 0.5).abs() < 0.02, "kept {kept}");
    let n = ablate(&net, 0.5, AblationMode::Neurons, 9).unwrap();
    let alive = n.stats().n_neuron;
    assert!(alive > 30 && alive < 80, "alive {alive}");
    // removed neurons lose their incoming synapses too
    for p in &n.stages[0].module.pathways {
        for j in 0..p.neurons.len() {
            if !p.neurons.is_alive(j) {
                assert_eq!(p.feedforward.fan_in(j), 0);
            }
        }
    }
}

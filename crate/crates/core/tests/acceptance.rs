//! Acceptance suite. One PASS/FAIL line per criterion; all tolerances are
//! constants below. Set `ACCEPTANCE_STRICT=1` to exit non-zero on failure.
//! Data-driven criteria read IDX files from `SPIKECEPT_DATA` (default
//! `<workspace>/data/mnist`).

mod common;

use rand::Rng;
use spikecept::codec::Decoder;
use spikecept::dynamics::{LifParams, NeuronPopulation};
use spikecept::harness::*;
use spikecept::io::checkpoint::Checkpoint;
use spikecept::io::config::RunConfig;
use spikecept::io::idx::{load_mnist_dir, Dataset, Split};
use spikecept::io::presets;
use spikecept::network::Network;
use spikecept::plasticity::PlasticityParams;
use spikecept::topology::{count_resources, cumulative_resources, AblationMode};
use std::path::PathBuf;
use std::time::Instant;

const REFERENCE_MODULES: [(&str, u64, u64); 14] = [
    ("baseline-fc-I", 400, 473),
    ("baseline-fc-II", 800, 1267),
    ("baseline-fc-III", 1600, 3814),
    ("baseline-fc-IV", 6400, 45977),
    ("baseline-lc-I", 900, 320),
    ("baseline-lc-II", 3600, 2361),
    ("baseline-lc-III", 7200, 7603),
    ("baseline-lc-IV", 9000, 11304),
    ("sp-inception-I", 1568, 778),
    ("sp-inception-II", 3136, 1909),
    ("sp-inception-III", 6300, 4904),
    ("sp-inception-IV", 6272, 5224),
    ("sp-inception-V", 8400, 7379),
    ("sp-inception-VI", 13440, 9153),
];
const STACK_NEURONS: [u64; 4] = [1568, 4707, 10976, 24416];
const STACK_NEURON_ALLOWANCE: u64 = 3;
const STACK_SYNAPSES_K: [f64; 3] = [3894.0, 11533.0, 23818.0];
const STACK_SYNAPSE_REL: f64 = 1e-3;

const DECAY_MS: f64 = 350.0;
const DECAY_REL_COARSE: f64 = 1e-3;
const DECAY_REL_FINE: f64 = 1e-6;

const STDP_PAIRS: usize = 100;
const STDP_STEPS: usize = 1000;
const STDP_ABS: f64 = 1e-9;

const MSDS_EPS: f64 = 1e-12;

const TRAIN_IMAGES: usize = 3000;
const TEST_IMAGES: usize = 1000;
const FC_MIN_ACC: f64 = 0.60;
const INCEPTION_MIN_ACC: f64 = 0.65;
const DESK_BUDGET_S: f64 = 30.0 * 60.0;

const CURVE_AT: [usize; 3] = [500, 1500, 3000];
const CURVE_NOISE: f64 = 0.02;
const CHANCE: f64 = 0.10;

const RHOS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const ROBUST_TRIALS: usize = 3;
const ROBUST_NOISE: f64 = 0.02;
const RHO1_BAND: f64 = 0.05;

const INTENSITY_IMAGES: usize = 200;

const MSDS_CLASSES: [u8; 2] = [0, 1];

struct Report {
    passed: usize,
    failed: usize,
}

impl Report {
    fn line(&mut self, ok: bool, name: &str, started: Instant, detail: String) {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        println!(
            "{} {name} ({:.1}s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
    }

    fn info(&self, name: &str, started: Instant, detail: String) {
        println!("INFO {name} ({:.1}s): {detail}", started.elapsed().as_secs_f64());
    }
}

fn reference_modules(r: &mut Report) {
    let t = Instant::now();
    let mut neuron_bad = Vec::new();
    let mut synapse_bad = Vec::new();
    for (name, neurons, synapses_k) in REFERENCE_MODULES {
        let s = count_resources(&presets::preset(name).unwrap().network).unwrap();
        if s.n_neuron != neurons {
            neuron_bad.push(format!("{name} {} != {neurons}", s.n_neuron));
        }
        let k = (s.n_synapse as f64 / 1000.0).round() as u64;
        if k != synapses_k {
            synapse_bad.push(format!("{name} {}K != {synapses_k}K", k));
        }
    }
    let ok_time = t.elapsed().as_secs_f64() < 1.0;
    r.line(
        neuron_bad.is_empty() && ok_time,
        "reference module neurons (exact)",
        t,
        if neuron_bad.is_empty() { "14/14 rows".into() } else { neuron_bad.join("; ") },
    );
    r.line(
        synapse_bad.is_empty() && ok_time,
        "reference module synapses (nearest thousand)",
        t,
        format!("{}/14 rows match; mismatches: {}", 14 - synapse_bad.len(), synapse_bad.join("; ")),
    );
}

fn stack_accounting(r: &mut Report) {
    let t = Instant::now();
    let cum = cumulative_resources(&presets::preset("stack-4").unwrap().network).unwrap();
    let neurons: Vec<u64> = cum.iter().map(|s| s.n_neuron).collect();
    let mut ok = cum.len() == 4;
    for (i, (&got, &want)) in neurons.iter().zip(&STACK_NEURONS).enumerate() {
        let allowance = if i == 1 || i == 2 { STACK_NEURON_ALLOWANCE } else { 0 };
        ok &= got.abs_diff(want) <= allowance;
    }
    let mut syn = Vec::new();
    for (s, want) in cum[1..].iter().zip(STACK_SYNAPSES_K) {
        let rel = (s.n_synapse as f64 - want * 1000.0).abs() / (want * 1000.0);
        ok &= rel <= STACK_SYNAPSE_REL;
        syn.push(format!("{} (rel {:.1e})", s.n_synapse, rel));
    }
    ok &= t.elapsed().as_secs_f64() < 1.0;
    r.line(ok, "four-module stack accounting", t, format!("neurons {neurons:?}; synapses {}", syn.join(", ")));
}

fn decay_error(dt: f64) -> f64 {
    let p = LifParams::default();
    let mut pop = NeuronPopulation::new(1, p.clone()).unwrap();
    // largest start that stays sub-threshold
    let v0 = p.v_thres;
    pop.v[0] = v0;
    let steps = (DECAY_MS / dt).round() as usize;
    let mut worst = 0.0f64;
    for k in 0..steps {
        pop.step_current(dt);
        pop.step_voltage(k as f64 * dt, dt).unwrap();
        let t = (k + 1) as f64 * dt;
        let exact = p.v_rest + (v0 - p.v_rest) * (-t / p.tau_v).exp();
        worst = worst.max(((pop.v[0] - exact) / exact).abs());
    }
    worst
}

fn dynamics(r: &mut Report) {
    let t = Instant::now();
    let coarse = decay_error(0.5);
    let fine = decay_error(0.01);
    let ok = coarse <= DECAY_REL_COARSE && fine <= DECAY_REL_FINE && t.elapsed().as_secs_f64() < 1.0;
    r.line(
        ok,
        "LIF free decay vs closed form",
        t,
        format!(
            "max relative error over the trajectory: dt 0.5 {coarse:.2e} (limit {DECAY_REL_COARSE:.0e}), dt 0.01 {fine:.2e} (limit {DECAY_REL_FINE:.0e}); error ratio {:.1} for a 50x step ratio",
            coarse / fine
        ),
    );
}

fn stdp(r: &mut Report) {
    let t = Instant::now();
    let mut rng = spikecept::rng::stream(2024, &[1]);
    let params = PlasticityParams { eta_pre: 0.001, ..PlasticityParams::default() };
    let mut worst = 0.0f64;
    for _ in 0..STDP_PAIRS {
        let pre = common::random_trains(&mut rng, STDP_STEPS, 3, 0.03);
        let post = common::random_trains(&mut rng, STDP_STEPS, 2, 0.02);
        let w0: Vec<Vec<f64>> = (0..2).map(|_| (0..3).map(|_| rng.gen::<f64>() * 0.3).collect()).collect();
        let a = common::dense_stdp(&params, &w0, &pre, &post, 0.5);
        let b = common::event_stdp(&params, &w0, &pre, &post, 0.5);
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            worst = worst.max((x - y).abs());
        }
    }
    let ok = worst <= STDP_ABS && t.elapsed().as_secs_f64() < 10.0;
    r.line(ok, "STDP event-driven vs dense", t, format!("max |dw| {worst:.2e} over {STDP_PAIRS} pairs"));
}

fn msds_suite(r: &mut Report) {
    let t = Instant::now();
    let mut rng = spikecept::rng::stream(11, &[]);
    let map = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        let mut m: Vec<f64> = (0..64).map(|_| if rng.gen::<f64>() < 0.4 { 0.0 } else { rng.gen_range(0.0..20.0) }).collect();
        m[0] += 1.0;
        m
    };
    let mut ok = sds(&[2.0, 0.0], &[1.0, 1.0]).unwrap() == 0.5;
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let a = map(&mut rng);
        let b = map(&mut rng);
        let s = sds(&a, &b).unwrap();
        ok &= s == sds(&b, &a).unwrap() && (0.0..=1.0).contains(&s) && sds(&a, &a).unwrap() == 1.0;
        let scaled: Vec<f64> = a.iter().map(|x| x * 3.7).collect();
        worst = worst.max((sds(&scaled, &b).unwrap() - s).abs());
    }
    for _ in 0..50 {
        let s1: Vec<Vec<f64>> = (0..4).map(|_| map(&mut rng)).collect();
        let s2: Vec<Vec<f64>> = (0..4).map(|_| map(&mut rng)).collect();
        let mut brute = 0.0;
        for x in &s1 {
            for y in &s2 {
                brute += sds(x, y).unwrap();
            }
        }
        worst = worst.max((msds(&s1, &s2).unwrap() - brute / 16.0).abs());
    }
    ok &= worst <= MSDS_EPS && t.elapsed().as_secs_f64() < 1.0;
    r.line(ok, "SDS/MSDS properties", t, format!("hand example, symmetry, range; max numeric deviation {worst:.1e}"));
}

fn data_dir() -> PathBuf {
    std::env::var_os("SPIKECEPT_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn load_data() -> Result<(Dataset, Dataset), String> {
    let dir = data_dir();
    let train = load_mnist_dir(&dir, Split::Train).map_err(|e| e.to_string())?;
    let test = load_mnist_dir(&dir, Split::Test).map_err(|e| e.to_string())?;
    if train.len() < TRAIN_IMAGES || test.len() < TEST_IMAGES {
        return Err(format!("need {TRAIN_IMAGES} train and {TEST_IMAGES} test images"));
    }
    Ok((train.truncated(TRAIN_IMAGES), test.truncated(TEST_IMAGES)))
}

struct Trained {
    cfg: RunConfig,
    net: Network,
    readout: Readout,
    accuracy: f64,
}

fn build(cfg: &RunConfig) -> Network {
    Network::build(cfg.network.clone(), cfg.sim.clone(), cfg.train.seed).unwrap()
}

fn train_eval(name: &str, train_set: &Dataset, test: &Dataset) -> (Trained, f64) {
    let t = Instant::now();
    let cfg = presets::preset(name).unwrap();
    let mut net = build(&cfg);
    train(&mut net, train_set, &cfg.train, &mut TrainProgress::default(), |_, _| Ok(())).unwrap();
    let readout = fit_readout(&net, train_set, &cfg.train).unwrap();
    let accuracy = evaluate(&net, &readout, test, Decoder::Vote, cfg.train.seed).unwrap().accuracy;
    (Trained { cfg, net, readout, accuracy }, t.elapsed().as_secs_f64())
}

fn checkpoint_bytes(t: &Trained, progress: &TrainProgress) -> Vec<u8> {
    Checkpoint::capture(&t.cfg, &t.net, progress, Some(&t.readout.labels), Some(&t.readout.bigram)).to_bytes()
}

fn desk(r: &mut Report, train_set: &Dataset, test: &Dataset) {
    // FC-100: learning curve, then the final point doubles as the desk result
    let t = Instant::now();
    let cfg = presets::preset("desk-fc-100").unwrap();
    let mut fc_net = build(&cfg);
    let curve = learning_curve(&mut fc_net, train_set, test, &cfg.train, &CURVE_AT, Decoder::Vote).unwrap();
    let fc_time = t.elapsed().as_secs_f64();
    let accs: Vec<f64> = curve.iter().map(|c| c.accuracy).collect();
    let fc_acc = *accs.last().unwrap();
    r.line(
        fc_acc >= FC_MIN_ACC && fc_time <= DESK_BUDGET_S,
        "desk FC-100 accuracy",
        t,
        format!("{:.1}% (threshold {:.0}%)", fc_acc * 100.0, FC_MIN_ACC * 100.0),
    );
    let monotone = accs.windows(2).all(|w| w[1] >= w[0] - CURVE_NOISE);
    r.line(
        monotone && accs[0] > 3.0 * CHANCE && accs.len() == CURVE_AT.len(),
        "learning curve shape",
        t,
        format!(
            "{}",
            curve.iter().map(|c| format!("{}: {:.1}%", c.iteration, c.accuracy * 100.0)).collect::<Vec<_>>().join(", ")
        ),
    );

    let (inc, inc_time) = train_eval("desk-sp-inception-64", train_set, test);
    r.line(
        inc.accuracy >= INCEPTION_MIN_ACC && inc_time <= DESK_BUDGET_S,
        "desk Sp-Inception-64 accuracy",
        t_since(inc_time),
        format!("{:.1}% (threshold {:.0}%)", inc.accuracy * 100.0, INCEPTION_MIN_ACC * 100.0),
    );

    robustness(r, &inc, test);
    determinism(r, train_set, test, &fc_net, &cfg);

    let t = Instant::now();
    let (stack, _) = train_eval("desk-stack-2", train_set, test);
    r.info("desk stack-2 accuracy", t, format!("{:.1}%", stack.accuracy * 100.0));
    intensity(r, &stack.net, &fc_net, test);
    msds_trend(r, &stack, test);
}

fn t_since(secs: f64) -> Instant {
    Instant::now() - std::time::Duration::from_secs_f64(secs)
}

fn robustness(r: &mut Report, inc: &Trained, test: &Dataset) {
    for mode in [AblationMode::Neurons, AblationMode::Synapses] {
        let t = Instant::now();
        let rows = robustness_sweep(&inc.net, &inc.readout, test, &RHOS, mode, ROBUST_TRIALS, Decoder::Vote, inc.cfg.train.seed)
            .unwrap();
        let means: Vec<f64> = rows.iter().map(|row| row.mean_acc).collect();
        let ok = means[0] == inc.accuracy
            && means.windows(2).all(|w| w[1] <= w[0] + ROBUST_NOISE)
            && (means[4] - CHANCE).abs() <= RHO1_BAND;
        r.line(
            ok,
            &format!("robustness sweep ({mode})"),
            t,
            rows.iter().map(|row| format!("{}: {:.1}%", row.rho, row.mean_acc * 100.0)).collect::<Vec<_>>().join(", "),
        );
    }
}

fn determinism(r: &mut Report, train_set: &Dataset, test: &Dataset, curve_net: &Network, cfg: &RunConfig) {
    let t = Instant::now();
    let run = |stop_at: Option<usize>| -> (Trained, Vec<u8>, Option<Vec<u8>>) {
        let mut net = build(cfg);
        let mut progress = TrainProgress::default();
        let mut mid = None;
        train(&mut net, train_set, &cfg.train, &mut progress, |n, p| {
            if Some(p.iteration) == stop_at {
                mid = Some(Checkpoint::capture(cfg, n, p, None, None).to_bytes());
            }
            Ok(())
        })
        .unwrap();
        let readout = fit_readout(&net, train_set, &cfg.train).unwrap();
        let accuracy = evaluate(&net, &readout, test, Decoder::Vote, cfg.train.seed).unwrap().accuracy;
        let tr = Trained { cfg: cfg.clone(), net, readout, accuracy };
        let bytes = checkpoint_bytes(&tr, &progress);
        (tr, bytes, mid)
    };
    let (a, bytes_a, _) = run(None);
    let (b, bytes_b, mid) = run(Some(cfg.train.iterations / 2));

    let cp = Checkpoint::from_bytes(&mid.unwrap()).unwrap();
    let mut net = cp.network().unwrap();
    let mut progress = cp.progress.clone();
    train(&mut net, train_set, &cfg.train, &mut progress, |_, _| Ok(())).unwrap();
    let readout = fit_readout(&net, train_set, &cfg.train).unwrap();
    let accuracy = evaluate(&net, &readout, test, Decoder::Vote, cfg.train.seed).unwrap().accuracy;
    let c = Trained { cfg: cfg.clone(), net, readout, accuracy };
    let bytes_c = checkpoint_bytes(&c, &progress);

    let curve_readout = fit_readout(curve_net, train_set, &cfg.train).unwrap();
    let curve = Trained { cfg: cfg.clone(), net: curve_net.clone(), readout: curve_readout, accuracy: 0.0 };
    let ok = bytes_a == bytes_b && bytes_a == bytes_c && a.accuracy == b.accuracy && a.accuracy == c.accuracy
        && checkpoint_bytes(&curve, &progress) == bytes_a;
    r.line(
        ok,
        "determinism and resume",
        t,
        format!(
            "checkpoint {} bytes; accuracies {:.1}% / {:.1}% / {:.1}% (straight, repeat, resumed)",
            bytes_a.len(),
            a.accuracy * 100.0,
            b.accuracy * 100.0,
            c.accuracy * 100.0
        ),
    );
}

fn intensity(r: &mut Report, stack: &Network, fc: &Network, test: &Dataset) {
    let t = Instant::now();
    let s = measure_intensity(stack, test, INTENSITY_IMAGES, 0).unwrap();
    let f = measure_intensity(fc, test, INTENSITY_IMAGES, 0).unwrap();
    let post_pra = s.rows[1].input_spikes;
    let raw = s.rows[0].output_spikes;
    let fc_out = f.rows[0].output_spikes;
    let min_spikes = stack.stages[1].pra.as_ref().unwrap().spec.min_spikes as u64;
    let floor_ok = s.min_unsaturated_input[1].map_or(true, |m| m >= min_spikes);
    r.line(
        post_pra >= raw && raw >= fc_out && floor_ok,
        "intensity ordering",
        t,
        format!(
            "post-PRA {post_pra:.1} >= Sp-Inception {raw:.1} >= FC {fc_out:.1} spikes/image; min unflagged post-PRA {:?}, flagged {}",
            s.min_unsaturated_input[1], s.saturated[1]
        ),
    );
}

fn msds_trend(r: &mut Report, stack: &Trained, test: &Dataset) {
    let t = Instant::now();
    let maps = class_maps(&stack.net, test, &MSDS_CLASSES, stack.cfg.train.maps_per_class, 0).unwrap();
    let means: Vec<f64> = maps
        .iter()
        .map(|m| off_diagonal_mean(&msds_matrix(&MSDS_CLASSES, m).unwrap()))
        .collect();
    let trend = if means[1] < means[0] { "decreasing" } else { "not decreasing" };
    r.info(
        "MSDS stacking trend, classes {0,1}",
        t,
        format!("stage 1 {:.3e}, stage 2 {:.3e} ({trend}; expected direction: decreasing)", means[0], means[1]),
    );
}

fn main() {
    let mut r = Report { passed: 0, failed: 0 };
    reference_modules(&mut r);
    stack_accounting(&mut r);
    dynamics(&mut r);
    stdp(&mut r);
    msds_suite(&mut r);
    match load_data() {
        Ok((train_set, test)) => desk(&mut r, &train_set, &test),
        Err(e) => {
            let t = Instant::now();
            for name in [
                "desk FC-100 accuracy",
                "learning curve shape",
                "desk Sp-Inception-64 accuracy",
                "robustness sweep",
                "determinism and resume",
                "intensity ordering",
            ] {
                r.line(false, name, t, format!("no data in {}: {e}", data_dir().display()));
            }
        }
    }
    println!("acceptance: {} passed, {} failed", r.passed, r.failed);
    if r.failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

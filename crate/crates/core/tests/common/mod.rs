#![allow(dead_code)]

use rand::Rng;
use spikecept::io::idx::{Dataset, Split};
use spikecept::plasticity::{PlasticityParams, Projection, Sign};

/// Dense per-step reference for trace STDP. Traces come from the time of
/// each neuron's last spike (`exp(-(t - t_last) / tau)`) rather than a
/// running product, and every synapse is visited on every step.
pub fn dense_stdp(
    params: &PlasticityParams,
    w0: &[Vec<f64>],
    pre: &[Vec<bool>],
    post: &[Vec<bool>],
    dt: f64,
) -> Vec<Vec<f64>> {
    let n_pre = pre[0].len();
    let n_post = post[0].len();
    let mut w = w0.to_vec();
    let mut last_pre: Vec<Option<usize>> = vec![None; n_pre];
    let mut last_post: Vec<Option<usize>> = vec![None; n_post];
    let trace = |last: Option<usize>, k: usize, tau: f64| match last {
        None => 0.0,
        Some(s) => (-((k - s) as f64) * dt / tau).exp(),
    };
    for k in 0..pre.len() {
        for j in 0..n_post {
            for i in 0..n_pre {
                if pre[k][i] {
                    let x = trace(last_post[j], k, params.tau_post);
                    w[j][i] = (w[j][i] - params.eta_pre * x).clamp(params.w_min, params.w_max);
                }
            }
        }
        for i in 0..n_pre {
            if pre[k][i] {
                last_pre[i] = Some(k);
            }
        }
        for j in 0..n_post {
            if post[k][j] {
                for i in 0..n_pre {
                    let x = trace(last_pre[i], k, params.tau_pre);
                    w[j][i] = (w[j][i] + params.eta_post * x).clamp(params.w_min, params.w_max);
                }
                last_post[j] = Some(k);
            }
        }
    }
    w
}

/// Event-driven trajectory through `Projection` for the same trains.
pub fn event_stdp(
    params: &PlasticityParams,
    w0: &[Vec<f64>],
    pre: &[Vec<bool>],
    post: &[Vec<bool>],
    dt: f64,
) -> Vec<Vec<f64>> {
    let n_pre = pre[0].len();
    let rows: Vec<Vec<u32>> = w0.iter().map(|_| (0..n_pre as u32).collect()).collect();
    let mut p = Projection::from_rows(n_pre, &rows, w0, Sign::Excitatory, true, params.clone()).unwrap();
    for k in 0..pre.len() {
        p.decay_traces(dt);
        for (i, &s) in pre[k].iter().enumerate() {
            if s {
                p.on_pre_spike(i);
            }
        }
        for (j, &s) in post[k].iter().enumerate() {
            if s {
                p.on_post_spike(j);
            }
        }
    }
    (0..w0.len())
        .map(|j| p.incoming(j).map(|(_, w)| w).collect())
        .collect()
}

pub fn random_trains(rng: &mut impl Rng, steps: usize, n: usize, p: f64) -> Vec<Vec<bool>> {
    (0..steps)
        .map(|_| (0..n).map(|_| rng.gen::<f64>() < p).collect())
        .collect()
}

/// Ten easily separable synthetic "digits": class c lights a 6x6 block at
/// a class-specific position, with mild per-image noise.
pub fn toy_digits(n: usize, seed: u64) -> Dataset {
    let mut rng = spikecept::rng::stream(seed, &[99]);
    let mut images = Vec::with_capacity(n * 784);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 10;
        let (r0, c0) = ((c / 5) * 12 + 4, (c % 5) * 5 + 1);
        for r in 0..28 {
            for col in 0..28 {
                let on = (r0..r0 + 6).contains(&r) && (c0..c0 + 6).contains(&col);
                let v = if on { 200 + rng.gen_range(0..56) } else if rng.gen::<f64>() < 0.02 { 60 } else { 0 };
                images.push(v as u8);
            }
        }
        labels.push(c as u8);
    }
    Dataset::new(images, labels, Split::Train).unwrap()
}

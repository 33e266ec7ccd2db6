//! Rate encoding of images into Poisson spike trains, adaptive presentation,
//! and spike-count decoders.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::SpikeRecord;
use crate::error::{config_err, Error, Result};
use crate::network::Network;
use crate::{rng, CLASSES, GRID_AREA};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Hz per unit pixel intensity (63.75 Hz at 255).
    pub lambda: f64,
    pub lambda_step: f64,
    pub lambda_max: f64,
    /// Minimum first-stage output spikes per presentation.
    pub min_spikes: u32,
    /// Keep a raised lambda for later training images.
    pub persist: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            lambda: 0.25,
            lambda_step: 32.0 / 255.0,
            lambda_max: 1.0,
            min_spikes: 5,
            persist: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda > 0.0
            && self.lambda_step > 0.0
            && self.lambda_max >= self.lambda
            && self.lambda_max.is_finite();
        if !ok {
            return Err(config_err(
                "encoder needs lambda > 0, lambda_step > 0 and lambda <= lambda_max",
            ));
        }
        Ok(())
    }
}

/// Current input drive. Raised during training when the first stage is too
/// quiet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    pub lambda: f64,
}

impl EncoderState {
    pub fn new(config: &EncoderConfig) -> Self {
        Self { lambda: config.lambda }
    }
}

/// Independent Bernoulli spikes per pixel and step with probability
/// `pixel * lambda * dt / 1000`.
pub fn encode_image(
    pixels: &[u8],
    lambda: f64,
    n_steps: usize,
    dt: f64,
    rng: &mut impl Rng,
) -> Result<SpikeRecord> {
    if pixels.len() != GRID_AREA {
        return Err(config_err(format!(
            "image has {} pixels, expected {GRID_AREA}",
            pixels.len()
        )));
    }
    let probs: Vec<(u32, f64)> = pixels
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0)
        .map(|(i, &p)| (i as u32, (p as f64 * lambda * dt / 1000.0).min(1.0)))
        .collect();
    let mut out = SpikeRecord::new(GRID_AREA, dt);
    let mut buf = Vec::new();
    for _ in 0..n_steps {
        buf.clear();
        for &(i, p) in &probs {
            if rng.gen::<f64>() < p {
                buf.push(i);
            }
        }
        out.push_step(&buf);
    }
    Ok(out)
}

/// What a stage consumes.
#[derive(Clone, Copy, Debug)]
pub enum StageInput<'a> {
    Image(&'a [u8]),
    Upstream(&'a SpikeRecord),
}

#[derive(Clone, Debug)]
pub struct Presentation {
    /// Spikes entering the module (encoded image or PRA output).
    pub input: SpikeRecord,
    pub output: SpikeRecord,
    /// Number of re-presentations with raised drive.
    pub retries: u32,
    /// Drive hit its ceiling without reaching the spike floor.
    pub saturated: bool,
    /// Final lambda (first stage) or `w_p` (stacked stages).
    pub drive: f64,
}

/// Presents one input to `stage`, raising the drive until the stage emits
/// enough spikes or the drive saturates. With `persist` the raised drive is
/// kept on the network; otherwise it only applies to this input.
///
/// Image encoding draws from the stream `keys ++ [attempt]` under `seed`.
pub fn adaptive_present(
    net: &mut Network,
    stage: usize,
    source: StageInput<'_>,
    persist: bool,
    seed: u64,
    keys: &[u64],
) -> Result<Presentation> {
    let dt = net.sim.dt;
    let n_steps = net.sim.n_steps();
    let mut retries = 0u32;
    match source {
        StageInput::Image(pixels) => {
            if stage != 0 {
                return Err(config_err("images can only feed the first stage"));
            }
            let cfg = net.sim.encoder.clone();
            let mut lambda = net.encoder.lambda;
            let mut key: Vec<u64> = keys.to_vec();
            key.push(0);
            loop {
                *key.last_mut().unwrap() = retries as u64;
                let mut r = rng::stream(seed, &key);
                let input = encode_image(pixels, lambda, n_steps, dt, &mut r)?;
                let output = net.stages[0].module.present(&input, dt)?;
                let enough = output.total() >= cfg.min_spikes as u64;
                let saturated = !enough && lambda >= cfg.lambda_max;
                if enough || saturated {
                    if persist && cfg.persist {
                        net.encoder.lambda = lambda;
                    }
                    return Ok(Presentation {
                        input,
                        output,
                        retries,
                        saturated,
                        drive: lambda,
                    });
                }
                lambda = (lambda + cfg.lambda_step).min(cfg.lambda_max);
                retries += 1;
            }
        }
        StageInput::Upstream(upstream) => {
            let st = &mut net.stages[stage];
            let pra = st
                .pra
                .as_mut()
                .ok_or_else(|| config_err(format!("stage {stage} has no PRA layer")))?;
            let original = pra.w_p;
            let min = pra.spec.min_spikes as u64;
            loop {
                let input = pra.present(upstream, dt)?;
                let output = st.module.present(&input, dt)?;
                let enough = input.total() >= min && output.total() >= min;
                let saturated = !enough && pra.w_p >= pra.spec.w_p_max;
                if enough || saturated {
                    let drive = pra.w_p;
                    if !(persist && pra.spec.persist) {
                        pra.w_p = original;
                    }
                    return Ok(Presentation {
                        input,
                        output,
                        retries,
                        saturated,
                        drive,
                    });
                }
                pra.w_p = (pra.w_p + pra.spec.w_p_step).min(pra.spec.w_p_max);
                retries += 1;
            }
        }
    }
}

/// Per-neuron class labels derived from mean responses on a labeled set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelAssignment {
    /// Mean spike count of each neuron per class.
    pub response: Vec<[f64; CLASSES]>,
    pub labels: Vec<u8>,
    /// Neurons that never fired on the labeled set.
    pub silent: Vec<bool>,
    /// Neurons removed from the network after labeling.
    pub excluded: Vec<bool>,
}

fn argmax_low(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

/// Builds the response matrix from `(counts, label)` pairs. Every class must
/// be present.
pub fn assign_labels<'a>(
    n_units: usize,
    samples: impl IntoIterator<Item = (&'a [u32], u8)>,
) -> Result<LabelAssignment> {
    let mut sums = vec![[0.0f64; CLASSES]; n_units];
    let mut per_class = [0usize; CLASSES];
    for (counts, label) in samples {
        let c = label as usize;
        if c >= CLASSES {
            return Err(Error::IndexOutOfRange {
                what: "class label",
                index: c,
                len: CLASSES,
            });
        }
        if counts.len() != n_units {
            return Err(config_err(format!(
                "count vector has {} entries, expected {n_units}",
                counts.len()
            )));
        }
        per_class[c] += 1;
        for (row, &k) in sums.iter_mut().zip(counts) {
            row[c] += k as f64;
        }
    }
    let missing: Vec<u8> = (0..CLASSES as u8)
        .filter(|&c| per_class[c as usize] == 0)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingClasses(missing));
    }
    for row in &mut sums {
        for c in 0..CLASSES {
            row[c] /= per_class[c] as f64;
        }
    }
    let labels = sums.iter().map(|r| argmax_low(r) as u8).collect();
    let silent: Vec<bool> = sums.iter().map(|r| r.iter().all(|&x| x == 0.0)).collect();
    let n_silent = silent.iter().filter(|&&s| s).count();
    if n_silent > 0 {
        log::info!("{n_silent} of {n_units} neurons silent on the labeling set");
    }
    Ok(LabelAssignment {
        response: sums,
        labels,
        silent,
        excluded: vec![false; n_units],
    })
}

impl LabelAssignment {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn exclude(&mut self, mask: &[bool]) {
        for (e, &m) in self.excluded.iter_mut().zip(mask) {
            *e |= m;
        }
    }

    fn votes(&self, i: usize) -> bool {
        !self.silent[i] && !self.excluded[i]
    }

    fn profile(&self, i: usize) -> [f64; CLASSES] {
        let row = &self.response[i];
        let s: f64 = row.iter().sum();
        let mut p = [0.0; CLASSES];
        if s > 0.0 {
            for c in 0..CLASSES {
                p[c] = row[c] / s;
            }
        }
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prediction {
    pub class: u8,
    /// The network emitted no spikes from voting neurons.
    pub no_spikes: bool,
    /// Bigram decoding fell back to the vote.
    pub fallback: bool,
}

/// Class with the highest mean spike count over its labeled neurons.
pub fn predict_vote(counts: &[u32], la: &LabelAssignment) -> Prediction {
    let mut sum = [0.0f64; CLASSES];
    let mut n = [0usize; CLASSES];
    let mut any = false;
    for (i, &k) in counts.iter().enumerate() {
        if !la.votes(i) {
            continue;
        }
        let c = la.labels[i] as usize;
        sum[c] += k as f64;
        n[c] += 1;
        any |= k > 0;
    }
    let scores: Vec<f64> = (0..CLASSES)
        .map(|c| if n[c] > 0 { sum[c] / n[c] as f64 } else { 0.0 })
        .collect();
    Prediction {
        class: argmax_low(&scores) as u8,
        no_spikes: !any,
        fallback: false,
    }
}

/// Every neuron votes for every class in proportion to its response
/// profile; scores are profile-weighted mean counts, so one-hot profiles
/// give exactly the plain vote.
pub fn predict_vfa(counts: &[u32], la: &LabelAssignment) -> Prediction {
    let mut num = [0.0f64; CLASSES];
    let mut den = [0.0f64; CLASSES];
    let mut any = false;
    for (i, &k) in counts.iter().enumerate() {
        if !la.votes(i) {
            continue;
        }
        let p = la.profile(i);
        for c in 0..CLASSES {
            num[c] += k as f64 * p[c];
            den[c] += p[c];
        }
        any |= k > 0;
    }
    let scores: Vec<f64> = (0..CLASSES)
        .map(|c| if den[c] > 0.0 { num[c] / den[c] } else { 0.0 })
        .collect();
    Prediction {
        class: argmax_low(&scores) as u8,
        no_spikes: !any,
        fallback: false,
    }
}

/// Ordered pairs of consecutive distinct firing neurons.
pub fn bigrams(ordered: &[u32]) -> impl Iterator<Item = (u32, u32)> + '_ {
    ordered
        .windows(2)
        .filter(|w| w[0] != w[1])
        .map(|w| (w[0], w[1]))
}

/// Class histogram of firing-order bigrams seen during labeling.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BigramModel {
    pub table: BTreeMap<(u32, u32), [u32; CLASSES]>,
}

impl BigramModel {
    pub fn fit<'a>(sequences: impl IntoIterator<Item = (&'a SpikeRecord, u8)>) -> Self {
        let mut table: BTreeMap<(u32, u32), [u32; CLASSES]> = BTreeMap::new();
        for (rec, label) in sequences {
            for pair in bigrams(rec.ordered_neurons()) {
                table.entry(pair).or_default()[label as usize] += 1;
            }
        }
        Self { table }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Sums class histograms over the record's bigrams; falls back to the
    /// vote when none was seen during fitting.
    pub fn predict(&self, rec: &SpikeRecord, la: &LabelAssignment) -> Prediction {
        let mut scores = [0.0f64; CLASSES];
        let mut known = false;
        for pair in bigrams(rec.ordered_neurons()) {
            if let Some(h) = self.table.get(&pair) {
                known = true;
                for c in 0..CLASSES {
                    scores[c] += h[c] as f64;
                }
            }
        }
        if !known {
            let mut p = predict_vote(rec.counts(), la);
            p.fallback = true;
            return p;
        }
        Prediction {
            class: argmax_low(&scores) as u8,
            no_spikes: rec.total() == 0,
            fallback: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoder {
    Vote,
    Vfa,
    Bigram,
}

impl std::fmt::Display for Decoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decoder::Vote => "vote",
            Decoder::Vfa => "vfa",
            Decoder::Bigram => "bigram",
        })
    }
}

impl std::str::FromStr for Decoder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vote" => Ok(Decoder::Vote),
            "vfa" => Ok(Decoder::Vfa),
            "bigram" => Ok(Decoder::Bigram),
            _ => Err(config_err(format!("unknown decoder {s:?} (vote, vfa, bigram)"))),
        }
    }
}

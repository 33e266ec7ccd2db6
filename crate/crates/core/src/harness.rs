//! Training, labeling, evaluation and measurement protocols.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{
    adaptive_present, assign_labels, predict_vfa, predict_vote, BigramModel, Decoder,
    LabelAssignment, Presentation, Prediction, StageInput,
};
use crate::error::{config_err, Error, Result};
use crate::io::idx::Dataset;
use crate::io::metrics::{IntensityRow, LearningCurveRow, MsdsRow, RobustnessRow};
use crate::network::Network;
use crate::rng::{self, purpose};
use crate::topology::{ablate, AblationMode};
use crate::CLASSES;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    /// Presentations per stage unless `stage_schedule` is given.
    pub iterations: usize,
    /// Per-stage presentation counts for module-by-module training.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage_schedule: Option<Vec<usize>>,
    /// 0 disables checkpoints.
    pub checkpoint_every: usize,
    /// Share of the training set used to assign neuron labels.
    pub label_fraction: f64,
    pub label_min_per_class: usize,
    /// Images per class for spiking-map similarity.
    pub maps_per_class: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            iterations: 3000,
            stage_schedule: None,
            checkpoint_every: 500,
            label_fraction: 0.1,
            label_min_per_class: 100,
            maps_per_class: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_stages: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(config_err("iterations must be positive"));
        }
        if let Some(s) = &self.stage_schedule {
            if s.len() != n_stages {
                return Err(config_err(format!(
                    "stage_schedule has {} entries for {n_stages} stages",
                    s.len()
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.label_fraction) {
            return Err(config_err("label_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn schedule(&self, n_stages: usize) -> Vec<usize> {
        self.stage_schedule
            .clone()
            .unwrap_or_else(|| vec![self.iterations; n_stages])
    }
}

/// Position in the training schedule; enough to resume bit-exactly.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainProgress {
    /// Stage currently being trained (== stage count when finished).
    pub stage: usize,
    /// Presentations completed in the current stage.
    pub done: usize,
    /// Presentations completed overall.
    pub iteration: usize,
    pub retries: u64,
    pub saturated: u64,
}

/// Presents `image` through stages `0..=last` with every stage frozen and
/// drive increments local to this image.
pub fn forward(
    net: &mut Network,
    image: &[u8],
    last: usize,
    seed: u64,
    keys: &[u64],
) -> Result<Vec<Presentation>> {
    let mut out: Vec<Presentation> = Vec::with_capacity(last + 1);
    for s in 0..=last {
        let p = match out.last() {
            None => adaptive_present(net, 0, StageInput::Image(image), false, seed, keys)?,
            Some(prev) => {
                adaptive_present(net, s, StageInput::Upstream(&prev.output), false, seed, keys)?
            }
        };
        out.push(p);
    }
    Ok(out)
}

/// Trains the stages in order. Stage 1 sees encoded images; stage `n`
/// sees the replayed output of the frozen stage `n - 1`. Learning is on
/// only for the stage being trained; adaptive drive persists.
///
/// `on_checkpoint` runs every `checkpoint_every` presentations. Passing a
/// restored `progress` resumes where it left off.
pub fn train(
    net: &mut Network,
    data: &Dataset,
    cfg: &TrainConfig,
    progress: &mut TrainProgress,
    mut on_checkpoint: impl FnMut(&Network, &TrainProgress) -> Result<()>,
) -> Result<()> {
    let n_stages = net.stages.len();
    let schedule = cfg.schedule(n_stages);
    if data.is_empty() && schedule.iter().any(|&n| n > 0) {
        return Err(config_err("training set is empty"));
    }
    while progress.stage < n_stages {
        let s = progress.stage;
        for t in 0..n_stages {
            net.set_learning(t, t == s);
        }
        while progress.done < schedule[s] {
            let j = progress.done;
            let idx = j % data.len();
            if j > 0 && idx == 0 {
                log::info!(
                    "stage {}: training set of {} images exhausted, starting epoch {}",
                    s + 1,
                    data.len(),
                    j / data.len() + 1
                );
            }
            let keys = [purpose::TRAIN, s as u64, j as u64];
            let p = if s == 0 {
                adaptive_present(net, 0, StageInput::Image(data.image(idx)), true, cfg.seed, &keys)?
            } else {
                let replay = forward(
                    net,
                    data.image(idx),
                    s - 1,
                    cfg.seed,
                    &[purpose::REPLAY, idx as u64],
                )?;
                let upstream = &replay.last().unwrap().output;
                adaptive_present(net, s, StageInput::Upstream(upstream), true, cfg.seed, &keys)?
            };
            net.stages[s].module.normalize();
            progress.done += 1;
            progress.iteration += 1;
            progress.retries += p.retries as u64;
            progress.saturated += p.saturated as u64;
            if cfg.checkpoint_every > 0 && progress.iteration.is_multiple_of(cfg.checkpoint_every) {
                on_checkpoint(net, progress)?;
            }
        }
        log::debug!(
            "stage {} trained: lambda {:.4}, retries {}, saturated {}",
            s + 1,
            net.encoder.lambda,
            progress.retries,
            progress.saturated
        );
        progress.stage += 1;
        progress.done = 0;
    }
    net.freeze_all();
    Ok(())
}

/// Frozen responses of every stage to each image, computed in parallel.
/// Image `i` uses the random stream `(purpose, i)`.
pub fn respond(
    net: &Network,
    data: &Dataset,
    indices: &[usize],
    stream: u64,
    seed: u64,
) -> Result<Vec<Vec<Presentation>>> {
    let last = net.stages.len() - 1;
    indices
        .par_iter()
        .map_init(
            || {
                let mut n = net.clone();
                n.freeze_all();
                n
            },
            |n, &i| forward(n, data.image(i), last, seed, &[stream, i as u64]),
        )
        .collect()
}

/// Per-class first images: `max(fraction * n_c, min(min_per_class, n_c))`
/// of each class, in dataset order.
pub fn label_indices(data: &Dataset, fraction: f64, min_per_class: usize) -> Vec<usize> {
    let mut per_class = [0usize; CLASSES];
    for &l in &data.labels {
        per_class[l as usize] += 1;
    }
    let quota: Vec<usize> = per_class
        .iter()
        .map(|&n| ((fraction * n as f64).round() as usize).max(min_per_class.min(n)))
        .collect();
    let mut taken = [0usize; CLASSES];
    let mut out = Vec::new();
    for (i, &l) in data.labels.iter().enumerate() {
        let c = l as usize;
        if taken[c] < quota[c] {
            taken[c] += 1;
            out.push(i);
        }
    }
    out
}

/// Neuron labels and bigram table fitted on a frozen labeling pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Readout {
    pub labels: LabelAssignment,
    pub bigram: BigramModel,
}

impl Readout {
    pub fn predict(&self, rec: &crate::dynamics::SpikeRecord, decoder: Decoder) -> Prediction {
        match decoder {
            Decoder::Vote => predict_vote(rec.counts(), &self.labels),
            Decoder::Vfa => predict_vfa(rec.counts(), &self.labels),
            Decoder::Bigram => self.bigram.predict(rec, &self.labels),
        }
    }
}

pub fn fit_readout(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<Readout> {
    let idx = label_indices(data, cfg.label_fraction, cfg.label_min_per_class);
    let resp = respond(net, data, &idx, purpose::LABEL, cfg.seed)?;
    let outputs: Vec<_> = resp.iter().map(|r| &r.last().unwrap().output).collect();
    let n_units = net.output_size(net.stages.len() - 1);
    let mut labels = assign_labels(
        n_units,
        outputs
            .iter()
            .zip(&idx)
            .map(|(o, &i)| (o.counts(), data.label(i))),
    )?;
    labels.exclude(&output_removed(net));
    let bigram = BigramModel::fit(outputs.iter().zip(&idx).map(|(o, &i)| (*o, data.label(i))));
    Ok(Readout { labels, bigram })
}

/// Removed (ablated) neurons of the final stage, in output order.
pub fn output_removed(net: &Network) -> Vec<bool> {
    net.stages
        .last()
        .unwrap()
        .module
        .pathways
        .iter()
        .flat_map(|p| p.neurons.alive_mask().iter().map(|&a| !a))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`
    pub confusion: [[u32; CLASSES]; CLASSES],
    pub no_spike: usize,
    pub fallback: usize,
    pub saturated: usize,
}

/// Accuracy of `decoder` on `data` with the network frozen.
pub fn evaluate(
    net: &Network,
    readout: &Readout,
    data: &Dataset,
    decoder: Decoder,
    seed: u64,
) -> Result<EvalReport> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let resp = respond(net, data, &idx, purpose::TEST, seed)?;
    let mut rep = EvalReport {
        n: data.len(),
        correct: 0,
        accuracy: 0.0,
        confusion: [[0; CLASSES]; CLASSES],
        no_spike: 0,
        fallback: 0,
        saturated: 0,
    };
    for (i, r) in resp.iter().enumerate() {
        let out = r.last().unwrap();
        let p = readout.predict(&out.output, decoder);
        let truth = data.label(i);
        rep.confusion[truth as usize][p.class as usize] += 1;
        rep.correct += (p.class == truth) as usize;
        rep.no_spike += p.no_spikes as usize;
        rep.fallback += p.fallback as usize;
        rep.saturated += r.iter().any(|s| s.saturated) as usize;
    }
    if rep.n > 0 {
        rep.accuracy = rep.correct as f64 / rep.n as f64;
    }
    Ok(rep)
}

/// Mean and population standard deviation of accuracy after ablating a
/// fresh copy of the network `trials` times per `rho`. Labels of removed
/// neurons are excluded from decoding.
pub fn robustness_sweep(
    net: &Network,
    readout: &Readout,
    data: &Dataset,
    rhos: &[f64],
    mode: AblationMode,
    trials: usize,
    decoder: Decoder,
    seed: u64,
) -> Result<Vec<RobustnessRow>> {
    if trials == 0 {
        return Err(config_err("robustness sweep needs at least one trial"));
    }
    let mut rows = Vec::with_capacity(rhos.len());
    for (ri, &rho) in rhos.iter().enumerate() {
        let mut acc = Vec::with_capacity(trials);
        for t in 0..trials {
            let trial_seed = rng::derive_seed(seed, &[purpose::ABLATE, ri as u64, t as u64]);
            let damaged = ablate(net, rho, mode, trial_seed)?;
            let mut r = readout.clone();
            r.labels.exclude(&output_removed(&damaged));
            acc.push(evaluate(&damaged, &r, data, decoder, seed)?.accuracy);
        }
        let mean = acc.iter().sum::<f64>() / trials as f64;
        let var = acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / trials as f64;
        log::info!("rho {rho}: accuracy {mean:.4} (sd {:.4})", var.sqrt());
        rows.push(RobustnessRow {
            rho,
            mode: mode.to_string(),
            mean_acc: mean,
            std: var.sqrt(),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntensityReport {
    /// Mean input and output spikes per presentation, per stage.
    pub rows: Vec<IntensityRow>,
    /// Presentations whose drive saturated, per stage.
    pub saturated: Vec<usize>,
    /// Smallest input-spike total among unsaturated presentations, per stage.
    pub min_unsaturated_input: Vec<Option<u64>>,
}

/// Spiking intensity over the first `n` images. For stacked stages the
/// input is the PRA output.
pub fn measure_intensity(net: &Network, data: &Dataset, n: usize, seed: u64) -> Result<IntensityReport> {
    let n = n.min(data.len());
    let n_stages = net.stages.len();
    let mut rep = IntensityReport {
        rows: Vec::new(),
        saturated: vec![0; n_stages],
        min_unsaturated_input: vec![None; n_stages],
    };
    if n == 0 {
        return Ok(rep);
    }
    let idx: Vec<usize> = (0..n).collect();
    let resp = respond(net, data, &idx, purpose::PROBE, seed)?;
    for s in 0..n_stages {
        let (mut inp, mut out) = (0u64, 0u64);
        for r in &resp {
            let p = &r[s];
            inp += p.input.total();
            out += p.output.total();
            if p.saturated {
                rep.saturated[s] += 1;
            } else {
                let m = rep.min_unsaturated_input[s].get_or_insert(u64::MAX);
                *m = (*m).min(p.input.total());
            }
        }
        rep.rows.push(IntensityRow {
            stage: s + 1,
            input_spikes: inp as f64 / n as f64,
            output_spikes: out as f64 / n as f64,
        });
    }
    Ok(rep)
}

fn normalized(img: &[f64]) -> Option<Vec<f64>> {
    let sum: f64 = img.iter().sum();
    if !(sum > 0.0) || img.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return None;
    }
    let scale = img.len() as f64 / sum;
    Some(img.iter().map(|&x| x * scale).collect())
}

fn sds_normalized(a: &[f64], b: &[f64]) -> f64 {
    let (mut diff, mut total) = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        diff += (x - y).abs();
        total += x + y;
    }
    1.0 - diff / total
}

/// Spatial distribution similarity of two non-negative images after
/// scaling each to mean 1.
pub fn sds(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(config_err(format!(
            "images differ in size ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let bad = |index| Error::Image {
        index,
        reason: "map has no positive mass and cannot be normalized".into(),
    };
    let na = normalized(a).ok_or_else(|| bad(0))?;
    let nb = normalized(b).ok_or_else(|| bad(1))?;
    Ok(sds_normalized(&na, &nb))
}

/// Mean `sds` over all cross pairs of two image sets.
pub fn msds(set1: &[Vec<f64>], set2: &[Vec<f64>]) -> Result<f64> {
    if set1.is_empty() || set2.is_empty() {
        return Err(config_err("msds needs two non-empty sets"));
    }
    let prep = |set: &[Vec<f64>], which: &str| -> Result<Vec<Vec<f64>>> {
        let len = set1[0].len();
        set.iter()
            .enumerate()
            .map(|(i, m)| {
                if m.len() != len {
                    return Err(Error::Image {
                        index: i,
                        reason: format!("{which}: size {} differs from {len}", m.len()),
                    });
                }
                normalized(m).ok_or_else(|| Error::Image {
                    index: i,
                    reason: format!("{which}: map has no positive mass"),
                })
            })
            .collect()
    };
    let a = prep(set1, "set 1")?;
    let b = prep(set2, "set 2")?;
    let total: f64 = a
        .par_iter()
        .map(|x| b.iter().map(|y| sds_normalized(x, y)).sum::<f64>())
        .sum();
    Ok(total / (a.len() * b.len()) as f64)
}

/// Per-position input spike totals entering `stage` (0-based) for one
/// image; `28 x 28 x C` in the stage's input order.
pub fn spiking_map(net: &Network, stage: usize, image: &[u8], seed: u64, index: u64) -> Result<Vec<f64>> {
    if stage >= net.stages.len() {
        return Err(Error::IndexOutOfRange {
            what: "stage",
            index: stage,
            len: net.stages.len(),
        });
    }
    let mut n = net.clone();
    n.freeze_all();
    let r = forward(&mut n, image, stage, seed, &[purpose::PROBE, index])?;
    Ok(r[stage].input.counts().iter().map(|&c| c as f64).collect())
}

/// Spiking maps of every stage for the first `per_class` images of each
/// listed class. Returns `maps[stage][k]` for `classes[k]`; maps without
/// any spikes are dropped.
pub fn class_maps(
    net: &Network,
    data: &Dataset,
    classes: &[u8],
    per_class: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<Vec<f64>>>>> {
    let mut picked: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
    for (i, &l) in data.labels.iter().enumerate() {
        if let Some(k) = classes.iter().position(|&c| c == l) {
            if picked[k].len() < per_class {
                picked[k].push(i);
            }
        }
    }
    let n_stages = net.stages.len();
    let mut out = vec![vec![Vec::new(); classes.len()]; n_stages];
    for (k, idx) in picked.iter().enumerate() {
        let resp = respond(net, data, idx, purpose::PROBE, seed)?;
        for r in resp {
            for (s, p) in r.iter().enumerate() {
                if p.input.total() > 0 {
                    out[s][k].push(p.input.counts().iter().map(|&c| c as f64).collect());
                }
            }
        }
    }
    Ok(out)
}

/// Pairwise MSDS between class map sets.
pub fn msds_matrix(classes: &[u8], maps: &[Vec<Vec<f64>>]) -> Result<Vec<MsdsRow>> {
    let mut rows = Vec::new();
    for (a, ma) in classes.iter().zip(maps) {
        for (b, mb) in classes.iter().zip(maps) {
            rows.push(MsdsRow {
                class_a: *a,
                class_b: *b,
                value: msds(ma, mb)?,
            });
        }
    }
    Ok(rows)
}

pub fn off_diagonal_mean(rows: &[MsdsRow]) -> f64 {
    let off: Vec<f64> = rows
        .iter()
        .filter(|r| r.class_a != r.class_b)
        .map(|r| r.value)
        .collect();
    off.iter().sum::<f64>() / off.len().max(1) as f64
}

/// Trains while evaluating at each listed iteration count.
pub fn learning_curve(
    net: &mut Network,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    at: &[usize],
    decoder: Decoder,
) -> Result<Vec<LearningCurveRow>> {
    let mut rows = Vec::new();
    let mut progress = TrainProgress::default();
    let mut eval_at = |n: &Network, p: &TrainProgress| -> Result<()> {
        if at.contains(&p.iteration) {
            let readout = fit_readout(n, train_set, cfg)?;
            let acc = evaluate(n, &readout, test_set, decoder, cfg.seed)?.accuracy;
            log::info!("iteration {}: accuracy {acc:.4}", p.iteration);
            rows.push(LearningCurveRow {
                iteration: p.iteration,
                accuracy: acc,
            });
        }
        Ok(())
    };
    let mut curve_cfg = cfg.clone();
    curve_cfg.checkpoint_every = 1;
    if at.contains(&0) {
        eval_at(net, &progress)?;
    }
    train(net, train_set, &curve_cfg, &mut progress, &mut eval_at)?;
    Ok(rows)
}

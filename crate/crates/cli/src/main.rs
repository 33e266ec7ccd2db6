use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use spikecept::codec::Decoder;
use spikecept::harness::{self, TrainProgress};
use spikecept::io::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use spikecept::io::config::{parse_network_config, RunConfig};
use spikecept::io::idx::{load_mnist_dir, Dataset, Split};
use spikecept::io::metrics::{emit_metrics, CountsRow, IntensityRow, LearningCurveRow, MsdsRow};
use spikecept::io::presets;
use spikecept::network::Network;
use spikecept::topology::{count_resources, AblationMode};

#[derive(Parser)]
#[command(name = "spikecept", version, about = "Spiking network training and analysis")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run seed (overrides the configuration).
    #[arg(long, env = "SPIKECEPT_SEED")]
    seed: Option<u64>,
    /// Training images to use, from the start of the training file.
    #[arg(long, default_value_t = 3000)]
    train_count: usize,
    /// Test images to use, from the start of the test file.
    #[arg(long, default_value_t = 1000)]
    test_count: usize,
    /// Directory holding the MNIST IDX files.
    #[arg(long, default_value = "data/mnist")]
    data: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Neuron and synapse counts of configurations (all reference modules by default).
    Counts {
        configs: Vec<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train a network, fit its readout and save a checkpoint.
    Train {
        config: String,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override presentations per stage.
        #[arg(long)]
        iterations: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Test-set accuracy of a trained checkpoint.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value = "vote")]
        decoder: Decoder,
        #[command(flatten)]
        common: Common,
    },
    /// Accuracy after random deletion of neurons or synapses.
    Ablate {
        checkpoint: PathBuf,
        #[arg(long, default_value = "neurons")]
        mode: AblationMode,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        rho: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value = "vote")]
        decoder: Decoder,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Mean input/output spikes per presentation for each stage.
    Intensity {
        checkpoint: PathBuf,
        /// Test images to present.
        #[arg(long, default_value_t = 200)]
        images: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Class-by-class similarity of the input spiking maps of one stage.
    Msds {
        checkpoint: PathBuf,
        /// 1-based stage.
        #[arg(long, default_value_t = 1)]
        stage: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8,9")]
        classes: Vec<u8>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train while evaluating at the given iteration counts.
    Curve {
        config: String,
        #[arg(long, value_delimiter = ',', default_value = "500,1500,3000")]
        at: Vec<usize>,
        #[arg(long, default_value = "vote")]
        decoder: Decoder,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// A preset name or a path to a JSON configuration.
fn load_config(arg: &str) -> Result<RunConfig> {
    if let Some(text) = presets::source(arg) {
        return Ok(parse_network_config(text)?);
    }
    let text = std::fs::read_to_string(arg)
        .with_context(|| format!("{arg:?} is neither a preset nor a readable file"))?;
    parse_network_config(&text).with_context(|| format!("parsing {arg}"))
}

fn load_split(common: &Common, split: Split) -> Result<Dataset> {
    let (n, what) = match split {
        Split::Train => (common.train_count, "training"),
        Split::Test => (common.test_count, "test"),
    };
    let data = load_mnist_dir(&common.data, split)
        .with_context(|| format!("loading {what} data from {}", common.data.display()))?;
    if data.len() < n {
        log::warn!("{what} set has only {} images ({n} requested)", data.len());
    }
    Ok(data.truncated(n))
}

fn load_trained(path: &Path) -> Result<(Checkpoint, Network, harness::Readout)> {
    let cp = load_checkpoint(path).with_context(|| format!("reading {}", path.display()))?;
    let net = cp.network()?;
    let (Some(labels), Some(bigram)) = (cp.labels.clone(), cp.bigram.clone()) else {
        bail!("{} has no readout; finish training first", path.display());
    };
    Ok((cp, net, harness::Readout { labels, bigram }))
}

fn seed_of(common: &Common, cp: &Checkpoint) -> u64 {
    common.seed.unwrap_or(cp.config.train.seed)
}

fn write_csv<R: spikecept::io::metrics::MetricRow>(path: &Option<PathBuf>, rows: &[R]) -> Result<()> {
    if let Some(p) = path {
        emit_metrics(rows, p).with_context(|| format!("writing {}", p.display()))?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn counts(configs: Vec<String>, csv: Option<PathBuf>) -> Result<()> {
    let names: Vec<String> = if configs.is_empty() {
        presets::REFERENCE_MODULES.iter().map(|s| s.to_string()).collect()
    } else {
        configs
    };
    let mut rows = Vec::new();
    println!("{:<22} {:>10} {:>12} {:>8}", "config", "n_neuron", "n_synapse", "approx");
    for n in names {
        let cfg = load_config(&n)?;
        let s = count_resources(&cfg.network)?;
        println!(
            "{:<22} {:>10} {:>12} {:>7}K",
            n,
            s.n_neuron,
            s.n_synapse,
            (s.n_synapse as f64 / 1000.0).round()
        );
        rows.push(CountsRow {
            config: n,
            n_neuron: s.n_neuron,
            n_synapse: s.n_synapse,
        });
    }
    write_csv(&csv, &rows)
}

fn train(
    config: &str,
    out: &Path,
    resume: Option<PathBuf>,
    iterations: Option<usize>,
    common: &Common,
) -> Result<()> {
    let (mut cfg, mut net, mut progress) = match resume {
        Some(p) => {
            let cp = load_checkpoint(&p).with_context(|| format!("reading {}", p.display()))?;
            let net = cp.network()?;
            (cp.config.clone(), net, cp.progress.clone())
        }
        None => {
            let mut cfg = load_config(config)?;
            if let Some(s) = common.seed {
                cfg.train.seed = s;
            }
            if let Some(n) = iterations {
                cfg.train.iterations = n;
                cfg.train.stage_schedule = None;
            }
            cfg.validate()?;
            let net = Network::build(cfg.network.clone(), cfg.sim.clone(), cfg.train.seed)?;
            (cfg, net, TrainProgress::default())
        }
    };
    if cfg.name.is_empty() {
        cfg.name = config.to_string();
    }
    let data = load_split(common, Split::Train)?;
    let stats = net.stats();
    info!(
        "{}: {} neurons, {} synapses, {} stage(s)",
        cfg.name,
        stats.n_neuron,
        stats.n_synapse,
        net.stages.len()
    );
    let started = Instant::now();
    harness::train(&mut net, &data, &cfg.train, &mut progress, |n, p| {
        info!("iteration {} ({:.1}s)", p.iteration, started.elapsed().as_secs_f64());
        save_checkpoint(out, &Checkpoint::capture(&cfg, n, p, None, None))
    })?;
    let readout = harness::fit_readout(&net, &data, &cfg.train)?;
    save_checkpoint(
        out,
        &Checkpoint::capture(&cfg, &net, &progress, Some(&readout.labels), Some(&readout.bigram)),
    )?;
    println!(
        "trained {} presentations in {:.1}s ({} retries, {} saturated); lambda {:.4}",
        progress.iteration,
        started.elapsed().as_secs_f64(),
        progress.retries,
        progress.saturated,
        net.encoder.lambda
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Command::Counts { configs, csv } => counts(configs, csv)?,
        Command::Train {
            config,
            out,
            resume,
            iterations,
            common,
        } => train(&config, &out, resume, iterations, &common)?,
        Command::Eval {
            checkpoint,
            decoder,
            common,
        } => {
            let (cp, net, readout) = load_trained(&checkpoint)?;
            let test = load_split(&common, Split::Test)?;
            let r = harness::evaluate(&net, &readout, &test, decoder, seed_of(&common, &cp))?;
            println!(
                "{decoder} accuracy {:.4} ({}/{}); no-spike {}, bigram fallback {}, saturated {}",
                r.accuracy, r.correct, r.n, r.no_spike, r.fallback, r.saturated
            );
            println!("confusion (rows true, columns predicted):");
            for row in r.confusion {
                println!("{}", row.map(|c| format!("{c:>5}")).join(""));
            }
        }
        Command::Ablate {
            checkpoint,
            mode,
            rho,
            trials,
            decoder,
            csv,
            common,
        } => {
            let (cp, net, readout) = load_trained(&checkpoint)?;
            let test = load_split(&common, Split::Test)?;
            let rows = harness::robustness_sweep(
                &net,
                &readout,
                &test,
                &rho,
                mode,
                trials,
                decoder,
                seed_of(&common, &cp),
            )?;
            println!("{:>6} {:>10} {:>8}", "rho", "accuracy", "std");
            for r in &rows {
                println!("{:>6} {:>10.4} {:>8.4}", r.rho, r.mean_acc, r.std);
            }
            write_csv(&csv, &rows)?;
        }
        Command::Intensity {
            checkpoint,
            images,
            csv,
            common,
        } => {
            let (cp, net, _) = load_trained(&checkpoint)?;
            let test = load_split(&common, Split::Test)?;
            let rep = harness::measure_intensity(&net, &test, images, seed_of(&common, &cp))?;
            println!("{:>5} {:>12} {:>12} {:>10}", "stage", "input", "output", "saturated");
            for (r, s) in rep.rows.iter().zip(&rep.saturated) {
                println!(
                    "{:>5} {:>12.2} {:>12.2} {:>10}",
                    r.stage, r.input_spikes, r.output_spikes, s
                );
            }
            write_csv::<IntensityRow>(&csv, &rep.rows)?;
        }
        Command::Msds {
            checkpoint,
            stage,
            classes,
            per_class,
            csv,
            common,
        } => {
            let (cp, net, _) = load_trained(&checkpoint)?;
            if stage == 0 || stage > net.stages.len() {
                bail!("stage must lie in 1..={}", net.stages.len());
            }
            let test = load_split(&common, Split::Test)?;
            let per = per_class.unwrap_or(cp.config.train.maps_per_class);
            let maps = harness::class_maps(&net, &test, &classes, per, seed_of(&common, &cp))?;
            let rows: Vec<MsdsRow> = harness::msds_matrix(&classes, &maps[stage - 1])?;
            for a in &classes {
                let line: Vec<String> = rows
                    .iter()
                    .filter(|r| r.class_a == *a)
                    .map(|r| format!("{:.3}", r.value))
                    .collect();
                println!("{a}: {}", line.join(" "));
            }
            println!("off-diagonal mean {:.4}", harness::off_diagonal_mean(&rows));
            write_csv(&csv, &rows)?;
        }
        Command::Curve {
            config,
            at,
            decoder,
            csv,
            common,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = common.seed {
                cfg.train.seed = s;
            }
            if let Some(&max) = at.iter().max() {
                cfg.train.iterations = max.max(1);
                cfg.train.stage_schedule = None;
            }
            let train_set = load_split(&common, Split::Train)?;
            let test = load_split(&common, Split::Test)?;
            let mut net = Network::build(cfg.network.clone(), cfg.sim.clone(), cfg.train.seed)?;
            let rows: Vec<LearningCurveRow> =
                harness::learning_curve(&mut net, &train_set, &test, &cfg.train, &at, decoder)?;
            println!("{:>10} {:>10}", "iteration", "accuracy");
            for r in &rows {
                println!("{:>10} {:>10.4}", r.iteration, r.accuracy);
            }
            write_csv(&csv, &rows)?;
        }
    }
    Ok(())
}

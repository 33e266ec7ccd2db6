//! CSV metric files with fixed headers.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub trait MetricRow {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurveRow {
    pub iteration: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub rho: f64,
    pub mode: String,
    pub mean_acc: f64,
    pub std: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityRow {
    /// 1-based stage number.
    pub stage: usize,
    pub input_spikes: f64,
    pub output_spikes: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountsRow {
    pub config: String,
    pub n_neuron: u64,
    pub n_synapse: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsdsRow {
    pub class_a: u8,
    pub class_b: u8,
    pub value: f64,
}

impl MetricRow for LearningCurveRow {
    const HEADER: &'static [&'static str] = &["iteration", "accuracy"];
    fn fields(&self) -> Vec<String> {
        vec![self.iteration.to_string(), self.accuracy.to_string()]
    }
}

impl MetricRow for RobustnessRow {
    const HEADER: &'static [&'static str] = &["rho", "mode", "mean_acc", "std"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.rho.to_string(),
            self.mode.clone(),
            self.mean_acc.to_string(),
            self.std.to_string(),
        ]
    }
}

impl MetricRow for IntensityRow {
    const HEADER: &'static [&'static str] = &["stage", "input_spikes", "output_spikes"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.stage.to_string(),
            self.input_spikes.to_string(),
            self.output_spikes.to_string(),
        ]
    }
}

impl MetricRow for CountsRow {
    const HEADER: &'static [&'static str] = &["config", "n_neuron", "n_synapse"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.config.clone(),
            self.n_neuron.to_string(),
            self.n_synapse.to_string(),
        ]
    }
}

impl MetricRow for MsdsRow {
    const HEADER: &'static [&'static str] = &["class_a", "class_b", "value"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.class_a.to_string(),
            self.class_b.to_string(),
            self.value.to_string(),
        ]
    }
}

pub fn write_rows<R: MetricRow, W: Write>(out: W, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(R::HEADER).map_err(csv_io)?;
    for r in rows {
        w.write_record(r.fields()).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a header line followed by one line per row.
pub fn emit_metrics<R: MetricRow>(rows: &[R], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_rows(std::io::BufWriter::new(file), rows)
}

fn csv_io(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => crate::Error::Io(std::io::Error::other(
            format!("{other:?}"),
        )),
    }
}

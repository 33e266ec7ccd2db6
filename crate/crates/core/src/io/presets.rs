//! Bundled network configurations.

use crate::error::{config_err, Result};
use crate::io::config::{parse_network_config, RunConfig};

const PRESETS: &[(&str, &str)] = &[
    ("baseline-fc-I", include_str!("../../presets/baseline-fc-I.json")),
    ("baseline-fc-II", include_str!("../../presets/baseline-fc-II.json")),
    ("baseline-fc-III", include_str!("../../presets/baseline-fc-III.json")),
    ("baseline-fc-IV", include_str!("../../presets/baseline-fc-IV.json")),
    ("baseline-lc-I", include_str!("../../presets/baseline-lc-I.json")),
    ("baseline-lc-II", include_str!("../../presets/baseline-lc-II.json")),
    ("baseline-lc-III", include_str!("../../presets/baseline-lc-III.json")),
    ("baseline-lc-IV", include_str!("../../presets/baseline-lc-IV.json")),
    ("sp-inception-I", include_str!("../../presets/sp-inception-I.json")),
    ("sp-inception-II", include_str!("../../presets/sp-inception-II.json")),
    ("sp-inception-III", include_str!("../../presets/sp-inception-III.json")),
    ("sp-inception-IV", include_str!("../../presets/sp-inception-IV.json")),
    ("sp-inception-V", include_str!("../../presets/sp-inception-V.json")),
    ("sp-inception-VI", include_str!("../../presets/sp-inception-VI.json")),
    ("stack-4", include_str!("../../presets/stack-4.json")),
    ("desk-fc-100", include_str!("../../presets/desk-fc-100.json")),
    ("desk-sp-inception-64", include_str!("../../presets/desk-sp-inception-64.json")),
    ("desk-stack-2", include_str!("../../presets/desk-stack-2.json")),
];

/// The fourteen single-module reference topologies, in reference order.
pub const REFERENCE_MODULES: [&str; 14] = [
    "baseline-fc-I",
    "baseline-fc-II",
    "baseline-fc-III",
    "baseline-fc-IV",
    "baseline-lc-I",
    "baseline-lc-II",
    "baseline-lc-III",
    "baseline-lc-IV",
    "sp-inception-I",
    "sp-inception-II",
    "sp-inception-III",
    "sp-inception-IV",
    "sp-inception-V",
    "sp-inception-VI",
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn preset(name: &str) -> Result<RunConfig> {
    let text = source(name).ok_or_else(|| {
        config_err(format!(
            "unknown preset {name:?}; available: {}",
            names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    parse_network_config(text)
}

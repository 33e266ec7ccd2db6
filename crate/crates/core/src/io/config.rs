//! JSON run configuration.
//!
//! A document names a network and optionally overrides simulation and
//! training settings; every omitted hyperparameter takes its default.
//!
//! ```json
//! {
//!   "name": "fc-100",
//!   "network": { "stages": [ { "module": { "pathways": [ { "kind": "fc", "features": 100 } ] } } ] },
//!   "sim": { "neuron": { "resistance": 150.0 } },
//!   "train": { "iterations": 3000, "seed": 7 }
//! }
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::harness::TrainConfig;
use crate::network::SimConfig;
use crate::topology::NetworkSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    pub network: NetworkSpec,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.layout()?;
        self.sim.validate()?;
        self.train.validate(self.network.stages.len())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses and validates a run configuration. Schema errors name the
/// offending path, e.g. `network.stages[0].module.pathways[1].kernel`.
pub fn parse_network_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_err(format!("at {path}: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

//! JSON configuration: five optional blocks, each field defaulted, unknown
//! keys rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chaos::DivergenceConfig;
use crate::ensemble::SweepConfig;
use crate::error::{invalid, Result};
use crate::integrator::IntegratorConfig;
use crate::model::ModelParams;
use crate::trajectory::RunConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RootConfig {
    pub model: ModelParams,
    pub run: RunConfig,
    pub sweep: SweepConfig,
    pub chaos: DivergenceConfig,
    pub integrator: IntegratorConfig,
}

impl RootConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.run.validate()?;
        self.sweep.validate()?;
        self.chaos.validate()?;
        self.integrator.validate()
    }

    /// Parses and validates a JSON document. Errors carry the dotted path
    /// of the offending field.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RootConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." {
                "<root>".to_string()
            } else {
                path
            };
            invalid(&path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }
}

pub fn load_config(path: &Path) -> Result<RootConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(&path.display().to_string(), e.to_string()))?;
    RootConfig::from_json_str(&text)
}

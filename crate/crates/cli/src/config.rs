//! Run configuration: artifact paths plus the experiment settings, read from
//! TOML.
//!
//! ```toml
//! [paths]
//! data = "data"
//! bundle = "bundle"
//! reports = "reports"
//!
//! [experiment]
//! seed = 7
//! n_iters = 10
//! kinds = ["gaussian", "missing_data"]
//!
//! [experiment.pipeline]
//! window_size = 30
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wheelcheck::experiment::ExperimentConfig;

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: PathBuf,
    pub bundle: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: "data".into(),
            bundle: "bundle".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, Failure> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Failure::new("config", format!("{origin}: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.data, &mut cfg.paths.bundle, &mut cfg.paths.reports] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.experiment.n_iters == 0 {
            return Err(Failure::new("config", "experiment.n_iters must be >= 1"));
        }
        self.experiment.pipeline.validate()?;
        self.experiment.train.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

//! TOML experiment configuration. Every key is optional; command-line flags
//! take precedence over the file.
//!
//! ```toml
//! seed = 42
//! grid_resolution = 20
//! out = "results"
//!
//! [fit]
//! nu = 2.5
//! multistarts = 10
//! log_theta_bounds = [-3.0, 3.0]
//!
//! [table2]
//! draws = 100
//!
//! [figures]
//! paths = 5
//! alpha_points = 101
//!
//! [mspe_decay]
//! nu = 1.5
//! sizes = [8, 16, 32, 64]
//!
//! [emulator]
//! threshold = 0.999
//! kernel = ["auto"]
//! ```

use std::path::{Path, PathBuf};

use figp::designs::DecayExperiment;
use figp::emulator::FamilyChoice;
use figp::FitConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; overrides the seeds inside the sections below.
    pub seed: Option<u64>,
    /// Points per dimension for every grid the command builds.
    pub grid_resolution: Option<usize>,
    pub out: Option<PathBuf>,
    pub fit: FitConfig,
    pub table2: Table2Config,
    pub figures: FigureConfig,
    pub mspe_decay: DecayExperiment,
    pub emulator: EmulatorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table2Config {
    /// Random draws of the test-family parameters.
    pub draws: usize,
}

impl Default for Table2Config {
    fn default() -> Self {
        Self { draws: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureConfig {
    pub paths: usize,
    /// `α` runs over `alpha_points` equispaced values in `[0, alpha_max]`.
    pub alpha_points: usize,
    pub alpha_max: f64,
    /// Gauss–Legendre nodes on `[0, 2π]`.
    pub resolution: usize,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self {
            paths: 5,
            alpha_points: 101,
            alpha_max: 1.0,
            resolution: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmulatorConfig {
    pub threshold: f64,
    /// One choice for every score, or one per score.
    pub kernel: Vec<FamilyChoice>,
}

impl Default for EmulatorConfig {
    fn default() -> Self {
        Self {
            threshold: 0.999,
            kernel: vec![FamilyChoice::Auto],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let stage = "load config";
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(stage, format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::new(stage, format!("{}: {e}", path.display())))
    }
}

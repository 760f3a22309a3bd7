use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::extxyz::parse_extxyz;
use crate::error::{Error, Result};
use crate::graph::AtomicStructure;
use crate::md::MdConfig;
use crate::model::ModelConfig;
use crate::train::TrainConfig;

/// Overrides the configured output directory when set.
pub const OUTPUT_DIR_ENV: &str = "MLANET_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// extxyz file; relative paths resolve against the config file.
    pub train: PathBuf,
    /// Held-out extxyz file; without it the split spec carves a test set.
    #[serde(default)]
    pub test: Option<PathBuf>,
    /// Keep only the first frames of the training file.
    #[serde(default)]
    pub max_structures: Option<usize>,
}

fn default_l_values() -> Vec<u32> {
    vec![1, 2, 3]
}
fn default_timing_epochs() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    /// Training-set sizes; the CLI `--sizes` flag overrides.
    #[serde(default)]
    pub sizes: Vec<usize>,
    /// Hidden `l_max` values for the per-epoch timing sweep; empty skips it.
    #[serde(default = "default_l_values")]
    pub l_values: Vec<u32>,
    #[serde(default = "default_timing_epochs")]
    pub timing_epochs: usize,
}

impl Default for CurveSection {
    fn default() -> Self {
        CurveSection {
            sizes: Vec::new(),
            l_values: default_l_values(),
            timing_epochs: default_timing_epochs(),
        }
    }
}

/// One TOML file describing data, architecture, optimization and MD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub data: DataSection,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub md: MdConfig,
    #[serde(default)]
    pub curve: CurveSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    /// Strict parse: unknown keys anywhere are errors.
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.train.validate()?;
        cfg.md.monitor.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        resolve_output_dir(self.output_dir.as_ref().map(|p| self.resolve(p)))
    }

    /// Training frames (truncated to `max_structures`) and the optional test file.
    pub fn load_data(&self) -> Result<(Vec<AtomicStructure>, Option<Vec<AtomicStructure>>)> {
        let mut train = parse_extxyz(self.resolve(&self.data.train))?;
        if let Some(n) = self.data.max_structures {
            train.truncate(n);
        }
        if train.is_empty() {
            return Err(Error::Data("training file holds no frames".into()));
        }
        let test = self
            .data
            .test
            .as_ref()
            .map(|p| parse_extxyz(self.resolve(p)))
            .transpose()?;
        Ok((train, test))
    }

    /// The model config with an empty species list filled from `structures`.
    pub fn model_config_for(&self, structures: &[AtomicStructure]) -> Result<ModelConfig> {
        let mut m = self.model.clone();
        if m.species.is_empty() {
            let mut z: Vec<u32> = structures.iter().flat_map(|s| s.species.iter().copied()).collect();
            z.sort_unstable();
            z.dedup();
            m.species = z;
        }
        m.validate()?;
        Ok(m)
    }
}

/// `MLANET_OUTPUT_DIR`, else the configured directory, else `mlanet_output`.
pub fn resolve_output_dir(configured: Option<PathBuf>) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured.unwrap_or_else(|| PathBuf::from("mlanet_output")),
    }
}

//! Experiment configuration: a TOML-serializable description of one run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{AnnealSchedule, IsingConfig};
use crate::mlp::{DropoutMode, NetworkSpec, TrainConfig};

/// The four dataset files of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct DataPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

/// One experiment, fully serializable; round-trips through TOML exactly.
///
/// Scalar fields come before the nested tables so the TOML stays valid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    /// Row label in tables and file names.
    pub name: String,
    /// `[input, hidden..., output]`.
    pub layer_sizes: Vec<usize>,
    /// `"none"`, `"random"`, or `"ising"`.
    pub mode: String,
    /// Drop probability for `"random"` mode.
    pub p: f64,
    pub input_dropout: bool,
    pub inference_masking: bool,
    pub batch_size: usize,
    pub epoch_cap: usize,
    pub iteration_cap: usize,
    pub learning_rate: f64,
    pub early_stop_patience: usize,
    pub early_stop_min_delta: f64,
    pub mask_refresh_every: usize,
    pub seed: u64,
    /// Optional stratified cut of the training set before training.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsample: Option<usize>,
    pub subsample_stratified: bool,
    pub out_dir: PathBuf,
    pub data: DataPaths,
    pub ising: IsingConfig,
    pub anneal: AnnealSchedule,
}

impl ExperimentConfig {
    /// A baseline configuration; callers override what they need.
    pub fn defaults(name: &str, layer_sizes: Vec<usize>, data: DataPaths) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            layer_sizes,
            mode: "none".to_string(),
            p: 0.5,
            input_dropout: false,
            inference_masking: false,
            batch_size: 32,
            epoch_cap: 32,
            iteration_cap: 200,
            learning_rate: 0.01,
            early_stop_patience: 10,
            early_stop_min_delta: 1e-4,
            mask_refresh_every: 1,
            seed: 0,
            subsample: None,
            subsample_stratified: true,
            out_dir: PathBuf::from("runs"),
            data,
            ising: IsingConfig::default(),
            anneal: AnnealSchedule::default(),
        }
    }

    pub fn dropout_mode(&self) -> Result<DropoutMode> {
        match self.mode.as_str() {
            "none" => Ok(DropoutMode::None),
            "random" => Ok(DropoutMode::Random { p: self.p }),
            "ising" => Ok(DropoutMode::Ising),
            other => Err(Error::Config(format!(
                "unknown dropout mode {other:?}; expected none, random, or ising"
            ))),
        }
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        NetworkSpec::new(
            self.layer_sizes.clone(),
            self.dropout_mode()?,
            self.input_dropout,
            self.inference_masking,
        )
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let config = TrainConfig {
            batch_size: self.batch_size,
            epoch_cap: self.epoch_cap,
            iteration_cap: self.iteration_cap,
            learning_rate: self.learning_rate,
            early_stop_patience: self.early_stop_patience,
            early_stop_min_delta: self.early_stop_min_delta,
            mask_refresh_every: self.mask_refresh_every,
            seed: self.seed,
            ising: self.ising.clone(),
            anneal: self.anneal.clone(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.network_spec()?;
        self.train_config()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// File-name-safe form of the experiment name.
    pub fn slug(&self) -> String {
        self.name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect()
    }
}

/// A batch of experiments sharing one output directory.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridConfig {
    pub out_dir: PathBuf,
    pub experiments: Vec<ExperimentConfig>,
}

impl GridConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let grid: GridConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        if grid.experiments.is_empty() {
            return Err(Error::Config("grid has no experiments".into()));
        }
        for e in &grid.experiments {
            e.validate()?;
        }
        Ok(grid)
    }
}

/// Name of the environment variable that overrides every output directory.
pub const OUT_DIR_ENV: &str = "ISING_DROPOUT_OUT";

/// The configured output directory unless [`OUT_DIR_ENV`] overrides it.
pub fn resolve_out_dir(configured: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => configured.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_config() -> ExperimentConfig {
        let data = DataPaths {
            train_images: "data/mnist/train-images-idx3-ubyte.gz".into(),
            train_labels: "data/mnist/train-labels-idx1-ubyte.gz".into(),
            test_images: "data/mnist/t10k-images-idx3-ubyte.gz".into(),
            test_labels: "data/mnist/t10k-labels-idx1-ubyte.gz".into(),
        };
        let mut config = ExperimentConfig::defaults("ising-example", vec![784, 100, 100, 10], data);
        config.mode = "ising".into();
        config.inference_masking = true;
        config.subsample = Some(10_000);
        config.seed = 7;
        config
    }

    #[test]
    fn toml_round_trip_is_byte_identical() {
        let config = sample_config();
        let text = config.to_toml().unwrap();
        let parsed = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(parsed, config);
        let again = parsed.to_toml().unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn round_trip_without_subsample() {
        let mut config = sample_config();
        config.subsample = None;
        let text = config.to_toml().unwrap();
        let parsed = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(parsed.subsample, None);
        assert_eq!(text, parsed.to_toml().unwrap());
    }

    #[test]
    fn rejects_unknown_mode() {
        let mut config = sample_config();
        config.mode = "sometimes".into();
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn out_dir_env_override() {
        // Runs in-process: restore the variable afterwards.
        let key = OUT_DIR_ENV;
        let prev = std::env::var_os(key);
        std::env::set_var(key, "/tmp/elsewhere");
        assert_eq!(
            resolve_out_dir(Path::new("runs")),
            PathBuf::from("/tmp/elsewhere")
        );
        match prev {
            Some(v) => std::env::set_var(key, v),
            None => std::env::remove_var(key),
        }
        assert_eq!(resolve_out_dir(Path::new("runs")), PathBuf::from("runs"));
    }
}

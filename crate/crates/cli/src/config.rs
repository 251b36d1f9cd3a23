//! Experiment configuration: TOML file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use intervalweib::laplace::PredictiveMode;
use intervalweib::mcmc::{NutsConfig, SpikeSlabConfig, WeibullPriors};
use intervalweib::nn::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    Moons1,
    Banana1,
    Moons2,
    Banana2,
    /// The public clinical-records CSV given by `source`.
    Heartfailure,
    /// A generated stand-in with the same columns.
    HeartfailureSurrogate,
}

impl DataKind {
    fn is_heart_failure(self) -> bool {
        matches!(self, DataKind::Heartfailure | DataKind::HeartfailureSurrogate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Baseline,
    LinearMvn,
    SpikeSlabContinuous,
    SpikeSlabDiscrete,
    LaplaceNn,
    Bnn,
}

impl ModelKind {
    pub fn predictive_mode(self) -> Option<PredictiveMode> {
        match self {
            ModelKind::LaplaceNn => Some(PredictiveMode::Glm),
            ModelKind::Bnn => Some(PredictiveMode::Bnn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DataKind,
    /// Points (synthetic) or patients (surrogate); 1000 and 299 when unset.
    pub n: Option<usize>,
    pub noise: f64,
    /// Inspection window; 2.0 for synthetic data and 30 days for heart failure when unset.
    pub window: Option<f64>,
    pub max_time: f64,
    pub source: Option<PathBuf>,
    pub test_fraction: f64,
    /// Training set for `fit` and `gridsearch`; `<out>/train.csv` when unset.
    pub train: Option<PathBuf>,
    /// Held-out set for `evaluate` and `curves`; `<out>/test.csv` when unset.
    pub test: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            kind: DataKind::Moons2,
            n: None,
            noise: 0.1,
            window: None,
            max_time: 100.0,
            source: None,
            test_fraction: 0.3,
            train: None,
            test: None,
        }
    }
}

impl DataConfig {
    pub fn n(&self) -> usize {
        self.n.unwrap_or(if self.kind.is_heart_failure() { 299 } else { 1000 })
    }

    pub fn window(&self) -> f64 {
        self.window.unwrap_or(if self.kind.is_heart_failure() { 30.0 } else { 2.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::LaplaceNn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaplaceConfig {
    /// Zero means a linear network.
    pub hidden_width: usize,
    /// Predictive Monte-Carlo samples.
    pub samples: usize,
    /// Post-hoc precision grid; empty keeps the training precision.
    pub precision_grid: Vec<f64>,
    pub train: TrainConfig,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        LaplaceConfig {
            hidden_width: 8,
            samples: 100,
            precision_grid: Vec::new(),
            train: TrainConfig {
                epochs: 300,
                precision: 1.0,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub hidden_width: Vec<usize>,
    pub precision: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub epochs: Vec<usize>,
    pub coordinate_descent: Vec<bool>,
    pub parallel: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            hidden_width: vec![0, 8],
            precision: vec![0.1, 1.0, 10.0],
            batch_size: vec![128],
            learning_rate: vec![0.01],
            epochs: vec![300],
            coordinate_descent: vec![false],
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesConfig {
    pub points: usize,
    /// Last age on the grid; the largest inspection age in the data when unset.
    pub t_max: Option<f64>,
    pub level: f64,
    /// Items to plot individually; the first three when empty.
    pub items: Vec<String>,
}

impl Default for CurvesConfig {
    fn default() -> Self {
        CurvesConfig {
            points: 101,
            t_max: None,
            level: 0.8,
            items: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub max_rhat: f64,
    pub min_ess: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            max_rhat: 1.05,
            min_ess: 100.0,
        }
    }
}

/// Everything one experiment needs. All randomness derives from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub laplace: LaplaceConfig,
    pub mcmc: NutsConfig,
    pub priors: WeibullPriors,
    pub spike_slab: SpikeSlabConfig,
    pub grid: GridConfig,
    pub curves: CurvesConfig,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out: PathBuf::from("out"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            laplace: LaplaceConfig::default(),
            mcmc: NutsConfig::default(),
            priors: WeibullPriors::default(),
            spike_slab: SpikeSlabConfig::default(),
            grid: GridConfig::default(),
            curves: CurvesConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads `path`, or the defaults when `None`. Relative paths inside the
    /// file are taken relative to the working directory.
    pub fn load(path: Option<&Path>) -> Result<Self, UsageError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))
    }

    pub fn apply_overrides(&mut self, seed: Option<u64>, out: Option<PathBuf>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out = o;
        }
    }

    pub fn train_path(&self) -> PathBuf {
        self.data.train.clone().unwrap_or_else(|| self.out.join("train.csv"))
    }

    pub fn test_path(&self) -> PathBuf {
        self.data.test.clone().unwrap_or_else(|| self.out.join("test.csv"))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.laplace.train
        }
    }

    pub fn nuts_config(&self) -> NutsConfig {
        NutsConfig {
            seed: self.seed,
            ..self.mcmc
        }
    }

    /// Checks values that serde cannot.
    pub fn validate(&self) -> Result<(), UsageError> {
        let bad = |m: String| Err(UsageError(m));
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return bad(format!("data.test_fraction {} not in (0, 1)", self.data.test_fraction));
        }
        if self.data.kind == DataKind::Heartfailure && self.data.source.is_none() {
            return bad("data.kind = \"heartfailure\" needs data.source (the clinical-records CSV)".into());
        }
        if let Err(e) = self.train_config().validate() {
            return bad(format!("laplace.train: {e}"));
        }
        if self.laplace.samples == 0 {
            return bad("laplace.samples must be positive".into());
        }
        if let Err(e) = self.nuts_config().validate() {
            return bad(format!("mcmc: {e}"));
        }
        if let Err(e) = self.priors.validate() {
            return bad(format!("priors: {e}"));
        }
        if let Err(e) = self.spike_slab.validate() {
            return bad(format!("spike_slab: {e}"));
        }
        if !(self.curves.level > 0.0 && self.curves.level < 1.0) || self.curves.points < 2 {
            return bad("curves: level must be in (0, 1) and points at least 2".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: ExperimentConfig = toml::from_str(
            "seed = 4\n[model]\nkind = \"spike-slab-discrete\"\n[mcmc]\nwarmup = 50\n[data]\nkind = \"heartfailure-surrogate\"\n",
        )
        .unwrap();
        assert_eq!(cfg.model.kind, ModelKind::SpikeSlabDiscrete);
        assert_eq!((cfg.mcmc.warmup, cfg.mcmc.chains), (50, 4));
        assert_eq!((cfg.data.n(), cfg.data.window()), (299, 30.0));
        assert_eq!(cfg.nuts_config().seed, 4);
    }

    #[test]
    fn unknown_keys_and_kinds_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("[model]\nkind = \"svm\"\n").is_err());
        assert!(toml::from_str::<ExperimentConfig>("sede = 1\n").is_err());
    }
}

//! Hamiltonian Monte Carlo for the Weibull regression models.

pub mod diagnostics;
pub mod models;
pub mod nuts;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use diagnostics::ParamDiagnostics;
pub use models::{
    compute_pip, fit_baseline, fit_linear_mvn, fit_spike_slab, hazard_draws, CoefficientPrior, InverseGammaPrior, McmcPredictor,
    SpikeSlabConfig, SpikeSlabFit, SpikeSlabMode, WeibullPriors, WeibullRegression,
};
pub use nuts::{nuts_sample, LogDensity};

use crate::dataset::Standardizer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NutsConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub target_accept: f64,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for NutsConfig {
    fn default() -> Self {
        NutsConfig {
            chains: 4,
            warmup: 20_000,
            draws: 1000,
            target_accept: 0.99,
            max_depth: 10,
            seed: 0,
        }
    }
}

impl NutsConfig {
    pub const MAX_TREE_DEPTH: usize = 12;

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::InvalidParameter("at least one chain is required".into()));
        }
        if self.draws == 0 {
            return Err(Error::InvalidParameter("at least one kept draw is required".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target acceptance {} not in (0, 1)",
                self.target_accept
            )));
        }
        if self.max_depth == 0 || self.max_depth > Self::MAX_TREE_DEPTH {
            return Err(Error::InvalidParameter(format!(
                "max tree depth {} not in 1..={}",
                self.max_depth,
                Self::MAX_TREE_DEPTH
            )));
        }
        Ok(())
    }
}

/// Post-warmup draws of every chain with their diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub names: Vec<String>,
    /// `chains[c][i][j]`: draw `i` of parameter `j` in chain `c`.
    pub chains: Vec<Vec<Vec<f64>>>,
    pub divergences: usize,
    pub step_sizes: Vec<f64>,
    pub mean_accept_stats: Vec<f64>,
    pub diagnostics: Vec<ParamDiagnostics>,
    pub warnings: Vec<String>,
}

impl PosteriorSamples {
    pub const DIVERGENCE_WARNING_FRACTION: f64 = 0.25;

    pub fn from_chains(
        names: Vec<String>,
        chains: Vec<Vec<Vec<f64>>>,
        divergences: usize,
        step_sizes: Vec<f64>,
        mean_accept_stats: Vec<f64>,
    ) -> Self {
        let diagnostics = names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let per_chain: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|d| d[j]).collect()).collect();
                diagnostics::summarize(name, &per_chain)
            })
            .collect();
        let total: usize = chains.iter().map(Vec::len).sum();
        let mut warnings = Vec::new();
        if total > 0 && divergences as f64 > Self::DIVERGENCE_WARNING_FRACTION * total as f64 {
            warnings.push(format!("{divergences} of {total} transitions diverged"));
        }
        PosteriorSamples {
            names,
            chains,
            divergences,
            step_sizes,
            mean_accept_stats,
            diagnostics,
            warnings,
        }
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidParameter(format!("no parameter named {name}")))
    }

    /// Draws of one parameter per chain.
    pub fn per_chain(&self, name: &str) -> Result<Vec<Vec<f64>>> {
        let j = self.index_of(name)?;
        Ok(self.chains.iter().map(|c| c.iter().map(|d| d[j]).collect()).collect())
    }

    /// Draws of one parameter, chains concatenated in order.
    pub fn flat(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.index_of(name)?;
        Ok(self.chains.iter().flatten().map(|d| d[j]).collect())
    }

    pub fn diagnostic(&self, name: &str) -> Result<&ParamDiagnostics> {
        Ok(&self.diagnostics[self.index_of(name)?])
    }

    /// Parameters failing `R̂ ≤ max_rhat` or `ESS ≥ min_ess`.
    pub fn convergence_failures(&self, max_rhat: f64, min_ess: f64) -> Vec<String> {
        let mut out = Vec::new();
        for d in &self.diagnostics {
            if d.degenerate {
                continue;
            }
            match d.rhat {
                Some(r) if r <= max_rhat => {}
                Some(r) => out.push(format!("{}: R-hat {r:.3} > {max_rhat}", d.name)),
                None if self.n_chains() >= 2 => out.push(format!("{}: R-hat undefined", d.name)),
                None => {}
            }
            match d.ess_bulk {
                Some(e) if e >= min_ess => {}
                Some(e) => out.push(format!("{}: ESS {e:.0} < {min_ess}", d.name)),
                None => out.push(format!("{}: ESS undefined", d.name)),
            }
        }
        out
    }
}

/// Which Weibull regression an MCMC artifact holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McmcModel {
    Baseline,
    LinearMvn,
    SpikeSlabContinuous,
    SpikeSlabDiscrete,
}

/// Samples plus everything needed to predict from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcArtifact {
    pub model: McmcModel,
    pub n_features: usize,
    pub standardizer: Standardizer,
    pub priors: WeibullPriors,
    pub spike_slab: Option<SpikeSlabConfig>,
    pub pip: Option<Vec<f64>>,
    pub nuts: NutsConfig,
    pub samples: PosteriorSamples,
}

impl McmcArtifact {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::write_json(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::read_json(path)
    }
}

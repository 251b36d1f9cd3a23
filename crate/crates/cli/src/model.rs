//! Fitted-model artifacts shared by `fit`, `evaluate` and `curves`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use intervalweib::dataset::{IntervalDataset, Standardizer};
use intervalweib::laplace::{
    tune_precision, LaplaceModelArtifact, LaplacePosterior, LaplacePredictor, PredictiveConfig,
};
use intervalweib::mcmc::{
    fit_baseline, fit_linear_mvn, fit_spike_slab, McmcArtifact, McmcModel, McmcPredictor, PosteriorSamples,
    SpikeSlabMode,
};
use intervalweib::metrics::HazardModel;
use intervalweib::nn::{map_train, MlpSpec};
use intervalweib::survival::HazardDraw;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelBody {
    Laplace {
        network: LaplaceModelArtifact,
        predictive: PredictiveConfig,
    },
    Mcmc(McmcArtifact),
}

/// The JSON file written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub n_features: usize,
    pub body: ModelBody,
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        intervalweib::write_json(self, path).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        intervalweib::read_json(path).with_context(|| format!("reading model artifact {}", path.display()))
    }

    pub fn standardizer(&self) -> &Standardizer {
        match &self.body {
            ModelBody::Laplace { network, .. } => &network.standardizer,
            ModelBody::Mcmc(m) => &m.standardizer,
        }
    }

    pub fn check_features(&self, ds: &IntervalDataset) -> Result<()> {
        if ds.n_features() != self.n_features {
            bail!(
                "dataset has {} features but the {:?} model was fitted on {}",
                ds.n_features(),
                self.kind,
                self.n_features
            );
        }
        Ok(())
    }

    /// Posterior hazard draws at raw (unstandardized) covariates.
    pub fn predictor(&self) -> Result<Predictor<'_>> {
        let inner = match &self.body {
            ModelBody::Laplace { network, predictive } => {
                Inner::Laplace(Box::new(LaplacePredictor::new(network.posterior()?, predictive)?))
            }
            ModelBody::Mcmc(m) => Inner::Mcmc(McmcPredictor {
                samples: &m.samples,
                t_fix: m.priors.t_fix,
            }),
        };
        Ok(Predictor {
            standardizer: self.standardizer(),
            inner,
        })
    }
}

enum Inner<'a> {
    Laplace(Box<LaplacePredictor>),
    Mcmc(McmcPredictor<'a>),
}

pub struct Predictor<'a> {
    standardizer: &'a Standardizer,
    inner: Inner<'a>,
}

impl HazardModel for Predictor<'_> {
    fn hazard_draws(&self, x: &[f64]) -> Vec<HazardDraw> {
        let z = self.standardizer.transform_row(x);
        match &self.inner {
            Inner::Laplace(p) => p.hazard_draws(&z),
            Inner::Mcmc(p) => p.hazard_draws(&z),
        }
    }
}

/// Outcome of `fit` beyond the artifact itself.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub kind: ModelKind,
    pub records: usize,
    pub items: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_marginal_likelihood: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pip: Option<Vec<f64>>,
    pub convergence_failures: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn fit_laplace(cfg: &ExperimentConfig, kind: ModelKind, raw: &IntervalDataset) -> Result<(ModelFile, FitReport)> {
    let standardizer = Standardizer::fit(raw)?;
    let ds = standardizer.apply(raw)?;
    let spec = MlpSpec::with_width(ds.n_features(), cfg.laplace.hidden_width);
    let train = cfg.train_config();
    let report = map_train(&spec, &ds, &train)?;
    let precision = if cfg.laplace.precision_grid.is_empty() {
        train.precision
    } else {
        tune_precision(&spec, &report.params, &ds, &cfg.laplace.precision_grid)?.0
    };
    let posterior = LaplacePosterior::fit(&spec, &report.params, &ds, precision)?;
    let evidence = posterior.log_marginal_likelihood;
    let mut warnings = Vec::new();
    if posterior.curvature == intervalweib::laplace::Curvature::Projected {
        warnings.push("exact curvature was indefinite; used the PSD-projected link Hessian".into());
    }
    let predictive = PredictiveConfig {
        samples: cfg.laplace.samples,
        mode: kind.predictive_mode().expect("laplace model kind"),
        seed: cfg.seed,
    };
    let file = ModelFile {
        kind,
        n_features: ds.n_features(),
        body: ModelBody::Laplace {
            network: LaplaceModelArtifact {
                spec,
                standardizer,
                train_config: train,
                final_objective: report.objective,
                posterior: posterior.to_artifact(),
            },
            predictive,
        },
    };
    let fit = FitReport {
        kind,
        records: ds.len(),
        items: ds.n_items(),
        log_marginal_likelihood: Some(evidence),
        map_objective: Some(report.objective),
        precision: Some(precision),
        pip: None,
        convergence_failures: Vec::new(),
        warnings,
    };
    Ok((file, fit))
}

pub fn fit_mcmc(cfg: &ExperimentConfig, kind: ModelKind, raw: &IntervalDataset) -> Result<(ModelFile, FitReport)> {
    let standardizer = Standardizer::fit(raw)?;
    let ds = standardizer.apply(raw)?;
    let nuts = cfg.nuts_config();
    let (model, samples, pip): (McmcModel, PosteriorSamples, Option<Vec<f64>>) = match kind {
        ModelKind::Baseline => (McmcModel::Baseline, fit_baseline(&ds, &cfg.priors, &nuts)?, None),
        ModelKind::LinearMvn => (McmcModel::LinearMvn, fit_linear_mvn(&ds, &cfg.priors, &nuts)?, None),
        ModelKind::SpikeSlabContinuous | ModelKind::SpikeSlabDiscrete => {
            let (model, mode) = if kind == ModelKind::SpikeSlabContinuous {
                (McmcModel::SpikeSlabContinuous, SpikeSlabMode::ContinuousNmig)
            } else {
                (McmcModel::SpikeSlabDiscrete, SpikeSlabMode::DiscreteMarginalized)
            };
            let fit = fit_spike_slab(&ds, &cfg.priors, &cfg.spike_slab, mode, &nuts)?;
            (model, fit.samples, Some(fit.pip))
        }
        ModelKind::LaplaceNn | ModelKind::Bnn => unreachable!("not an MCMC model"),
    };
    let d = cfg.diagnostics;
    let report = FitReport {
        kind,
        records: ds.len(),
        items: ds.n_items(),
        log_marginal_likelihood: None,
        map_objective: None,
        precision: None,
        pip: pip.clone(),
        convergence_failures: samples.convergence_failures(d.max_rhat, d.min_ess),
        warnings: samples.warnings.clone(),
    };
    let file = ModelFile {
        kind,
        n_features: ds.n_features(),
        body: ModelBody::Mcmc(McmcArtifact {
            model,
            n_features: ds.n_features(),
            standardizer,
            priors: cfg.priors,
            spike_slab: pip.as_ref().map(|_| cfg.spike_slab),
            pip,
            nuts,
            samples,
        }),
    };
    Ok((file, report))
}

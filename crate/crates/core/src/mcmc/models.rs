//! Weibull regression posteriors for NUTS.
//!
//! The baseline is parameterised by the reliability `R` at `t_fix` and the
//! shape `k`; the log rate follows as `η = ln(-ln R)/k - ln t_fix`. NUTS runs
//! on `(θ, [ln ψ], logit R, ln k)`, with Jacobian terms folded into the
//! priors. Reported draws are `(θ, [ψ], R, k)`.

use serde::{Deserialize, Serialize};

use super::nuts::{nuts_sample, LogDensity};
use super::{NutsConfig, PosteriorSamples};
use crate::dataset::IntervalDataset;
use crate::error::{Error, Result};
use crate::survival::{record_term, HazardDraw, RecordTerm};

const LN_2PI: f64 = 1.8378770664093453;

/// Priors on the baseline: `R ~ Beta(α, β)` and `ln k ~ N(μ, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeibullPriors {
    pub reliability_alpha: f64,
    pub reliability_beta: f64,
    pub log_shape_mean: f64,
    pub log_shape_sd: f64,
    pub t_fix: f64,
}

impl Default for WeibullPriors {
    fn default() -> Self {
        WeibullPriors {
            reliability_alpha: 5.0,
            reliability_beta: 1.0,
            log_shape_mean: 0.0,
            log_shape_sd: 0.5,
            t_fix: 1.0,
        }
    }
}

impl WeibullPriors {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("reliability_alpha", self.reliability_alpha),
            ("reliability_beta", self.reliability_beta),
            ("log_shape_sd", self.log_shape_sd),
            ("t_fix", self.t_fix),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        if !self.log_shape_mean.is_finite() {
            return Err(Error::InvalidParameter("log_shape_mean must be finite".into()));
        }
        Ok(())
    }
}

/// Inverse-gamma hypervariance `ψ ~ IG(shape, scale)` scaling both
/// mixture components of one coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InverseGammaPrior {
    pub shape: f64,
    pub scale: f64,
}

impl Default for InverseGammaPrior {
    fn default() -> Self {
        InverseGammaPrior {
            shape: 5.0,
            scale: 4.0,
        }
    }
}

/// Two-component normal mixture prior on each coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpikeSlabConfig {
    pub spike_variance: f64,
    pub slab_variance: f64,
    pub inclusion_probability: f64,
    #[serde(default)]
    pub hypervariance: Option<InverseGammaPrior>,
}

impl Default for SpikeSlabConfig {
    fn default() -> Self {
        SpikeSlabConfig {
            spike_variance: 0.0025,
            slab_variance: 1.0,
            inclusion_probability: 0.5,
            hypervariance: None,
        }
    }
}

impl SpikeSlabConfig {
    pub const MIN_VARIANCE_RATIO: f64 = 100.0;

    pub fn new(spike_variance: f64, slab_variance: f64, inclusion_probability: f64) -> Result<Self> {
        let cfg = SpikeSlabConfig {
            spike_variance,
            slab_variance,
            inclusion_probability,
            hypervariance: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spike_variance > 0.0 && self.slab_variance.is_finite()) {
            return Err(Error::InvalidParameter(
                "spike and slab variances must be positive and finite".into(),
            ));
        }
        if self.slab_variance / self.spike_variance < Self::MIN_VARIANCE_RATIO {
            return Err(Error::InvalidParameter(format!(
                "slab/spike variance ratio {} is below {}",
                self.slab_variance / self.spike_variance,
                Self::MIN_VARIANCE_RATIO
            )));
        }
        if !(self.inclusion_probability > 0.0 && self.inclusion_probability < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "inclusion probability {} not in (0, 1)",
                self.inclusion_probability
            )));
        }
        if let Some(h) = self.hypervariance {
            if !(h.shape > 0.0 && h.scale > 0.0) {
                return Err(Error::InvalidParameter("hypervariance prior must be positive".into()));
            }
        }
        Ok(())
    }

    /// Posterior probability of the slab component given `θ` and `ψ`.
    pub fn slab_responsibility(&self, theta: f64, psi: f64) -> f64 {
        let [l0, l1] = self.component_log_densities(theta, psi);
        1.0 / (1.0 + (l0 - l1).exp())
    }

    /// `ln π_γ + ln N(θ; 0, ψ v_γ)` for `γ = 0` (spike) and `γ = 1` (slab).
    fn component_log_densities(&self, theta: f64, psi: f64) -> [f64; 2] {
        let p = self.inclusion_probability;
        let comp = |w: f64, v: f64| w.ln() - 0.5 * (LN_2PI + v.ln()) - 0.5 * theta * theta / v;
        [
            comp(1.0 - p, psi * self.spike_variance),
            comp(p, psi * self.slab_variance),
        ]
    }
}

/// How the inclusion indicators of the spike-and-slab prior are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeSlabMode {
    /// Mixture density evaluated in closed form (optionally with NMIG
    /// hypervariances).
    ContinuousNmig,
    /// Indicators enumerated and summed out per coefficient.
    DiscreteMarginalized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientPrior {
    /// No covariates: the baseline model.
    None,
    /// `θ ~ N(0, v I)`.
    Normal { variance: f64 },
    SpikeSlab { config: SpikeSlabConfig, mode: SpikeSlabMode },
}

/// Joint log posterior of a Weibull regression on interval data.
pub struct WeibullRegression<'a> {
    ds: &'a IntervalDataset,
    priors: WeibullPriors,
    coefficients: CoefficientPrior,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'a> WeibullRegression<'a> {
    pub fn new(ds: &'a IntervalDataset, priors: WeibullPriors, coefficients: CoefficientPrior) -> Result<Self> {
        priors.validate()?;
        match coefficients {
            CoefficientPrior::Normal { variance } if !(variance > 0.0 && variance.is_finite()) => {
                return Err(Error::InvalidParameter(format!("prior variance {variance} must be positive")))
            }
            CoefficientPrior::SpikeSlab { config, .. } => config.validate()?,
            _ => {}
        }
        Ok(WeibullRegression {
            ds,
            priors,
            coefficients,
        })
    }

    pub fn n_theta(&self) -> usize {
        match self.coefficients {
            CoefficientPrior::None => 0,
            _ => self.ds.n_features(),
        }
    }

    fn n_psi(&self) -> usize {
        match self.coefficients {
            CoefficientPrior::SpikeSlab { config, .. } if config.hypervariance.is_some() => self.ds.n_features(),
            _ => 0,
        }
    }

    fn rho_index(&self) -> usize {
        self.n_theta() + self.n_psi()
    }

    /// Unconstrained starting point: zero coefficients, unit hypervariances,
    /// and the baseline at its prior mean reliability and median shape.
    pub fn default_init(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.dim()];
        let (a, b) = (self.priors.reliability_alpha, self.priors.reliability_beta);
        q[self.rho_index()] = (a / b).ln();
        q[self.rho_index() + 1] = self.priors.log_shape_mean;
        q
    }

    fn coefficient_log_prior(&self, theta: &[f64], omega: &[f64], g_theta: &mut [f64], g_omega: &mut [f64]) -> f64 {
        match self.coefficients {
            CoefficientPrior::None => 0.0,
            CoefficientPrior::Normal { variance } => theta
                .iter()
                .zip(g_theta.iter_mut())
                .map(|(t, g)| {
                    *g += -t / variance;
                    -0.5 * t * t / variance
                })
                .sum(),
            CoefficientPrior::SpikeSlab { config, mode } => {
                let mut lp = 0.0;
                for (f, &t) in theta.iter().enumerate() {
                    let psi = omega.get(f).map_or(1.0, |w| w.exp());
                    let variances = [psi * config.spike_variance, psi * config.slab_variance];
                    let (value, resp) = match mode {
                        SpikeSlabMode::ContinuousNmig => {
                            let [l0, l1] = config.component_log_densities(t, psi);
                            let r1 = sigmoid(l1 - l0);
                            (l0.max(l1) + (-(l0 - l1).abs()).exp().ln_1p(), [1.0 - r1, r1])
                        }
                        SpikeSlabMode::DiscreteMarginalized => {
                            let logs = config.component_log_densities(t, psi);
                            let top = logs[0].max(logs[1]);
                            let weights = logs.map(|l| (l - top).exp());
                            let total: f64 = weights.iter().sum();
                            (top + total.ln(), weights.map(|w| w / total))
                        }
                    };
                    lp += value;
                    g_theta[f] += -t * (resp[0] / variances[0] + resp[1] / variances[1]);
                    if let (Some(&w), Some(h)) = (omega.get(f), config.hypervariance) {
                        g_omega[f] += resp
                            .iter()
                            .zip(&variances)
                            .map(|(r, v)| r * (-0.5 + 0.5 * t * t / v))
                            .sum::<f64>();
                        // IG(a, b) on ψ = e^ω, with the Jacobian
                        lp += -h.shape * w - h.scale * (-w).exp();
                        g_omega[f] += -h.shape + h.scale * (-w).exp();
                    }
                }
                lp
            }
        }
    }
}

impl LogDensity for WeibullRegression<'_> {
    fn dim(&self) -> usize {
        self.n_theta() + self.n_psi() + 2
    }

    fn log_density(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let nt = self.n_theta();
        let ir = self.rho_index();
        let ik = ir + 1;
        let (rho, kappa) = (q[ir], q[ik]);
        grad.iter_mut().for_each(|g| *g = 0.0);

        let pr = &self.priors;
        let neg_log_r = softplus(-rho);
        let mut lp = -pr.reliability_alpha * neg_log_r - pr.reliability_beta * softplus(rho);
        let r = sigmoid(rho);
        grad[ir] += pr.reliability_alpha * (1.0 - r) - pr.reliability_beta * r;
        let z = (kappa - pr.log_shape_mean) / pr.log_shape_sd;
        lp += -0.5 * z * z;
        grad[ik] += -z / pr.log_shape_sd;

        {
            let (g_theta, rest) = grad.split_at_mut(nt);
            let g_omega = &mut rest[..ir - nt];
            lp += self.coefficient_log_prior(&q[..nt], &q[nt..ir], g_theta, g_omega);
        }

        let k = kappa.exp();
        let log_neg_log_r = neg_log_r.ln();
        let eta = log_neg_log_r / k - pr.t_fix.ln();
        let (mut d_eta, mut d_kappa) = (0.0, 0.0);
        let theta = &q[..nt];
        for rec in self.ds.records() {
            let g: f64 = theta.iter().zip(&rec.x).map(|(a, b)| a * b).sum();
            let t = record_term(rec.failed(), g, eta, kappa, rec.t_agelt, rec.t_age);
            lp += t.value;
            let dg = t.grad[RecordTerm::G];
            if dg != 0.0 {
                for (gr, x) in grad[..nt].iter_mut().zip(&rec.x) {
                    *gr += dg * x;
                }
            }
            d_eta += t.grad[RecordTerm::ETA];
            d_kappa += t.grad[RecordTerm::KAPPA];
        }
        grad[ir] += d_eta * (-sigmoid(-rho) / (k * neg_log_r));
        grad[ik] += d_kappa - d_eta * log_neg_log_r / k;
        lp
    }

    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.n_theta()).map(|f| format!("theta[{f}]")).collect();
        names.extend((1..=self.n_psi()).map(|f| format!("psi[{f}]")));
        names.push("R".into());
        names.push("k".into());
        names
    }

    fn constrain(&self, q: &[f64]) -> Vec<f64> {
        let nt = self.n_theta();
        let ir = self.rho_index();
        let mut out = q[..nt].to_vec();
        out.extend(q[nt..ir].iter().map(|w| w.exp()));
        out.push(sigmoid(q[ir]));
        out.push(q[ir + 1].exp());
        out
    }
}

/// Baseline model: no covariates.
pub fn fit_baseline(ds: &IntervalDataset, priors: &WeibullPriors, cfg: &NutsConfig) -> Result<PosteriorSamples> {
    let model = WeibullRegression::new(ds, *priors, CoefficientPrior::None)?;
    nuts_sample(&model, &model.default_init(), cfg)
}

/// Linear regression with `θ ~ N(0, I)`.
pub fn fit_linear_mvn(ds: &IntervalDataset, priors: &WeibullPriors, cfg: &NutsConfig) -> Result<PosteriorSamples> {
    let model = WeibullRegression::new(ds, *priors, CoefficientPrior::Normal { variance: 1.0 })?;
    nuts_sample(&model, &model.default_init(), cfg)
}

#[derive(Debug, Clone)]
pub struct SpikeSlabFit {
    pub samples: PosteriorSamples,
    pub pip: Vec<f64>,
}

pub fn fit_spike_slab(
    ds: &IntervalDataset,
    priors: &WeibullPriors,
    ss: &SpikeSlabConfig,
    mode: SpikeSlabMode,
    cfg: &NutsConfig,
) -> Result<SpikeSlabFit> {
    let model = WeibullRegression::new(ds, *priors, CoefficientPrior::SpikeSlab { config: *ss, mode })?;
    let samples = nuts_sample(&model, &model.default_init(), cfg)?;
    let pip = compute_pip(&samples, ss)?;
    Ok(SpikeSlabFit { samples, pip })
}

/// Posterior inclusion probability per coefficient: the mean slab
/// responsibility over all draws.
pub fn compute_pip(samples: &PosteriorSamples, ss: &SpikeSlabConfig) -> Result<Vec<f64>> {
    let n_theta = samples.names.iter().filter(|n| n.starts_with("theta[")).count();
    let mut pip = Vec::with_capacity(n_theta);
    for f in 1..=n_theta {
        let theta = samples.flat(&format!("theta[{f}]"))?;
        let psi = samples.flat(&format!("psi[{f}]")).ok();
        let total: f64 = theta
            .iter()
            .enumerate()
            .map(|(i, &t)| ss.slab_responsibility(t, psi.as_ref().map_or(1.0, |p| p[i])))
            .sum();
        pip.push(total / theta.len().max(1) as f64);
    }
    Ok(pip)
}

/// Per-draw hazards at covariates `x` (`x` ignored by the baseline).
pub fn hazard_draws(samples: &PosteriorSamples, t_fix: f64, x: &[f64]) -> Result<Vec<HazardDraw>> {
    let ir = samples.index_of("R")?;
    let ik = samples.index_of("k")?;
    let theta: Vec<usize> = (1..=x.len())
        .map_while(|f| samples.index_of(&format!("theta[{f}]")).ok())
        .collect();
    if !theta.is_empty() && theta.len() != x.len() {
        return Err(Error::InvalidParameter(format!(
            "model has {} coefficients, covariates have {}",
            theta.len(),
            x.len()
        )));
    }
    let ln_t_fix = t_fix.ln();
    Ok(samples
        .chains
        .iter()
        .flatten()
        .map(|d| {
            let k = d[ik];
            let eta = (-d[ir].ln()).ln() / k - ln_t_fix;
            let g: f64 = theta.iter().zip(x).map(|(&i, v)| d[i] * v).sum();
            HazardDraw {
                log_scale: g + k * eta,
                shape: k,
            }
        })
        .collect())
}

/// Posterior draws bound to the prior's reference age, for prediction.
pub struct McmcPredictor<'a> {
    pub samples: &'a PosteriorSamples,
    pub t_fix: f64,
}

impl crate::metrics::HazardModel for McmcPredictor<'_> {
    /// Panics when `x` does not match the fitted coefficient count.
    fn hazard_draws(&self, x: &[f64]) -> Vec<HazardDraw> {
        hazard_draws(self.samples, self.t_fix, x).expect("covariate dimension matches the model")
    }
}

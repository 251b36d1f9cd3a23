//! Laplace approximation around the MAP network with a generalized
//! Gauss-Newton covariance, the Laplace evidence, and Monte-Carlo posterior
//! predictives.
//!
//! Curvature lives in the network's unconstrained output coordinates
//! `z = (η, κ)`. For each record the link Hessian
//! `H = -∇²_z ln P[y | z]` is combined with the per-sample Jacobian as
//! `Jᵀ H J`; summing these and adding `ρ I` gives the posterior precision.
//!
//! The interval link is not a canonical link, so a record's `H` can be
//! indefinite. The exact per-record curvature is used whenever the summed
//! precision is positive definite (it then equals the exact Hessian for a
//! network without hidden layers). Otherwise every `H` is projected onto the
//! PSD cone by clipping negative eigenvalues and the sum is rebuilt.

use std::path::Path;

use nalgebra::{DMatrix, Matrix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{IntervalDataset, Standardizer};
use crate::error::{Error, Result};
use crate::nn::{self, MlpSpec, NetOutput, ParamVector, TrainConfig};
use crate::survival::{self, record_term, HazardDraw, RecordTerm};

const LN_2PI: f64 = 1.8378770664093453;

/// `-∇²_{(η,κ)} ln P[y | η, κ]` for one interval, before any projection.
pub fn link_hessian_raw(failed: bool, eta: f64, kappa: f64, t1: f64, t2: f64) -> Matrix2<f64> {
    let t = record_term(failed, 0.0, eta, kappa, t1, t2);
    let (e, k) = (RecordTerm::ETA, RecordTerm::KAPPA);
    Matrix2::new(-t.hess[e][e], -t.hess[e][k], -t.hess[k][e], -t.hess[k][k])
}

/// Link Hessian with negative eigenvalues clipped to zero.
pub fn link_hessian(failed: bool, eta: f64, kappa: f64, t1: f64, t2: f64) -> Matrix2<f64> {
    project_psd(&link_hessian_raw(failed, eta, kappa, t1, t2))
}

pub fn project_psd(m: &Matrix2<f64>) -> Matrix2<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    &eig.eigenvectors * Matrix2::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

/// Which per-record curvature the GGN was assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Curvature {
    Exact,
    Projected,
}

/// `Σ_i J_iᵀ H_i J_i + ρ I`.
pub fn ggn_precision(
    spec: &MlpSpec,
    phi: &[f64],
    ds: &IntervalDataset,
    precision: f64,
    curvature: Curvature,
) -> DMatrix<f64> {
    let p = spec.n_params();
    let kap = spec.kappa_index();
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut row = vec![0.0; p];
    for r in ds.records() {
        let out = nn::log_rate_gradient(spec, phi, &r.x, &mut row);
        let h = match curvature {
            Curvature::Exact => {
                link_hessian_raw(r.failed(), out.log_rate, out.log_shape, r.t_agelt, r.t_age)
            }
            Curvature::Projected => {
                link_hessian(r.failed(), out.log_rate, out.log_shape, r.t_agelt, r.t_age)
            }
        };
        let (h00, h01, h11) = (h[(0, 0)], 0.5 * (h[(0, 1)] + h[(1, 0)]), h[(1, 1)]);
        // J = [row; e_κ]  =>  JᵀHJ = h00 row rowᵀ + h01 (row e_κᵀ + e_κ rowᵀ) + h11 e_κ e_κᵀ
        for j in 0..p {
            let rj = row[j];
            if rj == 0.0 {
                continue;
            }
            let s = h00 * rj;
            for i in j..p {
                a[(i, j)] += s * row[i];
            }
        }
        for i in 0..p {
            if i >= kap {
                a[(i, kap)] += h01 * row[i];
            } else {
                a[(kap, i)] += h01 * row[i];
            }
        }
        a[(kap, kap)] += h01 * row[kap] + h11;
    }
    for i in 0..p {
        a[(i, i)] += precision;
    }
    // mirror the lower triangle
    for j in 0..p {
        for i in (j + 1)..p {
            a[(j, i)] = a[(i, j)];
        }
    }
    a
}

/// GGN covariance with the log-determinant needed by the evidence.
#[derive(Debug, Clone)]
pub struct GgnCovariance {
    pub covariance: DMatrix<f64>,
    pub log_det_covariance: f64,
    pub curvature: Curvature,
}

/// Inverts the GGN precision by Cholesky, falling back to projected
/// curvature when the exact sum is not positive definite.
pub fn ggn_covariance(
    spec: &MlpSpec,
    phi: &[f64],
    ds: &IntervalDataset,
    precision: f64,
) -> Result<GgnCovariance> {
    if !(precision > 0.0 && precision.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "prior precision {precision} must be positive"
        )));
    }
    for curvature in [Curvature::Exact, Curvature::Projected] {
        let a = ggn_precision(spec, phi, ds, precision, curvature);
        if let Some(chol) = a.cholesky() {
            let log_det_precision: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let inv = chol.inverse();
            let covariance = (&inv + inv.transpose()) * 0.5;
            return Ok(GgnCovariance {
                covariance,
                log_det_covariance: -log_det_precision,
                curvature,
            });
        }
    }
    Err(Error::Numerical(
        "GGN precision is not positive definite even after PSD projection".into(),
    ))
}

/// Laplace evidence `ℓ* + (P/2) ln 2π + ½ ln det Σ`, where `ℓ*` is the log
/// joint (likelihood plus normalised prior) at the MAP.
pub fn log_marginal_likelihood(log_joint_at_map: f64, covariance: &DMatrix<f64>) -> Result<f64> {
    let p = covariance.nrows();
    let chol = covariance
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    evidence_from_log_det(log_joint_at_map, log_det, p)
}

fn evidence_from_log_det(log_joint_at_map: f64, log_det_covariance: f64, p: usize) -> Result<f64> {
    let value = log_joint_at_map + 0.5 * p as f64 * LN_2PI + 0.5 * log_det_covariance;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical(format!(
            "non-finite evidence (log det Σ = {log_det_covariance})"
        )))
    }
}

/// Log likelihood plus the normalised Gaussian log prior.
pub fn log_joint(spec: &MlpSpec, phi: &[f64], ds: &IntervalDataset, precision: f64) -> f64 {
    let (ll, _) = nn::log_likelihood(spec, phi, ds, None, 1.0);
    ll + nn::log_prior(phi, precision, true)
}

/// Gaussian posterior `N(φ*, Σ)` over network parameters.
#[derive(Debug, Clone)]
pub struct LaplacePosterior {
    pub spec: MlpSpec,
    pub map: ParamVector,
    pub covariance: DMatrix<f64>,
    pub precision: f64,
    pub log_marginal_likelihood: f64,
    pub curvature: Curvature,
    scale: DMatrix<f64>,
}

impl LaplacePosterior {
    /// Laplace/GGN posterior around `map` at prior precision `ρ`.
    pub fn fit(spec: &MlpSpec, map: &ParamVector, ds: &IntervalDataset, precision: f64) -> Result<Self> {
        let ggn = ggn_covariance(spec, map.as_slice(), ds, precision)?;
        let ell = log_joint(spec, map.as_slice(), ds, precision);
        let evidence = evidence_from_log_det(ell, ggn.log_det_covariance, spec.n_params())?;
        let mut post = Self::from_covariance(*spec, map.clone(), ggn.covariance, precision)?;
        post.log_marginal_likelihood = evidence;
        post.curvature = ggn.curvature;
        Ok(post)
    }

    /// Posterior with a given covariance. A singular (PSD) covariance is
    /// accepted; the sampling factor then comes from an eigendecomposition.
    pub fn from_covariance(
        spec: MlpSpec,
        map: ParamVector,
        covariance: DMatrix<f64>,
        precision: f64,
    ) -> Result<Self> {
        let p = spec.n_params();
        if map.len() != p || covariance.shape() != (p, p) {
            return Err(Error::InvalidParameter(format!(
                "posterior dimensions do not match {p} parameters"
            )));
        }
        let scale = sqrt_factor(&covariance)?;
        Ok(LaplacePosterior {
            spec,
            map,
            covariance,
            precision,
            log_marginal_likelihood: f64::NAN,
            curvature: Curvature::Exact,
            scale,
        })
    }

    pub fn n_params(&self) -> usize {
        self.spec.n_params()
    }

    /// Factor `L` with `L Lᵀ = Σ`.
    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    /// `S` parameter offsets `φ_s - φ* = L ε_s` from a seeded normal stream.
    pub fn sample_offsets(&self, samples: usize, seed: u64) -> Vec<Vec<f64>> {
        let p = self.n_params();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..samples)
            .map(|_| {
                let eps = nalgebra::DVector::from_iterator(
                    p,
                    (0..p).map(|_| StandardNormal.sample(&mut rng)),
                );
                (&self.scale * eps).iter().copied().collect()
            })
            .collect()
    }

    pub fn to_artifact(&self) -> PosteriorArtifact {
        PosteriorArtifact {
            phi_star: self.map.clone(),
            sigma: self.covariance.transpose().iter().copied().collect(),
            rho: self.precision,
            evidence: self.log_marginal_likelihood,
            curvature: self.curvature,
        }
    }

    pub fn from_artifact(spec: MlpSpec, a: &PosteriorArtifact) -> Result<Self> {
        let p = spec.n_params();
        if a.sigma.len() != p * p {
            return Err(Error::InvalidParameter(format!(
                "covariance has {} entries, expected {}",
                a.sigma.len(),
                p * p
            )));
        }
        let cov = DMatrix::from_row_slice(p, p, &a.sigma);
        let mut post = Self::from_covariance(spec, a.phi_star.clone(), cov, a.rho)?;
        post.log_marginal_likelihood = a.evidence;
        post.curvature = a.curvature;
        Ok(post)
    }
}

fn sqrt_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = cov.clone().cholesky() {
        return Ok(chol.l());
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let tol = 1e-12 * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().any(|&l| l < -tol || !l.is_finite()) {
        return Err(Error::Numerical("covariance is not positive semi-definite".into()));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Post-hoc prior precision: the grid value maximising the evidence with the
/// MAP held fixed. Ties go to the smaller precision.
pub fn tune_precision(
    spec: &MlpSpec,
    map: &ParamVector,
    ds: &IntervalDataset,
    grid: &[f64],
) -> Result<(f64, Vec<(f64, f64)>)> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty precision grid".into()));
    }
    let mut table = Vec::with_capacity(grid.len());
    for &rho in grid {
        let post = LaplacePosterior::fit(spec, map, ds, rho)?;
        table.push((rho, post.log_marginal_likelihood));
    }
    let best = table
        .iter()
        .copied()
        .reduce(|best, cand| {
            if cand.1 > best.1 || (cand.1 == best.1 && cand.0 < best.0) {
                cand
            } else {
                best
            }
        })
        .unwrap();
    Ok((best.0, table))
}

/// How the predictive maps posterior draws to outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictiveMode {
    /// Network linearised at the MAP.
    Glm,
    /// Full nonlinear network per draw.
    Bnn,
    /// MAP plug-in.
    Map,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictiveConfig {
    pub samples: usize,
    pub mode: PredictiveMode,
    pub seed: u64,
}

impl Default for PredictiveConfig {
    fn default() -> Self {
        PredictiveConfig {
            samples: 100,
            mode: PredictiveMode::Glm,
            seed: 0,
        }
    }
}

/// Monte-Carlo predictive value and the per-draw values behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictive {
    pub mean: f64,
    pub draws: Vec<f64>,
}

/// Samples a posterior once and evaluates predictives for many inputs with
/// the same draws.
#[derive(Debug, Clone)]
pub struct LaplacePredictor {
    posterior: LaplacePosterior,
    offsets: Vec<Vec<f64>>,
    mode: PredictiveMode,
}

impl LaplacePredictor {
    pub fn new(posterior: LaplacePosterior, cfg: &PredictiveConfig) -> Result<Self> {
        if cfg.samples == 0 {
            return Err(Error::InvalidParameter("predictive needs at least one sample".into()));
        }
        let offsets = match cfg.mode {
            PredictiveMode::Map => vec![vec![0.0; posterior.n_params()]],
            _ => posterior.sample_offsets(cfg.samples, cfg.seed),
        };
        Ok(LaplacePredictor {
            posterior,
            offsets,
            mode: cfg.mode,
        })
    }

    pub fn posterior(&self) -> &LaplacePosterior {
        &self.posterior
    }

    pub fn mode(&self) -> PredictiveMode {
        self.mode
    }

    /// Network outputs `(η, κ)` for every posterior draw at `x`.
    pub fn output_draws(&self, x: &[f64]) -> Vec<NetOutput> {
        let spec = &self.posterior.spec;
        let map = self.posterior.map.as_slice();
        let kap = spec.kappa_index();
        match self.mode {
            PredictiveMode::Map => vec![nn::forward(spec, map, x)],
            PredictiveMode::Glm => {
                let mut row = vec![0.0; spec.n_params()];
                let at_map = nn::log_rate_gradient(spec, map, x, &mut row);
                self.offsets
                    .iter()
                    .map(|d| NetOutput {
                        log_rate: at_map.log_rate + row.iter().zip(d).map(|(j, v)| j * v).sum::<f64>(),
                        log_shape: at_map.log_shape + d[kap],
                    })
                    .collect()
            }
            PredictiveMode::Bnn => {
                let mut phi = map.to_vec();
                self.offsets
                    .iter()
                    .map(|d| {
                        for ((p, m), v) in phi.iter_mut().zip(map).zip(d) {
                            *p = m + v;
                        }
                        nn::forward(spec, &phi, x)
                    })
                    .collect()
            }
        }
    }

    /// Failure probability over `[t1, t2]`, averaged over draws.
    pub fn failure_probability(&self, x: &[f64], t1: f64, t2: f64) -> Predictive {
        let draws: Vec<f64> = self
            .output_draws(x)
            .into_iter()
            .map(|o| survival::failure_probability(o.log_scale(), o.shape(), t1, t2))
            .collect();
        Predictive {
            mean: running_mean(&draws),
            draws,
        }
    }
}

impl crate::metrics::HazardModel for LaplacePredictor {
    fn hazard_draws(&self, x: &[f64]) -> Vec<HazardDraw> {
        self.output_draws(x)
            .into_iter()
            .map(|o| HazardDraw {
                log_scale: o.log_scale(),
                shape: o.shape(),
            })
            .collect()
    }
}

/// Incremental mean; exact when all values are equal.
pub(crate) fn running_mean(values: &[f64]) -> f64 {
    values
        .iter()
        .enumerate()
        .fold(0.0, |m, (i, v)| m + (v - m) / (i + 1) as f64)
}

/// GLM (linearised) posterior predictive failure probability over `[t1, t2]`.
pub fn glm_predict(
    posterior: &LaplacePosterior,
    x: &[f64],
    t1: f64,
    t2: f64,
    cfg: &PredictiveConfig,
) -> Result<Predictive> {
    let cfg = PredictiveConfig {
        mode: PredictiveMode::Glm,
        ..*cfg
    };
    Ok(LaplacePredictor::new(posterior.clone(), &cfg)?.failure_probability(x, t1, t2))
}

/// Nonlinear (BNN) posterior predictive failure probability over `[t1, t2]`.
pub fn bnn_predict(
    posterior: &LaplacePosterior,
    x: &[f64],
    t1: f64,
    t2: f64,
    cfg: &PredictiveConfig,
) -> Result<Predictive> {
    let cfg = PredictiveConfig {
        mode: PredictiveMode::Bnn,
        ..*cfg
    };
    Ok(LaplacePredictor::new(posterior.clone(), &cfg)?.failure_probability(x, t1, t2))
}

/// Persisted Laplace posterior: `Σ` is stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorArtifact {
    pub phi_star: ParamVector,
    pub sigma: Vec<f64>,
    pub rho: f64,
    pub evidence: f64,
    pub curvature: Curvature,
}

/// Network plus Laplace posterior, as written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceModelArtifact {
    pub spec: MlpSpec,
    pub standardizer: Standardizer,
    pub train_config: TrainConfig,
    pub final_objective: f64,
    pub posterior: PosteriorArtifact,
}

impl LaplaceModelArtifact {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::write_json(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::read_json(path)
    }

    pub fn posterior(&self) -> Result<LaplacePosterior> {
        LaplacePosterior::from_artifact(self.spec, &self.posterior)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TestRecord;

    #[test]
    fn link_hessian_example() {
        let h = link_hessian_raw(false, 0.0, 2f64.ln(), 0.0, 1.0);
        assert!((h[(0, 0)] - 4.0).abs() < 1e-12, "{h}");
    }

    #[test]
    fn link_hessian_vanishes_on_empty_interval() {
        assert_eq!(link_hessian_raw(false, 0.3, 0.2, 1.0, 1.0), Matrix2::zeros());
        assert_eq!(link_hessian(true, 0.3, 0.2, 1.0, 1.0), Matrix2::zeros());
    }

    #[test]
    fn projection_clips_negative_eigenvalues() {
        let m = Matrix2::new(1.0, 2.0, 2.0, 1.0); // eigenvalues 3, -1
        let p = project_psd(&m);
        let eig = p.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-12));
        assert!((p[(0, 0)] - 1.5).abs() < 1e-12 && (p[(0, 1)] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_gives_prior_covariance() {
        let spec = MlpSpec::linear(2);
        let ds = IntervalDataset::empty(2);
        let phi = ParamVector::init(&spec, 0);
        let g = ggn_covariance(&spec, phi.as_slice(), &ds, 4.0).unwrap();
        let want = DMatrix::<f64>::identity(4, 4) * 0.25;
        assert!((g.covariance - want).amax() < 1e-15);
    }

    #[test]
    fn evidence_formula() {
        let one = DMatrix::<f64>::identity(1, 1);
        let v = log_marginal_likelihood(0.0, &one).unwrap();
        assert!((v - 0.9189385332046727).abs() < 1e-15);
        let eye = DMatrix::<f64>::identity(5, 5);
        let v = log_marginal_likelihood(-3.0, &eye).unwrap();
        assert!((v - (-3.0 + 2.5 * LN_2PI)).abs() < 1e-12);
    }

    #[test]
    fn evidence_exact_for_conjugate_gaussian() {
        // y_i ~ N(θ, σ²), θ ~ N(0, 1/ρ): the log joint is quadratic in θ.
        let ys = [0.3, -0.1, 0.8, 1.2, 0.4];
        let (sigma2, rho) = (0.5f64, 2.0f64);
        let n = ys.len() as f64;
        let post_prec = rho + n / sigma2;
        let post_mean = ys.iter().sum::<f64>() / sigma2 / post_prec;
        let log_joint = |t: f64| {
            ys.iter()
                .map(|y| -0.5 * (y - t).powi(2) / sigma2 - 0.5 * (2.0 * std::f64::consts::PI * sigma2).ln())
                .sum::<f64>()
                - 0.5 * rho * t * t
                + 0.5 * (rho / (2.0 * std::f64::consts::PI)).ln()
        };
        let cov = DMatrix::from_element(1, 1, 1.0 / post_prec);
        let laplace = log_marginal_likelihood(log_joint(post_mean), &cov).unwrap();
        // exact: y ~ N(0, σ² I + (1/ρ) 11ᵀ)
        let m = DMatrix::from_fn(5, 5, |i, j| if i == j { sigma2 } else { 0.0 })
            + DMatrix::from_element(5, 5, 1.0 / rho);
        let chol = m.clone().cholesky().unwrap();
        let yv = nalgebra::DVector::from_row_slice(&ys);
        let quad = yv.dot(&chol.solve(&yv));
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let exact = -0.5 * quad - 0.5 * logdet - 2.5 * LN_2PI;
        assert!((laplace - exact).abs() < 1e-8, "{laplace} vs {exact}");
    }

    fn toy() -> IntervalDataset {
        let mut records = Vec::new();
        for i in 0..30 {
            let x = vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()];
            let fail_at = 1 + i % 3;
            for w in 0..fail_at {
                let y = (w + 1 == fail_at) as u8;
                records.push(TestRecord::new(format!("i{i}"), x.clone(), y, w as f64, w as f64 + 1.0).unwrap());
            }
        }
        IntervalDataset::new(records, 2).unwrap()
    }

    #[test]
    fn singleton_grid_returns_its_value() {
        let spec = MlpSpec::linear(2);
        let phi = ParamVector::init(&spec, 3);
        let (rho, table) = tune_precision(&spec, &phi, &toy(), &[0.7]).unwrap();
        assert_eq!(rho, 0.7);
        assert_eq!(table.len(), 1);
        assert!(tune_precision(&spec, &phi, &toy(), &[]).is_err());
    }

    #[test]
    fn tuned_precision_ignores_grid_order() {
        let spec = MlpSpec::one_hidden(2, 3).unwrap();
        let phi = ParamVector::init(&spec, 5);
        let ds = toy();
        let grid = [0.01, 0.1, 1.0, 10.0, 100.0];
        let mut rev = grid;
        rev.reverse();
        let a = tune_precision(&spec, &phi, &ds, &grid).unwrap().0;
        let b = tune_precision(&spec, &phi, &ds, &rev).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn large_precision_shrinks_covariance() {
        let spec = MlpSpec::linear(2);
        let phi = ParamVector::init(&spec, 1);
        let ds = toy();
        let small = ggn_covariance(&spec, phi.as_slice(), &ds, 1e8).unwrap();
        assert!(small.covariance.amax() < 1e-7);
    }

    #[test]
    fn degenerate_posterior_collapses_to_map() {
        let spec = MlpSpec::one_hidden(2, 4).unwrap();
        let map = ParamVector::init(&spec, 9);
        let p = spec.n_params();
        let post = LaplacePosterior::from_covariance(spec, map.clone(), DMatrix::zeros(p, p), 1.0).unwrap();
        let x = [0.3, -0.4];
        let map_out = nn::forward(&spec, map.as_slice(), &x);
        let plug = survival::failure_probability(map_out.log_scale(), map_out.shape(), 1.0, 2.0);
        for samples in [1, 7] {
            let cfg = PredictiveConfig { samples, mode: PredictiveMode::Glm, seed: 4 };
            let g = glm_predict(&post, &x, 1.0, 2.0, &cfg).unwrap();
            let b = bnn_predict(&post, &x, 1.0, 2.0, &cfg).unwrap();
            assert_eq!(g.mean, plug);
            assert_eq!(b.mean, plug);
        }
    }

    #[test]
    fn predictive_is_deterministic_and_bounded() {
        let spec = MlpSpec::one_hidden(2, 4).unwrap();
        let map = ParamVector::init(&spec, 2);
        let post = LaplacePosterior::fit(&spec, &map, &toy(), 1.0).unwrap();
        let cfg = PredictiveConfig { samples: 50, mode: PredictiveMode::Bnn, seed: 1 };
        let a = bnn_predict(&post, &[0.1, 0.2], 0.0, 1.0, &cfg).unwrap();
        let b = bnn_predict(&post, &[0.1, 0.2], 0.0, 1.0, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.draws.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn artifact_round_trip() {
        let spec = MlpSpec::linear(2);
        let map = ParamVector::init(&spec, 2);
        let post = LaplacePosterior::fit(&spec, &map, &toy(), 1.0).unwrap();
        let back = LaplacePosterior::from_artifact(spec, &post.to_artifact()).unwrap();
        assert_eq!(back.covariance, post.covariance);
        assert_eq!(back.log_marginal_likelihood, post.log_marginal_likelihood);
    }
}

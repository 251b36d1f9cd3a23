//! Small feed-forward network for the per-record log-rate, with a global
//! Weibull shape, trained to its MAP point with Adam.
//!
//! The network maps covariates to `η(x) = ln λ(x)`; the shape is the single
//! free parameter `κ = ln k`. Parameters are flattened as
//!
//! * no hidden layer: `[w_1..w_F, b, κ]`
//! * one hidden layer of width `H`: `[W (H×F, row-major), b1 (H), w2 (H), b2, κ]`
//!
//! The cumulative hazard of a record is `λ(x)^k (t2^k - t1^k)`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{IntervalDataset, Standardizer, TestRecord};
use crate::error::{Error, Result};
use crate::survival::{record_term, RecordTerm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

/// Network architecture: zero or one hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub n_inputs: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn linear(n_inputs: usize) -> Self {
        MlpSpec {
            n_inputs,
            hidden_layers: 0,
            hidden_width: 0,
            activation: Activation::Tanh,
        }
    }

    pub fn one_hidden(n_inputs: usize, width: usize) -> Result<Self> {
        let spec = MlpSpec {
            n_inputs,
            hidden_layers: 1,
            hidden_width: width,
            activation: Activation::Tanh,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `width == 0` means no hidden layer.
    pub fn with_width(n_inputs: usize, width: usize) -> Self {
        if width == 0 {
            Self::linear(n_inputs)
        } else {
            MlpSpec {
                n_inputs,
                hidden_layers: 1,
                hidden_width: width,
                activation: Activation::Tanh,
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.hidden_layers, self.hidden_width) {
            (0, _) => Ok(()),
            (1, w) if w >= 1 => Ok(()),
            (1, _) => Err(Error::InvalidParameter("hidden width must be at least 1".into())),
            (l, _) => Err(Error::InvalidParameter(format!(
                "{l} hidden layers requested; only 0 or 1 are supported"
            ))),
        }
    }

    pub fn is_linear(&self) -> bool {
        self.hidden_layers == 0
    }

    /// Total parameter count `P`, shape included.
    pub fn n_params(&self) -> usize {
        let f = self.n_inputs;
        if self.is_linear() {
            f + 2
        } else {
            let h = self.hidden_width;
            h * f + 2 * h + 2
        }
    }

    pub fn kappa_index(&self) -> usize {
        self.n_params() - 1
    }
}

/// Flat parameter vector `φ = [θ, κ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(spec: &MlpSpec) -> Self {
        ParamVector(vec![0.0; spec.n_params()])
    }

    /// Glorot-uniform weights, zero biases, `κ = 0`.
    pub fn init(spec: &MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(spec);
        let f = spec.n_inputs;
        let mut glorot = |slot: &mut [f64], fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in slot {
                *v = rng.random_range(-a..a);
            }
        };
        if spec.is_linear() {
            glorot(&mut p.0[..f], f, 1);
        } else {
            let h = spec.hidden_width;
            glorot(&mut p.0[..h * f], f, h);
            glorot(&mut p.0[h * f + h..h * f + 2 * h], h, 1);
        }
        p
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn log_shape(&self) -> f64 {
        *self.0.last().expect("non-empty parameter vector")
    }

    pub fn shape(&self) -> f64 {
        self.log_shape().exp()
    }
}

/// Network outputs in unconstrained coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetOutput {
    pub log_rate: f64,
    pub log_shape: f64,
}

impl NetOutput {
    pub fn rate(&self) -> f64 {
        self.log_rate.exp()
    }

    pub fn shape(&self) -> f64 {
        self.log_shape.exp()
    }

    /// `ln λ^k`, the log-scale of the cumulative hazard.
    pub fn log_scale(&self) -> f64 {
        self.shape() * self.log_rate
    }
}

fn check_params(spec: &MlpSpec, phi: &[f64], x: &[f64]) {
    assert_eq!(phi.len(), spec.n_params(), "parameter vector length");
    assert_eq!(x.len(), spec.n_inputs, "covariate vector length");
}

/// `z = [λ, k] = g_φ(x)` returned as `(ln λ, ln k)`.
pub fn forward(spec: &MlpSpec, phi: &[f64], x: &[f64]) -> NetOutput {
    check_params(spec, phi, x);
    let f = spec.n_inputs;
    let log_rate = if spec.is_linear() {
        dot(&phi[..f], x) + phi[f]
    } else {
        let h = spec.hidden_width;
        let (w1, rest) = phi.split_at(h * f);
        let (b1, rest) = rest.split_at(h);
        let (w2, rest) = rest.split_at(h);
        let hidden = (0..h).map(|j| (dot(&w1[j * f..(j + 1) * f], x) + b1[j]).tanh());
        hidden.zip(w2).map(|(a, w)| a * w).sum::<f64>() + rest[0]
    };
    NetOutput {
        log_rate,
        log_shape: phi[spec.kappa_index()],
    }
}

/// Writes `∂η/∂φ` into `row` (the κ slot is zero) and returns the outputs.
pub fn log_rate_gradient(spec: &MlpSpec, phi: &[f64], x: &[f64], row: &mut [f64]) -> NetOutput {
    check_params(spec, phi, x);
    assert_eq!(row.len(), phi.len());
    let f = spec.n_inputs;
    let kappa = phi[spec.kappa_index()];
    row[spec.kappa_index()] = 0.0;
    if spec.is_linear() {
        row[..f].copy_from_slice(x);
        row[f] = 1.0;
        return NetOutput {
            log_rate: dot(&phi[..f], x) + phi[f],
            log_shape: kappa,
        };
    }
    let h = spec.hidden_width;
    let w2_at = h * f + h;
    let b2_at = w2_at + h;
    // same summation order as `forward`, so both agree bit-for-bit
    let mut eta = 0.0;
    for j in 0..h {
        let a = (dot(&phi[j * f..(j + 1) * f], x) + phi[h * f + j]).tanh();
        let w2 = phi[w2_at + j];
        eta += a * w2;
        let back = w2 * (1.0 - a * a);
        for (r, xv) in row[j * f..(j + 1) * f].iter_mut().zip(x) {
            *r = back * xv;
        }
        row[h * f + j] = back;
        row[w2_at + j] = a;
    }
    row[b2_at] = 1.0;
    NetOutput {
        log_rate: eta + phi[b2_at],
        log_shape: kappa,
    }
}

/// Jacobian of `(η, κ)` with respect to all `P` parameters, as a 2×P matrix.
pub fn per_sample_jacobian(spec: &MlpSpec, phi: &[f64], x: &[f64]) -> nalgebra::DMatrix<f64> {
    let p = spec.n_params();
    let mut row = vec![0.0; p];
    log_rate_gradient(spec, phi, x, &mut row);
    let mut j = nalgebra::DMatrix::zeros(2, p);
    for (c, v) in row.into_iter().enumerate() {
        j[(0, c)] = v;
    }
    j[(1, spec.kappa_index())] = 1.0;
    j
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log-likelihood of one record under the network, with `∂/∂φ` accumulated
/// into `grad` after scaling by `weight`.
fn accumulate_record(
    spec: &MlpSpec,
    phi: &[f64],
    r: &TestRecord,
    weight: f64,
    row: &mut [f64],
    grad: &mut [f64],
) -> f64 {
    let out = log_rate_gradient(spec, phi, &r.x, row);
    let term = record_term(r.failed(), 0.0, out.log_rate, out.log_shape, r.t_agelt, r.t_age);
    let d_eta = weight * term.grad[RecordTerm::ETA];
    for (g, j) in grad.iter_mut().zip(row.iter()) {
        *g += d_eta * j;
    }
    grad[spec.kappa_index()] += weight * term.grad[RecordTerm::KAPPA];
    weight * term.value
}

/// Interval log-likelihood over `indices` (all records when `None`), each
/// term weighted by `weight`, with its gradient.
pub fn log_likelihood(
    spec: &MlpSpec,
    phi: &[f64],
    ds: &IntervalDataset,
    indices: Option<&[usize]>,
    weight: f64,
) -> (f64, Vec<f64>) {
    let p = spec.n_params();
    let mut grad = vec![0.0; p];
    let mut row = vec![0.0; p];
    let records = ds.records();
    let value = match indices {
        Some(idx) => idx
            .iter()
            .map(|&i| accumulate_record(spec, phi, &records[i], weight, &mut row, &mut grad))
            .sum(),
        None => records
            .iter()
            .map(|r| accumulate_record(spec, phi, r, weight, &mut row, &mut grad))
            .sum(),
    };
    (value, grad)
}

/// Isotropic Gaussian log prior `-(ρ/2)‖φ‖²`, plus its normalising constant
/// `(P/2) ln(ρ/2π)` when `normalized`.
pub fn log_prior(phi: &[f64], precision: f64, normalized: bool) -> f64 {
    let quad = -0.5 * precision * phi.iter().map(|v| v * v).sum::<f64>();
    if normalized {
        quad + 0.5 * phi.len() as f64 * (precision / (2.0 * std::f64::consts::PI)).ln()
    } else {
        quad
    }
}

/// Unnormalised log posterior `ℓ(φ, D)` and its gradient over the full data.
pub fn log_posterior(
    spec: &MlpSpec,
    phi: &[f64],
    ds: &IntervalDataset,
    precision: f64,
) -> (f64, Vec<f64>) {
    let (ll, mut grad) = log_likelihood(spec, phi, ds, None, 1.0);
    for (g, v) in grad.iter_mut().zip(phi) {
        *g -= precision * v;
    }
    (ll + log_prior(phi, precision, false), grad)
}

/// First and second moment state for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected Adam update that descends `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64], lr: f64) {
    state.step(params, grad, lr)
}

/// MAP training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Prior precision `ρ = 1/v²`.
    pub precision: f64,
    /// Alternate θ-only and κ-only passes within each epoch.
    pub coordinate_descent: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            batch_size: 128,
            epochs: 2000,
            precision: 1e-2,
            coordinate_descent: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.batch_size > 0
            && self.epochs > 0
            && self.precision > 0.0
            && self.precision.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid training config {self:?}")))
        }
    }
}

/// Outcome of MAP training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub params: ParamVector,
    /// Full-batch unnormalised log posterior at the returned parameters.
    pub objective: f64,
    /// Full-batch objective after every epoch, when traced.
    pub history: Vec<f64>,
}

/// Finds `φ* = argmax ℓ(φ, D)` by minibatch Adam.
///
/// Each epoch shuffles the records and visits them in batches of `B`
/// (the last batch may be smaller); a batch's likelihood is scaled by
/// `N / |batch|`. With `B >= N` every step is exact full-batch ascent.
pub fn map_train(spec: &MlpSpec, ds: &IntervalDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    train(spec, ds, cfg, false)
}

/// As [`map_train`], also recording the full-batch objective per epoch.
pub fn map_train_traced(
    spec: &MlpSpec,
    ds: &IntervalDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train(spec, ds, cfg, true)
}

fn train(spec: &MlpSpec, ds: &IntervalDataset, cfg: &TrainConfig, trace: bool) -> Result<TrainReport> {
    spec.validate()?;
    cfg.validate()?;
    if ds.n_features() != spec.n_inputs {
        return Err(Error::InvalidDataset(format!(
            "network expects {} features, dataset has {}",
            spec.n_inputs,
            ds.n_features()
        )));
    }
    let n = ds.len();
    let p = spec.n_params();
    let kappa = spec.kappa_index();
    let mut phi = ParamVector::init(spec, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let batch = cfg.batch_size.min(n.max(1));
    let mut order: Vec<usize> = (0..n).collect();
    let mut joint = AdamState::new(p);
    let mut weights = AdamState::new(p - 1);
    let mut shape = AdamState::new(1);
    let mut history = Vec::new();

    // Loss gradient (negated log posterior) for one batch.
    let batch_grad = |phi: &[f64], idx: &[usize]| -> (f64, Vec<f64>) {
        let scale = n as f64 / idx.len() as f64;
        let (ll, mut g) = log_likelihood(spec, phi, ds, Some(idx), scale);
        for (gi, v) in g.iter_mut().zip(phi) {
            *gi = -(*gi - cfg.precision * v);
        }
        (ll + log_prior(phi, cfg.precision, false), g)
    };

    for epoch in 0..cfg.epochs {
        let phases: &[Option<bool>] = if cfg.coordinate_descent {
            &[Some(true), Some(false)]
        } else {
            &[None]
        };
        for phase in phases {
            if batch < n {
                order.shuffle(&mut rng);
            }
            for idx in order.chunks(batch) {
                let (obj, g) = batch_grad(&phi.0, idx);
                if !obj.is_finite() || g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged {
                        epoch,
                        objective: obj,
                    });
                }
                match phase {
                    None => joint.step(&mut phi.0, &g, cfg.learning_rate),
                    Some(true) => weights.step(&mut phi.0[..kappa], &g[..kappa], cfg.learning_rate),
                    Some(false) => shape.step(
                        &mut phi.0[kappa..],
                        &g[kappa..],
                        cfg.learning_rate,
                    ),
                }
            }
        }
        if trace {
            let (obj, _) = log_posterior(spec, &phi.0, ds, cfg.precision);
            if !obj.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    objective: obj,
                });
            }
            history.push(obj);
        }
    }
    let (objective, _) = log_posterior(spec, &phi.0, ds, cfg.precision);
    if !objective.is_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            objective,
        });
    }
    Ok(TrainReport {
        params: phi,
        objective,
        history,
    })
}

/// Persisted MAP network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkArtifact {
    pub spec: MlpSpec,
    pub phi: ParamVector,
    pub standardizer: Standardizer,
    pub train_config: TrainConfig,
    pub final_objective: f64,
}

impl NetworkArtifact {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::write_json(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::read_json(path)
    }
}

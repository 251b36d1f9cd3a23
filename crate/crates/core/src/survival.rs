//! Weibull-Cox intensity, cumulative hazard and the interval-censored
//! Bernoulli likelihood.
//!
//! The intensity of an item with covariate effect `g` is
//! `h(t) = e^g (λ t)^(k-1) k λ`, so over an interval `[t1, t2]` with constant
//! covariates the cumulative hazard is `e^g λ^k (t2^k - t1^k)` and the
//! probability of passing the test at `t2` given a pass at `t1` is
//! `exp(-H)`.
//!
//! Optimizers and samplers work in unconstrained coordinates
//! `η = ln λ`, `κ = ln k`. Every record term is a function of
//! `u = ln H = g + k η + ln(t2^k - t1^k)`, and its derivatives are built by
//! chaining through `u`.

use serde::{Deserialize, Serialize};

use crate::dataset::IntervalDataset;
use crate::error::{Error, Result};

/// Upper clamp on the cumulative hazard before it is exponentiated.
pub const MAX_CUMULATIVE_HAZARD: f64 = 700.0;
/// Floor on failure probabilities that enter a logarithm.
pub const MIN_FAILURE_PROBABILITY: f64 = 1e-15;

/// Weibull-Cox parameters for one record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullCoxParams {
    pub log_rate: f64,
    pub shape: f64,
    /// Covariate effect `g_θ(x)`.
    pub effect: f64,
}

impl WeibullCoxParams {
    pub fn new(rate: f64, shape: f64, effect: f64) -> Result<Self> {
        check_rate_shape(rate, shape)?;
        Ok(WeibullCoxParams {
            log_rate: rate.ln(),
            shape,
            effect,
        })
    }

    pub fn rate(&self) -> f64 {
        self.log_rate.exp()
    }

    pub fn cumulative_hazard(&self, t1: f64, t2: f64) -> Result<f64> {
        cumulative_hazard(self.effect, self.rate(), self.shape, t1, t2)
    }

    /// Intensity at age `t`.
    pub fn intensity(&self, t: f64) -> f64 {
        let rate = self.rate();
        self.effect.exp() * (rate * t).powf(self.shape - 1.0) * self.shape * rate
    }
}

/// Baseline parameterisation through a reliability estimate at `t_fix`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub reliability: f64,
    pub shape: f64,
    pub t_fix: f64,
}

impl BaselineParams {
    pub fn new(reliability: f64, shape: f64, t_fix: f64) -> Result<Self> {
        rate_from_reliability(reliability, shape, t_fix)?;
        Ok(BaselineParams {
            reliability,
            shape,
            t_fix,
        })
    }

    pub fn rate(&self) -> f64 {
        rate_from_reliability(self.reliability, self.shape, self.t_fix)
            .expect("validated at construction")
    }
}

fn check_rate_shape(rate: f64, shape: f64) -> Result<()> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidParameter(format!("rate {rate} must be positive")));
    }
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::InvalidParameter(format!("shape {shape} must be positive")));
    }
    Ok(())
}

fn check_interval(t1: f64, t2: f64) -> Result<()> {
    if !(t1 >= 0.0 && t2.is_finite()) {
        return Err(Error::InvalidParameter(format!("invalid interval [{t1}, {t2}]")));
    }
    if t1 > t2 {
        return Err(Error::InvalidParameter(format!(
            "interval start {t1} is after its end {t2}"
        )));
    }
    Ok(())
}

/// `∫_{t1}^{t2} e^g (λτ)^(k-1) k λ dτ = e^g λ^k (t2^k - t1^k)`.
pub fn cumulative_hazard(g: f64, rate: f64, shape: f64, t1: f64, t2: f64) -> Result<f64> {
    check_rate_shape(rate, shape)?;
    check_interval(t1, t2)?;
    if t1 == t2 {
        return Ok(0.0);
    }
    Ok((g + shape * rate.ln()).exp() * (t2.powf(shape) - t1.powf(shape)))
}

/// Probability of no failure in `[t1, t2]` given survival to `t1`.
pub fn conditional_survival(g: f64, rate: f64, shape: f64, t1: f64, t2: f64) -> Result<f64> {
    let h = cumulative_hazard(g, rate, shape, t1, t2)?;
    Ok((-h.min(MAX_CUMULATIVE_HAZARD)).exp())
}

/// Failure probability `1 - exp(-e^s (t2^k - t1^k))` for a log-scale `s`
/// (`s = g + k ln λ`). Kept at or above [`MIN_FAILURE_PROBABILITY`] unless
/// the interval is empty.
pub fn failure_probability(log_scale: f64, shape: f64, t1: f64, t2: f64) -> f64 {
    let Some(p) = interval_power(shape, t1, t2) else {
        return 0.0;
    };
    let h = (log_scale + p.log_d).min(MAX_CUMULATIVE_HAZARD.ln()).exp();
    (-(-h).exp_m1()).max(MIN_FAILURE_PROBABILITY)
}

/// Reliability `exp(-e^s t^k)` at age `t` from time zero.
pub fn reliability(log_scale: f64, shape: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let h = (log_scale + shape * t.ln()).exp();
    (-h.min(MAX_CUMULATIVE_HAZARD)).exp()
}

/// One posterior draw of a fitted hazard at fixed covariates:
/// `H(t) = e^log_scale · t^shape`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardDraw {
    pub log_scale: f64,
    pub shape: f64,
}

impl HazardDraw {
    pub fn reliability(&self, t: f64) -> f64 {
        reliability(self.log_scale, self.shape, t)
    }

    pub fn failure_probability(&self, t1: f64, t2: f64) -> f64 {
        failure_probability(self.log_scale, self.shape, t1, t2)
    }
}

/// Rate for which a Weibull with shape `k` has reliability `R` at `t_fix`:
/// `λ = (-ln R)^(1/k) / t_fix`.
pub fn rate_from_reliability(reliability: f64, shape: f64, t_fix: f64) -> Result<f64> {
    Ok(log_rate_from_reliability(reliability, shape, t_fix)?.exp())
}

pub fn log_rate_from_reliability(reliability: f64, shape: f64, t_fix: f64) -> Result<f64> {
    if !(reliability > 0.0 && reliability < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "reliability {reliability} not in (0, 1)"
        )));
    }
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::InvalidParameter(format!("shape {shape} must be positive")));
    }
    if !(t_fix > 0.0 && t_fix.is_finite()) {
        return Err(Error::InvalidParameter(format!("t_fix {t_fix} must be positive")));
    }
    Ok((-reliability.ln()).ln() / shape - t_fix.ln())
}

/// `ln(t2^k - t1^k)` with its first and second derivatives in `k`.
#[derive(Debug, Clone, Copy)]
struct IntervalPower {
    log_d: f64,
    d1: f64,
    d2: f64,
}

fn interval_power(shape: f64, t1: f64, t2: f64) -> Option<IntervalPower> {
    if t2 <= t1 {
        return None;
    }
    let a = t2.ln();
    if t1 == 0.0 {
        return Some(IntervalPower {
            log_d: shape * a,
            d1: a,
            d2: 0.0,
        });
    }
    let b = t1.ln();
    // r = (t1/t2)^k, s = 1 - r
    let log_r = shape * (b - a);
    let r = log_r.exp();
    let s = -log_r.exp_m1();
    let gap = a - b;
    Some(IntervalPower {
        log_d: shape * a + s.ln(),
        d1: a + r * gap / s,
        d2: -r * gap * gap / (s * s),
    })
}

/// Log-probability of a test outcome as a function of `u = ln H`,
/// with first and second derivatives in `u`.
#[derive(Debug, Clone, Copy)]
struct OutcomeTerm {
    value: f64,
    d1: f64,
    d2: f64,
}

fn outcome_term(failed: bool, u: f64) -> OutcomeTerm {
    let h = u.min(MAX_CUMULATIVE_HAZARD).exp();
    if !failed {
        return OutcomeTerm {
            value: -h,
            d1: -h,
            d2: -h,
        };
    }
    // ln(1 - e^{-H}); for H underflowing to 0 the limit is u itself.
    let fail_prob = -(-h).exp_m1();
    let (value, q, ratio) = if h < 1e-300 {
        (u, 1.0, 1.0)
    } else {
        (fail_prob.ln(), h / h.exp_m1(), h / fail_prob)
    };
    OutcomeTerm {
        value,
        d1: q,
        d2: q * (1.0 - ratio),
    }
}

/// One record's log-likelihood with gradient and Hessian in `(g, η, κ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordTerm {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

impl RecordTerm {
    pub const G: usize = 0;
    pub const ETA: usize = 1;
    pub const KAPPA: usize = 2;
}

/// `(1-y) ln S + y ln(1-S)` for one interval, `S = exp(-e^g λ^k (t2^k-t1^k))`,
/// differentiated in `(g, η = ln λ, κ = ln k)`.
pub fn record_term(failed: bool, g: f64, eta: f64, kappa: f64, t1: f64, t2: f64) -> RecordTerm {
    let k = kappa.exp();
    let Some(p) = interval_power(k, t1, t2) else {
        // Empty interval: S = 1 exactly.
        let value = if failed {
            MIN_FAILURE_PROBABILITY.ln()
        } else {
            0.0
        };
        return RecordTerm {
            value,
            grad: [0.0; 3],
            hess: [[0.0; 3]; 3],
        };
    };
    let u = g + k * eta + p.log_d;
    let o = outcome_term(failed, u);
    let du = [1.0, k, k * (eta + p.d1)];
    let mut d2u = [[0.0; 3]; 3];
    d2u[1][2] = k;
    d2u[2][1] = k;
    d2u[2][2] = k * (eta + p.d1) + k * k * p.d2;
    let mut grad = [0.0; 3];
    let mut hess = [[0.0; 3]; 3];
    for i in 0..3 {
        grad[i] = o.d1 * du[i];
        for j in 0..3 {
            hess[i][j] = o.d2 * du[i] * du[j] + o.d1 * d2u[i][j];
        }
    }
    RecordTerm {
        value: o.value,
        grad,
        hess,
    }
}

/// Log-likelihood of a dataset and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    /// ∂/∂g per record.
    pub d_effect: Vec<f64>,
    /// ∂/∂ln λ per record.
    pub d_log_rate: Vec<f64>,
    /// ∂/∂ln k for the shared shape.
    pub d_log_shape: f64,
}

/// Sum of interval log-likelihood terms with per-record effect `g` and rate
/// `λ`, and a shared shape `k`. Terms are reduced in record order.
pub fn interval_log_likelihood(
    ds: &IntervalDataset,
    effects: &[f64],
    rates: &[f64],
    shape: f64,
) -> Result<LogLikelihood> {
    let n = ds.len();
    if effects.len() != n || rates.len() != n {
        return Err(Error::InvalidParameter(format!(
            "parameter vectors ({}, {}) do not match {n} records",
            effects.len(),
            rates.len()
        )));
    }
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidParameter(format!("rate {r} must be positive")));
    }
    check_rate_shape(1.0, shape)?;
    let kappa = shape.ln();
    let mut out = LogLikelihood {
        value: 0.0,
        d_effect: Vec::with_capacity(n),
        d_log_rate: Vec::with_capacity(n),
        d_log_shape: 0.0,
    };
    for ((r, &g), &rate) in ds.records().iter().zip(effects).zip(rates) {
        let term = record_term(r.failed(), g, rate.ln(), kappa, r.t_agelt, r.t_age);
        out.value += term.value;
        out.d_effect.push(term.grad[RecordTerm::G]);
        out.d_log_rate.push(term.grad[RecordTerm::ETA]);
        out.d_log_shape += term.grad[RecordTerm::KAPPA];
    }
    Ok(out)
}

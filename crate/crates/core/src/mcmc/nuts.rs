//! Multinomial No-U-Turn sampler with a diagonal metric.
//!
//! Trajectories are built by recursive doubling and a point is drawn from
//! each tree in proportion to `exp(-H)`. Subtrees are rejected when the
//! generalized U-turn criterion fails on the whole subtree or on either
//! merged half extended by one step. During warmup the step size follows
//! dual averaging and the inverse metric is re-estimated from the draws of
//! doubling windows, with a fresh step-size search after each update.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{NutsConfig, PosteriorSamples};
use crate::error::{Error, Result};

/// A differentiable log density in unconstrained coordinates.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns `ln p(q)` (up to a constant) and writes its gradient.
    fn log_density(&self, q: &[f64], grad: &mut [f64]) -> f64;

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("q[{}]", i + 1)).collect()
    }

    /// Maps an unconstrained point to the reported parameters.
    fn constrain(&self, q: &[f64]) -> Vec<f64> {
        q.to_vec()
    }
}

const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone)]
struct State {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

struct Hamiltonian<'a, T: ?Sized> {
    target: &'a T,
    inv_metric: Vec<f64>,
}

impl<T: LogDensity + ?Sized> Hamiltonian<'_, T> {
    fn update(&self, z: &mut State) {
        let lp = self.target.log_density(&z.q, &mut z.grad);
        z.logp = if lp.is_nan() { f64::NEG_INFINITY } else { lp };
    }

    fn energy(&self, z: &State) -> f64 {
        let kinetic: f64 = z.p.iter().zip(&self.inv_metric).map(|(p, m)| p * p * m).sum();
        let h = -z.logp + 0.5 * kinetic;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn dtau_dp(&self, z: &State, out: &mut [f64]) {
        for ((o, p), m) in out.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *o = p * m;
        }
    }

    fn sample_p(&self, z: &mut State, rng: &mut ChaCha8Rng) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let e: f64 = rng.sample(StandardNormal);
            *p = e / m.sqrt();
        }
    }

    fn leapfrog(&self, z: &mut State, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        self.update(z);
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    let dot = |a: &[f64]| a.iter().zip(rho).map(|(x, y)| x * y).sum::<f64>();
    dot(p_sharp_plus) > 0.0 && dot(p_sharp_minus) > 0.0
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Summary of one NUTS transition.
#[derive(Debug, Clone, Copy)]
struct Transition {
    accept_stat: f64,
    divergent: bool,
}

struct TreeTotals {
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

struct Sampler<'a, T: ?Sized> {
    ham: Hamiltonian<'a, T>,
    eps: f64,
    max_depth: usize,
    rng: ChaCha8Rng,
}

impl<T: LogDensity + ?Sized> Sampler<'_, T> {
    fn transition(&mut self, z: &mut State) -> Transition {
        let n = z.q.len();
        self.ham.sample_p(z, &mut self.rng);

        let mut ps_fwd_fwd = vec![0.0; n];
        self.ham.dtau_dp(z, &mut ps_fwd_fwd);
        let mut ps_fwd_bck = ps_fwd_fwd.clone();
        let mut ps_bck_fwd = ps_fwd_fwd.clone();
        let mut ps_bck_bck = ps_fwd_fwd.clone();
        let mut p_fwd_fwd = z.p.clone();
        let mut p_fwd_bck = z.p.clone();
        let mut p_bck_fwd = z.p.clone();
        let mut p_bck_bck = z.p.clone();
        let mut rho = z.p.clone();

        let mut log_sum_weight = 0.0;
        let h0 = self.ham.energy(z);
        let mut totals = TreeTotals {
            n_leapfrog: 0,
            sum_metro_prob: 0.0,
            divergent: false,
        };

        let mut z_fwd = z.clone();
        let mut z_bck = z.clone();
        let mut z_sample = z.clone();
        let mut z_propose = z.clone();

        let mut depth = 0;
        while depth < self.max_depth {
            let mut rho_fwd = vec![0.0; n];
            let mut rho_bck = vec![0.0; n];
            let mut log_sum_weight_subtree = f64::NEG_INFINITY;

            let valid = if self.rng.random::<f64>() > 0.5 {
                rho_bck.copy_from_slice(&rho);
                p_bck_fwd.copy_from_slice(&p_fwd_bck);
                ps_bck_fwd.copy_from_slice(&ps_fwd_bck);
                self.build_tree(
                    depth,
                    &mut z_fwd,
                    &mut z_propose,
                    &mut ps_fwd_bck,
                    &mut ps_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    h0,
                    1.0,
                    &mut log_sum_weight_subtree,
                    &mut totals,
                )
            } else {
                rho_fwd.copy_from_slice(&rho);
                p_fwd_bck.copy_from_slice(&p_bck_fwd);
                ps_fwd_bck.copy_from_slice(&ps_bck_fwd);
                self.build_tree(
                    depth,
                    &mut z_bck,
                    &mut z_propose,
                    &mut ps_bck_fwd,
                    &mut ps_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    h0,
                    -1.0,
                    &mut log_sum_weight_subtree,
                    &mut totals,
                )
            };
            if !valid {
                break;
            }
            depth += 1;

            if log_sum_weight_subtree > log_sum_weight {
                z_sample.clone_from(&z_propose);
            } else {
                let accept_prob = (log_sum_weight_subtree - log_sum_weight).exp();
                if self.rng.random::<f64>() < accept_prob {
                    z_sample.clone_from(&z_propose);
                }
            }
            log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

            rho = add(&rho_bck, &rho_fwd);
            let mut persist = no_u_turn(&ps_bck_bck, &ps_fwd_fwd, &rho);
            let rho_extended = add(&rho_bck, &p_fwd_bck);
            persist &= no_u_turn(&ps_bck_bck, &ps_fwd_bck, &rho_extended);
            let rho_extended = add(&rho_fwd, &p_bck_fwd);
            persist &= no_u_turn(&ps_bck_fwd, &ps_fwd_fwd, &rho_extended);
            if !persist {
                break;
            }
        }

        *z = z_sample;
        Transition {
            accept_stat: totals.sum_metro_prob / totals.n_leapfrog.max(1) as f64,
            divergent: totals.divergent,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &mut self,
        depth: usize,
        z: &mut State,
        z_propose: &mut State,
        p_sharp_beg: &mut [f64],
        p_sharp_end: &mut [f64],
        rho: &mut [f64],
        p_beg: &mut [f64],
        p_end: &mut [f64],
        h0: f64,
        sign: f64,
        log_sum_weight: &mut f64,
        totals: &mut TreeTotals,
    ) -> bool {
        if depth == 0 {
            self.ham.leapfrog(z, sign * self.eps);
            totals.n_leapfrog += 1;
            let h = self.ham.energy(z);
            if h - h0 > MAX_DELTA_H {
                totals.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, h0 - h);
            totals.sum_metro_prob += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            z_propose.clone_from(z);
            self.ham.dtau_dp(z, p_sharp_beg);
            p_sharp_end.copy_from_slice(p_sharp_beg);
            for (r, p) in rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            p_beg.copy_from_slice(&z.p);
            p_end.copy_from_slice(&z.p);
            return !totals.divergent;
        }

        let n = z.q.len();
        let mut rho_init = vec![0.0; n];
        let mut p_init_end = vec![0.0; n];
        let mut p_sharp_init_end = vec![0.0; n];
        let mut log_sum_weight_init = f64::NEG_INFINITY;
        let valid_init = self.build_tree(
            depth - 1,
            z,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            h0,
            sign,
            &mut log_sum_weight_init,
            totals,
        );
        if !valid_init {
            return false;
        }

        let mut z_propose_final = z.clone();
        let mut rho_final = vec![0.0; n];
        let mut p_final_beg = vec![0.0; n];
        let mut p_sharp_final_beg = vec![0.0; n];
        let mut log_sum_weight_final = f64::NEG_INFINITY;
        let valid_final = self.build_tree(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            h0,
            sign,
            &mut log_sum_weight_final,
            totals,
        );
        if !valid_final {
            return false;
        }

        let log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, log_sum_weight_subtree);
        let accept_prob = (log_sum_weight_final - log_sum_weight_subtree).exp();
        if self.rng.random::<f64>() < accept_prob {
            z_propose.clone_from(&z_propose_final);
        }

        let rho_subtree = add(&rho_init, &rho_final);
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = no_u_turn(p_sharp_beg, p_sharp_end, &rho_subtree);
        let rho_extended = add(&rho_init, &p_final_beg);
        persist &= no_u_turn(p_sharp_beg, &p_sharp_final_beg, &rho_extended);
        let rho_extended = add(&rho_final, &p_init_end);
        persist &= no_u_turn(&p_sharp_init_end, p_sharp_end, &rho_extended);
        persist
    }

    /// Doubles or halves `eps` until a single leapfrog step's acceptance
    /// crosses 0.8.
    fn init_stepsize(&mut self, z: &State) -> Result<()> {
        let mut trial = z.clone();
        let threshold = 0.8f64.ln();
        let delta = |s: &mut Self, trial: &mut State| {
            trial.clone_from(z);
            s.ham.sample_p(trial, &mut s.rng);
            let h0 = s.ham.energy(trial);
            s.ham.leapfrog(trial, s.eps);
            h0 - s.ham.energy(trial)
        };
        let direction = if delta(self, &mut trial) > threshold { 1 } else { -1 };
        loop {
            let d = delta(self, &mut trial);
            if (direction == 1 && !(d > threshold)) || (direction == -1 && !(d < threshold)) {
                return Ok(());
            }
            self.eps = if direction == 1 { 2.0 * self.eps } else { 0.5 * self.eps };
            if self.eps > 1e7 {
                return Err(Error::Numerical(
                    "step size search diverged; the posterior may be improper".into(),
                ));
            }
            if self.eps == 0.0 {
                return Err(Error::Numerical(
                    "step size underflowed; the density may be discontinuous".into(),
                ));
            }
        }
    }
}

/// Dual-averaging step size adaptation.
struct DualAveraging {
    mu: f64,
    target: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    fn new(target: f64, eps: f64) -> Self {
        DualAveraging {
            mu: (10.0 * eps).ln(),
            target,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        }
    }

    fn restart(&mut self, eps: f64) {
        self.mu = (10.0 * eps).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    fn learn(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let stat = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - stat);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    fn final_stepsize(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Windowed variance estimation for the diagonal inverse metric.
struct MetricWindows {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window: usize,
    counter: usize,
    enabled: bool,
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MetricWindows {
    fn new(warmup: usize, dim: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut window_size) = (75, 50, 25);
        let enabled = warmup >= 20;
        if enabled && init_buffer + window_size + term_buffer > warmup {
            init_buffer = (0.15 * warmup as f64) as usize;
            term_buffer = (0.1 * warmup as f64) as usize;
            window_size = warmup - (init_buffer + term_buffer);
        }
        MetricWindows {
            warmup,
            init_buffer,
            term_buffer,
            window_size,
            next_window: init_buffer + window_size - 1,
            counter: 0,
            enabled,
            n: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn in_window(&self) -> bool {
        self.counter >= self.init_buffer
            && self.counter < self.warmup - self.term_buffer
            && self.counter != self.warmup
    }

    fn end_of_window(&self) -> bool {
        self.counter == self.next_window && self.counter != self.warmup
    }

    fn compute_next_window(&mut self) {
        let last = self.warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.counter + self.window_size;
        if self.next_window != last && self.next_window + 2 * self.window_size >= self.warmup - self.term_buffer {
            self.next_window = last;
        }
    }

    /// Records `q`; returns the new inverse metric at the end of a window.
    fn learn(&mut self, q: &[f64]) -> Option<Vec<f64>> {
        if !self.enabled {
            return None;
        }
        if self.in_window() {
            self.n += 1.0;
            for ((m, s), x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(q) {
                let d = x - *m;
                *m += d / self.n;
                *s += d * (x - *m);
            }
        }
        let mut update = None;
        if self.end_of_window() {
            self.compute_next_window();
            let n = self.n;
            update = Some(
                self.m2
                    .iter()
                    .map(|s| (n / (n + 5.0)) * (s / (n - 1.0)) + 1e-3 * (5.0 / (n + 5.0)))
                    .collect(),
            );
            self.n = 0.0;
            self.mean.iter_mut().for_each(|m| *m = 0.0);
            self.m2.iter_mut().for_each(|s| *s = 0.0);
        }
        self.counter += 1;
        update
    }
}

/// Draws of one chain in unconstrained coordinates.
#[derive(Debug, Clone)]
pub(crate) struct ChainRun {
    pub draws: Vec<Vec<f64>>,
    pub divergences: usize,
    pub step_size: f64,
    pub mean_accept_stat: f64,
}

fn jittered_init<T: LogDensity + ?Sized>(target: &T, init: &[f64], rng: &mut ChaCha8Rng) -> Result<State> {
    let n = init.len();
    for _ in 0..100 {
        let q: Vec<f64> = init.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
        let mut grad = vec![0.0; n];
        let logp = target.log_density(&q, &mut grad);
        if logp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(State {
                q,
                p: vec![0.0; n],
                grad,
                logp,
            });
        }
    }
    Err(Error::Numerical(
        "no finite log density found within 100 jittered initialisations".into(),
    ))
}

pub(crate) fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    init: &[f64],
    cfg: &NutsConfig,
    chain: usize,
) -> Result<ChainRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let mut z = jittered_init(target, init, &mut rng)?;
    let mut sampler = Sampler {
        ham: Hamiltonian {
            target,
            inv_metric: vec![1.0; init.len()],
        },
        eps: 1.0,
        max_depth: cfg.max_depth,
        rng,
    };
    sampler.init_stepsize(&z)?;
    let mut dual = DualAveraging::new(cfg.target_accept, sampler.eps);
    let mut windows = MetricWindows::new(cfg.warmup, init.len());

    for _ in 0..cfg.warmup {
        let t = sampler.transition(&mut z);
        sampler.eps = dual.learn(t.accept_stat);
        if let Some(inv_metric) = windows.learn(&z.q) {
            sampler.ham.inv_metric = inv_metric;
            sampler.init_stepsize(&z)?;
            dual.restart(sampler.eps);
        }
    }
    if cfg.warmup > 0 {
        sampler.eps = dual.final_stepsize();
    }

    let mut draws = Vec::with_capacity(cfg.draws);
    let mut divergences = 0;
    let mut accept_total = 0.0;
    for _ in 0..cfg.draws {
        let t = sampler.transition(&mut z);
        divergences += t.divergent as usize;
        accept_total += t.accept_stat;
        draws.push(z.q.clone());
    }
    Ok(ChainRun {
        draws,
        divergences,
        step_size: sampler.eps,
        mean_accept_stat: accept_total / cfg.draws.max(1) as f64,
    })
}

/// Runs `cfg.chains` independent chains from jittered copies of `init`.
///
/// Chain `c` draws from the ChaCha stream `c` of `cfg.seed`, so results do
/// not depend on how chains are scheduled.
pub fn nuts_sample<T: LogDensity + ?Sized>(
    target: &T,
    init: &[f64],
    cfg: &NutsConfig,
) -> Result<PosteriorSamples> {
    cfg.validate()?;
    if init.len() != target.dim() {
        return Err(Error::InvalidParameter(format!(
            "init has {} coordinates, target has {}",
            init.len(),
            target.dim()
        )));
    }
    let mut grad = vec![0.0; init.len()];
    let lp = target.log_density(init, &mut grad);
    if !lp.is_finite() {
        return Err(Error::Numerical(format!("log density at init is {lp}")));
    }
    let runs: Vec<ChainRun> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(target, init, cfg, c))
        .collect::<Result<_>>()?;

    let chains = runs
        .iter()
        .map(|r| r.draws.iter().map(|q| target.constrain(q)).collect())
        .collect();
    let divergences = runs.iter().map(|r| r.divergences).sum();
    let step_sizes = runs.iter().map(|r| r.step_size).collect();
    let accept = runs.iter().map(|r| r.mean_accept_stat).collect();
    Ok(PosteriorSamples::from_chains(
        target.param_names(),
        chains,
        divergences,
        step_sizes,
        accept,
    ))
}

//! Univariate Hawkes process with exponential kernel.
//!
//! Intensity: `λ(t) = μ + Σ_{t_i < t} β·exp(−ω(t − t_i))`.
//!
//! All likelihood quantities use the exponential-kernel recursion
//! `A_1 = 0`, `A_i = exp(−ω(t_i − t_{i−1}))·(A_{i−1} + 1)`, so every pass is
//! linear in the number of events. Events sharing a timestamp are ordered by
//! position: an earlier index excites a later one with `g(0) = β`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{FitFlag, FitResult, ModelParams};
use crate::optim::{self, Bounds, Options, Outcome};

/// Smallest excitation weight the optimiser may reach.
pub const BETA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    /// Background rate, events/day.
    pub mu: f64,
    /// Excitation weight, events/day.
    pub beta: f64,
    /// Decay rate, 1/day.
    pub omega: f64,
}

impl HawkesParams {
    pub fn new(mu: f64, beta: f64, omega: f64) -> Result<HawkesParams> {
        let p = HawkesParams { mu, beta, omega };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::invalid(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid(format!("beta must be non-negative, got {}", self.beta)));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::invalid(format!("omega must be positive, got {}", self.omega)));
        }
        Ok(())
    }

    pub fn branching_ratio(&self) -> f64 {
        self.beta / self.omega
    }

    pub fn is_subcritical(&self) -> bool {
        self.branching_ratio() < 1.0
    }

    /// Error unless the branching ratio is below one.
    pub fn require_subcritical(&self) -> Result<()> {
        if self.is_subcritical() {
            Ok(())
        } else {
            Err(Error::Supercritical(self.branching_ratio()))
        }
    }

    /// Long-run event rate `μ / (1 − β/ω)` of the stationary process.
    pub fn stationary_rate(&self) -> Option<f64> {
        self.is_subcritical().then(|| self.mu / (1.0 - self.branching_ratio()))
    }

    pub fn kernel(&self, lag: f64) -> f64 {
        self.beta * (-self.omega * lag).exp()
    }
}

impl FitResult {
    /// Parameters of a Hawkes fit (per-cluster or global).
    pub fn hawkes(&self) -> Option<HawkesParams> {
        match self.params {
            ModelParams::Hawkes { mu, beta, omega } | ModelParams::HawkesGlobal { mu, beta, omega } => {
                Some(HawkesParams { mu, beta, omega })
            }
            _ => None,
        }
    }
}

/// Times must be finite, non-negative and non-decreasing.
pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    for (i, &t) in times.iter().enumerate() {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::invalid(format!("event time {t} at index {i} is invalid")));
        }
        if i > 0 && t < times[i - 1] {
            return Err(Error::Unsorted { index: i });
        }
    }
    Ok(())
}

fn check_window(times: &[f64], horizon: f64) -> Result<()> {
    check_times(times)?;
    if let Some(&last) = times.last() {
        if last > horizon {
            return Err(Error::invalid(format!(
                "event time {last} lies beyond the observation end {horizon}"
            )));
        }
    }
    if !horizon.is_finite() || horizon < 0.0 {
        return Err(Error::invalid(format!("observation end {horizon} is invalid")));
    }
    Ok(())
}

/// Conditional intensity at `t` given events strictly before `t`.
pub fn intensity_at(p: &HawkesParams, history: &[f64], t: f64) -> Result<f64> {
    p.check()?;
    let mut excitation = 0.0;
    for &h in history {
        if h > t {
            return Err(Error::invalid(format!("history point {h} lies after t = {t}")));
        }
        if h < t {
            excitation += p.kernel(t - h);
        }
    }
    Ok(p.mu + excitation)
}

/// Exact log-likelihood on `[0, horizon]`.
pub fn log_likelihood(p: &HawkesParams, times: &[f64], horizon: f64) -> Result<f64> {
    p.check()?;
    check_window(times, horizon)?;
    Ok(loglik_unchecked(p, times, horizon))
}

fn loglik_unchecked(p: &HawkesParams, times: &[f64], horizon: f64) -> f64 {
    let HawkesParams { mu, beta, omega } = *p;
    let mut a = 0.0;
    let mut log_sum = 0.0;
    let mut tail = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            a = (-omega * (t - times[i - 1])).exp() * (a + 1.0);
        }
        log_sum += (mu + beta * a).ln();
        tail += -(-omega * (horizon - t)).exp_m1();
    }
    log_sum - mu * horizon - beta / omega * tail
}

/// Log-likelihood and its gradient with respect to `(μ, β, ω)`.
pub fn log_likelihood_gradient(p: &HawkesParams, times: &[f64], horizon: f64) -> Result<(f64, [f64; 3])> {
    p.check()?;
    check_window(times, horizon)?;
    Ok(loglik_and_gradient(p, times, horizon))
}

fn loglik_and_gradient(p: &HawkesParams, times: &[f64], horizon: f64) -> (f64, [f64; 3]) {
    let HawkesParams { mu, beta, omega } = *p;
    // a = A_i, b = dA_i/dω
    let (mut a, mut b) = (0.0, 0.0);
    let mut log_sum = 0.0;
    let (mut d_mu, mut d_beta, mut d_omega) = (0.0, 0.0, 0.0);
    let (mut tail, mut tail_lag) = (0.0, 0.0);
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            let gap = t - times[i - 1];
            let decay = (-omega * gap).exp();
            b = decay * (b - gap * (a + 1.0));
            a = decay * (a + 1.0);
        }
        let lambda = mu + beta * a;
        log_sum += lambda.ln();
        d_mu += 1.0 / lambda;
        d_beta += a / lambda;
        d_omega += beta * b / lambda;
        let lag = horizon - t;
        let decay = (-omega * lag).exp();
        tail += -(-omega * lag).exp_m1();
        tail_lag += lag * decay;
    }
    let ll = log_sum - mu * horizon - beta / omega * tail;
    d_mu -= horizon;
    d_beta -= tail / omega;
    d_omega += beta / (omega * omega) * tail - beta / omega * tail_lag;
    (ll, [d_mu, d_beta, d_omega])
}

/// Expected count `Λ(t) = μt + (β/ω)·Σ_{t_i<t}(1 − exp(−ω(t − t_i)))`.
pub fn compensator(p: &HawkesParams, times: &[f64], t: f64) -> Result<f64> {
    p.check()?;
    check_times(times)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid(format!("time {t} must be non-negative")));
    }
    let excited: f64 = times
        .iter()
        .take_while(|&&ti| ti < t)
        .map(|&ti| -(-p.omega * (t - ti)).exp_m1())
        .sum();
    Ok(p.mu * t + p.beta / p.omega * excited)
}

/// Time-rescaled inter-arrivals `Λ(t_i) − Λ(t_{i−1})`, with `Λ(t_0) = 0`.
pub fn rescaled_residuals(p: &HawkesParams, times: &[f64]) -> Result<Vec<f64>> {
    p.check()?;
    check_times(times)?;
    if times.is_empty() {
        return Err(Error::TooFewEvents { required: 1, got: 0 });
    }
    let ratio = p.beta / p.omega;
    let mut out = Vec::with_capacity(times.len());
    let mut a = 0.0;
    let mut prev = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            a = (-p.omega * (t - times[i - 1])).exp() * (a + 1.0);
        }
        // Σ_{k<i}(1 − e^{−ω(t_i − t_k)}) = i − A_i; tied points add zero.
        let lambda_t = p.mu * t + ratio * (i as f64 - a);
        out.push((lambda_t - prev).max(0.0));
        prev = lambda_t;
    }
    Ok(out)
}

/// Log-likelihood of the events in `(start, end]` conditional on every event
/// at or before `start`.
pub fn log_likelihood_window(p: &HawkesParams, times: &[f64], start: f64, end: f64) -> Result<f64> {
    p.check()?;
    check_times(times)?;
    if !(start.is_finite() && end >= start) {
        return Err(Error::invalid(format!("bad window ({start}, {end}]")));
    }
    let mut a = 0.0;
    let mut log_sum = 0.0;
    let mut tail_end = 0.0;
    let mut tail_start = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if t > end {
            break;
        }
        if i > 0 {
            a = (-p.omega * (t - times[i - 1])).exp() * (a + 1.0);
        }
        if t > start {
            log_sum += (p.mu + p.beta * a).ln();
        } else {
            tail_start += -(-p.omega * (start - t)).exp_m1();
        }
        tail_end += -(-p.omega * (end - t)).exp_m1();
    }
    let increment = p.mu * (end - start) + p.beta / p.omega * (tail_end - tail_start);
    Ok(log_sum - increment)
}

/// Data-driven starting point: `μ₀ = 0.5·n/T`, `ω₀ = 1/mean gap`, `β₀ = ω₀/2`.
pub fn default_init(times: &[f64], horizon: f64) -> Result<HawkesParams> {
    let n = times.len();
    if n < 2 {
        return Err(Error::TooFewEvents { required: 2, got: n });
    }
    let span = times[n - 1] - times[0];
    if span <= 0.0 {
        return Err(Error::DegenerateTimes);
    }
    let omega = (n - 1) as f64 / span;
    HawkesParams::new(0.5 * n as f64 / horizon, 0.5 * omega, omega)
}

pub const MIN_FIT_EVENTS: usize = 5;

/// Maximum-likelihood fit on `[0, horizon]`, optimised over
/// `(ln μ, ln β, ln ω)`.
pub fn fit_mle(times: &[f64], horizon: f64, init: Option<HawkesParams>) -> Result<FitResult> {
    check_window(times, horizon)?;
    if times.len() < MIN_FIT_EVENTS {
        return Err(Error::TooFewEvents {
            required: MIN_FIT_EVENTS,
            got: times.len(),
        });
    }
    if horizon <= 0.0 || times[0] == times[times.len() - 1] {
        return Err(Error::DegenerateTimes);
    }
    let start = match init {
        Some(p) => {
            p.check()?;
            p
        }
        None => default_init(times, horizon)?,
    };

    let objective = |theta: &[f64]| -> (f64, Vec<f64>) {
        let p = HawkesParams {
            mu: theta[0].exp(),
            beta: theta[1].exp(),
            omega: theta[2].exp(),
        };
        let (ll, g) = loglik_and_gradient(&p, times, horizon);
        if !ll.is_finite() {
            return (f64::INFINITY, vec![0.0; 3]);
        }
        (-ll, vec![-g[0] * p.mu, -g[1] * p.beta, -g[2] * p.omega])
    };
    let bounds = Bounds {
        lower: vec![-30.0, BETA_FLOOR.ln(), -30.0],
        upper: vec![30.0, 30.0, 30.0],
    };
    let x0 = [start.mu.ln(), start.beta.max(BETA_FLOOR).ln(), start.omega.ln()];
    let mut out = optim::minimize(objective, &x0, &bounds, &Options::default());
    // Small samples can stall above the β → 0 edge; the nested Poisson fit is
    // always attainable, so restart from it when it does better.
    let edge = [(times.len() as f64 / horizon).ln(), BETA_FLOOR.ln(), x0[2]];
    if objective(&edge).0 < out.value {
        let retry = optim::minimize(objective, &edge, &bounds, &Options::default());
        if retry.value < out.value {
            out = Outcome {
                iterations: out.iterations + retry.iterations,
                used_simplex: out.used_simplex || retry.used_simplex,
                ..retry
            };
        }
    }

    let p = HawkesParams {
        mu: out.x[0].exp(),
        beta: out.x[1].exp(),
        omega: out.x[2].exp(),
    };
    let ll = loglik_unchecked(&p, times, horizon);
    let mut fit = FitResult::new(
        ModelParams::Hawkes {
            mu: p.mu,
            beta: p.beta,
            omega: p.omega,
        },
        ll,
        3,
    );
    fit.branching_ratio = Some(p.branching_ratio());
    fit.converged = out.converged;
    fit.n_iterations = out.iterations;
    if !p.is_subcritical() {
        fit.flags.push(FitFlag::Supercritical);
    }
    if p.beta < 1e-6 * p.mu {
        fit.flags.push(FitFlag::EffectivelyPoisson);
    }
    if out.used_simplex {
        fit.flags.push(FitFlag::SimplexFallback);
    }
    Ok(fit)
}

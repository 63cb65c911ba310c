//! Comparison models: homogeneous Poisson, piecewise-constant NHPP, linearly
//! drifting NHPP, a single Hawkes process over all clusters, and a
//! bounded-order ARIMA fitted by conditional least squares.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{FitFlag, FitResult, ModelParams};
use crate::hawkes::{self, check_times};
use crate::optim::{self, Bounds, Options, SimplexOptions};
use crate::taggraph::GenreCluster;

fn check_horizon(times: &[f64], horizon: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid(format!("observation length {horizon} must be positive")));
    }
    check_times(times)?;
    if times.last().is_some_and(|&t| t > horizon) {
        return Err(Error::invalid("event beyond the observation end"));
    }
    Ok(())
}

/// Homogeneous Poisson: `μ̂ = n/T`, `loglik = n·ln μ̂ − n`.
pub fn fit_poisson(times: &[f64], horizon: f64) -> Result<FitResult> {
    check_horizon(times, horizon)?;
    let n = times.len();
    if n == 0 {
        return Err(Error::TooFewEvents { required: 1, got: 0 });
    }
    let mu = n as f64 / horizon;
    Ok(FitResult::new(
        ModelParams::Poisson { mu },
        poisson_log_likelihood(mu, n, horizon),
        1,
    ))
}

pub fn poisson_log_likelihood(mu: f64, n: usize, horizon: f64) -> f64 {
    n as f64 * mu.ln() - mu * horizon
}

/// Bin edges of width `bin_width` anchored at `horizon`; a shorter remainder
/// bin, if any, sits at the start.
pub fn bin_edges(horizon: f64, bin_width: f64) -> Vec<f64> {
    let bins = ((horizon / bin_width) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut edges = vec![0.0];
    for k in (1..bins).rev() {
        let e = horizon - k as f64 * bin_width;
        if e > 0.0 {
            edges.push(e);
        }
    }
    edges.push(horizon);
    edges
}

/// Piecewise-constant rates: per-bin MLE `count / width`, `k` = bin count.
/// Empty bins contribute zero (`0·ln 0 := 0`).
pub fn fit_pc_nhpp(times: &[f64], horizon: f64, bin_width: f64) -> Result<FitResult> {
    check_horizon(times, horizon)?;
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::invalid(format!("bin width {bin_width} must be positive")));
    }
    let edges = bin_edges(horizon, bin_width);
    let nb = edges.len() - 1;
    let mut counts = vec![0usize; nb];
    for &t in times {
        // bins are (e_b, e_{b+1}] with the first closed at 0
        let b = edges[1..].partition_point(|&e| e < t).min(nb - 1);
        counts[b] += 1;
    }
    let mut ll = 0.0;
    let rates: Vec<f64> = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, w)| {
            let width = w[1] - w[0];
            let r = c as f64 / width;
            if c > 0 {
                ll += c as f64 * r.ln() - r * width;
            }
            r
        })
        .collect();
    Ok(FitResult::new(
        ModelParams::PcNhpp {
            bin_edges: edges,
            rates,
        },
        ll,
        nb,
    ))
}

/// Log-likelihood of `λ(t) = μt + b` on `[0, T]`; `-inf` where the rate is
/// not positive somewhere on the window.
pub fn drift_log_likelihood(mu_slope: f64, b: f64, times: &[f64], horizon: f64) -> Result<f64> {
    check_horizon(times, horizon)?;
    Ok(drift_gradient_unchecked(mu_slope, b, times, horizon).0)
}

/// Log-likelihood and gradient with respect to `(μ, b)`.
pub fn drift_gradient(mu_slope: f64, b: f64, times: &[f64], horizon: f64) -> Result<(f64, [f64; 2])> {
    check_horizon(times, horizon)?;
    Ok(drift_gradient_unchecked(mu_slope, b, times, horizon))
}

fn drift_gradient_unchecked(mu: f64, b: f64, times: &[f64], horizon: f64) -> (f64, [f64; 2]) {
    if !(b > 0.0 && mu * horizon + b > 0.0) {
        return (f64::NEG_INFINITY, [0.0, 0.0]);
    }
    let mut ll = -(mu * horizon * horizon / 2.0 + b * horizon);
    let mut g = [-horizon * horizon / 2.0, -horizon];
    for &t in times {
        let rate = mu * t + b;
        ll += rate.ln();
        g[0] += t / rate;
        g[1] += 1.0 / rate;
    }
    (ll, g)
}

/// Linear-rate NHPP by maximum likelihood.
///
/// The optimiser works on the log rates at both window ends, which keeps the
/// rate positive on all of `[0, T]`; slope and intercept are recovered from
/// them.
pub fn fit_nhpp_drift(times: &[f64], horizon: f64) -> Result<FitResult> {
    check_horizon(times, horizon)?;
    let n = times.len();
    if n < 2 {
        return Err(Error::TooFewEvents { required: 2, got: n });
    }
    let to_natural = |x: &[f64]| {
        let (start, end) = (x[0].exp(), x[1].exp());
        ((end - start) / horizon, start)
    };
    let objective = |x: &[f64]| -> (f64, Vec<f64>) {
        let (mu, b) = to_natural(x);
        let (ll, g) = drift_gradient_unchecked(mu, b, times, horizon);
        if !ll.is_finite() {
            return (f64::INFINITY, vec![0.0, 0.0]);
        }
        let (start, end) = (x[0].exp(), x[1].exp());
        // μ = (end − start)/T, b = start
        let d_start = -g[0] / horizon + g[1];
        let d_end = g[0] / horizon;
        (-ll, vec![-d_start * start, -d_end * end])
    };
    let level = (n as f64 / horizon).ln();
    let out = optim::minimize(
        objective,
        &[level, level],
        &Bounds {
            lower: vec![-30.0; 2],
            upper: vec![30.0; 2],
        },
        &Options::default(),
    );
    let (mu_slope, b_intercept) = to_natural(&out.x);
    let ll = drift_gradient_unchecked(mu_slope, b_intercept, times, horizon).0;
    let mut fit = FitResult::new(ModelParams::NhppDrift { mu_slope, b_intercept }, ll, 2);
    fit.converged = out.converged;
    fit.n_iterations = out.iterations;
    if out.used_simplex {
        fit.flags.push(FitFlag::SimplexFallback);
    }
    Ok(fit)
}

/// Expected count of a drifting NHPP over `(t, t + delta]`, counting only
/// the positive part of the rate.
pub fn drift_expected_count(mu_slope: f64, b: f64, t: f64, delta: f64) -> f64 {
    let antiderivative = |x: f64| mu_slope * x * x / 2.0 + b * x;
    let (lo, hi) = (t, t + delta);
    let (lo, hi) = if mu_slope == 0.0 {
        if b <= 0.0 {
            return 0.0;
        }
        (lo, hi)
    } else {
        let root = -b / mu_slope;
        if mu_slope > 0.0 {
            (lo.max(root), hi)
        } else {
            (lo, hi.min(root))
        }
    };
    if hi <= lo {
        0.0
    } else {
        antiderivative(hi) - antiderivative(lo)
    }
}

/// All cluster events merged into one time-ordered list.
pub fn pool_times(clusters: &[GenreCluster]) -> Vec<f64> {
    let mut times: Vec<f64> = clusters.iter().flat_map(|c| c.times()).collect();
    times.sort_by(f64::total_cmp);
    times
}

/// One Hawkes process for every event, ignoring cluster membership.
pub fn fit_global_hawkes(clusters: &[GenreCluster]) -> Result<FitResult> {
    if clusters.is_empty() {
        return Err(Error::invalid("no clusters to pool"));
    }
    let horizon = clusters
        .iter()
        .map(|c| c.events.horizon)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut fit = hawkes::fit_mle(&pool_times(clusters), horizon, None)?;
    if let ModelParams::Hawkes { mu, beta, omega } = fit.params {
        fit.params = ModelParams::HawkesGlobal { mu, beta, omega };
    }
    Ok(fit)
}

/// Daily event counts over `n_days` days; day `k` covers `[k, k+1)`.
pub fn daily_counts(times: &[f64], n_days: usize) -> Vec<f64> {
    let mut counts = vec![0.0; n_days];
    if n_days == 0 {
        return counts;
    }
    for &t in times {
        let day = (t.floor().max(0.0) as usize).min(n_days - 1);
        counts[day] += 1.0;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaLiteParams {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub intercept: f64,
    pub sigma2: f64,
}

/// A fitted ARIMA with the state needed to forecast.
#[derive(Debug, Clone)]
pub struct ArimaModel {
    pub params: ArimaLiteParams,
    pub fit: FitResult,
    series: Vec<f64>,
    differenced: Vec<f64>,
    residuals: Vec<f64>,
}

pub const ARIMA_MIN_LEN: usize = 20;
const SIGMA2_FLOOR: f64 = 1e-10;

fn difference(x: &[f64], d: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    for _ in 0..d {
        y = y.windows(2).map(|w| w[1] - w[0]).collect();
    }
    y
}

/// Conditional residuals with pre-sample innovations at zero. Observations
/// before `start` only condition the recursion.
fn css_residuals(y: &[f64], intercept: f64, ar: &[f64], ma: &[f64], start: usize) -> Vec<f64> {
    let mut e = vec![0.0; y.len()];
    for t in start..y.len() {
        let mut pred = intercept;
        for (k, phi) in ar.iter().enumerate() {
            pred += phi * y[t - k - 1];
        }
        for (k, theta) in ma.iter().enumerate() {
            if t > k {
                pred += theta * e[t - k - 1];
            }
        }
        e[t] = y[t] - pred;
    }
    e
}

/// MA polynomial `1 + θ₁z + θ₂z²` has all roots outside the unit circle.
pub fn ma_invertible(ma: &[f64]) -> bool {
    match ma {
        [] => true,
        [t1] => t1.abs() < 1.0,
        [t1, t2] => t2.abs() < 1.0 && t1 + t2 > -1.0 && t2 - t1 > -1.0,
        _ => false,
    }
}

fn clamp_ma(ma: &[f64]) -> Vec<f64> {
    // invertible region is convex and contains 0: bisect along the ray
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let scaled: Vec<f64> = ma.iter().map(|v| v * mid).collect();
        if ma_invertible(&scaled) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ma.iter().map(|v| v * lo * 0.99).collect()
}

/// Fit one `(p, d, q)` order by conditional least squares. The first
/// `condition_on` differenced values only seed the recursion.
pub fn fit_arima_order(counts: &[f64], p: usize, d: usize, q: usize, condition_on: usize) -> Result<ArimaModel> {
    if counts.len() < ARIMA_MIN_LEN {
        return Err(Error::SeriesTooShort {
            required: ARIMA_MIN_LEN,
            got: counts.len(),
        });
    }
    if p > 2 || q > 2 || d > 1 {
        return Err(Error::invalid(format!("order ({p},{d},{q}) outside p,q <= 2, d <= 1")));
    }
    if counts.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    let y = difference(counts, d);
    let start = condition_on.max(p);
    if y.len() <= start + 1 {
        return Err(Error::SeriesTooShort {
            required: start + 2,
            got: y.len(),
        });
    }
    let n_eff = (y.len() - start) as f64;
    let mean = y[start..].iter().sum::<f64>() / n_eff;

    let unpack = |x: &[f64]| (x[0], x[1..1 + p].to_vec(), x[1 + p..].to_vec());
    let sse = |x: &[f64]| -> f64 {
        let (c, ar, ma) = unpack(x);
        css_residuals(&y, c, &ar, &ma, start)[start..].iter().map(|e| e * e).sum()
    };
    let mut x0 = vec![0.0; 1 + p + q];
    x0[0] = mean;
    let (x, iterations, converged) = if p + q == 0 {
        (x0, 0, true)
    } else {
        let out = optim::nelder_mead(
            sse,
            &x0,
            &Bounds::unbounded(1 + p + q),
            &SimplexOptions {
                max_iter: 20_000,
                x_tol: 1e-9,
                f_tol: 1e-14,
                initial_step: 0.1,
            },
        );
        (out.x, out.iterations, out.converged)
    };

    let (intercept, ar, mut ma) = unpack(&x);
    let mut flags = Vec::new();
    if !ma_invertible(&ma) {
        ma = clamp_ma(&ma);
        flags.push(FitFlag::MaClamped);
    }
    let residuals = css_residuals(&y, intercept, &ar, &ma, start);
    let sse: f64 = residuals[start..].iter().map(|e| e * e).sum();
    let sigma2 = (sse / n_eff).max(SIGMA2_FLOOR);
    let ll = -0.5 * n_eff * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);

    let params = ArimaLiteParams {
        p,
        d,
        q,
        ar: ar.clone(),
        ma: ma.clone(),
        intercept,
        sigma2,
    };
    let mut fit = FitResult::new(
        ModelParams::ArimaLite {
            p,
            d,
            q,
            ar,
            ma,
            intercept,
            sigma2,
        },
        ll,
        p + q + 2,
    );
    fit.converged = converged;
    fit.n_iterations = iterations;
    fit.flags = flags;
    Ok(ArimaModel {
        params,
        fit,
        series: counts.to_vec(),
        differenced: y,
        residuals,
    })
}

/// Grid over `p ≤ max_p`, `d ≤ max_d`, `q ≤ max_q`; the lowest AIC wins, ties
/// going to the lexicographically smallest `(p, d, q)`.
pub fn fit_arima_lite(counts: &[f64], max_p: usize, max_d: usize, max_q: usize) -> Result<ArimaModel> {
    if counts.len() < ARIMA_MIN_LEN {
        return Err(Error::SeriesTooShort {
            required: ARIMA_MIN_LEN,
            got: counts.len(),
        });
    }
    let max_p = max_p.min(2);
    let max_d = max_d.min(1);
    let orders: Vec<(usize, usize, usize)> = (0..=max_p)
        .flat_map(|p| (0..=max_d).flat_map(move |d| (0..=max_q.min(2)).map(move |q| (p, d, q))))
        .collect();
    let fits: Vec<Result<ArimaModel>> = orders
        .par_iter()
        // every order scores residuals on the same original time points
        .map(|&(p, d, q)| fit_arima_order(counts, p, d, q, max_p + max_d - d))
        .collect();
    let mut best: Option<ArimaModel> = None;
    for fit in fits {
        let fit = fit?;
        let better = match &best {
            None => true,
            Some(b) => {
                let key = |m: &ArimaModel| (m.params.p, m.params.d, m.params.q);
                fit.fit.aic < b.fit.aic || (fit.fit.aic == b.fit.aic && key(&fit) < key(b))
            }
        };
        if better {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| Error::invalid("empty order grid"))
}

impl ArimaModel {
    /// `h`-step forecasts on the original scale, future innovations at zero.
    pub fn forecast(&self, h: usize) -> Vec<f64> {
        let ArimaLiteParams { ref ar, ref ma, intercept, d, .. } = self.params;
        let mut y = self.differenced.clone();
        let mut e = self.residuals.clone();
        let mut out = Vec::with_capacity(h);
        for _ in 0..h {
            let t = y.len();
            let mut pred = intercept;
            for (k, phi) in ar.iter().enumerate() {
                if t > k {
                    pred += phi * y[t - k - 1];
                }
            }
            for (k, theta) in ma.iter().enumerate() {
                if t > k {
                    pred += theta * e[t - k - 1];
                }
            }
            y.push(pred);
            e.push(0.0);
            out.push(pred);
        }
        if d == 1 {
            let mut level = *self.series.last().expect("series is non-empty");
            for v in out.iter_mut() {
                level += *v;
                *v = level;
            }
        }
        out
    }
}

//! Train/test splits, count forecasts, and the model comparison harness.
//!
//! Two Hawkes forecast modes are provided. [`expected_count`] integrates the
//! intensity driven by the training history alone, so excitation from events
//! inside the forecast window is ignored and counts are biased low whenever
//! `β > 0`. [`mc_expected_count`] simulates the window forward by thinning
//! and averages the counts. The comparison table labels them `hawkes` and
//! `hawkes_mc` (and likewise for the pooled model).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, daily_counts, drift_expected_count};
use crate::error::{Error, Result};
use crate::fit::{FitFlag, FitResult, ModelParams};
use crate::hawkes::{self, check_times, HawkesParams};
use crate::rng::{derive_stream, stream_rng};
use crate::simulate::thin_hawkes;
use crate::taggraph::GenreCluster;

pub const DEFAULT_HORIZON_DAYS: f64 = 14.0;
pub const MIN_MC_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_days: f64,
    pub horizon_days: f64,
    /// End of training, days since the stream origin.
    pub split_point: f64,
}

impl SplitSpec {
    /// Split placed so the forecast window ends at `stream_end`.
    pub fn ending_at(stream_end: f64, train_days: f64, horizon_days: f64) -> SplitSpec {
        SplitSpec {
            train_days,
            horizon_days,
            split_point: stream_end - horizon_days,
        }
    }

    pub fn validate(&self, stream_end: f64) -> Result<()> {
        if !(self.train_days > 0.0 && self.train_days.is_finite()) {
            return Err(Error::invalid(format!("train_days {} must be positive", self.train_days)));
        }
        if !(self.horizon_days > 0.0 && self.horizon_days.is_finite()) {
            return Err(Error::invalid(format!("horizon_days {} must be positive", self.horizon_days)));
        }
        if self.split_point - self.train_days < -1e-9 {
            return Err(Error::invalid(format!(
                "training window starts before the stream: split {} - train {} < 0",
                self.split_point, self.train_days
            )));
        }
        if self.split_point + self.horizon_days > stream_end + 1e-9 {
            return Err(Error::invalid(format!(
                "forecast window ends at {} beyond the observation end {stream_end}",
                self.split_point + self.horizon_days
            )));
        }
        Ok(())
    }

    pub fn window_start(&self) -> f64 {
        (self.split_point - self.train_days).max(0.0)
    }
}

/// Train and test events, re-indexed so training starts at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    /// Offset subtracted from the original times.
    pub offset: f64,
    /// Training length; training events lie in `[0, train_len]`.
    pub train_len: f64,
    pub horizon: f64,
    pub train: Vec<f64>,
    /// Test events, in `(train_len, train_len + horizon]`.
    pub test: Vec<f64>,
}

impl Split {
    /// Training followed by test events.
    pub fn all_times(&self) -> Vec<f64> {
        self.train.iter().chain(&self.test).copied().collect()
    }
}

/// Training covers `(split − train_days, split]` (closed at 0 when the window
/// reaches the origin); testing covers `(split, split + horizon]`. Earlier
/// events are dropped.
pub fn split_stream(times: &[f64], stream_end: f64, spec: &SplitSpec) -> Result<Split> {
    check_times(times)?;
    spec.validate(stream_end)?;
    let start = spec.split_point - spec.train_days;
    let split = spec.split_point;
    let end = split + spec.horizon_days;
    let offset = start.max(0.0);
    let in_train = |t: f64| (t > start || (start <= 0.0 && t >= 0.0)) && t <= split;
    let train: Vec<f64> = times.iter().copied().filter(|&t| in_train(t)).map(|t| t - offset).collect();
    if train.is_empty() {
        return Err(Error::EmptyTrainingWindow);
    }
    let test = times
        .iter()
        .copied()
        .filter(|&t| t > split && t <= end)
        .map(|t| t - offset)
        .collect();
    Ok(Split {
        offset,
        train_len: split - offset,
        horizon: spec.horizon_days,
        train,
        test,
    })
}

/// `Λ(t + δ) − Λ(t)` with only `history` (events at or before `t`) driving
/// the excitation.
pub fn expected_count(p: &HawkesParams, history: &[f64], t: f64, delta: f64) -> Result<f64> {
    p.check()?;
    p.require_subcritical()?;
    check_times(history)?;
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::invalid(format!("delta {delta} must be non-negative")));
    }
    if history.last().is_some_and(|&h| h > t) {
        return Err(Error::invalid("history extends past the forecast origin"));
    }
    let decay_window = -(-p.omega * delta).exp_m1();
    let carried: f64 = history.iter().map(|&h| (-p.omega * (t - h)).exp()).sum();
    Ok(p.mu * delta + p.beta / p.omega * carried * decay_window)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McForecast {
    pub mean: f64,
    /// Sample standard deviation of the simulated counts.
    pub std: f64,
    pub n_samples: usize,
}

impl McForecast {
    pub fn std_error(&self) -> f64 {
        self.std / (self.n_samples as f64).sqrt()
    }
}

/// Mean and spread of simulated counts in `(t, t + δ]` conditioned on
/// `history`. Sample `k` draws from stream `k` of `seed`.
pub fn mc_expected_count(
    p: &HawkesParams,
    history: &[f64],
    t: f64,
    delta: f64,
    n_samples: usize,
    seed: u64,
) -> Result<McForecast> {
    p.check()?;
    p.require_subcritical()?;
    check_times(history)?;
    if n_samples < MIN_MC_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_MC_SAMPLES} samples, got {n_samples}"
        )));
    }
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::invalid(format!("delta {delta} must be positive")));
    }
    if history.last().is_some_and(|&h| h > t) {
        return Err(Error::invalid("history extends past the forecast origin"));
    }
    // excitation older than e^-40 is irrelevant
    let cutoff = t - 40.0 / p.omega;
    let recent = &history[history.partition_point(|&h| h < cutoff)..];
    let counts: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k);
            thin_hawkes(p, t, t + delta, recent, &mut rng).len() as f64
        })
        .collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McForecast {
        mean,
        std: var.sqrt(),
        n_samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Hawkes,
    HawkesMc,
    HawkesGlobal,
    HawkesGlobalMc,
    Poisson,
    PcNhpp,
    NhppDrift,
    ArimaLite,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Hawkes,
        ModelKind::HawkesMc,
        ModelKind::HawkesGlobal,
        ModelKind::HawkesGlobalMc,
        ModelKind::Poisson,
        ModelKind::PcNhpp,
        ModelKind::NhppDrift,
        ModelKind::ArimaLite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Hawkes => "hawkes",
            ModelKind::HawkesMc => "hawkes_mc",
            ModelKind::HawkesGlobal => "hawkes_global",
            ModelKind::HawkesGlobalMc => "hawkes_global_mc",
            ModelKind::Poisson => "poisson",
            ModelKind::PcNhpp => "pc_nhpp",
            ModelKind::NhppDrift => "nhpp_drift",
            ModelKind::ArimaLite => "arima_lite",
        }
    }

    fn is_global(self) -> bool {
        matches!(self, ModelKind::HawkesGlobal | ModelKind::HawkesGlobalMc)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub predicted: f64,
    pub actual: usize,
    pub abs_error: f64,
    /// `abs_error / max(actual, 1)`.
    pub rel_error: f64,
}

impl ForecastResult {
    pub fn new(predicted: f64, actual: usize) -> ForecastResult {
        let abs_error = (predicted - actual as f64).abs();
        ForecastResult {
            predicted,
            actual,
            abs_error,
            rel_error: abs_error / (actual.max(1) as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub cluster_id: usize,
    pub model: ModelKind,
    pub train_days: f64,
    pub horizon_days: f64,
    pub loglik: Option<f64>,
    pub aic: Option<f64>,
    /// Log-likelihood of the test events given the training history.
    pub test_loglik: Option<f64>,
    pub actual: usize,
    pub forecast: Option<ForecastResult>,
    /// `ok`, `refused: ...` or `error: ...`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAggregate {
    pub model: ModelKind,
    pub n_clusters: usize,
    pub mean_abs_error: f64,
    pub mean_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub cluster_id: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub split: SplitSpec,
    pub rows: Vec<ComparisonRow>,
    pub aggregates: Vec<ModelAggregate>,
    pub excluded: Vec<Exclusion>,
}

impl ComparisonTable {
    pub fn row(&self, cluster_id: usize, model: ModelKind) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.cluster_id == cluster_id && r.model == model)
    }

    pub fn aggregate(&self, model: ModelKind) -> Option<&ModelAggregate> {
        self.aggregates.iter().find(|a| a.model == model)
    }

    /// Per-cluster `AIC(a) − AIC(b)` where both are available.
    pub fn aic_difference(&self, a: ModelKind, b: ModelKind) -> Vec<(usize, f64)> {
        let mut ids: Vec<usize> = self.rows.iter().map(|r| r.cluster_id).collect();
        ids.dedup();
        ids.into_iter()
            .filter_map(|id| {
                let x = self.row(id, a)?.aic?;
                let y = self.row(id, b)?.aic?;
                Some((id, x - y))
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "cluster_id",
            "model",
            "train_days",
            "horizon_days",
            "loglik",
            "aic",
            "predicted",
            "actual",
            "abs_error",
            "rel_error",
            "status",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.cluster_id.to_string(),
                r.model.name().to_string(),
                r.train_days.to_string(),
                r.horizon_days.to_string(),
                opt(r.loglik),
                opt(r.aic),
                opt(r.forecast.map(|f| f.predicted)),
                r.actual.to_string(),
                opt(r.forecast.map(|f| f.abs_error)),
                opt(r.forecast.map(|f| f.rel_error)),
                r.status.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub bin_width: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub arima_max_order: (usize, usize, usize),
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            bin_width: 7.0,
            mc_samples: 1000,
            seed: 0,
            arima_max_order: (2, 1, 2),
        }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

struct GlobalModel {
    fit: std::result::Result<FitResult, String>,
    /// Pooled training and test times in split coordinates.
    times: Vec<f64>,
    train_total: usize,
    train_len: f64,
}

/// Fit every requested model on each cluster's training window and score its
/// forecast of the test-window count.
pub fn evaluate_all(
    clusters: &[GenreCluster],
    spec: &SplitSpec,
    models: &[ModelKind],
    cfg: &EvalConfig,
) -> Result<ComparisonTable> {
    let mut models = models.to_vec();
    models.sort();
    models.dedup();
    let stream_end = clusters
        .iter()
        .map(|c| c.events.horizon)
        .fold(0.0f64, f64::max);
    if !models.is_empty() {
        spec.validate(stream_end)?;
    }

    let mut excluded = Vec::new();
    let mut splits = Vec::new();
    if !models.is_empty() {
        for c in clusters {
            match split_stream(&c.times(), stream_end, spec) {
                Ok(s) => splits.push((c.cluster_id, s)),
                Err(e) => excluded.push(Exclusion {
                    cluster_id: c.cluster_id,
                    reason: e.to_string(),
                }),
            }
        }
    }

    let global = models.iter().any(|m| m.is_global()).then(|| {
        let mut times: Vec<f64> = splits.iter().flat_map(|(_, s)| s.all_times()).collect();
        times.sort_by(f64::total_cmp);
        let train_len = splits.first().map_or(0.0, |(_, s)| s.train_len);
        let train: Vec<f64> = times.iter().copied().filter(|&t| t <= train_len).collect();
        let fit = hawkes::fit_mle(&train, train_len, None).map_err(|e| e.to_string()).map(|mut f| {
            if let ModelParams::Hawkes { mu, beta, omega } = f.params {
                f.params = ModelParams::HawkesGlobal { mu, beta, omega };
            }
            f
        });
        GlobalModel {
            fit,
            train_total: train.len(),
            times,
            train_len,
        }
    });

    let rows: Vec<ComparisonRow> = splits
        .par_iter()
        .flat_map_iter(|(id, split)| {
            models
                .iter()
                .map(|&m| evaluate_cell(*id, split, m, spec, cfg, global.as_ref()))
                .collect::<Vec<_>>()
        })
        .collect();

    let aggregates = models
        .iter()
        .filter_map(|&m| {
            let done: Vec<ForecastResult> = rows.iter().filter(|r| r.model == m).filter_map(|r| r.forecast).collect();
            if done.is_empty() {
                return None;
            }
            let n = done.len() as f64;
            Some(ModelAggregate {
                model: m,
                n_clusters: done.len(),
                mean_abs_error: done.iter().map(|f| f.abs_error).sum::<f64>() / n,
                mean_rel_error: done.iter().map(|f| f.rel_error).sum::<f64>() / n,
            })
        })
        .collect();

    Ok(ComparisonTable {
        split: *spec,
        rows,
        aggregates,
        excluded,
    })
}

fn evaluate_cell(
    cluster_id: usize,
    split: &Split,
    model: ModelKind,
    spec: &SplitSpec,
    cfg: &EvalConfig,
    global: Option<&GlobalModel>,
) -> ComparisonRow {
    let actual = split.test.len();
    let mut row = ComparisonRow {
        cluster_id,
        model,
        train_days: spec.train_days,
        horizon_days: spec.horizon_days,
        loglik: None,
        aic: None,
        test_loglik: None,
        actual,
        forecast: None,
        status: "ok".into(),
        fit: None,
    };
    let (l, h) = (split.train_len, split.horizon);
    let mc_seed = derive_stream(&[cfg.seed, cluster_id as u64, model as u64]);

    let outcome: Result<(FitResult, Option<f64>, Option<f64>)> = (|| match model {
        ModelKind::Hawkes | ModelKind::HawkesMc => {
            let fit = hawkes::fit_mle(&split.train, l, None)?;
            let p = fit.hawkes().expect("hawkes fit");
            let test_ll = finite(hawkes::log_likelihood_window(&p, &split.all_times(), l, l + h)?);
            if fit.has_flag(FitFlag::Supercritical) {
                return Ok((fit, test_ll, None));
            }
            let predicted = if model == ModelKind::Hawkes {
                expected_count(&p, &split.train, l, h)?
            } else {
                mc_expected_count(&p, &split.train, l, h, cfg.mc_samples, mc_seed)?.mean
            };
            Ok((fit, test_ll, Some(predicted)))
        }
        ModelKind::HawkesGlobal | ModelKind::HawkesGlobalMc => {
            let g = global.expect("global model prepared");
            let fit = g.fit.clone().map_err(Error::InvalidArgument)?;
            let p = fit.hawkes().expect("hawkes fit");
            let share = split.train.len() as f64 / g.train_total as f64;
            // the pooled model implies intensity share·λ_global for this cluster
            let pooled_ll = test_loglik_share(&p, &g.times, g.train_len, h, &split.test, share)?;
            if fit.has_flag(FitFlag::Supercritical) {
                return Ok((fit, pooled_ll, None));
            }
            let pooled_train: Vec<f64> = g.times.iter().copied().filter(|&t| t <= g.train_len).collect();
            let total = if model == ModelKind::HawkesGlobal {
                expected_count(&p, &pooled_train, g.train_len, h)?
            } else {
                mc_expected_count(&p, &pooled_train, g.train_len, h, cfg.mc_samples, mc_seed)?.mean
            };
            Ok((fit, pooled_ll, Some(share * total)))
        }
        ModelKind::Poisson => {
            let fit = baselines::fit_poisson(&split.train, l)?;
            let ModelParams::Poisson { mu } = fit.params else { unreachable!() };
            let test_ll = finite(actual as f64 * mu.ln() - mu * h);
            Ok((fit, test_ll, Some(mu * h)))
        }
        ModelKind::PcNhpp => {
            let fit = baselines::fit_pc_nhpp(&split.train, l, cfg.bin_width)?;
            let ModelParams::PcNhpp { ref rates, .. } = fit.params else { unreachable!() };
            let r = *rates.last().expect("at least one bin");
            let test_ll = if actual == 0 {
                Some(-r * h)
            } else {
                finite(actual as f64 * r.ln() - r * h)
            };
            Ok((fit.clone(), test_ll, Some(r * h)))
        }
        ModelKind::NhppDrift => {
            let fit = baselines::fit_nhpp_drift(&split.train, l)?;
            let ModelParams::NhppDrift { mu_slope, b_intercept } = fit.params else { unreachable!() };
            let predicted = drift_expected_count(mu_slope, b_intercept, l, h);
            let log_sum: f64 = split.test.iter().map(|&t| (mu_slope * t + b_intercept).ln()).sum();
            Ok((fit, finite(log_sum - predicted), Some(predicted)))
        }
        ModelKind::ArimaLite => {
            let n_days = l.ceil() as usize;
            let (mp, md, mq) = cfg.arima_max_order;
            let m = baselines::fit_arima_lite(&daily_counts(&split.train, n_days), mp, md, mq)?;
            let steps = h.ceil() as usize;
            let predicted: f64 = m.forecast(steps).iter().sum::<f64>() * (h / steps as f64);
            Ok((m.fit, None, Some(predicted.max(0.0))))
        }
    })();

    match outcome {
        Ok((fit, test_ll, predicted)) => {
            row.loglik = finite(fit.log_likelihood);
            row.aic = finite(fit.aic);
            row.test_loglik = test_ll;
            match predicted {
                Some(v) => row.forecast = Some(ForecastResult::new(v.max(0.0), actual)),
                None => row.status = "refused: supercritical".into(),
            }
            row.fit = Some(fit);
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

/// Held-out log-likelihood of `test` under intensity `share · λ(t)`, where
/// `λ` is driven by all pooled events.
fn test_loglik_share(
    p: &HawkesParams,
    pooled: &[f64],
    start: f64,
    horizon: f64,
    test: &[f64],
    share: f64,
) -> Result<Option<f64>> {
    let end = start + horizon;
    let pooled = &pooled[..pooled.partition_point(|&t| t <= end)];
    let compensator = hawkes::compensator(p, pooled, end)? - hawkes::compensator(p, pooled, start)?;
    let mut log_sum = 0.0;
    let mut a = 0.0;
    let mut prev: Option<f64> = None;
    let mut test_iter = test.iter().peekable();
    for &t in pooled {
        if let Some(tp) = prev {
            a = (-p.omega * (t - tp)).exp() * (a + 1.0);
        }
        prev = Some(t);
        if t > start && test_iter.peek().is_some_and(|&&x| x == t) {
            test_iter.next();
            log_sum += (share * (p.mu + p.beta * a)).ln();
        }
    }
    Ok(finite(log_sum - share * compensator))
}

//! Fit results common to every model.

use serde::{Deserialize, Serialize};

/// Model-specific estimates. Serialised with a `model` tag so a fit record
/// reads as `{"model": "hawkes", "mu": .., "beta": .., "omega": .., ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelParams {
    Hawkes {
        mu: f64,
        beta: f64,
        omega: f64,
    },
    HawkesGlobal {
        mu: f64,
        beta: f64,
        omega: f64,
    },
    Poisson {
        mu: f64,
    },
    PcNhpp {
        bin_edges: Vec<f64>,
        rates: Vec<f64>,
    },
    NhppDrift {
        mu_slope: f64,
        b_intercept: f64,
    },
    ArimaLite {
        p: usize,
        d: usize,
        q: usize,
        ar: Vec<f64>,
        ma: Vec<f64>,
        intercept: f64,
        sigma2: f64,
    },
}

impl ModelParams {
    pub fn name(&self) -> &'static str {
        match self {
            ModelParams::Hawkes { .. } => "hawkes",
            ModelParams::HawkesGlobal { .. } => "hawkes_global",
            ModelParams::Poisson { .. } => "poisson",
            ModelParams::PcNhpp { .. } => "pc_nhpp",
            ModelParams::NhppDrift { .. } => "nhpp_drift",
            ModelParams::ArimaLite { .. } => "arima_lite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// Branching ratio at or above one.
    Supercritical,
    /// Excitation weight below 1e-6 of the background rate.
    EffectivelyPoisson,
    /// Quasi-Newton line search failed twice; simplex search finished the fit.
    SimplexFallback,
    /// Non-invertible MA estimate pulled back inside the unit region.
    MaClamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub params: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branching_ratio: Option<f64>,
    #[serde(rename = "loglik")]
    pub log_likelihood: f64,
    pub n_params: usize,
    pub aic: f64,
    pub converged: bool,
    #[serde(rename = "n_iter")]
    pub n_iterations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<FitFlag>,
}

impl FitResult {
    pub fn new(params: ModelParams, log_likelihood: f64, n_params: usize) -> FitResult {
        FitResult {
            params,
            branching_ratio: None,
            log_likelihood,
            n_params,
            aic: aic(n_params, log_likelihood),
            converged: true,
            n_iterations: 0,
            flags: Vec::new(),
        }
    }

    pub fn model(&self) -> &'static str {
        self.params.name()
    }

    pub fn has_flag(&self, flag: FitFlag) -> bool {
        self.flags.contains(&flag)
    }
}

pub fn aic(n_params: usize, log_likelihood: f64) -> f64 {
    2.0 * n_params as f64 - 2.0 * log_likelihood
}

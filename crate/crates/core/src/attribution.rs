//! Triggering probabilities and the self / popularity / exogenous split.
//!
//! For events `i < j` of one cluster, `p_{i→j} = g(t_j − t_i) / λ(t_j)`.
//! The self-reinforcing score is the share of triggering mass on pairs with
//! the same uploader; the popularity score is the share on pairs where the
//! earlier video out-performs the later uploader's average popularity; the
//! exogenous score is what remains.
//!
//! Popularity counts are end-of-observation snapshots, not values at upload
//! time; they are used as given.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::hawkes::{check_times, HawkesParams};
use crate::ingest::{Event, EventStream};
use crate::taggraph::GenreCluster;

/// Pairs with `ω·(t_j − t_i)` above this contribute less than `e^{-40}` and
/// are skipped.
pub const DEFAULT_TRUNCATION: f64 = 40.0;

/// Which uploads feed an uploader's average popularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AverageMode {
    /// Only uploads strictly before the focal upload.
    #[default]
    Causal,
    /// Every upload by the uploader.
    AllTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AverageScope {
    /// Uploads across the whole platform stream.
    #[default]
    Platform,
    /// Uploads within the cluster being scored.
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributionConfig {
    pub w_comments: f64,
    pub average: AverageMode,
    pub scope: AverageScope,
    pub truncation: f64,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            w_comments: 1.0,
            average: AverageMode::Causal,
            scope: AverageScope::Platform,
            truncation: DEFAULT_TRUNCATION,
        }
    }
}

/// `ψ = views + w_comments · comments`.
pub fn popularity(e: &Event, w_comments: f64) -> f64 {
    e.n_views as f64 + w_comments * e.n_comments as f64
}

/// Per-video uploader baseline `ψ_avg(u_j)` evaluated at that video's upload.
#[derive(Debug, Clone, Default)]
pub struct PopularityBaselines {
    by_video: HashMap<String, f64>,
}

impl PopularityBaselines {
    /// Baselines over `stream`. An uploader with no qualifying uploads has
    /// baseline 0.
    pub fn from_stream(stream: &EventStream, w_comments: f64, mode: AverageMode) -> PopularityBaselines {
        let mut by_video = HashMap::with_capacity(stream.len());
        match mode {
            AverageMode::AllTime => {
                let mut totals: HashMap<&str, (f64, usize)> = HashMap::new();
                for e in &stream.events {
                    let t = totals.entry(&e.uploader_id).or_insert((0.0, 0));
                    t.0 += popularity(e, w_comments);
                    t.1 += 1;
                }
                for e in &stream.events {
                    let (sum, n) = totals[e.uploader_id.as_str()];
                    by_video.insert(e.video_id.clone(), sum / n as f64);
                }
            }
            AverageMode::Causal => {
                let mut running: HashMap<&str, (f64, usize)> = HashMap::new();
                let events = &stream.events;
                let mut start = 0;
                while start < events.len() {
                    // uploads sharing a timestamp do not see each other
                    let mut end = start;
                    while end < events.len() && events[end].upload_time == events[start].upload_time {
                        end += 1;
                    }
                    for e in &events[start..end] {
                        let avg = running
                            .get(e.uploader_id.as_str())
                            .map_or(0.0, |&(sum, n)| sum / n as f64);
                        by_video.insert(e.video_id.clone(), avg);
                    }
                    for e in &events[start..end] {
                        let r = running.entry(&e.uploader_id).or_insert((0.0, 0));
                        r.0 += popularity(e, w_comments);
                        r.1 += 1;
                    }
                    start = end;
                }
            }
        }
        PopularityBaselines { by_video }
    }

    pub fn get(&self, video_id: &str) -> f64 {
        self.by_video.get(video_id).copied().unwrap_or(0.0)
    }
}

/// `p_{i→j}` for events `i < j` (positions in canonical order).
pub fn triggering_probability(p: &HawkesParams, times: &[f64], i: usize, j: usize) -> Result<f64> {
    p.check()?;
    check_times(times)?;
    if i >= j {
        return Err(Error::invalid(format!("need i < j, got i = {i}, j = {j}")));
    }
    if j >= times.len() {
        return Err(Error::invalid(format!("index {j} out of range")));
    }
    let lambda = p.mu
        + times[..j]
            .iter()
            .map(|&tk| p.kernel(times[j] - tk))
            .sum::<f64>();
    Ok(p.kernel(times[j] - times[i]) / lambda)
}

/// Raw score sums for one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairMass {
    pub total: f64,
    pub same_uploader: f64,
    pub popular: f64,
    pub n_pairs: usize,
}

/// Walk every pair `i < j` within the truncation window, accumulating
/// triggering mass and both indicator-weighted sums.
pub fn pair_mass(
    cluster: &GenreCluster,
    p: &HawkesParams,
    baselines: &PopularityBaselines,
    w_comments: f64,
    truncation: f64,
) -> Result<PairMass> {
    p.check()?;
    let events = &cluster.events.events;
    let times = cluster.times();
    check_times(&times)?;
    let psi: Vec<f64> = events.iter().map(|e| popularity(e, w_comments)).collect();
    let mut mass = PairMass::default();
    let mut a = 0.0;
    for j in 0..events.len() {
        if j > 0 {
            a = (-p.omega * (times[j] - times[j - 1])).exp() * (a + 1.0);
        }
        let lambda = p.mu + p.beta * a;
        let threshold = baselines.get(&events[j].video_id);
        for i in (0..j).rev() {
            let lag = times[j] - times[i];
            if p.omega * lag > truncation {
                break;
            }
            let pij = p.kernel(lag) / lambda;
            mass.total += pij;
            if events[i].uploader_id == events[j].uploader_id {
                mass.same_uploader += pij;
            }
            if psi[i] > threshold {
                mass.popular += pij;
            }
            mass.n_pairs += 1;
        }
    }
    Ok(mass)
}

fn share(numerator: f64, mass: &PairMass) -> Result<f64> {
    if mass.total > 0.0 {
        Ok((numerator / mass.total).clamp(0.0, 1.0))
    } else {
        Err(Error::NoEndogenousMass)
    }
}

fn check_attributable(cluster: &GenreCluster, p: &HawkesParams) -> Result<()> {
    if cluster.events.len() < 2 || p.beta == 0.0 {
        Err(Error::NoEndogenousMass)
    } else {
        Ok(())
    }
}

/// Share of triggering mass between uploads by the same uploader.
pub fn self_score(cluster: &GenreCluster, p: &HawkesParams) -> Result<f64> {
    check_attributable(cluster, p)?;
    let mass = pair_mass(cluster, p, &PopularityBaselines::default(), 0.0, DEFAULT_TRUNCATION)?;
    share(mass.same_uploader, &mass)
}

/// Share of triggering mass where the earlier video's popularity exceeds the
/// later uploader's baseline.
pub fn pop_score(
    cluster: &GenreCluster,
    p: &HawkesParams,
    w_comments: f64,
    baselines: &PopularityBaselines,
) -> Result<f64> {
    check_attributable(cluster, p)?;
    let mass = pair_mass(cluster, p, baselines, w_comments, DEFAULT_TRUNCATION)?;
    share(mass.popular, &mass)
}

/// `1 − (s_self + s_pop)`; grouping the sum first makes
/// `s_self + s_pop + s_exo` evaluate to exactly 1.
pub fn exo_score(s_self: f64, s_pop: f64) -> f64 {
    1.0 - (s_self + s_pop)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub cluster_id: usize,
    pub s_self: Option<f64>,
    pub s_pop: Option<f64>,
    pub s_exo: Option<f64>,
    pub n_pairs_evaluated: usize,
    pub w_comments: f64,
    /// Set when the scores could not be computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub not_attributable: Option<String>,
    /// `s_self + s_pop > 1`, leaving a negative exogenous share.
    #[serde(default)]
    pub negative_exo: bool,
}

impl AttributionReport {
    fn unavailable(cluster_id: usize, cfg: &AttributionConfig, reason: String) -> Self {
        AttributionReport {
            cluster_id,
            s_self: None,
            s_pop: None,
            s_exo: None,
            n_pairs_evaluated: 0,
            w_comments: cfg.w_comments,
            not_attributable: Some(reason),
            negative_exo: false,
        }
    }
}

/// Attribution for every cluster. `platform` is the full stream used for
/// platform-wide popularity baselines.
pub fn attribution_report(
    clusters: &[GenreCluster],
    fits: &BTreeMap<usize, FitResult>,
    platform: &EventStream,
    cfg: &AttributionConfig,
) -> Result<Vec<AttributionReport>> {
    for c in clusters {
        if !fits.contains_key(&c.cluster_id) {
            return Err(Error::MissingFit(c.cluster_id));
        }
    }
    let platform_baselines = match cfg.scope {
        AverageScope::Platform => Some(PopularityBaselines::from_stream(platform, cfg.w_comments, cfg.average)),
        AverageScope::Cluster => None,
    };
    Ok(clusters
        .par_iter()
        .map(|c| {
            let fit = &fits[&c.cluster_id];
            let Some(p) = fit.hawkes() else {
                return AttributionReport::unavailable(c.cluster_id, cfg, "fit is not a Hawkes fit".into());
            };
            if !fit.converged {
                return AttributionReport::unavailable(c.cluster_id, cfg, "fit did not converge".into());
            }
            if check_attributable(c, &p).is_err() {
                return AttributionReport::unavailable(c.cluster_id, cfg, "no endogenous mass to attribute".into());
            }
            let local;
            let baselines = match &platform_baselines {
                Some(b) => b,
                None => {
                    local = PopularityBaselines::from_stream(&c.events, cfg.w_comments, cfg.average);
                    &local
                }
            };
            match pair_mass(c, &p, baselines, cfg.w_comments, cfg.truncation) {
                Ok(mass) if mass.total > 0.0 => {
                    let s_self = (mass.same_uploader / mass.total).clamp(0.0, 1.0);
                    let s_pop = (mass.popular / mass.total).clamp(0.0, 1.0);
                    let s_exo = exo_score(s_self, s_pop);
                    AttributionReport {
                        cluster_id: c.cluster_id,
                        s_self: Some(s_self),
                        s_pop: Some(s_pop),
                        s_exo: Some(s_exo),
                        n_pairs_evaluated: mass.n_pairs,
                        w_comments: cfg.w_comments,
                        not_attributable: None,
                        negative_exo: s_exo < 0.0,
                    }
                }
                Ok(_) => AttributionReport::unavailable(c.cluster_id, cfg, "no endogenous mass to attribute".into()),
                Err(e) => AttributionReport::unavailable(c.cluster_id, cfg, e.to_string()),
            }
        })
        .collect())
}

/// Long-format rows `(cluster_id, factor, value)` for a stacked-bar chart.
pub fn factor_rows(reports: &[AttributionReport]) -> Vec<(usize, &'static str, f64)> {
    reports
        .iter()
        .filter_map(|r| Some((r.cluster_id, r.s_self?, r.s_pop?, r.s_exo?)))
        .flat_map(|(id, s, p, e)| [(id, "self_reinforcing", s), (id, "popularity", p), (id, "exogenous", e)])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RawRecord;

    const P: HawkesParams = HawkesParams {
        mu: 0.5,
        beta: 1.0,
        omega: 2.0,
    };

    fn cluster(rows: &[(f64, &str, i64)]) -> GenreCluster {
        let stream = EventStream::from_records(
            rows.iter()
                .enumerate()
                .map(|(i, &(t, u, views))| RawRecord {
                    video_id: format!("v{i:03}"),
                    timestamp: t * 86_400.0,
                    uploader_id: u.to_string(),
                    tags: ["x".to_string()].into(),
                    n_views: views,
                    n_comments: 0,
                })
                .collect(),
        );
        GenreCluster {
            cluster_id: 0,
            tags: ["x".to_string()].into(),
            events: stream,
        }
    }

    #[test]
    fn hand_value() {
        let p = triggering_probability(&P, &[1.0, 1.5], 0, 1).unwrap();
        assert!((p - 0.423_883_115_234_170_9).abs() < 1e-12);
        assert!(triggering_probability(&P, &[1.0, 1.5], 1, 1).is_err());
        let zero = HawkesParams { beta: 0.0, ..P };
        assert_eq!(triggering_probability(&zero, &[1.0, 1.5], 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn probabilities_and_background_sum_to_one() {
        let times = [0.0, 0.2, 0.2, 0.9, 1.4, 3.0];
        for j in 1..times.len() {
            let lambda = crate::hawkes::intensity_at(&P, &times[..j], times[j]).unwrap()
                + times[..j].iter().filter(|&&t| t == times[j]).count() as f64 * P.beta;
            let total: f64 = (0..j).map(|i| triggering_probability(&P, &times, i, j).unwrap()).sum();
            assert!((total + P.mu / lambda - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn self_score_extremes() {
        let one = cluster(&[(0.0, "a", 1), (0.5, "a", 1), (0.7, "a", 1), (1.0, "a", 1)]);
        assert_eq!(self_score(&one, &P).unwrap(), 1.0);
        let distinct = cluster(&[(0.0, "a", 1), (0.5, "b", 1), (0.7, "c", 1), (1.0, "d", 1)]);
        assert_eq!(self_score(&distinct, &P).unwrap(), 0.0);
        let single = cluster(&[(0.0, "a", 1)]);
        assert!(matches!(self_score(&single, &P), Err(Error::NoEndogenousMass)));
        assert!(matches!(
            self_score(&one, &HawkesParams { beta: 0.0, ..P }),
            Err(Error::NoEndogenousMass)
        ));
    }

    #[test]
    fn pop_score_extremes() {
        let zero = cluster(&[(0.0, "a", 0), (0.5, "b", 0), (0.7, "a", 0)]);
        let b = PopularityBaselines::from_stream(&zero.events, 1.0, AverageMode::Causal);
        assert_eq!(pop_score(&zero, &P, 1.0, &b).unwrap(), 0.0);

        // "a" averaged 5 elsewhere on the platform; every cluster video has ψ = 10
        let c = cluster(&[(1.0, "a", 10), (1.2, "a", 10), (1.5, "a", 10)]);
        let mut platform = c.events.clone();
        let mut prior = c.events.events[0].clone();
        prior.video_id = "elsewhere".into();
        prior.upload_time = -0.5;
        prior.n_views = 5;
        prior.tags = ["y".to_string()].into();
        platform.events.insert(0, prior);
        let b = PopularityBaselines::from_stream(&platform, 1.0, AverageMode::Causal);
        assert_eq!(b.get("v000"), 5.0);
        assert_eq!(pop_score(&c, &P, 1.0, &b).unwrap(), 1.0);
    }

    #[test]
    fn exo_arithmetic() {
        assert!((exo_score(0.3, 0.5) - 0.2).abs() < 1e-15);
        assert_eq!(exo_score(0.0, 0.0), 1.0);
        assert_eq!(exo_score(1.0, 0.0), 0.0);
    }

    #[test]
    fn report_handles_missing_and_unattributable() {
        let c = cluster(&[(0.0, "a", 1)]);
        let fits = BTreeMap::new();
        assert!(matches!(
            attribution_report(std::slice::from_ref(&c), &fits, &c.events, &AttributionConfig::default()),
            Err(Error::MissingFit(0))
        ));
        let fit = {
            let mut f = FitResult::new(
                crate::fit::ModelParams::Hawkes {
                    mu: 0.5,
                    beta: 1.0,
                    omega: 2.0,
                },
                0.0,
                3,
            );
            f.converged = true;
            f
        };
        let fits = BTreeMap::from([(0, fit)]);
        let r = attribution_report(std::slice::from_ref(&c), &fits, &c.events, &AttributionConfig::default()).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].not_attributable.is_some());
    }

    #[test]
    fn causal_baselines_ignore_simultaneous_uploads() {
        let c = cluster(&[(0.0, "a", 4), (0.0, "a", 8), (1.0, "a", 30)]);
        let b = PopularityBaselines::from_stream(&c.events, 1.0, AverageMode::Causal);
        assert_eq!(b.get("v000"), 0.0);
        assert_eq!(b.get("v001"), 0.0);
        assert_eq!(b.get("v002"), 6.0);
        let all = PopularityBaselines::from_stream(&c.events, 1.0, AverageMode::AllTime);
        assert_eq!(all.get("v000"), 14.0);
    }
}

//! Exact simulation by thinning, and synthetic multi-cluster corpora.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, Exp1, LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hawkes::HawkesParams;
use crate::ingest::{EventStream, RawRecord, SECONDS_PER_DAY};
use crate::rng::{derive_stream, stream_rng, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Independent stream under the same seed (e.g. one per cluster).
    #[serde(default)]
    pub stream: u64,
    pub t_start: f64,
    pub t_end: f64,
    /// Conditioning events, all before `t_start`.
    #[serde(default)]
    pub history: Vec<f64>,
}

impl SimConfig {
    pub fn new(seed: u64, t_start: f64, t_end: f64) -> SimConfig {
        SimConfig {
            seed,
            stream: 0,
            t_start,
            t_end,
            history: Vec::new(),
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_end > self.t_start) {
            return Err(Error::invalid(format!(
                "need t_end > t_start, got ({}, {}]",
                self.t_start, self.t_end
            )));
        }
        if let Some(h) = self.history.iter().find(|&&h| h.is_nan() || h >= self.t_start) {
            return Err(Error::invalid(format!("history point {h} is not before t_start")));
        }
        Ok(())
    }
}

/// Hawkes event times in `(t_start, t_end]` by Ogata thinning.
pub fn simulate_hawkes(p: &HawkesParams, c: &SimConfig) -> Result<Vec<f64>> {
    p.check()?;
    p.require_subcritical()?;
    c.check()?;
    let mut rng = stream_rng(c.seed, c.stream);
    Ok(thin_hawkes(p, c.t_start, c.t_end, &c.history, &mut rng))
}

/// Thinning loop. Between events the exponential kernel only decays, so the
/// intensity right after the current point bounds every later candidate up
/// to the next acceptance.
pub(crate) fn thin_hawkes(
    p: &HawkesParams,
    t_start: f64,
    t_end: f64,
    history: &[f64],
    rng: &mut StreamRng,
) -> Vec<f64> {
    let mut excitation: f64 = history
        .iter()
        .filter(|&&h| h <= t_start)
        .map(|&h| p.kernel(t_start - h))
        .sum();
    let mut t = t_start;
    let mut out = Vec::new();
    loop {
        let bound = p.mu + excitation;
        let wait: f64 = Exp1.sample(rng);
        let candidate = t + wait / bound;
        if candidate > t_end {
            break;
        }
        excitation *= (-p.omega * (candidate - t)).exp();
        let u: f64 = rng.random();
        if u * bound <= p.mu + excitation {
            out.push(candidate);
            excitation += p.beta;
        }
        t = candidate;
    }
    out
}

/// Nonhomogeneous Poisson times in `(t_start, t_end]`, thinned against a
/// constant bound.
pub fn simulate_nhpp<F>(rate_fn: F, rate_bound: f64, c: &SimConfig) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64,
{
    c.check()?;
    if !(rate_bound.is_finite() && rate_bound >= 0.0) {
        return Err(Error::invalid(format!("rate bound {rate_bound} is invalid")));
    }
    let mut out = Vec::new();
    if rate_bound == 0.0 {
        return Ok(out);
    }
    let mut rng = stream_rng(c.seed, c.stream);
    let mut t = c.t_start;
    loop {
        let wait: f64 = Exp1.sample(&mut rng);
        t += wait / rate_bound;
        if t > c.t_end {
            break;
        }
        let rate = rate_fn(t);
        if rate.is_nan() || rate < 0.0 || rate > rate_bound * (1.0 + 1e-12) {
            return Err(Error::RateBoundViolated {
                t,
                value: rate,
                bound: rate_bound,
            });
        }
        let u: f64 = rng.random();
        if u * rate_bound <= rate {
            out.push(t);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploaderModel {
    /// Uploader IDs are `{pool}-u{k}` for `k < size`; clusters naming the
    /// same pool share uploaders.
    pub pool: String,
    pub size: usize,
    /// Probability that an upload reuses the previous upload's uploader.
    #[serde(default)]
    pub repeat_prob: f64,
}

/// Per-uploader quality `q ~ LogNormal(0, σ²)`; views ~ Poisson(views_scale·q),
/// comments ~ Poisson(comments_scale·q).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityModel {
    pub quality_sigma: f64,
    pub views_scale: f64,
    pub comments_scale: f64,
}

impl Default for PopularityModel {
    fn default() -> Self {
        PopularityModel {
            quality_sigma: 0.5,
            views_scale: 50.0,
            comments_scale: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    /// First tag is the anchor carried by every video.
    pub tags: Vec<String>,
    pub params: HawkesParams,
    pub uploaders: UploaderModel,
    #[serde(default)]
    pub popularity: PopularityModel,
    /// Probability each non-anchor tag is attached to a video.
    #[serde(default = "one")]
    pub tag_prob: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub clusters: Vec<ClusterSpec>,
    /// Simulated window `(0, t_end]`, days.
    pub t_end: f64,
    pub seed: u64,
    /// Every non-anchor tag co-occurs with the anchor at least this often.
    pub eta: u64,
    /// Epoch seconds of simulated time zero.
    #[serde(default = "default_epoch")]
    pub epoch: f64,
}

fn default_epoch() -> f64 {
    // 2011-04-30T00:00:00Z
    1_304_121_600.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCluster {
    pub index: usize,
    pub tags: Vec<String>,
    pub mu: f64,
    pub beta: f64,
    pub omega: f64,
    pub n_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub t_end: f64,
    pub eta: u64,
    pub clusters: Vec<TruthCluster>,
    /// `video_id → generating cluster index`.
    pub labels: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub stream: EventStream,
    pub truth: GroundTruth,
}

const QUALITY_STREAM: u64 = 0x5155_414c;

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn uploader_quality(seed: u64, id: &str, model: &PopularityModel) -> f64 {
    let mut rng = stream_rng(seed, derive_stream(&[QUALITY_STREAM, fnv1a(id)]));
    LogNormal::new(0.0, model.quality_sigma)
        .map(|d| d.sample(&mut rng))
        .unwrap_or(1.0)
}

fn poisson_count(mean: f64, rng: &mut StreamRng) -> i64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as i64).unwrap_or(0)
}

/// Simulate every cluster, attach uploaders, tags and popularity, and merge
/// into one stream with ground-truth labels.
pub fn make_synthetic_corpus(spec: &CorpusSpec) -> Result<SyntheticCorpus> {
    let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
    for (k, c) in spec.clusters.iter().enumerate() {
        if c.tags.is_empty() {
            return Err(Error::invalid(format!("cluster {k} has no tags")));
        }
        for tag in &c.tags {
            if tag.is_empty() {
                return Err(Error::invalid(format!("cluster {k} has an empty tag")));
            }
            if let Some(&other) = owner.get(tag.as_str()) {
                if other != k {
                    return Err(Error::OverlappingTags(tag.clone()));
                }
            }
            owner.insert(tag, k);
        }
        if c.uploaders.size == 0 {
            return Err(Error::invalid(format!("cluster {k} has an empty uploader pool")));
        }
        if !(0.0..=1.0).contains(&c.uploaders.repeat_prob) || !(0.0..=1.0).contains(&c.tag_prob) {
            return Err(Error::invalid(format!("cluster {k}: probabilities must lie in [0, 1]")));
        }
    }
    if spec.t_end.is_nan() || spec.t_end <= 0.0 {
        return Err(Error::invalid("t_end must be positive"));
    }

    let per_cluster: Vec<Result<(Vec<RawRecord>, TruthCluster)>> = spec
        .clusters
        .par_iter()
        .enumerate()
        .map(|(k, c)| simulate_cluster(spec, k, c))
        .collect();

    let mut records = Vec::new();
    let mut truth = GroundTruth {
        seed: spec.seed,
        t_end: spec.t_end,
        eta: spec.eta,
        clusters: Vec::new(),
        labels: BTreeMap::new(),
    };
    for (k, item) in per_cluster.into_iter().enumerate() {
        let (recs, tc) = item?;
        for r in &recs {
            truth.labels.insert(r.video_id.clone(), k);
        }
        records.extend(recs);
        truth.clusters.push(tc);
    }

    let end_epoch = spec.epoch + spec.t_end * SECONDS_PER_DAY;
    let mut stream = EventStream::from_records(records);
    if !stream.is_empty() {
        let horizon = (end_epoch - stream.origin) / SECONDS_PER_DAY;
        if horizon >= stream.horizon {
            stream.horizon = horizon;
        }
    }
    Ok(SyntheticCorpus { stream, truth })
}

fn simulate_cluster(spec: &CorpusSpec, k: usize, c: &ClusterSpec) -> Result<(Vec<RawRecord>, TruthCluster)> {
    let mut rng = stream_rng(spec.seed, derive_stream(&[k as u64]));
    c.params.check()?;
    c.params.require_subcritical()?;
    let times = thin_hawkes(&c.params, 0.0, spec.t_end, &[], &mut rng);
    let n = times.len();

    let mut tag_sets: Vec<BTreeSet<String>> = (0..n)
        .map(|_| {
            let mut set = BTreeSet::from([c.tags[0].clone()]);
            for tag in &c.tags[1..] {
                if rng.random::<f64>() < c.tag_prob {
                    set.insert(tag.clone());
                }
            }
            set
        })
        .collect();
    if c.tags.len() > 1 && n > 0 {
        let eta = spec.eta.max(1) as usize;
        if n < eta {
            return Err(Error::invalid(format!(
                "cluster {k} produced {n} events, fewer than eta = {eta}"
            )));
        }
        for tag in &c.tags[1..] {
            let mut have = tag_sets.iter().filter(|s| s.contains(tag)).count();
            for set in tag_sets.iter_mut() {
                if have >= eta {
                    break;
                }
                if set.insert(tag.clone()) {
                    have += 1;
                }
            }
        }
    }

    let mut qualities: BTreeMap<usize, f64> = BTreeMap::new();
    let mut previous: Option<usize> = None;
    let mut records = Vec::with_capacity(n);
    for (i, (&t, tags)) in times.iter().zip(tag_sets).enumerate() {
        let who = match previous {
            Some(u) if rng.random::<f64>() < c.uploaders.repeat_prob => u,
            _ => rng.random_range(0..c.uploaders.size),
        };
        previous = Some(who);
        let uploader_id = format!("{}-u{who}", c.uploaders.pool);
        let q = *qualities
            .entry(who)
            .or_insert_with(|| uploader_quality(spec.seed, &uploader_id, &c.popularity));
        records.push(RawRecord {
            video_id: format!("c{k}-v{i:06}"),
            timestamp: spec.epoch + t * SECONDS_PER_DAY,
            uploader_id,
            tags,
            n_views: poisson_count(c.popularity.views_scale * q, &mut rng),
            n_comments: poisson_count(c.popularity.comments_scale * q, &mut rng),
        });
    }
    Ok((
        records,
        TruthCluster {
            index: k,
            tags: c.tags.clone(),
            mu: c.params.mu,
            beta: c.params.beta,
            omega: c.params.omega,
            n_events: n,
        },
    ))
}

/// A ready-made three-cluster corpus used by the CLI and smoke tests.
pub fn bundled_corpus_spec(seed: u64) -> CorpusSpec {
    let cluster = |tags: &[&str], mu, beta, omega, pool: &str, size, repeat_prob| ClusterSpec {
        tags: tags.iter().map(|t| t.to_string()).collect(),
        params: HawkesParams { mu, beta, omega },
        uploaders: UploaderModel {
            pool: pool.to_string(),
            size,
            repeat_prob,
        },
        popularity: PopularityModel::default(),
        tag_prob: 0.6,
    };
    CorpusSpec {
        clusters: vec![
            cluster(&["music", "live", "cover"], 2.0, 1.2, 2.0, "pool-a", 40, 0.6),
            cluster(&["gaming", "speedrun", "retro"], 0.6, 0.3, 1.0, "pool-b", 25, 0.1),
            cluster(&["cooking", "recipe"], 1.0, 2.4, 4.0, "pool-c", 60, 0.3),
        ],
        t_end: 180.0,
        seed,
        eta: 5,
        epoch: default_epoch(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hawkes_is_deterministic_per_seed() {
        let p = HawkesParams::new(0.5, 0.8, 2.0).unwrap();
        let c = SimConfig::new(11, 0.0, 200.0);
        let a = simulate_hawkes(&p, &c).unwrap();
        assert_eq!(a, simulate_hawkes(&p, &c).unwrap());
        assert_ne!(a, simulate_hawkes(&p, &SimConfig::new(12, 0.0, 200.0)).unwrap());
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.iter().all(|&t| t > 0.0 && t <= 200.0));
    }

    #[test]
    fn supercritical_refused() {
        let p = HawkesParams::new(0.5, 2.0, 2.0).unwrap();
        assert!(matches!(
            simulate_hawkes(&p, &SimConfig::new(1, 0.0, 10.0)),
            Err(Error::Supercritical(_))
        ));
    }

    #[test]
    fn config_validation() {
        let p = HawkesParams::new(0.5, 0.1, 2.0).unwrap();
        assert!(simulate_hawkes(&p, &SimConfig::new(1, 5.0, 5.0)).is_err());
        let mut c = SimConfig::new(1, 5.0, 10.0);
        c.history = vec![1.0, 6.0];
        assert!(simulate_hawkes(&p, &c).is_err());
    }

    #[test]
    fn nhpp_edge_cases() {
        let c = SimConfig::new(3, 0.0, 100.0);
        assert!(simulate_nhpp(|_| 0.0, 0.0, &c).unwrap().is_empty());
        assert!(simulate_nhpp(|_| 0.0, 1.0, &c).unwrap().is_empty());
        assert!(matches!(
            simulate_nhpp(|t| t, 10.0, &c),
            Err(Error::RateBoundViolated { .. })
        ));
    }

    #[test]
    fn corpus_rejects_overlap_and_handles_empty() {
        let mut spec = bundled_corpus_spec(1);
        spec.clusters[1].tags.push("music".into());
        assert!(matches!(make_synthetic_corpus(&spec), Err(Error::OverlappingTags(_))));

        spec.clusters.clear();
        let corpus = make_synthetic_corpus(&spec).unwrap();
        assert!(corpus.stream.is_empty());
        assert!(corpus.truth.labels.is_empty());
    }

    #[test]
    fn corpus_guarantees_cooccurrence() {
        let spec = bundled_corpus_spec(5);
        let corpus = make_synthetic_corpus(&spec).unwrap();
        let g = crate::taggraph::build_affinity_graph(&corpus.stream);
        for c in &spec.clusters {
            for t in &c.tags[1..] {
                assert!(g.weight(&c.tags[0], t) >= spec.eta);
            }
        }
        assert_eq!(corpus.truth.labels.len(), corpus.stream.len());
        assert!(crate::ingest::validate_stream(&corpus.stream).is_empty());
    }
}

//! Brute-force reference implementations shared by the integration tests.
//! Each one evaluates its definition directly, with no recursion or pruning.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use genrehawkes::ingest::{EventStream, RawRecord};
use genrehawkes::HawkesParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `Σ_j ln(μ + Σ_{i<j} β e^{−ω(t_j − t_i)}) − ∫_0^T λ`, pairs by index.
pub fn direct_loglik(p: &HawkesParams, times: &[f64], horizon: f64) -> f64 {
    let mut log_sum = 0.0;
    for j in 0..times.len() {
        let mut lambda = p.mu;
        for i in 0..j {
            lambda += p.beta * (-p.omega * (times[j] - times[i])).exp();
        }
        log_sum += lambda.ln();
    }
    let integral: f64 = p.mu * horizon
        + times
            .iter()
            .map(|&t| p.beta / p.omega * (1.0 - (-p.omega * (horizon - t)).exp()))
            .sum::<f64>();
    log_sum - integral
}

/// Intensity just before `t` from its definition.
pub fn direct_intensity(p: &HawkesParams, times: &[f64], t: f64) -> f64 {
    p.mu + times
        .iter()
        .filter(|&&s| s < t)
        .map(|&s| p.beta * (-p.omega * (t - s)).exp())
        .sum::<f64>()
}

/// `p_{i→j}` for every pair, from the definition.
pub fn direct_triggering(p: &HawkesParams, times: &[f64]) -> Vec<Vec<f64>> {
    (0..times.len())
        .map(|j| {
            let kernels: Vec<f64> = (0..j).map(|i| p.beta * (-p.omega * (times[j] - times[i])).exp()).collect();
            let lambda = p.mu + kernels.iter().sum::<f64>();
            kernels.into_iter().map(|k| k / lambda).collect()
        })
        .collect()
}

/// Untruncated `(S_self, S_pop)` over all pairs.
pub fn direct_scores(
    p: &HawkesParams,
    times: &[f64],
    uploaders: &[String],
    psi: &[f64],
    thresholds: &[f64],
) -> (f64, f64) {
    let probs = direct_triggering(p, times);
    let (mut total, mut same, mut pop) = (0.0, 0.0, 0.0);
    for (j, row) in probs.iter().enumerate() {
        for (i, &pij) in row.iter().enumerate() {
            total += pij;
            if uploaders[i] == uploaders[j] {
                same += pij;
            }
            if psi[i] > thresholds[j] {
                pop += pij;
            }
        }
    }
    (same / total, pop / total)
}

/// Components by breadth-first search over an adjacency map.
pub fn bfs_components(nodes: &BTreeSet<String>, edges: &[(String, String)]) -> Vec<BTreeSet<String>> {
    let mut adj: BTreeMap<&str, Vec<&str>> = nodes.iter().map(|n| (n.as_str(), Vec::new())).collect();
    for (a, b) in edges {
        adj.get_mut(a.as_str()).unwrap().push(b);
        adj.get_mut(b.as_str()).unwrap().push(a);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for start in nodes {
        if !seen.insert(start.as_str()) {
            continue;
        }
        let mut comp = BTreeSet::from([start.clone()]);
        let mut queue = VecDeque::from([start.as_str()]);
        while let Some(n) = queue.pop_front() {
            for &m in &adj[n] {
                if seen.insert(m) {
                    comp.insert(m.to_string());
                    queue.push_back(m);
                }
            }
        }
        out.push(comp);
    }
    out.sort();
    out
}

/// Co-occurrence counts by scanning every video for every tag pair.
pub fn brute_pair_counts(videos: &[BTreeSet<String>]) -> BTreeMap<(String, String), u64> {
    let all: BTreeSet<&String> = videos.iter().flatten().collect();
    let mut out = BTreeMap::new();
    for a in &all {
        for b in &all {
            if a < b {
                let n = videos.iter().filter(|v| v.contains(*a) && v.contains(*b)).count() as u64;
                if n > 0 {
                    out.insert(((*a).clone(), (*b).clone()), n);
                }
            }
        }
    }
    out
}

/// Sorted uniform times on `(0, horizon)`.
pub fn uniform_times(r: &mut impl Rng, n: usize, horizon: f64) -> Vec<f64> {
    let mut t: Vec<f64> = (0..n).map(|_| r.random::<f64>() * horizon).collect();
    t.sort_by(f64::total_cmp);
    t
}

/// Stream from `(day, uploader, views, tags)` rows.
pub fn stream_of(rows: &[(f64, &str, i64, &[&str])]) -> EventStream {
    EventStream::from_records(
        rows.iter()
            .enumerate()
            .map(|(i, &(day, who, views, tags))| RawRecord {
                video_id: format!("v{i:05}"),
                timestamp: 1.3e9 + day * 86_400.0,
                uploader_id: who.to_string(),
                tags: tags.iter().map(|t| t.to_string()).collect(),
                n_views: views,
                n_comments: 0,
            })
            .collect(),
    )
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

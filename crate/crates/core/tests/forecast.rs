mod common;

use common::{rng, uniform_times};
use genrehawkes::forecast::{evaluate_all, expected_count, mc_expected_count, EvalConfig, ModelKind, SplitSpec};
use genrehawkes::ingest::{Event, EventStream};
use genrehawkes::simulate::{bundled_corpus_spec, make_synthetic_corpus, simulate_nhpp, SimConfig};
use genrehawkes::taggraph::{cluster_stream, GenreCluster};
use genrehawkes::FitFlag;
use rand::Rng;

/// A cluster on an absolute day axis so several clusters share one clock.
fn cluster_of(id: usize, times: &[f64], horizon: f64) -> GenreCluster {
    let tag = format!("t{id}");
    let events = times
        .iter()
        .enumerate()
        .map(|(i, &t)| Event {
            video_id: format!("c{id}-{i:05}"),
            timestamp: t * 86_400.0,
            upload_time: t,
            uploader_id: "u".into(),
            tags: [tag.clone()].into(),
            n_views: 0,
            n_comments: 0,
        })
        .collect();
    GenreCluster {
        cluster_id: id,
        tags: [tag].into(),
        events: EventStream { origin: 0.0, events, horizon },
    }
}

fn config() -> EvalConfig {
    EvalConfig {
        mc_samples: 200,
        seed: 5,
        ..EvalConfig::default()
    }
}

#[test]
fn one_row_per_cluster_and_model() {
    let corpus = make_synthetic_corpus(&bundled_corpus_spec(3)).unwrap();
    let clusters = cluster_stream(&corpus.stream, 5).unwrap();
    let spec = SplitSpec::ending_at(corpus.stream.horizon, 60.0, 14.0);
    let table = evaluate_all(&clusters, &spec, &ModelKind::ALL, &config()).unwrap();
    assert!(table.excluded.is_empty());
    assert_eq!(table.rows.len(), clusters.len() * ModelKind::ALL.len());
    for c in &clusters {
        for m in ModelKind::ALL {
            let row = table.row(c.cluster_id, m).unwrap();
            assert!(row.status == "ok" || row.status.starts_with("refused"), "{row:?}");
            if row.status == "ok" {
                let f = row.forecast.unwrap();
                assert_eq!(f.actual, row.actual);
                assert!(f.predicted >= 0.0);
            }
        }
    }
    for agg in &table.aggregates {
        let rows: Vec<_> = table.rows.iter().filter(|r| r.model == agg.model).filter_map(|r| r.forecast).collect();
        assert_eq!(rows.len(), agg.n_clusters);
        let mean = rows.iter().map(|f| f.abs_error).sum::<f64>() / rows.len() as f64;
        assert!((mean - agg.mean_abs_error).abs() < 1e-12);
    }
    let diffs = table.aic_difference(ModelKind::Hawkes, ModelKind::Poisson);
    assert_eq!(diffs.len(), clusters.len());
}

#[test]
fn evaluation_is_deterministic() {
    let corpus = make_synthetic_corpus(&bundled_corpus_spec(4)).unwrap();
    let clusters = cluster_stream(&corpus.stream, 5).unwrap();
    let spec = SplitSpec::ending_at(corpus.stream.horizon, 30.0, 14.0);
    let run = || serde_json::to_string(&evaluate_all(&clusters, &spec, &ModelKind::ALL, &config()).unwrap()).unwrap();
    assert_eq!(run(), run());
    let mut csv_a = Vec::new();
    let mut csv_b = Vec::new();
    evaluate_all(&clusters, &spec, &ModelKind::ALL, &config()).unwrap().write_csv(&mut csv_a).unwrap();
    evaluate_all(&clusters, &spec, &ModelKind::ALL, &config()).unwrap().write_csv(&mut csv_b).unwrap();
    assert_eq!(csv_a, csv_b);
}

#[test]
fn supercritical_cluster_is_refused_and_others_proceed() {
    // exponentially growing activity pushes the fitted branching ratio past one
    let growth = simulate_nhpp(|t| 0.05 * (0.12 * t).exp(), 0.05 * (0.12f64 * 60.0).exp(), &SimConfig::new(1, 0.0, 60.0))
        .unwrap();
    let steady = simulate_nhpp(|_| 2.0, 2.0, &SimConfig::new(2, 0.0, 60.0)).unwrap();
    let clusters = vec![cluster_of(0, &growth, 60.0), cluster_of(1, &steady, 60.0)];
    let spec = SplitSpec::ending_at(60.0, 40.0, 14.0);
    let table = evaluate_all(&clusters, &spec, &[ModelKind::Hawkes, ModelKind::Poisson], &config()).unwrap();
    let hawkes = table.row(0, ModelKind::Hawkes).unwrap();
    let fit = hawkes.fit.as_ref().unwrap();
    assert!(fit.has_flag(FitFlag::Supercritical), "fixture is not supercritical: {fit:?}");
    assert_eq!(hawkes.status, "refused: supercritical");
    assert!(hawkes.forecast.is_none());
    assert_eq!(table.row(0, ModelKind::Poisson).unwrap().status, "ok");
    assert_eq!(table.row(1, ModelKind::Hawkes).unwrap().status, "ok");
}

#[test]
fn clusters_without_training_events_are_listed_as_excluded() {
    let late: Vec<f64> = (0..20).map(|k| 50.0 + k as f64 * 0.4).collect();
    let steady: Vec<f64> = (1..=120).map(|k| k as f64 * 0.5).collect();
    let clusters = vec![cluster_of(0, &steady, 60.0), cluster_of(1, &late, 60.0)];
    let spec = SplitSpec { train_days: 10.0, horizon_days: 10.0, split_point: 40.0 };
    let table = evaluate_all(&clusters, &spec, &[ModelKind::Poisson], &config()).unwrap();
    assert_eq!(table.excluded.len(), 1);
    assert_eq!(table.excluded[0].cluster_id, 1);
    assert_eq!(table.rows.len(), 1);
    let row = &table.rows[0];
    assert_eq!(row.actual, 20);
    assert_eq!(row.forecast.unwrap().predicted, 20.0);
}

#[test]
fn invalid_split_is_rejected_before_fitting() {
    let clusters = vec![cluster_of(0, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 10.0)];
    let spec = SplitSpec { train_days: 5.0, horizon_days: 14.0, split_point: 5.0 };
    assert!(evaluate_all(&clusters, &spec, &[ModelKind::Poisson], &config()).is_err());
}

#[test]
fn no_excitation_mc_mean_is_background_count() {
    let p = genrehawkes::HawkesParams { mu: 1.7, beta: 0.0, omega: 1.0 };
    let f = mc_expected_count(&p, &[0.5, 2.0], 3.0, 20.0, 2000, 11).unwrap();
    assert!((f.mean - 1.7 * 20.0).abs() <= 3.0 * f.std_error(), "{f:?}");
}

#[test]
fn long_run_mc_rate_matches_branching_mean() {
    let p = genrehawkes::HawkesParams { mu: 0.5, beta: 0.8, omega: 2.0 };
    let target = 0.5 / (1.0 - 0.8 / 2.0);
    let f = mc_expected_count(&p, &[], 0.0, 2000.0, 1000, 12).unwrap();
    let rate = f.mean / 2000.0;
    assert!((rate - target).abs() / target < 0.03, "{rate} vs {target}");
}

#[test]
fn future_excitation_raises_the_mc_count() {
    let mut r = rng(13);
    for k in 0..50 {
        let omega = r.random_range(0.2..3.0);
        let p = genrehawkes::HawkesParams {
            mu: r.random_range(0.2..3.0),
            beta: omega * r.random_range(0.05..0.9),
            omega,
        };
        let n = r.random_range(0..40);
        let history = uniform_times(&mut r, n, 30.0);
        let delta = r.random_range(1.0..30.0);
        let literal = expected_count(&p, &history, 30.0, delta).unwrap();
        let mc = mc_expected_count(&p, &history, 30.0, delta, 1000, k).unwrap();
        assert!(mc.mean >= literal, "config {k}: {p:?} mc {} < literal {literal}", mc.mean);
    }
}

#[test]
fn no_models_gives_an_empty_table() {
    let corpus = make_synthetic_corpus(&bundled_corpus_spec(6)).unwrap();
    let clusters = cluster_stream(&corpus.stream, 5).unwrap();
    let spec = SplitSpec::ending_at(corpus.stream.horizon, 30.0, 14.0);
    let table = evaluate_all(&clusters, &spec, &[], &config()).unwrap();
    assert!(table.rows.is_empty() && table.aggregates.is_empty() && table.excluded.is_empty());
}

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{bail, Context, Result};
use genrehawkes::attribution::{attribution_report, factor_rows, AttributionConfig, AttributionReport};
use genrehawkes::baselines::{daily_counts, fit_arima_lite, fit_global_hawkes, fit_nhpp_drift, fit_pc_nhpp, fit_poisson};
use genrehawkes::forecast::{evaluate_all, ComparisonTable, EvalConfig, ModelKind, SplitSpec};
use genrehawkes::hawkes::fit_mle;
use genrehawkes::ingest::{parse_events, validate_stream, write_jsonl, Format};
use genrehawkes::simulate::{bundled_corpus_spec, make_synthetic_corpus, CorpusSpec};
use genrehawkes::taggraph::{cluster_stream, sweep};
use genrehawkes::{EventStream, FitFlag, FitResult, GenreCluster};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::*;
use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterInfo {
    pub cluster_id: usize,
    pub tags: Vec<String>,
    pub n_events: usize,
    pub first_upload: f64,
    pub last_upload: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub eta: u64,
    pub n_events: usize,
    /// Observation end, days since the first upload.
    pub horizon: f64,
    pub clusters: Vec<ClusterInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Assignment {
    video_id: String,
    cluster_id: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitEntry {
    pub model: ModelKind,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
}

impl FitEntry {
    fn from_result(model: ModelKind, r: genrehawkes::Result<FitResult>) -> FitEntry {
        match r {
            Ok(fit) => FitEntry { model, status: "ok".into(), fit: Some(fit) },
            Err(e) => FitEntry { model, status: format!("error: {e}"), fit: None },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterFits {
    pub cluster_id: usize,
    pub n_events: usize,
    pub fits: Vec<FitEntry>,
}

impl ClusterFits {
    pub fn get(&self, model: ModelKind) -> Option<&FitResult> {
        self.fits.iter().find(|f| f.model == model)?.fit.as_ref()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitsArtifact {
    pub horizon: f64,
    pub bin_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global: Option<FitEntry>,
    pub clusters: Vec<ClusterFits>,
}

fn load_stream(cfg: &RunConfig) -> Result<EventStream> {
    let input = cfg.input()?;
    if !input.is_file() {
        bail!("input file {} does not exist", input.display());
    }
    let stream = parse_events(input, Format::from_path(input))?;
    if let Some(v) = validate_stream(&stream).first() {
        bail!("{}: {v}", input.display());
    }
    Ok(stream)
}

fn create_out(cfg: &RunConfig) -> Result<&Path> {
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(&cfg.out)
}

pub fn cmd_cluster(cfg: &RunConfig) -> Result<()> {
    let stream = load_stream(cfg)?;
    let clusters = cluster_stream(&stream, cfg.eta)?;
    let rows = cfg.sweep.map(|(a, b)| sweep(&stream, a, b)).transpose()?;
    let out = create_out(cfg)?;

    let mut assignments: Vec<Assignment> = clusters
        .iter()
        .flat_map(|c| {
            c.events.events.iter().map(|e| Assignment {
                video_id: e.video_id.clone(),
                cluster_id: c.cluster_id,
            })
        })
        .collect();
    assignments.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    write_rows(out, ASSIGNMENTS, assignments)?;
    let summary = ClusterSummary {
        eta: cfg.eta,
        n_events: stream.len(),
        horizon: stream.horizon,
        clusters: clusters
            .iter()
            .map(|c| ClusterInfo {
                cluster_id: c.cluster_id,
                tags: c.tags.iter().cloned().collect(),
                n_events: c.events.len(),
                first_upload: c.events.events.first().map_or(0.0, |e| e.upload_time),
                last_upload: c.events.last_time(),
            })
            .collect(),
    };
    write_json(out, CLUSTERS, &summary)?;
    if let Some(rows) = rows {
        write_rows(out, SWEEP, rows)?;
    }
    Ok(())
}

/// Rebuilds the clusters recorded by `cluster` from the input stream.
fn load_clusters(cfg: &RunConfig, stream: &EventStream) -> Result<(ClusterSummary, Vec<GenreCluster>)> {
    let summary: ClusterSummary = read_json(&cfg.out, CLUSTERS, "cluster")?;
    let path = require(&cfg.out, ASSIGNMENTS, "cluster")?;
    let mut reader = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut owner: BTreeMap<String, usize> = BTreeMap::new();
    for row in reader.deserialize() {
        let a: Assignment = row.with_context(|| format!("parsing {}", path.display()))?;
        owner.insert(a.video_id, a.cluster_id);
    }
    let mut members: BTreeMap<usize, Vec<&genrehawkes::Event>> =
        summary.clusters.iter().map(|c| (c.cluster_id, Vec::new())).collect();
    for e in &stream.events {
        let id = owner.get(&e.video_id).with_context(|| {
            format!("video `{}` has no cluster in {}; rerun `genrehawkes cluster`", e.video_id, path.display())
        })?;
        members
            .get_mut(id)
            .with_context(|| format!("cluster {id} missing from {CLUSTERS}; rerun `genrehawkes cluster`"))?
            .push(e);
    }
    if owner.len() != stream.len() {
        bail!("{} does not match the input; rerun `genrehawkes cluster`", path.display());
    }
    let clusters = summary
        .clusters
        .iter()
        .map(|c| GenreCluster {
            cluster_id: c.cluster_id,
            tags: c.tags.iter().cloned().collect(),
            events: stream.restricted(members[&c.cluster_id].iter().copied()),
        })
        .collect();
    Ok((summary, clusters))
}

/// Models fitted on the full window; Monte-Carlo variants share their
/// deterministic counterpart's fit.
fn fit_models(models: &[ModelKind]) -> Vec<ModelKind> {
    let mut out: BTreeSet<ModelKind> = models
        .iter()
        .map(|m| match m {
            ModelKind::HawkesMc => ModelKind::Hawkes,
            ModelKind::HawkesGlobalMc => ModelKind::HawkesGlobal,
            m => *m,
        })
        .collect();
    // attribution always needs the per-cluster Hawkes fit
    out.insert(ModelKind::Hawkes);
    out.into_iter().collect()
}

fn fit_cluster(c: &GenreCluster, models: &[ModelKind], bin_width: f64) -> ClusterFits {
    let times = c.times();
    let t = c.events.horizon;
    let fits = models
        .iter()
        .filter(|m| **m != ModelKind::HawkesGlobal)
        .map(|&m| {
            let r = match m {
                ModelKind::Poisson => fit_poisson(&times, t),
                ModelKind::PcNhpp => fit_pc_nhpp(&times, t, bin_width),
                ModelKind::NhppDrift => fit_nhpp_drift(&times, t),
                ModelKind::ArimaLite => fit_arima_lite(&daily_counts(&times, t.ceil() as usize), 2, 1, 2).map(|a| a.fit),
                _ => fit_mle(&times, t, None),
            };
            FitEntry::from_result(m, r)
        })
        .collect();
    ClusterFits {
        cluster_id: c.cluster_id,
        n_events: times.len(),
        fits,
    }
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let stream = load_stream(cfg)?;
    let (_, clusters) = load_clusters(cfg, &stream)?;
    let models = fit_models(&cfg.models);
    let per_cluster: Vec<ClusterFits> = clusters.par_iter().map(|c| fit_cluster(c, &models, cfg.bin_width)).collect();
    let global = models
        .contains(&ModelKind::HawkesGlobal)
        .then(|| FitEntry::from_result(ModelKind::HawkesGlobal, fit_global_hawkes(&clusters)));
    let artifact = FitsArtifact {
        horizon: stream.horizon,
        bin_width: cfg.bin_width,
        global,
        clusters: per_cluster,
    };
    write_json(create_out(cfg)?, FITS, &artifact)?;
    Ok(())
}

pub fn cmd_forecast(cfg: &RunConfig) -> Result<()> {
    let stream = load_stream(cfg)?;
    let (_, clusters) = load_clusters(cfg, &stream)?;
    require(&cfg.out, FITS, "fit")?;
    let spec = SplitSpec::ending_at(stream.horizon, cfg.train_days, cfg.horizon_days);
    spec.validate(stream.horizon)
        .with_context(|| format!("train {} + horizon {} days do not fit in {:.3} observed days", cfg.train_days, cfg.horizon_days, stream.horizon))?;
    let eval = EvalConfig {
        bin_width: cfg.bin_width,
        mc_samples: cfg.mc_samples,
        seed: cfg.seed,
        ..EvalConfig::default()
    };
    let table = evaluate_all(&clusters, &spec, &cfg.models, &eval)?;
    let out = create_out(cfg)?;
    write_atomic(out, FORECAST_CSV, |w| Ok(table.write_csv(w)?))?;
    write_json(out, FORECAST_JSON, &table)?;
    Ok(())
}

pub fn cmd_attribute(cfg: &RunConfig) -> Result<()> {
    let stream = load_stream(cfg)?;
    let (_, clusters) = load_clusters(cfg, &stream)?;
    let fits: FitsArtifact = read_json(&cfg.out, FITS, "fit")?;
    let attr = AttributionConfig {
        w_comments: cfg.w_comments,
        ..AttributionConfig::default()
    };
    let hawkes: BTreeMap<usize, FitResult> = fits
        .clusters
        .iter()
        .filter_map(|c| Some((c.cluster_id, c.get(ModelKind::Hawkes)?.clone())))
        .collect();
    let (fitted, unfitted): (Vec<GenreCluster>, Vec<GenreCluster>) =
        clusters.into_iter().partition(|c| hawkes.contains_key(&c.cluster_id));
    let mut reports = attribution_report(&fitted, &hawkes, &stream, &attr)?;
    reports.extend(unfitted.iter().map(|c| AttributionReport {
        cluster_id: c.cluster_id,
        s_self: None,
        s_pop: None,
        s_exo: None,
        n_pairs_evaluated: 0,
        w_comments: cfg.w_comments,
        not_attributable: Some("no Hawkes fit".into()),
        negative_exo: false,
    }));
    reports.sort_by_key(|r| r.cluster_id);

    let out = create_out(cfg)?;
    write_json(out, ATTRIBUTION, &reports)?;
    write_rows(out, FACTORS, factor_rows(&reports).into_iter().map(|(cluster_id, factor, value)| FactorRow { cluster_id, factor, value }))?;
    Ok(())
}

#[derive(Serialize)]
struct FactorRow {
    cluster_id: usize,
    factor: &'static str,
    value: f64,
}

#[derive(Debug, Clone, Serialize)]
struct AicRow {
    cluster_id: usize,
    baseline: ModelKind,
    aic_hawkes: f64,
    aic_baseline: f64,
    /// Positive when the Hawkes fit is preferred.
    aic_difference: f64,
}

#[derive(Serialize)]
struct ShareRow {
    cluster_id: usize,
    self_reinforcing: Option<f64>,
    popularity: Option<f64>,
    exogenous: Option<f64>,
}

#[derive(Serialize)]
struct WeekRow {
    cluster_id: usize,
    week: usize,
    start_day: f64,
    count: usize,
}

#[derive(Serialize)]
struct ReportSettings {
    eta: u64,
    bin_width: f64,
    train_days: f64,
    horizon_days: f64,
    w_comments: f64,
    mc_samples: usize,
    seed: u64,
    models: Vec<ModelKind>,
}

#[derive(Serialize)]
struct Report<'a> {
    settings: ReportSettings,
    clusters: &'a ClusterSummary,
    fits: &'a FitsArtifact,
    aic_difference: &'a [AicRow],
    forecast: &'a ComparisonTable,
    attribution: &'a [AttributionReport],
    warnings: Vec<String>,
}

fn aic_rows(fits: &FitsArtifact) -> Vec<AicRow> {
    let mut rows = Vec::new();
    for c in &fits.clusters {
        let Some(h) = c.get(ModelKind::Hawkes) else { continue };
        for e in &c.fits {
            if let (true, Some(f)) = (e.model != ModelKind::Hawkes, &e.fit) {
                rows.push(AicRow {
                    cluster_id: c.cluster_id,
                    baseline: e.model,
                    aic_hawkes: h.aic,
                    aic_baseline: f.aic,
                    aic_difference: f.aic - h.aic,
                });
            }
        }
    }
    rows
}

fn weekly_counts(clusters: &[GenreCluster], horizon: f64) -> Vec<WeekRow> {
    let weeks = ((horizon / 7.0).floor() as usize + 1).max(1);
    clusters
        .iter()
        .flat_map(|c| {
            let mut counts = vec![0usize; weeks];
            for t in c.times() {
                counts[((t / 7.0).floor().max(0.0) as usize).min(weeks - 1)] += 1;
            }
            counts.into_iter().enumerate().map(move |(week, count)| WeekRow {
                cluster_id: c.cluster_id,
                week,
                start_day: week as f64 * 7.0,
                count,
            })
        })
        .collect()
}

fn warnings(fits: &FitsArtifact, table: &ComparisonTable, attribution: &[AttributionReport]) -> Vec<String> {
    let mut w = Vec::new();
    let fit_warnings = |label: String, e: &FitEntry, w: &mut Vec<String>| match &e.fit {
        None => w.push(format!("{label} {}: {}", e.model, e.status)),
        Some(f) => {
            if f.has_flag(FitFlag::Supercritical) {
                w.push(format!("{label} {}: supercritical fit (branching ratio {:.4})", e.model, f.branching_ratio.unwrap_or(f64::NAN)));
            }
            if !f.converged {
                w.push(format!("{label} {}: fit did not converge", e.model));
            }
        }
    };
    if let Some(g) = &fits.global {
        fit_warnings("global".into(), g, &mut w);
    }
    for c in &fits.clusters {
        for e in &c.fits {
            fit_warnings(format!("cluster {}", c.cluster_id), e, &mut w);
        }
    }
    for r in &table.rows {
        if r.status != "ok" {
            w.push(format!("forecast cluster {} {}: {}", r.cluster_id, r.model, r.status));
        }
    }
    for x in &table.excluded {
        w.push(format!("forecast cluster {} excluded: {}", x.cluster_id, x.reason));
    }
    for r in attribution {
        if let Some(reason) = &r.not_attributable {
            w.push(format!("attribution cluster {}: not attributable ({reason})", r.cluster_id));
        }
        if r.negative_exo {
            w.push(format!("attribution cluster {}: negative exogenous share", r.cluster_id));
        }
    }
    w
}

pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let stream = load_stream(cfg)?;
    let (summary, clusters) = load_clusters(cfg, &stream)?;
    let fits: FitsArtifact = read_json(&cfg.out, FITS, "fit")?;
    let table: ComparisonTable = read_json(&cfg.out, FORECAST_JSON, "forecast")?;
    let attribution: Vec<AttributionReport> = read_json(&cfg.out, ATTRIBUTION, "attribute")?;

    let aic = aic_rows(&fits);
    let report = Report {
        settings: ReportSettings {
            eta: summary.eta,
            bin_width: fits.bin_width,
            train_days: table.split.train_days,
            horizon_days: table.split.horizon_days,
            w_comments: cfg.w_comments,
            mc_samples: cfg.mc_samples,
            seed: cfg.seed,
            models: cfg.models.clone(),
        },
        clusters: &summary,
        fits: &fits,
        aic_difference: &aic,
        forecast: &table,
        attribution: &attribution,
        warnings: warnings(&fits, &table, &attribution),
    };
    let out = create_out(cfg)?;
    write_json(out, REPORT, &report)?;
    write_rows(out, AIC_DIFF, aic.iter().cloned())?;
    write_rows(
        out,
        FACTOR_SHARES,
        attribution.iter().map(|r| ShareRow {
            cluster_id: r.cluster_id,
            self_reinforcing: r.s_self,
            popularity: r.s_pop,
            exogenous: r.s_exo,
        }),
    )?;
    write_rows(out, WEEKLY_COUNTS, weekly_counts(&clusters, stream.horizon))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

pub fn cmd_run(cfg: &RunConfig) -> Result<()> {
    cmd_cluster(cfg)?;
    cmd_fit(cfg)?;
    cmd_forecast(cfg)?;
    cmd_attribute(cfg)?;
    cmd_report(cfg)
}

/// Writes a synthetic corpus from the bundled spec, or from a JSON corpus
/// spec given as `--input`.
pub fn cmd_simulate(cfg: &RunConfig, seed_given: bool) -> Result<()> {
    let spec = match &cfg.input {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading corpus spec {}", path.display()))?;
            let mut spec: CorpusSpec =
                serde_json::from_str(&text).with_context(|| format!("parsing corpus spec {}", path.display()))?;
            if seed_given {
                spec.seed = cfg.seed;
            }
            spec
        }
        None => bundled_corpus_spec(cfg.seed),
    };
    let corpus = make_synthetic_corpus(&spec)?;
    let out = create_out(cfg)?;
    write_atomic(out, CORPUS, |w| Ok(write_jsonl(&corpus.stream, w)?))?;
    write_json(out, GROUND_TRUTH, &corpus.truth)?;
    Ok(())
}

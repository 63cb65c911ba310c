use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const ASSIGNMENTS: &str = "assignments.csv";
pub const CLUSTERS: &str = "clusters.json";
pub const SWEEP: &str = "sweep.csv";
pub const FITS: &str = "fits.json";
pub const FORECAST_CSV: &str = "forecast.csv";
pub const FORECAST_JSON: &str = "forecast.json";
pub const ATTRIBUTION: &str = "attribution.json";
pub const FACTORS: &str = "attribution_factors.csv";
pub const REPORT: &str = "report.json";
pub const AIC_DIFF: &str = "aic_diff.csv";
pub const FACTOR_SHARES: &str = "factor_shares.csv";
pub const WEEKLY_COUNTS: &str = "weekly_counts.csv";
pub const CORPUS: &str = "corpus.jsonl";
pub const GROUND_TRUTH: &str = "ground_truth.json";

/// Writes a file through a temp sibling and an atomic rename, so a failed
/// command never leaves a half-written artifact.
pub fn write_atomic(dir: &Path, name: &str, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.persist(&path).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    write_atomic(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn write_rows<R: Serialize>(dir: &Path, name: &str, rows: impl IntoIterator<Item = R>) -> Result<PathBuf> {
    write_atomic(dir, name, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in rows {
            csv.serialize(r)?;
        }
        csv.flush()?;
        Ok(())
    })
}

/// Reads an upstream artifact; a missing file names the command that makes it.
pub fn read_json<T: DeserializeOwned>(dir: &Path, name: &str, producer: &str) -> Result<T> {
    let path = require(dir, name, producer)?;
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn require(dir: &Path, name: &str, producer: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    if !path.is_file() {
        bail!("{} not found; run `genrehawkes {producer}` first", path.display());
    }
    Ok(path)
}

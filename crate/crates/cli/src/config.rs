use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use genrehawkes::forecast::{ModelKind, MIN_MC_SAMPLES};

/// Flags shared by the pipeline commands. Every field is optional so a
/// config file can fill the gaps.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Upload records, JSONL or CSV (by extension).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value file; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Edge-weight threshold for the tag graph.
    #[arg(long)]
    pub eta: Option<u64>,
    /// Component-count sweep over an inclusive eta range, `A:B`.
    #[arg(long)]
    pub sweep: Option<String>,
    #[arg(long)]
    pub bin_width: Option<f64>,
    #[arg(long)]
    pub train_days: Option<f64>,
    #[arg(long)]
    pub horizon_days: Option<f64>,
    #[arg(long)]
    pub w_comments: Option<f64>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated model names.
    #[arg(long)]
    pub models: Option<String>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub eta: u64,
    pub sweep: Option<(u64, u64)>,
    pub bin_width: f64,
    pub train_days: f64,
    pub horizon_days: f64,
    pub w_comments: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub models: Vec<ModelKind>,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            out: PathBuf::from("out"),
            eta: 5,
            sweep: None,
            bin_width: 7.0,
            train_days: 60.0,
            horizon_days: 14.0,
            w_comments: 1.0,
            mc_samples: 1000,
            seed: 0,
            models: ModelKind::ALL.to_vec(),
            threads: None,
        }
    }
}

pub fn parse_sweep(s: &str) -> Result<(u64, u64)> {
    let (a, b) = s.split_once(':').with_context(|| format!("sweep `{s}` is not of the form A:B"))?;
    let a: u64 = a.trim().parse().with_context(|| format!("sweep start `{a}`"))?;
    let b: u64 = b.trim().parse().with_context(|| format!("sweep end `{b}`"))?;
    Ok((a, b))
}

pub fn parse_models(s: &str) -> Result<Vec<ModelKind>> {
    let mut out: Vec<ModelKind> = s
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(|m| m.parse::<ModelKind>().map_err(|e| anyhow::anyhow!("{e}")))
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

/// `key = value` lines; `#` starts a comment. Keys may use `-` or `_`.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value", path.display(), i + 1);
        };
        map.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(map)
}

fn file_args(map: &BTreeMap<String, String>, path: &Path) -> Result<RunArgs> {
    let mut a = RunArgs::default();
    for (k, v) in map {
        let ctx = || format!("{}: key `{k}`", path.display());
        match k.as_str() {
            "input" => a.input = Some(PathBuf::from(v)),
            "out" => a.out = Some(PathBuf::from(v)),
            "eta" => a.eta = Some(v.parse().with_context(ctx)?),
            "sweep" => a.sweep = Some(v.clone()),
            "bin_width" => a.bin_width = Some(v.parse().with_context(ctx)?),
            "train_days" => a.train_days = Some(v.parse().with_context(ctx)?),
            "horizon_days" => a.horizon_days = Some(v.parse().with_context(ctx)?),
            "w_comments" => a.w_comments = Some(v.parse().with_context(ctx)?),
            "mc_samples" => a.mc_samples = Some(v.parse().with_context(ctx)?),
            "seed" => a.seed = Some(v.parse().with_context(ctx)?),
            "models" => a.models = Some(v.clone()),
            "threads" => a.threads = Some(v.parse().with_context(ctx)?),
            _ => bail!("{}: unknown key `{k}`", path.display()),
        }
    }
    Ok(a)
}

impl RunConfig {
    /// Defaults, then the config file, then flags.
    pub fn resolve(flags: &RunArgs) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &flags.config {
            cfg.apply(&file_args(&read_config_file(path)?, path)?)?;
        }
        cfg.apply(flags)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, a: &RunArgs) -> Result<()> {
        if let Some(v) = &a.input {
            self.input = Some(v.clone());
        }
        if let Some(v) = &a.out {
            self.out = v.clone();
        }
        if let Some(v) = a.eta {
            self.eta = v;
        }
        if let Some(v) = &a.sweep {
            self.sweep = Some(parse_sweep(v)?);
        }
        if let Some(v) = a.bin_width {
            self.bin_width = v;
        }
        if let Some(v) = a.train_days {
            self.train_days = v;
        }
        if let Some(v) = a.horizon_days {
            self.horizon_days = v;
        }
        if let Some(v) = a.w_comments {
            self.w_comments = v;
        }
        if let Some(v) = a.mc_samples {
            self.mc_samples = v;
        }
        if let Some(v) = a.seed {
            self.seed = v;
        }
        if let Some(v) = &a.models {
            self.models = parse_models(v)?;
        }
        if let Some(v) = a.threads {
            self.threads = Some(v);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                bail!("{name} must be positive, got {v}");
            }
            Ok(())
        };
        if self.eta < 1 {
            bail!("eta must be at least 1");
        }
        if let Some((a, b)) = self.sweep {
            if a < 1 || b < a {
                bail!("sweep range {a}:{b} must satisfy 1 <= A <= B");
            }
        }
        positive("bin_width", self.bin_width)?;
        positive("train_days", self.train_days)?;
        positive("horizon_days", self.horizon_days)?;
        if !(self.w_comments.is_finite() && self.w_comments >= 0.0) {
            bail!("w_comments must be non-negative, got {}", self.w_comments);
        }
        if self.mc_samples < MIN_MC_SAMPLES {
            bail!("mc_samples must be at least {MIN_MC_SAMPLES}, got {}", self.mc_samples);
        }
        if self.models.is_empty() {
            bail!("model list is empty");
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(())
    }

    pub fn input(&self) -> Result<&Path> {
        self.input.as_deref().context("--input is required")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# defaults\neta = 3\nbin-width=14\nmodels = poisson, hawkes\n").unwrap();
        let flags = RunArgs {
            config: Some(path),
            eta: Some(4),
            ..RunArgs::default()
        };
        let cfg = RunConfig::resolve(&flags).unwrap();
        assert_eq!(cfg.eta, 4);
        assert_eq!(cfg.bin_width, 14.0);
        assert_eq!(cfg.models, vec![ModelKind::Hawkes, ModelKind::Poisson]);
    }

    #[test]
    fn rejects_bad_values() {
        for flags in [
            RunArgs { eta: Some(0), ..RunArgs::default() },
            RunArgs { sweep: Some("5:2".into()), ..RunArgs::default() },
            RunArgs { sweep: Some("5".into()), ..RunArgs::default() },
            RunArgs { bin_width: Some(0.0), ..RunArgs::default() },
            RunArgs { horizon_days: Some(f64::NAN), ..RunArgs::default() },
            RunArgs { mc_samples: Some(10), ..RunArgs::default() },
            RunArgs { models: Some("hawkes,nope".into()), ..RunArgs::default() },
            RunArgs { threads: Some(0), ..RunArgs::default() },
        ] {
            assert!(RunConfig::resolve(&flags).is_err(), "{flags:?}");
        }
    }

    #[test]
    fn unknown_config_key_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "etaa = 3\n").unwrap();
        let flags = RunArgs { config: Some(path), ..RunArgs::default() };
        assert!(RunConfig::resolve(&flags).unwrap_err().to_string().contains("etaa"));
    }
}

//! Run configuration: built-in defaults, a plain `key = value` file format,
//! and flag overrides applied on top.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Hellinger,
    Hht,
    Capm,
    Network,
    Metrics,
    Community,
    Gr,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Hellinger,
        Stage::Hht,
        Stage::Capm,
        Stage::Network,
        Stage::Metrics,
        Stage::Community,
        Stage::Gr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Hellinger => "hellinger",
            Stage::Hht => "hht",
            Stage::Capm => "capm",
            Stage::Network => "network",
            Stage::Metrics => "metrics",
            Stage::Community => "community",
            Stage::Gr => "gr",
        }
    }

    /// Stages whose in-memory results this stage consumes.
    pub fn prereqs(self) -> &'static [Stage] {
        match self {
            Stage::Hellinger | Stage::Hht => &[],
            Stage::Capm => &[Stage::Hellinger],
            Stage::Network => &[Stage::Hellinger, Stage::Capm],
            Stage::Metrics | Stage::Community => {
                &[Stage::Hellinger, Stage::Capm, Stage::Network]
            }
            Stage::Gr => &[Stage::Hellinger],
        }
    }
}

impl FromStr for Stage {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        for stage in Stage::ALL {
            if stage.name() == s {
                return Ok(stage);
            }
        }
        bail!("unknown stage `{s}` (expected one of hellinger, hht, capm, network, metrics, community, gr)")
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a pipeline run needs. Field defaults carry the reference
/// parameter values; the config file and flags override them.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RunConfig {
    /// Close-price panel CSV (`date,<ticker>,...`).
    pub prices: Option<PathBuf>,
    /// Benchmark index: a CSV path or the name of a column inside `prices`.
    pub market_index: Option<String>,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Rolling reference window for the divergence detector, trading days.
    pub window_w: usize,
    /// Histogram bins for the divergence detector.
    pub bins_b: usize,
    /// Pooled-sample quantiles bounding the detector's bin range.
    pub clip_lo: f64,
    pub clip_hi: f64,
    /// Histogram bins per axis for mutual information.
    pub mi_bins: usize,
    /// Permutation rounds per pair.
    pub n_perm: usize,
    /// Significance level for keeping a dependency.
    pub alpha: f64,
    /// Levels for the sweep subcommand.
    pub alphas: Vec<f64>,
    /// Degree-preserving null replicates for the modularity test.
    pub null_replicates: usize,
    /// Worker cap; 0 picks the machine default. Results do not depend on it.
    pub threads: usize,
    pub stages: Vec<Stage>,
    /// Mode cap for the index decomposition.
    pub max_imfs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            prices: None,
            market_index: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            window_w: 60,
            bins_b: 30,
            clip_lo: 0.005,
            clip_hi: 0.995,
            mi_bins: 16,
            n_perm: 100,
            alpha: 0.05,
            alphas: vec![0.01, 0.05, 0.10],
            null_replicates: 1000,
            threads: 0,
            stages: Stage::ALL.to_vec(),
            max_imfs: 10,
        }
    }
}

impl RunConfig {
    /// Parses the `key = value` file format. Blank lines and `#` comments are
    /// ignored; unknown keys are errors so typos do not silently fall back to
    /// defaults.
    pub fn from_file(path: &std::path::Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = RunConfig::default();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected `key = value`", path.display(), ln + 1))?;
            cfg.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), ln + 1))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        match key {
            "prices" => self.prices = Some(PathBuf::from(value)),
            "market_index" => self.market_index = Some(value.to_string()),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "seed" => self.seed = value.parse().context("seed")?,
            "window_w" => self.window_w = value.parse().context("window_w")?,
            "bins_b" => self.bins_b = value.parse().context("bins_b")?,
            "clip_lo" => self.clip_lo = value.parse().context("clip_lo")?,
            "clip_hi" => self.clip_hi = value.parse().context("clip_hi")?,
            "mi_bins" => self.mi_bins = value.parse().context("mi_bins")?,
            "n_perm" => self.n_perm = value.parse().context("n_perm")?,
            "alpha" => self.alpha = value.parse().context("alpha")?,
            "alphas" => {
                self.alphas = value
                    .split(',')
                    .map(|t| t.trim().parse::<f64>().context("alphas"))
                    .collect::<anyhow::Result<_>>()?;
            }
            "null_replicates" => self.null_replicates = value.parse().context("null_replicates")?,
            "threads" => self.threads = value.parse().context("threads")?,
            "stages" => {
                self.stages = value
                    .split(',')
                    .map(|t| t.trim().parse::<Stage>())
                    .collect::<anyhow::Result<_>>()?;
            }
            "max_imfs" => self.max_imfs = value.parse().context("max_imfs")?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    /// The defaults in the file format `from_file` reads back.
    pub fn dump_default() -> String {
        let d = RunConfig::default();
        let alphas = d
            .alphas
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let stages = d
            .stages
            .iter()
            .map(|s| s.name())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "# crashnet run configuration (defaults shown)\n\
             # prices = prices.csv\n\
             # market_index = index.csv            # a CSV path or a column of `prices`\n\
             out_dir = {}\n\
             seed = {}\n\
             \n\
             # crash detector\n\
             window_w = {}\n\
             bins_b = {}\n\
             clip_lo = {}\n\
             clip_hi = {}\n\
             \n\
             # dependency network\n\
             mi_bins = {}\n\
             n_perm = {}\n\
             alpha = {}\n\
             alphas = {}\n\
             \n\
             # modularity null\n\
             null_replicates = {}\n\
             \n\
             # execution\n\
             threads = {}\n\
             stages = {}\n\
             max_imfs = {}\n",
            d.out_dir.display(),
            d.seed,
            d.window_w,
            d.bins_b,
            d.clip_lo,
            d.clip_hi,
            d.mi_bins,
            d.n_perm,
            d.alpha,
            alphas,
            d.null_replicates,
            d.threads,
            stages,
            d.max_imfs,
        )
    }

    pub fn hellinger(&self) -> crashnet::HellingerConfig {
        crashnet::HellingerConfig {
            window_w: self.window_w,
            bins_b: self.bins_b,
            clip_lo: self.clip_lo,
            clip_hi: self.clip_hi,
        }
    }

    pub fn mi(&self, seed: u64) -> crashnet::MiConfig {
        crashnet::MiConfig {
            n_bins: self.mi_bins,
            n_perm: self.n_perm,
            alpha: self.alpha,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_the_dump() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, RunConfig::dump_default()).unwrap();
        let cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn file_overrides_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# comment\nseed = 9\nalpha = 0.01\nstages = hellinger,gr\nalphas = 0.2, 0.3\n",
        )
        .unwrap();
        let cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.alpha, 0.01);
        assert_eq!(cfg.stages, vec![Stage::Hellinger, Stage::Gr]);
        assert_eq!(cfg.alphas, vec![0.2, 0.3]);
        assert_eq!(cfg.window_w, 60);
    }

    #[test]
    fn unknown_key_is_rejected_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "window = 10\n").unwrap();
        let err = RunConfig::from_file(&path).unwrap_err();
        assert!(format!("{err:#}").contains(":1"), "{err:#}");
    }

    #[test]
    fn stage_parse_rejects_unknown() {
        assert!("mstx".parse::<Stage>().is_err());
        assert_eq!("network".parse::<Stage>().unwrap(), Stage::Network);
    }

    #[test]
    fn prereq_closure_reaches_hellinger() {
        for s in [Stage::Network, Stage::Metrics, Stage::Community, Stage::Gr] {
            assert!(s.prereqs().contains(&Stage::Hellinger));
        }
    }
}

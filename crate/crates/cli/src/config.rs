use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;
use streampop::binarize::CutoffMethod;
use streampop::data::Measure;
use streampop::labels::{Task, HORIZON_MONTHS};
use streampop::synth::SynthConfig;

#[derive(Debug, Clone, Default, Args)]
pub struct AnalyzeArgs {
    /// Dataset directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output directory for the report bundle.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Prediction tasks (absolute, relative_growth, self_growth).
    #[arg(long, value_delimiter = ',')]
    pub task: Vec<String>,
    /// Popularity measures (followers, concurrent_viewers, cumulative_views, cheers).
    #[arg(long, value_delimiter = ',')]
    pub measure: Vec<String>,
    /// Interval sizes for the pooled sweep.
    #[arg(long, value_delimiter = ',')]
    pub delta: Vec<u32>,
    /// Start ages for the per-age sweep.
    #[arg(long, value_delimiter = ',')]
    pub ages: Vec<u32>,
    /// Interval size of the per-age sweep.
    #[arg(long)]
    pub age_delta: Option<u32>,
    /// Interval size of the coefficient table.
    #[arg(long)]
    pub coefficient_delta: Option<u32>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// argmax or median.
    #[arg(long)]
    pub cutoff_method: Option<String>,
    /// Fit least squares instead of logistic regression.
    #[arg(long)]
    pub least_squares: bool,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Worker threads; 0 uses every core. Never changes the outputs.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// TOML file whose keys override the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeFile {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub tasks: Option<Vec<String>>,
    pub measures: Option<Vec<String>>,
    pub deltas: Option<Vec<u32>>,
    pub ages: Option<Vec<u32>>,
    pub age_delta: Option<u32>,
    pub coefficient_delta: Option<u32>,
    pub split_seed: Option<u64>,
    pub cutoff_method: Option<String>,
    pub least_squares: Option<bool>,
    pub bootstrap: Option<usize>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub tasks: Vec<Task>,
    pub measures: Vec<Measure>,
    pub deltas: Vec<u32>,
    pub ages: Vec<u32>,
    pub age_delta: u32,
    pub coefficient_delta: u32,
    pub split_seed: u64,
    pub cutoff_method: CutoffMethod,
    pub least_squares: bool,
    pub bootstrap: usize,
    pub jobs: usize,
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).map_err(|e| anyhow::anyhow!("config {}: {}", path.display(), e.message()))
}

fn parse_all<T>(names: &[String], what: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    names
        .iter()
        .map(|n| parse(n).with_context(|| format!("unknown {what} {n:?}")))
        .collect()
}

fn sorted_unique<T: Ord>(mut v: Vec<T>) -> Vec<T> {
    v.sort();
    v.dedup();
    v
}

impl RunConfig {
    /// Defaults, then command-line flags, then the config file.
    pub fn resolve(args: &AnalyzeArgs) -> Result<Self> {
        let file: AnalyzeFile = match &args.config {
            Some(path) => read_toml(path)?,
            None => AnalyzeFile::default(),
        };
        let pick_vec = |from_file: &Option<Vec<String>>, flag: &[String]| -> Option<Vec<String>> {
            from_file.clone().or_else(|| (!flag.is_empty()).then(|| flag.to_vec()))
        };

        let dataset = file
            .dataset
            .or(args.dataset.clone())
            .context("no dataset given (--dataset)")?;
        let out = file
            .out
            .or(args.out.clone())
            .context("no output directory given (--out)")?;
        let tasks = match pick_vec(&file.tasks, &args.task) {
            Some(names) => sorted_unique(parse_all(&names, "task", Task::parse)?),
            None => Task::ALL.to_vec(),
        };
        if tasks.is_empty() {
            bail!("at least one task must be selected");
        }
        let measures = match pick_vec(&file.measures, &args.measure) {
            Some(names) => sorted_unique(parse_all(&names, "measure", Measure::parse)?),
            None => Measure::ALL.to_vec(),
        };
        if measures.is_empty() {
            bail!("at least one measure must be selected");
        }
        let deltas = sorted_unique(
            file.deltas
                .or_else(|| (!args.delta.is_empty()).then(|| args.delta.clone()))
                .unwrap_or_else(|| (1..HORIZON_MONTHS).collect()),
        );
        let age_delta = file.age_delta.or(args.age_delta).unwrap_or(2);
        let ages = sorted_unique(
            file.ages
                .or_else(|| (!args.ages.is_empty()).then(|| args.ages.clone()))
                .unwrap_or_else(|| (1..=HORIZON_MONTHS.saturating_sub(age_delta)).collect()),
        );
        let coefficient_delta = file.coefficient_delta.or(args.coefficient_delta).unwrap_or(2);
        let cutoff_method = match file.cutoff_method.or(args.cutoff_method.clone()) {
            Some(name) => CutoffMethod::parse(&name).with_context(|| format!("unknown cutoff method {name:?}"))?,
            None => CutoffMethod::Argmax,
        };
        let config = Self {
            dataset,
            out,
            tasks,
            measures,
            deltas,
            ages,
            age_delta,
            coefficient_delta,
            split_seed: file.split_seed.or(args.split_seed).unwrap_or(0),
            cutoff_method,
            least_squares: file.least_squares.unwrap_or(args.least_squares),
            bootstrap: file.bootstrap.or(args.bootstrap).unwrap_or(200),
            jobs: file.jobs.or(args.jobs).unwrap_or(0),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        let h = HORIZON_MONTHS;
        if let Some(d) = self.deltas.iter().find(|&&d| d == 0 || d >= h) {
            bail!("delta {d} outside [1, {}]", h - 1);
        }
        for (name, d) in [
            ("age_delta", self.age_delta),
            ("coefficient_delta", self.coefficient_delta),
        ] {
            if d == 0 || d >= h {
                bail!("{name} {d} outside [1, {}]", h - 1);
            }
        }
        if let Some(t) = self.ages.iter().find(|&&t| t == 0 || t + self.age_delta > h) {
            bail!(
                "age {t} with age_delta {} outside [1, {}]",
                self.age_delta,
                h - self.age_delta
            );
        }
        Ok(())
    }

    /// Every setting that can change the outputs, plus the dataset
    /// fingerprint. Paths and the worker count are left out so that the
    /// same inputs give the same file.
    pub fn render(&self, dataset_fingerprint: &str) -> String {
        let list = |v: &[String]| v.join(",");
        let mut s = String::new();
        let _ = writeln!(s, "dataset_sha256 = {dataset_fingerprint}");
        let _ = writeln!(
            s,
            "tasks = {}",
            list(&self.tasks.iter().map(|t| t.name().to_string()).collect::<Vec<_>>())
        );
        let _ = writeln!(
            s,
            "measures = {}",
            list(&self.measures.iter().map(|m| m.name().to_string()).collect::<Vec<_>>())
        );
        let _ = writeln!(
            s,
            "deltas = {}",
            list(&self.deltas.iter().map(u32::to_string).collect::<Vec<_>>())
        );
        let _ = writeln!(
            s,
            "ages = {}",
            list(&self.ages.iter().map(u32::to_string).collect::<Vec<_>>())
        );
        let _ = writeln!(s, "age_delta = {}", self.age_delta);
        let _ = writeln!(s, "coefficient_delta = {}", self.coefficient_delta);
        let _ = writeln!(s, "split_seed = {}", self.split_seed);
        let _ = writeln!(s, "cutoff_method = {}", self.cutoff_method.name());
        let _ = writeln!(s, "least_squares = {}", self.least_squares);
        let _ = writeln!(s, "bootstrap = {}", self.bootstrap);
        s
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    /// Directory to write the dataset into.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with generator settings; its keys override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_streamers: Option<usize>,
    #[arg(long)]
    pub n_months: Option<u32>,
    #[arg(long)]
    pub beta: Option<f64>,
}

impl SynthArgs {
    pub fn resolve(&self) -> Result<SynthConfig> {
        let mut config = SynthConfig::default();
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.n_streamers {
            config.n_streamers = v;
        }
        if let Some(v) = self.n_months {
            config.n_months = v;
        }
        if let Some(v) = self.beta {
            config.beta = v;
        }
        if let Some(path) = &self.config {
            // the file is layered over the flags key by key
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let mut table: toml::Table =
                toml::from_str(&text).map_err(|e| anyhow::anyhow!("config {}: {}", path.display(), e.message()))?;
            let base = toml::Table::try_from(&config).context("serializing defaults")?;
            for (k, v) in base {
                table.entry(k).or_insert(v);
            }
            config = table
                .try_into()
                .map_err(|e: toml::de::Error| anyhow::anyhow!("config {}: {}", path.display(), e.message()))?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args() -> AnalyzeArgs {
        AnalyzeArgs {
            dataset: Some("data".into()),
            out: Some("out".into()),
            ..AnalyzeArgs::default()
        }
    }

    #[test]
    fn defaults_cover_everything() {
        let c = RunConfig::resolve(&args()).unwrap();
        assert_eq!(c.tasks, Task::ALL.to_vec());
        assert_eq!(c.deltas, (1..=11).collect::<Vec<_>>());
        assert_eq!(c.ages, (1..=10).collect::<Vec<_>>());
        assert_eq!(c.cutoff_method, CutoffMethod::Argmax);
    }

    #[test]
    fn file_overrides_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "split_seed = 9\ndeltas = [3]\n").unwrap();
        let c = RunConfig::resolve(&AnalyzeArgs {
            split_seed: Some(4),
            delta: vec![2, 5],
            config: Some(path),
            ..args()
        })
        .unwrap();
        assert_eq!(c.split_seed, 9);
        assert_eq!(c.deltas, vec![3]);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::resolve(&AnalyzeArgs {
            delta: vec![12],
            ..args()
        })
        .is_err());
        assert!(RunConfig::resolve(&AnalyzeArgs {
            task: vec!["fame".into()],
            ..args()
        })
        .is_err());
        assert!(RunConfig::resolve(&AnalyzeArgs {
            dataset: None,
            ..args()
        })
        .is_err());
    }

    #[test]
    fn runconfig_ignores_jobs_and_paths() {
        let a = RunConfig::resolve(&AnalyzeArgs {
            jobs: Some(1),
            ..args()
        })
        .unwrap();
        let b = RunConfig::resolve(&AnalyzeArgs {
            jobs: Some(4),
            out: Some("elsewhere".into()),
            ..args()
        })
        .unwrap();
        assert_eq!(a.render("x"), b.render("x"));
    }

    #[test]
    fn synth_file_layers_over_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synth.toml");
        std::fs::write(&path, "beta = 0.25\n").unwrap();
        let c = SynthArgs {
            out: "x".into(),
            config: Some(path.clone()),
            seed: Some(7),
            beta: Some(0.9),
            ..SynthArgs::default()
        }
        .resolve()
        .unwrap();
        assert_eq!((c.seed, c.beta), (7, 0.25));
        std::fs::write(&path, "bogus = 1\n").unwrap();
        let err = SynthArgs {
            out: "x".into(),
            config: Some(path),
            ..SynthArgs::default()
        }
        .resolve();
        assert!(err.is_err());
    }
}

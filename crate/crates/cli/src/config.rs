//! Declarative run configuration (TOML), versioned by `schema_version`.

use std::path::{Path, PathBuf};

use cleam::estimators::DEFAULT_CONFIDENCE;
use cleam::{AccuracyProfile, Channel, ClassDistribution, ConfusionMatrix, EstimatorKind};
use serde::Deserialize;

use crate::error::{CliError, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Estimate,
    Simulate,
    Validate,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    #[default]
    Both,
}

impl OutputFormat {
    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// `batch_id,predicted_class[,count]`
    Csv,
    /// One JSON object per line with the same fields.
    Jsonl,
    /// `batch_id,phat` with precomputed class-0 proportions.
    Proportions,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub alpha: Option<AccuracyProfile>,
    pub confusion: Option<ConfusionMatrix>,
    /// Validation-set class prior used by BBSE.
    pub source_prior: Option<ClassDistribution>,
}

impl ClassifierConfig {
    pub fn channel(&self) -> Result<Channel> {
        match (&self.alpha, &self.confusion) {
            (Some(a), None) => Ok(Channel::Accuracy(a.clone())),
            (None, Some(cm)) => Ok(Channel::Confusion(cm.clone())),
            (Some(_), Some(_)) => Err(CliError::Config("classifier: give either alpha or confusion, not both".into())),
            (None, None) => Err(CliError::Config("classifier: one of alpha or confusion is required".into())),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub input: PathBuf,
    pub format: Option<InputFormat>,
    #[serde(default = "two")]
    pub n_classes: usize,
    /// Batch size; required for the proportions format.
    pub n: Option<u64>,
    pub estimators: Option<Vec<EstimatorKind>>,
    /// Known class-0 probability, when available, for error reporting.
    pub ground_truth: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub p_star: Option<ClassDistribution>,
    /// Sweep of class-0 probabilities; overrides `p_star`.
    pub grid: Option<Vec<f64>>,
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_s")]
    pub s: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    pub estimators: Option<Vec<EstimatorKind>>,
    /// Batch sizes for an error-versus-n curve.
    pub n_values: Option<Vec<u64>>,
    /// Writes repetition 0 of the first scenario as a label file.
    pub fixture: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub p_star: ClassDistribution,
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_s")]
    pub s: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_significance")]
    pub significance: f64,
    #[serde(default = "default_oracle_batches")]
    pub oracle_batches: usize,
    /// Observed labels to test instead of simulated series.
    pub input: Option<PathBuf>,
    pub format: Option<InputFormat>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Optional; when present it must match the subcommand.
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub output: OutputConfig,
    pub classifier: Option<ClassifierConfig>,
    pub estimate: Option<EstimateSection>,
    pub simulate: Option<SimulateSection>,
    pub validate: Option<ValidateSection>,
}

fn two() -> usize {
    2
}
fn default_n() -> u64 {
    400
}
fn default_s() -> usize {
    30
}
fn default_repetitions() -> usize {
    5
}
fn default_runs() -> usize {
    100
}
fn default_significance() -> f64 {
    0.05
}
fn default_oracle_batches() -> usize {
    100_000
}
fn default_confidence() -> f64 {
    DEFAULT_CONFIDENCE
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(e) = cfg.estimate.as_mut() {
            resolve(&mut e.input);
        }
        if let Some(f) = cfg.simulate.as_mut().and_then(|s| s.fixture.as_mut()) {
            resolve(f);
        }
        if let Some(i) = cfg.validate.as_mut().and_then(|v| v.input.as_mut()) {
            resolve(i);
        }
        if let Some(d) = cfg.output.dir.as_mut() {
            resolve(d);
        }
        Ok(cfg)
    }

    pub fn channel(&self) -> Result<Channel> {
        self.classifier.as_ref().ok_or_else(|| CliError::Config("missing [classifier] section".into()))?.channel()
    }

    pub fn source_prior(&self) -> Option<&ClassDistribution> {
        self.classifier.as_ref().and_then(|c| c.source_prior.as_ref())
    }

    pub fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
        section.as_ref().ok_or_else(|| CliError::Config(format!("mode requires a [{name}] section")))
    }
}

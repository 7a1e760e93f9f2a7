//! In-silico pseudo-generator.
//!
//! Each batch draws `n` true labels from `p*` and passes every sample through
//! the classification channel. Labels are sampled class by class as nested
//! binomials, which is distributionally identical to `n` independent
//! per-sample draws.
//!
//! Randomness is a ChaCha8 stream keyed by the scenario seed; repetition `r`
//! reads stream `r`, so results do not depend on how repetitions are
//! scheduled across threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimateReport, EstimatorKind, Observations, DEFAULT_CONFIDENCE};
use crate::model::{AccuracyProfile, Channel, ClassDistribution, ConfusionMatrix};

/// RNG for substream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; derives independent seeds for grid points.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Predicted-label counts of one batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchObservation {
    pub counts: Vec<u64>,
}

impl BatchObservation {
    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, p: f64) -> u64 {
    if trials == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return trials;
    }
    Binomial::new(trials, p).expect("p checked to lie in (0, 1)").sample(rng)
}

/// Splits `trials` across categories with probabilities `probs`.
fn multinomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, probs: &[f64], out: &mut [u64]) {
    let mut remaining = trials;
    let mut mass = 1.0;
    let last = probs.len() - 1;
    for (i, &p) in probs.iter().enumerate() {
        if i == last || remaining == 0 {
            out[i] += remaining;
            remaining = 0;
            continue;
        }
        let c = if mass > 0.0 { binomial(rng, remaining, p / mass) } else { 0 };
        out[i] += c;
        remaining -= c;
        mass -= p;
    }
}

/// Draws one batch of `n` samples through the channel.
pub fn simulate_batch<R: Rng + ?Sized>(
    p_star: &ClassDistribution,
    channel: &ConfusionMatrix,
    n: u64,
    rng: &mut R,
) -> Result<BatchObservation> {
    let k = channel.k();
    if p_star.len() != k {
        return Err(Error::Dimension { expected: k, got: p_star.len() });
    }
    let mut truth = vec![0u64; k];
    multinomial(rng, n, p_star.probs(), &mut truth);
    let mut counts = vec![0u64; k];
    for (j, &c) in truth.iter().enumerate() {
        if c > 0 {
            multinomial(rng, c, &channel.column(j), &mut counts);
        }
    }
    Ok(BatchObservation { counts })
}

/// Draws `s` batches from one RNG.
pub fn simulate_observations<R: Rng + ?Sized>(
    p_star: &ClassDistribution,
    channel: &ConfusionMatrix,
    n: u64,
    s: usize,
    rng: &mut R,
) -> Result<Observations> {
    let batches =
        (0..s).map(|_| simulate_batch(p_star, channel, n, rng).map(|b| b.counts)).collect::<Result<Vec<_>>>()?;
    Observations::new(n, batches)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub p_star: ClassDistribution,
    pub channel: Channel,
    pub n: u64,
    pub s: usize,
    pub repetitions: usize,
    pub seed: u64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    /// Source prior for BBSE; uniform when absent.
    #[serde(default)]
    pub source_prior: Option<ClassDistribution>,
}

fn default_confidence() -> f64 {
    DEFAULT_CONFIDENCE
}

impl Default for ScenarioConfig {
    /// A two-class generator with `p0* = 0.642` measured by a classifier with
    /// accuracies `[0.947, 0.983]`, `n = 400`, `s = 30`, five repetitions.
    fn default() -> Self {
        ScenarioConfig::binary(0.642, 0.947, 0.983, 0).expect("constants are valid")
    }
}

impl ScenarioConfig {
    /// Binary scenario with `n = 400`, `s = 30`, five repetitions.
    pub fn binary(p0: f64, alpha0: f64, alpha1: f64, seed: u64) -> Result<Self> {
        Ok(ScenarioConfig {
            p_star: ClassDistribution::binary(p0)?,
            channel: Channel::Accuracy(AccuracyProfile::binary(alpha0, alpha1)?),
            n: 400,
            s: 30,
            repetitions: 5,
            seed,
            confidence: DEFAULT_CONFIDENCE,
            source_prior: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if self.s < 2 {
            return Err(Error::InvalidArgument(format!("s must be at least 2, got {}", self.s)));
        }
        if self.repetitions < 1 {
            return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
        }
        if self.channel.k() != self.p_star.len() {
            return Err(Error::Dimension { expected: self.channel.k(), got: self.p_star.len() });
        }
        if let Some(q) = &self.source_prior {
            if q.len() != self.p_star.len() {
                return Err(Error::Dimension { expected: self.p_star.len(), got: q.len() });
            }
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::OutOfRange { value: self.confidence, lower: 0.0, upper: 1.0 });
        }
        Ok(())
    }

    /// Observations for repetition `rep`, read from its own substream.
    pub fn observations(&self, rep: usize) -> Result<Observations> {
        let cm = self.channel.to_confusion()?;
        let mut rng = stream_rng(self.seed, rep as u64);
        simulate_observations(&self.p_star, &cm, self.n, self.s, &mut rng)
    }

    pub fn with_p0(&self, p0: f64) -> Result<Self> {
        Ok(ScenarioConfig { p_star: ClassDistribution::binary(p0)?, ..self.clone() })
    }
}

/// One estimator's outcome in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutcome {
    pub estimator: EstimatorKind,
    pub report: Option<EstimateReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub sample_mean: f64,
    pub sample_std: f64,
    pub outcomes: Vec<EstimatorOutcome>,
}

/// Means over the successful repetitions of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorAggregate {
    pub estimator: EstimatorKind,
    pub successes: usize,
    pub failures: usize,
    pub mean_point: f64,
    pub mean_lower: Option<f64>,
    pub mean_upper: Option<f64>,
    /// Average of the per-repetition point errors.
    pub mean_point_error: f64,
    pub mean_interval_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub repetitions: Vec<RepetitionResult>,
    pub aggregates: Vec<EstimatorAggregate>,
}

impl ScenarioResult {
    pub fn aggregate(&self, kind: EstimatorKind) -> Option<&EstimatorAggregate> {
        self.aggregates.iter().find(|a| a.estimator == kind)
    }
}

fn run_repetition(cfg: &ScenarioConfig, rep: usize, estimators: &[EstimatorKind]) -> Result<RepetitionResult> {
    let obs = cfg.observations(rep)?;
    let st = crate::estimators::sample_stats(&obs.series(0)?)?;
    let p0 = cfg.p_star.get(0);
    let outcomes = estimators
        .iter()
        .map(|&kind| {
            let res = kind
                .evaluate(&obs, &cfg.channel, cfg.source_prior.as_ref(), cfg.confidence)
                .and_then(|r| r.with_ground_truth(p0));
            match res {
                Ok(report) => EstimatorOutcome { estimator: kind, report: Some(report), error: None },
                Err(e) => EstimatorOutcome { estimator: kind, report: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    Ok(RepetitionResult { repetition: rep, sample_mean: st.mean, sample_std: st.std, outcomes })
}

fn mean_of(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (count > 0).then(|| sum / count as f64)
}

fn aggregate(kind: EstimatorKind, reps: &[RepetitionResult]) -> EstimatorAggregate {
    let reports: Vec<&EstimateReport> = reps
        .iter()
        .filter_map(|r| r.outcomes.iter().find(|o| o.estimator == kind))
        .filter_map(|o| o.report.as_ref())
        .collect();
    let failures = reps.len() - reports.len();
    let ivs = || reports.iter().filter_map(|r| r.interval);
    EstimatorAggregate {
        estimator: kind,
        successes: reports.len(),
        failures,
        mean_point: mean_of(reports.iter().map(|r| r.point.value)).unwrap_or(f64::NAN),
        mean_lower: mean_of(ivs().map(|iv| iv.lower)),
        mean_upper: mean_of(ivs().map(|iv| iv.upper)),
        mean_point_error: mean_of(reports.iter().filter_map(|r| r.errors).map(|e| e.point_error)).unwrap_or(f64::NAN),
        mean_interval_error: mean_of(reports.iter().filter_map(|r| r.errors?.interval_error)),
    }
}

/// Runs every repetition, evaluates each estimator, and aggregates the errors
/// against the known `p*`. Estimator failures are recorded per repetition.
pub fn run_scenario(cfg: &ScenarioConfig, estimators: &[EstimatorKind]) -> Result<ScenarioResult> {
    cfg.validate()?;
    if estimators.is_empty() {
        return Err(Error::InvalidArgument("no estimators registered".into()));
    }
    let repetitions = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(cfg, rep, estimators))
        .collect::<Result<Vec<_>>>()?;
    let aggregates = estimators.iter().map(|&k| aggregate(k, &repetitions)).collect();
    Ok(ScenarioResult { config: cfg.clone(), repetitions, aggregates })
}

/// A sweep over class-0 probabilities with a shared channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub rows: Vec<ScenarioResult>,
    /// Per estimator, the point error averaged over grid rows.
    pub average_point_error: Vec<(EstimatorKind, f64)>,
    pub average_interval_error: Vec<(EstimatorKind, Option<f64>)>,
}

impl GridResult {
    pub fn average_point_error(&self, kind: EstimatorKind) -> Option<f64> {
        self.average_point_error.iter().find(|(k, _)| *k == kind).map(|(_, v)| *v)
    }
}

/// Class-0 probabilities of the standard bias sweep.
pub const STANDARD_GRID: [f64; 5] = [0.9, 0.8, 0.7, 0.6, 0.5];

/// Runs `base` at each `p0`; row `i` uses seed `derive_seed(base.seed, i)`.
pub fn run_grid(base: &ScenarioConfig, p0_values: &[f64], estimators: &[EstimatorKind]) -> Result<GridResult> {
    if !base.p_star.is_binary() {
        return Err(Error::Dimension { expected: 2, got: base.p_star.len() });
    }
    let rows = p0_values
        .iter()
        .enumerate()
        .map(|(i, &p0)| {
            let mut cfg = base.with_p0(p0)?;
            cfg.seed = derive_seed(base.seed, i as u64);
            run_scenario(&cfg, estimators)
        })
        .collect::<Result<Vec<_>>>()?;
    let average_point_error = estimators
        .iter()
        .map(|&k| {
            let v = mean_of(rows.iter().filter_map(|r| r.aggregate(k)).map(|a| a.mean_point_error));
            (k, v.unwrap_or(f64::NAN))
        })
        .collect();
    let average_interval_error = estimators
        .iter()
        .map(|&k| (k, mean_of(rows.iter().filter_map(|r| r.aggregate(k)?.mean_interval_error))))
        .collect();
    Ok(GridResult { rows, average_point_error, average_interval_error })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub covered: usize,
    pub total: usize,
    pub failures: usize,
    pub fraction: f64,
}

pub const MIN_COVERAGE_REPETITIONS: usize = 200;

/// Fraction of repetitions whose interval for `estimator` contains `p0*`.
pub fn coverage_experiment(cfg: &ScenarioConfig, estimator: EstimatorKind, confidence: f64) -> Result<Coverage> {
    if cfg.repetitions < MIN_COVERAGE_REPETITIONS {
        return Err(Error::InsufficientSamples { needed: MIN_COVERAGE_REPETITIONS, got: cfg.repetitions });
    }
    let cfg = ScenarioConfig { confidence, ..cfg.clone() };
    let result = run_scenario(&cfg, &[estimator])?;
    let p0 = cfg.p_star.get(0);
    let intervals: Vec<_> = result.repetitions.iter().filter_map(|r| r.outcomes[0].report.as_ref()?.interval).collect();
    if intervals.is_empty() {
        return Err(Error::InvalidArgument(format!("estimator '{}' produced no intervals", estimator.name())));
    }
    let covered = intervals.iter().filter(|iv| iv.contains(p0)).count();
    Ok(Coverage {
        covered,
        total: intervals.len(),
        failures: cfg.repetitions - intervals.len(),
        fraction: covered as f64 / intervals.len() as f64,
    })
}

//! Estimators of the generator's class-0 probability from classifier outputs.
//!
//! The Baseline estimator reports the average classified proportion as-is.
//! CLEAM inverts the two-class channel: with `mu` the sample mean of the
//! class-0 proportions,
//!
//! ```text
//! p0 = (mu - (1 - alpha1)) / (alpha0 - (1 - alpha1))
//! ```
//!
//! and the same map applied to `mu -/+ z sigma / sqrt(s)` gives the interval.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{AccuracyProfile, Channel, ClassDistribution, ConfusionMatrix};
use crate::stats;

/// Below this reciprocal condition number a channel is treated as singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

/// Tolerance before a solved distribution is flagged as outside the simplex.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// Denominator guard for the two-class inversion.
pub const CHANCE_TOL: f64 = 1e-9;

pub const DEFAULT_CONFIDENCE: f64 = 0.95;

/// Per-batch proportions of samples classified as class 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhatSeries {
    values: Vec<f64>,
    n: u64,
}

impl PhatSeries {
    pub fn new(values: Vec<f64>, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("batch size n must be at least 1".into()));
        }
        if values.is_empty() {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("proportion {i} = {v} is not in [0, 1]")));
        }
        Ok(PhatSeries { values, n })
    }

    /// Proportions `count / n` from raw class-0 counts.
    pub fn from_counts(counts: &[u64], n: u64) -> Result<Self> {
        if let Some(c) = counts.iter().find(|&&c| c > n) {
            return Err(Error::InvalidArgument(format!("count {c} exceeds batch size {n}")));
        }
        Self::new(counts.iter().map(|&c| c as f64 / n as f64).collect(), n)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Number of batches.
    pub fn s(&self) -> usize {
        self.values.len()
    }

    /// The class-1 proportions `1 - p`.
    pub fn complement(&self) -> PhatSeries {
        PhatSeries { values: self.values.iter().map(|v| 1.0 - v).collect(), n: self.n }
    }
}

/// Predicted-label counts for a set of equally sized batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    n: u64,
    batches: Vec<Vec<u64>>,
}

impl Observations {
    pub fn new(n: u64, batches: Vec<Vec<u64>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("batch size n must be at least 1".into()));
        }
        let k = batches.first().map(Vec::len).ok_or(Error::InsufficientSamples { needed: 1, got: 0 })?;
        if k < 2 {
            return Err(Error::Dimension { expected: 2, got: k });
        }
        for (b, counts) in batches.iter().enumerate() {
            if counts.len() != k {
                return Err(Error::Dimension { expected: k, got: counts.len() });
            }
            let total: u64 = counts.iter().sum();
            if total != n {
                return Err(Error::InvalidArgument(format!("batch {b} has {total} samples, expected {n}")));
            }
        }
        Ok(Observations { n, batches })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> usize {
        self.batches[0].len()
    }

    pub fn s(&self) -> usize {
        self.batches.len()
    }

    pub fn batches(&self) -> &[Vec<u64>] {
        &self.batches
    }

    /// Proportions of each batch classified as `class`.
    pub fn series(&self, class: usize) -> Result<PhatSeries> {
        if class >= self.k() {
            return Err(Error::Dimension { expected: self.k(), got: class + 1 });
        }
        let counts: Vec<u64> = self.batches.iter().map(|b| b[class]).collect();
        PhatSeries::from_counts(&counts, self.n)
    }

    /// Per-class proportion averaged over batches.
    pub fn mean_proportions(&self) -> Result<ClassDistribution> {
        let total = (self.n as f64) * self.s() as f64;
        let probs = (0..self.k()).map(|c| self.batches.iter().map(|b| b[c]).sum::<u64>() as f64 / total).collect();
        ClassDistribution::new(probs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    pub std: f64,
    pub s: usize,
}

impl SampleStats {
    /// `sigma / sqrt(s)`.
    pub fn standard_error(&self) -> f64 {
        self.std / (self.s as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub value: f64,
    pub clamped_value: f64,
    pub out_of_range: bool,
}

impl PointEstimate {
    pub fn new(value: f64) -> Self {
        PointEstimate { value, clamped_value: value.clamp(0.0, 1.0), out_of_range: !(0.0..=1.0).contains(&value) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
}

impl IntervalEstimate {
    /// Builds an interval, ordering the bounds.
    pub fn new(a: f64, b: f64, confidence: f64) -> Self {
        IntervalEstimate { lower: a.min(b), upper: a.max(b), confidence }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Result of solving a K-class channel for the generator distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassEstimate {
    /// Raw solution before clamping.
    pub raw: Vec<f64>,
    /// Solution projected onto the simplex (negatives clamped, renormalized).
    pub estimate: ClassDistribution,
    pub out_of_range: bool,
    /// Reciprocal condition number of the solved matrix.
    pub rcond: f64,
}

pub fn sample_stats(series: &PhatSeries) -> Result<SampleStats> {
    let s = series.s();
    if s < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: s });
    }
    let v = series.values();
    Ok(SampleStats { mean: stats::mean(v), std: stats::sample_variance(v).sqrt(), s })
}

/// Mean classified proportion and its normal-theory interval.
pub fn baseline_estimate(series: &PhatSeries, confidence: f64) -> Result<(PointEstimate, IntervalEstimate)> {
    let st = sample_stats(series)?;
    let half = stats::z_for_confidence(confidence)? * st.standard_error();
    Ok((PointEstimate::new(st.mean), IntervalEstimate::new(st.mean - half, st.mean + half, confidence)))
}

fn cleam_denominator(acc: &AccuracyProfile) -> Result<f64> {
    if !acc.is_binary() {
        return Err(Error::Dimension { expected: 2, got: acc.alpha().len() });
    }
    let denom = acc.accuracy(0) - acc.complement(1);
    if denom.abs() <= CHANCE_TOL {
        return Err(Error::ChanceLevelClassifier { sum: acc.accuracy(0) + acc.accuracy(1) });
    }
    Ok(denom)
}

/// Inverts the two-class channel at a given mean proportion.
pub fn cleam_invert(mean: f64, acc: &AccuracyProfile) -> Result<f64> {
    let denom = cleam_denominator(acc)?;
    Ok((mean - acc.complement(1)) / denom)
}

pub fn cleam_point(series: &PhatSeries, acc: &AccuracyProfile) -> Result<PointEstimate> {
    cleam_denominator(acc)?;
    let st = sample_stats(series)?;
    Ok(PointEstimate::new(cleam_invert(st.mean, acc)?))
}

pub fn cleam_interval(series: &PhatSeries, acc: &AccuracyProfile, confidence: f64) -> Result<IntervalEstimate> {
    cleam_denominator(acc)?;
    let st = sample_stats(series)?;
    let half = stats::z_for_confidence(confidence)? * st.standard_error();
    let lo = cleam_invert(st.mean - half, acc)?;
    let hi = cleam_invert(st.mean + half, acc)?;
    Ok(IntervalEstimate::new(lo, hi, confidence))
}

fn rcond(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

fn solve(m: DMatrix<f64>, rhs: &[f64]) -> Result<(Vec<f64>, f64)> {
    let rc = rcond(&m);
    if rc.is_nan() || rc <= SINGULAR_RCOND {
        return Err(Error::SingularChannel { rcond: rc });
    }
    let b = DVector::from_column_slice(rhs);
    let x = m.lu().solve(&b).ok_or(Error::SingularChannel { rcond: rc })?;
    Ok((x.iter().copied().collect(), rc))
}

fn project(raw: Vec<f64>, rcond: f64) -> Result<MulticlassEstimate> {
    let out_of_range = raw.iter().any(|&v| !(-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(&v));
    let clipped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::DegenerateModel("solution has no positive mass".into()));
    }
    let estimate = ClassDistribution::new(clipped.iter().map(|v| v / total).collect())?;
    Ok(MulticlassEstimate { raw, estimate, out_of_range, rcond })
}

/// Solves `A p = mean_phat` for the generator distribution `p`.
pub fn multiclass_estimate(mean_phat: &ClassDistribution, cm: &ConfusionMatrix) -> Result<MulticlassEstimate> {
    if mean_phat.len() != cm.k() {
        return Err(Error::Dimension { expected: cm.k(), got: mean_phat.len() });
    }
    let (raw, rc) = solve(cm.to_matrix(), mean_phat.probs())?;
    project(raw, rc)
}

/// Label-shift estimate: weights `w = C^-1 mean_phat` with the joint
/// confusion `C[i][j] = A[i][j] * source_prior[j]`, negative weights
/// clipped to zero, target `w * source_prior` renormalized.
pub fn bbse_estimate(
    mean_phat: &ClassDistribution,
    cm: &ConfusionMatrix,
    source_prior: &ClassDistribution,
) -> Result<MulticlassEstimate> {
    let k = cm.k();
    for len in [mean_phat.len(), source_prior.len()] {
        if len != k {
            return Err(Error::Dimension { expected: k, got: len });
        }
    }
    let joint = DMatrix::from_fn(k, k, |i, j| cm.get(i, j) * source_prior.get(j));
    let (weights, rc) = solve(joint, mean_phat.probs())?;
    let raw: Vec<f64> = weights.iter().zip(source_prior.probs()).map(|(w, q)| w * q).collect();
    let out_of_range = raw.iter().any(|&v| !(-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(&v));
    let target: Vec<f64> = weights.iter().zip(source_prior.probs()).map(|(w, q)| w.max(0.0) * q).collect();
    let total: f64 = target.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::DegenerateModel("all label-shift weights are non-positive".into()));
    }
    let estimate = ClassDistribution::new(target.iter().map(|v| v / total).collect())?;
    Ok(MulticlassEstimate { raw, estimate, out_of_range, rcond: rc })
}

/// Estimators that can be run against a set of observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Baseline,
    Cleam,
    Multiclass,
    Bbse,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] =
        [EstimatorKind::Baseline, EstimatorKind::Cleam, EstimatorKind::Multiclass, EstimatorKind::Bbse];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Baseline => "baseline",
            EstimatorKind::Cleam => "cleam",
            EstimatorKind::Multiclass => "multiclass",
            EstimatorKind::Bbse => "bbse",
        }
    }

    /// Runs the estimator. `source_prior` is only used by BBSE and defaults to uniform.
    pub fn evaluate(
        &self,
        obs: &Observations,
        channel: &Channel,
        source_prior: Option<&ClassDistribution>,
        confidence: f64,
    ) -> Result<EstimateReport> {
        if channel.k() != obs.k() {
            return Err(Error::Dimension { expected: channel.k(), got: obs.k() });
        }
        match self {
            EstimatorKind::Baseline | EstimatorKind::Cleam => {
                let mut report = self.evaluate_series(&obs.series(0)?, channel, source_prior, confidence)?;
                if *self == EstimatorKind::Baseline {
                    report.distribution = Some(obs.mean_proportions()?.into_inner());
                }
                Ok(report)
            }
            EstimatorKind::Multiclass | EstimatorKind::Bbse => {
                self.evaluate_mean(&obs.mean_proportions()?, channel, source_prior)
            }
        }
    }

    /// Runs the estimator on a two-class proportion series.
    pub fn evaluate_series(
        &self,
        series: &PhatSeries,
        channel: &Channel,
        source_prior: Option<&ClassDistribution>,
        confidence: f64,
    ) -> Result<EstimateReport> {
        if *self != EstimatorKind::Baseline && channel.k() != 2 {
            return Err(Error::Dimension { expected: 2, got: channel.k() });
        }
        match self {
            EstimatorKind::Baseline => {
                let (point, interval) = baseline_estimate(series, confidence)?;
                let distribution = vec![point.value, 1.0 - point.value];
                Ok(EstimateReport::new(self.name(), point, Some(interval), Some(distribution)))
            }
            EstimatorKind::Cleam => {
                let acc = channel.binary_accuracy()?;
                let point = cleam_point(series, &acc)?;
                let interval = cleam_interval(series, &acc, confidence)?;
                let distribution = vec![point.value, 1.0 - point.value];
                Ok(EstimateReport::new(self.name(), point, Some(interval), Some(distribution)))
            }
            EstimatorKind::Multiclass | EstimatorKind::Bbse => {
                let mean = sample_stats(series)?.mean;
                self.evaluate_mean(&ClassDistribution::binary(mean)?, channel, source_prior)
            }
        }
    }

    fn evaluate_mean(
        &self,
        mean: &ClassDistribution,
        channel: &Channel,
        source_prior: Option<&ClassDistribution>,
    ) -> Result<EstimateReport> {
        let cm = channel.to_confusion()?;
        let est = match self {
            EstimatorKind::Bbse => {
                let uniform = ClassDistribution::uniform(cm.k())?;
                bbse_estimate(mean, &cm, source_prior.unwrap_or(&uniform))?
            }
            _ => multiclass_estimate(mean, &cm)?,
        };
        let mut point = PointEstimate::new(est.raw[0]);
        point.out_of_range |= est.out_of_range;
        Ok(EstimateReport::new(self.name(), point, None, Some(est.estimate.into_inner())))
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator '{s}'")))
    }
}

/// Errors of an estimate against a known class-0 probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateErrors {
    pub ground_truth: f64,
    pub point_error: f64,
    pub interval_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: String,
    pub point: PointEstimate,
    pub interval: Option<IntervalEstimate>,
    /// Full estimated class distribution, when the estimator produces one.
    pub distribution: Option<Vec<f64>>,
    pub errors: Option<EstimateErrors>,
}

impl EstimateReport {
    pub fn new(
        estimator: &str,
        point: PointEstimate,
        interval: Option<IntervalEstimate>,
        distribution: Option<Vec<f64>>,
    ) -> Self {
        EstimateReport { estimator: estimator.to_string(), point, interval, distribution, errors: None }
    }

    /// Attaches point and interval errors relative to the true class-0 probability.
    /// Errors are computed on the unclamped values.
    pub fn with_ground_truth(mut self, p0: f64) -> Result<Self> {
        let point_error = metrics::point_error(p0, self.point.value)?;
        let interval_error = self.interval.map(|iv| metrics::interval_error(p0, &iv)).transpose()?;
        self.errors = Some(EstimateErrors { ground_truth: p0, point_error, interval_error });
        Ok(self)
    }
}

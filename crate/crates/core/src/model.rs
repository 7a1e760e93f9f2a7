//! Statistical model of the classifier output.
//!
//! A generator with class probabilities `p*` emits a batch of `n` samples.
//! Each sample of true class `j` is labelled `i` by the classifier with
//! probability `A[i][j]`. For two classes the channel is fully described by
//! the per-class accuracies `alpha = [alpha0, alpha1]`, and the fraction of
//! the batch labelled class 0 is approximately Gaussian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that probabilities sum to one.
pub const PROB_TOL: f64 = 1e-9;

/// Accuracies closer than this to the chance line `alpha0 + alpha1 = 1` are flagged degenerate.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// A probability vector over sensitive-attribute classes.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    /// Validates `probs`. Entries may drift from the simplex by at most
    /// [`PROB_TOL`]; such drift is removed by renormalization.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidProbability(format!("need at least 2 classes, got {}", probs.len())));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(-PROB_TOL..=1.0 + PROB_TOL).contains(&p) {
                return Err(Error::InvalidProbability(format!("entry {i} = {p} is not in [0, 1]")));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidProbability(format!("entries sum to {sum}, expected 1")));
        }
        let probs = probs.into_iter().map(|p| p.clamp(0.0, 1.0) / sum).collect();
        Ok(ClassDistribution { probs })
    }

    /// `[p0, 1 - p0]`.
    pub fn binary(p0: f64) -> Result<Self> {
        Self::new(vec![p0, 1.0 - p0])
    }

    /// The uniform (perfectly fair) distribution over `k` classes.
    pub fn uniform(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidProbability(format!("need at least 2 classes, got {k}")));
        }
        Ok(ClassDistribution { probs: vec![1.0 / k as f64; k] })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.probs.len() == 2
    }

    pub fn get(&self, class: usize) -> f64 {
        self.probs[class]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.probs
    }

    fn require_binary(&self) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(Error::Dimension { expected: 2, got: self.len() })
        }
    }
}

impl<'de> Deserialize<'de> for ClassDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let probs = Vec::<f64>::deserialize(d)?;
        ClassDistribution::new(probs).map_err(serde::de::Error::custom)
    }
}

/// Per-class probability that the classifier labels a sample of that class correctly.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct AccuracyProfile {
    alpha: Vec<f64>,
}

impl AccuracyProfile {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::InvalidAccuracy(format!("need at least 2 classes, got {}", alpha.len())));
        }
        for (i, &a) in alpha.iter().enumerate() {
            if !a.is_finite() || a <= 0.0 || a > 1.0 {
                return Err(Error::InvalidAccuracy(format!("alpha[{i}] = {a} is not in (0, 1]")));
            }
        }
        Ok(AccuracyProfile { alpha })
    }

    pub fn binary(alpha0: f64, alpha1: f64) -> Result<Self> {
        Self::new(vec![alpha0, alpha1])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn accuracy(&self, class: usize) -> f64 {
        self.alpha[class]
    }

    /// Error rate `1 - alpha_i`.
    pub fn complement(&self, class: usize) -> f64 {
        1.0 - self.alpha[class]
    }

    pub fn is_binary(&self) -> bool {
        self.alpha.len() == 2
    }

    /// True when the binary classifier sits on the chance line.
    pub fn is_degenerate(&self) -> bool {
        self.is_binary() && (self.alpha[0] + self.alpha[1] - 1.0).abs() < DEGENERATE_TOL
    }

    /// `|alpha0 - alpha1|`, the accuracy asymmetry of a binary classifier.
    pub fn skew(&self) -> f64 {
        (self.alpha[0] - self.alpha[1]).abs()
    }

    /// The 2x2 channel `[[alpha0, 1 - alpha1], [1 - alpha0, alpha1]]`.
    pub fn to_confusion(&self) -> Result<ConfusionMatrix> {
        self.require_binary()?;
        let (a0, a1) = (self.alpha[0], self.alpha[1]);
        ConfusionMatrix::new(vec![vec![a0, 1.0 - a1], vec![1.0 - a0, a1]])
    }

    fn require_binary(&self) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(Error::Dimension { expected: 2, got: self.alpha.len() })
        }
    }
}

impl<'de> Deserialize<'de> for AccuracyProfile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let alpha = Vec::<f64>::deserialize(d)?;
        AccuracyProfile::new(alpha).map_err(serde::de::Error::custom)
    }
}

/// Column-stochastic classification channel; entry `(i, j)` is the
/// probability of predicting class `i` for a sample of true class `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    rows: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k < 2 {
            return Err(Error::InvalidConfusion(format!("need at least 2 classes, got {k}")));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidConfusion(format!("row {i} has {} entries, expected {k}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || !(-PROB_TOL..=1.0 + PROB_TOL).contains(&v) {
                    return Err(Error::InvalidConfusion(format!("entry ({i}, {j}) = {v} is not in [0, 1]")));
                }
            }
        }
        for j in 0..k {
            let col: f64 = rows.iter().map(|r| r[j]).sum();
            if (col - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidConfusion(format!("column {j} sums to {col}, expected 1")));
            }
        }
        Ok(ConfusionMatrix { rows })
    }

    pub fn identity(k: usize) -> Result<Self> {
        Self::new((0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect())
    }

    /// Number of classes.
    pub fn k(&self) -> usize {
        self.rows.len()
    }

    /// P(predict `predicted` | true `truth`).
    pub fn get(&self, predicted: usize, truth: usize) -> f64 {
        self.rows[predicted][truth]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Distribution of predicted labels for samples of true class `truth`.
    pub fn column(&self, truth: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[truth]).collect()
    }

    /// Per-class accuracies (the diagonal).
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.k()).map(|i| self.rows[i][i]).collect()
    }

    pub(crate) fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        let k = self.k();
        nalgebra::DMatrix::from_fn(k, k, |i, j| self.rows[i][j])
    }
}

impl<'de> Deserialize<'de> for ConfusionMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        ConfusionMatrix::new(rows).map_err(serde::de::Error::custom)
    }
}

/// A classification channel: per-class accuracies for two classes, or a full confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Accuracy(AccuracyProfile),
    Confusion(ConfusionMatrix),
}

impl Channel {
    pub fn k(&self) -> usize {
        match self {
            Channel::Accuracy(a) => a.alpha().len(),
            Channel::Confusion(cm) => cm.k(),
        }
    }

    pub fn to_confusion(&self) -> Result<ConfusionMatrix> {
        match self {
            Channel::Accuracy(a) => a.to_confusion(),
            Channel::Confusion(cm) => Ok(cm.clone()),
        }
    }

    /// Binary accuracy profile; for a 2x2 confusion matrix this is its diagonal.
    pub fn binary_accuracy(&self) -> Result<AccuracyProfile> {
        match self {
            Channel::Accuracy(a) => {
                a.require_binary()?;
                Ok(a.clone())
            }
            Channel::Confusion(cm) if cm.k() == 2 => AccuracyProfile::new(cm.diagonal()),
            Channel::Confusion(cm) => Err(Error::Dimension { expected: 2, got: cm.k() }),
        }
    }
}

/// Probabilities of the four outcomes of classifying one sample:
/// `[true 0 -> 0, true 0 -> 1, true 1 -> 1, true 1 -> 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventProbabilities {
    pub p: [f64; 4],
}

impl EventProbabilities {
    /// Probability that a sample is labelled class 0.
    pub fn predicted_class0(&self) -> f64 {
        self.p[0] + self.p[3]
    }
}

/// Gaussian approximation of the batch proportion labelled class 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: f64,
    pub std: f64,
    pub n: u64,
    /// Set when the smallest class probability is below `5 / n`, where the
    /// normal approximation is unreliable.
    pub boundary_warning: bool,
}

impl GaussianSpec {
    pub fn new(mean: f64, std: f64, n: u64) -> Result<Self> {
        if !mean.is_finite() || !std.is_finite() || std < 0.0 {
            return Err(Error::InvalidArgument(format!("bad gaussian: mean {mean}, std {std}")));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("batch size n must be at least 1".into()));
        }
        Ok(GaussianSpec { mean, std, n, boundary_warning: false })
    }

    pub fn variance(&self) -> f64 {
        self.std * self.std
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if self.std == 0.0 {
            return if x >= self.mean { 1.0 } else { 0.0 };
        }
        crate::stats::normal_cdf((x - self.mean) / self.std)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.mean + self.std * crate::stats::normal_quantile(p)
    }
}

pub fn event_probabilities(p_star: &ClassDistribution, acc: &AccuracyProfile) -> Result<EventProbabilities> {
    p_star.require_binary()?;
    acc.require_binary()?;
    let (p0, p1) = (p_star.get(0), p_star.get(1));
    let (a0, a1) = (acc.accuracy(0), acc.accuracy(1));
    Ok(EventProbabilities { p: [p0 * a0, p0 * (1.0 - a0), p1 * a1, p1 * (1.0 - a1)] })
}

/// Per-sample covariance `diag(p) - p p^T` of the event indicator vector.
/// Multiply by `n` for the covariance of the event counts.
pub fn covariance_matrix(p_star: &ClassDistribution, acc: &AccuracyProfile) -> Result<[[f64; 4]; 4]> {
    let ev = event_probabilities(p_star, acc)?;
    let p = ev.p;
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = if i == j { p[i] - p[i] * p[i] } else { -p[i] * p[j] };
        }
    }
    Ok(m)
}

/// Model distribution of the class-0 batch proportion.
///
/// The mean is `p0 alpha0 + p1 (1 - alpha1)`. The class-0 prediction count is
/// exactly `Binomial(n, mean)`, so the variance is `mean (1 - mean) / n`.
pub fn phat_distribution(p_star: &ClassDistribution, acc: &AccuracyProfile, n: u64) -> Result<GaussianSpec> {
    if n == 0 {
        return Err(Error::InvalidArgument("batch size n must be at least 1".into()));
    }
    let ev = event_probabilities(p_star, acc)?;
    let q = ev.predicted_class0().clamp(0.0, 1.0);
    let mut spec = GaussianSpec::new(q, (q * (1.0 - q) / n as f64).sqrt(), n)?;
    let min_p = p_star.probs().iter().cloned().fold(f64::INFINITY, f64::min);
    spec.boundary_warning = min_p < 5.0 / n as f64;
    Ok(spec)
}

/// Variance of the class-0 proportion with a positive cross term
/// `+ 2/n p0 p1 alpha0 (1 - alpha1)`, as it is sometimes written. Kept only so
/// that the Monte Carlo oracle can compare it against the binomial variance.
pub fn plus_sign_variance(p_star: &ClassDistribution, acc: &AccuracyProfile, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("batch size n must be at least 1".into()));
    }
    let ev = event_probabilities(p_star, acc)?;
    let (a, b) = (ev.p[0], ev.p[3]);
    Ok((a - a * a + b - b * b + 2.0 * a * b) / n as f64)
}

/// Expected distribution of predicted labels, `A p*`.
pub fn multiclass_forward(p_star: &ClassDistribution, cm: &ConfusionMatrix) -> Result<ClassDistribution> {
    let k = cm.k();
    if p_star.len() != k {
        return Err(Error::Dimension { expected: k, got: p_star.len() });
    }
    let out: Vec<f64> = (0..k).map(|i| (0..k).map(|j| cm.get(i, j) * p_star.get(j)).sum()).collect();
    ClassDistribution::new(out)
}

//! Evaluation arithmetic: normalized errors, fairness discrepancy and the
//! conversions used when comparing against published numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::IntervalEstimate;
use crate::model::ClassDistribution;

/// `|p0 - estimate| / p0`.
pub fn point_error(p_star_0: f64, estimate: f64) -> Result<f64> {
    if p_star_0 == 0.0 {
        return Err(Error::Undefined("point error"));
    }
    Ok((p_star_0 - estimate).abs() / p_star_0)
}

/// Largest normalized deviation of either interval bound from `p0`.
pub fn interval_error(p_star_0: f64, interval: &IntervalEstimate) -> Result<f64> {
    if p_star_0 == 0.0 {
        return Err(Error::Undefined("interval error"));
    }
    let lo = (interval.lower - p_star_0).abs();
    let hi = (interval.upper - p_star_0).abs();
    Ok(lo.max(hi) / p_star_0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscrepancyKind {
    L1,
    L2,
    Kl,
}

/// Distance between a fair target and an estimated distribution.
///
/// KL is `sum_i estimate_i * log2(estimate_i / target_i)`, i.e. the
/// divergence of the estimate from the target, in bits.
pub fn fairness_discrepancy(
    target: &ClassDistribution,
    estimate: &ClassDistribution,
    kind: DiscrepancyKind,
) -> Result<f64> {
    if target.len() != estimate.len() {
        return Err(Error::Dimension { expected: target.len(), got: estimate.len() });
    }
    let pairs = target.probs().iter().zip(estimate.probs());
    match kind {
        DiscrepancyKind::L1 => Ok(pairs.map(|(t, e)| (t - e).abs()).sum()),
        DiscrepancyKind::L2 => Ok(pairs.map(|(t, e)| (t - e) * (t - e)).sum::<f64>().sqrt()),
        DiscrepancyKind::Kl => {
            if let Some(i) = estimate.probs().iter().position(|&e| e == 0.0) {
                return Err(Error::InfiniteDivergence(i));
            }
            let mut total = 0.0;
            for (i, (t, e)) in pairs.enumerate() {
                if *t == 0.0 {
                    return Err(Error::InfiniteDivergence(i));
                }
                total += e * (e / t).log2();
            }
            Ok(total)
        }
    }
}

/// The two binary class-0 probabilities whose L2 distance to `[0.5, 0.5]` is `f`.
pub fn fd_to_class_prob(f: f64) -> Result<(f64, f64)> {
    let max = std::f64::consts::FRAC_1_SQRT_2;
    // Allow rounding at the fully biased end, where f = sqrt(0.5) is computed.
    if !(0.0..=max + 1e-12).contains(&f) {
        return Err(Error::OutOfRange { value: f, lower: 0.0, upper: max });
    }
    let d = (f * std::f64::consts::FRAC_1_SQRT_2).min(0.5);
    Ok((0.5 - d, 0.5 + d))
}

/// `|prev - proposed| / prev`.
pub fn relative_improvement(prev: f64, proposed: f64) -> Result<f64> {
    if prev == 0.0 {
        return Err(Error::Undefined("relative improvement"));
    }
    Ok((prev - proposed).abs() / prev)
}

/// Converts a binary diversity score in `[-1, 1]` to a class-0 proportion.
pub fn diversity_to_phat(delta: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&delta) {
        return Err(Error::OutOfRange { value: delta, lower: -1.0, upper: 1.0 });
    }
    Ok((delta + 1.0) / 2.0)
}

/// `p0 - p1` for a binary distribution.
pub fn gt_diversity(p_star: &ClassDistribution) -> Result<f64> {
    if !p_star.is_binary() {
        return Err(Error::Dimension { expected: 2, got: p_star.len() });
    }
    Ok(p_star.get(0) - p_star.get(1))
}

/// Formats a fraction as a percentage with two decimals, e.g. `0.0498 -> "4.98%"`.
pub fn percent(fraction: f64) -> String {
    format!("{:.2}%", fraction * 100.0)
}

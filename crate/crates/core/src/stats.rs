//! Small numeric helpers shared by the estimators and validators.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

fn standard_normal() -> Normal {
    Normal::standard()
}

pub fn normal_cdf(z: f64) -> f64 {
    standard_normal().cdf(z)
}

pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

/// Two-sided critical value `z` such that `P(|Z| <= z) = confidence`.
pub fn z_for_confidence(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::OutOfRange { value: confidence, lower: 0.0, upper: 1.0 });
    }
    Ok(normal_quantile(0.5 + confidence / 2.0))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (`s - 1` denominator). Needs at least two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

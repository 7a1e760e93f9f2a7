//! Checks that observed batch proportions behave like the model says.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{sample_stats, PhatSeries};
use crate::model::{phat_distribution, plus_sign_variance, AccuracyProfile, ClassDistribution, GaussianSpec};
use crate::simulator::{simulate_batch, stream_rng};
use crate::stats;

pub const MIN_KS_SAMPLES: usize = 5;
pub const MIN_ORACLE_BATCHES: usize = 10_000;

/// Asymptotic one-sample KS critical value `sqrt(-ln(significance / 2) / 2) / sqrt(s)`.
pub fn ks_critical(s: usize, significance: f64) -> Result<f64> {
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::OutOfRange { value: significance, lower: 0.0, upper: 1.0 });
    }
    let c = (-0.5 * (significance / 2.0).ln()).sqrt();
    Ok(c / (s as f64).sqrt())
}

/// `sup |F_s(x) - F(x)|` with a right-continuous empirical CDF, evaluated at
/// both one-sided limits of each sample point.
pub fn ks_statistic<F: Fn(f64) -> f64>(values: &[f64], cdf: F) -> f64 {
    let mut xs = values.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let s = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        let above = (i as f64 + 1.0) / s - f;
        let below = f - i as f64 / s;
        d.max(above).max(below)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d_statistic: f64,
    pub d_critical: f64,
    pub significance: f64,
    pub reject: bool,
}

/// One-sample KS test of the series against a Gaussian model.
pub fn ks_test(series: &PhatSeries, spec: &GaussianSpec, significance: f64) -> Result<KsResult> {
    let s = series.s();
    if s < MIN_KS_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_KS_SAMPLES, got: s });
    }
    let v = series.values();
    if spec.std == 0.0 && v.iter().any(|&x| x != v[0]) {
        return Err(Error::DegenerateModel("model has zero variance but the series is not constant".into()));
    }
    let d_critical = ks_critical(s, significance)?;
    let d_statistic = if spec.std == 0.0 {
        // Point-mass model: the two step functions either coincide or never overlap.
        if v[0] == spec.mean {
            0.0
        } else {
            1.0
        }
    } else {
        ks_statistic(v, |x| spec.cdf(x))
    };
    Ok(KsResult { d_statistic, d_critical, significance, reject: d_statistic > d_critical })
}

/// Plotting position of the `i`-th of `s` order statistics.
pub fn plotting_position(i: usize, s: usize) -> f64 {
    (i as f64 + 0.5) / s as f64
}

/// `(theoretical, sample)` quantile pairs, sorted by sample value.
pub fn qq_points(series: &PhatSeries, spec: &GaussianSpec) -> Result<Vec<(f64, f64)>> {
    let s = series.s();
    if s < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: s });
    }
    let mut xs = series.values().to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    Ok(xs.into_iter().enumerate().map(|(i, x)| (spec.quantile(plotting_position(i, s)), x)).collect())
}

/// Sample-based and model-based statistics of the class-0 proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub p_star_0: f64,
    pub sample_mean: f64,
    pub sample_std: f64,
    pub model_mean: f64,
    pub model_std: f64,
    pub n: u64,
    pub s: usize,
}

pub fn compare_sample_vs_model(
    series: &PhatSeries,
    p_star: &ClassDistribution,
    acc: &AccuracyProfile,
) -> Result<ModelComparison> {
    let st = sample_stats(series)?;
    let model = phat_distribution(p_star, acc, series.n())?;
    Ok(ModelComparison {
        p_star_0: p_star.get(0),
        sample_mean: st.mean,
        sample_std: st.std,
        model_mean: model.mean,
        model_std: model.std,
        n: series.n(),
        s: st.s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceOracle {
    pub batches: usize,
    pub empirical_var: f64,
    pub binomial_var: f64,
    pub plus_sign_var: f64,
}

impl VarianceOracle {
    pub fn binomial_relative_error(&self) -> f64 {
        (self.empirical_var - self.binomial_var).abs() / self.binomial_var
    }

    /// True when the empirical variance is strictly closer to the binomial candidate.
    pub fn binomial_is_closer(&self) -> bool {
        (self.empirical_var - self.binomial_var).abs() < (self.empirical_var - self.plus_sign_var).abs()
    }
}

const ORACLE_CHUNK: usize = 4096;

/// Monte Carlo variance of the class-0 proportion next to both analytic candidates.
///
/// Batches are simulated in fixed-size chunks, chunk `c` reading substream `c`
/// of `seed`, and reduced in chunk order.
pub fn variance_oracle(
    p_star: &ClassDistribution,
    acc: &AccuracyProfile,
    n: u64,
    batches: usize,
    seed: u64,
) -> Result<VarianceOracle> {
    if batches < MIN_ORACLE_BATCHES {
        return Err(Error::InsufficientSamples { needed: MIN_ORACLE_BATCHES, got: batches });
    }
    let binomial_var = phat_distribution(p_star, acc, n)?.variance();
    let plus_sign_var = plus_sign_variance(p_star, acc, n)?;
    let cm = acc.to_confusion()?;
    let chunks = batches.div_ceil(ORACLE_CHUNK);
    let values = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = ORACLE_CHUNK.min(batches - c * ORACLE_CHUNK);
            let mut rng = stream_rng(seed, c as u64);
            (0..len)
                .map(|_| simulate_batch(p_star, &cm, n, &mut rng).map(|b| b.counts[0] as f64 / n as f64))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    Ok(VarianceOracle { batches, empirical_var: stats::sample_variance(&values), binomial_var, plus_sign_var })
}

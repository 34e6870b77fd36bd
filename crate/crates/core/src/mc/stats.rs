//! Summary statistics and normality diagnostics for one column of scaled errors.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const HISTOGRAM_BINS: usize = 50;

/// Inverse standard-normal CDF.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability {p} outside (0, 1)")));
    }
    Ok(standard_normal().inverse_cdf(p))
}

pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

fn standard_normal() -> Normal {
    Normal::standard()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Diagnostics against the normal law with the sample's mean and variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFit {
    pub ks_stat: f64,
    pub qq_corr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    /// `sqrt(2 / (R - 1)) * variance`.
    pub var_ci_halfwidth: f64,
    /// `None` when the sample has zero variance.
    pub normal_fit: Option<NormalFit>,
    pub histogram: Histogram,
}

pub fn summarize_sample(values: &[f64]) -> Result<SampleSummary> {
    let r = values.len();
    if r < 2 {
        return Err(Error::Precondition(format!(
            "need at least 2 values, got {r}"
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite value {v}")));
    }
    let n = r as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let normal_fit = (variance > 0.0).then(|| {
        let sd = variance.sqrt();
        NormalFit {
            ks_stat: ks_statistic(&sorted, mean, sd),
            qq_corr: qq_correlation(&sorted, mean, sd),
        }
    });
    Ok(SampleSummary {
        count: r,
        mean,
        variance,
        var_ci_halfwidth: (2.0 / (n - 1.0)).sqrt() * variance,
        normal_fit,
        histogram: histogram(&sorted, HISTOGRAM_BINS),
    })
}

/// `sup |F_emp - F|` for `N(mean, sd^2)`; `sorted` ascending.
pub fn ks_statistic(sorted: &[f64], mean: f64, sd: f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf((x - mean) / sd);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Pairs `(theoretical, empirical)` at plotting positions `(i - 0.5) / R`.
pub fn qq_points(sorted: &[f64], mean: f64, sd: f64) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let z = normal_quantile((i as f64 + 0.5) / n).expect("plotting position inside (0, 1)");
            (mean + sd * z, x)
        })
        .collect()
}

/// Pearson correlation of the QQ pairs.
pub fn qq_correlation(sorted: &[f64], mean: f64, sd: f64) -> f64 {
    let pts = qq_points(sorted, mean, sd);
    let n = pts.len() as f64;
    let (mx, my) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pts {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Equal-width bins over `[min, max]`; the last bin is closed. A constant
/// sample lands entirely in the first bin.
pub fn histogram(sorted: &[f64], bins: usize) -> Histogram {
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|k| if k == bins { hi } else { lo + k as f64 * width })
        .collect();
    let mut counts = vec![0u64; bins];
    for &x in sorted {
        let k = if width > 0.0 {
            (((x - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    Histogram { edges, counts }
}

//! Utility metrics over estimated vs true histograms.

use crate::error::{Error, Result};
use crate::hist::Histogram;
use crate::randomizer::ScfoParams;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One range-query error at a given window fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaErr {
    pub alpha: f64,
    pub err: f64,
}

/// Metric results for one estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean absolute range-query error per configured window fraction.
    pub range_query: Vec<AlphaErr>,
    /// Mean absolute quantile displacement, normalized by `m`.
    pub quantile_err: f64,
    /// Sum of absolute CDF differences.
    pub w1: f64,
    pub messages_per_user: f64,
}

/// Cumulative distribution: `cdf[i] = sum of freqs[0..=i]`.
pub fn cdf(f: &Histogram) -> Vec<f64> {
    let mut acc = 0.0;
    f.freqs()
        .iter()
        .map(|&v| {
            acc += v;
            acc
        })
        .collect()
}

/// Mean `|R(f, i, alpha) - R(f_est, i, alpha)|` over `n_queries` sampled
/// start bins, where `R` is the probability mass of a window of
/// `round(alpha * m)` bins.
pub fn range_query_error(
    f: &Histogram,
    f_est: &Histogram,
    alpha: f64,
    n_queries: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if f.m() != f_est.m() {
        return Err(Error::Metric(format!("resolution mismatch: {} vs {}", f.m(), f_est.m())));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Metric(format!("need alpha in (0,1), got {alpha}")));
    }
    let m = f.m();
    let offset = ((alpha * m as f64).round() as usize).clamp(1, m - 1);
    let cf = cdf(f);
    let ce = cdf(f_est);
    let max_start = m - 1 - offset;
    let mut total = 0.0;
    for _ in 0..n_queries {
        let i = rng.gen_range(0..=max_start);
        let rf = cf[i + offset] - cf[i];
        let re = ce[i + offset] - ce[i];
        total += (rf - re).abs();
    }
    Ok(total / n_queries as f64)
}

/// `lambda`-quantile cut: the largest bin index whose CDF does not exceed
/// `lambda`, or `-1` when even the first bin's mass already does (the cut
/// point sits before bin 0).
pub fn quantile_bin(f: &Histogram, lambda: f64) -> i64 {
    let c = cdf(f);
    let mut q: i64 = -1;
    for (i, &p) in c.iter().enumerate() {
        if p <= lambda {
            q = i as i64;
        }
    }
    q
}

/// Mean absolute quantile displacement over the given levels, divided by `m`.
pub fn quantile_error(f: &Histogram, f_est: &Histogram, quantiles: &[f64]) -> Result<f64> {
    if f.m() != f_est.m() {
        return Err(Error::Metric(format!("resolution mismatch: {} vs {}", f.m(), f_est.m())));
    }
    if quantiles.is_empty() {
        return Err(Error::Metric("empty quantile set".into()));
    }
    for &l in quantiles {
        if !(l > 0.0 && l < 1.0) {
            return Err(Error::Metric(format!("quantile {l} outside (0,1)")));
        }
    }
    let m = f.m() as f64;
    let total: f64 = quantiles
        .iter()
        .map(|&l| (quantile_bin(f, l) as f64 - quantile_bin(f_est, l) as f64).abs())
        .sum();
    Ok(total / quantiles.len() as f64 / m)
}

/// First Wasserstein distance as the sum of absolute CDF gaps.
pub fn wasserstein(f: &Histogram, f_est: &Histogram) -> Result<f64> {
    if f.m() != f_est.m() {
        return Err(Error::Metric(format!("resolution mismatch: {} vs {}", f.m(), f_est.m())));
    }
    Ok(cdf(f)
        .iter()
        .zip(cdf(f_est))
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// Protocol family for message accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageProtocol {
    /// Single-message piecewise reporting (SW, SSW, ASP).
    Piecewise,
    /// Multi-message SCFO reporting (Flip, Pure).
    Scfo,
}

/// Messages each user sends.
pub fn message_complexity(protocol: MessageProtocol, sc: Option<&ScfoParams>) -> f64 {
    match protocol {
        MessageProtocol::Piecewise => 1.0,
        MessageProtocol::Scfo => sc.map_or(f64::NAN, |s| s.messages_per_user() as f64),
    }
}

//! Data-poisoning attack crafting and the RIAR robustness metric.
//!
//! The attacker controls a fraction `beta` of the users and injects reports
//! crafted to concentrate the estimated distribution on a target set. The
//! ideal attack places all mass exactly on the targets; RIAR compares the
//! real attack's remaining distance to that ideal against the honest
//! distribution's distance, so 1 means no effect and 0 means the real attack
//! matched the ideal.

use crate::error::{Error, Result};
use crate::hist::{bin_index, Histogram};
use crate::metrics::wasserstein;
use crate::randomizer::{FlipBatch, PerturbParams, ReportBatch, ScfoParams};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Attack shape shared by all protocols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Compromised fraction of the user pool.
    pub beta: f64,
    /// Target values in `[0, 1]`.
    pub targets: Vec<f64>,
    /// Piecewise injection width divisor: fakes are uniform on
    /// `[T - b/d, T + b/d]`.
    pub range_divisor: u8,
}

impl AttackConfig {
    pub fn new(beta: f64, targets: Vec<f64>, range_divisor: u8) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidParams(format!("need beta in [0,1], got {beta}")));
        }
        if targets.is_empty() {
            return Err(Error::InvalidParams("need at least one target".into()));
        }
        for &t in &targets {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidParams(format!("target {t} outside [0,1]")));
            }
        }
        if !(1..=3).contains(&range_divisor) {
            return Err(Error::InvalidParams(format!(
                "need range_divisor in 1..=3, got {range_divisor}"
            )));
        }
        Ok(AttackConfig { beta, targets, range_divisor })
    }

    /// Number of compromised users out of `n`.
    pub fn fake_count(&self, n: usize) -> usize {
        (self.beta * n as f64).round() as usize
    }

    /// Indices of the chunk bins containing the targets, deduplicated.
    pub fn target_bins(&self, c: usize) -> Vec<usize> {
        let mut bins: Vec<usize> = self.targets.iter().map(|&t| bin_index(t, c)).collect();
        bins.sort_unstable();
        bins.dedup();
        bins
    }
}

/// RIAR and its two Wasserstein legs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiarReport {
    pub w1_attacked_vs_ideal: f64,
    pub w1_true_vs_ideal: f64,
    pub riar: f64,
}

/// The ideally-skewed distribution: equal mass on the bin of each target
/// (colliding targets merge their mass).
pub fn ideal_distribution(targets: &[f64], m: usize) -> Result<Histogram> {
    if targets.is_empty() {
        return Err(Error::InvalidParams("need at least one target".into()));
    }
    let mut freqs = vec![0.0; m];
    let share = 1.0 / targets.len() as f64;
    for &t in targets {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParams(format!("target {t} outside [0,1]")));
        }
        freqs[bin_index(t, m)] += share;
    }
    Histogram::new(freqs)
}

/// Fake Flip reports: each compromised user sends `s+1` vectors with ones
/// exactly at the target bins.
pub fn craft_flip_reports(cfg: &AttackConfig, sc: &ScfoParams, n_fake: usize) -> ReportBatch {
    let bins = cfg.target_bins(sc.c);
    let mut row = vec![false; sc.c];
    for &j in &bins {
        row[j] = true;
    }
    let mut batch = FlipBatch::with_capacity(sc.c, n_fake * (sc.s + 1));
    for _ in 0..n_fake * (sc.s + 1) {
        batch.push_row(&row);
    }
    ReportBatch::Flip(batch)
}

/// Fake Pure reports: every message is a target chunk, drawn uniformly over
/// the target set when there are several.
pub fn craft_pure_reports(
    cfg: &AttackConfig,
    sc: &ScfoParams,
    n_fake: usize,
    rng: &mut impl Rng,
) -> ReportBatch {
    let bins = cfg.target_bins(sc.c);
    let mut values = Vec::with_capacity(n_fake * (sc.s + 1));
    for _ in 0..n_fake * (sc.s + 1) {
        let j = bins[rng.gen_range(0..bins.len())];
        values.push(j as u32 + 1);
    }
    ReportBatch::Pure { c: sc.c, values }
}

/// Fake piecewise reports: each compromised user picks one target uniformly
/// and reports a value uniform on `[T - b/d, T + b/d]`, clipped to the output
/// domain so the batch passes the same validity checks as honest reports.
pub fn craft_piecewise_reports(
    cfg: &AttackConfig,
    params: &PerturbParams,
    n_fake: usize,
    rng: &mut impl Rng,
) -> ReportBatch {
    let half = params.b / cfg.range_divisor as f64;
    let mut values = Vec::with_capacity(n_fake);
    for _ in 0..n_fake {
        let t = cfg.targets[rng.gen_range(0..cfg.targets.len())];
        let v = t + (2.0 * rng.gen::<f64>() - 1.0) * half;
        values.push(v.clamp(params.out_lo(), params.out_hi()));
    }
    ReportBatch::Piecewise { b: params.b, values }
}

/// Real-and-ideal attack ratio.
pub fn riar(f_true: &Histogram, f_attacked: &Histogram, f_ide: &Histogram) -> Result<RiarReport> {
    let w1_true = wasserstein(f_true, f_ide)?;
    let w1_attacked = wasserstein(f_attacked, f_ide)?;
    if w1_true <= 0.0 {
        return Err(Error::DegenerateTarget);
    }
    Ok(RiarReport {
        w1_attacked_vs_ideal: w1_attacked,
        w1_true_vs_ideal: w1_true,
        riar: w1_attacked / w1_true,
    })
}

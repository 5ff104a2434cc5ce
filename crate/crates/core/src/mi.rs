//! Mutual-information bounds and the piecewise parameter optimizer.
//!
//! For uniform input (which maximizes the output entropy of the piecewise
//! channel), the output pdf has three segments: linear ramps over `[-b, 0]`
//! and `[1, 1+b]` and a near-flat middle. Replacing each segment by a uniform
//! density of the same mass bounds the output entropy from above, giving a
//! mutual-information bound tighter than the uniform-output assumption that
//! the square-wave literature uses.
//!
//! The optimizer maximizes the selection score along the privacy-feasible
//! boundary: the largest feasible `k` for each band width `b` (the bound is
//! increasing in `k`), then a golden-section pass over `b` seeded by a
//! feasibility-filtered coarse grid.

use crate::error::{Error, Result};
use crate::hist::Histogram;
use crate::privacy::{asp_bound_lhs, PrivacyBudget};
use crate::randomizer::{piecewise_perturb, PerturbParams};
use crate::rng::RngStream;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Entropy pieces of the mutual-information upper bound, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiBound {
    /// Upper bound on the output entropy `h(X̂)` under uniform input.
    pub h_u: f64,
    /// Conditional entropy `h(X̂ | X)` of the randomizer.
    pub h_cond: f64,
    /// `h_u - h_cond`.
    pub i_u: f64,
}

fn segment_masses(b: f64, k: f64) -> Result<(f64, f64, f64)> {
    let params = PerturbParams::new(b, k)?;
    let (p, q) = (params.p, params.q);
    let edge_mass = q * b + 0.5 * (p - q) * b * b;
    let edge_density = q + 0.5 * (p - q) * b;
    let mid_mass = 1.0 - (p - q) * b * b - 2.0 * q * b;
    if mid_mass <= 0.0 {
        return Err(Error::DegenerateGeometry(mid_mass));
    }
    let _ = edge_mass;
    Ok((edge_mass, edge_density, mid_mass))
}

fn h_cond(params: &PerturbParams) -> f64 {
    let (b, p, q) = (params.b, params.p, params.q);
    -(2.0 * b * p * p.ln() + q * q.ln())
}

/// Tight MI upper bound: edge segments uniformized at their average density,
/// middle segment at its mass over unit length.
pub fn mi_upper_bound(b: f64, k: f64) -> Result<MiBound> {
    let params = PerturbParams::new(b, k)?;
    let (edge_mass, edge_density, mid_mass) = segment_masses(b, k)?;
    let h_u = -2.0 * (edge_mass * edge_density.ln()) - mid_mass * mid_mass.ln();
    let h_c = h_cond(&params);
    Ok(MiBound { h_u, h_cond: h_c, i_u: h_u - h_c })
}

/// The loose bound from assuming the output is uniform over `[-b, 1+b]`.
pub fn prior_upper_bound(b: f64, k: f64) -> Result<f64> {
    let params = PerturbParams::new(b, k)?;
    Ok((1.0 + 2.0 * b).ln() - h_cond(&params))
}

/// Parameter-selection score: the entropy of the three segment masses minus
/// the conditional entropy. This is the objective whose constrained argmax
/// reproduces the reference optimal parameters; `mi_upper_bound` remains the
/// quantity used for bound-vs-estimate comparisons.
pub fn selection_score(b: f64, k: f64) -> Result<f64> {
    let params = PerturbParams::new(b, k)?;
    let (edge_mass, _, mid_mass) = segment_masses(b, k)?;
    if edge_mass <= 0.0 {
        return Err(Error::DegenerateGeometry(edge_mass));
    }
    let h3 = -2.0 * (edge_mass * edge_mass.ln()) - mid_mass * mid_mass.ln();
    Ok(h3 - h_cond(&params))
}

/// Monte-Carlo estimate of `I(X; X̂)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McMi {
    /// Plug-in estimate with the Miller-Madow correction applied.
    pub mi: f64,
    /// Delta-method standard error of the plug-in estimate.
    pub stderr: f64,
}

/// Cells per axis of the discretized joint.
pub const MC_MI_CELLS: usize = 128;

/// Histogram-based plug-in MI estimator over a `128x128` discretized joint.
///
/// `input = None` draws X uniform on `[0,1]`; otherwise X is drawn from the
/// histogram (bin by mass, uniform within the bin). The raw plug-in estimate
/// carries a positive bias of roughly `(cells-1)^2 / (2*samples)` nats; the
/// Miller-Madow correction subtracts it.
pub fn mi_monte_carlo(
    params: &PerturbParams,
    input: Option<&Histogram>,
    samples: usize,
    stream: &RngStream,
) -> Result<McMi> {
    if samples == 0 {
        return Err(Error::InvalidParams("need samples >= 1".into()));
    }
    let cells = MC_MI_CELLS;
    let mut rng = stream.rng();
    let mut joint = vec![0u64; cells * cells];
    let cdf: Option<Vec<f64>> = input.map(|h| {
        let mut acc = 0.0;
        h.freqs().iter().map(|f| { acc += f; acc }).collect()
    });

    let width = 1.0 + 2.0 * params.b;
    for _ in 0..samples {
        let x = match &cdf {
            None => rng.gen::<f64>(),
            Some(cdf) => {
                let u: f64 = rng.gen();
                let bin = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
                (bin as f64 + rng.gen::<f64>()) / cdf.len() as f64
            }
        };
        let y = piecewise_perturb(x, params, &mut rng)?;
        let ix = ((x * cells as f64) as usize).min(cells - 1);
        let iy = (((y + params.b) / width * cells as f64) as usize).min(cells - 1);
        joint[ix * cells + iy] += 1;
    }

    let n = samples as f64;
    let mut px = vec![0.0f64; cells];
    let mut py = vec![0.0f64; cells];
    for ix in 0..cells {
        for iy in 0..cells {
            let m = joint[ix * cells + iy] as f64 / n;
            px[ix] += m;
            py[iy] += m;
        }
    }
    let (mut mi, mut second_moment) = (0.0f64, 0.0f64);
    let (mut kx, mut ky) = (0usize, 0usize);
    for ix in 0..cells {
        if px[ix] > 0.0 {
            kx += 1;
        }
    }
    for iy in 0..cells {
        if py[iy] > 0.0 {
            ky += 1;
        }
    }
    for ix in 0..cells {
        for iy in 0..cells {
            let m = joint[ix * cells + iy] as f64 / n;
            if m > 0.0 {
                let term = (m / (px[ix] * py[iy])).ln();
                mi += m * term;
                second_moment += m * term * term;
            }
        }
    }
    let var = (second_moment - mi * mi).max(0.0);
    let bias = (kx.saturating_sub(1) * ky.saturating_sub(1)) as f64 / (2.0 * n);
    Ok(McMi { mi: (mi - bias).max(0.0), stderr: (var / n).sqrt() })
}

/// Search box and resolution for [`optimize_params`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub b_range: (f64, f64),
    pub k_range: (f64, f64),
    /// Coarse grid resolution per axis.
    pub grid: usize,
    /// Golden-section refinement iterations over `b`.
    pub refine_iters: usize,
    /// Relative slack allowed on the privacy constraint at the returned point.
    pub constraint_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            b_range: (1e-4, 1.5),
            k_range: (1.0 + 1e-6, 1e6),
            grid: 48,
            refine_iters: 80,
            constraint_tol: 1e-3,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<()> {
        if !(self.b_range.0 > 0.0 && self.b_range.0 < self.b_range.1) {
            return Err(Error::InvalidParams(format!("bad b_range {:?}", self.b_range)));
        }
        if !(self.k_range.0 >= 1.0 && self.k_range.0 < self.k_range.1) {
            return Err(Error::InvalidParams(format!("bad k_range {:?}", self.k_range)));
        }
        if self.grid < 8 {
            return Err(Error::InvalidParams(format!("need grid >= 8, got {}", self.grid)));
        }
        Ok(())
    }
}

/// Largest feasible `k in [k_lo, k_hi]` for a fixed `b`, or None if even the
/// smallest `k` violates the bound. Log-space bisection; the bound is
/// increasing in `k` at fixed `b`.
fn k_star(eps: f64, b: f64, n: usize, delta: f64, k_range: (f64, f64)) -> Result<Option<f64>> {
    let (k_lo, k_hi) = k_range;
    if asp_bound_lhs(eps, b, k_hi, n)? <= delta {
        return Ok(Some(k_hi));
    }
    if asp_bound_lhs(eps, b, k_lo, n)? > delta {
        return Ok(None);
    }
    let (mut lo, mut hi) = (k_lo.ln(), k_hi.ln());
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if asp_bound_lhs(eps, b, mid.exp(), n)? <= delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo.exp()))
}

/// Choose `(b, k)` maximizing the selection score subject to the
/// amplification bound. Deterministic: feasibility-filtered coarse grid, then
/// boundary-constrained golden-section refinement over `b` seeded at the best
/// grid point.
pub fn optimize_params(budget: &PrivacyBudget, cfg: &OptimizerConfig) -> Result<PerturbParams> {
    cfg.validate()?;
    let (eps, delta, n) = (budget.eps, budget.delta, budget.n);

    let score_at = |b: f64| -> Result<Option<(f64, f64)>> {
        match k_star(eps, b, n, delta, cfg.k_range)? {
            None => Ok(None),
            Some(k) => match selection_score(b, k) {
                Ok(v) => Ok(Some((v, k))),
                Err(Error::DegenerateGeometry(_)) => Ok(None),
                Err(e) => Err(e),
            },
        }
    };

    // Coarse grid over (b, log k), tracking the best feasible point; also the
    // best boundary score per b column.
    let mut best_grid: Option<(f64, f64, f64)> = None; // (score, b, k)
    for i in 0..cfg.grid {
        let b = cfg.b_range.0
            + (cfg.b_range.1 - cfg.b_range.0) * i as f64 / (cfg.grid - 1) as f64;
        for j in 0..cfg.grid {
            let t = j as f64 / (cfg.grid - 1) as f64;
            let k = (cfg.k_range.0.ln() + (cfg.k_range.1.ln() - cfg.k_range.0.ln()) * t).exp();
            if asp_bound_lhs(eps, b, k, n)? > delta {
                continue;
            }
            if let Ok(v) = selection_score(b, k) {
                if best_grid.map_or(true, |(bv, _, _)| v > bv) {
                    best_grid = Some((v, b, k));
                }
            }
        }
        if let Some((v, k)) = score_at(b)? {
            if best_grid.map_or(true, |(bv, _, _)| v > bv) {
                best_grid = Some((v, b, k));
            }
        }
    }
    let (_, b_seed, _) = best_grid.ok_or_else(|| {
        Error::InfeasibleBudget(format!("no feasible (b, k) for eps = {eps}, delta = {delta}, n = {n}"))
    })?;

    // Golden-section over b in a bracket around the seed, evaluating the
    // boundary score b -> score(b, k*(b)).
    let span = (cfg.b_range.1 - cfg.b_range.0) / (cfg.grid - 1) as f64;
    let mut a = (b_seed - 2.0 * span).max(cfg.b_range.0);
    let mut c = (b_seed + 2.0 * span).min(cfg.b_range.1);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let eval = |b: f64| -> Result<f64> {
        Ok(score_at(b)?.map_or(f64::NEG_INFINITY, |(v, _)| v))
    };
    let mut x1 = c - phi * (c - a);
    let mut x2 = a + phi * (c - a);
    let (mut f1, mut f2) = (eval(x1)?, eval(x2)?);
    for _ in 0..cfg.refine_iters {
        if f1 > f2 {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - phi * (c - a);
            f1 = eval(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (c - a);
            f2 = eval(x2)?;
        }
    }
    let b_opt = 0.5 * (a + c);

    // Keep whichever of (refined, grid seed) actually scores higher.
    let mut candidates = vec![b_seed];
    if let Some((_, k)) = score_at(b_opt)? {
        let _ = k;
        candidates.push(b_opt);
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for b in candidates {
        if let Some((v, k)) = score_at(b)? {
            if best.map_or(true, |(bv, _, _)| v > bv) {
                best = Some((v, b, k));
            }
        }
    }
    let (_, b, k) = best.unwrap();

    debug_assert!(asp_bound_lhs(eps, b, k, n)? <= delta * (1.0 + cfg.constraint_tol));
    PerturbParams::new(b, k)
}

//! Server-side estimators.
//!
//! The piecewise protocols reconstruct the input histogram from discretized
//! noisy reports by expectation-maximization against the randomizer's
//! transition matrix, followed by a smoothing step each iteration: fixed
//! binomial weights (EMS, used by SW/SSW) or the adaptive Gaussian-kernel
//! weights with a cosine-decayed window (EMAS, used by ASP). The SCFO
//! protocols use closed-form linear aggregators followed by Norm-Sub
//! consistency and uniform within-chunk spreading.
//!
//! The adaptive smoothing matrix is balanced to doubly stochastic before
//! application: rows summing to one make each output a convex combination of
//! its window (so a window-maximal bin can never grow — the robustness
//! property the attack evaluation relies on), and columns summing to one
//! conserve total mass exactly.

use crate::error::{Error, Result};
use crate::hist::Histogram;
use crate::randomizer::{PerturbParams, ReportBatch, ScfoParams};
use serde::{Deserialize, Serialize};

/// Column-stochastic channel matrix: `entry(j, i)` is the probability that a
/// report of input bin `i` lands in output bin `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    m_hat: usize,
    m: usize,
    /// Row-major, `m_hat x m`.
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_entries(m_hat: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m_hat * m {
            return Err(Error::InvalidParams("matrix shape mismatch".into()));
        }
        let mat = TransitionMatrix { m_hat, m, data };
        for i in 0..m {
            let s = mat.column_sum(i);
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParams(format!("column {i} sums to {s}")));
            }
        }
        if mat.data.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParams("negative transition entry".into()));
        }
        Ok(mat)
    }

    pub fn m_hat(&self) -> usize {
        self.m_hat
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn entry(&self, j: usize, i: usize) -> f64 {
        self.data[j * self.m + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.m..(j + 1) * self.m]
    }

    pub fn column_sum(&self, i: usize) -> f64 {
        (0..self.m_hat).map(|j| self.entry(j, i)).sum()
    }
}

/// Exact transition matrix of the piecewise randomizer: input bins are
/// represented by their centers, output-bin masses integrate the two-level
/// density in closed form.
pub fn transition_matrix(params: &PerturbParams, m: usize, m_hat: usize) -> TransitionMatrix {
    let (b, p, q) = (params.b, params.p, params.q);
    let lo = -b;
    let width = (1.0 + 2.0 * b) / m_hat as f64;
    let mut data = vec![0.0; m_hat * m];
    for i in 0..m {
        let x = (i as f64 + 0.5) / m as f64;
        let (band_lo, band_hi) = (x - b, x + b);
        for j in 0..m_hat {
            let out_lo = lo + j as f64 * width;
            let out_hi = out_lo + width;
            let overlap = (out_hi.min(band_hi) - out_lo.max(band_lo)).max(0.0);
            data[j * m + i] = p * overlap + q * (width - overlap);
        }
    }
    TransitionMatrix { m_hat, m, data }
}

/// One iteration of the EM recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    /// Current estimate, strictly positive.
    pub f: Vec<f64>,
    /// E-step masses.
    pub p_vec: Vec<f64>,
    /// Iteration counter.
    pub t: usize,
    /// Observed-data log-likelihood of `f` under the channel.
    pub log_lik: f64,
}

impl EmState {
    /// Uniform initialization.
    pub fn init(m: usize) -> Self {
        EmState {
            f: vec![1.0 / m as f64; m],
            p_vec: vec![0.0; m],
            t: 0,
            log_lik: f64::NEG_INFINITY,
        }
    }
}

/// E-step and M-step against per-output-bin counts.
pub fn em_step(state: &EmState, counts: &[f64], mat: &TransitionMatrix) -> Result<EmState> {
    let (m, m_hat) = (mat.m(), mat.m_hat());
    if state.f.len() != m || counts.len() != m_hat {
        return Err(Error::InvalidParams("em_step shape mismatch".into()));
    }
    let mut p_vec = vec![0.0; m];
    let mut log_lik = 0.0;
    for j in 0..m_hat {
        let row = mat.row(j);
        let denom: f64 = row.iter().zip(&state.f).map(|(a, b)| a * b).sum();
        if !(denom > 0.0) {
            return Err(Error::InvalidParams(format!("zero E-step denominator at output bin {j}")));
        }
        if counts[j] > 0.0 {
            log_lik += counts[j] * denom.ln();
            let w = counts[j] / denom;
            for (pi, (mji, fi)) in p_vec.iter_mut().zip(row.iter().zip(&state.f)) {
                *pi += w * mji * fi;
            }
        }
    }
    let total: f64 = p_vec.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParams("empty counts".into()));
    }
    let f = p_vec.iter().map(|&v| v / total).collect();
    Ok(EmState { f, p_vec, t: state.t + 1, log_lik })
}

/// Observed-data log-likelihood of an estimate (used by the monotonicity
/// checks).
pub fn log_likelihood(f: &[f64], counts: &[f64], mat: &TransitionMatrix) -> f64 {
    (0..mat.m_hat())
        .map(|j| {
            if counts[j] > 0.0 {
                let denom: f64 = mat.row(j).iter().zip(f).map(|(a, b)| a * b).sum();
                counts[j] * denom.ln()
            } else {
                0.0
            }
        })
        .sum()
}

/// Binomial `(1/4, 1/2, 1/4)` smoothing with the truncated boundary windows
/// renormalized, then an exact mass renormalization.
pub fn ems_smooth(f: &Histogram) -> Histogram {
    let x = f.freqs();
    let m = x.len();
    if m == 1 {
        return f.clone();
    }
    let mut out = vec![0.0; m];
    for i in 0..m {
        let (mut acc, mut wsum) = (0.5 * x[i], 0.5);
        if i > 0 {
            acc += 0.25 * x[i - 1];
            wsum += 0.25;
        }
        if i + 1 < m {
            acc += 0.25 * x[i + 1];
            wsum += 0.25;
        }
        out[i] = acc / wsum;
    }
    Histogram::from_weights(out).expect("smoothing preserves positivity")
}

/// EMAS smoother settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherConfig {
    /// Averaging radius in bins.
    pub radius: usize,
    /// Position-kernel width at the start of each cosine cycle.
    pub sigma_min: f64,
    /// Position-kernel width at the end of each cosine cycle.
    pub sigma_max: f64,
    /// Cosine period in iterations.
    pub period: usize,
    /// Maximum EM iterations.
    pub tau: usize,
    /// Divide the frequency-kernel scale's counts by n (sensitivity-analysis
    /// mode; the default keeps the reference value exactly as written).
    pub normalize_sigma1: bool,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            radius: 3,
            sigma_min: 1.0 / 3.0,
            sigma_max: 1.0,
            period: 50,
            tau: 10_000,
            normalize_sigma1: false,
        }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(Error::InvalidParams("need radius >= 1".into()));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma_max) {
            return Err(Error::InvalidParams("need 0 < sigma_min <= sigma_max".into()));
        }
        if self.period < 1 || self.tau < 1 {
            return Err(Error::InvalidParams("need period >= 1 and tau >= 1".into()));
        }
        Ok(())
    }

    /// Cosine-decayed position-kernel width at iteration `t`. The schedule has
    /// period `2 * period`; `t` is reduced first so equal phases give
    /// bit-equal widths.
    pub fn sigma2(&self, t: usize) -> f64 {
        let slot = t % (2 * self.period);
        let phase = std::f64::consts::PI * slot as f64 / self.period as f64;
        self.sigma_min + 0.5 * (self.sigma_max - self.sigma_min) * (1.0 - phase.cos())
    }
}

/// The frequency-kernel scale from the transition matrix and the raw counts,
/// exactly as the reference value is written (a double sum over all
/// output/input bin pairs).
pub fn sigma1_reference(counts: &[f64], mat: &TransitionMatrix, cfg: &SmootherConfig) -> f64 {
    let m = mat.m() as f64;
    let n: f64 = counts.iter().sum();
    let scale = if cfg.normalize_sigma1 && n > 0.0 { n } else { 1.0 };
    let mut total = 0.0;
    for i in 0..mat.m_hat() {
        let row_sum: f64 = mat.row(i).iter().sum();
        for j in 0..mat.m() {
            total += (counts[i] / scale) * m * m * mat.entry(i, j) / row_sum;
        }
    }
    total / m
}

/// Banded smoothing weights: `weights[i][o]` multiplies `f[i - radius + o]`.
#[derive(Clone)]
struct BandedKernel {
    m: usize,
    radius: usize,
    weights: Vec<f64>,
}

impl BandedKernel {
    fn width(&self) -> usize {
        2 * self.radius + 1
    }

    fn build(f: &[f64], sigma1: f64, sigma2: f64, radius: usize) -> Self {
        let m = f.len();
        let w = 2 * radius + 1;
        let mut weights = vec![0.0; m * w];
        let pos: Vec<f64> = (0..w)
            .map(|o| {
                let d = o as f64 - radius as f64;
                (-d * d / (2.0 * sigma2 * sigma2)).exp()
            })
            .collect();
        let inv_2s1 = 1.0 / (2.0 * sigma1 * sigma1);
        for i in 0..m {
            for o in 0..w {
                let k = i as i64 + o as i64 - radius as i64;
                if k < 0 || k >= m as i64 {
                    continue;
                }
                let df = f[i] - f[k as usize];
                weights[i * w + o] = pos[o] * (-df * df * inv_2s1).exp();
            }
        }
        BandedKernel { m, radius, weights }
    }

    /// Position-kernel-only weights (the frequency factor is exactly one).
    fn build_position(m: usize, sigma2: f64, radius: usize) -> Self {
        let w = 2 * radius + 1;
        let mut weights = vec![0.0; m * w];
        let pos: Vec<f64> = (0..w)
            .map(|o| {
                let d = o as f64 - radius as f64;
                (-d * d / (2.0 * sigma2 * sigma2)).exp()
            })
            .collect();
        for i in 0..m {
            for o in 0..w {
                let k = i as i64 + o as i64 - radius as i64;
                if k >= 0 && k < m as i64 {
                    weights[i * w + o] = pos[o];
                }
            }
        }
        BandedKernel { m, radius, weights }
    }

    /// Balance toward doubly stochastic, then pin rows to exactly one.
    fn balance(&mut self) {
        let (m, w, r) = (self.m, self.width(), self.radius as i64);
        let mut col = vec![0.0; m];
        for _ in 0..500 {
            // Row scaling.
            for i in 0..m {
                let s: f64 = self.weights[i * w..(i + 1) * w].iter().sum();
                let inv = 1.0 / s;
                for v in &mut self.weights[i * w..(i + 1) * w] {
                    *v *= inv;
                }
            }
            // Column sums.
            for c in col.iter_mut() {
                *c = 0.0;
            }
            for i in 0..m {
                for o in 0..w {
                    let k = i as i64 + o as i64 - r;
                    if k >= 0 && k < m as i64 {
                        col[k as usize] += self.weights[i * w + o];
                    }
                }
            }
            let max_dev = col.iter().fold(0.0f64, |a, &c| a.max((c - 1.0).abs()));
            if max_dev < 1e-13 {
                break;
            }
            // Column scaling.
            for i in 0..m {
                for o in 0..w {
                    let k = i as i64 + o as i64 - r;
                    if k >= 0 && k < m as i64 {
                        self.weights[i * w + o] /= col[k as usize];
                    }
                }
            }
        }
        for i in 0..m {
            let s: f64 = self.weights[i * w..(i + 1) * w].iter().sum();
            let inv = 1.0 / s;
            for v in &mut self.weights[i * w..(i + 1) * w] {
                *v *= inv;
            }
        }
    }

    fn apply(&self, f: &[f64]) -> Vec<f64> {
        let (m, w, r) = (self.m, self.width(), self.radius as i64);
        let mut out = vec![0.0; m];
        for i in 0..m {
            let mut acc = 0.0;
            for o in 0..w {
                let k = i as i64 + o as i64 - r;
                if k >= 0 && k < m as i64 {
                    acc += self.weights[i * w + o] * f[k as usize];
                }
            }
            out[i] = acc;
        }
        out
    }
}

fn window_max(f: &[f64], i: usize, radius: usize) -> f64 {
    let lo = i.saturating_sub(radius);
    let hi = (i + radius + 1).min(f.len());
    f[lo..hi].iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v))
}

fn apply_and_restore(kernel: &BandedKernel, f: &[f64], radius: usize) -> Vec<f64> {
    let mut g = kernel.apply(f);
    // Rows sum to one, so each g[i] is a convex combination of its window and
    // cannot exceed the window maximum. Column sums are one up to the balance
    // tolerance; restore any mass residue without breaking that property:
    // scale down for an excess, or top up proportionally to the slack below
    // each window maximum for a deficit (total slack always covers it).
    let total: f64 = g.iter().sum();
    let rho = 1.0 - total;
    if rho <= 0.0 {
        for v in &mut g {
            *v /= total;
        }
    } else {
        let slack: Vec<f64> = (0..g.len())
            .map(|i| (window_max(f, i, radius) - g[i]).max(0.0))
            .collect();
        let slack_sum: f64 = slack.iter().sum();
        if slack_sum > 0.0 {
            for (v, s) in g.iter_mut().zip(&slack) {
                *v += rho * s / slack_sum;
            }
        } else {
            for v in &mut g {
                *v /= total;
            }
        }
    }
    g
}

/// True when the frequency kernel evaluates to exactly 1.0 in f64 for every
/// pair in `f`, i.e. the largest exponent argument is below the rounding
/// threshold at 1.0.
fn frequency_kernel_is_flat(f: &[f64], sigma1: f64) -> bool {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in f {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let d = hi - lo;
    d * d / (2.0 * sigma1 * sigma1) < f64::EPSILON / 4.0
}

fn adaptive_smooth_vec(f: &[f64], t: usize, sigma1: f64, cfg: &SmootherConfig) -> Vec<f64> {
    let mut kernel = if frequency_kernel_is_flat(f, sigma1) {
        BandedKernel::build_position(f.len(), cfg.sigma2(t), cfg.radius)
    } else {
        BandedKernel::build(f, sigma1, cfg.sigma2(t), cfg.radius)
    };
    kernel.balance();
    apply_and_restore(&kernel, f, cfg.radius)
}

/// One adaptive-smoothing pass: Gaussian frequency-difference and position
/// kernels over a `±radius` window, balanced weights, exact mass.
pub fn adaptive_smooth_step(f: &Histogram, t: usize, sigma1: f64, cfg: &SmootherConfig) -> Result<Histogram> {
    cfg.validate()?;
    if !(sigma1 > 0.0) {
        return Err(Error::InvalidParams(format!("need sigma1 > 0, got {sigma1}")));
    }
    Histogram::new(adaptive_smooth_vec(f.freqs(), t, sigma1, cfg))
}

/// Smoothing flavor applied after each E/M pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoother {
    /// Plain EM.
    None,
    /// Fixed binomial weights (EMS).
    Binomial,
    /// Adaptive kernel weights with cosine-decayed window (EMAS).
    Adaptive,
}

/// Discretize piecewise reports into `m_hat` output bins over `[-b, 1+b]`.
pub fn discretize_reports(batch: &ReportBatch, params: &PerturbParams, m_hat: usize) -> Result<Vec<f64>> {
    let values = match batch {
        ReportBatch::Piecewise { b, values } => {
            if (b - params.b).abs() > 1e-9 {
                return Err(Error::Batch(format!(
                    "batch width b = {b} does not match randomizer b = {}",
                    params.b
                )));
            }
            values
        }
        _ => return Err(Error::Batch("expected a piecewise report batch".into())),
    };
    if values.is_empty() {
        return Err(Error::Batch("empty report batch".into()));
    }
    let (lo, width) = (-params.b, 1.0 + 2.0 * params.b);
    let mut counts = vec![0.0; m_hat];
    for &v in values {
        if v < lo - 1e-12 || v > lo + width + 1e-12 {
            return Err(Error::Batch(format!("report {v} outside [{lo}, {}]", lo + width)));
        }
        let j = (((v - lo) / width) * m_hat as f64) as usize;
        counts[j.min(m_hat - 1)] += 1.0;
    }
    Ok(counts)
}

/// Full iterative estimator for piecewise reports. Stops when the L1 change
/// falls below `1/n` or after `cfg.tau` iterations.
pub fn em_estimate(
    batch: &ReportBatch,
    params: &PerturbParams,
    m: usize,
    m_hat: usize,
    smoother: Smoother,
    cfg: &SmootherConfig,
) -> Result<Histogram> {
    cfg.validate()?;
    let counts = discretize_reports(batch, params, m_hat)?;
    let n: f64 = counts.iter().sum();
    let mat = transition_matrix(params, m, m_hat);
    let sigma1 = sigma1_reference(&counts, &mat, cfg);
    let mut state = EmState::init(m);
    let stop = 1.0 / n;
    // The balanced position-only kernel depends just on the sigma2 cycle
    // slot; reuse it across iterations whenever the frequency kernel is flat
    // at f64 resolution.
    let mut slot_cache: Vec<Option<BandedKernel>> = vec![None; 2 * cfg.period];
    for t in 0..cfg.tau {
        let next = em_step(&state, &counts, &mat)?;
        let mut f = next.f.clone();
        match smoother {
            Smoother::None => {}
            Smoother::Binomial => {
                f = ems_smooth(&Histogram::from_weights(f.clone())?).into_freqs();
            }
            Smoother::Adaptive => {
                if frequency_kernel_is_flat(&f, sigma1) {
                    let slot = t % (2 * cfg.period);
                    if slot_cache[slot].is_none() {
                        let mut k = BandedKernel::build_position(m, cfg.sigma2(t), cfg.radius);
                        k.balance();
                        slot_cache[slot] = Some(k);
                    }
                    f = apply_and_restore(slot_cache[slot].as_ref().unwrap(), &f, cfg.radius);
                } else {
                    f = adaptive_smooth_vec(&f, t, sigma1, cfg);
                }
            }
        }
        let delta: f64 = f.iter().zip(&state.f).map(|(a, b)| (a - b).abs()).sum();
        state = EmState { f, ..next };
        if delta < stop {
            break;
        }
    }
    Histogram::from_weights(state.f)
}

/// Algorithm-1 estimator (EM with adaptive smoothing), `m_hat = m`.
pub fn emas_estimate(
    batch: &ReportBatch,
    params: &PerturbParams,
    m: usize,
    cfg: &SmootherConfig,
) -> Result<Histogram> {
    em_estimate(batch, params, m, m, Smoother::Adaptive, cfg)
}

/// EM with binomial smoothing (the SW/SSW aggregator), `m_hat = m`.
pub fn ems_estimate(
    batch: &ReportBatch,
    params: &PerturbParams,
    m: usize,
    cfg: &SmootherConfig,
) -> Result<Histogram> {
    em_estimate(batch, params, m, m, Smoother::Binomial, cfg)
}

/// Norm-Sub consistency: find the shift whose clipped subtraction leaves unit
/// mass, by sort-and-scan water filling.
pub fn norm_sub(raw: &[f64]) -> Histogram {
    let m = raw.len();
    if raw.iter().any(|v| !v.is_finite()) {
        log::warn!("norm_sub input contains non-finite entries; falling back to uniform");
        return Histogram::uniform(m);
    }
    let mut sorted: Vec<f64> = raw.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut prefix = 0.0;
    for t in 1..=m {
        prefix += sorted[t - 1];
        let shift = (prefix - 1.0) / t as f64;
        let hi_ok = sorted[t - 1] - shift > 0.0;
        let lo_ok = t == m || sorted[t] - shift <= 0.0;
        if hi_ok && lo_ok {
            let out: Vec<f64> = raw.iter().map(|&v| (v - shift).max(0.0)).collect();
            return Histogram::from_weights(out).unwrap_or_else(|_| Histogram::uniform(m));
        }
    }
    log::warn!("norm_sub found no feasible shift; falling back to uniform");
    Histogram::uniform(m)
}

/// Flip's linear frequency estimator over `c` chunks. The result is a raw
/// (possibly negative) frequency vector; apply [`norm_sub`] for consistency.
pub fn flip_aggregate(batch: &ReportBatch, sc: &ScfoParams, n: usize) -> Result<Vec<f64>> {
    let fb = match batch {
        ReportBatch::Flip(fb) => fb,
        _ => return Err(Error::Batch("expected a flip report batch".into())),
    };
    if fb.c() != sc.c {
        return Err(Error::Batch(format!("batch c = {} does not match params c = {}", fb.c(), sc.c)));
    }
    if (sc.q_flip - 0.5).abs() < 1e-12 {
        return Err(Error::SingularAggregator);
    }
    let rows = fb.rows() as f64;
    let denom = (1.0 - 2.0 * sc.q_flip) * n as f64;
    Ok((0..sc.c)
        .map(|j| (fb.column_count(j) as f64 - rows * sc.q_flip) / denom)
        .collect())
}

/// Pure's linear frequency estimator over `c` chunks.
pub fn pure_aggregate(batch: &ReportBatch, sc: &ScfoParams, n: usize) -> Result<Vec<f64>> {
    let values = match batch {
        ReportBatch::Pure { c, values } => {
            if *c != sc.c {
                return Err(Error::Batch(format!("batch c = {c} does not match params c = {}", sc.c)));
            }
            values
        }
        _ => return Err(Error::Batch("expected a pure report batch".into())),
    };
    let mut counts = vec![0.0f64; sc.c];
    for &v in values {
        counts[(v - 1) as usize] += 1.0;
    }
    let expected_dummies = n as f64 * sc.s as f64 / sc.c as f64;
    Ok(counts.iter().map(|&cnt| (cnt - expected_dummies) / n as f64).collect())
}

/// Norm-Sub a raw chunk estimate and spread each chunk uniformly over `m/c`
/// estimate bins.
pub fn scfo_to_histogram(raw: &[f64], m: usize) -> Result<Histogram> {
    let c = raw.len();
    if c == 0 || m % c != 0 {
        return Err(Error::InvalidParams(format!("m = {m} must be divisible by c = {c}")));
    }
    let consistent = norm_sub(raw);
    let rep = m / c;
    let mut out = Vec::with_capacity(m);
    for &mass in consistent.freqs() {
        for _ in 0..rep {
            out.push(mass / rep as f64);
        }
    }
    Histogram::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomizer::{flip_encode_batch, piecewise_perturb, pure_encode_batch};
    use crate::rng::RngStream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn transition_single_bin() {
        let params = PerturbParams::new(0.25, 10.0).unwrap();
        let mat = transition_matrix(&params, 1, 1);
        assert_abs_diff_eq!(mat.entry(0, 0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn transition_uniform_channel() {
        let params = PerturbParams::new(0.3, 1.0).unwrap();
        let mat = transition_matrix(&params, 4, 8);
        for i in 0..4 {
            for j in 0..8 {
                assert_abs_diff_eq!(mat.entry(j, i), 1.0 / 8.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn transition_columns_stochastic_and_band_mass() {
        let params = PerturbParams::new(0.25, 10.0).unwrap();
        let mat = transition_matrix(&params, 4, 4);
        for i in 0..4 {
            assert_abs_diff_eq!(mat.column_sum(i), 1.0, epsilon = 1e-12);
        }
        // Per column, mass attributable to the band is 2bp: check against the
        // closed form by summing p*overlap across output bins.
        let (b, p, q) = (params.b, params.p, params.q);
        let width = (1.0 + 2.0 * b) / 4.0;
        for i in 0..4 {
            let x = (i as f64 + 0.5) / 4.0;
            let mut band = 0.0;
            for j in 0..4 {
                let out_lo = -b + j as f64 * width;
                let overlap = ((out_lo + width).min(x + b) - out_lo.max(x - b)).max(0.0);
                band += p * overlap;
                let _ = q;
            }
            assert_abs_diff_eq!(band, params.band_mass(), epsilon = 1e-9);
        }
    }

    #[test]
    fn transition_matches_monte_carlo() {
        let params = PerturbParams::new(0.25, 10.0).unwrap();
        let m = 4;
        let mat = transition_matrix(&params, m, m);
        let mut rng = RngStream::new(21).rng();
        let trials = 200_000;
        for i in 0..m {
            let x = (i as f64 + 0.5) / m as f64;
            let mut counts = vec![0.0; m];
            for _ in 0..trials {
                let y = piecewise_perturb(x, &params, &mut rng).unwrap();
                let j = (((y + params.b) / (1.0 + 2.0 * params.b)) * m as f64) as usize;
                counts[j.min(m - 1)] += 1.0;
            }
            for j in 0..m {
                let expect = mat.entry(j, i);
                let se = (expect * (1.0 - expect) / trials as f64).sqrt();
                assert!(
                    (counts[j] / trials as f64 - expect).abs() <= 4.0 * se,
                    "column {i}, row {j}"
                );
            }
        }
    }

    fn identity_matrix(m: usize) -> TransitionMatrix {
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            data[i * m + i] = 1.0;
        }
        TransitionMatrix::from_entries(m, m, data).unwrap()
    }

    #[test]
    fn em_step_identity_channel() {
        let m = 4;
        let counts = vec![10.0, 20.0, 30.0, 40.0];
        let state = em_step(&EmState::init(m), &counts, &identity_matrix(m)).unwrap();
        for i in 0..m {
            assert_abs_diff_eq!(state.f[i], counts[i] / 100.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn em_step_uninformative_channel() {
        let params = PerturbParams::new(0.3, 1.0).unwrap();
        let mat = transition_matrix(&params, 4, 4);
        let counts = vec![5.0, 50.0, 30.0, 15.0];
        let mut state = EmState::init(4);
        for _ in 0..10 {
            state = em_step(&state, &counts, &mat).unwrap();
            for &f in &state.f {
                assert_abs_diff_eq!(f, 0.25, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn em_log_likelihood_monotone() {
        let mut rng = RngStream::new(33).rng();
        for _ in 0..20 {
            let m = rng.gen_range(4..9);
            let mut data = vec![0.0; m * m];
            for i in 0..m {
                let col: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() + 1e-3).collect();
                let s: f64 = col.iter().sum();
                for j in 0..m {
                    data[j * m + i] = col[j] / s;
                }
            }
            let mat = TransitionMatrix::from_entries(m, m, data).unwrap();
            let counts: Vec<f64> = (0..m).map(|_| rng.gen_range(0..500) as f64).collect();
            if counts.iter().sum::<f64>() == 0.0 {
                continue;
            }
            let mut state = EmState::init(m);
            let mut prev = f64::NEG_INFINITY;
            for _ in 0..100 {
                state = em_step(&state, &counts, &mat).unwrap();
                let ll = log_likelihood(&state.f, &counts, &mat);
                assert!(ll >= prev - 1e-10, "log-likelihood dropped: {prev} -> {ll}");
                prev = ll;
            }
        }
    }

    #[test]
    fn ems_uniform_fixed_point() {
        let f = Histogram::uniform(8);
        let g = ems_smooth(&f);
        for (&a, &b) in f.freqs().iter().zip(g.freqs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn ems_boundary_rule() {
        // Gather weights (1/2, 1/4) renormalized at the edge, then exact mass
        // restoration: [1,0,0,0] -> [2/3, 1/4, 0, 0] -> [8/11, 3/11, 0, 0].
        let f = Histogram::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let g = ems_smooth(&f);
        assert_abs_diff_eq!(g.freqs()[0], 8.0 / 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.freqs()[1], 3.0 / 11.0, epsilon = 1e-12);
        assert_eq!(&g.freqs()[2..], &[0.0, 0.0]);
    }

    #[test]
    fn ems_mass_conserved() {
        let mut rng = RngStream::new(7).rng();
        for _ in 0..200 {
            let m = rng.gen_range(2..40);
            let w: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
            let f = Histogram::from_weights(w).unwrap();
            let g = ems_smooth(&f);
            assert_abs_diff_eq!(g.freqs().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn adaptive_uniform_fixed_point() {
        let cfg = SmootherConfig::default();
        for t in [0usize, 17, 50, 99] {
            let f = Histogram::uniform(16);
            let g = adaptive_smooth_step(&f, t, 5.0, &cfg).unwrap();
            for (&a, &b) in f.freqs().iter().zip(g.freqs()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn adaptive_local_max_shrinks() {
        let cfg = SmootherConfig { radius: 1, ..Default::default() };
        let f = Histogram::new(vec![0.1, 0.7, 0.1, 0.05, 0.05]).unwrap();
        for t in [0usize, 25, 75] {
            for sigma1 in [1e-3, 1.0, 1e9] {
                let g = adaptive_smooth_step(&f, t, sigma1, &cfg).unwrap();
                assert!(g.freqs()[1] <= 0.7 + 1e-12);
            }
        }
    }

    #[test]
    fn adaptive_flat_frequency_kernel_matches_dense_oracle() {
        // With sigma1 enormous the frequency kernel vanishes; compare the
        // banded implementation against an independent dense position-kernel
        // balance.
        let cfg = SmootherConfig { radius: 2, ..Default::default() };
        let f = Histogram::new(vec![0.05, 0.3, 0.15, 0.2, 0.1, 0.2]).unwrap();
        let t = 31;
        let got = adaptive_smooth_step(&f, t, 1e300, &cfg).unwrap();

        let m = 6;
        let sigma2 = cfg.sigma2(t);
        let mut k = vec![vec![0.0f64; m]; m];
        for i in 0..m {
            for j in 0..m {
                let d = i as f64 - j as f64;
                if d.abs() <= cfg.radius as f64 {
                    k[i][j] = (-d * d / (2.0 * sigma2 * sigma2)).exp();
                }
            }
        }
        for _ in 0..500 {
            for row in k.iter_mut() {
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
            }
            let mut col = vec![0.0; m];
            for row in &k {
                for (j, v) in row.iter().enumerate() {
                    col[j] += v;
                }
            }
            if col.iter().all(|c| (c - 1.0).abs() < 1e-13) {
                break;
            }
            for row in k.iter_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v /= col[j];
                }
            }
        }
        for row in k.iter_mut() {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        let expect: Vec<f64> = (0..m)
            .map(|i| (0..m).map(|j| k[i][j] * f.freqs()[j]).sum())
            .collect();
        for (a, b) in got.freqs().iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn adaptive_mass_exact() {
        let mut rng = RngStream::new(8).rng();
        let cfg = SmootherConfig::default();
        for _ in 0..200 {
            let m = rng.gen_range(8..33);
            let w: Vec<f64> = (0..m).map(|_| rng.gen::<f64>().powi(3)).collect();
            let f = Histogram::from_weights(w).unwrap();
            let sigma1 = 10f64.powf(rng.gen_range(-3.0..7.0));
            let g = adaptive_smooth_step(&f, rng.gen_range(0..200), sigma1, &cfg).unwrap();
            assert_abs_diff_eq!(g.freqs().iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn sigma1_literal_reference_value() {
        // The double sum telescopes to m * sum(counts); the literal
        // computation must agree.
        let params = PerturbParams::new(0.2, 5.0).unwrap();
        let mat = transition_matrix(&params, 8, 8);
        let counts = vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let cfg = SmootherConfig::default();
        let got = sigma1_reference(&counts, &mat, &cfg);
        assert_abs_diff_eq!(got, 8.0 * 31.0, epsilon = 1e-6);
        let normalized = sigma1_reference(
            &counts,
            &mat,
            &SmootherConfig { normalize_sigma1: true, ..cfg },
        );
        assert_abs_diff_eq!(normalized, 8.0, epsilon = 1e-9);
    }

    #[test]
    fn degraded_emas_converges_geometrically() {
        // Frozen sigma2 (fixed t) and flat frequency kernel: the iteration is
        // a fixed smooth map; distance to the fixed point shrinks at an eventually
        // constant ratio below one.
        let m = 16;
        let params = PerturbParams::new(0.2, 5.0).unwrap();
        let mat = transition_matrix(&params, m, m);
        let mut rng = RngStream::new(44).rng();
        let mut counts = vec![0.0; m];
        for _ in 0..20_000 {
            let x: f64 = rng.gen();
            counts[((x * m as f64) as usize).min(m - 1)] += 1.0;
        }
        let cfg = SmootherConfig { radius: 2, ..Default::default() };
        let run = |steps: usize| -> Vec<Vec<f64>> {
            let mut state = EmState::init(m);
            let mut hist = Vec::with_capacity(steps);
            for _ in 0..steps {
                let next = em_step(&state, &counts, &mat).unwrap();
                let f = adaptive_smooth_vec(&next.f, 10, 1e9, &cfg);
                state = EmState { f: f.clone(), ..next };
                hist.push(f);
            }
            hist
        };
        let fstar = run(6000).pop().unwrap();
        let hist = run(400);
        let dist = |f: &[f64]| -> f64 {
            f.iter().zip(&fstar).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        };
        let mut ratios = Vec::new();
        for t in 250..280 {
            let (d0, d1) = (dist(&hist[t]), dist(&hist[t + 1]));
            if d0 > 1e-12 {
                ratios.push(d1 / d0);
            }
        }
        assert!(ratios.len() >= 20, "converged too fast to measure");
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        for r in &ratios {
            assert!(*r < 1.0, "ratio {r} >= 1");
            assert!((r - mean).abs() < 0.05 * mean, "ratio {r} deviates from {mean}");
        }
    }

    #[test]
    fn norm_sub_already_valid() {
        let h = norm_sub(&[0.25, 0.25, 0.25, 0.25]);
        assert_eq!(h.freqs(), &[0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn norm_sub_hand_case() {
        let h = norm_sub(&[0.6, 0.6, -0.2]);
        assert_abs_diff_eq!(h.freqs()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(h.freqs()[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(h.freqs()[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn norm_sub_single_mass() {
        let h = norm_sub(&[2.0, 0.0, 0.0, 0.0]);
        assert_eq!(h.freqs(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn norm_sub_preserves_order_of_survivors() {
        let h = norm_sub(&[0.9, 0.5, 0.7, -0.3]);
        let f = h.freqs();
        assert!(f[0] > f[2] && f[2] > f[1]);
    }

    #[test]
    fn norm_sub_deficit_shifts_up() {
        let h = norm_sub(&[0.2, 0.2]);
        assert_eq!(h.freqs(), &[0.5, 0.5]);
    }

    #[test]
    fn flip_aggregate_noiseless() {
        let sc = ScfoParams::flip(4, 1, 0.0).unwrap();
        let bins = vec![0, 0, 1, 3];
        let batch = flip_encode_batch(&bins, &sc, &RngStream::new(1)).unwrap();
        let est = flip_aggregate(&batch, &sc, 4).unwrap();
        assert_abs_diff_eq!(est[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(est[1], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(est[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est[3], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn flip_aggregate_all_zero_rows() {
        // All-zero bits: every chunk estimate equals -(s+1) q / (1-2q).
        let sc = ScfoParams::flip(4, 1, 0.25).unwrap();
        let mut fb = crate::randomizer::FlipBatch::with_capacity(4, 8);
        for _ in 0..8 {
            fb.push_row(&[false; 4]);
        }
        let est = flip_aggregate(&ReportBatch::Flip(fb), &sc, 4).unwrap();
        let expect = -(2.0 * 0.25) / 0.5;
        for e in est {
            assert_abs_diff_eq!(e, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn flip_aggregate_rejects_half_flip() {
        let sc = ScfoParams { c: 4, s: 1, q_flip: 0.5 };
        let batch = flip_encode_batch(&[0], &ScfoParams::flip(4, 1, 0.1).unwrap(), &RngStream::new(0)).unwrap();
        assert!(matches!(flip_aggregate(&batch, &sc, 1), Err(Error::SingularAggregator)));
    }

    #[test]
    fn pure_aggregate_noiseless() {
        let sc = ScfoParams::pure(4, 0).unwrap();
        let bins = vec![0, 0, 1, 3];
        let batch = pure_encode_batch(&bins, &sc, &RngStream::new(2)).unwrap();
        let est = pure_aggregate(&batch, &sc, 4).unwrap();
        assert_eq!(est, vec![0.5, 0.25, 0.0, 0.25]);
    }

    #[test]
    fn pure_aggregate_forced_dummies_formula() {
        // All messages in chunk 1: estimate = (count - ns/c)/n.
        let sc = ScfoParams::pure(4, 2).unwrap();
        let batch = ReportBatch::Pure { c: 4, values: vec![1; 9] };
        let est = pure_aggregate(&batch, &sc, 3).unwrap();
        assert_abs_diff_eq!(est[0], (9.0 - 3.0 * 2.0 / 4.0) / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est[1], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn aggregators_unbiased_monte_carlo() {
        // 200 trials at a small scale: per-chunk mean within 3 standard errors.
        let c = 8;
        let n = 2_000;
        let mut rng = RngStream::new(55).rng();
        let bins: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let mut truth = vec![0.0; c];
        for &b in &bins {
            truth[b] += 1.0 / n as f64;
        }
        let budget = crate::privacy::PrivacyBudget::new(1.0, 1e-5, n).unwrap();
        let sc_f = crate::privacy::flip_params(&budget, c).unwrap();
        let sc_p = crate::privacy::pure_params(&budget, c).unwrap();
        let trials = 200;
        let mut sums_f = vec![0.0; c];
        let mut sums_p = vec![0.0; c];
        let mut sq_f = vec![0.0; c];
        let mut sq_p = vec![0.0; c];
        for t in 0..trials {
            let stream = RngStream::new(700).substream(t as u64);
            let fb = flip_encode_batch(&bins, &sc_f, &stream.substream(0)).unwrap();
            let ef = flip_aggregate(&fb, &sc_f, n).unwrap();
            let pb = pure_encode_batch(&bins, &sc_p, &stream.substream(1)).unwrap();
            let ep = pure_aggregate(&pb, &sc_p, n).unwrap();
            for j in 0..c {
                sums_f[j] += ef[j];
                sq_f[j] += ef[j] * ef[j];
                sums_p[j] += ep[j];
                sq_p[j] += ep[j] * ep[j];
            }
        }
        for j in 0..c {
            for (sums, sq, name) in [(&sums_f, &sq_f, "flip"), (&sums_p, &sq_p, "pure")] {
                let mean = sums[j] / trials as f64;
                let var = (sq[j] / trials as f64 - mean * mean).max(0.0);
                let se = (var / trials as f64).sqrt();
                assert!(
                    (mean - truth[j]).abs() <= 3.0 * se + 1e-12,
                    "{name} chunk {j}: mean {mean} vs truth {} (se {se})",
                    truth[j]
                );
            }
        }
    }

    #[test]
    fn scfo_spreading() {
        let h = scfo_to_histogram(&[1.0, 0.0], 4).unwrap();
        assert_eq!(h.freqs(), &[0.5, 0.5, 0.0, 0.0]);
        let h = scfo_to_histogram(&[0.7, 0.5], 4).unwrap();
        assert_abs_diff_eq!(h.freqs()[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(h.freqs()[1], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(h.freqs()[2], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(h.freqs()[3], 0.2, epsilon = 1e-12);
        assert!(scfo_to_histogram(&[0.5, 0.5], 5).is_err());
    }

    #[test]
    fn scfo_identity_resolution() {
        let h = scfo_to_histogram(&[0.25, 0.25, 0.25, 0.25], 4).unwrap();
        assert_eq!(h.freqs(), &[0.25; 4]);
    }

    #[test]
    fn emas_terminates_on_degenerate_channel() {
        let params = PerturbParams::new(0.3, 1.0).unwrap();
        let mut rng = RngStream::new(66).rng();
        let values: Vec<f64> = (0..2000)
            .map(|_| piecewise_perturb(rng.gen(), &params, &mut rng).unwrap())
            .collect();
        let batch = ReportBatch::Piecewise { b: params.b, values };
        let cfg = SmootherConfig { tau: 2000, ..Default::default() };
        let h = emas_estimate(&batch, &params, 16, &cfg).unwrap();
        assert_eq!(h.m(), 16);
    }

    #[test]
    fn estimate_rejects_out_of_domain_reports() {
        let params = PerturbParams::new(0.2, 5.0).unwrap();
        let batch = ReportBatch::Piecewise { b: params.b, values: vec![0.5, 1.9] };
        assert!(emas_estimate(&batch, &params, 8, &SmootherConfig::default()).is_err());
    }

    #[test]
    fn aggregators_are_shuffle_invariant() {
        let sc = ScfoParams::pure(4, 2).unwrap();
        let bins = vec![0, 1, 2, 3, 1, 1];
        let batch = pure_encode_batch(&bins, &sc, &RngStream::new(9)).unwrap();
        let mut shuffled = batch.clone();
        crate::randomizer::shuffle(&mut shuffled, &mut RngStream::new(10).rng());
        assert_eq!(
            pure_aggregate(&batch, &sc, 6).unwrap(),
            pure_aggregate(&shuffled, &sc, 6).unwrap()
        );
    }
}

//! Interactive browser demo. Three operations, each returning JSON for the
//! page to render: randomizer parameter optimization with the output density,
//! a small end-to-end estimation run, and a poisoning-attack run with RIAR.
//!
//! Build with `wasm-pack build crates/demo --target web` and serve `www/`.

use serde_json::json;
use shuffledp::aggregate::{emas_estimate, ems_estimate, flip_aggregate, pure_aggregate,
    scfo_to_histogram, SmootherConfig};
use shuffledp::attack::{craft_flip_reports, craft_piecewise_reports, craft_pure_reports,
    ideal_distribution, riar, AttackConfig};
use shuffledp::hist::{bin_index, build_histogram, normalize_domain, sample_synthetic_normal,
    DomainSpec};
use shuffledp::metrics::wasserstein;
use shuffledp::mi::{mi_upper_bound, optimize_params, prior_upper_bound, OptimizerConfig};
use shuffledp::privacy::{asp_bound_lhs, flip_params, pure_params, ssw_calibrate, PrivacyBudget};
use shuffledp::randomizer::{flip_encode_batch, piecewise_perturb_batch, pure_encode_batch,
    shuffle, sw_params, PerturbParams, ReportBatch};
use shuffledp::rng::RngStream;
use wasm_bindgen::prelude::wasm_bindgen;

fn err_json(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

/// Optimize the piecewise randomizer for a budget and describe its output
/// density under uniform input (three segments over `[-b, 1+b]`).
#[wasm_bindgen]
pub fn optimize_json(eps: f64, delta: f64, n: usize) -> String {
    let budget = match PrivacyBudget::new(eps, delta, n) {
        Ok(b) => b,
        Err(e) => return err_json(e),
    };
    let params = match optimize_params(&budget, &OptimizerConfig::default()) {
        Ok(p) => p,
        Err(e) => return err_json(e),
    };
    let ssw = ssw_calibrate(&budget)
        .and_then(sw_params)
        .ok();
    let bound = mi_upper_bound(params.b, params.k).ok();
    let (b, p, q) = (params.b, params.p, params.q);
    // Output pdf for uniform input: linear ramps on [-b, 0] and [1, 1+b],
    // near-flat middle; the page draws the piecewise-linear outline.
    let mid = 2.0 * b * p + (1.0 - 2.0 * b).max(0.0) * q;
    let outline = json!([
        {"x": -b, "y": q},
        {"x": 0.0, "y": if b <= 0.5 { p * b + q * (1.0 - b) } else { mid }},
        {"x": b.min(0.5), "y": mid},
        {"x": (1.0 - b).max(0.5), "y": mid},
        {"x": 1.0, "y": if b <= 0.5 { p * b + q * (1.0 - b) } else { mid }},
        {"x": 1.0 + b, "y": q},
    ]);
    json!({
        "asp": {"b": b, "k": params.k, "p": p, "q": q},
        "ssw": ssw.map(|s| json!({"b": s.b, "k": s.k, "p": s.p, "q": s.q})),
        "i_u": bound.map(|m| m.i_u),
        "prior_bound": prior_upper_bound(params.b, params.k).ok(),
        "constraint_lhs": asp_bound_lhs(eps, params.b, params.k, n).ok(),
        "delta": delta,
        "density_outline": outline,
    })
    .to_string()
}

fn synthetic_dataset(n: usize, m: usize, seed: u64) -> Result<shuffledp::Dataset, shuffledp::Error> {
    let raw = sample_synthetic_normal(n, 0.0, 10.0, &RngStream::new(seed).substream(1))?;
    normalize_domain(&raw, &DomainSpec::new(-40.0, 40.0, m)?)
}

fn estimate_pipeline(
    protocol: &str,
    eps: f64,
    n: usize,
    m: usize,
    seed: u64,
    attack: Option<&AttackConfig>,
) -> Result<(shuffledp::Histogram, shuffledp::Histogram, serde_json::Value), shuffledp::Error> {
    let budget = PrivacyBudget::new(eps, 1e-5, n)?;
    let data = synthetic_dataset(n, m, seed)?;
    let truth = build_histogram(&data, m)?;
    let stream = RngStream::new(seed);
    let noise = stream.substream(2);
    let n_fake = attack.map_or(0, |a| a.fake_count(n));
    let honest = &data.values()[..n - n_fake];
    // Keep the browser responsive: cap the iteration budget.
    let smoother = SmootherConfig { tau: 2_000, ..Default::default() };

    let (estimate, resolved) = match protocol {
        "asp" | "ssw" => {
            let params = if protocol == "asp" {
                optimize_params(&budget, &OptimizerConfig::default())?
            } else {
                sw_params(ssw_calibrate(&budget)?)?
            };
            let mut batch = piecewise_perturb_batch(honest, &params, &noise)?;
            if let Some(atk) = attack {
                let fakes =
                    craft_piecewise_reports(atk, &params, n_fake, &mut stream.substream(3).rng());
                if let (ReportBatch::Piecewise { values, .. }, ReportBatch::Piecewise { values: fv, .. }) =
                    (&mut batch, &fakes)
                {
                    values.extend_from_slice(fv);
                }
            }
            shuffle(&mut batch, &mut stream.substream(4).rng());
            let est = if protocol == "asp" {
                emas_estimate(&batch, &params, m, &smoother)?
            } else {
                ems_estimate(&batch, &params, m, &smoother)?
            };
            (est, json!({"b": params.b, "k": params.k, "p": params.p, "q": params.q}))
        }
        "flip" | "pure" => {
            let c = 16.min(m);
            let flip = protocol == "flip";
            let sc = if flip { flip_params(&budget, c)? } else { pure_params(&budget, c)? };
            let bins: Vec<usize> = honest.iter().map(|&v| bin_index(v, c)).collect();
            let mut batch = if flip {
                flip_encode_batch(&bins, &sc, &noise)?
            } else {
                pure_encode_batch(&bins, &sc, &noise)?
            };
            if let Some(atk) = attack {
                let fakes = if flip {
                    craft_flip_reports(atk, &sc, n_fake)
                } else {
                    craft_pure_reports(atk, &sc, n_fake, &mut stream.substream(3).rng())
                };
                match (&mut batch, fakes) {
                    (ReportBatch::Flip(fb), ReportBatch::Flip(extra)) => fb.append(&extra),
                    (ReportBatch::Pure { values, .. }, ReportBatch::Pure { values: fv, .. }) => {
                        values.extend_from_slice(&fv)
                    }
                    _ => unreachable!(),
                }
            }
            shuffle(&mut batch, &mut stream.substream(4).rng());
            let raw = if flip {
                flip_aggregate(&batch, &sc, n)?
            } else {
                pure_aggregate(&batch, &sc, n)?
            };
            (scfo_to_histogram(&raw, m)?, json!({"c": c, "s": sc.s, "q_flip": sc.q_flip}))
        }
        other => {
            return Err(shuffledp::Error::InvalidParams(format!("unknown protocol `{other}`")))
        }
    };
    Ok((truth, estimate, resolved))
}

/// Run one small end-to-end estimation on a synthetic normal dataset.
#[wasm_bindgen]
pub fn simulate_json(protocol: &str, eps: f64, n: usize, m: usize, seed: u64) -> String {
    if n < 100 || n > 50_000 || m < 8 || m > 128 {
        return err_json("demo bounds: 100 <= n <= 50000, 8 <= m <= 128");
    }
    match estimate_pipeline(protocol, eps, n, m, seed, None) {
        Ok((truth, estimate, resolved)) => {
            let w1 = wasserstein(&truth, &estimate).unwrap_or(f64::NAN);
            json!({
                "truth": truth.freqs(),
                "estimate": estimate.freqs(),
                "w1": w1,
                "params": resolved,
            })
            .to_string()
        }
        Err(e) => err_json(e),
    }
}

/// Run a poisoning attack end to end and report RIAR.
#[wasm_bindgen]
pub fn attack_json(
    protocol: &str,
    eps: f64,
    n: usize,
    m: usize,
    beta: f64,
    target: f64,
    range_divisor: u8,
    seed: u64,
) -> String {
    if n < 100 || n > 50_000 || m < 8 || m > 128 {
        return err_json("demo bounds: 100 <= n <= 50000, 8 <= m <= 128");
    }
    let atk = match AttackConfig::new(beta, vec![target], range_divisor) {
        Ok(a) => a,
        Err(e) => return err_json(e),
    };
    match estimate_pipeline(protocol, eps, n, m, seed, Some(&atk)) {
        Ok((truth, attacked, resolved)) => {
            let ide = match ideal_distribution(&atk.targets, m) {
                Ok(i) => i,
                Err(e) => return err_json(e),
            };
            match riar(&truth, &attacked, &ide) {
                Ok(r) => json!({
                    "truth": truth.freqs(),
                    "attacked": attacked.freqs(),
                    "ideal": ide.freqs(),
                    "riar": r.riar,
                    "w1_attacked_vs_ideal": r.w1_attacked_vs_ideal,
                    "w1_true_vs_ideal": r.w1_true_vs_ideal,
                    "params": resolved,
                })
                .to_string(),
                Err(e) => err_json(e),
            }
        }
        Err(e) => err_json(e),
    }
}

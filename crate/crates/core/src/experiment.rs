//! End-to-end experiment orchestration: config parsing, pipeline assembly
//! (data → randomize → [poison] → shuffle → aggregate → metrics), seeded
//! repetition and report emission.
//!
//! Stream layout: the experiment seed roots a tree of derived streams —
//! dataset synthesis, the compromised-user subset, metric query sampling and
//! one branch per repetition (noise / fake-crafting / shuffling). Paired
//! comparisons across protocols and sweep points follow from reusing the
//! seed: the dataset and the metric queries are protocol-independent.

use crate::aggregate::{
    em_estimate, flip_aggregate, pure_aggregate, scfo_to_histogram, SmootherConfig, Smoother,
};
use crate::attack::{
    craft_flip_reports, craft_piecewise_reports, craft_pure_reports, ideal_distribution, riar,
    AttackConfig, RiarReport,
};
use crate::error::{Error, Result};
use crate::hist::{bin_index, build_histogram, load_dataset_csv, normalize_domain,
    sample_synthetic_normal, ColumnSel, Dataset, DomainSpec, Histogram};
use crate::metrics::{
    message_complexity, quantile_error, range_query_error, wasserstein, AlphaErr, MessageProtocol,
    MetricReport,
};
use crate::mi::{optimize_params, OptimizerConfig};
use crate::privacy::{flip_params, pure_params, ssw_calibrate, PrivacyBudget};
use crate::randomizer::{
    flip_encode_batch, piecewise_perturb_batch, pure_encode_batch, shuffle, sw_params,
    PerturbParams, ReportBatch, ScfoParams,
};
use crate::rng::RngStream;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

const STREAM_DATASET: u64 = 1;
const STREAM_SUBSET: u64 = 2;
const STREAM_METRICS: u64 = 3;
const STREAM_REPS: u64 = 4;

/// Protocols runnable by the experiment pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Asp,
    Ssw,
    /// The square-wave mechanism deployed purely locally (no amplification);
    /// the Table-2-style LDP comparator.
    SwLdp,
    Flip,
    Pure,
}

impl Protocol {
    pub fn is_piecewise(&self) -> bool {
        matches!(self, Protocol::Asp | Protocol::Ssw | Protocol::SwLdp)
    }
}

/// Dataset source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    Normal {
        n: usize,
        #[serde(default)]
        mean: f64,
        #[serde(default = "default_std")]
        std: f64,
        #[serde(default = "default_lo")]
        lo: f64,
        #[serde(default = "default_hi")]
        hi: f64,
    },
    Csv {
        path: String,
        column: ColumnSel,
        lo: f64,
        hi: f64,
    },
}

fn default_std() -> f64 {
    10.0
}
fn default_lo() -> f64 {
    -40.0
}
fn default_hi() -> f64 {
    40.0
}

/// Metric evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Range-query window fractions.
    pub alphas: Vec<f64>,
    /// Quantile levels.
    pub quantiles: Vec<f64>,
    /// Sampled range-query start positions per alpha.
    pub range_queries: usize,
    /// Report W1 multiplied by 1/m (domain units) instead of raw CDF sums.
    pub w1_domain_units: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            alphas: vec![0.2, 0.4],
            quantiles: (1..=19).map(|i| i as f64 * 0.05).collect(),
            range_queries: 100,
            w1_domain_units: false,
        }
    }
}

/// A full experiment description. Optional fields receive defaults during
/// [`ExperimentConfig::normalize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub eps: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub dataset: DatasetConfig,
    /// Estimate bins; defaults to 256 for synthetic data and 512 for CSV.
    #[serde(default)]
    pub m: Option<usize>,
    /// SCFO chunk count; required for Flip/Pure.
    #[serde(default)]
    pub c: Option<usize>,
    #[serde(default)]
    pub smoother: SmootherConfig,
    #[serde(default)]
    pub attack: Option<AttackConfig>,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

fn default_delta() -> f64 {
    1e-5
}
fn default_reps() -> usize {
    20
}

pub const SUPPORTED_CHUNKS: [usize; 3] = [16, 32, 64];

impl ExperimentConfig {
    /// Validate and fill defaults, returning the normalized config.
    pub fn normalize(mut self) -> Result<Self> {
        if !(self.eps > 0.0) {
            return Err(Error::config("eps", format!("need eps > 0, got {}", self.eps)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", format!("need delta in (0,1), got {}", self.delta)));
        }
        if self.repetitions < 1 {
            return Err(Error::config("repetitions", "need repetitions >= 1"));
        }
        let m = self.m.unwrap_or(match self.dataset {
            DatasetConfig::Normal { .. } => 256,
            DatasetConfig::Csv { .. } => 512,
        });
        if m < 2 {
            return Err(Error::config("m", format!("need m >= 2, got {m}")));
        }
        self.m = Some(m);
        match self.dataset {
            DatasetConfig::Normal { n, std, lo, hi, .. } => {
                if n < 2 {
                    return Err(Error::config("dataset.n", format!("need n >= 2, got {n}")));
                }
                if !(std > 0.0) {
                    return Err(Error::config("dataset.std", format!("need std > 0, got {std}")));
                }
                if !(lo < hi) {
                    return Err(Error::config("dataset.lo", format!("need lo < hi, got [{lo}, {hi}]")));
                }
            }
            DatasetConfig::Csv { ref path, lo, hi, .. } => {
                if path.is_empty() {
                    return Err(Error::config("dataset.path", "empty path"));
                }
                if !(lo < hi) {
                    return Err(Error::config("dataset.lo", format!("need lo < hi, got [{lo}, {hi}]")));
                }
            }
        }
        match self.protocol {
            Protocol::Flip | Protocol::Pure => {
                let c = self
                    .c
                    .ok_or_else(|| Error::config("c", "SCFO protocols need a chunk count"))?;
                if !SUPPORTED_CHUNKS.contains(&c) {
                    return Err(Error::config(
                        "c",
                        format!("c = {c} not in supported set {SUPPORTED_CHUNKS:?}"),
                    ));
                }
                if m % c != 0 {
                    return Err(Error::config("c", format!("c = {c} must divide m = {m}")));
                }
            }
            _ => {}
        }
        if let Some(ref atk) = self.attack {
            AttackConfig::new(atk.beta, atk.targets.clone(), atk.range_divisor)
                .map_err(|e| Error::config("attack", e.to_string()))?;
        }
        for (i, &a) in self.metrics.alphas.iter().enumerate() {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::config(format!("metrics.alphas[{i}]"), format!("alpha {a} outside (0,1)")));
            }
        }
        for (i, &q) in self.metrics.quantiles.iter().enumerate() {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::config(format!("metrics.quantiles[{i}]"), format!("quantile {q} outside (0,1)")));
            }
        }
        self.smoother
            .validate()
            .map_err(|e| Error::config("smoother", e.to_string()))?;
        Ok(self)
    }

    pub fn resolved_m(&self) -> usize {
        self.m.expect("config not normalized")
    }
}

/// Parse and normalize a JSON experiment config.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| Error::config(format!("$ (line {})", e.line()), e.to_string()))?;
    cfg.normalize()
}

/// Calibrated per-protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ResolvedParams {
    Piecewise {
        /// Local budget, where one exists (SSW calibration / SW-LDP).
        eps_l: Option<f64>,
        b: f64,
        k: f64,
        p: f64,
        q: f64,
    },
    Scfo { c: usize, s: usize, q_flip: Option<f64> },
}

/// RIAR outcome for one crafted injection range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiarOutcome {
    /// Injection divisor for piecewise protocols; None for SCFOs.
    pub range_divisor: Option<u8>,
    #[serde(flatten)]
    pub report: RiarReport,
}

/// Per-repetition record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub metrics: MetricReport,
    pub riar: Option<Vec<RiarOutcome>>,
}

/// One aggregate row (mean or standard deviation across repetitions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub w1: f64,
    pub quantile_err: f64,
    pub range_query: Vec<AlphaErr>,
    /// Per-divisor RIAR aggregate, when an attack ran.
    pub riar: Option<Vec<(Option<u8>, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: AggregateRow,
    pub std: AggregateRow,
    /// Smallest per-divisor mean RIAR (the strongest injection range).
    pub riar_min: Option<f64>,
}

/// Full experiment output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub protocol: Protocol,
    pub eps: f64,
    pub delta: f64,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub resolved_params: ResolvedParams,
    pub messages_per_user: f64,
    pub repetitions: Vec<RepRecord>,
    pub aggregate: Aggregate,
    pub wall_time_secs: f64,
}

fn realize_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let stream = RngStream::new(cfg.seed).substream(STREAM_DATASET);
    match &cfg.dataset {
        DatasetConfig::Normal { n, mean, std, lo, hi } => {
            let raw = sample_synthetic_normal(*n, *mean, *std, &stream)?;
            let spec = DomainSpec::new(*lo, *hi, cfg.resolved_m())?;
            normalize_domain(&raw, &spec)
        }
        DatasetConfig::Csv { path, column, lo, hi } => {
            let spec = DomainSpec::new(*lo, *hi, cfg.resolved_m())?;
            load_dataset_csv(path, column, &spec)
        }
    }
}

enum ProtocolMachinery {
    Piecewise { params: PerturbParams, smoother: Smoother },
    Scfo { sc: ScfoParams, flip: bool },
}

fn resolve_protocol(cfg: &ExperimentConfig, n: usize) -> Result<(ProtocolMachinery, ResolvedParams, f64)> {
    let budget = PrivacyBudget::new(cfg.eps, cfg.delta, n)?;
    match cfg.protocol {
        Protocol::Asp => {
            let params = optimize_params(&budget, &OptimizerConfig::default())?;
            let resolved = ResolvedParams::Piecewise {
                eps_l: None,
                b: params.b,
                k: params.k,
                p: params.p,
                q: params.q,
            };
            Ok((
                ProtocolMachinery::Piecewise { params, smoother: Smoother::Adaptive },
                resolved,
                message_complexity(MessageProtocol::Piecewise, None),
            ))
        }
        Protocol::Ssw => {
            let eps_l = ssw_calibrate(&budget)?;
            let params = sw_params(eps_l)?;
            let resolved = ResolvedParams::Piecewise {
                eps_l: Some(eps_l),
                b: params.b,
                k: params.k,
                p: params.p,
                q: params.q,
            };
            Ok((
                ProtocolMachinery::Piecewise { params, smoother: Smoother::Binomial },
                resolved,
                message_complexity(MessageProtocol::Piecewise, None),
            ))
        }
        Protocol::SwLdp => {
            let params = sw_params(cfg.eps)?;
            let resolved = ResolvedParams::Piecewise {
                eps_l: Some(cfg.eps),
                b: params.b,
                k: params.k,
                p: params.p,
                q: params.q,
            };
            Ok((
                ProtocolMachinery::Piecewise { params, smoother: Smoother::Binomial },
                resolved,
                message_complexity(MessageProtocol::Piecewise, None),
            ))
        }
        Protocol::Flip | Protocol::Pure => {
            let c = cfg.c.expect("config not normalized");
            let flip = cfg.protocol == Protocol::Flip;
            let sc = if flip { flip_params(&budget, c)? } else { pure_params(&budget, c)? };
            let resolved = ResolvedParams::Scfo {
                c,
                s: sc.s,
                q_flip: if flip { Some(sc.q_flip) } else { None },
            };
            let msgs = message_complexity(MessageProtocol::Scfo, Some(&sc));
            Ok((ProtocolMachinery::Scfo { sc, flip }, resolved, msgs))
        }
    }
}

fn metric_report(
    truth: &Histogram,
    estimate: &Histogram,
    cfg: &ExperimentConfig,
    messages: f64,
) -> Result<MetricReport> {
    let metric_stream = RngStream::new(cfg.seed).substream(STREAM_METRICS);
    let mut range_query = Vec::with_capacity(cfg.metrics.alphas.len());
    for (i, &alpha) in cfg.metrics.alphas.iter().enumerate() {
        // A fresh generator per alpha keeps queries paired across protocols
        // and repetitions.
        let mut rng = metric_stream.substream(i as u64).rng();
        let err = range_query_error(truth, estimate, alpha, cfg.metrics.range_queries, &mut rng)?;
        range_query.push(AlphaErr { alpha, err });
    }
    let mut w1 = wasserstein(truth, estimate)?;
    if cfg.metrics.w1_domain_units {
        w1 /= truth.m() as f64;
    }
    Ok(MetricReport {
        range_query,
        quantile_err: quantile_error(truth, estimate, &cfg.metrics.quantiles)?,
        w1,
        messages_per_user: messages,
    })
}

/// Run one configured experiment: repetition `r` draws its randomizer noise
/// from the stream `(seed, r)` branch; the dataset is fixed across
/// repetitions.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let started = Instant::now();
    let cfg = cfg.clone().normalize()?;
    let m = cfg.resolved_m();
    let data = realize_dataset(&cfg)?;
    let n = data.n();
    let truth = build_histogram(&data, m)?;
    let (machinery, resolved, messages) = resolve_protocol(&cfg, n)?;

    // Honest subset under attack: a seeded permutation prefix.
    let attack = cfg.attack.clone();
    let (honest_values, n_fake, f_ide) = match &attack {
        None => (data.values().to_vec(), 0usize, None),
        Some(atk) => {
            let n_fake = atk.fake_count(n);
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = RngStream::new(cfg.seed).substream(STREAM_SUBSET).rng();
            order.shuffle(&mut rng);
            let honest: Vec<f64> = order[..n - n_fake]
                .iter()
                .map(|&i| data.values()[i])
                .collect();
            (honest, n_fake, Some(ideal_distribution(&atk.targets, m)?))
        }
    };

    let rep_root = RngStream::new(cfg.seed).substream(STREAM_REPS);
    let mut repetitions = Vec::with_capacity(cfg.repetitions);
    for r in 0..cfg.repetitions {
        let rep_stream = rep_root.substream(r as u64);
        let noise = rep_stream.substream(0);
        let fake = rep_stream.substream(1);
        let shuffle_stream = rep_stream.substream(2);

        let record = match &machinery {
            ProtocolMachinery::Piecewise { params, smoother, .. } => {
                let honest_batch = piecewise_perturb_batch(&honest_values, params, &noise)?;
                match (&attack, &f_ide) {
                    (None, _) => {
                        let mut batch = honest_batch;
                        shuffle(&mut batch, &mut shuffle_stream.rng());
                        let est = em_estimate(&batch, params, m, m, *smoother, &cfg.smoother)?;
                        RepRecord {
                            metrics: metric_report(&truth, &est, &cfg, messages)?,
                            riar: None,
                        }
                    }
                    (Some(atk), Some(ide)) => {
                        // All three injection ranges, sharing the fake stream
                        // so the divisor comparison is paired.
                        let mut outcomes = Vec::with_capacity(3);
                        let mut first_metrics = None;
                        for divisor in 1u8..=3 {
                            let atk_d = AttackConfig {
                                range_divisor: divisor,
                                ..atk.clone()
                            };
                            let fakes =
                                craft_piecewise_reports(&atk_d, params, n_fake, &mut fake.rng());
                            let mut batch = honest_batch.clone();
                            if let (
                                ReportBatch::Piecewise { values, .. },
                                ReportBatch::Piecewise { values: fv, .. },
                            ) = (&mut batch, &fakes)
                            {
                                values.extend_from_slice(fv);
                            }
                            shuffle(&mut batch, &mut shuffle_stream.rng());
                            let est = em_estimate(&batch, params, m, m, *smoother, &cfg.smoother)?;
                            outcomes.push(RiarOutcome {
                                range_divisor: Some(divisor),
                                report: riar(&truth, &est, ide)?,
                            });
                            if divisor == atk.range_divisor {
                                first_metrics = Some(metric_report(&truth, &est, &cfg, messages)?);
                            }
                        }
                        RepRecord { metrics: first_metrics.unwrap(), riar: Some(outcomes) }
                    }
                    _ => unreachable!(),
                }
            }
            ProtocolMachinery::Scfo { sc, flip } => {
                let bins: Vec<usize> =
                    honest_values.iter().map(|&v| bin_index(v, sc.c)).collect();
                let mut batch = if *flip {
                    flip_encode_batch(&bins, sc, &noise)?
                } else {
                    pure_encode_batch(&bins, sc, &noise)?
                };
                if let Some(atk) = &attack {
                    let fakes = if *flip {
                        craft_flip_reports(atk, sc, n_fake)
                    } else {
                        craft_pure_reports(atk, sc, n_fake, &mut fake.rng())
                    };
                    match (&mut batch, fakes) {
                        (ReportBatch::Flip(fb), ReportBatch::Flip(extra)) => fb.append(&extra),
                        (ReportBatch::Pure { values, .. }, ReportBatch::Pure { values: fv, .. }) => {
                            values.extend_from_slice(&fv)
                        }
                        _ => unreachable!(),
                    }
                }
                shuffle(&mut batch, &mut shuffle_stream.rng());
                let raw = if *flip {
                    flip_aggregate(&batch, sc, n)?
                } else {
                    pure_aggregate(&batch, sc, n)?
                };
                let est = scfo_to_histogram(&raw, m)?;
                let riar_out = match (&attack, &f_ide) {
                    (Some(_), Some(ide)) => Some(vec![RiarOutcome {
                        range_divisor: None,
                        report: riar(&truth, &est, ide)?,
                    }]),
                    _ => None,
                };
                RepRecord { metrics: metric_report(&truth, &est, &cfg, messages)?, riar: riar_out }
            }
        };
        repetitions.push(record);
    }

    let aggregate = aggregate(&repetitions, &cfg.metrics.alphas);
    Ok(RunReport {
        protocol: cfg.protocol,
        eps: cfg.eps,
        delta: cfg.delta,
        n,
        m,
        seed: cfg.seed,
        resolved_params: resolved,
        messages_per_user: messages,
        repetitions,
        aggregate,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(reps: &[RepRecord], alphas: &[f64]) -> Aggregate {
    let collect = |f: &dyn Fn(&RepRecord) -> f64| -> Vec<f64> { reps.iter().map(f).collect() };
    let (w1_m, w1_s) = mean_std(&collect(&|r| r.metrics.w1));
    let (q_m, q_s) = mean_std(&collect(&|r| r.metrics.quantile_err));
    let mut rq_mean = Vec::new();
    let mut rq_std = Vec::new();
    for (i, &alpha) in alphas.iter().enumerate() {
        let (m, s) = mean_std(&collect(&|r| r.metrics.range_query[i].err));
        rq_mean.push(AlphaErr { alpha, err: m });
        rq_std.push(AlphaErr { alpha, err: s });
    }
    let mut riar_mean = None;
    let mut riar_std = None;
    let mut riar_min = None;
    if reps.first().map_or(false, |r| r.riar.is_some()) {
        let k = reps[0].riar.as_ref().unwrap().len();
        let mut means = Vec::with_capacity(k);
        let mut stds = Vec::with_capacity(k);
        for i in 0..k {
            let divisor = reps[0].riar.as_ref().unwrap()[i].range_divisor;
            let vals: Vec<f64> = reps
                .iter()
                .map(|r| r.riar.as_ref().unwrap()[i].report.riar)
                .collect();
            let (m, s) = mean_std(&vals);
            means.push((divisor, m));
            stds.push((divisor, s));
        }
        riar_min = means.iter().map(|&(_, m)| m).min_by(|a, b| a.partial_cmp(b).unwrap());
        riar_mean = Some(means);
        riar_std = Some(stds);
    }
    Aggregate {
        mean: AggregateRow { w1: w1_m, quantile_err: q_m, range_query: rq_mean, riar: riar_mean },
        std: AggregateRow { w1: w1_s, quantile_err: q_s, range_query: rq_std, riar: riar_std },
        riar_min,
    }
}

/// Output format of [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Serialize a run report: JSON verbatim, or CSV with one row per repetition
/// plus `mean` and `std` rows.
pub fn emit_report(report: &RunReport, format: ReportFormat, out: &mut dyn Write) -> Result<()> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, report)?;
            out.write_all(b"\n")?;
        }
        ReportFormat::Csv => {
            let mut header = vec!["rep".to_string(), "w1".into(), "quantile_err".into()];
            for a in &report.repetitions[0].metrics.range_query {
                header.push(format!("range_query_{}", a.alpha));
            }
            header.push("messages_per_user".into());
            let riar_cols: Vec<Option<u8>> = report.repetitions[0]
                .riar
                .as_ref()
                .map(|v| v.iter().map(|o| o.range_divisor).collect())
                .unwrap_or_default();
            for d in &riar_cols {
                match d {
                    Some(d) => header.push(format!("riar_d{d}")),
                    None => header.push("riar".into()),
                }
            }
            writeln!(out, "{}", header.join(","))?;
            let metric_row = |label: String, row: &AggregateRow, out: &mut dyn Write| -> Result<()> {
                let mut cells = vec![label, row.w1.to_string(), row.quantile_err.to_string()];
                for a in &row.range_query {
                    cells.push(a.err.to_string());
                }
                cells.push(report.messages_per_user.to_string());
                if let Some(riar) = &row.riar {
                    for (_, v) in riar {
                        cells.push(v.to_string());
                    }
                }
                writeln!(out, "{}", cells.join(","))?;
                Ok(())
            };
            for (i, rep) in report.repetitions.iter().enumerate() {
                let mut cells = vec![
                    i.to_string(),
                    rep.metrics.w1.to_string(),
                    rep.metrics.quantile_err.to_string(),
                ];
                for a in &rep.metrics.range_query {
                    cells.push(a.err.to_string());
                }
                cells.push(rep.metrics.messages_per_user.to_string());
                if let Some(riar) = &rep.riar {
                    for o in riar {
                        cells.push(o.report.riar.to_string());
                    }
                }
                writeln!(out, "{}", cells.join(","))?;
            }
            metric_row("mean".into(), &report.aggregate.mean, out)?;
            metric_row("std".into(), &report.aggregate.std, out)?;
        }
    }
    Ok(())
}

/// Sweep axis for grid experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Eps,
    Beta,
    Chunks,
}

/// A sweep: the base experiment re-run at each grid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub base: ExperimentConfig,
}

/// Parse a sweep config (JSON).
pub fn parse_sweep_config(path: impl AsRef<Path>) -> Result<SweepConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: SweepConfig =
        serde_json::from_str(&text).map_err(|e| Error::config(format!("$ (line {})", e.line()), e.to_string()))?;
    if cfg.values.is_empty() {
        return Err(Error::config("values", "empty sweep grid"));
    }
    cfg.base.clone().normalize()?;
    Ok(cfg)
}

/// Materialize the config at one sweep grid value.
pub fn sweep_point(cfg: &SweepConfig, value: f64) -> Result<ExperimentConfig> {
    let mut point = cfg.base.clone();
    match cfg.axis {
        SweepAxis::Eps => point.eps = value,
        SweepAxis::Beta => match point.attack.as_mut() {
            Some(atk) => atk.beta = value,
            None => {
                return Err(Error::config("base.attack", "beta sweep needs an attack section"))
            }
        },
        SweepAxis::Chunks => point.c = Some(value as usize),
    }
    point.normalize()
}

/// Run a sweep, writing one report file per grid point (grid value in the
/// filename) into `out_dir`.
pub fn run_sweep(cfg: &SweepConfig, out_dir: impl AsRef<Path>, format: ReportFormat) -> Result<Vec<(f64, RunReport)>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let axis = match cfg.axis {
        SweepAxis::Eps => "eps",
        SweepAxis::Beta => "beta",
        SweepAxis::Chunks => "c",
    };
    let ext = match format {
        ReportFormat::Json => "json",
        ReportFormat::Csv => "csv",
    };
    let mut out = Vec::with_capacity(cfg.values.len());
    for &value in &cfg.values {
        let point = sweep_point(cfg, value)?;
        let report = run_experiment(&point)?;
        let path = dir.join(format!("sweep-{axis}-{value}.{ext}"));
        let mut file = std::fs::File::create(&path)?;
        emit_report(&report, format, &mut file)?;
        out.push((value, report));
    }
    Ok(out)
}

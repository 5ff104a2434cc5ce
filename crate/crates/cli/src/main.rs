//! Command-line front end: parameter calibration, mutual-information bounds,
//! experiment runs, attack evaluation and grid sweeps.
//!
//! Exit codes: 0 on success, 2 on config errors, 3 on infeasible calibration.

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use shuffledp::aggregate::SmootherConfig;
use shuffledp::attack::AttackConfig;
use shuffledp::experiment::{
    emit_report, parse_config, parse_sweep_config, run_experiment, run_sweep, DatasetConfig,
    ExperimentConfig, MetricsConfig, Protocol, ReportFormat,
};
use shuffledp::mi::{mi_upper_bound, optimize_params, prior_upper_bound, OptimizerConfig};
use shuffledp::privacy::{asp_bound_lhs, flip_params, pure_params, ssw_calibrate, PrivacyBudget};
use shuffledp::randomizer::sw_params;
use shuffledp::Error;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "shuffledp", version, about = "Shuffle-DP distribution estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliProtocol {
    Asp,
    Ssw,
    SwLdp,
    Flip,
    Pure,
}

impl From<CliProtocol> for Protocol {
    fn from(p: CliProtocol) -> Protocol {
        match p {
            CliProtocol::Asp => Protocol::Asp,
            CliProtocol::Ssw => Protocol::Ssw,
            CliProtocol::SwLdp => Protocol::SwLdp,
            CliProtocol::Flip => Protocol::Flip,
            CliProtocol::Pure => Protocol::Pure,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CliFormat {
    Json,
    Csv,
}

impl From<CliFormat> for ReportFormat {
    fn from(f: CliFormat) -> ReportFormat {
        match f {
            CliFormat::Json => ReportFormat::Json,
            CliFormat::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Resolve protocol parameters for a privacy budget.
    Calibrate {
        #[arg(long, value_enum)]
        protocol: CliProtocol,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
        #[arg(long)]
        n: usize,
        /// Chunk count (SCFO protocols).
        #[arg(long)]
        c: Option<usize>,
    },
    /// Optimized piecewise parameters with their mutual-information bounds.
    MiBound {
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
        #[arg(long)]
        n: usize,
    },
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: CliFormat,
    },
    /// Run a poisoning attack and report RIAR.
    Attack {
        /// Full experiment config with an `attack` section; overrides the
        /// inline flags below.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, required_unless_present = "config")]
        protocol: Option<CliProtocol>,
        #[arg(long, required_unless_present = "config")]
        eps: Option<f64>,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
        /// Synthetic-normal dataset size for inline use.
        #[arg(long, required_unless_present = "config")]
        n: Option<usize>,
        #[arg(long, required_unless_present = "config")]
        beta: Option<f64>,
        /// Comma-separated target values in [0, 1].
        #[arg(long, value_delimiter = ',', required_unless_present = "config")]
        targets: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1)]
        range_divisor: u8,
        #[arg(long)]
        c: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 20)]
        repetitions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sweep config, one report file per grid value.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: CliFormat,
    },
}

fn write_out(path: &Option<PathBuf>, payload: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, payload)?,
        None => {
            std::io::stdout().write_all(payload.as_bytes())?;
            println!();
        }
    }
    Ok(())
}

fn calibrate(protocol: CliProtocol, eps: f64, delta: f64, n: usize, c: Option<usize>) -> Result<serde_json::Value, Error> {
    let budget = PrivacyBudget::new(eps, delta, n)?;
    Ok(match protocol {
        CliProtocol::Asp => {
            let p = optimize_params(&budget, &OptimizerConfig::default())?;
            json!({"protocol": "asp", "b": p.b, "k": p.k, "p": p.p, "q": p.q})
        }
        CliProtocol::Ssw => {
            let eps_l = ssw_calibrate(&budget)?;
            let p = sw_params(eps_l)?;
            json!({"protocol": "ssw", "eps_l": eps_l, "b": p.b, "k": p.k, "p": p.p, "q": p.q})
        }
        CliProtocol::SwLdp => {
            let p = sw_params(eps)?;
            json!({"protocol": "sw-ldp", "eps_l": eps, "b": p.b, "k": p.k, "p": p.p, "q": p.q})
        }
        CliProtocol::Flip => {
            let c = c.ok_or_else(|| Error::config("c", "flip needs --c"))?;
            let sc = flip_params(&budget, c)?;
            json!({"protocol": "flip", "c": c, "s": sc.s, "q_flip": sc.q_flip})
        }
        CliProtocol::Pure => {
            let c = c.ok_or_else(|| Error::config("c", "pure needs --c"))?;
            let sc = pure_params(&budget, c)?;
            json!({"protocol": "pure", "c": c, "s": sc.s})
        }
    })
}

fn attack_config_from_flags(
    protocol: CliProtocol,
    eps: f64,
    delta: f64,
    n: usize,
    beta: f64,
    targets: Vec<f64>,
    range_divisor: u8,
    c: Option<usize>,
    m: Option<usize>,
    repetitions: usize,
    seed: u64,
) -> Result<ExperimentConfig, Error> {
    ExperimentConfig {
        protocol: protocol.into(),
        eps,
        delta,
        dataset: DatasetConfig::Normal { n, mean: 0.0, std: 10.0, lo: -40.0, hi: 40.0 },
        m,
        c,
        smoother: SmootherConfig::default(),
        attack: Some(AttackConfig::new(beta, targets, range_divisor)?),
        repetitions,
        seed,
        metrics: MetricsConfig::default(),
    }
    .normalize()
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Calibrate { protocol, eps, delta, n, c } => {
            let payload = serde_json::to_string_pretty(&calibrate(protocol, eps, delta, n, c)?)?;
            write_out(&None, &payload)
        }
        Command::MiBound { eps, delta, n } => {
            let budget = PrivacyBudget::new(eps, delta, n)?;
            let p = optimize_params(&budget, &OptimizerConfig::default())?;
            let bound = mi_upper_bound(p.b, p.k)?;
            let payload = serde_json::to_string_pretty(&json!({
                "b": p.b,
                "k": p.k,
                "p": p.p,
                "q": p.q,
                "i_u": bound.i_u,
                "prior_bound": prior_upper_bound(p.b, p.k)?,
                "asp_bound_lhs": asp_bound_lhs(eps, p.b, p.k, n)?,
            }))?;
            write_out(&None, &payload)
        }
        Command::Run { config, seed, out, format } => {
            let mut cfg = parse_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let report = run_experiment(&cfg)?;
            let mut buf = Vec::new();
            emit_report(&report, format.into(), &mut buf)?;
            write_out(&out, &String::from_utf8(buf).expect("reports are utf-8"))
        }
        Command::Attack {
            config,
            protocol,
            eps,
            delta,
            n,
            beta,
            targets,
            range_divisor,
            c,
            m,
            repetitions,
            seed,
            out,
        } => {
            let cfg = match config {
                Some(path) => {
                    let cfg = parse_config(&path)?;
                    if cfg.attack.is_none() {
                        return Err(Error::config("attack", "config has no attack section"));
                    }
                    cfg
                }
                None => attack_config_from_flags(
                    protocol.expect("required by clap"),
                    eps.expect("required by clap"),
                    delta,
                    n.expect("required by clap"),
                    beta.expect("required by clap"),
                    targets.expect("required by clap"),
                    range_divisor,
                    c,
                    m,
                    repetitions,
                    seed,
                )?,
            };
            let report = run_experiment(&cfg)?;
            let atk = cfg.attack.as_ref().unwrap();
            let divisors: Vec<serde_json::Value> = report
                .aggregate
                .mean
                .riar
                .as_ref()
                .unwrap()
                .iter()
                .map(|(d, r)| json!({"range_divisor": d, "riar": r}))
                .collect();
            let payload = serde_json::to_string_pretty(&json!({
                "protocol": report.protocol,
                "eps": report.eps,
                "n": report.n,
                "beta": atk.beta,
                "targets": atk.targets,
                "repetitions": report.repetitions.len(),
                "riar": divisors,
                "riar_min": report.aggregate.riar_min,
                "wall_time_secs": report.wall_time_secs,
            }))?;
            write_out(&out, &payload)
        }
        Command::Sweep { config, out, format } => {
            let cfg = parse_sweep_config(&config)?;
            let reports = run_sweep(&cfg, &out, format.into())?;
            for (value, report) in &reports {
                eprintln!("grid value {value}: mean W1 {:.6}", report.aggregate.mean.w1);
            }
            Ok(())
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::Json(_) => 2,
        Error::InfeasibleBudget(_) | Error::Calibration(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

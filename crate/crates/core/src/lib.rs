//! Shuffle-model differential privacy for numerical distribution estimation.
//!
//! This crate simulates pure shuffle-model protocols that estimate the
//! distribution of bounded numerical data. Users perturb values locally, a
//! trusted shuffler permutes the resulting messages, and the server inverts
//! the randomizer to recover a histogram:
//!
//! - **ASP** — a single-message piecewise randomizer whose band width and
//!   density ratio are tuned by maximizing a mutual-information bound under
//!   the shuffle amplification constraint, recovered by EM with adaptive
//!   kernel smoothing (EMAS).
//! - **SSW** — the square-wave mechanism calibrated through the same
//!   amplification bound and recovered by EM with binomial smoothing (EMS);
//!   an LDP-only SW mode is available for comparison.
//! - **Flip / Pure** — multi-message categorical frequency oracles over a
//!   chunked domain with Norm-Sub consistency.
//!
//! A data-poisoning evaluation harness crafts per-protocol fake reports
//! toward arbitrary target sets and scores robustness with RIAR (the ratio
//! of attacked-to-ideal and honest-to-ideal Wasserstein distances).
//!
//! Everything stochastic draws from explicit, splittable [`rng::RngStream`]s,
//! so experiments are reproducible end to end.

pub mod aggregate;
pub mod attack;
pub mod error;
pub mod experiment;
pub mod hist;
pub mod metrics;
pub mod mi;
pub mod privacy;
pub mod randomizer;
pub mod rng;

pub use error::{Error, Result};
pub use hist::{Dataset, DomainSpec, Histogram};
pub use privacy::PrivacyBudget;
pub use randomizer::{PerturbParams, ReportBatch, ScfoParams};
pub use rng::RngStream;

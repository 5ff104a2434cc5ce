//! Domain normalization, dataset ingestion and histogram construction.
//!
//! All protocols operate on values normalized to `[0, 1]`; raw data is mapped
//! in with a linear clip-and-scale transform. Histograms are length-`m`
//! frequency vectors and are the universal distribution representation used
//! by the estimators, the metrics and the attack machinery.

use crate::error::{Error, Result};
use crate::rng::RngStream;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Tolerance on `sum(freqs) == 1` for a valid histogram.
pub const MASS_TOL: f64 = 1e-9;

/// Raw-data domain and estimation resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub lo: f64,
    pub hi: f64,
    /// Number of estimate bins.
    pub m: usize,
}

impl DomainSpec {
    pub fn new(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidDomain(format!("need lo < hi, got [{lo}, {hi}]")));
        }
        if m < 2 {
            return Err(Error::InvalidDomain(format!("need m >= 2, got {m}")));
        }
        Ok(DomainSpec { lo, hi, m })
    }
}

/// A probability mass function over `m` consecutive bins of `[0, 1]`.
///
/// Invariant: entries are nonnegative and sum to 1 within [`MASS_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    freqs: Vec<f64>,
}

impl Histogram {
    pub fn new(freqs: Vec<f64>) -> Result<Self> {
        if freqs.len() < 1 {
            return Err(Error::InvalidParams("empty histogram".into()));
        }
        let mut sum = 0.0;
        for (i, &f) in freqs.iter().enumerate() {
            if !f.is_finite() || f < 0.0 {
                return Err(Error::InvalidParams(format!("freqs[{i}] = {f} is not a valid mass")));
            }
            sum += f;
        }
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidParams(format!("freqs sum to {sum}, expected 1")));
        }
        Ok(Histogram { freqs })
    }

    pub fn uniform(m: usize) -> Self {
        Histogram { freqs: vec![1.0 / m as f64; m] }
    }

    /// Normalize arbitrary nonnegative weights into a histogram.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::InvalidParams(format!("weights sum to {sum}")));
        }
        Histogram::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn m(&self) -> usize {
        self.freqs.len()
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn into_freqs(self) -> Vec<f64> {
        self.freqs
    }
}

/// Values normalized into `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for &v in &values {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(v));
            }
        }
        Ok(Dataset { values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Map raw values into `[0, 1]` with the linear transform `(v - lo)/(hi - lo)`,
/// clipping anything outside `[lo, hi]`. Order is preserved.
pub fn normalize_domain(values: &[f64], spec: &DomainSpec) -> Result<Dataset> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let width = spec.hi - spec.lo;
    let out = values
        .iter()
        .map(|&v| ((v - spec.lo) / width).clamp(0.0, 1.0))
        .collect();
    Dataset::new(out)
}

/// Bin index for a normalized value: `floor(v * m)`, with `v = 1` joining the
/// last bin so bins are left-closed/right-open with one closed tail.
pub fn bin_index(v: f64, m: usize) -> usize {
    ((v * m as f64) as usize).min(m - 1)
}

/// Empirical histogram of a dataset at resolution `m`.
pub fn build_histogram(data: &Dataset, m: usize) -> Result<Histogram> {
    if m < 2 {
        return Err(Error::InvalidParams(format!("need m >= 2, got {m}")));
    }
    let mut counts = vec![0u64; m];
    for &v in data.values() {
        counts[bin_index(v, m)] += 1;
    }
    let n = data.n() as f64;
    Histogram::new(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Draw `n` i.i.d. normal samples. Deterministic for a fixed stream.
pub fn sample_synthetic_normal(n: usize, mean: f64, std: f64, stream: &RngStream) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParams("need n >= 1".into()));
    }
    if !(std > 0.0) {
        return Err(Error::InvalidParams(format!("need std > 0, got {std}")));
    }
    let normal = Normal::new(mean, std).map_err(|e| Error::InvalidParams(e.to_string()))?;
    let mut rng = stream.rng();
    Ok((0..n).map(|_| normal.sample(&mut rng)).collect())
}

/// Column selector for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnSel {
    Index(usize),
    Name(String),
}

/// Load one numeric column from a CSV file, then clip and normalize it.
///
/// The minimal format is one value per row with an optional single header
/// row; files with several columns work too, selecting by header name or
/// 0-based index. A row whose selected field does not parse as a number is a
/// hard error naming the row.
pub fn load_dataset_csv(path: impl AsRef<Path>, column: &ColumnSel, spec: &DomainSpec) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;

    let mut raw = Vec::new();
    let mut col_idx: Option<usize> = match column {
        ColumnSel::Index(i) => Some(*i),
        ColumnSel::Name(_) => None,
    };

    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        if row_no == 0 {
            // Resolve a named column against the header row, or detect that a
            // headerless file starts directly with data.
            if let ColumnSel::Name(name) = column {
                match record.iter().position(|f| f == name) {
                    Some(i) => {
                        col_idx = Some(i);
                        continue;
                    }
                    None => {
                        return Err(Error::Dataset(format!(
                            "column `{name}` not found in header {:?}",
                            record.iter().collect::<Vec<_>>()
                        )))
                    }
                }
            }
            let idx = col_idx.unwrap();
            match record.get(idx) {
                Some(field) if field.parse::<f64>().is_ok() => {
                    raw.push(field.parse::<f64>().unwrap());
                    continue;
                }
                Some(_) => continue, // header row
                None => return Err(Error::Dataset(format!("column index {idx} missing in first row"))),
            }
        }
        let idx = col_idx.unwrap();
        let field = record
            .get(idx)
            .ok_or_else(|| Error::Dataset(format!("row {}: column index {idx} missing", row_no + 1)))?;
        let v: f64 = field
            .parse()
            .map_err(|_| Error::Dataset(format!("row {}: `{field}` is not numeric", row_no + 1)))?;
        raw.push(v);
    }

    if raw.is_empty() {
        return Err(Error::Dataset(format!("{}: no valid rows", path.display())));
    }
    normalize_domain(&raw, spec)
}

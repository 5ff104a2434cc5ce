//! Local randomizers and the uniform shuffler.
//!
//! Three report families exist: a single real value from the piecewise
//! (square-wave) randomizer used by SW/SSW/ASP, and the two multi-message
//! SCFO encoders (Flip bit-vectors, Pure dummy points). The shuffler permutes
//! the flat multiset of messages, detaching user identity.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Piecewise randomizer parameters. Output density is `p` within `±b` of the
/// input and `q` elsewhere on `[-b, 1+b]`, with `p = kq` and `2bp + q = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbParams {
    pub b: f64,
    pub k: f64,
    pub p: f64,
    pub q: f64,
}

impl PerturbParams {
    /// Build from the free parameters `(b, k)`. `k = 1` is accepted as the
    /// degenerate uniform channel (p = q).
    pub fn new(b: f64, k: f64) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::InvalidParams(format!("need b > 0, got {b}")));
        }
        if !(k >= 1.0) || !k.is_finite() {
            return Err(Error::InvalidParams(format!("need k >= 1, got {k}")));
        }
        let q = 1.0 / (2.0 * b * k + 1.0);
        Ok(PerturbParams { b, k, p: k * q, q })
    }

    pub fn out_lo(&self) -> f64 {
        -self.b
    }

    pub fn out_hi(&self) -> f64 {
        1.0 + self.b
    }

    /// Probability that a report lands inside the high-density band.
    pub fn band_mass(&self) -> f64 {
        2.0 * self.b * self.p
    }
}

/// Square-wave parameters for a pure `eps_l`-LDP deployment: `k = e^{eps_l}`
/// and the closed-form band width that the SW mechanism prescribes.
pub fn sw_params(eps_l: f64) -> Result<PerturbParams> {
    if !(eps_l > 0.0) || !eps_l.is_finite() {
        return Err(Error::InvalidParams(format!("need eps_l > 0, got {eps_l}")));
    }
    let e = eps_l.exp();
    let b = (eps_l * e - e + 1.0) / (2.0 * e * (e - 1.0 - eps_l));
    PerturbParams::new(b, e)
}

/// SCFO encoder parameters: `c` chunks, `s` dummy messages per user and the
/// Flip bit-flip probability (unused by Pure).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScfoParams {
    pub c: usize,
    pub s: usize,
    pub q_flip: f64,
}

impl ScfoParams {
    pub fn flip(c: usize, s: usize, q_flip: f64) -> Result<Self> {
        if c < 2 {
            return Err(Error::InvalidParams(format!("need c >= 2, got {c}")));
        }
        if s < 1 {
            return Err(Error::InvalidParams(format!("need s >= 1, got {s}")));
        }
        if !(0.0..0.5).contains(&q_flip) {
            return Err(Error::InvalidParams(format!("need q_flip in [0, 0.5), got {q_flip}")));
        }
        Ok(ScfoParams { c, s, q_flip })
    }

    pub fn pure(c: usize, s: usize) -> Result<Self> {
        if c < 2 {
            return Err(Error::InvalidParams(format!("need c >= 2, got {c}")));
        }
        Ok(ScfoParams { c, s, q_flip: 0.0 })
    }

    /// Messages sent per user.
    pub fn messages_per_user(&self) -> usize {
        self.s + 1
    }
}

/// Flip messages for a whole batch, packed one bit-row per message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipBatch {
    c: usize,
    words_per_row: usize,
    rows: usize,
    words: Vec<u64>,
}

impl FlipBatch {
    pub fn with_capacity(c: usize, rows_hint: usize) -> Self {
        let wpr = (c + 63) / 64;
        FlipBatch {
            c,
            words_per_row: wpr,
            rows: 0,
            words: Vec::with_capacity(rows_hint * wpr),
        }
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn push_row(&mut self, bits: &[bool]) {
        debug_assert_eq!(bits.len(), self.c);
        let base = self.words.len();
        self.words.resize(base + self.words_per_row, 0);
        for (j, &bit) in bits.iter().enumerate() {
            if bit {
                self.words[base + j / 64] |= 1u64 << (j % 64);
            }
        }
        self.rows += 1;
    }

    pub fn get(&self, row: usize, j: usize) -> bool {
        let w = self.words[row * self.words_per_row + j / 64];
        (w >> (j % 64)) & 1 == 1
    }

    pub fn row_bits(&self, row: usize) -> Vec<bool> {
        (0..self.c).map(|j| self.get(row, j)).collect()
    }

    /// Count of set bits at position `j` across all rows.
    pub fn column_count(&self, j: usize) -> u64 {
        let (word, shift) = (j / 64, j % 64);
        (0..self.rows)
            .map(|r| (self.words[r * self.words_per_row + word] >> shift) & 1)
            .sum()
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let wpr = self.words_per_row;
        for i in 0..wpr {
            self.words.swap(a * wpr + i, b * wpr + i);
        }
    }

    pub fn append(&mut self, other: &FlipBatch) {
        assert_eq!(self.c, other.c);
        self.words.extend_from_slice(&other.words);
        self.rows += other.rows;
    }
}

/// A batch of shuffled (or to-be-shuffled) reports, tagged by protocol family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReportBatch {
    /// One real value per user in `[-b, 1+b]`.
    Piecewise { b: f64, values: Vec<f64> },
    /// `s+1` integers per user, 1-based chunk values in `[1..c]`.
    Pure { c: usize, values: Vec<u32> },
    /// `s+1` bit-vectors of length `c` per user.
    Flip(FlipBatch),
}

impl ReportBatch {
    pub fn len(&self) -> usize {
        match self {
            ReportBatch::Piecewise { values, .. } => values.len(),
            ReportBatch::Pure { values, .. } => values.len(),
            ReportBatch::Flip(b) => b.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One-message-per-line text serialization: a real for piecewise, an
    /// integer for Pure, a bitstring for Flip. This is the wire format for
    /// running the shuffler stage as a separate pass.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        match self {
            ReportBatch::Piecewise { values, .. } => {
                for v in values {
                    out.push_str(&format!("{v}\n"));
                }
            }
            ReportBatch::Pure { values, .. } => {
                for v in values {
                    out.push_str(&format!("{v}\n"));
                }
            }
            ReportBatch::Flip(batch) => {
                for r in 0..batch.rows() {
                    for j in 0..batch.c() {
                        out.push(if batch.get(r, j) { '1' } else { '0' });
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    /// Parse the line format back. `piecewise_b` bounds validate piecewise
    /// values; `c` is the chunk count for the SCFO formats.
    pub fn piecewise_from_lines(text: &str, b: f64) -> Result<Self> {
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let v: f64 = line
                .trim()
                .parse()
                .map_err(|_| Error::Batch(format!("line {}: `{line}` is not a real", i + 1)))?;
            if v < -b - 1e-12 || v > 1.0 + b + 1e-12 {
                return Err(Error::Batch(format!("line {}: {v} outside [-{b}, 1+{b}]", i + 1)));
            }
            values.push(v);
        }
        Ok(ReportBatch::Piecewise { b, values })
    }

    pub fn pure_from_lines(text: &str, c: usize) -> Result<Self> {
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let v: u32 = line
                .trim()
                .parse()
                .map_err(|_| Error::Batch(format!("line {}: `{line}` is not an integer", i + 1)))?;
            if v < 1 || v as usize > c {
                return Err(Error::Batch(format!("line {}: {v} outside [1..{c}]", i + 1)));
            }
            values.push(v);
        }
        Ok(ReportBatch::Pure { c, values })
    }

    pub fn flip_from_lines(text: &str, c: usize) -> Result<Self> {
        let mut batch = FlipBatch::with_capacity(c, text.lines().count());
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.len() != c || !line.bytes().all(|ch| ch == b'0' || ch == b'1') {
                return Err(Error::Batch(format!("line {}: expected {c}-bit string", i + 1)));
            }
            let bits: Vec<bool> = line.bytes().map(|ch| ch == b'1').collect();
            batch.push_row(&bits);
        }
        Ok(ReportBatch::Flip(batch))
    }
}

/// Perturb one value with the piecewise mechanism: with probability `2bp` the
/// output is uniform in `[x-b, x+b]`, otherwise uniform over the complement
/// within `[-b, 1+b]`.
pub fn piecewise_perturb(x: f64, params: &PerturbParams, rng: &mut impl Rng) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(x));
    }
    let b = params.b;
    if rng.gen::<f64>() < params.band_mass() {
        Ok(x - b + rng.gen::<f64>() * 2.0 * b)
    } else {
        // The complement [-b, x-b) ∪ (x+b, 1+b] always has total length 1.
        let u = rng.gen::<f64>();
        Ok(if u < x { u - b } else { u + b })
    }
}

/// Encode one user's bin for Flip: a one-hot vector plus `s` all-zero dummy
/// vectors, every bit flipped independently with probability `q_flip`.
pub fn flip_encode(bin: usize, sc: &ScfoParams, rng: &mut impl Rng) -> Result<Vec<Vec<bool>>> {
    if bin >= sc.c {
        return Err(Error::InvalidParams(format!("bin {bin} out of range [0..{})", sc.c)));
    }
    let mut out = Vec::with_capacity(sc.s + 1);
    for v in 0..=sc.s {
        let mut bits = vec![false; sc.c];
        if v == 0 {
            bits[bin] = true;
        }
        for bit in bits.iter_mut() {
            if rng.gen::<f64>() < sc.q_flip {
                *bit = !*bit;
            }
        }
        out.push(bits);
    }
    Ok(out)
}

/// Encode one user's bin for Pure: the true 1-based chunk value followed by
/// `s` dummies drawn uniformly from `[1..c]`.
pub fn pure_encode(bin: usize, sc: &ScfoParams, rng: &mut impl Rng) -> Result<Vec<u32>> {
    if bin >= sc.c {
        return Err(Error::InvalidParams(format!("bin {bin} out of range [0..{})", sc.c)));
    }
    let mut out = Vec::with_capacity(sc.s + 1);
    out.push(bin as u32 + 1);
    for _ in 0..sc.s {
        out.push(rng.gen_range(1..=sc.c as u32));
    }
    Ok(out)
}

/// Encode a whole batch of binned values for Flip, one derived stream per user.
pub fn flip_encode_batch(bins: &[usize], sc: &ScfoParams, stream: &RngStream) -> Result<ReportBatch> {
    let mut batch = FlipBatch::with_capacity(sc.c, bins.len() * (sc.s + 1));
    for (user, &bin) in bins.iter().enumerate() {
        let mut rng = stream.substream(user as u64).rng();
        for row in flip_encode(bin, sc, &mut rng)? {
            batch.push_row(&row);
        }
    }
    Ok(ReportBatch::Flip(batch))
}

/// Encode a whole batch of binned values for Pure, one derived stream per user.
pub fn pure_encode_batch(bins: &[usize], sc: &ScfoParams, stream: &RngStream) -> Result<ReportBatch> {
    let mut values = Vec::with_capacity(bins.len() * (sc.s + 1));
    for (user, &bin) in bins.iter().enumerate() {
        let mut rng = stream.substream(user as u64).rng();
        values.extend(pure_encode(bin, sc, &mut rng)?);
    }
    Ok(ReportBatch::Pure { c: sc.c, values })
}

/// Perturb a whole batch of values, one derived stream per user.
pub fn piecewise_perturb_batch(
    values: &[f64],
    params: &PerturbParams,
    stream: &RngStream,
) -> Result<ReportBatch> {
    let mut out = Vec::with_capacity(values.len());
    for (user, &x) in values.iter().enumerate() {
        let mut rng = stream.substream(user as u64).rng();
        out.push(piecewise_perturb(x, params, &mut rng)?);
    }
    Ok(ReportBatch::Piecewise { b: params.b, values: out })
}

/// Apply a uniformly random permutation to the flat message multiset.
pub fn shuffle(batch: &mut ReportBatch, rng: &mut impl Rng) {
    match batch {
        ReportBatch::Piecewise { values, .. } => values.shuffle(rng),
        ReportBatch::Pure { values, .. } => values.shuffle(rng),
        ReportBatch::Flip(b) => {
            // Fisher-Yates over packed rows.
            for i in (1..b.rows()).rev() {
                let j = rng.gen_range(0..=i);
                b.swap_rows(i, j);
            }
        }
    }
}

//! Discrete probability models over bounded integer alphabets.

use super::range_coder::{RangeDecoder, RangeEncoder, PROB_TOTAL};
use super::CodingError;
use crate::detmath::normal_cdf;

/// Smallest admissible Gaussian scale.
pub const SIGMA_MIN: f64 = 0.05;
/// Probability floor of every symbol in a bounded alphabet.
pub const P_MIN: f64 = 1.0 / PROB_TOTAL as f64;
/// Largest alphabet half-width a model can carry at 16-bit precision.
pub const MAX_BOUND: i32 = (PROB_TOTAL as i32 - 2) / 2;

/// An integer CDF over symbol indices `0..n`, scaled to [`PROB_TOTAL`].
pub trait CdfModel {
    fn alphabet_size(&self) -> u32;
    /// `cdf(0) == 0`, `cdf(n) == PROB_TOTAL`, strictly increasing.
    fn cdf(&self, index: u32) -> u32;

    /// Starting point for the decoder's search.
    fn guess(&self) -> u32 {
        self.alphabet_size() / 2
    }

    fn frequency(&self, index: u32) -> u32 {
        self.cdf(index + 1) - self.cdf(index)
    }

    fn encode_index(&self, enc: &mut RangeEncoder, index: u32) {
        let lo = self.cdf(index);
        let hi = self.cdf(index + 1);
        enc.encode(lo, hi - lo);
    }

    fn decode_index(&self, dec: &mut RangeDecoder<'_>) -> Result<u32, CodingError> {
        let target = dec.target()?;
        let n = self.alphabet_size();
        let idx = search(self, target, self.guess().min(n - 1));
        let lo = self.cdf(idx);
        let hi = self.cdf(idx + 1);
        dec.consume(lo, hi - lo)?;
        Ok(idx)
    }
}

/// Largest index `i` with `cdf(i) <= target`, galloping out from `guess`.
fn search<M: CdfModel + ?Sized>(model: &M, target: u32, guess: u32) -> u32 {
    let n = model.alphabet_size();
    let (mut a, mut b);
    if model.cdf(guess) <= target {
        a = guess;
        let mut step = 1;
        loop {
            let c = (a + step).min(n);
            if c == n || model.cdf(c) > target {
                b = c;
                break;
            }
            a = c;
            step *= 2;
        }
    } else {
        b = guess;
        let mut step = 1;
        loop {
            let c = b.saturating_sub(step);
            if c == 0 || model.cdf(c) <= target {
                a = c;
                break;
            }
            b = c;
            step *= 2;
        }
    }
    while b - a > 1 {
        let m = a + (b - a) / 2;
        if model.cdf(m) <= target {
            a = m;
        } else {
            b = m;
        }
    }
    a
}

/// Discretized Gaussian over `[-bound, bound]`: a Gaussian convolved with a
/// unit-width uniform, truncated to the alphabet, with every symbol holding
/// at least one count of [`PROB_TOTAL`].
#[derive(Clone, Debug)]
pub struct GaussianConditional {
    mean: f64,
    sigma: f64,
    bound: i32,
    n: u32,
    phi_lo: f64,
    mass: f64,
}

impl GaussianConditional {
    /// `sigma` below [`SIGMA_MIN`] is clamped; `mean` is clamped into the alphabet.
    pub fn new(mean: f64, sigma: f64, bound: i32) -> Self {
        assert!((0..=MAX_BOUND).contains(&bound), "alphabet bound {bound} out of range");
        let sigma = if sigma.is_nan() { SIGMA_MIN } else { sigma.max(SIGMA_MIN) };
        let mean = mean.clamp(-bound as f64, bound as f64);
        let n = 2 * bound as u32 + 1;
        let phi_lo = normal_cdf((-bound as f64 - 0.5 - mean) / sigma);
        let phi_hi = normal_cdf((bound as f64 + 0.5 - mean) / sigma);
        Self { mean, sigma, bound, n, phi_lo, mass: phi_hi - phi_lo }
    }

    pub fn bound(&self) -> i32 {
        self.bound
    }

    pub fn index_of(&self, value: i32) -> u32 {
        debug_assert!(value.abs() <= self.bound);
        (value + self.bound) as u32
    }

    pub fn value_of(&self, index: u32) -> i32 {
        index as i32 - self.bound
    }

    /// Probability the coder assigns to `value`.
    pub fn probability(&self, value: i32) -> f64 {
        self.frequency(self.index_of(value)) as f64 / PROB_TOTAL as f64
    }

    pub fn encode(&self, enc: &mut RangeEncoder, value: i32) {
        self.encode_index(enc, self.index_of(value));
    }

    pub fn decode(&self, dec: &mut RangeDecoder<'_>) -> Result<i32, CodingError> {
        Ok(self.value_of(self.decode_index(dec)?))
    }
}

impl CdfModel for GaussianConditional {
    fn alphabet_size(&self) -> u32 {
        self.n
    }

    fn cdf(&self, index: u32) -> u32 {
        if index == 0 {
            return 0;
        }
        if index >= self.n {
            return PROB_TOTAL;
        }
        let edge = (index as i32 - self.bound) as f64 - 0.5;
        let f = ((normal_cdf((edge - self.mean) / self.sigma) - self.phi_lo) / self.mass).clamp(0.0, 1.0);
        let spread = (PROB_TOTAL - self.n) as f64;
        (f * spread).floor().min(spread) as u32 + index
    }

    fn guess(&self) -> u32 {
        (self.mean.round() as i32 + self.bound) as u32
    }
}

/// Static integer CDF table over `values.start ..= values.end`.
#[derive(Clone, Debug, PartialEq)]
pub struct CdfTable {
    min_value: i32,
    cdf: Vec<u32>,
}

impl CdfTable {
    /// Builds a table from non-negative weights; every symbol keeps a count of at least one.
    pub fn from_weights(min_value: i32, weights: &[f64]) -> Self {
        let n = weights.len();
        assert!(n >= 1 && n < PROB_TOTAL as usize);
        let total: f64 = weights.iter().sum();
        let spread = (PROB_TOTAL as usize - n) as f64;
        let mut freq: Vec<u32> = weights.iter().map(|w| 1 + (w / total * spread).floor() as u32).collect();
        let assigned: u32 = freq.iter().sum();
        // Hand the rounding remainder to the most probable symbol.
        let top = (0..n).max_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(b.cmp(&a))).unwrap();
        freq[top] += PROB_TOTAL - assigned;
        let mut cdf = Vec::with_capacity(n + 1);
        let mut acc = 0;
        cdf.push(0);
        for f in freq {
            acc += f;
            cdf.push(acc);
        }
        Self { min_value, cdf }
    }

    pub fn min_value(&self) -> i32 {
        self.min_value
    }

    pub fn max_value(&self) -> i32 {
        self.min_value + self.cdf.len() as i32 - 2
    }

    pub fn probability(&self, value: i32) -> f64 {
        let i = (value - self.min_value) as u32;
        self.frequency(i) as f64 / PROB_TOTAL as f64
    }

    pub fn encode(&self, enc: &mut RangeEncoder, value: i32) {
        self.encode_index(enc, (value - self.min_value) as u32);
    }

    pub fn decode(&self, dec: &mut RangeDecoder<'_>) -> Result<i32, CodingError> {
        Ok(self.decode_index(dec)? as i32 + self.min_value)
    }
}

impl CdfModel for CdfTable {
    fn alphabet_size(&self) -> u32 {
        (self.cdf.len() - 1) as u32
    }

    fn cdf(&self, index: u32) -> u32 {
        self.cdf[index as usize]
    }

    fn decode_index(&self, dec: &mut RangeDecoder<'_>) -> Result<u32, CodingError> {
        let target = dec.target()?;
        let idx = self.cdf.partition_point(|&c| c <= target) as u32 - 1;
        dec.consume(self.cdf[idx as usize], self.frequency(idx))?;
        Ok(idx)
    }
}

/// Fully factorized static model: one CDF table per channel (tables are
/// reused cyclically when there are fewer tables than channels).
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedModel {
    pub tables: Vec<CdfTable>,
}

impl FactorizedModel {
    pub fn new(tables: Vec<CdfTable>) -> Self {
        assert!(!tables.is_empty());
        Self { tables }
    }

    pub fn table(&self, channel: usize) -> &CdfTable {
        &self.tables[channel % self.tables.len()]
    }
}

/// Model family selector for [`symbol_probability`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Factorized,
    GaussianConditional,
}

/// Closed-form probability of `value` under a Gaussian-conditional model on
/// `[-bound, bound]`: `Phi((v+.5-mu)/sigma) - Phi((v-.5-mu)/sigma)`, floored at
/// [`P_MIN`] and renormalized over the alphabet.
pub fn symbol_probability(value: i32, mean: f64, sigma: f64, bound: i32) -> f64 {
    let sigma = sigma.max(SIGMA_MIN);
    let raw = |v: i32| {
        let p = normal_cdf((v as f64 + 0.5 - mean) / sigma) - normal_cdf((v as f64 - 0.5 - mean) / sigma);
        p.max(P_MIN)
    };
    if value.abs() > bound {
        return 0.0;
    }
    let total: f64 = (-bound..=bound).map(raw).sum();
    raw(value) / total
}

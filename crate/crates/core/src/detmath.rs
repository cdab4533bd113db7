//! Platform-reproducible elementary functions.
//!
//! Everything the entropy models and transforms feed into the bitstream is
//! computed here from IEEE-754 basic operations only (`+ - * /`, `sqrt`),
//! so encoder and decoder agree bit-for-bit regardless of the host libm.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
const INV_LN2: f64 = 1.442_695_040_888_963_387_00;

/// `e^x`, accurate to a few ulp over the normal range.
pub fn exp(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    if x > 709.0 {
        return f64::INFINITY;
    }
    if x < -708.0 {
        return 0.0;
    }
    let k = (x * INV_LN2).round();
    let r = (x - k * LN2_HI) - k * LN2_LO;
    // |r| <= 0.35: the Taylor tail after degree 13 is below 1e-17.
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..=13 {
        term = term * r / n as f64;
        sum += term;
    }
    sum * pow2i(k as i32)
}

fn pow2i(k: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&k));
    f64::from_bits(((k + 1023) as u64) << 52)
}

/// `erfc(z)` for `z >= 0` from a fixed Chebyshev-fitted rational form
/// (fractional error below 1.2e-7).
fn erfc_nonneg(z: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    t * exp(poly)
}

/// Complementary error function.
pub fn erfc(z: f64) -> f64 {
    if z >= 0.0 {
        erfc_nonneg(z)
    } else {
        2.0 - erfc_nonneg(-z)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 - 0.5 * erfc_nonneg(x * FRAC_1_SQRT_2)
    } else {
        0.5 * erfc_nonneg(-x * FRAC_1_SQRT_2)
    }
}

/// `cos(pi * num / den)` with exact integer quadrant reduction.
pub fn cos_pi_ratio(num: i64, den: i64) -> f64 {
    assert!(den > 0);
    // Work in units of pi / (2 den) so quadrant boundaries are integers.
    let full = 4 * den;
    let mut m = (2 * num).rem_euclid(full);
    if m > 2 * den {
        m = full - m;
    }
    let (m, sign) = if m > den { (2 * den - m, -1.0) } else { (m, 1.0) };
    // m in [0, den] now maps to an angle in [0, pi/2].
    let value = if 2 * m <= den {
        cos_small(PI * m as f64 / (2 * den) as f64)
    } else {
        sin_small(PI * (den - m) as f64 / (2 * den) as f64)
    };
    sign * value
}

fn cos_small(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..=12 {
        term = -term * x2 / ((2 * n - 1) * (2 * n)) as f64;
        sum += term;
    }
    sum
}

fn sin_small(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..=12 {
        term = -term * x2 / ((2 * n) * (2 * n + 1)) as f64;
        sum += term;
    }
    sum
}

//! Platform-stable transcendental functions.
//!
//! Generation must be byte-identical across platforms, but libm `exp`/`tanh`
//! are allowed to differ in the last ulp between implementations. These
//! variants use only IEEE-exact operations (+, *, /, floor, exponent-bit
//! scaling), so every platform computes the same bits.

/// log2(e)
const LOG2_E: f64 = 1.4426950408889634;
/// ln(2)
const LN_2: f64 = 0.6931471805599453;

/// Taylor coefficients 1/k! for e^f on |f| <= ln(2)/2.
const INV_FACT: [f64; 15] = [
    1.0,
    1.0,
    0.5,
    0.16666666666666666,
    0.041666666666666664,
    0.008333333333333333,
    0.001388888888888889,
    0.0001984126984126984,
    2.48015873015873e-5,
    2.7557319223985893e-6,
    2.755731922398589e-7,
    2.505210838544172e-8,
    2.08767569878681e-9,
    1.6059043836821613e-10,
    1.1470745597729725e-11,
];

/// Deterministic e^x. Relative accuracy ~1e-14; underflows to 0 below the
/// normal range instead of producing subnormals.
pub fn det_exp(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x > 709.782712893384 {
        return f64::INFINITY;
    }
    if x < -708.0 {
        return 0.0;
    }
    // x = n*ln2 + f with |f| <= ln2/2, so e^x = 2^n * e^f.
    let n = (x * LOG2_E + 0.5).floor();
    let f = x - n * LN_2;
    let mut acc = INV_FACT[INV_FACT.len() - 1];
    for k in (0..INV_FACT.len() - 1).rev() {
        acc = acc * f + INV_FACT[k];
    }
    let n = n as i64;
    if n >= 1024 {
        return f64::INFINITY;
    }
    if n < -1022 {
        return 0.0;
    }
    acc * f64::from_bits(((n + 1023) as u64) << 52)
}

/// Deterministic tanh via `det_exp`.
pub fn det_tanh(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x > 20.0 {
        return 1.0;
    }
    if x < -20.0 {
        return -1.0;
    }
    let e = det_exp(2.0 * x);
    (e - 1.0) / (e + 1.0)
}

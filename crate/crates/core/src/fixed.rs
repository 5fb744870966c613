//! Fixed-point accumulation for mergeable sketch state.
//!
//! Floating-point sums depend on the order of the summands. Sketch states
//! that must merge bit-exactly (across stream splits, machines, and stream
//! orders) quantize each per-point contribution once and accumulate in
//! 128-bit integers, where addition is associative and commutative.

/// Fractional bits: resolution 2^-44 (about 5.7e-14), integer range 2^83.
pub const FRAC_BITS: i32 = 44;
const SCALE: f64 = (1u64 << FRAC_BITS) as f64;

/// Round to the fixed-point grid. Out-of-range values saturate.
#[inline]
pub fn quantize(x: f64) -> i128 {
    (x * SCALE).round() as i128
}

#[inline]
pub fn dequantize(q: i128) -> f64 {
    q as f64 / SCALE
}

pub fn accumulate(acc: &mut [i128], contribution: &[f64]) {
    debug_assert_eq!(acc.len(), contribution.len());
    for (a, &c) in acc.iter_mut().zip(contribution) {
        *a = a.wrapping_add(quantize(c));
    }
}

pub fn to_f64(acc: &[i128]) -> Vec<f64> {
    acc.iter().map(|&q| dequantize(q)).collect()
}

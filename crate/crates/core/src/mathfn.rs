//! Fused multiply-add shim for the hot kernels.

#[cfg(feature = "std")]
#[inline(always)]
pub fn fma(a: f64, b: f64, c: f64) -> f64 {
    a.mul_add(b, c)
}

#[cfg(not(feature = "std"))]
#[inline(always)]
pub fn fma(a: f64, b: f64, c: f64) -> f64 {
    a * b + c
}

//! Carry-less products of GF(2) polynomials packed LSB-first into `u64`
//! words (coefficient `k` is bit `k % 64` of word `k / 64`).

#[inline]
fn clmul_soft(a: u64, b: u64) -> (u64, u64) {
    let (mut lo, mut hi) = (0u64, 0u64);
    let mut rest = b;
    while rest != 0 {
        let i = rest.trailing_zeros();
        lo ^= a << i;
        if i != 0 {
            hi ^= a >> (64 - i);
        }
        rest &= rest - 1;
    }
    (lo, hi)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "pclmulqdq,sse2")]
unsafe fn mul_into_pclmul(a: &[u64], b: &[u64], out: &mut [u64]) {
    use std::arch::x86_64::*;
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        let va = _mm_set_epi64x(0, x as i64);
        for (j, &y) in b.iter().enumerate() {
            let p = _mm_clmulepi64_si128(va, _mm_set_epi64x(0, y as i64), 0x00);
            out[i + j] ^= _mm_cvtsi128_si64(p) as u64;
            out[i + j + 1] ^= _mm_extract_epi64(p, 1) as u64;
        }
    }
}

fn mul_into_soft(a: &[u64], b: &[u64], out: &mut [u64]) {
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            let (lo, hi) = clmul_soft(x, y);
            out[i + j] ^= lo;
            out[i + j + 1] ^= hi;
        }
    }
}

/// Product of `a` and `b`, `a.len() + b.len()` words.
pub(crate) fn poly_mul(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = vec![0u64; a.len() + b.len()];
    if a.is_empty() || b.is_empty() {
        return out;
    }
    #[cfg(target_arch = "x86_64")]
    {
        if is_x86_feature_detected!("pclmulqdq") && is_x86_feature_detected!("sse4.1") {
            // SAFETY: the required CPU features were detected at runtime.
            unsafe { mul_into_pclmul(a, b, &mut out) };
            return out;
        }
    }
    mul_into_soft(a, b, &mut out);
    out
}

#[cfg(test)]
pub(crate) fn poly_mul_soft(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = vec![0u64; a.len() + b.len()];
    if !a.is_empty() && !b.is_empty() {
        mul_into_soft(a, b, &mut out);
    }
    out
}

/// Product in GF(2^64) modulo `x^64 + x^4 + x^3 + x + 1`.
pub(crate) fn gf64_mul(a: u64, b: u64) -> u64 {
    let (lo, hi) = clmul_soft(a, b);
    let fold = |h: u64| h ^ (h << 1) ^ (h << 3) ^ (h << 4);
    let spill = (hi >> 63) ^ (hi >> 61) ^ (hi >> 60);
    lo ^ fold(hi) ^ fold(spill)
}

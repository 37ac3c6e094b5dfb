//! Carry-less multiplication kernels for the Toeplitz middle product.
//!
//! Polynomials are little-endian `u64` word slices (bit `k` of word `w` is the
//! coefficient of `x^(64w+k)`). [`correlate_words`] returns, for each word
//! index `t` in a range, the 128-bit accumulator
//! `R_t = XOR_j clmul(s[t-j], x[j])`; word `w` of the full product is then
//! `lo(R_w) ^ hi(R_{w-1})`.

/// Which carry-less multiply implementation runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Hardware `pclmulqdq` (x86-64 only).
    Pclmul,
    /// Portable shift-and-xor multiply.
    Portable,
}

impl Backend {
    /// Fastest backend available on this CPU.
    pub fn detect() -> Self {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("pclmulqdq")
                && std::arch::is_x86_feature_detected!("sse2")
            {
                return Backend::Pclmul;
            }
        }
        Backend::Portable
    }

    pub fn is_available(self) -> bool {
        match self {
            Backend::Portable => true,
            Backend::Pclmul => Backend::detect() == Backend::Pclmul,
        }
    }
}

/// 64x64 -> 128 carry-less product, returned as (low, high).
#[inline]
pub(crate) fn clmul_portable(a: u64, b: u64) -> (u64, u64) {
    // Four-bit windows of `b` against a precomputed table of `a` multiples.
    let mut table = [0u128; 16];
    let a128 = a as u128;
    #[allow(clippy::needless_range_loop)]
    for i in 1..16usize {
        let mut v = 0u128;
        for bit in 0..4 {
            if i >> bit & 1 == 1 {
                v ^= a128 << bit;
            }
        }
        table[i] = v;
    }
    let mut acc = 0u128;
    for nib in (0..16).rev() {
        acc <<= 4;
        acc ^= table[((b >> (4 * nib)) & 0xf) as usize];
    }
    (acc as u64, (acc >> 64) as u64)
}

/// Fills `out[k] = R_{t0+k}` for `k < out.len()`.
pub(crate) fn correlate_words(backend: Backend, s: &[u64], x: &[u64], t0: usize, out: &mut [(u64, u64)]) {
    match backend {
        #[cfg(target_arch = "x86_64")]
        Backend::Pclmul => {
            assert!(Backend::Pclmul.is_available(), "pclmulqdq not supported on this CPU");
            // SAFETY: feature presence checked above.
            unsafe { x86::correlate(s, x, t0, out) }
        }
        _ => correlate_portable(s, x, t0, out),
    }
}

#[inline]
fn j_range(t: usize, ns: usize, nx: usize) -> Option<(usize, usize)> {
    if ns == 0 || nx == 0 {
        return None;
    }
    let lo = t.saturating_sub(ns - 1);
    let hi = t.min(nx - 1);
    (lo <= hi).then_some((lo, hi))
}

fn correlate_portable(s: &[u64], x: &[u64], t0: usize, out: &mut [(u64, u64)]) {
    for (k, slot) in out.iter_mut().enumerate() {
        let t = t0 + k;
        let (mut lo, mut hi) = (0u64, 0u64);
        if let Some((j0, j1)) = j_range(t, s.len(), x.len()) {
            for j in j0..=j1 {
                let (l, h) = clmul_portable(s[t - j], x[j]);
                lo ^= l;
                hi ^= h;
            }
        }
        *slot = (lo, hi);
    }
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use std::arch::x86_64::*;

    #[target_feature(enable = "pclmulqdq,sse2")]
    pub(super) unsafe fn correlate(s: &[u64], x: &[u64], t0: usize, out: &mut [(u64, u64)]) {
        for (k, slot) in out.iter_mut().enumerate() {
            let t = t0 + k;
            let mut acc = _mm_setzero_si128();
            if let Some((j0, j1)) = super::j_range(t, s.len(), x.len()) {
                let mut j = j0;
                // Pairs: lanes [s[t-j-1], s[t-j]] against [x[j], x[j+1]].
                while j < j1 {
                    let vs = _mm_loadu_si128(s.as_ptr().add(t - j - 1) as *const __m128i);
                    let vx = _mm_loadu_si128(x.as_ptr().add(j) as *const __m128i);
                    acc = _mm_xor_si128(acc, _mm_clmulepi64_si128::<0x01>(vs, vx));
                    acc = _mm_xor_si128(acc, _mm_clmulepi64_si128::<0x10>(vs, vx));
                    j += 2;
                }
                if j == j1 {
                    let a = _mm_set_epi64x(0, s[t - j] as i64);
                    let b = _mm_set_epi64x(0, x[j] as i64);
                    acc = _mm_xor_si128(acc, _mm_clmulepi64_si128::<0x00>(a, b));
                }
            }
            let mut words = [0u64; 2];
            _mm_storeu_si128(words.as_mut_ptr() as *mut __m128i, acc);
            *slot = (words[0], words[1]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clmul_bitwise(a: u64, b: u64) -> u128 {
        (0..64).filter(|i| b >> i & 1 == 1).fold(0u128, |acc, i| acc ^ ((a as u128) << i))
    }

    #[test]
    fn portable_matches_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let (a, b): (u64, u64) = (rng.random(), rng.random());
            let (l, h) = clmul_portable(a, b);
            assert_eq!((h as u128) << 64 | l as u128, clmul_bitwise(a, b));
        }
        assert_eq!(clmul_portable(u64::MAX, 1), (u64::MAX, 0));
        assert_eq!(clmul_portable(1 << 63, 1 << 63), (0, 1 << 62));
    }

    #[test]
    fn backends_agree() {
        if !Backend::Pclmul.is_available() {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (ns, nx) in [(1, 1), (3, 2), (7, 7), (10, 3), (2, 9), (40, 17)] {
            let s: Vec<u64> = (0..ns).map(|_| rng.random()).collect();
            let x: Vec<u64> = (0..nx).map(|_| rng.random()).collect();
            let n_out = ns + nx + 1;
            let mut a = vec![(0, 0); n_out];
            let mut b = vec![(0, 0); n_out];
            correlate_words(Backend::Portable, &s, &x, 0, &mut a);
            correlate_words(Backend::Pclmul, &s, &x, 0, &mut b);
            assert_eq!(a, b, "ns={ns} nx={nx}");
        }
    }
}

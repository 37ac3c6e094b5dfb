//! Toeplitz hashing, `out_i = XOR_j seed[i - j + n - 1] & x_j`.
//!
//! The matrix-vector product equals bits `n-1 .. n+m-2` of the GF(2)
//! polynomial product `seed(x) * block(x)`, so only the middle words of that
//! product are computed, with carry-less multiplies on 64-bit words.

use std::path::Path;

use rand::{Rng, SeedableRng, TryRngCore};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::clmul::{correlate_words, Backend};
use super::security::Dimensions;
use super::BitBuf;
use crate::error::{Error, Result};

/// Dimensions, seed and security exponent of one Toeplitz hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzSpec {
    pub n: usize,
    pub m: usize,
    #[serde(with = "seed_hex")]
    pub seed: BitBuf,
    pub epsilon_exp: f64,
}

impl ToeplitzSpec {
    pub fn new(n: usize, m: usize, seed: BitBuf, epsilon_exp: f64) -> Result<Self> {
        if m == 0 || m >= n {
            return Err(Error::InvalidParameter(format!("need 0 < m < n, got m = {m}, n = {n}")));
        }
        if seed.len() != n + m - 1 {
            return Err(Error::DimensionMismatch {
                expected: n + m - 1,
                got: seed.len(),
            });
        }
        Ok(Self {
            n,
            m,
            seed,
            epsilon_exp,
        })
    }

    pub fn from_dimensions(dims: &Dimensions, seed: BitBuf) -> Result<Self> {
        Self::new(dims.n, dims.m, seed, dims.eps_exp)
    }

    pub fn seed_len(&self) -> usize {
        self.n + self.m - 1
    }
}

/// `len` uniformly random bits from the operating system.
pub fn os_seed(len: usize) -> Result<BitBuf> {
    let mut bytes = vec![0u8; len.div_ceil(8)];
    rand::rngs::OsRng
        .try_fill_bytes(&mut bytes)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    BitBuf::from_bytes_le(&bytes, len)
}

/// `len` pseudo-random bits from a ChaCha20 stream keyed by `seed`. Intended
/// for reproducible experiments; production seeds should come from
/// [`os_seed`] or a file.
pub fn deterministic_seed(len: usize, seed: u64) -> BitBuf {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let words: Vec<u64> = (0..len.div_ceil(64)).map(|_| rng.random()).collect();
    BitBuf::from_words(words, len)
}

/// Reads the first `len` bits of a seed file (LSB first within bytes).
pub fn load_seed(path: &Path, len: usize) -> Result<BitBuf> {
    let bytes = std::fs::read(path)?;
    BitBuf::from_bytes_le(&bytes, len)
}

pub fn save_seed(path: &Path, seed: &BitBuf) -> Result<()> {
    std::fs::write(path, seed.to_bytes_le())?;
    Ok(())
}

/// Precomputed hasher for a fixed [`ToeplitzSpec`].
#[derive(Clone, Debug)]
pub struct ToeplitzHasher {
    n: usize,
    m: usize,
    seed: Vec<u64>,
    backend: Backend,
}

const BLOCKS_PER_TASK: usize = 64;

impl ToeplitzHasher {
    pub fn new(spec: &ToeplitzSpec) -> Self {
        Self::with_backend(spec, Backend::detect())
    }

    /// # Panics
    /// If `backend` is not available on this CPU.
    pub fn with_backend(spec: &ToeplitzSpec, backend: Backend) -> Self {
        assert!(backend.is_available(), "{backend:?} backend not available");
        Self {
            n: spec.n,
            m: spec.m,
            seed: spec.seed.words().to_vec(),
            backend,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// Hashes one block given as `ceil(n/64)` words with a zero tail into
    /// `ceil(m/64)` output words.
    pub fn hash_words(&self, x: &[u64], out: &mut [u64]) {
        let mut scratch = Vec::new();
        self.hash_words_with(x, out, &mut scratch);
    }

    fn hash_words_with(&self, x: &[u64], out: &mut [u64], scratch: &mut Vec<(u64, u64)>) {
        let nx = self.n.div_ceil(64);
        let mw = self.m.div_ceil(64);
        debug_assert_eq!(x.len(), nx);
        let first = self.n - 1;
        let (w0, shift) = (first / 64, first % 64);
        // Product words w0 ..= w0 + mw need accumulators from w0 - 1.
        let t_start = w0.saturating_sub(1);
        let count = w0 + mw - t_start + 1;
        scratch.clear();
        scratch.resize(count, (0, 0));
        correlate_words(self.backend, &self.seed, x, t_start, scratch);
        let product = |w: usize| -> u64 {
            let lo = scratch[w - t_start].0;
            let carry = if w > t_start { scratch[w - 1 - t_start].1 } else { 0 };
            lo ^ carry
        };
        for (o, slot) in out[..mw].iter_mut().enumerate() {
            let w = w0 + o;
            *slot = if shift == 0 {
                product(w)
            } else {
                product(w) >> shift | product(w + 1) << (64 - shift)
            };
        }
        if !self.m.is_multiple_of(64) {
            out[mw - 1] &= (1u64 << (self.m % 64)) - 1;
        }
    }

    /// Hashes a single `n`-bit block.
    pub fn hash(&self, block: &BitBuf) -> Result<BitBuf> {
        if block.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: block.len(),
            });
        }
        let mut out = vec![0u64; self.m.div_ceil(64)];
        self.hash_words(block.words(), &mut out);
        Ok(BitBuf::from_words(out, self.m))
    }

    fn hash_range(&self, stream: &BitBuf, blocks: std::ops::Range<usize>) -> BitBuf {
        let mut x = vec![0u64; self.n.div_ceil(64)];
        let mut y = vec![0u64; self.m.div_ceil(64)];
        let mut scratch = Vec::new();
        let mut out = BitBuf::with_capacity(blocks.len() * self.m);
        for b in blocks {
            stream.copy_words(b * self.n, self.n, &mut x);
            self.hash_words_with(&x, &mut y, &mut scratch);
            out.extend_from_words(&y, self.m);
        }
        out
    }

    fn check_stream(&self, stream: &BitBuf) -> Result<usize> {
        if stream.len() < self.n {
            return Err(Error::InsufficientData {
                needed: self.n,
                got: stream.len(),
            });
        }
        Ok(stream.len() / self.n)
    }

    /// Hashes every whole `n`-bit block of `stream` in parallel and
    /// concatenates the outputs in block order. A trailing partial block is
    /// dropped.
    pub fn extract(&self, stream: &BitBuf) -> Result<BitBuf> {
        let blocks = self.check_stream(stream)?;
        let parts: Vec<BitBuf> = (0..blocks.div_ceil(BLOCKS_PER_TASK))
            .into_par_iter()
            .map(|task| {
                let start = task * BLOCKS_PER_TASK;
                self.hash_range(stream, start..(start + BLOCKS_PER_TASK).min(blocks))
            })
            .collect();
        let mut out = BitBuf::with_capacity(blocks * self.m);
        for part in &parts {
            out.append(part);
        }
        Ok(out)
    }

    /// Single-threaded [`ToeplitzHasher::extract`].
    pub fn extract_serial(&self, stream: &BitBuf) -> Result<BitBuf> {
        let blocks = self.check_stream(stream)?;
        Ok(self.hash_range(stream, 0..blocks))
    }
}

pub fn toeplitz_hash(spec: &ToeplitzSpec, block: &BitBuf) -> Result<BitBuf> {
    ToeplitzHasher::new(spec).hash(block)
}

pub fn extract_stream(stream: &BitBuf, spec: &ToeplitzSpec) -> Result<BitBuf> {
    ToeplitzHasher::new(spec).extract(stream)
}

mod seed_hex {
    use super::BitBuf;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        len: usize,
        hex: String,
    }

    pub fn serialize<S: Serializer>(seed: &BitBuf, s: S) -> Result<S::Ok, S::Error> {
        let hex = seed.to_bytes_le().iter().map(|b| format!("{b:02x}")).collect();
        Repr { len: seed.len(), hex }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BitBuf, D::Error> {
        use serde::de::Error;
        let r = Repr::deserialize(d)?;
        if r.hex.len() % 2 != 0 {
            return Err(D::Error::custom("odd-length hex seed"));
        }
        let bytes = (0..r.hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&r.hex[i..i + 2], 16))
            .collect::<Result<Vec<u8>, _>>()
            .map_err(D::Error::custom)?;
        BitBuf::from_bytes_le(&bytes, r.len).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(seed: &BitBuf, n: usize, m: usize, x: &BitBuf) -> BitBuf {
        let mut out = BitBuf::zeros(m);
        for i in 0..m {
            let mut acc = false;
            for j in 0..n {
                acc ^= seed.get(i + n - 1 - j) & x.get(j);
            }
            out.set(i, acc);
        }
        out
    }

    #[test]
    fn small_example_matches_naive() {
        let seed = BitBuf::parse("1010110").unwrap();
        let x = BitBuf::parse("11001").unwrap();
        let spec = ToeplitzSpec::new(5, 3, seed.clone(), 0.0).unwrap();
        let got = toeplitz_hash(&spec, &x).unwrap();
        // rows T[i, j] = seed[i - j + 4]: 10101, 11010, 01101
        assert_eq!(got.to_string(), "000");
        assert_eq!(got, naive(&seed, 5, 3, &x));
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(ToeplitzSpec::new(5, 5, BitBuf::zeros(9), 0.0).is_err());
        assert!(ToeplitzSpec::new(5, 3, BitBuf::zeros(8), 0.0).is_err());
        let spec = ToeplitzSpec::new(5, 3, BitBuf::zeros(7), 0.0).unwrap();
        assert!(toeplitz_hash(&spec, &BitBuf::zeros(4)).is_err());
        assert!(extract_stream(&BitBuf::zeros(4), &spec).is_err());
    }

    #[test]
    fn large_blocks_match_naive_on_both_backends() {
        for (n, m, s) in [(15000, 10788, 1), (640, 64, 2), (129, 128, 3), (65, 1, 4), (200, 130, 5)] {
            let seed = deterministic_seed(n + m - 1, s);
            let x = deterministic_seed(n, s + 100);
            let spec = ToeplitzSpec::new(n, m, seed.clone(), 0.0).unwrap();
            let expect = naive(&seed, n, m, &x);
            for backend in [Backend::Portable, Backend::Pclmul] {
                if backend.is_available() {
                    let h = ToeplitzHasher::with_backend(&spec, backend);
                    assert_eq!(h.hash(&x).unwrap(), expect, "n={n} m={m} {backend:?}");
                }
            }
        }
    }

    #[test]
    fn stream_drops_partial_block_and_matches_serial() {
        let (n, m) = (300, 170);
        let spec = ToeplitzSpec::new(n, m, deterministic_seed(n + m - 1, 9), 0.0).unwrap();
        let stream = deterministic_seed(n * 150 + 17, 10);
        let h = ToeplitzHasher::new(&spec);
        let par = h.extract(&stream).unwrap();
        assert_eq!(par.len(), 150 * m);
        assert_eq!(par, h.extract_serial(&stream).unwrap());
        for b in [0, 63, 64, 149] {
            let block = stream.slice(b * n, n);
            assert_eq!(par.slice(b * m, m), h.hash(&block).unwrap());
        }
    }

    #[test]
    fn spec_serializes_round_trip() {
        let spec = ToeplitzSpec::new(20, 7, deterministic_seed(26, 3), 4.5).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: ToeplitzSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn seed_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seed.bin");
        let seed = deterministic_seed(25811, 5);
        save_seed(&path, &seed).unwrap();
        assert_eq!(load_seed(&path, 25811).unwrap(), seed);
        assert!(load_seed(&path, 25811 + 8).is_err());
        assert_eq!(os_seed(100).unwrap().len(), 100);
    }
}

use crate::error::{Error, Result};

/// Packed bit sequence. Bit `i` lives in word `i / 64` at position `i % 64`;
/// bits past `len` are always zero.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct BitBuf {
    words: Vec<u64>,
    len: usize,
}

impl BitBuf {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self {
            words: Vec::with_capacity(bits.div_ceil(64)),
            len: 0,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    /// Takes ownership of `words`, keeping the first `len` bits.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Self {
        words.resize(len.div_ceil(64), 0);
        let mut b = Self { words, len };
        b.mask_tail();
        b
    }

    /// Parses a string of `0`/`1`, ignoring whitespace.
    pub fn parse(s: &str) -> Result<Self> {
        let mut b = Self::new();
        for c in s.chars() {
            match c {
                '0' => b.push(false),
                '1' => b.push(true),
                c if c.is_whitespace() => {}
                c => return Err(Error::InvalidParameter(format!("invalid bit character {c:?}"))),
            }
        }
        Ok(b)
    }

    /// Bit `i` of the stream is bit `i % 8` of byte `i / 8`.
    pub fn from_bytes_le(bytes: &[u8], len: usize) -> Result<Self> {
        if len > bytes.len() * 8 {
            return Err(Error::InsufficientData {
                needed: len,
                got: bytes.len() * 8,
            });
        }
        let mut words = vec![0u64; len.div_ceil(64)];
        for (w, chunk) in words.iter_mut().zip(bytes.chunks(8)) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            *w = u64::from_le_bytes(buf);
        }
        Ok(Self::from_words(words, len))
    }

    /// Inverse of [`BitBuf::from_bytes_le`]; the last byte is zero padded.
    pub fn to_bytes_le(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len.div_ceil(8));
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(self.len.div_ceil(8));
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn push(&mut self, value: bool) {
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        if value {
            self.words[self.len / 64] |= 1u64 << (self.len % 64);
        }
        self.len += 1;
    }

    /// Appends the low `count` bits of `value`, most significant first.
    pub fn push_msb_first(&mut self, value: u64, count: u32) {
        for b in (0..count).rev() {
            self.push((value >> b) & 1 == 1);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// 64 bits starting at `pos`, zero filled past the end.
    #[inline]
    pub fn word_at(&self, pos: usize) -> u64 {
        let (w, s) = (pos / 64, pos % 64);
        let lo = self.words.get(w).copied().unwrap_or(0) >> s;
        if s == 0 {
            lo
        } else {
            lo | self.words.get(w + 1).copied().unwrap_or(0) << (64 - s)
        }
    }

    /// Copies `len` bits starting at `start` into `out`, zeroing the tail of
    /// the last word. `out` must hold `len.div_ceil(64)` words.
    pub fn copy_words(&self, start: usize, len: usize, out: &mut [u64]) {
        assert!(start + len <= self.len);
        let n_words = len.div_ceil(64);
        for (i, o) in out[..n_words].iter_mut().enumerate() {
            *o = self.word_at(start + 64 * i);
        }
        if !len.is_multiple_of(64) {
            out[n_words - 1] &= (1u64 << (len % 64)) - 1;
        }
    }

    pub fn slice(&self, start: usize, len: usize) -> BitBuf {
        let mut words = vec![0u64; len.div_ceil(64)];
        self.copy_words(start, len, &mut words);
        Self { words, len }
    }

    /// Appends the first `len` bits of `words`.
    pub fn extend_from_words(&mut self, words: &[u64], len: usize) {
        assert!(len <= words.len() * 64);
        let n_words = len.div_ceil(64);
        let shift = self.len % 64;
        self.words.reserve(n_words);
        for (i, &w) in words[..n_words].iter().enumerate() {
            let w = if i == n_words - 1 && !len.is_multiple_of(64) {
                w & ((1u64 << (len % 64)) - 1)
            } else {
                w
            };
            if shift == 0 {
                self.words.push(w);
            } else {
                let last = self.words.len() - 1;
                self.words[last] |= w << shift;
                self.words.push(w >> (64 - shift));
            }
        }
        self.len += len;
        self.words.truncate(self.len.div_ceil(64));
    }

    pub fn append(&mut self, other: &BitBuf) {
        self.extend_from_words(&other.words, other.len);
    }

    pub fn xor(&self, other: &BitBuf) -> BitBuf {
        assert_eq!(self.len, other.len);
        Self {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect(),
            len: self.len,
        }
    }

    fn mask_tail(&mut self) {
        if !self.len.is_multiple_of(64) {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << (self.len % 64)) - 1;
            }
        }
    }
}

impl std::fmt::Display for BitBuf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let b = BitBuf::parse("1010 110").unwrap();
        assert_eq!(b.len(), 7);
        assert_eq!(b.to_string(), "1010110");
        assert!(BitBuf::parse("10x").is_err());
    }

    #[test]
    fn bytes_little_endian_bit_order() {
        let b = BitBuf::from_bytes_le(&[0b0000_0101, 0xff], 10).unwrap();
        assert_eq!(b.to_string(), "1010000011");
        assert_eq!(b.to_bytes_le(), vec![0b0000_0101, 0b11]);
        assert!(BitBuf::from_bytes_le(&[0], 9).is_err());
    }

    #[test]
    fn unaligned_slice_and_append() {
        let mut src = BitBuf::new();
        for i in 0..500 {
            src.push((i * 37 + i / 3) % 5 < 2);
        }
        for (start, len) in [(0, 500), (3, 64), (63, 130), (100, 1), (7, 0)] {
            let s = src.slice(start, len);
            assert_eq!(s.len(), len);
            for i in 0..len {
                assert_eq!(s.get(i), src.get(start + i));
            }
        }
        let mut joined = src.slice(0, 77);
        joined.append(&src.slice(77, 200));
        joined.append(&src.slice(277, 223));
        assert_eq!(joined, src);
    }
}

//! Sample-to-bit packing: each code is written offset-binary
//! (`code + 2^(N-1)`), most significant bit first, `p` before `q`.

use super::BitBuf;
use crate::error::{Error, Result};

fn check_bits(bits: u32) -> Result<()> {
    if (1..=16).contains(&bits) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("bits per code must be in 1..=16, got {bits}")))
    }
}

/// Packs code pairs into `2N` bits per sample.
pub fn samples_to_bits(p: &[i16], q: &[i16], bits: u32) -> Result<BitBuf> {
    check_bits(bits)?;
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    let offset = 1i64 << (bits - 1);
    let max = (1i64 << bits) - 1;
    let mut out = BitBuf::with_capacity(p.len() * 2 * bits as usize);
    for (&a, &b) in p.iter().zip(q) {
        for code in [a, b] {
            let v = code as i64 + offset;
            if !(0..=max).contains(&v) {
                return Err(Error::CodeOutOfRange {
                    code: code as i64,
                    bits,
                });
            }
            out.push_msb_first(v as u64, bits);
        }
    }
    Ok(out)
}

/// Inverse of [`samples_to_bits`].
pub fn bits_to_samples(stream: &BitBuf, bits: u32) -> Result<(Vec<i16>, Vec<i16>)> {
    check_bits(bits)?;
    let per = 2 * bits as usize;
    if !stream.len().is_multiple_of(per) {
        return Err(Error::Format(format!(
            "stream of {} bits is not a whole number of {per}-bit pairs",
            stream.len()
        )));
    }
    let offset = 1i64 << (bits - 1);
    let read = |pos: usize| -> i16 {
        let mut v = 0i64;
        for i in 0..bits as usize {
            v = v << 1 | stream.get(pos + i) as i64;
        }
        (v - offset) as i16
    };
    let n = stream.len() / per;
    let mut p = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for t in 0..n {
        p.push(read(t * per));
        q.push(read(t * per + bits as usize));
    }
    Ok((p, q))
}

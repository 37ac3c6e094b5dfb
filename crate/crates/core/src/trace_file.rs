//! On-disk trace formats.
//!
//! The native format is a 64-byte little-endian header followed by
//! interleaved `i16` code pairs `p0 q0 p1 q1 ...`:
//!
//! | offset | type  | field            |
//! |--------|-------|------------------|
//! | 0      | [u8;8]| magic `QRNGTRC1` |
//! | 8      | u32   | ADC bits         |
//! | 12     | u32   | reserved (0)     |
//! | 16     | f64   | sample rate, Hz  |
//! | 24     | f64   | full scale, V    |
//! | 32     | f64   | photocurrent, A  |
//! | 40     | u64   | pairs            |
//! | 48     | u64   | simulator seed   |
//! | 56     | [u8;8]| zero padding     |
//!
//! Headerless dumps (e.g. 12-bit codes carried in 16-bit words) are read with
//! a TOML [`RawDescriptor`] that supplies the metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source_sim::{AdcSpec, RawTrace};

pub const MAGIC: &[u8; 8] = b"QRNGTRC1";
pub const HEADER_LEN: usize = 64;

pub fn encode_trace(trace: &RawTrace) -> Result<Vec<u8>> {
    trace.validate()?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * trace.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&trace.adc.bits.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&trace.adc.sample_rate.to_le_bytes());
    out.extend_from_slice(&trace.adc.full_scale.to_le_bytes());
    out.extend_from_slice(&trace.photocurrent.to_le_bytes());
    out.extend_from_slice(&(trace.len() as u64).to_le_bytes());
    out.extend_from_slice(&trace.seed.to_le_bytes());
    out.extend_from_slice(&[0u8; 8]);
    for (p, q) in trace.p_codes.iter().zip(&trace.q_codes) {
        out.extend_from_slice(&p.to_le_bytes());
        out.extend_from_slice(&q.to_le_bytes());
    }
    Ok(out)
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn le_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn le_f64(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn split_pairs(body: &[u8]) -> (Vec<i16>, Vec<i16>) {
    let n = body.len() / 4;
    let mut p = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for c in body.chunks_exact(4) {
        p.push(i16::from_le_bytes([c[0], c[1]]));
        q.push(i16::from_le_bytes([c[2], c[3]]));
    }
    (p, q)
}

pub fn decode_trace(bytes: &[u8]) -> Result<RawTrace> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated header: {} of {HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format("bad magic: not a trace file".into()));
    }
    let adc = AdcSpec {
        bits: le_u32(bytes, 8),
        sample_rate: le_f64(bytes, 16),
        full_scale: le_f64(bytes, 24),
    };
    adc.validate().map_err(|e| Error::Format(format!("invalid header: {e}")))?;
    let pairs = le_u64(bytes, 40) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != pairs * 4 {
        return Err(Error::Format(format!(
            "truncated or oversized body: header declares {pairs} pairs ({} bytes), found {} bytes",
            pairs * 4,
            body.len()
        )));
    }
    let (p_codes, q_codes) = split_pairs(body);
    let trace = RawTrace {
        p_codes,
        q_codes,
        adc,
        photocurrent: le_f64(bytes, 32),
        seed: le_u64(bytes, 48),
    };
    trace.validate()?;
    Ok(trace)
}

pub fn write_trace(path: &Path, trace: &RawTrace) -> Result<()> {
    std::fs::write(path, encode_trace(trace)?)?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<RawTrace> {
    decode_trace(&std::fs::read(path)?)
}

/// Placement of an `N`-bit code inside its 16-bit word.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Justify {
    /// Code in the low bits, sign-extended (or zero-extended for offset binary).
    #[default]
    Low,
    /// Code in the high bits, low bits ignored.
    High,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    #[default]
    TwosComplement,
    OffsetBinary,
}

/// Metadata for a headerless dump of interleaved 16-bit little-endian
/// `p, q` words.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDescriptor {
    pub bits: u32,
    pub sample_rate_hz: f64,
    pub full_scale_v: f64,
    #[serde(default)]
    pub photocurrent_a: f64,
    #[serde(default)]
    pub justify: Justify,
    #[serde(default)]
    pub encoding: Encoding,
}

impl RawDescriptor {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn adc(&self) -> Result<AdcSpec> {
        AdcSpec::new(self.bits, self.full_scale_v, self.sample_rate_hz)
    }

    fn decode_word(&self, raw: i16) -> i16 {
        let unused = 16 - self.bits;
        let word = raw as u16;
        let field = match self.justify {
            Justify::Low => word & (u16::MAX >> unused),
            Justify::High => word >> unused,
        };
        match self.encoding {
            Encoding::OffsetBinary => (field as i32 - (1 << (self.bits - 1))) as i16,
            Encoding::TwosComplement => ((field << unused) as i16) >> unused,
        }
    }

    /// Checks that, for low-justified data, the unused high bits are a
    /// proper extension of the code; anything else is out of range.
    fn check_word(&self, raw: i16) -> Result<i16> {
        let code = self.decode_word(raw);
        if self.justify == Justify::Low {
            let expect = match self.encoding {
                Encoding::TwosComplement => code,
                Encoding::OffsetBinary => (code as i32 + (1 << (self.bits - 1))) as i16,
            };
            if expect != raw {
                return Err(Error::CodeOutOfRange {
                    code: raw as i64,
                    bits: self.bits,
                });
            }
        }
        Ok(code)
    }

    pub fn decode(&self, bytes: &[u8]) -> Result<RawTrace> {
        let adc = self.adc()?;
        if !bytes.len().is_multiple_of(4) {
            return Err(Error::Format(format!(
                "truncated file: {} bytes is not a whole number of 4-byte pairs",
                bytes.len()
            )));
        }
        let (p, q) = split_pairs(bytes);
        let decode = |v: Vec<i16>| v.into_iter().map(|w| self.check_word(w)).collect::<Result<Vec<_>>>();
        let trace = RawTrace {
            p_codes: decode(p)?,
            q_codes: decode(q)?,
            adc,
            photocurrent: self.photocurrent_a,
            seed: 0,
        };
        trace.validate()?;
        Ok(trace)
    }
}

/// How to interpret a trace file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceFormat {
    /// Self-describing file with the native header.
    Native,
    /// Headerless dump plus metadata.
    Headerless(RawDescriptor),
}

/// Conventional sidecar path, `<file>.toml`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

pub fn ingest_trace(path: &Path, format: &TraceFormat) -> Result<RawTrace> {
    let bytes = std::fs::read(path)?;
    match format {
        TraceFormat::Native => decode_trace(&bytes),
        TraceFormat::Headerless(d) => d.decode(&bytes),
    }
}

/// Reads a native file, or a headerless one if a sidecar descriptor exists
/// next to it.
pub fn ingest_auto(path: &Path) -> Result<RawTrace> {
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        ingest_trace(path, &TraceFormat::Headerless(RawDescriptor::load(&sidecar)?))
    } else {
        ingest_trace(path, &TraceFormat::Native)
    }
}

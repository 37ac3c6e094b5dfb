//! Toeplitz randomness extraction.
//!
//! Conditioned samples are packed into a bit stream ([`packing`]), cut into
//! `n`-bit blocks, and each block is multiplied over GF(2) by the same
//! `m x n` Toeplitz matrix ([`toeplitz`]). The matrix dimensions come from the
//! min-entropy budget through the leftover hash lemma ([`security`]).

mod bits;
mod clmul;
pub mod packing;
pub mod security;
pub mod toeplitz;

pub use bits::BitBuf;
pub use clmul::Backend;
pub use packing::{bits_to_samples, samples_to_bits};
pub use security::{check_dimensions, choose_dimensions, eps_exp, ratio_condition, Dimensions};
pub use toeplitz::{extract_stream, toeplitz_hash, ToeplitzHasher, ToeplitzSpec};

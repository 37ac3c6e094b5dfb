//! Post-processing chain for a heterodyne vacuum-noise quantum random number
//! generator.
//!
//! The crate is organised the way the data flows:
//!
//! * [`source_sim`] synthesises band-limited two-quadrature ADC traces whose
//!   variance grows linearly with the local-oscillator photocurrent.
//! * [`dsp`] band-pass filters traces, measures autocorrelation and picks the
//!   decimation factor.
//! * [`calibration`] fits variance against photocurrent, converts to vacuum
//!   units and computes the conditional min-entropy budget.
//! * [`extractor`] packs samples into bits and runs Toeplitz hashing with
//!   leftover-hash security accounting.
//! * [`stattests`] runs a subset of the NIST SP 800-22 battery and the
//!   before/after autocorrelation comparison.
//! * [`pipeline`] wires the stages together behind a single config file.
//!
//! [`trace_file`] reads and writes the binary trace format (and headerless
//! dumps described by a sidecar), and [`scenario`] holds the reference
//! operating point the simulator defaults to.

pub mod calibration;
pub mod dsp;
mod error;
pub mod extractor;
pub mod pipeline;
pub mod scenario;
pub mod seeds;
pub mod source_sim;
pub mod stattests;
pub mod trace_file;

pub use error::{Error, Result, StageContext};

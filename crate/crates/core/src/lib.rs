//! OTFS pulse-radar simulation.
//!
//! A pilot symbol on the delay-Doppler grid is windowed, pulse-shaped and
//! transmitted once per pulse repetition interval. The echo passes through a
//! multipath channel with fractional delays and Doppler shifts; the receiver
//! matched-filters, forms the discrete cross-ambiguity surface, detects the
//! integer bins and refines each path by fitting a separable ambiguity model
//! to a 2 x 2 block of the surface.

pub mod channel;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod otfs;
pub mod receiver;
pub mod waveforms;

pub use error::{Error, Result};

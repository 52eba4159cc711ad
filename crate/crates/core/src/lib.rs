//! Electromagnetic-fault corruption of neural-network weight buffers.
//!
//! The crate models byte-level fault masks, applies them to weight blobs in
//! FP32, FP16, INT8 or packed INT4 form, measures the damage (bit error rate,
//! extremal-byte fraction, NaN fraction, range expansion) and runs chunked
//! sensitivity campaigns on a small CNN inference engine.

pub mod analytics;
pub mod campaign;
pub mod error;
pub mod faults;
pub mod formats;
pub mod nn;

pub use error::{Error, Result};

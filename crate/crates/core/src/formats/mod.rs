//! Weight representations: IEEE 754 binary32/binary16, symmetric per-channel
//! INT8 and packed INT4, plus the manifest-described weight store that holds
//! them in one little-endian blob.

mod convert;
mod fp;
mod int4;
mod quant;
mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use convert::{convert_store, SCALE_FLOOR};
pub use fp::{decode_fp, encode_fp, FloatFormat, FpClass, FpParts};
pub use int4::{pack_int4, unpack_int4};
pub use quant::{dequantize, quantize, ChannelQuant, QuantParams};
pub(crate) use store::decode_with as store_decode;
pub use store::{decode_tensor, encode_tensor, Manifest, TensorMeta, WeightStore};

/// The four weight encodings under study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatKind {
    Fp32,
    Fp16,
    Int8,
    Int4,
}

impl FormatKind {
    pub const ALL: [FormatKind; 4] = [
        FormatKind::Fp32,
        FormatKind::Fp16,
        FormatKind::Int8,
        FormatKind::Int4,
    ];

    pub fn bits(self) -> usize {
        match self {
            FormatKind::Fp32 => 32,
            FormatKind::Fp16 => 16,
            FormatKind::Int8 => 8,
            FormatKind::Int4 => 4,
        }
    }

    /// Bytes needed for `count` elements; INT4 rounds up to a whole byte.
    pub fn byte_len(self, count: usize) -> usize {
        (count * self.bits()).div_ceil(8)
    }

    /// Largest-magnitude representable values (finite for FP formats).
    pub fn range(self) -> (f64, f64) {
        match self {
            FormatKind::Fp32 => (-(f32::MAX as f64), f32::MAX as f64),
            FormatKind::Fp16 => (-65504.0, 65504.0),
            FormatKind::Int8 => (-128.0, 127.0),
            FormatKind::Int4 => (-8.0, 7.0),
        }
    }

    /// Integer clamp bounds for the quantized formats.
    pub fn q_range(self) -> Option<(i64, i64)> {
        match self {
            FormatKind::Int8 => Some((-128, 127)),
            FormatKind::Int4 => Some((-8, 7)),
            _ => None,
        }
    }

    pub fn float(self) -> Option<FloatFormat> {
        match self {
            FormatKind::Fp32 => Some(FloatFormat::FP32),
            FormatKind::Fp16 => Some(FloatFormat::FP16),
            _ => None,
        }
    }

    pub fn is_float(self) -> bool {
        self.float().is_some()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FormatKind::Fp32 => "fp32",
            FormatKind::Fp16 => "fp16",
            FormatKind::Int8 => "int8",
            FormatKind::Int4 => "int4",
        }
    }
}

impl fmt::Display for FormatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormatKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fp32" => Ok(FormatKind::Fp32),
            "fp16" => Ok(FormatKind::Fp16),
            "int8" => Ok(FormatKind::Int8),
            "int4" => Ok(FormatKind::Int4),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

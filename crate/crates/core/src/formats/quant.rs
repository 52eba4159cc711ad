use serde::{Deserialize, Serialize};

use super::FormatKind;
use crate::error::{Error, Result};

/// Per-channel affine quantization parameters as stored in the manifest.
/// The clamp bounds are a property of the tensor's format, see
/// [`QuantParams::channel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub axis: usize,
    pub scales: Vec<f64>,
    pub zero_points: Vec<i64>,
}

/// Quantization parameters of a single channel, with its format's bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelQuant {
    pub scale: f64,
    pub zero_point: i64,
    pub q_min: i64,
    pub q_max: i64,
}

impl ChannelQuant {
    pub fn new(scale: f64, zero_point: i64, format: FormatKind) -> Result<Self> {
        let (q_min, q_max) = format.q_range().ok_or_else(|| {
            Error::UnsupportedFormat(format!("{format} is not an integer format"))
        })?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParams(format!(
                "scale must be positive, got {scale}"
            )));
        }
        Ok(Self {
            scale,
            zero_point,
            q_min,
            q_max,
        })
    }

    /// Dequantized extremes of the channel: `S(q_min - Z)` and `S(q_max - Z)`.
    pub fn bounds(&self) -> (f64, f64) {
        (
            (self.q_min - self.zero_point) as f64 * self.scale,
            (self.q_max - self.zero_point) as f64 * self.scale,
        )
    }
}

impl QuantParams {
    /// Symmetric parameters: every zero point is 0.
    pub fn symmetric(axis: usize, scales: Vec<f64>) -> Self {
        let zero_points = vec![0; scales.len()];
        Self {
            axis,
            scales,
            zero_points,
        }
    }

    pub fn channels(&self) -> usize {
        self.scales.len()
    }

    pub fn channel(&self, c: usize, format: FormatKind) -> Result<ChannelQuant> {
        let scale = *self
            .scales
            .get(c)
            .ok_or_else(|| Error::OutOfBounds(format!("channel {c} of {}", self.scales.len())))?;
        ChannelQuant::new(scale, self.zero_points[c], format)
    }

    /// Checks the parameters against a tensor shape and integer format.
    pub fn validate(&self, shape: &[usize], format: FormatKind) -> Result<()> {
        let (q_min, q_max) = format.q_range().ok_or_else(|| {
            Error::InvalidParams(format!("{format} tensors carry no quantization"))
        })?;
        let dim = *shape.get(self.axis).ok_or_else(|| {
            Error::InvalidParams(format!("axis {} outside rank {}", self.axis, shape.len()))
        })?;
        if self.scales.len() != dim || self.zero_points.len() != dim {
            return Err(Error::InvalidParams(format!(
                "{} scales / {} zero points for axis of size {dim}",
                self.scales.len(),
                self.zero_points.len()
            )));
        }
        if let Some(s) = self.scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidParams(format!("non-positive scale {s}")));
        }
        if let Some(z) = self
            .zero_points
            .iter()
            .find(|z| !(q_min..=q_max).contains(*z))
        {
            return Err(Error::InvalidParams(format!(
                "zero point {z} outside [{q_min}, {q_max}]"
            )));
        }
        Ok(())
    }
}

/// `q = clamp(round_half_even(r / S) + Z, q_min, q_max)`.
pub fn quantize(r: f64, p: &ChannelQuant) -> Result<i64> {
    if !r.is_finite() {
        return Err(Error::InvalidReal(r));
    }
    let q = (r / p.scale).round_ties_even() as i64 + p.zero_point;
    Ok(q.clamp(p.q_min, p.q_max))
}

/// `r = (q - Z) * S`.
pub fn dequantize(q: i64, p: &ChannelQuant) -> Result<f64> {
    if !(p.q_min..=p.q_max).contains(&q) {
        return Err(Error::InvalidQuant {
            value: q,
            min: p.q_min,
            max: p.q_max,
        });
    }
    Ok((q - p.zero_point) as f64 * p.scale)
}

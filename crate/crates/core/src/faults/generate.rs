use serde::{Deserialize, Serialize};

use super::mask::{FaultMask, FaultRecord};
use super::rng::SeededRng;
use crate::error::{Error, Result};

pub const MIB: usize = 1 << 20;

/// Each of the `8 * len` bits flips independently with probability `ber`.
/// Bits are visited byte by byte, LSB first, one draw each.
pub fn gen_random_bitflips(len: usize, ber: f64, seed: u64) -> Result<FaultMask> {
    check_fraction("ber", ber)?;
    if ber == 0.0 {
        return Ok(FaultMask::empty(len));
    }
    let mut rng = SeededRng::new(seed);
    let mut records = Vec::new();
    for offset in 0..len {
        let mut flips = 0u8;
        for bit in 0..8 {
            if rng.chance(ber) {
                flips |= 1 << bit;
            }
        }
        if flips != 0 {
            records.push(FaultRecord::xor(offset, flips));
        }
    }
    FaultMask::new(len, records)
}

/// SETs `value` at `floor(fraction * len)` distinct offsets drawn uniformly
/// without replacement (partial Fisher-Yates over `0..len`).
pub fn gen_byte_set(len: usize, fraction: f64, value: u8, seed: u64) -> Result<FaultMask> {
    check_fraction("fraction", fraction)?;
    let count = ((fraction * len as f64).floor() as usize).min(len);
    let mut rng = SeededRng::new(seed);
    let mut pool: Vec<usize> = (0..len).collect();
    for i in 0..count {
        let j = i + rng.below((len - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut offsets = pool[..count].to_vec();
    offsets.sort_unstable();
    FaultMask::new(
        len,
        offsets
            .into_iter()
            .map(|o| FaultRecord::set(o, value))
            .collect(),
    )
}

/// Geometry of the periodic row-overwrite pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmfiPatternParams {
    pub window_len: usize,
    /// Offset where fault density drops from `target_rate` to
    /// `post_boundary_rate`.
    pub boundary_offset: usize,
    pub row_len: usize,
    pub row_period: usize,
    pub fe_value: u8,
    pub alt_pair: [u8; 2],
    /// Share of corrupted bytes in `[0, boundary_offset)`.
    pub target_rate: f64,
    pub post_boundary_rate: f64,
    /// Probability that a byte of an extremal row reads 0xFF instead of
    /// `fe_value`.
    pub ff_share: f64,
    pub seed: u64,
}

impl Default for EmfiPatternParams {
    fn default() -> Self {
        Self {
            window_len: 4 * MIB,
            boundary_offset: 2 * MIB,
            row_len: 16,
            row_period: 64,
            fe_value: 0xFE,
            alt_pair: [0x00, 0x3C],
            target_rate: 0.15,
            post_boundary_rate: 0.01,
            ff_share: 0.3,
            seed: 0,
        }
    }
}

impl EmfiPatternParams {
    pub fn validate(&self) -> Result<()> {
        if !(0 < self.row_len
            && self.row_len <= self.row_period
            && self.row_period <= self.window_len)
        {
            return Err(Error::InvalidParams(format!(
                "need 0 < row_len ({}) <= row_period ({}) <= window_len ({})",
                self.row_len, self.row_period, self.window_len
            )));
        }
        if self.boundary_offset > self.window_len {
            return Err(Error::InvalidParams(format!(
                "boundary_offset {} beyond window_len {}",
                self.boundary_offset, self.window_len
            )));
        }
        check_fraction("target_rate", self.target_rate)?;
        check_fraction("post_boundary_rate", self.post_boundary_rate)?;
        check_fraction("ff_share", self.ff_share)
    }

    /// Rescales the window to `len` bytes, keeping the boundary at the same
    /// relative position. Rows shrink only if a period no longer fits.
    pub fn fit_to(&self, len: usize) -> Self {
        let mut p = self.clone();
        if self.window_len == 0 {
            p.window_len = len;
            p.boundary_offset = len;
        } else {
            p.boundary_offset =
                (self.boundary_offset as u128 * len as u128 / self.window_len as u128) as usize;
            p.window_len = len;
        }
        if p.row_period > len {
            p.row_period = len.max(1);
            p.row_len = p.row_len.min(p.row_period);
        }
        p
    }

    /// Probability that a period carries a row, for a region at `rate`.
    fn duty(&self, rate: f64) -> f64 {
        (rate * self.row_period as f64 / self.row_len as f64).min(1.0)
    }
}

/// Periodic row corruption. The window is cut into `row_period`-byte
/// periods; per period the generator draws `unit()` (row present when below
/// the region's duty cycle), then `below(row_period - row_len + 1)` (row
/// start jitter). Present rows alternate, starting with an extremal row:
///
/// * extremal rows SET every byte to `fe_value`, or to 0xFF when a further
///   `unit()` draw per byte falls below `ff_share`;
/// * alternate rows SET `alt_pair[offset % 2]`, so at even alignment they read
///   as the little-endian half word `alt_pair[1] alt_pair[0]`.
///
/// A period belongs to the high-density region when it starts before
/// `boundary_offset`.
pub fn gen_emfi_pattern(p: &EmfiPatternParams) -> Result<FaultMask> {
    p.validate()?;
    let mut rng = SeededRng::new(p.seed);
    let mut records = Vec::new();
    let mut extremal_next = true;
    let slack = (p.row_period - p.row_len + 1) as u64;
    let mut start = 0;
    while start < p.window_len {
        let rate = if start < p.boundary_offset {
            p.target_rate
        } else {
            p.post_boundary_rate
        };
        let present = rng.chance(p.duty(rate));
        let row_start = start + rng.below(slack) as usize;
        if present {
            let row_end = (row_start + p.row_len).min(p.window_len);
            for offset in row_start..row_end {
                let value = if extremal_next {
                    if rng.chance(p.ff_share) {
                        0xFF
                    } else {
                        p.fe_value
                    }
                } else {
                    p.alt_pair[offset % 2]
                };
                records.push(FaultRecord::set(offset, value));
            }
            extremal_next = !extremal_next;
        }
        start += p.row_period;
    }
    FaultMask::new(p.window_len, records)
}

/// A fault generator selectable from configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultModel {
    None,
    RandomBitflips { ber: f64 },
    ByteSet { fraction: f64, value: u8 },
    Emfi(EmfiPatternParams),
}

impl Default for FaultModel {
    fn default() -> Self {
        FaultModel::Emfi(EmfiPatternParams::default())
    }
}

impl FaultModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            FaultModel::None => Ok(()),
            FaultModel::RandomBitflips { ber } => check_fraction("ber", *ber),
            FaultModel::ByteSet { fraction, .. } => check_fraction("fraction", *fraction),
            FaultModel::Emfi(p) => p.validate(),
        }
    }

    /// Mask over a window of `len` bytes. EMFI parameters are fitted to the
    /// window and their seed replaced by `seed`.
    pub fn generate(&self, len: usize, seed: u64) -> Result<FaultMask> {
        match self {
            FaultModel::None => Ok(FaultMask::empty(len)),
            FaultModel::RandomBitflips { ber } => gen_random_bitflips(len, *ber, seed),
            FaultModel::ByteSet { fraction, value } => gen_byte_set(len, *fraction, *value, seed),
            FaultModel::Emfi(p) => {
                let mut fitted = p.fit_to(len);
                fitted.seed = seed;
                gen_emfi_pattern(&fitted)
            }
        }
    }
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "{name} must lie in [0, 1], got {v}"
        )))
    }
}

//! Two's-complement INT4 packing, low nibble first.

use crate::error::{Error, Result};

/// Packs values in [-8, 7] two per byte: element `2i` in bits 0-3 of byte
/// `i`, element `2i + 1` in bits 4-7. An odd tail leaves the high nibble 0.
pub fn pack_int4(values: &[i64]) -> Result<Vec<u8>> {
    let mut out = vec![0u8; values.len().div_ceil(2)];
    for (i, &v) in values.iter().enumerate() {
        if !(-8..=7).contains(&v) {
            return Err(Error::InvalidQuant {
                value: v,
                min: -8,
                max: 7,
            });
        }
        let nibble = (v as u8) & 0x0F;
        out[i / 2] |= nibble << (4 * (i % 2));
    }
    Ok(out)
}

/// Inverse of [`pack_int4`] for the first `count` nibbles.
pub fn unpack_int4(bytes: &[u8], count: usize) -> Result<Vec<i64>> {
    if count > 2 * bytes.len() {
        return Err(Error::OutOfBounds(format!(
            "{count} nibbles requested from {} bytes",
            bytes.len()
        )));
    }
    Ok((0..count).map(|i| nibble_at(bytes, i)).collect())
}

#[inline]
pub(crate) fn nibble_at(bytes: &[u8], i: usize) -> i64 {
    let n = (bytes[i / 2] >> (4 * (i % 2))) & 0x0F;
    // Sign-extend through the top bit of the nibble.
    (((n << 4) as i8) >> 4) as i64
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultOp {
    Xor,
    Set,
}

impl FaultOp {
    fn opcode(self) -> u8 {
        match self {
            FaultOp::Xor => 0,
            FaultOp::Set => 1,
        }
    }

    fn from_opcode(code: u8) -> Result<Self> {
        match code {
            0 => Ok(FaultOp::Xor),
            1 => Ok(FaultOp::Set),
            _ => Err(Error::InvalidParams(format!("unknown fault opcode {code}"))),
        }
    }
}

/// A single byte-level fault relative to the start of a mask window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaultRecord {
    pub offset: usize,
    pub op: FaultOp,
    pub value: u8,
}

impl FaultRecord {
    pub fn xor(offset: usize, value: u8) -> Self {
        Self {
            offset,
            op: FaultOp::Xor,
            value,
        }
    }

    pub fn set(offset: usize, value: u8) -> Self {
        Self {
            offset,
            op: FaultOp::Set,
            value,
        }
    }

    #[inline]
    pub fn apply(&self, byte: u8) -> u8 {
        match self.op {
            FaultOp::Xor => byte ^ self.value,
            FaultOp::Set => self.value,
        }
    }
}

/// Faults over a window of `target_len` bytes, at most one per offset, in
/// ascending offset order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMask")]
pub struct FaultMask {
    target_len: usize,
    records: Vec<FaultRecord>,
}

#[derive(Deserialize)]
struct RawMask {
    target_len: usize,
    records: Vec<FaultRecord>,
}

impl TryFrom<RawMask> for FaultMask {
    type Error = Error;

    fn try_from(raw: RawMask) -> Result<Self> {
        FaultMask::new(raw.target_len, raw.records)
    }
}

impl FaultMask {
    pub fn new(target_len: usize, records: Vec<FaultRecord>) -> Result<Self> {
        for pair in records.windows(2) {
            if pair[1].offset <= pair[0].offset {
                return Err(Error::InvalidParams(format!(
                    "record offsets must strictly increase ({} then {})",
                    pair[0].offset, pair[1].offset
                )));
            }
        }
        if let Some(r) = records.last() {
            if r.offset >= target_len {
                return Err(Error::OutOfBounds(format!(
                    "record offset {} outside window of {target_len} bytes",
                    r.offset
                )));
            }
        }
        if let Some(r) = records
            .iter()
            .find(|r| r.op == FaultOp::Xor && r.value == 0)
        {
            return Err(Error::InvalidParams(format!(
                "no-op XOR record at {}",
                r.offset
            )));
        }
        Ok(Self {
            target_len,
            records,
        })
    }

    pub fn empty(target_len: usize) -> Self {
        Self {
            target_len,
            records: Vec::new(),
        }
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }

    pub fn records(&self) -> &[FaultRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Applies the mask in place at `base_offset`.
    pub fn apply_in_place(&self, blob: &mut [u8], base_offset: usize) -> Result<()> {
        let end = base_offset.checked_add(self.target_len);
        if end.is_none_or(|e| e > blob.len()) {
            return Err(Error::OutOfBounds(format!(
                "window {base_offset}+{} exceeds blob of {} bytes",
                self.target_len,
                blob.len()
            )));
        }
        let window = &mut blob[base_offset..base_offset + self.target_len];
        for r in &self.records {
            window[r.offset] = r.apply(window[r.offset]);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Compact form: 6 bytes per record, `u32` offset then opcode
    /// (0 = XOR, 1 = SET) then value, little-endian. The window length is
    /// not part of the encoding.
    pub fn to_binary(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.records.len() * 6);
        for r in &self.records {
            let offset = u32::try_from(r.offset).map_err(|_| {
                Error::OutOfBounds(format!("offset {} does not fit in 32 bits", r.offset))
            })?;
            out.extend_from_slice(&offset.to_le_bytes());
            out.push(r.op.opcode());
            out.push(r.value);
        }
        Ok(out)
    }

    pub fn from_binary(bytes: &[u8], target_len: usize) -> Result<Self> {
        if !bytes.len().is_multiple_of(6) {
            return Err(Error::InvalidParams(format!(
                "binary mask length {} is not a multiple of 6",
                bytes.len()
            )));
        }
        let records = bytes
            .chunks_exact(6)
            .map(|c| {
                Ok(FaultRecord {
                    offset: u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize,
                    op: FaultOp::from_opcode(c[4])?,
                    value: c[5],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(target_len, records)
    }
}

/// Returns a faulted copy of `blob`; the input is untouched.
pub fn apply_mask(blob: &[u8], mask: &FaultMask, base_offset: usize) -> Result<Vec<u8>> {
    let mut out = blob.to_vec();
    mask.apply_in_place(&mut out, base_offset)?;
    Ok(out)
}

/// XOR records for every differing byte, so that
/// `apply_mask(original, &diff_to_mask(original, corrupted)?, 0) == corrupted`.
pub fn diff_to_mask(original: &[u8], corrupted: &[u8]) -> Result<FaultMask> {
    if original.len() != corrupted.len() {
        return Err(Error::LengthMismatch {
            left: original.len(),
            right: corrupted.len(),
        });
    }
    let records = original
        .iter()
        .zip(corrupted)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, (a, b))| FaultRecord::xor(i, a ^ b))
        .collect();
    Ok(FaultMask {
        target_len: original.len(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_examples() {
        let blob = vec![1, 2, 3];
        assert_eq!(apply_mask(&blob, &FaultMask::empty(3), 0).unwrap(), blob);

        let set = FaultMask::new(1, vec![FaultRecord::set(0, 0xFE)]).unwrap();
        assert_eq!(apply_mask(&[0x00], &set, 0).unwrap(), vec![0xFE]);

        let flip = FaultMask::new(1, vec![FaultRecord::xor(0, 0xFF)]).unwrap();
        let once = apply_mask(&[0x5A], &flip, 0).unwrap();
        assert_eq!(once, vec![0xA5]);
        assert_eq!(apply_mask(&once, &flip, 0).unwrap(), vec![0x5A]);
    }

    #[test]
    fn apply_respects_base_offset() {
        let mask = FaultMask::new(2, vec![FaultRecord::set(1, 9)]).unwrap();
        assert_eq!(apply_mask(&[0; 4], &mask, 2).unwrap(), vec![0, 0, 0, 9]);
        assert!(matches!(
            apply_mask(&[0; 4], &mask, 3),
            Err(Error::OutOfBounds(_))
        ));
    }

    #[test]
    fn diff_examples() {
        assert!(diff_to_mask(&[1, 2], &[1, 2]).unwrap().is_empty());
        let m = diff_to_mask(&[0x00], &[0xFE]).unwrap();
        assert_eq!(m.records(), &[FaultRecord::xor(0, 0xFE)]);
        assert!(matches!(
            diff_to_mask(&[0], &[0, 0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn invariants_enforced() {
        assert!(FaultMask::new(4, vec![FaultRecord::xor(0, 0)]).is_err());
        assert!(FaultMask::new(4, vec![FaultRecord::set(4, 1)]).is_err());
        assert!(FaultMask::new(4, vec![FaultRecord::set(2, 1), FaultRecord::set(2, 3)]).is_err());
        assert!(FaultMask::new(4, vec![FaultRecord::set(2, 1), FaultRecord::set(1, 3)]).is_err());
    }

    #[test]
    fn json_schema_and_validation() {
        let m = FaultMask::new(8, vec![FaultRecord::xor(1, 3), FaultRecord::set(5, 0xFE)]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["target_len"], 8);
        assert_eq!(v["records"][0]["op"], "xor");
        assert_eq!(v["records"][1]["value"], 254);
        assert_eq!(FaultMask::from_json(&m.to_json().unwrap()).unwrap(), m);
        let bad = r#"{"target_len": 2, "records": [{"offset": 5, "op": "set", "value": 1}]}"#;
        assert!(FaultMask::from_json(bad).is_err());
    }

    #[test]
    fn binary_layout() {
        let m = FaultMask::new(0x300, vec![FaultRecord::set(0x0201, 0xFE)]).unwrap();
        let bin = m.to_binary().unwrap();
        assert_eq!(bin, vec![0x01, 0x02, 0x00, 0x00, 0x01, 0xFE]);
        assert_eq!(FaultMask::from_binary(&bin, 0x300).unwrap(), m);
        assert!(FaultMask::from_binary(&bin[..5], 0x300).is_err());
    }
}

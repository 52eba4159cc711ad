use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::int4::{nibble_at, pack_int4};
use super::quant::{dequantize, quantize, ChannelQuant};
use super::{FormatKind, QuantParams};
use crate::error::{Error, Result};

/// One tensor's placement and encoding inside the weight blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub format: FormatKind,
    pub byte_offset: usize,
    pub byte_length: usize,
    pub quant: Option<QuantParams>,
}

impl TensorMeta {
    pub fn num_elements(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn byte_range(&self) -> std::ops::Range<usize> {
        self.byte_offset..self.byte_offset + self.byte_length
    }

    /// Blob offset of the first byte of element `i`.
    pub fn element_offset(&self, i: usize) -> usize {
        self.byte_offset + i * self.format.bits() / 8
    }

    /// Channel of element `i` along the quantization axis.
    pub(crate) fn channel_of(&self, i: usize, axis: usize) -> usize {
        let inner: usize = self.shape[axis + 1..].iter().product();
        (i / inner) % self.shape[axis]
    }

    fn validate(&self) -> Result<()> {
        if self.shape.contains(&0) {
            return Err(Error::InvalidParams(format!(
                "{}: zero-sized dimension",
                self.name
            )));
        }
        let expected = self.format.byte_len(self.num_elements());
        if self.byte_length != expected {
            return Err(Error::InvalidParams(format!(
                "{}: byte_length {} but {} {} elements need {expected}",
                self.name,
                self.byte_length,
                self.num_elements(),
                self.format
            )));
        }
        match (&self.quant, self.format.is_float()) {
            (Some(_), true) => Err(Error::InvalidParams(format!(
                "{}: floating-point tensor with quantization parameters",
                self.name
            ))),
            (None, false) => Err(Error::InvalidParams(format!(
                "{}: integer tensor without quantization parameters",
                self.name
            ))),
            (Some(q), false) => q.validate(&self.shape, self.format),
            (None, true) => Ok(()),
        }
    }
}

/// JSON manifest: `{"tensors": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tensors: Vec<TensorMeta>,
}

/// A little-endian weight blob and the manifest describing it.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightStore {
    blob: Vec<u8>,
    tensors: Vec<TensorMeta>,
}

impl WeightStore {
    /// Validates that tensors are well-formed, ascending, disjoint and inside
    /// the blob.
    pub fn new(blob: Vec<u8>, tensors: Vec<TensorMeta>) -> Result<Self> {
        let mut end = 0usize;
        for t in &tensors {
            t.validate()?;
            if t.byte_offset < end {
                return Err(Error::InvalidParams(format!(
                    "{} at offset {} overlaps or precedes the previous tensor (ends at {end})",
                    t.name, t.byte_offset
                )));
            }
            end = t.byte_offset + t.byte_length;
            if end > blob.len() {
                return Err(Error::OutOfBounds(format!(
                    "{} ends at {end}, blob holds {} bytes",
                    t.name,
                    blob.len()
                )));
            }
        }
        for (i, t) in tensors.iter().enumerate() {
            if tensors[..i].iter().any(|u| u.name == t.name) {
                return Err(Error::InvalidParams(format!(
                    "duplicate tensor name {}",
                    t.name
                )));
            }
        }
        Ok(Self { blob, tensors })
    }

    pub fn load(manifest: &Path, blob: &Path) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(&fs::read(manifest)?)?;
        Self::new(fs::read(blob)?, m.tensors)
    }

    pub fn blob(&self) -> &[u8] {
        &self.blob
    }

    pub fn tensors(&self) -> &[TensorMeta] {
        &self.tensors
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            tensors: self.tensors.clone(),
        }
    }

    pub fn meta(&self, name: &str) -> Result<&TensorMeta> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::UnknownTensor(name.to_string()))
    }

    /// Same manifest over a replacement blob of identical length.
    pub fn with_blob(&self, blob: Vec<u8>) -> Result<Self> {
        if blob.len() != self.blob.len() {
            return Err(Error::LengthMismatch {
                left: self.blob.len(),
                right: blob.len(),
            });
        }
        Ok(Self {
            blob,
            tensors: self.tensors.clone(),
        })
    }

    pub fn same_manifest(&self, other: &WeightStore) -> bool {
        self.tensors == other.tensors && self.blob.len() == other.blob.len()
    }

    /// Format shared by every tensor, if uniform.
    pub fn format(&self) -> Option<FormatKind> {
        let first = self.tensors.first()?.format;
        self.tensors
            .iter()
            .all(|t| t.format == first)
            .then_some(first)
    }
}

/// Decodes tensor `name` into row-major reals.
pub fn decode_tensor(store: &WeightStore, name: &str) -> Result<Vec<f64>> {
    decode_with(store.blob(), store.meta(name)?)
}

/// Decodes `meta` out of an arbitrary blob (for instance a corrupted copy).
pub(crate) fn decode_with(blob: &[u8], meta: &TensorMeta) -> Result<Vec<f64>> {
    let bytes = blob.get(meta.byte_range()).ok_or_else(|| {
        Error::OutOfBounds(format!(
            "{} spans {:?}, blob holds {} bytes",
            meta.name,
            meta.byte_range(),
            blob.len()
        ))
    })?;
    let n = meta.num_elements();
    match meta.format {
        FormatKind::Fp32 => Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect()),
        FormatKind::Fp16 => {
            let f = super::FloatFormat::FP16;
            Ok(bytes
                .chunks_exact(2)
                .map(|b| f.value(u16::from_le_bytes([b[0], b[1]]) as u32))
                .collect())
        }
        FormatKind::Int8 | FormatKind::Int4 => {
            let q = meta.quant.as_ref().ok_or_else(|| {
                Error::InvalidParams(format!("{} has no quantization parameters", meta.name))
            })?;
            let channels = (0..q.channels())
                .map(|c| q.channel(c, meta.format))
                .collect::<Result<Vec<ChannelQuant>>>()?;
            (0..n)
                .map(|i| {
                    let raw = match meta.format {
                        FormatKind::Int8 => bytes[i] as i8 as i64,
                        _ => nibble_at(bytes, i),
                    };
                    dequantize(raw, &channels[meta.channel_of(i, q.axis)])
                })
                .collect()
        }
    }
}

/// Encodes row-major reals for a tensor of `shape` in `format`.
/// Integer formats require `quant` and quantize each element per channel.
pub fn encode_tensor(
    values: &[f64],
    shape: &[usize],
    format: FormatKind,
    quant: Option<&QuantParams>,
) -> Result<Vec<u8>> {
    let n: usize = shape.iter().product();
    if values.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} values for shape {shape:?}",
            values.len()
        )));
    }
    match format {
        FormatKind::Fp32 => Ok(values
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect()),
        FormatKind::Fp16 => {
            let f = super::FloatFormat::FP16;
            Ok(values
                .iter()
                .flat_map(|&v| (f.encode(v) as u16).to_le_bytes())
                .collect())
        }
        FormatKind::Int8 | FormatKind::Int4 => {
            let q = quant.ok_or_else(|| {
                Error::InvalidParams(format!("{format} encoding needs quantization parameters"))
            })?;
            q.validate(shape, format)?;
            let meta = TensorMeta {
                name: String::new(),
                shape: shape.to_vec(),
                format,
                byte_offset: 0,
                byte_length: 0,
                quant: None,
            };
            let qs = values
                .iter()
                .enumerate()
                .map(|(i, &v)| quantize(v, &q.channel(meta.channel_of(i, q.axis), format)?))
                .collect::<Result<Vec<i64>>>()?;
            if format == FormatKind::Int8 {
                Ok(qs.iter().map(|&v| v as i8 as u8).collect())
            } else {
                pack_int4(&qs)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(name: &str, shape: &[usize], format: FormatKind, offset: usize) -> TensorMeta {
        let n: usize = shape.iter().product();
        TensorMeta {
            name: name.into(),
            shape: shape.to_vec(),
            format,
            byte_offset: offset,
            byte_length: format.byte_len(n),
            quant: None,
        }
    }

    #[test]
    fn fp32_little_endian() {
        let store = WeightStore::new(
            vec![0x00, 0x00, 0x80, 0x3F],
            vec![meta("w", &[1], FormatKind::Fp32, 0)],
        )
        .unwrap();
        assert_eq!(decode_tensor(&store, "w").unwrap(), vec![1.0]);
    }

    #[test]
    fn fp16_alt_pair_reads_as_one() {
        let store =
            WeightStore::new(vec![0x00, 0x3C], vec![meta("w", &[1], FormatKind::Fp16, 0)]).unwrap();
        assert_eq!(decode_tensor(&store, "w").unwrap(), vec![1.0]);
    }

    #[test]
    fn int8_and_int4_dequantize() {
        let mut m = meta("w", &[1], FormatKind::Int8, 0);
        m.quant = Some(QuantParams::symmetric(0, vec![0.01]));
        let store = WeightStore::new(vec![0x81], vec![m]).unwrap();
        let w = decode_tensor(&store, "w").unwrap();
        assert!((w[0] + 1.27).abs() < 1e-12);

        let mut m = meta("w", &[1, 2], FormatKind::Int4, 0);
        m.quant = Some(QuantParams::symmetric(0, vec![0.5]));
        let store = WeightStore::new(vec![0x78], vec![m]).unwrap();
        assert_eq!(decode_tensor(&store, "w").unwrap(), vec![-4.0, 3.5]);
    }

    #[test]
    fn per_channel_axis_indexing() {
        // shape [2, 3] along axis 1: scales by column.
        let mut m = meta("w", &[2, 3], FormatKind::Int8, 0);
        m.quant = Some(QuantParams::symmetric(1, vec![1.0, 2.0, 4.0]));
        let store = WeightStore::new(vec![1, 1, 1, 2, 2, 2], vec![m]).unwrap();
        assert_eq!(
            decode_tensor(&store, "w").unwrap(),
            vec![1.0, 2.0, 4.0, 2.0, 4.0, 8.0]
        );
    }

    #[test]
    fn errors() {
        let store =
            WeightStore::new(vec![0; 4], vec![meta("w", &[1], FormatKind::Fp32, 0)]).unwrap();
        assert!(matches!(
            decode_tensor(&store, "x"),
            Err(Error::UnknownTensor(_))
        ));
        assert!(matches!(
            decode_with(&[0; 2], store.meta("w").unwrap()),
            Err(Error::OutOfBounds(_))
        ));
        // Truncated blob at construction.
        assert!(WeightStore::new(vec![0; 3], vec![meta("w", &[1], FormatKind::Fp32, 0)]).is_err());
        // Overlap.
        assert!(WeightStore::new(
            vec![0; 8],
            vec![
                meta("a", &[1], FormatKind::Fp32, 0),
                meta("b", &[1], FormatKind::Fp32, 2)
            ]
        )
        .is_err());
        // Wrong byte length.
        let mut bad = meta("w", &[3], FormatKind::Int4, 0);
        bad.byte_length = 1;
        bad.quant = Some(QuantParams::symmetric(0, vec![1.0; 3]));
        assert!(WeightStore::new(vec![0; 4], vec![bad]).is_err());
        // Integer tensor without parameters.
        assert!(WeightStore::new(vec![0; 1], vec![meta("w", &[1], FormatKind::Int8, 0)]).is_err());
    }

    #[test]
    fn odd_int4_tensor_pads_high_nibble() {
        let q = QuantParams::symmetric(0, vec![1.0; 3]);
        let bytes = encode_tensor(&[1.0, -1.0, 2.0], &[3], FormatKind::Int4, Some(&q)).unwrap();
        assert_eq!(bytes, vec![0xF1, 0x02]);
    }

    #[test]
    fn encode_decode_round_trip() {
        let values = [0.5, -0.25, 1.0, 3.0];
        for format in [FormatKind::Fp32, FormatKind::Fp16] {
            let bytes = encode_tensor(&values, &[4], format, None).unwrap();
            let mut m = meta("w", &[4], format, 0);
            m.byte_length = bytes.len();
            let store = WeightStore::new(bytes, vec![m]).unwrap();
            assert_eq!(decode_tensor(&store, "w").unwrap(), values);
        }
    }

    #[test]
    fn manifest_json_shape() {
        let mut m = meta("fc.weight", &[2, 2], FormatKind::Int8, 0);
        m.quant = Some(QuantParams::symmetric(0, vec![0.5, 0.25]));
        let json = serde_json::to_value(Manifest { tensors: vec![m] }).unwrap();
        let t = &json["tensors"][0];
        assert_eq!(t["format"], "int8");
        assert_eq!(t["quant"]["axis"], 0);
        assert_eq!(t["quant"]["zero_points"][1], 0);
        let fp = serde_json::to_value(meta("b", &[1], FormatKind::Fp32, 0)).unwrap();
        assert!(fp["quant"].is_null());
    }
}

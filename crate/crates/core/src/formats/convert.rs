use super::store::decode_with;
use super::{encode_tensor, FormatKind, QuantParams, TensorMeta, WeightStore};
use crate::error::{Error, Result};

/// Scale given to all-zero channels; keeps every dequantized value exactly 0.
pub const SCALE_FLOOR: f64 = 1.0 / 16_777_216.0; // 2^-24

/// Re-encodes an all-FP32 store into `target`, packing tensors contiguously
/// in manifest order. Integer targets use symmetric per-channel quantization
/// along axis 0 with `S_c = max|w_c| / q_max`.
pub fn convert_store(store: &WeightStore, target: FormatKind) -> Result<WeightStore> {
    let mut blob = Vec::new();
    let mut tensors = Vec::with_capacity(store.tensors().len());
    for meta in store.tensors() {
        if meta.format != FormatKind::Fp32 {
            return Err(Error::UnsupportedFormat(format!(
                "{} is {}, conversion needs fp32 input",
                meta.name, meta.format
            )));
        }
        let values = decode_with(store.blob(), meta)?;
        let quant = target
            .q_range()
            .map(|(_, q_max)| symmetric_params(&values, &meta.shape, q_max));
        let bytes = encode_tensor(&values, &meta.shape, target, quant.as_ref())?;
        tensors.push(TensorMeta {
            name: meta.name.clone(),
            shape: meta.shape.clone(),
            format: target,
            byte_offset: blob.len(),
            byte_length: bytes.len(),
            quant,
        });
        blob.extend_from_slice(&bytes);
    }
    WeightStore::new(blob, tensors)
}

fn symmetric_params(values: &[f64], shape: &[usize], q_max: i64) -> QuantParams {
    let channels = shape[0];
    let inner = values.len() / channels;
    let scales = values
        .chunks(inner)
        .map(|c| {
            let max = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if max > 0.0 {
                max / q_max as f64
            } else {
                SCALE_FLOOR
            }
        })
        .collect();
    QuantParams::symmetric(0, scales)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::decode_tensor;

    fn fp32_store(values: &[f32], shape: &[usize]) -> WeightStore {
        let blob: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        let meta = TensorMeta {
            name: "w".into(),
            shape: shape.to_vec(),
            format: FormatKind::Fp32,
            byte_offset: 0,
            byte_length: blob.len(),
            quant: None,
        };
        WeightStore::new(blob, vec![meta]).unwrap()
    }

    fn raw_int8(store: &WeightStore) -> Vec<i8> {
        store.blob().iter().map(|&b| b as i8).collect()
    }

    #[test]
    fn int8_channel_scale_and_values() {
        let store = fp32_store(&[-1.0, 0.5], &[1, 2]);
        let q = convert_store(&store, FormatKind::Int8).unwrap();
        let params = q.tensors()[0].quant.as_ref().unwrap();
        assert_eq!(params.scales, vec![1.0 / 127.0]);
        assert_eq!(params.zero_points, vec![0]);
        assert_eq!(raw_int8(&q), vec![-127, 64]);
        let back = decode_tensor(&q, "w").unwrap();
        let s = params.scales[0];
        assert!((back[0] + 1.0).abs() <= s / 2.0);
        assert!((back[1] - 0.5).abs() <= s / 2.0);
    }

    #[test]
    fn zero_channel_uses_floor() {
        let store = fp32_store(&[0.0, 0.0, 1.0, -2.0], &[2, 2]);
        let q = convert_store(&store, FormatKind::Int4).unwrap();
        let params = q.tensors()[0].quant.as_ref().unwrap();
        assert_eq!(params.scales[0], SCALE_FLOOR);
        assert_eq!(params.scales[1], 2.0 / 7.0);
        let back = decode_tensor(&q, "w").unwrap();
        assert_eq!(&back[..2], &[0.0, 0.0]);
    }

    #[test]
    fn quantize_dequantize_quantize_is_idempotent() {
        let values: Vec<f32> = (0..64)
            .map(|i| ((i * 37 % 23) as f32 - 11.0) / 13.0)
            .collect();
        let store = fp32_store(&values, &[4, 16]);
        for target in [FormatKind::Int8, FormatKind::Int4] {
            let once = convert_store(&store, target).unwrap();
            let deq = decode_tensor(&once, "w").unwrap();
            let deq: Vec<f32> = deq.iter().map(|&v| v as f32).collect();
            let twice = convert_store(&fp32_store(&deq, &[4, 16]), target).unwrap();
            assert_eq!(once.blob(), twice.blob(), "{target}");
        }
    }

    #[test]
    fn fp16_target_and_layout() {
        let store = fp32_store(&[1.0, -2.0, 0.5], &[3]);
        let h = convert_store(&store, FormatKind::Fp16).unwrap();
        assert_eq!(h.blob(), &[0x00, 0x3C, 0x00, 0xC0, 0x00, 0x38]);
        assert!(h.tensors()[0].quant.is_none());
    }

    #[test]
    fn rejects_non_fp32_source() {
        let store = fp32_store(&[1.0, 2.0], &[2]);
        let h = convert_store(&store, FormatKind::Fp16).unwrap();
        assert!(matches!(
            convert_store(&h, FormatKind::Int8),
            Err(Error::UnsupportedFormat(_))
        ));
    }
}

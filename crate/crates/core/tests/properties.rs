use emfisim_core::analytics::bit_error_rate;
use emfisim_core::campaign::{assign_region, chunk_ranges, Region};
use emfisim_core::faults::{
    apply_mask, diff_to_mask, gen_byte_set, gen_emfi_pattern, gen_random_bitflips,
    EmfiPatternParams, FaultMask, FaultOp, FaultRecord,
};
use emfisim_core::formats::{
    convert_store, decode_tensor, dequantize, pack_int4, quantize, unpack_int4, ChannelQuant,
    FormatKind, QuantParams, TensorMeta, WeightStore,
};
use proptest::prelude::*;

fn int_store(
    format: FormatKind,
    channels: usize,
    inner: usize,
    scales: Vec<f64>,
    zero_points: Vec<i64>,
    blob: Vec<u8>,
) -> WeightStore {
    let n = channels * inner;
    let meta = TensorMeta {
        name: "w".into(),
        shape: vec![channels, inner],
        format,
        byte_offset: 0,
        byte_length: format.byte_len(n),
        quant: Some(QuantParams {
            axis: 0,
            scales,
            zero_points,
        }),
    };
    WeightStore::new(blob[..format.byte_len(n)].to_vec(), vec![meta]).unwrap()
}

prop_compose! {
    fn quantized_case()(
        int8 in any::<bool>(),
        channels in 1usize..8,
        inner in 1usize..16,
    )(
        format in Just(if int8 { FormatKind::Int8 } else { FormatKind::Int4 }),
        scales in proptest::collection::vec(1e-6f64..10.0, channels),
        zps in proptest::collection::vec(if int8 { -128i64..=127 } else { -8i64..=7 }, channels),
        blob in proptest::collection::vec(any::<u8>(), channels * inner),
        channels in Just(channels),
        inner in Just(inner),
    ) -> (FormatKind, usize, usize, Vec<f64>, Vec<i64>, Vec<u8>) {
        (format, channels, inner, scales, zps, blob)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn corrupted_integers_stay_in_channel_range(case in quantized_case()) {
        let (format, channels, inner, scales, zps, blob) = case;
        let store = int_store(format, channels, inner, scales.clone(), zps.clone(), blob);
        let values = decode_tensor(&store, "w").unwrap();
        for (i, v) in values.iter().enumerate() {
            let c = ChannelQuant::new(scales[i / inner], zps[i / inner], format).unwrap();
            let (lo, hi) = c.bounds();
            prop_assert!(v.is_finite() && lo <= *v && *v <= hi, "{v} outside [{lo}, {hi}]");
        }
    }
}

proptest! {
    #[test]
    fn int4_pack_round_trip(values in proptest::collection::vec(-8i64..=7, 0..64)) {
        let packed = pack_int4(&values).unwrap();
        prop_assert_eq!(packed.len(), values.len().div_ceil(2));
        prop_assert_eq!(unpack_int4(&packed, values.len()).unwrap(), values);
    }

    #[test]
    fn int4_unpack_repack(bytes in proptest::collection::vec(any::<u8>(), 0..32)) {
        let values = unpack_int4(&bytes, bytes.len() * 2).unwrap();
        prop_assert_eq!(pack_int4(&values).unwrap(), bytes);
    }

    #[test]
    fn quantization_error_within_half_step(
        r in -100.0f64..100.0,
        scale in 1e-3f64..10.0,
        int8 in any::<bool>(),
    ) {
        let format = if int8 { FormatKind::Int8 } else { FormatKind::Int4 };
        let c = ChannelQuant::new(scale, 0, format).unwrap();
        let (lo, hi) = c.bounds();
        let q = quantize(r, &c).unwrap();
        let back = dequantize(q, &c).unwrap();
        if lo <= r && r <= hi {
            prop_assert!((back - r).abs() <= scale / 2.0 * (1.0 + 1e-12));
        }
        prop_assert_eq!(quantize(back, &c).unwrap(), q);
    }

    #[test]
    fn diff_then_apply_reproduces(
        pair in proptest::collection::vec((any::<u8>(), any::<u8>()), 1..256),
    ) {
        let (a, b): (Vec<u8>, Vec<u8>) = pair.into_iter().unzip();
        let mask = diff_to_mask(&a, &b).unwrap();
        prop_assert_eq!(apply_mask(&a, &mask, 0).unwrap(), b);
    }

    #[test]
    fn xor_masks_are_involutions(
        blob in proptest::collection::vec(any::<u8>(), 1..256),
        ber in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let mask = gen_random_bitflips(blob.len(), ber, seed).unwrap();
        let once = apply_mask(&blob, &mask, 0).unwrap();
        prop_assert_eq!(apply_mask(&once, &mask, 0).unwrap(), blob);
    }

    #[test]
    fn ber_is_symmetric_and_bounded(
        pair in proptest::collection::vec((any::<u8>(), any::<u8>()), 1..256),
    ) {
        let (a, b): (Vec<u8>, Vec<u8>) = pair.into_iter().unzip();
        let ab = bit_error_rate(&a, &b).unwrap();
        prop_assert_eq!(ab, bit_error_rate(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(bit_error_rate(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn ber_ignores_format(
        values in proptest::collection::vec(-1.0f32..1.0, 8..64),
        seed in any::<u64>(),
    ) {
        // Four stores of different formats trimmed to a common byte length.
        let blob: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        let meta = TensorMeta {
            name: "w".into(),
            shape: vec![values.len(), 1],
            format: FormatKind::Fp32,
            byte_offset: 0,
            byte_length: blob.len(),
            quant: None,
        };
        let fp32 = WeightStore::new(blob, vec![meta]).unwrap();
        let blobs: Vec<Vec<u8>> = FormatKind::ALL
            .iter()
            .map(|&f| convert_store(&fp32, f).unwrap().blob().to_vec())
            .collect();
        let len = blobs.iter().map(Vec::len).min().unwrap();
        let mask = gen_random_bitflips(len, 0.05, seed).unwrap();
        let bers: Vec<f64> = blobs
            .iter()
            .map(|b| {
                let b = &b[..len];
                bit_error_rate(b, &apply_mask(b, &mask, 0).unwrap()).unwrap()
            })
            .collect();
        prop_assert!(bers.iter().all(|&x| x == bers[0]), "{bers:?}");
    }

    #[test]
    fn generated_masks_are_well_formed(
        len in 1usize..4096,
        fraction in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        for mask in [
            gen_random_bitflips(len, fraction / 8.0, seed).unwrap(),
            gen_byte_set(len, fraction, 0xFF, seed).unwrap(),
        ] {
            check_mask(&mask, len)?;
        }
        let bs = gen_byte_set(len, fraction, 0xFF, seed).unwrap();
        prop_assert_eq!(bs.len(), (fraction * len as f64).floor() as usize);
    }

    #[test]
    fn emfi_masks_are_well_formed_and_deterministic(
        len in 64usize..65536,
        rate in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let p = EmfiPatternParams {
            target_rate: rate,
            seed,
            ..EmfiPatternParams::default()
        }
        .fit_to(len);
        let mask = gen_emfi_pattern(&p).unwrap();
        check_mask(&mask, len)?;
        prop_assert!(mask.records().iter().all(|r| r.op == FaultOp::Set));
        prop_assert_eq!(gen_emfi_pattern(&p).unwrap(), mask);
    }

    #[test]
    fn mask_serialization_round_trips(
        offsets in proptest::collection::btree_set(0usize..10_000, 0..64),
        values in proptest::collection::vec(1u8..=255, 64),
        set in any::<bool>(),
    ) {
        let records: Vec<FaultRecord> = offsets
            .iter()
            .zip(&values)
            .map(|(&o, &v)| if set { FaultRecord::set(o, v) } else { FaultRecord::xor(o, v) })
            .collect();
        let mask = FaultMask::new(10_000, records).unwrap();
        prop_assert_eq!(FaultMask::from_json(&mask.to_json().unwrap()).unwrap(), mask.clone());
        prop_assert_eq!(FaultMask::from_binary(&mask.to_binary().unwrap(), 10_000).unwrap(), mask);
    }

    #[test]
    fn chunks_partition_the_blob(total in 1usize..100_000, chunk in 1usize..10_000) {
        let ranges = chunk_ranges(total, chunk);
        prop_assert_eq!(ranges.len(), total.div_ceil(chunk));
        prop_assert_eq!(ranges[0].start, 0);
        prop_assert_eq!(ranges.last().unwrap().end, total);
        for w in ranges.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
        }
        prop_assert!(ranges.iter().all(|r| !r.is_empty() && r.len() <= chunk));
        let regions: Vec<Region> = ranges.iter().map(|r| assign_region(r, total)).collect();
        prop_assert!(regions.windows(2).all(|w| w[0] <= w[1]));
    }
}

fn check_mask(mask: &FaultMask, len: usize) -> Result<(), TestCaseError> {
    prop_assert_eq!(mask.target_len(), len);
    let r = mask.records();
    prop_assert!(r.windows(2).all(|w| w[0].offset < w[1].offset));
    prop_assert!(r.iter().all(|x| x.offset < len));
    Ok(())
}

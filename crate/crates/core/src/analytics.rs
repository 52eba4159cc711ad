//! Corruption statistics and logical fault maps.

use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faults::FaultMask;
use crate::formats::WeightStore;

/// Changed bits over total bits.
pub fn bit_error_rate(original: &[u8], corrupted: &[u8]) -> Result<f64> {
    if original.len() != corrupted.len() {
        return Err(Error::LengthMismatch {
            left: original.len(),
            right: corrupted.len(),
        });
    }
    if original.is_empty() {
        return Err(Error::InvalidParams(
            "bit error rate of an empty buffer".into(),
        ));
    }
    let flipped: u64 = original
        .iter()
        .zip(corrupted)
        .map(|(a, b)| (a ^ b).count_ones() as u64)
        .sum();
    Ok(flipped as f64 / (8 * original.len()) as f64)
}

/// Share of all bytes equal to 0xFE or 0xFF. Empty input yields 0.
pub fn feff_fraction(bytes: &[u8]) -> f64 {
    if bytes.is_empty() {
        return 0.0;
    }
    bytes.iter().filter(|&&b| b >= 0xFE).count() as f64 / bytes.len() as f64
}

/// Damage summary for one injection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionReport {
    pub ber: f64,
    pub feff_fraction: f64,
    /// Only present when floating-point weights were examined.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nan_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub inf_fraction: Option<f64>,
    pub pre_range: Option<(f64, f64)>,
    pub post_range: Option<(f64, f64)>,
    pub range_expansion: Option<f64>,
}

pub const REPORT_CSV_HEADER: &str =
    "ber,feff_fraction,nan_fraction,inf_fraction,pre_min,pre_max,post_min,post_max,range_expansion";

impl CorruptionReport {
    /// Comma-separated values in [`REPORT_CSV_HEADER`] order; absent values
    /// are empty fields.
    pub fn csv_fields(&self) -> String {
        let (pre_min, pre_max) = split(self.pre_range);
        let (post_min, post_max) = split(self.post_range);
        [
            Some(self.ber),
            Some(self.feff_fraction),
            self.nan_fraction,
            self.inf_fraction,
            pre_min,
            pre_max,
            post_min,
            post_max,
            self.range_expansion,
        ]
        .iter()
        .map(|v| opt_field(*v))
        .collect::<Vec<_>>()
        .join(",")
    }

    pub fn to_csv(&self) -> String {
        format!("{REPORT_CSV_HEADER}\n{}\n", self.csv_fields())
    }
}

fn split(r: Option<(f64, f64)>) -> (Option<f64>, Option<f64>) {
    match r {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    }
}

pub(crate) fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Default)]
struct Extent(Option<(f64, f64)>);

impl Extent {
    fn add(&mut self, v: f64) {
        if !v.is_finite() {
            return;
        }
        self.0 = Some(match self.0 {
            Some((lo, hi)) => (lo.min(v), hi.max(v)),
            None => (v, v),
        });
    }
}

/// Statistics of `post` against `pre` restricted to the bytes in `range`:
/// BER and 0xFE/0xFF share over those bytes, and weight statistics over the
/// elements whose first byte lies in `range`. NaN/Inf shares count
/// floating-point elements only; ranges ignore non-finite values.
pub fn corruption_report(
    pre: &WeightStore,
    post: &WeightStore,
    range: Range<usize>,
) -> Result<CorruptionReport> {
    if !pre.same_manifest(post) {
        return Err(Error::ManifestMismatch(
            "pre- and post-injection stores describe different tensors".into(),
        ));
    }
    if range.end > pre.blob().len() || range.start > range.end {
        return Err(Error::OutOfBounds(format!(
            "range {range:?} outside blob of {} bytes",
            pre.blob().len()
        )));
    }
    let ber = bit_error_rate(&pre.blob()[range.clone()], &post.blob()[range.clone()])?;
    let feff = feff_fraction(&post.blob()[range.clone()]);

    let (mut fp_total, mut nan, mut inf) = (0usize, 0usize, 0usize);
    let (mut pre_ext, mut post_ext) = (Extent::default(), Extent::default());
    for meta in pre.tensors() {
        if meta.byte_offset >= range.end || meta.byte_offset + meta.byte_length <= range.start {
            continue;
        }
        let before = crate::formats::store_decode(pre.blob(), meta)?;
        let after = crate::formats::store_decode(post.blob(), meta)?;
        for (i, (b, a)) in before.iter().zip(&after).enumerate() {
            if !range.contains(&meta.element_offset(i)) {
                continue;
            }
            if meta.format.is_float() {
                fp_total += 1;
                nan += a.is_nan() as usize;
                inf += a.is_infinite() as usize;
            }
            pre_ext.add(*b);
            post_ext.add(*a);
        }
    }
    let frac = |n: usize| (fp_total > 0).then(|| n as f64 / fp_total as f64);
    let range_expansion = match (pre_ext.0, post_ext.0) {
        (Some((plo, phi)), Some((qlo, qhi))) if phi > plo => Some((qhi - qlo) / (phi - plo)),
        _ => None,
    };
    Ok(CorruptionReport {
        ber,
        feff_fraction: feff,
        nan_fraction: frac(nan),
        inf_fraction: frac(inf),
        pre_range: pre_ext.0,
        post_range: post_ext.0,
        range_expansion,
    })
}

/// Whole-store statistics; requires at least one floating-point tensor.
pub fn fp_corruption_stats(pre: &WeightStore, post: &WeightStore) -> Result<CorruptionReport> {
    if !pre.tensors().iter().any(|t| t.format.is_float()) {
        return Err(Error::UnsupportedFormat(
            "no floating-point tensors in the store".into(),
        ));
    }
    corruption_report(pre, post, 0..pre.blob().len())
}

/// Report for raw bytes without a manifest: BER and 0xFE/0xFF share only.
pub fn byte_report(original: &[u8], corrupted: &[u8]) -> Result<CorruptionReport> {
    Ok(CorruptionReport {
        ber: bit_error_rate(original, corrupted)?,
        feff_fraction: feff_fraction(corrupted),
        nan_fraction: None,
        inf_fraction: None,
        pre_range: None,
        post_range: None,
        range_expansion: None,
    })
}

/// Width of the dequantized range an integer tensor can ever reach, over the
/// widest channel. `None` for floating-point formats.
pub fn integer_range_cap(store: &WeightStore) -> Option<f64> {
    let mut cap: Option<f64> = None;
    for meta in store.tensors() {
        let (q_min, q_max) = meta.format.q_range()?;
        let q = meta.quant.as_ref()?;
        for &s in &q.scales {
            let w = (q_max - q_min) as f64 * s;
            cap = Some(cap.map_or(w, |c: f64| c.max(w)));
        }
    }
    cap
}

/// Default map geometry: 256 columns of 64-byte cells (4 MiB per 256 rows).
pub const DEFAULT_MAP_WIDTH: usize = 256;
pub const DEFAULT_BYTES_PER_CELL: usize = 64;

/// Logical map of a fault window: cell `(r, c)` covers bytes
/// `[(r*width + c) * bytes_per_cell, ... + bytes_per_cell)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaultMap {
    pub width: usize,
    pub height: usize,
    pub bytes_per_cell: usize,
    cells: Vec<bool>,
}

pub fn render_fault_map(mask: &FaultMask, width: usize, bytes_per_cell: usize) -> Result<FaultMap> {
    if width == 0 || bytes_per_cell == 0 {
        return Err(Error::InvalidParams(
            "fault map width and bytes_per_cell must be positive".into(),
        ));
    }
    let n_cells = mask.target_len().div_ceil(bytes_per_cell);
    let height = n_cells.div_ceil(width);
    let mut cells = vec![false; width * height];
    for r in mask.records() {
        cells[r.offset / bytes_per_cell] = true;
    }
    Ok(FaultMap {
        width,
        height,
        bytes_per_cell,
        cells,
    })
}

impl FaultMap {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn set_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Share of set cells among rows `rows`.
    pub fn density(&self, rows: Range<usize>) -> f64 {
        let cells = &self.cells[rows.start * self.width..rows.end * self.width];
        if cells.is_empty() {
            return 0.0;
        }
        cells.iter().filter(|&&c| c).count() as f64 / cells.len() as f64
    }

    /// Binary PGM (P5, maxval 255): corrupted cells 255, clean cells 0.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.cells.iter().map(|&c| if c { 255u8 } else { 0 }));
        out
    }

    /// `row,col` of every set cell, row-major.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col\n");
        for (i, _) in self.cells.iter().enumerate().filter(|(_, c)| **c) {
            let _ = writeln!(out, "{},{}", i / self.width, i % self.width);
        }
        out
    }
}

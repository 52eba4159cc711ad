//! Chunked sensitivity campaigns: fault one contiguous window of the weight
//! blob at a time, re-evaluate, and summarize by network region.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{corruption_report, opt_field, CorruptionReport};
use crate::error::{Error, Result};
use crate::faults::{FaultMask, FaultModel, MIB};
use crate::formats::{convert_store, FormatKind, WeightStore};
use crate::nn::{evaluate, Accuracy, EvalSet, Model, ModelDesc};

/// Chunk length used for blobs of at least this size.
pub const DEFAULT_CHUNK_LEN: usize = 4 * MIB;

/// Chunks per campaign when the blob is smaller than [`DEFAULT_CHUNK_LEN`].
pub const SMALL_BLOB_CHUNKS: usize = 16;

/// Inputs and parameters of a campaign. Relative paths in a spec file are
/// resolved against the file's directory by [`CampaignSpec::load`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    /// Model description (layers and tensor names).
    pub model: PathBuf,
    /// Manifest of the FP32 source weights.
    pub manifest: PathBuf,
    /// FP32 weight blob.
    pub weights: PathBuf,
    /// Evaluation set descriptor.
    pub eval: PathBuf,
    /// Defaults to [`default_chunk_len`] of each format's blob.
    #[serde(default)]
    pub chunk_len: Option<usize>,
    #[serde(default)]
    pub fault_model: FaultModel,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_formats")]
    pub formats: Vec<FormatKind>,
}

fn all_formats() -> Vec<FormatKind> {
    FormatKind::ALL.to_vec()
}

impl CampaignSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec: Self = serde_json::from_slice(&fs::read(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut spec.model,
            &mut spec.manifest,
            &mut spec.weights,
            &mut spec.eval,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_len == Some(0) {
            return Err(Error::InvalidParams("chunk_len must be positive".into()));
        }
        if self.formats.is_empty() {
            return Err(Error::InvalidParams("no formats requested".into()));
        }
        self.fault_model.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    Front,
    Middle,
    Back,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Front, Region::Middle, Region::Back];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Front => "Front",
            Region::Middle => "Middle",
            Region::Back => "Back",
        }
    }
}

/// 4 MiB for large blobs, a sixteenth of the blob (rounded up) otherwise.
pub fn default_chunk_len(blob_len: usize) -> usize {
    if blob_len >= DEFAULT_CHUNK_LEN {
        DEFAULT_CHUNK_LEN
    } else {
        blob_len.div_ceil(SMALL_BLOB_CHUNKS).max(1)
    }
}

/// `[0, L), [L, 2L), ...` covering `total_len` bytes; the last range may be
/// shorter.
pub fn chunk_ranges(total_len: usize, chunk_len: usize) -> Vec<Range<usize>> {
    assert!(chunk_len > 0, "chunk_len must be positive");
    (0..total_len)
        .step_by(chunk_len)
        .map(|s| s..(s + chunk_len).min(total_len))
        .collect()
}

pub fn split_chunks(store: &WeightStore, chunk_len: usize) -> Vec<Range<usize>> {
    chunk_ranges(store.blob().len(), chunk_len)
}

/// Tercile of the blob containing the range midpoint.
pub fn assign_region(range: &Range<usize>, total_len: usize) -> Region {
    // midpoint < T/3  <=>  3 (start + end) < 2T
    let twice_mid = 3 * (range.start as u128 + range.end as u128);
    let t = total_len as u128;
    if twice_mid < 2 * t {
        Region::Front
    } else if twice_mid < 4 * t {
        Region::Middle
    } else {
        Region::Back
    }
}

pub fn chunk_seed(seed: u64, chunk_index: usize) -> u64 {
    seed ^ chunk_index as u64
}

/// The mask injected into chunk `chunk_index`, relative to the chunk start.
pub fn chunk_mask(
    fault_model: &FaultModel,
    range: &Range<usize>,
    seed: u64,
    chunk_index: usize,
) -> Result<FaultMask> {
    fault_model.generate(range.len(), chunk_seed(seed, chunk_index))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkResult {
    pub chunk_index: usize,
    pub byte_start: usize,
    pub byte_end: usize,
    pub region: Region,
    pub top1: f64,
    pub top5: f64,
    pub report: CorruptionReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region: Region,
    pub chunks: usize,
    pub top1: f64,
    pub top5: f64,
}

/// Mean accuracies per region, in Front, Middle, Back order; regions without
/// chunks are omitted.
pub fn aggregate_regions(results: &[ChunkResult]) -> Vec<RegionSummary> {
    Region::ALL
        .iter()
        .filter_map(|&region| {
            let rs: Vec<_> = results.iter().filter(|r| r.region == region).collect();
            if rs.is_empty() {
                return None;
            }
            let n = rs.len() as f64;
            Some(RegionSummary {
                region,
                chunks: rs.len(),
                top1: rs.iter().map(|r| r.top1).sum::<f64>() / n,
                top5: rs.iter().map(|r| r.top5).sum::<f64>() / n,
            })
        })
        .collect()
}

/// Campaign outcome for one weight format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormatRun {
    pub format: FormatKind,
    pub blob_len: usize,
    pub chunk_len: usize,
    pub baseline: Accuracy,
    pub chunks: Vec<ChunkResult>,
}

pub const CAMPAIGN_CSV_HEADER: &str = "chunk_index,byte_start,byte_end,region,format,ber,feff_fraction,nan_fraction,inf_fraction,range_expansion,top1,top5";

impl FormatRun {
    pub fn regions(&self) -> Vec<RegionSummary> {
        aggregate_regions(&self.chunks)
    }

    pub fn mean_top1(&self) -> f64 {
        self.chunks.iter().map(|c| c.top1).sum::<f64>() / self.chunks.len().max(1) as f64
    }

    /// Per-chunk rows preceded by a `baseline` row covering the whole blob
    /// with empty corruption fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CAMPAIGN_CSV_HEADER);
        out.push('\n');
        let _ = writeln!(
            out,
            "baseline,0,{},,{},,,,,,{},{}",
            self.blob_len, self.format, self.baseline.top1, self.baseline.top5
        );
        for c in &self.chunks {
            let r = &c.report;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                c.chunk_index,
                c.byte_start,
                c.byte_end,
                c.region.as_str(),
                self.format,
                r.ber,
                r.feff_fraction,
                opt_field(r.nan_fraction),
                opt_field(r.inf_fraction),
                opt_field(r.range_expansion),
                c.top1,
                c.top5
            );
        }
        out
    }

    pub fn regions_csv(&self) -> String {
        let mut out = String::from("region,format,chunks,top1,top5\n");
        for s in self.regions() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.region.as_str(),
                self.format,
                s.chunks,
                s.top1,
                s.top5
            );
        }
        out
    }

    /// Results plus the spec that produced them.
    pub fn to_json(&self, spec: &CampaignSpec) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            spec: &'a CampaignSpec,
            #[serde(flatten)]
            run: &'a FormatRun,
            regions: Vec<RegionSummary>,
        }
        Ok(serde_json::to_string_pretty(&Doc {
            spec,
            run: self,
            regions: self.regions(),
        })?)
    }
}

/// Runs the campaign on an already-encoded model. Chunks are evaluated in
/// parallel, each on a private copy of the blob; results are ordered by
/// chunk index.
pub fn run_model(
    model: &Model,
    eval: &EvalSet,
    chunk_len: usize,
    fault_model: &FaultModel,
    seed: u64,
) -> Result<FormatRun> {
    if chunk_len == 0 {
        return Err(Error::InvalidParams("chunk_len must be positive".into()));
    }
    fault_model.validate()?;
    let store = model.store();
    let format = store.format().ok_or_else(|| {
        Error::UnsupportedFormat("campaign needs a single-format weight store".into())
    })?;
    let num_classes = model.desc().num_classes;
    let baseline = evaluate(&model.load_weights()?, eval)?;
    let threshold = 3.0 / num_classes as f64;
    if baseline.top1 <= threshold {
        return Err(Error::DegenerateBaseline {
            top1: baseline.top1,
            threshold,
        });
    }

    let total = store.blob().len();
    let chunks = split_chunks(store, chunk_len)
        .into_par_iter()
        .enumerate()
        .map(|(index, range)| {
            let mask = chunk_mask(fault_model, &range, seed, index)?;
            let mut blob = store.blob().to_vec();
            mask.apply_in_place(&mut blob, range.start)?;
            let faulted = store.with_blob(blob)?;
            let report = corruption_report(store, &faulted, range.clone())?;
            let acc = evaluate(&model.with_store(faulted)?.load_weights()?, eval)?;
            Ok(ChunkResult {
                chunk_index: index,
                byte_start: range.start,
                byte_end: range.end,
                region: assign_region(&range, total),
                top1: acc.top1,
                top5: acc.top5,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(FormatRun {
        format,
        blob_len: total,
        chunk_len,
        baseline,
        chunks,
    })
}

/// Converts the FP32 source model to `format` and runs the campaign on it.
pub fn run_format(
    source: &Model,
    eval: &EvalSet,
    format: FormatKind,
    chunk_len: Option<usize>,
    fault_model: &FaultModel,
    seed: u64,
) -> Result<FormatRun> {
    let model = source.with_store(convert_store(source.store(), format)?)?;
    let len = chunk_len.unwrap_or_else(|| default_chunk_len(model.store().blob().len()));
    run_model(&model, eval, len, fault_model, seed)
}

/// Loads the spec's inputs and runs every requested format in order.
pub fn run_campaign(spec: &CampaignSpec) -> Result<Vec<FormatRun>> {
    spec.validate()?;
    let (model, eval) = load_inputs(spec)?;
    spec.formats
        .iter()
        .map(|&f| {
            run_format(
                &model,
                &eval,
                f,
                spec.chunk_len,
                &spec.fault_model,
                spec.seed,
            )
        })
        .collect()
}

pub fn load_inputs(spec: &CampaignSpec) -> Result<(Model, EvalSet)> {
    let desc = ModelDesc::load(&spec.model)?;
    let store = WeightStore::load(&spec.manifest, &spec.weights)?;
    let model = Model::new(desc, store)?;
    let eval = EvalSet::load(&spec.eval)?;
    if eval.input_shape() != model.desc().input_shape.as_slice() {
        return Err(Error::ShapeMismatch(format!(
            "eval inputs {:?}, model expects {:?}",
            eval.input_shape(),
            model.desc().input_shape
        )));
    }
    Ok((model, eval))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_examples() {
        let r = chunk_ranges(10 * MIB, 4 * MIB);
        let lens: Vec<_> = r.iter().map(|r| r.len()).collect();
        assert_eq!(lens, [4 * MIB, 4 * MIB, 2 * MIB]);
        assert_eq!(chunk_ranges(100, 4 * MIB), vec![0..100]);
    }

    #[test]
    fn default_chunk_len_rule() {
        assert_eq!(default_chunk_len(10 * MIB), 4 * MIB);
        assert_eq!(default_chunk_len(4 * MIB), 4 * MIB);
        assert_eq!(default_chunk_len(67304), 4207);
        assert_eq!(chunk_ranges(67304, 4207).len(), 16);
    }

    #[test]
    fn region_examples() {
        assert_eq!(assign_region(&(0..0), 90), Region::Front);
        assert_eq!(assign_region(&(40..50), 90), Region::Middle);
        assert_eq!(assign_region(&(29..31), 90), Region::Middle);
        assert_eq!(assign_region(&(28..30), 90), Region::Front);
        let thirds: Vec<_> = chunk_ranges(90, 30)
            .iter()
            .map(|r| assign_region(r, 90))
            .collect();
        assert_eq!(thirds, [Region::Front, Region::Middle, Region::Back]);
    }

    fn result(region: Region, top1: f64) -> ChunkResult {
        ChunkResult {
            chunk_index: 0,
            byte_start: 0,
            byte_end: 1,
            region,
            top1,
            top5: top1,
            report: crate::analytics::byte_report(&[0], &[0]).unwrap(),
        }
    }

    #[test]
    fn aggregation() {
        let single = aggregate_regions(&[result(Region::Back, 0.7)]);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].top1, 0.7);
        let two = aggregate_regions(&[result(Region::Front, 0.2), result(Region::Front, 0.4)]);
        assert!((two[0].top1 - 0.3).abs() < 1e-12);
        assert_eq!(two[0].region, Region::Front);
    }

    #[test]
    fn seeds_are_distinct_per_chunk() {
        assert_eq!(chunk_seed(5, 0), 5);
        assert_eq!(chunk_seed(5, 1), 4);
        assert_ne!(chunk_seed(7, 3), chunk_seed(7, 4));
    }

    #[test]
    fn spec_json_defaults() {
        let spec: CampaignSpec = serde_json::from_str(
            r#"{"model": "m.json", "manifest": "w.json", "weights": "w.bin", "eval": "e.json"}"#,
        )
        .unwrap();
        assert_eq!(spec.formats, FormatKind::ALL);
        assert_eq!(spec.chunk_len, None);
        assert!(matches!(spec.fault_model, FaultModel::Emfi(_)));
        assert!(spec.validate().is_ok());
        let bad = CampaignSpec {
            chunk_len: Some(0),
            ..spec
        };
        assert!(bad.validate().is_err());
    }
}

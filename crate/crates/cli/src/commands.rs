use std::path::{Path, PathBuf};

use emfisim_core::analytics::{
    byte_report, corruption_report, render_fault_map, CorruptionReport, DEFAULT_BYTES_PER_CELL,
    DEFAULT_MAP_WIDTH,
};
use emfisim_core::campaign::{chunk_mask, load_inputs, run_format, CampaignSpec};
use emfisim_core::faults::{FaultMask, FaultModel};
use emfisim_core::formats::{convert_store, FormatKind, WeightStore};

use crate::config::{pick, RunConfig};
use crate::error::CliError;
use crate::output::{read, write_atomic};
use crate::{AnalyzeArgs, CampaignArgs, FaultmapArgs, InjectArgs, QuantizeArgs};

fn load_store(manifest: &Path, weights: &Path) -> Result<WeightStore, CliError> {
    let blob = read(weights)?;
    let text = read(manifest)?;
    let m: emfisim_core::formats::Manifest = serde_json::from_slice(&text)
        .map_err(|e| CliError::Usage(format!("manifest {}: {e}", manifest.display())))?;
    Ok(WeightStore::new(blob, m.tensors)?)
}

fn write_report(out: &Path, report: &CorruptionReport) -> Result<(), CliError> {
    write_atomic(&out.join("report.json"), json(report)?.as_bytes())?;
    write_atomic(&out.join("report.csv"), report.to_csv().as_bytes())
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(emfisim_core::Error::from)?;
    s.push('\n');
    Ok(s)
}

pub fn quantize(a: QuantizeArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let manifest = pick(a.manifest, &cfg.manifest, "manifest")?;
    let weights = pick(a.weights, &cfg.weights, "weights")?;
    let format = match (a.format, cfg.formats.as_deref()) {
        (Some(f), _) => f,
        (None, Some([f])) => *f,
        _ => return Err(CliError::Usage("missing --format".into())),
    };
    let out = pick(a.out, &cfg.out, "out")?;
    let store = load_store(&manifest, &weights)?;
    let converted = convert_store(&store, format)?;
    write_atomic(&out.join("weights.bin"), converted.blob())?;
    write_atomic(
        &out.join("manifest.json"),
        json(&converted.manifest())?.as_bytes(),
    )?;
    println!(
        "{format}: {} tensors, {} bytes -> {}",
        converted.tensors().len(),
        converted.blob().len(),
        out.display()
    );
    Ok(())
}

fn fault_model(a: &InjectArgs, cfg: &RunConfig) -> Result<FaultModel, CliError> {
    let model = if let Some(ber) = a.ber {
        FaultModel::RandomBitflips { ber }
    } else if let Some(text) = &a.fault_model {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("--fault-model: {e}")))?
    } else {
        cfg.fault_model.clone().unwrap_or_default()
    };
    model.validate()?;
    Ok(model)
}

pub fn inject(a: InjectArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let weights = pick(a.weights.clone(), &cfg.weights, "weights")?;
    let out = pick(a.out.clone(), &cfg.out, "out")?;
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let model = fault_model(&a, cfg)?;
    let store = match a.manifest.clone().or_else(|| cfg.manifest.clone()) {
        Some(m) => Some(load_store(&m, &weights)?),
        None => None,
    };
    let blob = match &store {
        Some(s) => s.blob().to_vec(),
        None => read(&weights)?,
    };
    let len = a.len.unwrap_or(blob.len().saturating_sub(a.offset));
    if a.offset.checked_add(len).is_none_or(|end| end > blob.len()) || len == 0 {
        return Err(CliError::Usage(format!(
            "window {}+{len} does not fit a blob of {} bytes",
            a.offset,
            blob.len()
        )));
    }
    let mask = model.generate(len, seed)?;
    let mut corrupted = blob.clone();
    mask.apply_in_place(&mut corrupted, a.offset)?;
    let window = a.offset..a.offset + len;
    let report = match &store {
        Some(s) => corruption_report(s, &s.with_blob(corrupted.clone())?, window)?,
        None => byte_report(&blob[window.clone()], &corrupted[window])?,
    };
    write_atomic(&out.join("corrupted.bin"), &corrupted)?;
    write_atomic(&out.join("mask.json"), mask.to_json()?.as_bytes())?;
    write_report(&out, &report)?;
    print!("{}", json(&report)?);
    Ok(())
}

pub fn analyze(a: AnalyzeArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let weights = pick(a.weights, &cfg.weights, "weights")?;
    let corrupted = read(&a.corrupted)?;
    let report = match a.manifest.or_else(|| cfg.manifest.clone()) {
        Some(m) => {
            let store = load_store(&m, &weights)?;
            let post = store.with_blob(corrupted)?;
            corruption_report(&store, &post, 0..store.blob().len())?
        }
        None => byte_report(&read(&weights)?, &corrupted)?,
    };
    if let Some(out) = a.out.or_else(|| cfg.out.clone()) {
        write_report(&out, &report)?;
    }
    print!("{}", json(&report)?);
    Ok(())
}

fn geometry(width: Option<usize>, bpc: Option<usize>, cfg: &RunConfig) -> (usize, usize) {
    (
        width.or(cfg.map_width).unwrap_or(DEFAULT_MAP_WIDTH),
        bpc.or(cfg.bytes_per_cell).unwrap_or(DEFAULT_BYTES_PER_CELL),
    )
}

pub fn campaign(a: CampaignArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let spec = CampaignSpec {
        model: pick(None, &cfg.model, "config model")?,
        manifest: pick(None, &cfg.manifest, "config manifest")?,
        weights: pick(None, &cfg.weights, "config weights")?,
        eval: pick(None, &cfg.eval, "config eval")?,
        chunk_len: a.chunk_len.or(cfg.chunk_len),
        fault_model: cfg.fault_model.clone().unwrap_or_default(),
        seed: a.seed.or(cfg.seed).unwrap_or(0),
        formats: if a.format.is_empty() {
            cfg.formats
                .clone()
                .unwrap_or_else(|| FormatKind::ALL.to_vec())
        } else {
            a.format
        },
    };
    spec.validate()?;
    let out: PathBuf = pick(a.out, &cfg.out, "out")?;
    let (width, bpc) = geometry(a.width, a.bytes_per_cell, cfg);
    for p in [&spec.model, &spec.manifest, &spec.weights, &spec.eval] {
        if !p.is_file() {
            return Err(CliError::Io(format!("{}: not found", p.display())));
        }
    }
    let (model, eval) = load_inputs(&spec)?;
    for &format in &spec.formats {
        let run = run_format(
            &model,
            &eval,
            format,
            spec.chunk_len,
            &spec.fault_model,
            spec.seed,
        )?;
        write_atomic(
            &out.join(format!("campaign_{format}.csv")),
            run.to_csv().as_bytes(),
        )?;
        write_atomic(
            &out.join(format!("campaign_{format}.json")),
            (run.to_json(&spec)? + "\n").as_bytes(),
        )?;
        write_atomic(
            &out.join(format!("regions_{format}.csv")),
            run.regions_csv().as_bytes(),
        )?;
        for c in &run.chunks {
            let range = c.byte_start..c.byte_end;
            let mask = chunk_mask(&spec.fault_model, &range, spec.seed, c.chunk_index)?;
            let map = render_fault_map(&mask, width, bpc)?;
            let path = out
                .join("maps")
                .join(format!("{format}_chunk{:03}.pgm", c.chunk_index));
            write_atomic(&path, &map.to_pgm())?;
        }
        let regions = run
            .regions()
            .iter()
            .map(|r| format!("{} {:.4}", r.region.as_str(), r.top1))
            .collect::<Vec<_>>()
            .join("  ");
        println!(
            "{format}: baseline top1 {:.4}, {} chunks, mean top1 {:.4}  [{regions}]",
            run.baseline.top1,
            run.chunks.len(),
            run.mean_top1()
        );
    }
    Ok(())
}

pub fn faultmap(a: FaultmapArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let text = read(&a.mask)?;
    let mask = FaultMask::from_json(&String::from_utf8_lossy(&text))
        .map_err(|e| CliError::Usage(format!("mask {}: {e}", a.mask.display())))?;
    let (width, bpc) = geometry(a.width, a.bytes_per_cell, cfg);
    let out = pick(a.out, &cfg.out, "out")?;
    let map = render_fault_map(&mask, width, bpc)?;
    write_atomic(&out.join("faultmap.pgm"), &map.to_pgm())?;
    write_atomic(&out.join("faultmap.csv"), map.to_csv().as_bytes())?;
    println!(
        "{}x{} cells of {bpc} bytes, {} corrupted",
        map.width,
        map.height,
        map.set_count()
    );
    Ok(())
}

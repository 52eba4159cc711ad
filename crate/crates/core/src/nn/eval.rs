use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::Network;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct EvalFile {
    input_shape: Vec<usize>,
    data_file: String,
    labels: Vec<usize>,
}

/// Labelled evaluation inputs stored as one flat `f32` buffer.
#[derive(Clone, Debug)]
pub struct EvalSet {
    input_shape: Vec<usize>,
    data: Vec<f32>,
    labels: Vec<usize>,
}

impl EvalSet {
    pub fn new(input_shape: Vec<usize>, data: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        let per: usize = input_shape.iter().product();
        if per == 0 || data.len() != per * labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} samples of shape {input_shape:?}",
                data.len(),
                labels.len()
            )));
        }
        Ok(Self {
            input_shape,
            data,
            labels,
        })
    }

    /// Reads `{input_shape, data_file, labels}`; `data_file` is little-endian
    /// `f32` relative to the descriptor's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let desc: EvalFile = serde_json::from_slice(&fs::read(path)?)?;
        let data_path = path
            .parent()
            .unwrap_or(Path::new("."))
            .join(&desc.data_file);
        let raw = fs::read(data_path)?;
        if raw.len() % 4 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "data file of {} bytes is not a whole number of f32 values",
                raw.len()
            )));
        }
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(desc.input_shape, data, desc.labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn sample(&self, i: usize) -> Tensor {
        let per: usize = self.input_shape.iter().product();
        Tensor::from_parts(
            self.input_shape.clone(),
            self.data[i * per..(i + 1) * per].to_vec(),
        )
    }
}

/// Top-1 and Top-5 accuracy over an evaluation set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub top1: f64,
    pub top5: f64,
}

/// Class scores for every sample, in sample order.
pub fn predict(net: &Network, set: &EvalSet) -> Result<Vec<Vec<f32>>> {
    (0..set.len())
        .into_par_iter()
        .map(|i| net.forward(&set.sample(i)).map(Tensor::into_data))
        .collect()
}

/// Whether `label` is among the `k` best classes. NaN ranks below every
/// number and ties go to the lower class index.
pub fn in_top_k(scores: &[f32], label: usize, k: usize) -> bool {
    let Some(&target) = scores.get(label) else {
        return false;
    };
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| {
            j != label
                && match rank_cmp(s, target) {
                    Ordering::Greater => true,
                    Ordering::Equal => j < label,
                    Ordering::Less => false,
                }
        })
        .count();
    ahead < k
}

fn rank_cmp(a: f32, b: f32) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        _ => a.partial_cmp(&b).unwrap_or(Ordering::Equal),
    }
}

pub fn top_k_accuracy(scores: &[Vec<f32>], labels: &[usize], k: usize) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(s, &l)| in_top_k(s, l, k))
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn evaluate(net: &Network, set: &EvalSet) -> Result<Accuracy> {
    let scores = predict(net, set)?;
    Ok(Accuracy {
        top1: top_k_accuracy(&scores, set.labels(), 1)?,
        top5: top_k_accuracy(&scores, set.labels(), 5)?,
    })
}

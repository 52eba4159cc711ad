use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::formats::{decode_tensor, WeightStore};

/// One layer of the model description file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    /// Weight `[out_c, in_c, kh, kw]`, optional bias `[out_c]`.
    Conv2d {
        weight: String,
        #[serde(default)]
        bias: Option<String>,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    /// Weight `[out, in]`, optional bias `[out]`.
    Dense {
        weight: String,
        #[serde(default)]
        bias: Option<String>,
    },
    Relu,
    Maxpool2d {
        size: usize,
        #[serde(default)]
        stride: Option<usize>,
    },
    Flatten,
    Softmax,
}

fn one() -> usize {
    1
}

/// Model description file: `{input_shape, num_classes, layers: [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDesc {
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelDesc {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// A description bound to a weight store whose tensors match it.
#[derive(Clone, Debug)]
pub struct Model {
    desc: ModelDesc,
    store: WeightStore,
}

impl Model {
    /// Checks that every referenced tensor exists with the right shape and
    /// that the layer chain maps `input_shape` to `[num_classes]`.
    pub fn new(desc: ModelDesc, store: WeightStore) -> Result<Self> {
        let mut shape = desc.input_shape.clone();
        for (i, layer) in desc.layers.iter().enumerate() {
            shape = output_shape(layer, &shape, &store)
                .map_err(|e| Error::ShapeMismatch(format!("layer {i}: {e}")))?;
        }
        if shape != [desc.num_classes] {
            return Err(Error::ShapeMismatch(format!(
                "model produces {shape:?}, expected [{}]",
                desc.num_classes
            )));
        }
        Ok(Self { desc, store })
    }

    pub fn desc(&self) -> &ModelDesc {
        &self.desc
    }

    pub fn store(&self) -> &WeightStore {
        &self.store
    }

    /// Same description over another store (for instance a faulted copy).
    pub fn with_store(&self, store: WeightStore) -> Result<Self> {
        Self::new(self.desc.clone(), store)
    }

    /// Decodes every weight into working precision. NaN and Inf survive
    /// untouched; integer weights are dequantized per channel.
    pub fn load_weights(&self) -> Result<Network> {
        let fetch = |name: &str| -> Result<Vec<f32>> {
            Ok(decode_tensor(&self.store, name)?
                .into_iter()
                .map(|v| v as f32)
                .collect())
        };
        let fetch_bias = |bias: &Option<String>, n: usize| -> Result<Vec<f32>> {
            match bias {
                Some(name) => fetch(name),
                None => Ok(vec![0.0; n]),
            }
        };
        let mut layers = Vec::with_capacity(self.desc.layers.len());
        for spec in &self.desc.layers {
            layers.push(match spec {
                LayerSpec::Conv2d {
                    weight,
                    bias,
                    stride,
                    padding,
                } => {
                    let shape = &self.store.meta(weight)?.shape;
                    Layer::Conv2d {
                        out_c: shape[0],
                        in_c: shape[1],
                        kh: shape[2],
                        kw: shape[3],
                        stride: *stride,
                        padding: *padding,
                        weight: fetch(weight)?,
                        bias: fetch_bias(bias, shape[0])?,
                    }
                }
                LayerSpec::Dense { weight, bias } => {
                    let shape = &self.store.meta(weight)?.shape;
                    Layer::Dense {
                        out: shape[0],
                        inp: shape[1],
                        weight: fetch(weight)?,
                        bias: fetch_bias(bias, shape[0])?,
                    }
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Maxpool2d { size, stride } => Layer::MaxPool {
                    size: *size,
                    stride: stride.unwrap_or(*size),
                },
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Softmax => Layer::Softmax,
            });
        }
        Ok(Network {
            layers,
            input_shape: self.desc.input_shape.clone(),
            num_classes: self.desc.num_classes,
        })
    }
}

fn output_shape(layer: &LayerSpec, input: &[usize], store: &WeightStore) -> Result<Vec<usize>> {
    let tensor_shape = |name: &str| store.meta(name).map(|m| m.shape.clone());
    let check_bias = |bias: &Option<String>, n: usize| -> Result<()> {
        if let Some(b) = bias {
            let s = tensor_shape(b)?;
            if s != [n] {
                return Err(Error::ShapeMismatch(format!(
                    "bias {b} has shape {s:?}, expected [{n}]"
                )));
            }
        }
        Ok(())
    };
    match layer {
        LayerSpec::Conv2d {
            weight,
            bias,
            stride,
            padding,
        } => {
            let w = tensor_shape(weight)?;
            let [c, h, wd] = input else {
                return Err(Error::ShapeMismatch(format!(
                    "conv2d needs [c, h, w], got {input:?}"
                )));
            };
            if w.len() != 4 || w[1] != *c || *stride == 0 {
                return Err(Error::ShapeMismatch(format!(
                    "conv weight {w:?} (stride {stride}) incompatible with input {input:?}"
                )));
            }
            check_bias(bias, w[0])?;
            let oh = (h + 2 * padding).checked_sub(w[2]).map(|v| v / stride + 1);
            let ow = (wd + 2 * padding).checked_sub(w[3]).map(|v| v / stride + 1);
            match (oh, ow) {
                (Some(oh), Some(ow)) => Ok(vec![w[0], oh, ow]),
                _ => Err(Error::ShapeMismatch(format!(
                    "kernel {w:?} larger than input {input:?}"
                ))),
            }
        }
        LayerSpec::Dense { weight, bias } => {
            let w = tensor_shape(weight)?;
            if w.len() != 2 || input != [w[1]] {
                return Err(Error::ShapeMismatch(format!(
                    "dense weight {w:?} incompatible with input {input:?}"
                )));
            }
            check_bias(bias, w[0])?;
            Ok(vec![w[0]])
        }
        LayerSpec::Relu | LayerSpec::Softmax => Ok(input.to_vec()),
        LayerSpec::Maxpool2d { size, stride } => {
            let stride = stride.unwrap_or(*size);
            let [c, h, w] = input else {
                return Err(Error::ShapeMismatch(format!(
                    "maxpool2d needs [c, h, w], got {input:?}"
                )));
            };
            if *size == 0 || stride == 0 || size > h || size > w {
                return Err(Error::ShapeMismatch(format!(
                    "pool {size}/{stride} on {input:?}"
                )));
            }
            Ok(vec![*c, (h - size) / stride + 1, (w - size) / stride + 1])
        }
        LayerSpec::Flatten => Ok(vec![input.iter().product()]),
    }
}

#[derive(Clone, Debug)]
enum Layer {
    Conv2d {
        out_c: usize,
        in_c: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
        weight: Vec<f32>,
        bias: Vec<f32>,
    },
    Dense {
        out: usize,
        inp: usize,
        weight: Vec<f32>,
        bias: Vec<f32>,
    },
    Relu,
    MaxPool {
        size: usize,
        stride: usize,
    },
    Flatten,
    Softmax,
}

/// Decoded weights ready for inference. Immutable; `forward` may run from
/// many threads at once.
#[derive(Clone, Debug)]
pub struct Network {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    num_classes: usize,
}

impl Network {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Class scores for one input. Arithmetic is plain IEEE `f32` with a
    /// fixed accumulation order, so results are bit-reproducible and NaN
    /// propagates through every layer.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "input {:?}, model expects {:?}",
                input.shape(),
                self.input_shape
            )));
        }
        let mut shape = input.shape().to_vec();
        let mut x = input.data().to_vec();
        for layer in &self.layers {
            (shape, x) = apply(layer, shape, x);
        }
        Ok(Tensor::from_parts(shape, x))
    }
}

fn apply(layer: &Layer, shape: Vec<usize>, x: Vec<f32>) -> (Vec<usize>, Vec<f32>) {
    match layer {
        Layer::Conv2d {
            out_c,
            in_c,
            kh,
            kw,
            stride,
            padding,
            weight,
            bias,
        } => {
            let (h, w) = (shape[1], shape[2]);
            let oh = (h + 2 * padding - kh) / stride + 1;
            let ow = (w + 2 * padding - kw) / stride + 1;
            let mut out = vec![0.0f32; out_c * oh * ow];
            for oc in 0..*out_c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0f32;
                        for ic in 0..*in_c {
                            for ky in 0..*kh {
                                for kx in 0..*kw {
                                    let iy = (oy * stride + ky) as isize - *padding as isize;
                                    let ix = (ox * stride + kx) as isize - *padding as isize;
                                    // Padding contributes explicit zeros, so a
                                    // NaN weight poisons border outputs too.
                                    let v =
                                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize
                                        {
                                            0.0
                                        } else {
                                            x[(ic * h + iy as usize) * w + ix as usize]
                                        };
                                    acc += weight[((oc * in_c + ic) * kh + ky) * kw + kx] * v;
                                }
                            }
                        }
                        out[(oc * oh + oy) * ow + ox] = acc + bias[oc];
                    }
                }
            }
            (vec![*out_c, oh, ow], out)
        }
        Layer::Dense {
            out,
            inp,
            weight,
            bias,
        } => {
            let y = (0..*out)
                .map(|o| {
                    let row = &weight[o * inp..(o + 1) * inp];
                    let acc = row.iter().zip(&x).fold(0.0f32, |acc, (w, v)| acc + w * v);
                    acc + bias[o]
                })
                .collect();
            (vec![*out], y)
        }
        Layer::Relu => (shape, x.into_iter().map(relu).collect()),
        Layer::MaxPool { size, stride } => {
            let (c, h, w) = (shape[0], shape[1], shape[2]);
            let oh = (h - size) / stride + 1;
            let ow = (w - size) / stride + 1;
            let mut out = Vec::with_capacity(c * oh * ow);
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut m = f32::NEG_INFINITY;
                        for ky in 0..*size {
                            for kx in 0..*size {
                                let v = x[(ch * h + oy * stride + ky) * w + ox * stride + kx];
                                if v.is_nan() || m.is_nan() {
                                    m = f32::NAN;
                                } else if v > m {
                                    m = v;
                                }
                            }
                        }
                        out.push(m);
                    }
                }
            }
            (vec![c, oh, ow], out)
        }
        Layer::Flatten => (vec![x.len()], x),
        Layer::Softmax => (shape, softmax(&x)),
    }
}

/// ReLU that lets NaN through (`f32::max` would map it to 0).
#[inline]
fn relu(v: f32) -> f32 {
    if v.is_nan() || v > 0.0 {
        v
    } else {
        0.0
    }
}

fn softmax(x: &[f32]) -> Vec<f32> {
    if x.iter().any(|v| v.is_nan()) {
        return vec![f32::NAN; x.len()];
    }
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f32 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

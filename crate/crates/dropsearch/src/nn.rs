//! Minimal deterministic network engine: forward, exact reverse-mode
//! gradients, and SGD with momentum, over the fixed layer set needed by the
//! dropout supernets (conv / linear / relu / 2x2 maxpool / flatten / dropout
//! slots).
//!
//! Everything is a pure function over value types; a `(spec, params, input,
//! masks)` tuple determines every output bit-for-bit.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dropout::{self, Mask};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::tensor::{Real, Tensor};

/// One layer of a network. `DropoutSlot` marks a searchable dropout position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
    },
    Linear {
        out_features: usize,
    },
    Relu,
    Maxpool2x2,
    Flatten,
    DropoutSlot {
        slot_index: usize,
    },
}

/// A full network: ordered layers plus the input shape, `(C, H, W)` for
/// image inputs or `(F,)` for flat ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec { input_shape, layers };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.output_shapes()?;
        let mut seen = std::collections::BTreeSet::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if let LayerSpec::DropoutSlot { slot_index } = layer {
                if !seen.insert(*slot_index) {
                    return Err(Error::LayerShape {
                        layer: i,
                        message: format!("duplicate dropout slot index {slot_index}"),
                    });
                }
            }
        }
        let shapes = self.output_shapes()?;
        match shapes.last() {
            Some(last) if last.len() == 1 => Ok(()),
            Some(last) => Err(Error::LayerShape {
                layer: self.layers.len().saturating_sub(1),
                message: format!("network must end in a logits vector, got shape {last:?}"),
            }),
            None => Err(Error::EmptyInput("network layers")),
        }
    }

    /// Analytic output shape of every layer under standard conv/pool
    /// arithmetic. Errors name the offending layer.
    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.len() != 1 && self.input_shape.len() != 3 {
            return Err(Error::InvalidParam {
                name: "input_shape",
                message: format!("expected rank 1 or 3, got {:?}", self.input_shape),
            });
        }
        let mut cur = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer_output_shape(layer, &cur).map_err(|message| Error::LayerShape { layer: i, message })?;
            out.push(cur.clone());
        }
        Ok(out)
    }

    /// Number of classes = length of the final logits vector.
    pub fn class_count(&self) -> Result<usize> {
        Ok(self.output_shapes()?.last().expect("validated")[0])
    }

    /// Activation shape seen by each dropout slot, keyed by slot index.
    pub fn slot_shapes(&self) -> Result<BTreeMap<usize, Vec<usize>>> {
        let shapes = self.output_shapes()?;
        let mut map = BTreeMap::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if let LayerSpec::DropoutSlot { slot_index } = layer {
                map.insert(*slot_index, shapes[i].clone());
            }
        }
        Ok(map)
    }

    pub fn slot_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::DropoutSlot { slot_index } => Some(*slot_index),
                _ => None,
            })
            .collect()
    }
}

fn layer_output_shape(layer: &LayerSpec, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
    match layer {
        LayerSpec::Conv2d { out_channels, kernel_size, stride, padding } => {
            if input.len() != 3 {
                return Err(format!("conv2d needs a (C,H,W) input, got {input:?}"));
            }
            let (k, s, p) = (*kernel_size, *stride, *padding);
            if k < 1 || s < 1 {
                return Err(format!("conv2d kernel_size/stride must be >= 1, got k={k} s={s}"));
            }
            let (h, w) = (input[1] + 2 * p, input[2] + 2 * p);
            if h < k || w < k {
                return Err(format!(
                    "kernel {k} does not fit padded input {h}x{w}"
                ));
            }
            Ok(vec![*out_channels, (h - k) / s + 1, (w - k) / s + 1])
        }
        LayerSpec::Linear { out_features } => {
            if input.len() != 1 {
                return Err(format!("linear needs a flat input, got {input:?}"));
            }
            if *out_features == 0 {
                return Err("linear out_features must be positive".into());
            }
            Ok(vec![*out_features])
        }
        LayerSpec::Relu => Ok(input.to_vec()),
        LayerSpec::Maxpool2x2 => {
            if input.len() != 3 {
                return Err(format!("maxpool2x2 needs a (C,H,W) input, got {input:?}"));
            }
            if input[1] < 2 || input[2] < 2 {
                return Err(format!("maxpool2x2 needs spatial dims >= 2, got {input:?}"));
            }
            Ok(vec![input[0], input[1] / 2, input[2] / 2])
        }
        LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        LayerSpec::DropoutSlot { .. } => {
            if input.len() != 1 && input.len() != 3 {
                return Err(format!("dropout slot needs rank-1 or rank-3 input, got {input:?}"));
            }
            Ok(input.to_vec())
        }
    }
}

/// Weight and bias of one parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Parameter (or gradient, or velocity) tensors keyed by layer index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    entries: BTreeMap<usize, LayerParams<T>>,
}

pub type Parameters<T> = ParamSet<T>;
pub type Gradients<T> = ParamSet<T>;

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, layer: usize, params: LayerParams<T>) {
        self.entries.insert(layer, params);
    }

    pub fn get(&self, layer: usize) -> Option<&LayerParams<T>> {
        self.entries.get(&layer)
    }

    pub fn get_mut(&mut self, layer: usize) -> Option<&mut LayerParams<T>> {
        self.entries.get_mut(&layer)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &LayerParams<T>)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Same keying and shapes, all values zero.
    pub fn zeros_like(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(&k, v)| {
                (
                    k,
                    LayerParams {
                        weight: Tensor::zeros(v.weight.shape().to_vec()),
                        bias: Tensor::zeros(v.bias.shape().to_vec()),
                    },
                )
            })
            .collect();
        ParamSet { entries }
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|p| p.weight.len() + p.bias.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        let entries = self
            .entries
            .iter()
            .map(|(&k, v)| {
                (k, LayerParams { weight: v.weight.cast(), bias: v.bias.cast() })
            })
            .collect();
        ParamSet { entries }
    }

    /// Elementwise `self += other`, for gradient accumulation over a batch.
    pub fn add_assign(&mut self, other: &ParamSet<T>) {
        for (key, theirs) in other.entries.iter() {
            let ours = self.entries.get_mut(key).expect("congruent param sets");
            for (a, b) in ours.weight.data_mut().iter_mut().zip(theirs.weight.data()) {
                *a = *a + *b;
            }
            for (a, b) in ours.bias.data_mut().iter_mut().zip(theirs.bias.data()) {
                *a = *a + *b;
            }
        }
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        let f = T::from_f64_exact(factor);
        for lp in self.entries.values_mut() {
            for v in lp.weight.data_mut() {
                *v = *v * f;
            }
            for v in lp.bias.data_mut() {
                *v = *v * f;
            }
        }
    }
}

/// Glorot-uniform weights, zero biases. Identical `(spec, seed)` pairs give
/// bitwise-identical parameters; each layer draws from its own derived
/// stream.
pub fn init_params<T: Real>(spec: &NetworkSpec, seed: u64) -> Result<Parameters<T>> {
    let shapes = spec.output_shapes()?;
    let mut params = ParamSet::new();
    let mut cur: &[usize] = &spec.input_shape;
    for (i, layer) in spec.layers.iter().enumerate() {
        match layer {
            LayerSpec::Conv2d { out_channels, kernel_size, .. } => {
                let in_channels = cur[0];
                let k = *kernel_size;
                let fan_in = in_channels * k * k;
                let fan_out = out_channels * k * k;
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut stream = rng::stream(seed, tag::INIT, i as u64);
                let n = out_channels * in_channels * k * k;
                let data: Vec<T> = (0..n)
                    .map(|_| T::from_f64_exact((stream.gen::<f64>() * 2.0 - 1.0) * bound))
                    .collect();
                params.insert(
                    i,
                    LayerParams {
                        weight: Tensor::new(vec![*out_channels, in_channels, k, k], data)?,
                        bias: Tensor::zeros(vec![*out_channels]),
                    },
                );
            }
            LayerSpec::Linear { out_features } => {
                let in_features = cur[0];
                let bound = (6.0 / (in_features + out_features) as f64).sqrt();
                let mut stream = rng::stream(seed, tag::INIT, i as u64);
                let n = out_features * in_features;
                let data: Vec<T> = (0..n)
                    .map(|_| T::from_f64_exact((stream.gen::<f64>() * 2.0 - 1.0) * bound))
                    .collect();
                params.insert(
                    i,
                    LayerParams {
                        weight: Tensor::new(vec![*out_features, in_features], data)?,
                        bias: Tensor::zeros(vec![*out_features]),
                    },
                );
            }
            _ => {}
        }
        cur = &shapes[i];
    }
    Ok(params)
}

/// Slot-indexed mask map as produced by supernet activation.
pub type MaskMap = BTreeMap<usize, Mask>;

/// Runs the network, returning every layer's output (the last entry is the
/// logits vector). `masks: None` turns every dropout slot into an identity.
pub fn forward<T: Real>(
    spec: &NetworkSpec,
    params: &Parameters<T>,
    input: &Tensor<T>,
    masks: Option<&MaskMap>,
) -> Result<Vec<Tensor<T>>> {
    forward_with_hook(spec, params, input, masks, None)
}

/// `forward` with an optional hook applied to every layer output before it is
/// recorded (used for fixed-point evaluation at layer boundaries).
pub fn forward_with_hook<T: Real>(
    spec: &NetworkSpec,
    params: &Parameters<T>,
    input: &Tensor<T>,
    masks: Option<&MaskMap>,
    hook: Option<&dyn Fn(&mut Tensor<T>)>,
) -> Result<Vec<Tensor<T>>> {
    if input.shape() != spec.input_shape.as_slice() {
        return Err(Error::ShapeMismatch {
            context: "network input",
            expected: spec.input_shape.clone(),
            got: input.shape().to_vec(),
        });
    }
    let mut activations: Vec<Tensor<T>> = Vec::with_capacity(spec.layers.len());
    let mut cur = input.clone();
    for (i, layer) in spec.layers.iter().enumerate() {
        let mut out = match layer {
            LayerSpec::Conv2d { out_channels, kernel_size, stride, padding } => {
                let lp = params.get(i).ok_or_else(|| Error::LayerShape {
                    layer: i,
                    message: "missing conv parameters".into(),
                })?;
                conv2d_forward(&cur, &lp.weight, &lp.bias, *out_channels, *kernel_size, *stride, *padding)
                    .map_err(|message| Error::LayerShape { layer: i, message })?
            }
            LayerSpec::Linear { out_features } => {
                let lp = params.get(i).ok_or_else(|| Error::LayerShape {
                    layer: i,
                    message: "missing linear parameters".into(),
                })?;
                linear_forward(&cur, &lp.weight, &lp.bias, *out_features)
                    .map_err(|message| Error::LayerShape { layer: i, message })?
            }
            LayerSpec::Relu => relu_forward(&cur),
            LayerSpec::Maxpool2x2 => maxpool_forward(&cur)
                .map_err(|message| Error::LayerShape { layer: i, message })?,
            LayerSpec::Flatten => cur.reshaped(vec![cur.len()])?,
            LayerSpec::DropoutSlot { slot_index } => match masks {
                None => cur.clone(),
                Some(map) => {
                    let mask = map.get(slot_index).ok_or_else(|| Error::InvalidParam {
                        name: "masks",
                        message: format!("no mask provided for slot {slot_index}"),
                    })?;
                    if mask.shape() != cur.shape() {
                        return Err(Error::MaskShape {
                            slot: *slot_index,
                            expected: cur.shape().to_vec(),
                            got: mask.shape().to_vec(),
                        });
                    }
                    dropout::apply(mask, &cur)?
                }
            },
        };
        if let Some(hook) = hook {
            hook(&mut out);
        }
        out.ensure_finite(&format!("layer {i} output"))?;
        activations.push(out.clone());
        cur = out;
    }
    Ok(activations)
}

fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    out_channels: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> std::result::Result<Tensor<T>, String> {
    if x.rank() != 3 {
        return Err(format!("conv2d needs rank-3 input, got {:?}", x.shape()));
    }
    let (ic, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if weight.shape() != [out_channels, ic, k, k] {
        return Err(format!(
            "conv weight shape {:?} does not match (out={out_channels}, in={ic}, k={k})",
            weight.shape()
        ));
    }
    let hp = h + 2 * padding;
    let wp = w + 2 * padding;
    if hp < k || wp < k {
        return Err(format!("kernel {k} does not fit padded input {hp}x{wp}"));
    }
    let oh = (hp - k) / stride + 1;
    let ow = (wp - k) / stride + 1;
    let xd = x.data();
    let wd = weight.data();
    let bd = bias.data();
    let mut out = vec![T::zero(); out_channels * oh * ow];
    for oc in 0..out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bd[oc];
                for c in 0..ic {
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xv = xd[c * h * w + iy as usize * w + ix as usize];
                            let wv = wd[((oc * ic + c) * k + ky) * k + kx];
                            acc = acc + xv * wv;
                        }
                    }
                }
                out[oc * oh * ow + oy * ow + ox] = acc;
            }
        }
    }
    Tensor::new(vec![out_channels, oh, ow], out).map_err(|e| e.to_string())
}

fn linear_forward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    out_features: usize,
) -> std::result::Result<Tensor<T>, String> {
    if x.rank() != 1 {
        return Err(format!("linear needs a flat input, got {:?}", x.shape()));
    }
    let in_features = x.shape()[0];
    if weight.shape() != [out_features, in_features] {
        return Err(format!(
            "linear weight shape {:?} does not match (out={out_features}, in={in_features})",
            weight.shape()
        ));
    }
    let xd = x.data();
    let wd = weight.data();
    let out = (0..out_features)
        .map(|o| {
            let mut acc = bias.data()[o];
            let row = &wd[o * in_features..(o + 1) * in_features];
            for (wv, xv) in row.iter().zip(xd.iter()) {
                acc = acc + *wv * *xv;
            }
            acc
        })
        .collect();
    Tensor::new(vec![out_features], out).map_err(|e| e.to_string())
}

fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

fn maxpool_forward<T: Real>(x: &Tensor<T>) -> std::result::Result<Tensor<T>, String> {
    if x.rank() != 3 {
        return Err(format!("maxpool2x2 needs rank-3 input, got {:?}", x.shape()));
    }
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if h < 2 || w < 2 {
        return Err(format!("maxpool2x2 needs spatial dims >= 2, got {:?}", x.shape()));
    }
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = vec![T::zero(); c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = T::neg_infinity();
                for dy in 0..2 {
                    for dx in 0..2 {
                        let v = xd[ch * h * w + (oy * 2 + dy) * w + (ox * 2 + dx)];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[ch * oh * ow + oy * ow + ox] = best;
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out).map_err(|e| e.to_string())
}

/// Softmax of a logits vector in `f64`, with max-subtraction.
pub fn softmax_f64<T: Real>(logits: &Tensor<T>) -> Vec<f64> {
    let vals: Vec<f64> = logits.data().iter().map(|v| v.to_f64().expect("finite")).collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = vals.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy in nats: `-log softmax(logits)[label]`, stabilised by
/// max-subtraction; always >= 0.
pub fn loss_ce<T: Real>(logits: &Tensor<T>, label: usize) -> Result<T> {
    let n = logits.len();
    if label >= n {
        return Err(Error::LabelOutOfRange { label, classes: n });
    }
    let max = logits.data().iter().cloned().fold(T::neg_infinity(), T::max);
    let sum = logits
        .data()
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - max).exp());
    Ok(sum.ln() - (logits.data()[label] - max))
}

/// Exact reverse-mode gradients of `loss_ce(forward(...), label)` with
/// respect to every parameter. `activations` must come from `forward` on the
/// same `(spec, params, input, masks)`.
pub fn backward<T: Real>(
    spec: &NetworkSpec,
    params: &Parameters<T>,
    input: &Tensor<T>,
    activations: &[Tensor<T>],
    label: usize,
    masks: Option<&MaskMap>,
) -> Result<Gradients<T>> {
    if activations.len() != spec.layers.len() {
        return Err(Error::InvalidParam {
            name: "activations",
            message: format!(
                "expected {} layer outputs, got {}",
                spec.layers.len(),
                activations.len()
            ),
        });
    }
    let logits = activations.last().ok_or(Error::EmptyInput("activations"))?;
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange { label, classes: logits.len() });
    }
    let mut grads = params.zeros_like();

    // d loss / d logits = softmax - onehot
    let probs = softmax(logits.data());
    let mut grad: Vec<T> = probs;
    grad[label] = grad[label] - T::one();
    let mut grad = Tensor::new(logits.shape().to_vec(), grad)?;

    for i in (0..spec.layers.len()).rev() {
        let layer_input = if i == 0 { input } else { &activations[i - 1] };
        grad = match &spec.layers[i] {
            LayerSpec::Conv2d { out_channels, kernel_size, stride, padding } => {
                let lp = params.get(i).expect("checked in forward");
                let g = grads.get_mut(i).expect("zeros_like keeps keys");
                conv2d_backward(
                    layer_input,
                    &lp.weight,
                    &grad,
                    g,
                    *out_channels,
                    *kernel_size,
                    *stride,
                    *padding,
                )?
            }
            LayerSpec::Linear { .. } => {
                let lp = params.get(i).expect("checked in forward");
                let g = grads.get_mut(i).expect("zeros_like keeps keys");
                linear_backward(layer_input, &lp.weight, &grad, g)?
            }
            LayerSpec::Relu => {
                let data = layer_input
                    .data()
                    .iter()
                    .zip(grad.data().iter())
                    .map(|(&x, &dy)| if x > T::zero() { dy } else { T::zero() })
                    .collect();
                Tensor::new(layer_input.shape().to_vec(), data)?
            }
            LayerSpec::Maxpool2x2 => maxpool_backward(layer_input, &grad)?,
            LayerSpec::Flatten => grad.reshaped(layer_input.shape().to_vec())?,
            LayerSpec::DropoutSlot { slot_index } => match masks {
                None => grad,
                Some(map) => {
                    let mask = map.get(slot_index).ok_or_else(|| Error::InvalidParam {
                        name: "masks",
                        message: format!("no mask provided for slot {slot_index}"),
                    })?;
                    dropout::apply(mask, &grad)?
                }
            },
        };
    }
    Ok(grads)
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dy: &Tensor<T>,
    grad_out: &mut LayerParams<T>,
    out_channels: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (ic, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (dy.shape()[1], dy.shape()[2]);
    let xd = x.data();
    let wd = weight.data();
    let dyd = dy.data();
    let mut dx = vec![T::zero(); ic * h * w];
    let dw = grad_out.weight.data_mut();
    let db = grad_out.bias.data_mut();
    for oc in 0..out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = dyd[oc * oh * ow + oy * ow + ox];
                db[oc] = db[oc] + g;
                for c in 0..ic {
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xi = c * h * w + iy as usize * w + ix as usize;
                            let wi = ((oc * ic + c) * k + ky) * k + kx;
                            dw[wi] = dw[wi] + g * xd[xi];
                            dx[xi] = dx[xi] + g * wd[wi];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![ic, h, w], dx)
}

fn linear_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dy: &Tensor<T>,
    grad_out: &mut LayerParams<T>,
) -> Result<Tensor<T>> {
    let in_features = x.len();
    let out_features = dy.len();
    let xd = x.data();
    let wd = weight.data();
    let dyd = dy.data();
    let dw = grad_out.weight.data_mut();
    let db = grad_out.bias.data_mut();
    let mut dx = vec![T::zero(); in_features];
    for o in 0..out_features {
        let g = dyd[o];
        db[o] = db[o] + g;
        for i in 0..in_features {
            dw[o * in_features + i] = dw[o * in_features + i] + g * xd[i];
            dx[i] = dx[i] + g * wd[o * in_features + i];
        }
    }
    Tensor::new(vec![in_features], dx)
}

fn maxpool_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (dy.shape()[1], dy.shape()[2]);
    let xd = x.data();
    let dyd = dy.data();
    let mut dx = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                // first strict maximum wins, matching the forward pass
                let mut best = T::neg_infinity();
                let mut best_idx = 0usize;
                for dy_ in 0..2 {
                    for dx_ in 0..2 {
                        let idx = ch * h * w + (oy * 2 + dy_) * w + (ox * 2 + dx_);
                        if xd[idx] > best {
                            best = xd[idx];
                            best_idx = idx;
                        }
                    }
                }
                dx[best_idx] = dx[best_idx] + dyd[ch * oh * ow + oy * ow + ox];
            }
        }
    }
    Tensor::new(vec![c, h, w], dx)
}

/// SGD with momentum: `v <- momentum * v + g; w <- w - lr * v`.
pub fn sgd_step<T: Real>(
    params: &mut Parameters<T>,
    grads: &Gradients<T>,
    lr: f64,
    momentum: f64,
    velocity: &mut ParamSet<T>,
) -> Result<()> {
    if lr <= 0.0 || !lr.is_finite() {
        return Err(Error::InvalidParam {
            name: "learning_rate",
            message: format!("must be positive, got {lr}"),
        });
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::InvalidParam {
            name: "momentum",
            message: format!("must lie in [0, 1), got {momentum}"),
        });
    }
    let lr_t = T::from_f64_exact(lr);
    let mom = T::from_f64_exact(momentum);
    let keys: Vec<usize> = params.iter().map(|(k, _)| k).collect();
    for key in keys {
        let g = grads.get(key).ok_or_else(|| Error::InvalidParam {
            name: "gradients",
            message: format!("missing gradient entry for layer {key}"),
        })?;
        let v = velocity.get_mut(key).ok_or_else(|| Error::InvalidParam {
            name: "velocity",
            message: format!("missing velocity entry for layer {key}"),
        })?;
        let p = params.get_mut(key).expect("key enumerated above");
        for ((w, vel), gr) in p
            .weight
            .data_mut()
            .iter_mut()
            .zip(v.weight.data_mut().iter_mut())
            .zip(g.weight.data().iter())
        {
            *vel = mom * *vel + *gr;
            *w = *w - lr_t * *vel;
        }
        for ((b, vel), gr) in p
            .bias
            .data_mut()
            .iter_mut()
            .zip(v.bias.data_mut().iter_mut())
            .zip(g.bias.data().iter())
        {
            *vel = mom * *vel + *gr;
            *b = *b - lr_t * *vel;
        }
    }
    Ok(())
}

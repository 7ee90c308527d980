//! Network layers with explicit forward and backward passes.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::ShapeError;

/// A (channels, length) activation tensor stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            data: vec![0.0; channels * len],
        }
    }

    pub fn from_flat(values: &[f64]) -> Self {
        Self {
            channels: 1,
            len: values.len(),
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    #[inline]
    fn derivative(self, preact: f64) -> f64 {
        match self {
            Activation::Relu => {
                if preact > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One network layer. Convolutions and dense layers carry trainable weights;
/// reshape and upsample are fixed wiring.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Layer {
    Conv1d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        /// `[out_ch][in_ch][kernel]`, flattened.
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    },
    Dense {
        in_dim: usize,
        out_dim: usize,
        /// `[out_dim][in_dim]`, flattened.
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    },
    /// Reinterprets a flat map as (channels, len).
    Reshape { channels: usize, len: usize },
    /// Nearest-neighbour upsampling along the length axis.
    Upsample { factor: usize },
}

impl Layer {
    /// Output shape for a given input shape; errors if the layer cannot
    /// consume it.
    pub fn out_shape(&self, in_shape: (usize, usize)) -> Result<(usize, usize), ShapeError> {
        let (ch, len) = in_shape;
        match self {
            Layer::Conv1d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
                ..
            } => {
                if ch != *in_ch || len + 2 * padding < *kernel {
                    return Err(ShapeError {
                        expected: *in_ch,
                        got: ch,
                    });
                }
                Ok((*out_ch, (len + 2 * padding - kernel) / stride + 1))
            }
            Layer::Dense { in_dim, out_dim, .. } => {
                if ch * len != *in_dim {
                    return Err(ShapeError {
                        expected: *in_dim,
                        got: ch * len,
                    });
                }
                Ok((1, *out_dim))
            }
            Layer::Reshape { channels, len: l } => {
                if ch * len != channels * l {
                    return Err(ShapeError {
                        expected: channels * l,
                        got: ch * len,
                    });
                }
                Ok((*channels, *l))
            }
            Layer::Upsample { factor } => Ok((ch, len * factor)),
        }
    }

    /// Number of trainable tensors (weight and bias count separately).
    pub(crate) fn tensor_sizes(&self) -> Vec<usize> {
        match self {
            Layer::Conv1d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                vec![weights.len(), bias.len()]
            }
            _ => vec![],
        }
    }
}

/// Saved intermediates of one layer's forward pass, enough to backpropagate.
#[derive(Debug, Clone)]
pub struct LayerCache {
    input: FeatureMap,
    /// Pre-activation values; only layers with an activation keep them.
    preact: Option<FeatureMap>,
}

/// Runs one layer forward, returning the output and the cache.
pub fn layer_forward(layer: &Layer, input: FeatureMap) -> (FeatureMap, LayerCache) {
    match layer {
        Layer::Conv1d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
            weights,
            bias,
            activation,
        } => {
            let in_len = input.len;
            let out_len = (in_len + 2 * padding - kernel) / stride + 1;
            let mut pre = FeatureMap::zeros(*out_ch, out_len);
            for o in 0..*out_ch {
                let out_row = pre.channel_mut(o);
                out_row.fill(bias[o]);
                for c in 0..*in_ch {
                    let x = input.channel(c);
                    let w = &weights[(o * in_ch + c) * kernel..(o * in_ch + c + 1) * kernel];
                    for (t, acc) in out_row.iter_mut().enumerate() {
                        let base = t * stride;
                        let mut s = 0.0;
                        for (j, wj) in w.iter().enumerate() {
                            let idx = base + j;
                            // Zero padding outside the input.
                            if idx >= *padding && idx - padding < in_len {
                                s += wj * x[idx - padding];
                            }
                        }
                        *acc += s;
                    }
                }
            }
            let mut out = pre.clone();
            for v in &mut out.data {
                *v = activation.apply(*v);
            }
            (
                out,
                LayerCache {
                    input,
                    preact: Some(pre),
                },
            )
        }
        Layer::Dense {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        } => {
            debug_assert_eq!(input.data.len(), *in_dim);
            let mut pre = FeatureMap::zeros(1, *out_dim);
            for (o, p) in pre.data.iter_mut().enumerate() {
                let w = &weights[o * in_dim..(o + 1) * in_dim];
                let mut s = bias[o];
                for (wv, xv) in w.iter().zip(&input.data) {
                    s += wv * xv;
                }
                *p = s;
            }
            let mut out = pre.clone();
            for v in &mut out.data {
                *v = activation.apply(*v);
            }
            (
                out,
                LayerCache {
                    input,
                    preact: Some(pre),
                },
            )
        }
        Layer::Reshape { channels, len } => {
            let mut out = input.clone();
            out.channels = *channels;
            out.len = *len;
            (
                out,
                LayerCache {
                    input,
                    preact: None,
                },
            )
        }
        Layer::Upsample { factor } => {
            let mut out = FeatureMap::zeros(input.channels, input.len * factor);
            for c in 0..input.channels {
                let src = input.channel(c);
                let dst = out.channel_mut(c);
                for (t, d) in dst.iter_mut().enumerate() {
                    *d = src[t / factor];
                }
            }
            (
                out,
                LayerCache {
                    input,
                    preact: None,
                },
            )
        }
    }
}

/// Backpropagates one layer: consumes the output gradient, accumulates the
/// weight and bias gradients into `gw` / `gb` (when the layer has them), and
/// returns the input gradient.
pub fn layer_backward(
    layer: &Layer,
    cache: &LayerCache,
    grad_out: FeatureMap,
    gw: &mut [f64],
    gb: &mut [f64],
) -> FeatureMap {
    match layer {
        Layer::Conv1d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
            weights,
            activation,
            ..
        } => {
            let pre = cache.preact.as_ref().expect("conv keeps preactivations");
            let in_len = cache.input.len;
            let mut grad_in = FeatureMap::zeros(*in_ch, in_len);
            for o in 0..*out_ch {
                let gout = grad_out.channel(o);
                let prow = pre.channel(o);
                // Activation derivative folds into a local gradient row.
                let mut dpre = vec![0.0f64; gout.len()];
                let mut bias_sum = 0.0;
                for (t, d) in dpre.iter_mut().enumerate() {
                    *d = gout[t] * activation.derivative(prow[t]);
                    bias_sum += *d;
                }
                gb[o] += bias_sum;
                for c in 0..*in_ch {
                    let x = cache.input.channel(c);
                    let w = &weights[(o * in_ch + c) * kernel..(o * in_ch + c + 1) * kernel];
                    let gwrow = &mut gw[(o * in_ch + c) * kernel..(o * in_ch + c + 1) * kernel];
                    let gin = grad_in.channel_mut(c);
                    for (t, d) in dpre.iter().enumerate() {
                        if *d == 0.0 {
                            continue;
                        }
                        let base = t * stride;
                        for j in 0..*kernel {
                            let idx = base + j;
                            if idx >= *padding && idx - padding < in_len {
                                gwrow[j] += d * x[idx - padding];
                                gin[idx - padding] += d * w[j];
                            }
                        }
                    }
                }
            }
            grad_in
        }
        Layer::Dense {
            in_dim,
            out_dim,
            weights,
            activation,
            ..
        } => {
            let pre = cache.preact.as_ref().expect("dense keeps preactivations");
            let mut grad_in = FeatureMap {
                channels: cache.input.channels,
                len: cache.input.len,
                data: vec![0.0; *in_dim],
            };
            for o in 0..*out_dim {
                let d = grad_out.data[o] * activation.derivative(pre.data[o]);
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let w = &weights[o * in_dim..(o + 1) * in_dim];
                let gwrow = &mut gw[o * in_dim..(o + 1) * in_dim];
                for ((gi, xv), (gwv, wv)) in grad_in
                    .data
                    .iter_mut()
                    .zip(&cache.input.data)
                    .zip(gwrow.iter_mut().zip(w))
                {
                    *gwv += d * xv;
                    *gi += d * wv;
                }
            }
            grad_in
        }
        Layer::Reshape { .. } => {
            let mut grad_in = grad_out;
            grad_in.channels = cache.input.channels;
            grad_in.len = cache.input.len;
            grad_in
        }
        Layer::Upsample { factor } => {
            let mut grad_in = FeatureMap::zeros(cache.input.channels, cache.input.len);
            for c in 0..grad_in.channels {
                let gout = grad_out.channel(c);
                let gin = grad_in.channel_mut(c);
                for (t, g) in gout.iter().enumerate() {
                    gin[t / factor] += g;
                }
            }
            grad_in
        }
    }
}

/// Forward through a stack of layers, keeping every cache.
pub fn stack_forward(
    layers: &[Layer],
    input: FeatureMap,
) -> Result<(Vec<LayerCache>, FeatureMap), ShapeError> {
    let mut caches = Vec::with_capacity(layers.len());
    let mut cur = input;
    for layer in layers {
        layer.out_shape((cur.channels, cur.len))?;
        let (out, cache) = layer_forward(layer, cur);
        caches.push(cache);
        cur = out;
    }
    Ok((caches, cur))
}

/// Forward without caching, for inference.
pub fn stack_infer(layers: &[Layer], input: FeatureMap) -> Result<FeatureMap, ShapeError> {
    let mut cur = input;
    for layer in layers {
        layer.out_shape((cur.channels, cur.len))?;
        let (out, _) = layer_forward(layer, cur);
        cur = out;
    }
    Ok(cur)
}

/// Backward through a stack. `grad_slots` holds one gradient buffer per
/// trainable tensor of these layers (weight, bias, in layer order), starting
/// at `slot_offset`; gradients accumulate into them.
pub fn stack_backward(
    layers: &[Layer],
    caches: &[LayerCache],
    grad_out: FeatureMap,
    grad_slots: &mut [Vec<f64>],
    slot_offset: usize,
) -> FeatureMap {
    // Slot index of each layer's first tensor.
    let mut starts = Vec::with_capacity(layers.len());
    let mut s = slot_offset;
    for layer in layers {
        starts.push(s);
        s += layer.tensor_sizes().len();
    }
    let mut grad = grad_out;
    for (idx, layer) in layers.iter().enumerate().rev() {
        let cache = &caches[idx];
        grad = match layer {
            Layer::Conv1d { .. } | Layer::Dense { .. } => {
                let (left, right) = grad_slots.split_at_mut(starts[idx] + 1);
                let gw = &mut left[starts[idx]];
                let gb = &mut right[0];
                layer_backward(layer, cache, grad, gw, gb)
            }
            _ => layer_backward(layer, cache, grad, &mut [], &mut []),
        };
    }
    grad
}

/// Shape after running a stack on the given input shape.
pub fn shape_of(layers: &[Layer], mut shape: (usize, usize)) -> Result<(usize, usize), ShapeError> {
    for layer in layers {
        shape = layer.out_shape(shape)?;
    }
    Ok(shape)
}

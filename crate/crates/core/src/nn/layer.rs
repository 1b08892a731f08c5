//! Layer kernels for a single (unbatched) sample.
//!
//! Every kernel follows IEEE-754 propagation: a NaN or infinity entering a
//! layer flows through to its outputs instead of being clamped away.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    /// Row-major `[out_features, in_features]`.
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Row-major `[out_channels, in_channels, kernel, kernel]`.
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
}

/// Inference-mode batch normalization over the leading (channel) dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub eps: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense(Dense),
    Conv2d(Conv2d),
    MaxPool2d(MaxPool2d),
    BatchNorm(BatchNorm),
    Relu,
    Sigmoid,
    Flatten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv2d,
    MaxPool2d,
    BatchNorm,
    Relu,
    Sigmoid,
    Flatten,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Dense => "dense",
            LayerKind::Conv2d => "conv2d",
            LayerKind::MaxPool2d => "maxpool2d",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Relu => "relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Flatten => "flatten",
        }
    }
}

#[inline]
pub(crate) fn relu(x: f32) -> f32 {
    // `f32::max` would swallow NaN.
    if x > 0.0 || x.is_nan() {
        x
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

fn spatial(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    match shape {
        [c, h, w] => Ok((*c, *h, *w)),
        _ => Err(Error::Shape(format!("{what} expects [C, H, W] input, got {shape:?}"))),
    }
}

impl Conv2d {
    fn out_dim(&self, size: usize) -> Option<usize> {
        let padded = size + 2 * self.padding;
        (padded >= self.kernel && self.stride > 0).then(|| (padded - self.kernel) / self.stride + 1)
    }

    #[inline]
    fn w(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> f32 {
        self.weight[((oc * self.in_channels + ic) * self.kernel + ky) * self.kernel + kx]
    }
}

impl MaxPool2d {
    fn out_dim(&self, size: usize) -> Option<usize> {
        (size >= self.kernel && self.stride > 0).then(|| (size - self.kernel) / self.stride + 1)
    }
}

impl BatchNorm {
    #[inline]
    fn scale(&self, c: usize) -> f32 {
        self.gamma[c] / (self.var[c] + self.eps).sqrt()
    }
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Dense(_) => LayerKind::Dense,
            LayerSpec::Conv2d(_) => LayerKind::Conv2d,
            LayerSpec::MaxPool2d(_) => LayerKind::MaxPool2d,
            LayerSpec::BatchNorm(_) => LayerKind::BatchNorm,
            LayerSpec::Relu => LayerKind::Relu,
            LayerSpec::Sigmoid => LayerKind::Sigmoid,
            LayerSpec::Flatten => LayerKind::Flatten,
        }
    }

    pub fn is_activation(&self) -> bool {
        matches!(self, LayerSpec::Relu | LayerSpec::Sigmoid)
    }

    /// Named parameter tensors in storage order.
    pub fn params(&self) -> Vec<(&'static str, &[f32])> {
        match self {
            LayerSpec::Dense(d) => vec![("weight", &d.weight), ("bias", &d.bias)],
            LayerSpec::Conv2d(c) => vec![("weight", &c.weight), ("bias", &c.bias)],
            LayerSpec::BatchNorm(b) => vec![
                ("gamma", &b.gamma),
                ("beta", &b.beta),
                ("mean", &b.mean),
                ("var", &b.var),
            ],
            _ => Vec::new(),
        }
    }

    /// Parameters updated by gradient descent, in the order `param_grads` fills them.
    pub(crate) fn trainable_mut(&mut self) -> Vec<&mut Vec<f32>> {
        match self {
            LayerSpec::Dense(d) => vec![&mut d.weight, &mut d.bias],
            LayerSpec::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            LayerSpec::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
            _ => Vec::new(),
        }
    }

    pub(crate) fn trainable_lens(&self) -> Vec<usize> {
        match self {
            LayerSpec::Dense(d) => vec![d.weight.len(), d.bias.len()],
            LayerSpec::Conv2d(c) => vec![c.weight.len(), c.bias.len()],
            LayerSpec::BatchNorm(b) => vec![b.gamma.len(), b.beta.len()],
            _ => Vec::new(),
        }
    }

    /// Checks parameter lengths and returns the per-sample output shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let input_len: usize = input.iter().product();
        match self {
            LayerSpec::Dense(d) => {
                if input.len() != 1 || input[0] != d.in_features {
                    return Err(Error::Shape(format!(
                        "dense layer expects [{}], got {input:?}",
                        d.in_features
                    )));
                }
                check_len("dense weight", d.weight.len(), d.in_features * d.out_features)?;
                check_len("dense bias", d.bias.len(), d.out_features)?;
                Ok(vec![d.out_features])
            }
            LayerSpec::Conv2d(c) => {
                let (ch, h, w) = spatial(input, "conv2d")?;
                if ch != c.in_channels {
                    return Err(Error::Shape(format!(
                        "conv2d expects {} channels, got {ch}",
                        c.in_channels
                    )));
                }
                check_len(
                    "conv2d weight",
                    c.weight.len(),
                    c.out_channels * c.in_channels * c.kernel * c.kernel,
                )?;
                check_len("conv2d bias", c.bias.len(), c.out_channels)?;
                match (c.out_dim(h), c.out_dim(w)) {
                    (Some(oh), Some(ow)) => Ok(vec![c.out_channels, oh, ow]),
                    _ => Err(Error::Shape(format!("conv2d kernel does not fit {input:?}"))),
                }
            }
            LayerSpec::MaxPool2d(p) => {
                let (ch, h, w) = spatial(input, "maxpool2d")?;
                match (p.out_dim(h), p.out_dim(w)) {
                    (Some(oh), Some(ow)) => Ok(vec![ch, oh, ow]),
                    _ => Err(Error::Shape(format!("pool window does not fit {input:?}"))),
                }
            }
            LayerSpec::BatchNorm(b) => {
                if input.is_empty() || input[0] != b.channels {
                    return Err(Error::Shape(format!(
                        "batchnorm expects {} channels, got {input:?}",
                        b.channels
                    )));
                }
                for (name, v) in [
                    ("gamma", &b.gamma),
                    ("beta", &b.beta),
                    ("mean", &b.mean),
                    ("var", &b.var),
                ] {
                    check_len(name, v.len(), b.channels)?;
                }
                if b.var.iter().any(|&v| v.is_nan() || v <= 0.0) {
                    return Err(Error::Shape("batchnorm variance entries must be > 0".into()));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Relu | LayerSpec::Sigmoid => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input_len]),
        }
    }

    /// Computes the layer output for one sample. `output` must already have
    /// the length implied by [`LayerSpec::output_shape`].
    pub fn forward(&self, in_shape: &[usize], input: &[f32], output: &mut [f32]) {
        match self {
            LayerSpec::Dense(d) => {
                for (o, out) in output.iter_mut().enumerate() {
                    let row = &d.weight[o * d.in_features..(o + 1) * d.in_features];
                    let mut acc = d.bias[o];
                    for (w, x) in row.iter().zip(input) {
                        acc += w * x;
                    }
                    *out = acc;
                }
            }
            LayerSpec::Conv2d(c) => conv_forward(c, in_shape, input, output),
            LayerSpec::MaxPool2d(p) => {
                let (ch, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let (oh, ow) = (p.out_dim(h).unwrap(), p.out_dim(w).unwrap());
                for c in 0..ch {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let (idx, _) = pool_argmax(p, input, c, h, w, oy, ox);
                            output[(c * oh + oy) * ow + ox] = input[idx];
                        }
                    }
                }
            }
            LayerSpec::BatchNorm(b) => {
                let per = input.len() / b.channels;
                for c in 0..b.channels {
                    let scale = b.scale(c);
                    for i in c * per..(c + 1) * per {
                        output[i] = (input[i] - b.mean[c]) * scale + b.beta[c];
                    }
                }
            }
            LayerSpec::Relu => {
                for (o, &x) in output.iter_mut().zip(input) {
                    *o = relu(x);
                }
            }
            LayerSpec::Sigmoid => {
                for (o, &x) in output.iter_mut().zip(input) {
                    *o = sigmoid(x);
                }
            }
            LayerSpec::Flatten => output.copy_from_slice(input),
        }
    }

    /// Propagates `grad_out` (d/d output) back to d/d input.
    pub fn backward_input(
        &self,
        in_shape: &[usize],
        input: &[f32],
        output: &[f32],
        grad_out: &[f32],
        grad_in: &mut [f32],
    ) {
        match self {
            LayerSpec::Dense(d) => {
                grad_in.fill(0.0);
                for (o, &g) in grad_out.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    let row = &d.weight[o * d.in_features..(o + 1) * d.in_features];
                    for (gi, w) in grad_in.iter_mut().zip(row) {
                        *gi += w * g;
                    }
                }
            }
            LayerSpec::Conv2d(c) => conv_backward_input(c, in_shape, grad_out, grad_in),
            LayerSpec::MaxPool2d(p) => {
                grad_in.fill(0.0);
                let (ch, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let (oh, ow) = (p.out_dim(h).unwrap(), p.out_dim(w).unwrap());
                for c in 0..ch {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let (idx, _) = pool_argmax(p, input, c, h, w, oy, ox);
                            grad_in[idx] += grad_out[(c * oh + oy) * ow + ox];
                        }
                    }
                }
            }
            LayerSpec::BatchNorm(b) => {
                let per = input.len() / b.channels;
                for c in 0..b.channels {
                    let scale = b.scale(c);
                    for i in c * per..(c + 1) * per {
                        grad_in[i] = grad_out[i] * scale;
                    }
                }
            }
            LayerSpec::Relu => {
                for ((gi, &g), &x) in grad_in.iter_mut().zip(grad_out).zip(input) {
                    *gi = if x > 0.0 {
                        g
                    } else if x.is_nan() {
                        f32::NAN
                    } else {
                        0.0
                    };
                }
            }
            LayerSpec::Sigmoid => {
                for ((gi, &g), &y) in grad_in.iter_mut().zip(grad_out).zip(output) {
                    *gi = g * y * (1.0 - y);
                }
            }
            LayerSpec::Flatten => grad_in.copy_from_slice(grad_out),
        }
    }

    /// Accumulates parameter gradients into `grads` (one buffer per trainable tensor).
    pub(crate) fn accumulate_param_grads(
        &self,
        in_shape: &[usize],
        input: &[f32],
        grad_out: &[f32],
        grads: &mut [Vec<f32>],
    ) {
        match self {
            LayerSpec::Dense(d) => {
                let (gw, rest) = grads.split_at_mut(1);
                let (gw, gb) = (&mut gw[0], &mut rest[0]);
                for (o, &g) in grad_out.iter().enumerate() {
                    gb[o] += g;
                    if g == 0.0 {
                        continue;
                    }
                    let row = &mut gw[o * d.in_features..(o + 1) * d.in_features];
                    for (w, x) in row.iter_mut().zip(input) {
                        *w += g * x;
                    }
                }
            }
            LayerSpec::Conv2d(c) => {
                let (gw, rest) = grads.split_at_mut(1);
                conv_param_grads(c, in_shape, input, grad_out, &mut gw[0], &mut rest[0]);
            }
            LayerSpec::BatchNorm(b) => {
                let per = input.len() / b.channels;
                let (gg, rest) = grads.split_at_mut(1);
                let (gg, gb) = (&mut gg[0], &mut rest[0]);
                for c in 0..b.channels {
                    let inv = 1.0 / (b.var[c] + b.eps).sqrt();
                    for i in c * per..(c + 1) * per {
                        gg[c] += grad_out[i] * (input[i] - b.mean[c]) * inv;
                        gb[c] += grad_out[i];
                    }
                }
            }
            _ => {}
        }
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{what} has {got} values, expected {want}")));
    }
    Ok(())
}

/// Index of the window maximum (first occurrence); a NaN anywhere in the
/// window wins so that it propagates.
#[inline]
fn pool_argmax(p: &MaxPool2d, input: &[f32], c: usize, h: usize, w: usize, oy: usize, ox: usize) -> (usize, f32) {
    let mut best_idx = (c * h + oy * p.stride) * w + ox * p.stride;
    let mut best = input[best_idx];
    for ky in 0..p.kernel {
        for kx in 0..p.kernel {
            let idx = (c * h + oy * p.stride + ky) * w + ox * p.stride + kx;
            let v = input[idx];
            if best.is_nan() {
                return (best_idx, best);
            }
            if v > best || v.is_nan() {
                best = v;
                best_idx = idx;
            }
        }
    }
    (best_idx, best)
}

/// Visits every (output column, input column) pair that a kernel column
/// `kx` touches in one output row, skipping padding.
#[inline]
fn row_span(c: &Conv2d, ow: usize, w: usize, kx: usize) -> (usize, usize) {
    // First ox whose input column is inside the image.
    let mut start = 0;
    while start < ow && start * c.stride + kx < c.padding {
        start += 1;
    }
    let mut end = ow;
    while end > start && (end - 1) * c.stride + kx >= c.padding + w {
        end -= 1;
    }
    (start, end)
}

fn conv_forward(c: &Conv2d, in_shape: &[usize], input: &[f32], output: &mut [f32]) {
    let (h, w) = (in_shape[1], in_shape[2]);
    let (oh, ow) = (c.out_dim(h).unwrap(), c.out_dim(w).unwrap());
    for oc in 0..c.out_channels {
        output[oc * oh * ow..(oc + 1) * oh * ow].fill(c.bias[oc]);
    }
    for oc in 0..c.out_channels {
        let plane = &mut output[oc * oh * ow..(oc + 1) * oh * ow];
        for ic in 0..c.in_channels {
            let chan = &input[ic * h * w..(ic + 1) * h * w];
            for ky in 0..c.kernel {
                for kx in 0..c.kernel {
                    let wv = c.w(oc, ic, ky, kx);
                    let (x0, x1) = row_span(c, ow, w, kx);
                    for oy in 0..oh {
                        let iy = oy * c.stride + ky;
                        if iy < c.padding || iy - c.padding >= h {
                            continue;
                        }
                        let in_row = &chan[(iy - c.padding) * w..(iy - c.padding + 1) * w];
                        let out_row = &mut plane[oy * ow..(oy + 1) * ow];
                        if c.stride == 1 {
                            let off = x0 + kx - c.padding;
                            for (o, x) in out_row[x0..x1].iter_mut().zip(&in_row[off..off + (x1 - x0)]) {
                                *o += wv * x;
                            }
                        } else {
                            for ox in x0..x1 {
                                out_row[ox] += wv * in_row[ox * c.stride + kx - c.padding];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_backward_input(c: &Conv2d, in_shape: &[usize], grad_out: &[f32], grad_in: &mut [f32]) {
    let (h, w) = (in_shape[1], in_shape[2]);
    let (oh, ow) = (c.out_dim(h).unwrap(), c.out_dim(w).unwrap());
    grad_in.fill(0.0);
    for oc in 0..c.out_channels {
        let plane = &grad_out[oc * oh * ow..(oc + 1) * oh * ow];
        for ic in 0..c.in_channels {
            let chan = &mut grad_in[ic * h * w..(ic + 1) * h * w];
            for ky in 0..c.kernel {
                for kx in 0..c.kernel {
                    let wv = c.w(oc, ic, ky, kx);
                    let (x0, x1) = row_span(c, ow, w, kx);
                    for oy in 0..oh {
                        let iy = oy * c.stride + ky;
                        if iy < c.padding || iy - c.padding >= h {
                            continue;
                        }
                        let in_row = &mut chan[(iy - c.padding) * w..(iy - c.padding + 1) * w];
                        let g_row = &plane[oy * ow..(oy + 1) * ow];
                        for ox in x0..x1 {
                            in_row[ox * c.stride + kx - c.padding] += wv * g_row[ox];
                        }
                    }
                }
            }
        }
    }
}

fn conv_param_grads(c: &Conv2d, in_shape: &[usize], input: &[f32], grad_out: &[f32], gw: &mut [f32], gb: &mut [f32]) {
    let (h, w) = (in_shape[1], in_shape[2]);
    let (oh, ow) = (c.out_dim(h).unwrap(), c.out_dim(w).unwrap());
    for oc in 0..c.out_channels {
        let plane = &grad_out[oc * oh * ow..(oc + 1) * oh * ow];
        gb[oc] += plane.iter().sum::<f32>();
        for ic in 0..c.in_channels {
            let chan = &input[ic * h * w..(ic + 1) * h * w];
            for ky in 0..c.kernel {
                for kx in 0..c.kernel {
                    let (x0, x1) = row_span(c, ow, w, kx);
                    let mut acc = 0.0f32;
                    for oy in 0..oh {
                        let iy = oy * c.stride + ky;
                        if iy < c.padding || iy - c.padding >= h {
                            continue;
                        }
                        let in_row = &chan[(iy - c.padding) * w..(iy - c.padding + 1) * w];
                        let g_row = &plane[oy * ow..(oy + 1) * ow];
                        for ox in x0..x1 {
                            acc += g_row[ox] * in_row[ox * c.stride + kx - c.padding];
                        }
                    }
                    gw[((oc * c.in_channels + ic) * c.kernel + ky) * c.kernel + kx] += acc;
                }
            }
        }
    }
}

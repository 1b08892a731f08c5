//! Plain f64 re-implementation of the forward pass, written against the
//! public layer parameters only. Used as an oracle for the f32 engine.

#![allow(dead_code)]

use vrange_core::nn::{LayerSpec, NetworkModel};

/// Output of a reference run: logits plus the piecewise-linear "pattern"
/// (ReLU activity and pool winners) downstream of the injection point.
pub struct RefRun {
    pub logits: Vec<f64>,
    pub pattern: Vec<usize>,
}

/// Runs `input` through `model` in f64, adding `delta` to element `neuron`
/// of layer `at`'s output (if given).
pub fn forward(model: &NetworkModel, input: &[f32], inject: Option<(usize, usize, f64)>) -> RefRun {
    let mut x: Vec<f64> = input.iter().map(|&v| v as f64).collect();
    let mut pattern = Vec::new();
    for (i, layer) in model.layers().iter().enumerate() {
        let shape = model.layer_input_shape(i);
        let downstream = inject.is_some_and(|(at, _, _)| i > at);
        x = match layer {
            LayerSpec::Dense(d) => (0..d.out_features)
                .map(|o| {
                    let row = &d.weight[o * d.in_features..(o + 1) * d.in_features];
                    d.bias[o] as f64 + row.iter().zip(&x).map(|(&w, &v)| w as f64 * v).sum::<f64>()
                })
                .collect(),
            LayerSpec::Conv2d(c) => {
                let (h, w) = (shape[1] as isize, shape[2] as isize);
                let k = c.kernel as isize;
                let p = c.padding as isize;
                let s = c.stride as isize;
                let oh = (h + 2 * p - k) / s + 1;
                let ow = (w + 2 * p - k) / s + 1;
                let mut out = Vec::with_capacity(c.out_channels * (oh * ow) as usize);
                for oc in 0..c.out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = c.bias[oc] as f64;
                            for ic in 0..c.in_channels {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let (iy, ix) = (oy * s + ky - p, ox * s + kx - p);
                                        if iy < 0 || ix < 0 || iy >= h || ix >= w {
                                            continue;
                                        }
                                        let wi = ((oc * c.in_channels + ic) * c.kernel + ky as usize) * c.kernel
                                            + kx as usize;
                                        let xi = (ic as isize * h + iy) * w + ix;
                                        acc += c.weight[wi] as f64 * x[xi as usize];
                                    }
                                }
                            }
                            out.push(acc);
                        }
                    }
                }
                out
            }
            LayerSpec::MaxPool2d(pl) => {
                let (ch, h, w) = (shape[0], shape[1], shape[2]);
                let oh = (h - pl.kernel) / pl.stride + 1;
                let ow = (w - pl.kernel) / pl.stride + 1;
                let mut out = Vec::with_capacity(ch * oh * ow);
                for c in 0..ch {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = (usize::MAX, f64::NEG_INFINITY);
                            for ky in 0..pl.kernel {
                                for kx in 0..pl.kernel {
                                    let idx = (c * h + oy * pl.stride + ky) * w + ox * pl.stride + kx;
                                    if x[idx] > best.1 {
                                        best = (idx, x[idx]);
                                    }
                                }
                            }
                            if downstream {
                                pattern.push(best.0);
                            }
                            out.push(best.1);
                        }
                    }
                }
                out
            }
            LayerSpec::BatchNorm(b) => {
                let per = x.len() / b.channels;
                x.iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let c = i / per;
                        let scale = b.gamma[c] as f64 / (b.var[c] as f64 + b.eps as f64).sqrt();
                        (v - b.mean[c] as f64) * scale + b.beta[c] as f64
                    })
                    .collect()
            }
            LayerSpec::Relu => {
                if downstream {
                    pattern.extend(x.iter().map(|&v| usize::from(v > 0.0)));
                }
                x.iter().map(|&v| v.max(0.0)).collect()
            }
            LayerSpec::Sigmoid => x.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
            LayerSpec::Flatten => x,
        };
        if let Some((at, neuron, delta)) = inject {
            if i == at {
                x[neuron] += delta;
            }
        }
    }
    RefRun { logits: x, pattern }
}

/// Sum of top-class margins, in f64.
pub fn margin_sum(logits: &[f64], top: usize) -> f64 {
    logits.iter().map(|&v| logits[top] - v).sum()
}

//! Layer kinds and their per-sample forward/backward kernels.
//!
//! Image tensors are `[channels, height, width]`. Dense layers take rank-1
//! input, so convolutional stacks need a `Flatten` before the first `Dense`.

use serde::{Deserialize, Serialize};

use super::ops::{sigmoid, softmax_slice};
use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Valid (unpadded) 2-D convolution with a square kernel.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    /// Non-overlapping square max pooling; trailing rows/columns are dropped.
    MaxPool2d {
        size: usize,
    },
    Flatten,
    Relu,
    Sigmoid,
    Softmax,
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize) -> Self {
        LayerSpec::Dense { inputs, outputs }
    }

    /// 3×3 kernel, stride 1.
    pub fn conv2d(in_channels: usize, out_channels: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel: 3,
            stride: 1,
        }
    }

    /// 2×2 pooling.
    pub fn max_pool() -> Self {
        LayerSpec::MaxPool2d { size: 2 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "max_pool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Relu => "relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Softmax => "softmax",
        }
    }

    /// Shapes of the trainable tensors: weights then bias.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            ],
            _ => Vec::new(),
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            _ => 0,
        }
    }

    /// Output shape for `input`, or a description of why it does not fit.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                if input != [inputs] {
                    return Err(format!("expects input [{inputs}], got {input:?}"));
                }
                Ok(vec![outputs])
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                if kernel == 0 || stride == 0 {
                    return Err("kernel and stride must be positive".into());
                }
                match *input {
                    [c, h, w] if c == in_channels && h >= kernel && w >= kernel => Ok(vec![
                        out_channels,
                        (h - kernel) / stride + 1,
                        (w - kernel) / stride + 1,
                    ]),
                    _ => Err(format!(
                        "expects input [{in_channels}, >={kernel}, >={kernel}], got {input:?}"
                    )),
                }
            }
            LayerSpec::MaxPool2d { size } => match *input {
                [c, h, w] if size > 0 && h >= size && w >= size => Ok(vec![c, h / size, w / size]),
                _ => Err(format!("expects input [c, >={size}, >={size}], got {input:?}")),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Relu | LayerSpec::Sigmoid => Ok(input.to_vec()),
            LayerSpec::Softmax => {
                if input.len() != 1 || input[0] == 0 {
                    return Err(format!("expects non-empty rank-1 input, got {input:?}"));
                }
                Ok(input.to_vec())
            }
        }
    }

    /// Shapes must already have been validated by the owning network.
    pub(crate) fn forward(&self, params: &[Tensor], input: &Tensor, out_shape: &[usize]) -> Tensor {
        let x = input.data();
        let data = match *self {
            LayerSpec::Dense { inputs, outputs } => {
                let w = params[0].data();
                let b = params[1].data();
                (0..outputs)
                    .map(|o| {
                        let row = &w[o * inputs..(o + 1) * inputs];
                        b[o] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
                    })
                    .collect()
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => conv_forward(
                x,
                input.shape(),
                params[0].data(),
                params[1].data(),
                in_channels,
                out_channels,
                kernel,
                stride,
                out_shape,
            ),
            LayerSpec::MaxPool2d { size } => {
                let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
                let (oh, ow) = (out_shape[1], out_shape[2]);
                let mut out = Vec::with_capacity(c * oh * ow);
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let idx = pool_argmax(x, ch, h, w, oy, ox, size);
                            out.push(x[idx]);
                        }
                    }
                }
                out
            }
            LayerSpec::Flatten => x.to_vec(),
            LayerSpec::Relu => x.iter().map(|v| v.max(0.0)).collect(),
            LayerSpec::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
            LayerSpec::Softmax => softmax_slice(x),
        };
        Tensor::from_raw(out_shape.to_vec(), data)
    }

    /// Returns the gradient with respect to the input and one gradient per
    /// parameter tensor.
    pub(crate) fn backward(
        &self,
        params: &[Tensor],
        input: &Tensor,
        output: &Tensor,
        grad_out: &Tensor,
    ) -> (Tensor, Vec<Tensor>) {
        let x = input.data();
        let g = grad_out.data();
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                let w = params[0].data();
                let mut gw = vec![0.0; outputs * inputs];
                let mut gx = vec![0.0; inputs];
                for o in 0..outputs {
                    let go = g[o];
                    if go == 0.0 {
                        continue;
                    }
                    let row = &w[o * inputs..(o + 1) * inputs];
                    let grow = &mut gw[o * inputs..(o + 1) * inputs];
                    for i in 0..inputs {
                        grow[i] = go * x[i];
                        gx[i] += row[i] * go;
                    }
                }
                (
                    Tensor::from_raw(input.shape().to_vec(), gx),
                    vec![
                        Tensor::from_raw(vec![outputs, inputs], gw),
                        Tensor::from_raw(vec![outputs], g.to_vec()),
                    ],
                )
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                let (gx, gw, gb) = conv_backward(
                    x,
                    input.shape(),
                    params[0].data(),
                    g,
                    output.shape(),
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                );
                (
                    Tensor::from_raw(input.shape().to_vec(), gx),
                    vec![
                        Tensor::from_raw(params[0].shape().to_vec(), gw),
                        Tensor::from_raw(vec![out_channels], gb),
                    ],
                )
            }
            LayerSpec::MaxPool2d { size } => {
                let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
                let (oh, ow) = (output.shape()[1], output.shape()[2]);
                let mut gx = vec![0.0; x.len()];
                let mut k = 0;
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            gx[pool_argmax(x, ch, h, w, oy, ox, size)] += g[k];
                            k += 1;
                        }
                    }
                }
                (Tensor::from_raw(input.shape().to_vec(), gx), Vec::new())
            }
            LayerSpec::Flatten => (Tensor::from_raw(input.shape().to_vec(), g.to_vec()), Vec::new()),
            LayerSpec::Relu => {
                let gx = x
                    .iter()
                    .zip(g)
                    .map(|(&xi, &gi)| if xi > 0.0 { gi } else { 0.0 })
                    .collect();
                (Tensor::from_raw(input.shape().to_vec(), gx), Vec::new())
            }
            LayerSpec::Sigmoid => {
                let gx = output
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&y, &gi)| gi * y * (1.0 - y))
                    .collect();
                (Tensor::from_raw(input.shape().to_vec(), gx), Vec::new())
            }
            LayerSpec::Softmax => {
                let y = output.data();
                let yg: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                let gx = y.iter().zip(g).map(|(&yi, &gi)| yi * (gi - yg)).collect();
                (Tensor::from_raw(input.shape().to_vec(), gx), Vec::new())
            }
        }
    }
}

/// Flat index of the first maximum inside pooling window `(oy, ox)`.
pub(crate) fn pool_argmax(
    x: &[f64],
    ch: usize,
    h: usize,
    w: usize,
    oy: usize,
    ox: usize,
    size: usize,
) -> usize {
    let base = ch * h * w;
    let mut best = base + oy * size * w + ox * size;
    for dy in 0..size {
        let row = base + (oy * size + dy) * w + ox * size;
        for dx in 0..size {
            if x[row + dx] > x[best] {
                best = row + dx;
            }
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &[f64],
    in_shape: &[usize],
    weights: &[f64],
    bias: &[f64],
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    out_shape: &[usize],
) -> Vec<f64> {
    let (h, w) = (in_shape[1], in_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let plane = oh * ow;
    let mut out = vec![0.0; out_channels * plane];
    for o in 0..out_channels {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.fill(bias[o]);
        for c in 0..in_channels {
            let src = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..kernel {
                for kx in 0..kernel {
                    let wv = weights[((o * in_channels + c) * kernel + ky) * kernel + kx];
                    for oy in 0..oh {
                        let row = &src[(oy * stride + ky) * w + kx..];
                        let drow = &mut dst[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            for (d, s) in drow.iter_mut().zip(&row[..ow]) {
                                *d += wv * s;
                            }
                        } else {
                            for (ox, d) in drow.iter_mut().enumerate() {
                                *d += wv * row[ox * stride];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    in_shape: &[usize],
    weights: &[f64],
    g: &[f64],
    out_shape: &[usize],
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (h, w) = (in_shape[1], in_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let plane = oh * ow;
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; weights.len()];
    let mut gb = vec![0.0; out_channels];
    for o in 0..out_channels {
        let go = &g[o * plane..(o + 1) * plane];
        gb[o] = go.iter().sum();
        for c in 0..in_channels {
            let src = &x[c * h * w..(c + 1) * h * w];
            let gsrc = &mut gx[c * h * w..(c + 1) * h * w];
            for ky in 0..kernel {
                for kx in 0..kernel {
                    let widx = ((o * in_channels + c) * kernel + ky) * kernel + kx;
                    let wv = weights[widx];
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let off = (oy * stride + ky) * w + kx;
                        let grow = &go[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            let row = &src[off..off + ow];
                            let gin = &mut gsrc[off..off + ow];
                            for ((gi, s), gv) in gin.iter_mut().zip(row).zip(grow) {
                                acc += gv * s;
                                *gi += wv * gv;
                            }
                        } else {
                            for (ox, gv) in grow.iter().enumerate() {
                                acc += gv * src[off + ox * stride];
                                gsrc[off + ox * stride] += wv * gv;
                            }
                        }
                    }
                    gw[widx] = acc;
                }
            }
        }
    }
    (gx, gw, gb)
}

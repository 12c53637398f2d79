//! Feed-forward networks: dense and 3×3 convolutional blocks with batch-statistics
//! normalisation, ReLU and 2×2 max-pooling.
//!
//! Activations are laid out batch-first. Image activations are `[n, h, w, c]`.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::autodiff::{IndexMap, Var, NO_SOURCE};
use super::tensor::{numel, Tensor};
use crate::error::{dim_err, Result};

const BN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum Layer {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// 3×3 kernel, stride 1, same padding.
    Conv3x3 {
        in_channels: usize,
        out_channels: usize,
    },
    /// Normalises with the statistics of the current batch, then applies a
    /// learned scale and shift.
    BatchNorm {
        features: usize,
    },
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Sigmoid,
    MaxPool2x2,
    Flatten,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Per-sample input shape: `[dim]` or `[h, w, c]`.
    pub input: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl Architecture {
    pub fn new(input: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let arch = Architecture { input, layers };
        arch.output_shape()?;
        Ok(arch)
    }

    /// Dense blocks (`Dense → [BatchNorm] → ReLU`) followed by an optional
    /// linear head.
    pub fn mlp(input_dim: usize, hidden: &[usize], outputs: Option<usize>, batch_norm: bool) -> Self {
        let mut layers = Vec::new();
        let mut width = input_dim;
        for &h in hidden {
            layers.push(Layer::Dense { inputs: width, outputs: h });
            if batch_norm {
                layers.push(Layer::BatchNorm { features: h });
            }
            layers.push(Layer::Relu);
            width = h;
        }
        if let Some(out) = outputs {
            layers.push(Layer::Dense { inputs: width, outputs: out });
        }
        Architecture { input: vec![input_dim], layers }
    }

    /// Four `conv 3×3 → batch norm → ReLU → max-pool 2×2` blocks, flattened,
    /// with an optional linear head.
    pub fn conv4(input: [usize; 3], filters: usize, outputs: Option<usize>) -> Result<Self> {
        let [h, w, c] = input;
        let mut layers = Vec::new();
        let mut channels = c;
        let (mut hh, mut ww) = (h, w);
        for _ in 0..4 {
            layers.push(Layer::Conv3x3 { in_channels: channels, out_channels: filters });
            layers.push(Layer::BatchNorm { features: filters });
            layers.push(Layer::Relu);
            layers.push(Layer::MaxPool2x2);
            channels = filters;
            hh /= 2;
            ww /= 2;
        }
        layers.push(Layer::Flatten);
        if let Some(out) = outputs {
            layers.push(Layer::Dense { inputs: hh * ww * filters, outputs: out });
        }
        Architecture::new(vec![h, w, c], layers)
    }

    /// Per-sample output shape; fails if consecutive layers do not compose.
    pub fn output_shape(&self) -> Result<Vec<usize>> {
        if self.input.is_empty() || self.input.contains(&0) {
            return Err(dim_err(format!("bad input shape {:?}", self.input)));
        }
        let mut shape = self.input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match *layer {
                Layer::Dense { inputs, outputs } => {
                    if shape != [inputs] {
                        return Err(dim_err(format!("layer {i}: dense expects [{inputs}], got {shape:?}")));
                    }
                    vec![outputs]
                }
                Layer::Conv3x3 { in_channels, out_channels } => {
                    if shape.len() != 3 || shape[2] != in_channels {
                        return Err(dim_err(format!("layer {i}: conv expects [h, w, {in_channels}], got {shape:?}")));
                    }
                    vec![shape[0], shape[1], out_channels]
                }
                Layer::BatchNorm { features } => {
                    if shape.last() != Some(&features) {
                        return Err(dim_err(format!("layer {i}: batch norm over {features} features, got {shape:?}")));
                    }
                    shape
                }
                Layer::MaxPool2x2 => {
                    if shape.len() != 3 || shape[0] < 2 || shape[1] < 2 {
                        return Err(dim_err(format!("layer {i}: max-pool needs [h>=2, w>=2, c], got {shape:?}")));
                    }
                    vec![shape[0] / 2, shape[1] / 2, shape[2]]
                }
                Layer::Flatten => vec![numel(&shape)],
                Layer::Relu | Layer::LeakyRelu { .. } | Layer::Sigmoid => shape,
            };
        }
        Ok(shape)
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        for layer in &self.layers {
            match *layer {
                Layer::Dense { inputs, outputs } => {
                    shapes.push(vec![inputs, outputs]);
                    shapes.push(vec![outputs]);
                }
                Layer::Conv3x3 { in_channels, out_channels } => {
                    shapes.push(vec![out_channels, in_channels, 3, 3]);
                    shapes.push(vec![out_channels]);
                }
                Layer::BatchNorm { features } => {
                    shapes.push(vec![features]);
                    shapes.push(vec![features]);
                }
                _ => {}
            }
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| numel(s)).sum()
    }

    /// He-normal weights, zero biases, unit batch-norm scale.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> NetworkParams {
        let mut tensors = Vec::new();
        for layer in &self.layers {
            match *layer {
                Layer::Dense { inputs, outputs } => {
                    tensors.push(Tensor::randn(&[inputs, outputs], (2.0 / inputs as f64).sqrt(), rng));
                    tensors.push(Tensor::zeros(&[outputs]));
                }
                Layer::Conv3x3 { in_channels, out_channels } => {
                    let fan_in = 9 * in_channels;
                    tensors.push(Tensor::randn(&[out_channels, in_channels, 3, 3], (2.0 / fan_in as f64).sqrt(), rng));
                    tensors.push(Tensor::zeros(&[out_channels]));
                }
                Layer::BatchNorm { features } => {
                    tensors.push(Tensor::full(&[features], 1.0));
                    tensors.push(Tensor::zeros(&[features]));
                }
                _ => {}
            }
        }
        NetworkParams { arch: self.clone(), tensors }
    }

    /// Differentiable forward pass. `params` follow [`Architecture::param_shapes`].
    pub fn forward_vars(&self, params: &[Var], batch: &Var) -> Result<Var> {
        let expected = self.param_shapes();
        if params.len() != expected.len() || params.iter().zip(&expected).any(|(p, s)| p.shape() != s.as_slice()) {
            return Err(dim_err("parameter tensors do not match the architecture"));
        }
        if batch.shape().len() != self.input.len() + 1 || batch.shape()[1..] != self.input[..] {
            return Err(dim_err(format!("batch shape {:?} does not match input [n, {:?}]", batch.shape(), self.input)));
        }
        let n = batch.shape()[0];
        let mut x = batch.clone();
        let mut p = params.iter();
        for layer in &self.layers {
            x = match *layer {
                Layer::Dense { .. } => {
                    let (w, b) = (p.next().unwrap(), p.next().unwrap());
                    x.matmul(w).add(&b.broadcast_rows(n))
                }
                Layer::Conv3x3 { .. } => {
                    let (k, b) = (p.next().unwrap(), p.next().unwrap());
                    conv3x3(&x, k, b)
                }
                Layer::BatchNorm { .. } => {
                    let (gamma, beta) = (p.next().unwrap(), p.next().unwrap());
                    batch_norm(&x, gamma, beta)
                }
                Layer::Relu => x.relu(),
                Layer::LeakyRelu { slope } => x.leaky_relu(slope),
                Layer::Sigmoid => x.sigmoid(),
                Layer::MaxPool2x2 => max_pool2x2(&x),
                Layer::Flatten => {
                    let w = numel(&x.shape()[1..]);
                    x.reshape(&[n, w])
                }
            };
        }
        Ok(x)
    }
}

fn conv3x3(x: &Var, kernel: &Var, bias: &Var) -> Var {
    let s = x.shape();
    let (n, h, w, cin) = (s[0], s[1], s[2], s[3]);
    let cout = kernel.shape()[0];
    let cols = x.gather(&im2col_map(n, h, w, cin));
    let kmat = kernel.gather(&kernel_matrix_map(cout, cin));
    let rows = n * h * w;
    cols.matmul(&kmat).add(&bias.broadcast_rows(rows)).reshape(&[n, h, w, cout])
}

/// `[n, h, w, c] -> [n·h·w, 9·c]` patch matrix, column index `(ky·3 + kx)·c + ci`.
fn im2col_map(n: usize, h: usize, w: usize, c: usize) -> Rc<IndexMap> {
    let mut src = Vec::with_capacity(n * h * w * 9 * c);
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let (yy, xx) = ((y + ky) as isize - 1, (x + kx) as isize - 1);
                        let inside = yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w;
                        for ci in 0..c {
                            src.push(if inside {
                                ((b * h + yy as usize) * w + xx as usize) * c + ci
                            } else {
                                NO_SOURCE
                            });
                        }
                    }
                }
            }
        }
    }
    IndexMap::new(src, vec![n, h, w, c], vec![n * h * w, 9 * c])
}

/// Kernel `[cout, cin, 3, 3]` rearranged to the `[9·cin, cout]` matrix matching [`im2col_map`].
fn kernel_matrix_map(cout: usize, cin: usize) -> Rc<IndexMap> {
    let mut src = Vec::with_capacity(9 * cin * cout);
    for ky in 0..3 {
        for kx in 0..3 {
            for ci in 0..cin {
                for co in 0..cout {
                    src.push(((co * cin + ci) * 3 + ky) * 3 + kx);
                }
            }
        }
    }
    IndexMap::new(src, vec![cout, cin, 3, 3], vec![9 * cin, cout])
}

fn max_pool2x2(x: &Var) -> Var {
    let s = x.shape();
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = (h / 2, w / 2);
    let v = x.value().data();
    let mut src = Vec::with_capacity(n * oh * ow * c);
    for b in 0..n {
        for y in 0..oh {
            for xx in 0..ow {
                for ch in 0..c {
                    let mut best = ((b * h + 2 * y) * w + 2 * xx) * c + ch;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = ((b * h + 2 * y + dy) * w + 2 * xx + dx) * c + ch;
                        if v[idx] > v[best] {
                            best = idx;
                        }
                    }
                    src.push(best);
                }
            }
        }
    }
    x.gather(&IndexMap::new(src, s.to_vec(), vec![n, oh, ow, c]))
}

fn batch_norm(x: &Var, gamma: &Var, beta: &Var) -> Var {
    let shape = x.shape().to_vec();
    let c = *shape.last().unwrap();
    let rows = x.value().len() / c;
    let flat = x.reshape(&[rows, c]);
    let mean = flat.sum_rows().scale(1.0 / rows as f64);
    let centered = flat.sub(&mean.broadcast_rows(rows));
    let var = centered.square().sum_rows().scale(1.0 / rows as f64);
    let std = var.shift(BN_EPS).sqrt();
    let normed = centered.div(&std.broadcast_rows(rows));
    normed.mul(&gamma.broadcast_rows(rows)).add(&beta.broadcast_rows(rows)).reshape(&shape)
}

/// Architecture plus one tensor per parameter slot.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub tensors: Vec<Tensor>,
}

impl NetworkParams {
    pub fn new(arch: Architecture, tensors: Vec<Tensor>) -> Result<Self> {
        let shapes = arch.param_shapes();
        if shapes.len() != tensors.len() || shapes.iter().zip(&tensors).any(|(s, t)| s.as_slice() != t.shape()) {
            return Err(dim_err("parameter tensors do not match the architecture"));
        }
        Ok(NetworkParams { arch, tensors })
    }

    pub fn as_parameters(&self) -> Vec<Var> {
        self.tensors.iter().cloned().map(Var::parameter).collect()
    }

    pub fn as_constants(&self) -> Vec<Var> {
        self.tensors.iter().cloned().map(Var::constant).collect()
    }

    pub fn with_tensors(&self, tensors: Vec<Tensor>) -> Result<Self> {
        NetworkParams::new(self.arch.clone(), tensors)
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// All parameters, concatenated in slot order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn from_flat(arch: Architecture, values: &[f64]) -> Result<Self> {
        let shapes = arch.param_shapes();
        let total: usize = shapes.iter().map(|s| numel(s)).sum();
        if total != values.len() {
            return Err(dim_err(format!("architecture has {total} parameters, got {}", values.len())));
        }
        let mut offset = 0;
        let tensors = shapes
            .into_iter()
            .map(|s| {
                let n = numel(&s);
                let t = Tensor::from_parts(s, values[offset..offset + n].to_vec());
                offset += n;
                t
            })
            .collect();
        Ok(NetworkParams { arch, tensors })
    }
}

/// Non-differentiable forward pass.
pub fn forward(net: &NetworkParams, batch: &Tensor) -> Result<Tensor> {
    let out = net.arch.forward_vars(&net.as_constants(), &Var::constant(batch.clone()))?;
    Ok(out.value().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn single_affine_unit() {
        let arch = Architecture::new(vec![1], vec![Layer::Dense { inputs: 1, outputs: 1 }]).unwrap();
        let net = NetworkParams::new(arch, vec![Tensor::scalar(2.0).reshape(vec![1, 1]).unwrap(), Tensor::scalar(1.0)])
            .unwrap();
        let y = forward(&net, &Tensor::new(vec![1, 1], vec![3.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[7.0]);
    }

    #[test]
    fn identity_linear_net() {
        let arch = Architecture::mlp(2, &[], Some(2), false);
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let net = NetworkParams::new(arch, vec![w, Tensor::zeros(&[2])]).unwrap();
        let y = forward(&net, &Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let arch = Architecture::mlp(3, &[4], Some(2), false);
        let net = arch.init(&mut rng::from_seed(0));
        let err = forward(&net, &Tensor::zeros(&[5, 2])).unwrap_err();
        assert!(matches!(err, crate::Error::Dimension(_)));
    }

    #[test]
    fn non_composing_layers_rejected() {
        let r = Architecture::new(
            vec![4],
            vec![Layer::Dense { inputs: 4, outputs: 3 }, Layer::Dense { inputs: 4, outputs: 2 }],
        );
        assert!(r.is_err());
        assert!(Architecture::new(vec![4], vec![Layer::MaxPool2x2]).is_err());
    }

    #[test]
    fn conv4_shapes_for_28x28() {
        let arch = Architecture::conv4([28, 28, 1], 64, Some(5)).unwrap();
        // 28 -> 14 -> 7 -> 3 -> 1
        assert_eq!(arch.output_shape().unwrap(), vec![5]);
        let convs = arch.layers.iter().filter(|l| matches!(l, Layer::Conv3x3 { .. })).count();
        assert_eq!(convs, 4);
        // 4 conv blocks + head
        let expected = (9 * 64 + 64 + 128) + 3 * (9 * 64 * 64 + 64 + 128) + (64 * 5 + 5);
        assert_eq!(arch.param_count(), expected);
    }

    #[test]
    fn conv_matches_direct_convolution() {
        let mut r = rng::from_seed(3);
        let arch = Architecture::new(vec![4, 5, 2], vec![Layer::Conv3x3 { in_channels: 2, out_channels: 3 }]).unwrap();
        let net = arch.init(&mut r);
        let x = Tensor::randn(&[2, 4, 5, 2], 1.0, &mut r);
        let y = forward(&net, &x).unwrap();
        let (k, b) = (net.tensors[0].data(), net.tensors[1].data());
        let xv = x.data();
        for n in 0..2 {
            for i in 0..4 {
                for j in 0..5 {
                    for co in 0..3 {
                        let mut acc = b[co];
                        for ci in 0..2 {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let (yy, xx) = (i as isize + ky as isize - 1, j as isize + kx as isize - 1);
                                    if yy < 0 || xx < 0 || yy >= 4 || xx >= 5 {
                                        continue;
                                    }
                                    let xi = ((n * 4 + yy as usize) * 5 + xx as usize) * 2 + ci;
                                    acc += xv[xi] * k[((co * 2 + ci) * 3 + ky) * 3 + kx];
                                }
                            }
                        }
                        let got = y.data()[((n * 4 + i) * 5 + j) * 3 + co];
                        assert!((got - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn max_pool_picks_window_maximum() {
        let arch = Architecture::new(vec![2, 2, 1], vec![Layer::MaxPool2x2]).unwrap();
        let net = NetworkParams::new(arch, vec![]).unwrap();
        let y = forward(&net, &Tensor::new(vec![1, 2, 2, 1], vec![0.5, -1.0, 3.0, 2.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[3.0]);
    }

    #[test]
    fn batch_norm_standardises_features() {
        let arch = Architecture::new(vec![2], vec![Layer::BatchNorm { features: 2 }]).unwrap();
        let net = arch.init(&mut rng::from_seed(0));
        let x = Tensor::new(vec![4, 2], vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0]).unwrap();
        let y = forward(&net, &x).unwrap();
        for c in 0..2 {
            let col: Vec<f64> = (0..4).map(|i| y.data()[i * 2 + c]).collect();
            let mean = col.iter().sum::<f64>() / 4.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}

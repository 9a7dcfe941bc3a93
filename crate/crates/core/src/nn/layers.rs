//! Layer kinds with hand-written forward and backward passes.
//!
//! Every layer caches what its backward pass needs during `forward`; calling
//! `backward` without a preceding `forward` is a state error. Parameter
//! gradients are overwritten (not accumulated) by each backward call.

use serde::{Deserialize, Serialize};

use super::ops::{col2im_acc, gemm_acc, gemm_nt_acc, gemm_tn_acc, im2col, ConvGeom};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Per-layer scratch state that never takes part in equality or serialization.
#[derive(Debug, Clone)]
pub(crate) struct Cache<T>(pub Option<T>);

impl<T> Default for Cache<T> {
    fn default() -> Self {
        Cache(None)
    }
}

impl<T> PartialEq for Cache<T> {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl<T> Cache<T> {
    fn take_or(&mut self, layer: &str) -> Result<T> {
        self.0
            .take()
            .ok_or_else(|| Error::State(format!("{layer}: backward called without a forward pass")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
}

impl PartialEq for Param {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.value == other.value
    }
}

impl Param {
    pub fn new(shape: Vec<usize>, value: Vec<f64>) -> Self {
        let n = value.len();
        Param {
            shape,
            value,
            grad: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    fn reset_grad(&mut self) -> &mut [f64] {
        self.grad.clear();
        self.grad.resize(self.value.len(), 0.0);
        &mut self.grad
    }

    /// Values alongside a freshly zeroed gradient buffer.
    fn split_reset(&mut self) -> (&[f64], &mut [f64]) {
        self.reset_grad();
        (&self.value, &mut self.grad)
    }
}

fn expect_rank(layer: &str, x: &Tensor, rank: usize) -> Result<()> {
    if x.shape().len() != rank {
        return Err(Error::shape(
            layer,
            format!("expected a rank-{rank} batch, got shape {:?}", x.shape()),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    /// `[out, in, kh, kw]`
    pub weight: Param,
    pub bias: Param,
    #[serde(skip)]
    cache: Cache<Tensor>,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        weight: Vec<f64>,
    ) -> Self {
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: Param::new(vec![out_channels, in_channels, kernel.0, kernel.1], weight),
            bias: Param::new(vec![out_channels], vec![0.0; out_channels]),
            cache: Cache::default(),
        }
    }

    fn geom(&self, shape: &[usize]) -> Result<ConvGeom> {
        let [c, h, w] = shape else {
            return Err(Error::shape("conv2d", format!("expected [C, H, W], got {shape:?}")));
        };
        if *c != self.in_channels {
            return Err(Error::shape(
                "conv2d",
                format!("expected {} input channels, got {c}", self.in_channels),
            ));
        }
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;
        if h + 2 * ph < kh || w + 2 * pw < kw || sh == 0 || sw == 0 {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {:?} does not fit input {h}x{w}", self.kernel),
            ));
        }
        Ok(ConvGeom {
            channels: *c,
            height: *h,
            width: *w,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
            out_h: (h + 2 * ph - kh) / sh + 1,
            out_w: (w + 2 * pw - kw) / sw + 1,
        })
    }

    fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let g = self.geom(input)?;
        Ok(vec![self.out_channels, g.out_h, g.out_w])
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        expect_rank("conv2d", x, 4)?;
        let g = self.geom(x.sample_shape())?;
        let (o, k, p) = (self.out_channels, g.rows(), g.cols());
        let n = x.batch();
        let mut out = vec![0.0; n * o * p];
        for (i, y) in out.chunks_mut(o * p).enumerate() {
            let cols = im2col(x.sample(i), &g);
            gemm_acc(&self.weight.value, &cols, y, o, k, p);
            for (row, b) in y.chunks_mut(p).zip(&self.bias.value) {
                row.iter_mut().for_each(|v| *v += b);
            }
        }
        self.cache.0 = Some(x.clone());
        Tensor::new(vec![n, o, g.out_h, g.out_w], out)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self.cache.take_or("conv2d")?;
        let g = self.geom(x.sample_shape())?;
        let (o, k, p) = (self.out_channels, g.rows(), g.cols());
        if dy.shape() != [x.batch(), o, g.out_h, g.out_w] {
            return Err(Error::shape("conv2d", format!("gradient shape {:?}", dy.shape())));
        }
        let in_len = x.sample_len();
        let mut dx = vec![0.0; x.len()];
        let (weight, dw) = self.weight.split_reset();
        let mut dcols = vec![0.0; k * p];
        for i in 0..x.batch() {
            let cols = im2col(x.sample(i), &g);
            let dy_s = dy.sample(i);
            gemm_nt_acc(dy_s, &cols, dw, o, p, k);
            dcols.iter_mut().for_each(|v| *v = 0.0);
            gemm_tn_acc(weight, dy_s, &mut dcols, o, k, p);
            col2im_acc(&dcols, &g, &mut dx[i * in_len..(i + 1) * in_len]);
        }
        let db = self.bias.reset_grad();
        for i in 0..x.batch() {
            for (c, row) in dy.sample(i).chunks(p).enumerate() {
                db[c] += row.iter().sum::<f64>();
            }
        }
        Tensor::new(x.shape().to_vec(), dx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvTranspose2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub output_padding: (usize, usize),
    /// `[in, out, kh, kw]`
    pub weight: Param,
    pub bias: Param,
    #[serde(skip)]
    cache: Cache<Tensor>,
}

impl ConvTranspose2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        output_padding: (usize, usize),
        weight: Vec<f64>,
    ) -> Self {
        ConvTranspose2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            output_padding,
            weight: Param::new(vec![in_channels, out_channels, kernel.0, kernel.1], weight),
            bias: Param::new(vec![out_channels], vec![0.0; out_channels]),
            cache: Cache::default(),
        }
    }

    /// Geometry of the forward convolution this layer is the transpose of.
    fn geom(&self, shape: &[usize]) -> Result<ConvGeom> {
        let [c, h, w] = shape else {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("expected [C, H, W], got {shape:?}"),
            ));
        };
        if *c != self.in_channels {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("expected {} input channels, got {c}", self.in_channels),
            ));
        }
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;
        let (oph, opw) = self.output_padding;
        if sh == 0 || sw == 0 || oph >= sh || opw >= sw {
            return Err(Error::shape(
                "conv_transpose2d",
                "output padding must be smaller than the stride",
            ));
        }
        let full_h = (h - 1) * sh + kh + oph;
        let full_w = (w - 1) * sw + kw + opw;
        if full_h <= 2 * ph || full_w <= 2 * pw {
            return Err(Error::shape("conv_transpose2d", "padding removes the whole output"));
        }
        Ok(ConvGeom {
            channels: self.out_channels,
            height: full_h - 2 * ph,
            width: full_w - 2 * pw,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
            out_h: *h,
            out_w: *w,
        })
    }

    fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let g = self.geom(input)?;
        Ok(vec![self.out_channels, g.height, g.width])
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        expect_rank("conv_transpose2d", x, 4)?;
        let g = self.geom(x.sample_shape())?;
        let (cin, kc, p) = (self.in_channels, g.rows(), g.cols());
        let out_len = self.out_channels * g.height * g.width;
        let plane = g.height * g.width;
        let n = x.batch();
        let mut out = vec![0.0; n * out_len];
        let mut cols = vec![0.0; kc * p];
        for (i, y) in out.chunks_mut(out_len).enumerate() {
            cols.iter_mut().for_each(|v| *v = 0.0);
            gemm_tn_acc(&self.weight.value, x.sample(i), &mut cols, cin, kc, p);
            col2im_acc(&cols, &g, y);
            for (row, b) in y.chunks_mut(plane).zip(&self.bias.value) {
                row.iter_mut().for_each(|v| *v += b);
            }
        }
        self.cache.0 = Some(x.clone());
        Tensor::new(vec![n, self.out_channels, g.height, g.width], out)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self.cache.take_or("conv_transpose2d")?;
        let g = self.geom(x.sample_shape())?;
        let (cin, kc, p) = (self.in_channels, g.rows(), g.cols());
        if dy.shape() != [x.batch(), self.out_channels, g.height, g.width] {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("gradient shape {:?}", dy.shape()),
            ));
        }
        let in_len = x.sample_len();
        let plane = g.height * g.width;
        let mut dx = vec![0.0; x.len()];
        let (weight, dw) = self.weight.split_reset();
        for i in 0..x.batch() {
            let dcols = im2col(dy.sample(i), &g);
            gemm_acc(weight, &dcols, &mut dx[i * in_len..(i + 1) * in_len], cin, kc, p);
            gemm_nt_acc(x.sample(i), &dcols, dw, cin, p, kc);
        }
        let db = self.bias.reset_grad();
        for i in 0..x.batch() {
            for (c, row) in dy.sample(i).chunks(plane).enumerate() {
                db[c] += row.iter().sum::<f64>();
            }
        }
        Tensor::new(x.shape().to_vec(), dx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxPool2d {
    pub size: usize,
    #[serde(skip)]
    cache: Cache<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(size: usize) -> Self {
        MaxPool2d {
            size,
            cache: Cache::default(),
        }
    }

    fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let [c, h, w] = input else {
            return Err(Error::shape("maxpool2d", format!("expected [C, H, W], got {input:?}")));
        };
        if self.size == 0 || *h < self.size || *w < self.size {
            return Err(Error::shape(
                "maxpool2d",
                format!("pool {} does not fit {h}x{w}", self.size),
            ));
        }
        Ok(vec![*c, h / self.size, w / self.size])
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        expect_rank("maxpool2d", x, 4)?;
        let out_shape = self.out_shape(x.sample_shape())?;
        let (c, h, w) = (x.shape()[1], x.shape()[2], x.shape()[3]);
        let (oh, ow) = (out_shape[1], out_shape[2]);
        let s = self.size;
        let n = x.batch();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        let data = x.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = base + (oy * s) * w + ox * s;
                    let mut best = data[best_idx];
                    for dy in 0..s {
                        for dx in 0..s {
                            let idx = base + (oy * s + dy) * w + ox * s + dx;
                            // strict comparison keeps the first maximum on ties
                            if data[idx] > best {
                                best = data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
        self.cache.0 = Some((x.shape().to_vec(), argmax));
        Tensor::new(vec![n, c, oh, ow], out)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let (shape, argmax) = self.cache.take_or("maxpool2d")?;
        if dy.len() != argmax.len() {
            return Err(Error::shape("maxpool2d", format!("gradient shape {:?}", dy.shape())));
        }
        let mut dx = Tensor::zeros(shape);
        let grad = dx.data_mut();
        for (&idx, &g) in argmax.iter().zip(dy.data()) {
            grad[idx] += g;
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out, in]`
    pub weight: Param,
    pub bias: Param,
    #[serde(skip)]
    cache: Cache<Tensor>,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize, weight: Vec<f64>) -> Self {
        Dense {
            in_features,
            out_features,
            weight: Param::new(vec![out_features, in_features], weight),
            bias: Param::new(vec![out_features], vec![0.0; out_features]),
            cache: Cache::default(),
        }
    }

    fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input != [self.in_features] {
            return Err(Error::shape(
                "dense",
                format!("expected [{}], got {input:?}", self.in_features),
            ));
        }
        Ok(vec![self.out_features])
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        expect_rank("dense", x, 2)?;
        self.out_shape(x.sample_shape())?;
        let n = x.batch();
        let mut y = vec![0.0; n * self.out_features];
        gemm_nt_acc(x.data(), &self.weight.value, &mut y, n, self.in_features, self.out_features);
        for row in y.chunks_mut(self.out_features) {
            for (v, b) in row.iter_mut().zip(&self.bias.value) {
                *v += b;
            }
        }
        self.cache.0 = Some(x.clone());
        Tensor::new(vec![n, self.out_features], y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self.cache.take_or("dense")?;
        let n = x.batch();
        if dy.shape() != [n, self.out_features] {
            return Err(Error::shape("dense", format!("gradient shape {:?}", dy.shape())));
        }
        let dw = self.weight.reset_grad();
        gemm_tn_acc(dy.data(), x.data(), dw, n, self.out_features, self.in_features);
        let db = self.bias.reset_grad();
        for row in dy.data().chunks(self.out_features) {
            for (d, g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
        let mut dx = vec![0.0; n * self.in_features];
        gemm_acc(dy.data(), &self.weight.value, &mut dx, n, self.out_features, self.in_features);
        Tensor::new(x.shape().to_vec(), dx)
    }
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    shape: Vec<usize>,
    training: bool,
}

/// Normalizes each channel (axis 1) over the batch and any spatial axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    #[serde(skip)]
    cache: Cache<BnCache>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            channels,
            eps: 1e-5,
            momentum: 0.1,
            gamma: Param::new(vec![channels], vec![1.0; channels]),
            beta: Param::new(vec![channels], vec![0.0; channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            cache: Cache::default(),
        }
    }

    fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.first() != Some(&self.channels) {
            return Err(Error::shape(
                "batchnorm",
                format!("expected {} channels, got shape {input:?}", self.channels),
            ));
        }
        Ok(input.to_vec())
    }

    fn forward(&mut self, x: &Tensor, training: bool) -> Result<Tensor> {
        if x.shape().len() < 2 {
            return Err(Error::shape("batchnorm", format!("shape {:?}", x.shape())));
        }
        self.out_shape(x.sample_shape())?;
        let n = x.batch();
        let c = self.channels;
        let spatial: usize = x.shape()[2..].iter().product();
        let count = (n * spatial) as f64;
        let data = x.data();
        let offsets = |ch: usize| (0..n).map(move |b| (b * c + ch) * spatial);

        let (mean, var) = if training {
            if n * spatial < 2 {
                return Err(Error::shape(
                    "batchnorm",
                    "training mode needs at least two values per channel",
                ));
            }
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let m = offsets(ch)
                    .map(|o| data[o..o + spatial].iter().sum::<f64>())
                    .sum::<f64>()
                    / count;
                let v = offsets(ch)
                    .map(|o| data[o..o + spatial].iter().map(|x| (x - m) * (x - m)).sum::<f64>())
                    .sum::<f64>()
                    / count;
                mean[ch] = m;
                var[ch] = v;
                let unbiased = v * count / (count - 1.0);
                self.running_mean[ch] = (1.0 - self.momentum) * self.running_mean[ch] + self.momentum * m;
                self.running_var[ch] =
                    (1.0 - self.momentum) * self.running_var[ch] + self.momentum * unbiased;
            }
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };

        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = vec![0.0; x.len()];
        let mut y = vec![0.0; x.len()];
        for ch in 0..c {
            let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
            for o in offsets(ch) {
                for i in o..o + spatial {
                    let h = (data[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = h;
                    y[i] = g * h + b;
                }
            }
        }
        self.cache.0 = Some(BnCache {
            xhat,
            inv_std,
            shape: x.shape().to_vec(),
            training,
        });
        Tensor::new(x.shape().to_vec(), y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take_or("batchnorm")?;
        if dy.shape() != cache.shape.as_slice() {
            return Err(Error::shape("batchnorm", format!("gradient shape {:?}", dy.shape())));
        }
        let n = cache.shape[0];
        let c = self.channels;
        let spatial: usize = cache.shape[2..].iter().product();
        let count = (n * spatial) as f64;
        let g = dy.data();
        let offsets = |ch: usize| (0..n).map(move |b| (b * c + ch) * spatial);

        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        let mut dx = vec![0.0; dy.len()];
        for ch in 0..c {
            let (mut sum_g, mut sum_gx) = (0.0, 0.0);
            for o in offsets(ch) {
                for (gi, xi) in g[o..o + spatial].iter().zip(&cache.xhat[o..o + spatial]) {
                    sum_g += gi;
                    sum_gx += gi * xi;
                }
            }
            dbeta[ch] = sum_g;
            dgamma[ch] = sum_gx;
            let scale = self.gamma.value[ch] * cache.inv_std[ch];
            for o in offsets(ch) {
                for i in o..o + spatial {
                    dx[i] = if cache.training {
                        scale * (g[i] - sum_g / count - cache.xhat[i] * sum_gx / count)
                    } else {
                        scale * g[i]
                    };
                }
            }
        }
        self.gamma.reset_grad().copy_from_slice(&dgamma);
        self.beta.reset_grad().copy_from_slice(&dbeta);
        Tensor::new(cache.shape, dx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakyRelu {
    pub alpha: f64,
    #[serde(skip)]
    cache: Cache<Tensor>,
}

impl LeakyRelu {
    pub fn new(alpha: f64) -> Self {
        LeakyRelu {
            alpha,
            cache: Cache::default(),
        }
    }

    fn forward(&mut self, x: &Tensor) -> Tensor {
        let a = self.alpha;
        self.cache.0 = Some(x.clone());
        x.map(|v| if v >= 0.0 { v } else { a * v })
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self.cache.take_or("leaky_relu")?;
        if x.shape() != dy.shape() {
            return Err(Error::shape("leaky_relu", format!("gradient shape {:?}", dy.shape())));
        }
        let a = self.alpha;
        let data = x.data().iter().zip(dy.data()).map(|(&v, &g)| if v >= 0.0 { g } else { a * g });
        Tensor::new(x.shape().to_vec(), data.collect())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Sigmoid {
    #[serde(skip)]
    cache: Cache<Tensor>,
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Sigmoid {
    fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = x.map(sigmoid);
        self.cache.0 = Some(y.clone());
        y
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let y = self.cache.take_or("sigmoid")?;
        if y.shape() != dy.shape() {
            return Err(Error::shape("sigmoid", format!("gradient shape {:?}", dy.shape())));
        }
        let data = y.data().iter().zip(dy.data()).map(|(&s, &g)| g * s * (1.0 - s));
        Tensor::new(y.shape().to_vec(), data.collect())
    }
}

/// Reshapes each sample; `Flatten` is a reshape to `[len]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reshape {
    pub target: Vec<usize>,
    #[serde(skip)]
    cache: Cache<Vec<usize>>,
}

impl Reshape {
    pub fn new(target: Vec<usize>) -> Self {
        Reshape {
            target,
            cache: Cache::default(),
        }
    }

    fn out_shape(&self, input: &[usize], layer: &str) -> Result<Vec<usize>> {
        let have: usize = input.iter().product();
        let want: usize = self.target.iter().product();
        if have != want {
            return Err(Error::shape(
                layer,
                format!("cannot reshape {input:?} into {:?}", self.target),
            ));
        }
        Ok(self.target.clone())
    }

    fn forward(&mut self, x: &Tensor, layer: &str) -> Result<Tensor> {
        self.out_shape(x.sample_shape(), layer)?;
        let mut shape = vec![x.batch()];
        shape.extend_from_slice(&self.target);
        self.cache.0 = Some(x.shape().to_vec());
        x.clone().reshape(shape)
    }

    fn backward(&mut self, dy: &Tensor, layer: &str) -> Result<Tensor> {
        let shape = self.cache.take_or(layer)?;
        dy.clone().reshape(shape)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv2d(Conv2d),
    ConvTranspose2d(ConvTranspose2d),
    MaxPool2d(MaxPool2d),
    Dense(Dense),
    BatchNorm(BatchNorm),
    LeakyRelu(LeakyRelu),
    Sigmoid(Sigmoid),
    Flatten(Reshape),
    Reshape(Reshape),
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::ConvTranspose2d(_) => "conv_transpose2d",
            Layer::MaxPool2d(_) => "maxpool2d",
            Layer::Dense(_) => "dense",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::LeakyRelu(_) => "leaky_relu",
            Layer::Sigmoid(_) => "sigmoid",
            Layer::Flatten(_) => "flatten",
            Layer::Reshape(_) => "reshape",
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv2d(l) => l.out_shape(input),
            Layer::ConvTranspose2d(l) => l.out_shape(input),
            Layer::MaxPool2d(l) => l.out_shape(input),
            Layer::Dense(l) => l.out_shape(input),
            Layer::BatchNorm(l) => l.out_shape(input),
            Layer::LeakyRelu(_) | Layer::Sigmoid(_) => Ok(input.to_vec()),
            Layer::Flatten(l) | Layer::Reshape(l) => l.out_shape(input, self.name()),
        }
    }

    pub fn forward(&mut self, x: &Tensor, training: bool) -> Result<Tensor> {
        let name = self.name();
        match self {
            Layer::Conv2d(l) => l.forward(x),
            Layer::ConvTranspose2d(l) => l.forward(x),
            Layer::MaxPool2d(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, training),
            Layer::LeakyRelu(l) => Ok(l.forward(x)),
            Layer::Sigmoid(l) => Ok(l.forward(x)),
            Layer::Flatten(l) | Layer::Reshape(l) => l.forward(x, name),
        }
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let name = self.name();
        match self {
            Layer::Conv2d(l) => l.backward(dy),
            Layer::ConvTranspose2d(l) => l.backward(dy),
            Layer::MaxPool2d(l) => l.backward(dy),
            Layer::Dense(l) => l.backward(dy),
            Layer::BatchNorm(l) => l.backward(dy),
            Layer::LeakyRelu(l) => l.backward(dy),
            Layer::Sigmoid(l) => l.backward(dy),
            Layer::Flatten(l) | Layer::Reshape(l) => l.backward(dy, name),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::ConvTranspose2d(l) => vec![&l.weight, &l.bias],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::ConvTranspose2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            _ => Vec::new(),
        }
    }

    /// Running statistics and other state the optimizer never touches.
    pub fn non_trainable_count(&self) -> usize {
        match self {
            Layer::BatchNorm(l) => l.running_mean.len() + l.running_var.len(),
            _ => 0,
        }
    }

    pub(crate) fn clear_cache(&mut self) {
        match self {
            Layer::Conv2d(l) => l.cache.0 = None,
            Layer::ConvTranspose2d(l) => l.cache.0 = None,
            Layer::MaxPool2d(l) => l.cache.0 = None,
            Layer::Dense(l) => l.cache.0 = None,
            Layer::BatchNorm(l) => l.cache.0 = None,
            Layer::LeakyRelu(l) => l.cache.0 = None,
            Layer::Sigmoid(l) => l.cache.0 = None,
            Layer::Flatten(l) | Layer::Reshape(l) => l.cache.0 = None,
        }
    }
}

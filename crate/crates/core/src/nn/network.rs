use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    BatchNorm, Conv2d, ConvTranspose2d, Dense, Layer, LeakyRelu, MaxPool2d, Param, Reshape, Sigmoid,
};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A sequential stack of layers with a fixed per-sample input shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
}

fn at_layer(index: usize, err: Error) -> Error {
    match err {
        Error::Shape { layer, detail } => Error::Shape {
            layer: format!("layer {index} ({layer})"),
            detail,
        },
        other => other,
    }
}

impl Network {
    pub fn builder(input_shape: &[usize], seed: u64) -> NetworkBuilder {
        NetworkBuilder {
            input_shape: input_shape.to_vec(),
            shape: input_shape.to_vec(),
            layers: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            error: None,
        }
    }

    /// Checks the layer chain and returns the per-sample output shape.
    pub fn output_shape(&self) -> Result<Vec<usize>> {
        let mut shape = self.input_shape.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.output_shape(&shape).map_err(|e| at_layer(i, e))?;
        }
        Ok(shape)
    }

    pub fn forward(&mut self, x: &Tensor, training: bool) -> Result<Tensor> {
        if x.shape().len() != self.input_shape.len() + 1 || x.sample_shape() != self.input_shape {
            return Err(Error::shape(
                "input",
                format!(
                    "network expects samples of shape {:?}, got batch {:?}",
                    self.input_shape,
                    x.shape()
                ),
            ));
        }
        let mut layers = self.layers.iter_mut().enumerate();
        let Some((_, first)) = layers.next() else {
            return Ok(x.clone());
        };
        let mut out = first.forward(x, training).map_err(|e| at_layer(0, e))?;
        for (i, layer) in layers {
            out = layer.forward(&out, training).map_err(|e| at_layer(i, e))?;
        }
        Ok(out)
    }

    /// Inference-mode forward pass in chunks of `batch` samples.
    pub fn predict(&mut self, x: &Tensor, batch: usize) -> Result<Tensor> {
        let n = x.batch();
        let step = batch.max(1);
        let mut out: Vec<f64> = Vec::new();
        let mut out_shape = None;
        for start in (0..n).step_by(step) {
            let end = (start + step).min(n);
            let mut shape = x.shape().to_vec();
            shape[0] = end - start;
            let len = x.sample_len();
            let chunk = Tensor::new(shape, x.data()[start * len..end * len].to_vec())?;
            let y = self.forward(&chunk, false)?;
            out_shape.get_or_insert_with(|| y.sample_shape().to_vec());
            out.extend_from_slice(y.data());
        }
        self.clear_cache();
        let mut shape = vec![n];
        match out_shape {
            Some(s) => shape.extend(s),
            None => shape.extend(self.output_shape()?),
        }
        Tensor::new(shape, out)
    }

    /// Propagates `dy` back through the stack, filling parameter gradients,
    /// and returns the gradient with respect to the input.
    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let mut grad = dy.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            grad = layer.backward(&grad).map_err(|e| at_layer(i, e))?;
        }
        Ok(grad)
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn trainable_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn non_trainable_count(&self) -> usize {
        self.layers.iter().map(Layer::non_trainable_count).sum()
    }

    pub fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }
}

/// Builds a [`Network`] layer by layer, inferring input sizes and drawing
/// Kaiming-uniform weights from a seeded generator. The first shape error
/// is reported by [`NetworkBuilder::build`].
pub struct NetworkBuilder {
    input_shape: Vec<usize>,
    shape: Vec<usize>,
    layers: Vec<Layer>,
    rng: ChaCha8Rng,
    error: Option<Error>,
}

fn kaiming(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

impl NetworkBuilder {
    fn push(mut self, make: impl FnOnce(&[usize], &mut ChaCha8Rng) -> Layer) -> Self {
        if self.error.is_some() {
            return self;
        }
        let layer = make(&self.shape, &mut self.rng);
        match layer.output_shape(&self.shape) {
            Ok(shape) => {
                self.shape = shape;
                self.layers.push(layer);
            }
            Err(e) => self.error = Some(at_layer(self.layers.len(), e)),
        }
        self
    }

    fn channels(shape: &[usize]) -> usize {
        shape.first().copied().unwrap_or(0)
    }

    /// Current per-sample shape at the end of the stack.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn conv2d(
        self,
        out: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Self {
        self.push(|shape, rng| {
            let cin = Self::channels(shape);
            let w = kaiming(rng, cin * kernel.0 * kernel.1, out * cin * kernel.0 * kernel.1);
            Layer::Conv2d(Conv2d::new(cin, out, kernel, stride, padding, w))
        })
    }

    pub fn conv_transpose2d(
        self,
        out: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        output_padding: (usize, usize),
    ) -> Self {
        self.push(|shape, rng| {
            let cin = Self::channels(shape);
            let taps = kernel.0 * kernel.1;
            // each output sees about cin·taps/stride² inputs
            let fan_in = cin * taps / (stride.0 * stride.1).max(1);
            let w = kaiming(rng, fan_in, cin * out * taps);
            Layer::ConvTranspose2d(ConvTranspose2d::new(
                cin,
                out,
                kernel,
                stride,
                padding,
                output_padding,
                w,
            ))
        })
    }

    pub fn maxpool(self, size: usize) -> Self {
        self.push(|_, _| Layer::MaxPool2d(MaxPool2d::new(size)))
    }

    pub fn dense(self, out: usize) -> Self {
        self.push(|shape, rng| {
            let fan_in = if shape.len() == 1 { shape[0] } else { 0 };
            Layer::Dense(Dense::new(fan_in, out, kaiming(rng, fan_in, fan_in * out)))
        })
    }

    pub fn batchnorm(self) -> Self {
        self.push(|shape, _| Layer::BatchNorm(BatchNorm::new(Self::channels(shape))))
    }

    pub fn leaky_relu(self, alpha: f64) -> Self {
        self.push(|_, _| Layer::LeakyRelu(LeakyRelu::new(alpha)))
    }

    pub fn sigmoid(self) -> Self {
        self.push(|_, _| Layer::Sigmoid(Sigmoid::default()))
    }

    pub fn flatten(self) -> Self {
        self.push(|shape, _| Layer::Flatten(Reshape::new(vec![shape.iter().product()])))
    }

    pub fn reshape(self, target: &[usize]) -> Self {
        self.push(|_, _| Layer::Reshape(Reshape::new(target.to_vec())))
    }

    pub fn build(self) -> Result<Network> {
        if let Some(e) = self.error {
            return Err(e);
        }
        Ok(Network {
            input_shape: self.input_shape,
            layers: self.layers,
        })
    }
}

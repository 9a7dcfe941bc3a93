//! Small 2D CNN over single-channel scalogram images.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{bce_loss, AdamState, Network, Tensor, LEAKY_RELU_ALPHA};

const CONV_WIDTHS: [usize; 4] = [8, 16, 32, 64];
const DENSE_WIDTHS: [usize; 3] = [128, 64, 16];
const POOLS: usize = 1 << CONV_WIDTHS.len();

/// Four 3×3 conv + 2×2 pool stages, three hidden dense layers and a
/// sigmoid head. Height and width must be multiples of 16.
pub fn build_cnn2d(height: usize, width: usize, seed: u64) -> Result<Network> {
    if height == 0 || width == 0 || height % POOLS != 0 || width % POOLS != 0 {
        return Err(Error::Config(format!(
            "CNN input {height}x{width} is not a positive multiple of {POOLS} on both sides"
        )));
    }
    let mut b = Network::builder(&[1, height, width], seed);
    for out in CONV_WIDTHS {
        b = b.conv2d(out, (3, 3), (1, 1), (1, 1)).leaky_relu(LEAKY_RELU_ALPHA).maxpool(2);
    }
    b = b.flatten();
    for out in DENSE_WIDTHS {
        b = b.dense(out).leaky_relu(LEAKY_RELU_ALPHA);
    }
    b.dense(1).sigmoid().build()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub height: usize,
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle_seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            height: 224,
            width: 224,
            epochs: 30,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 0,
            shuffle_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    pub config: CnnConfig,
    pub net: Network,
    /// Mean minibatch BCE per epoch.
    pub loss_history: Vec<f64>,
}

impl CnnModel {
    pub fn new(config: CnnConfig) -> Result<Self> {
        let net = build_cnn2d(config.height, config.width, config.seed)?;
        Ok(CnnModel {
            config,
            net,
            loss_history: Vec::new(),
        })
    }

    fn check_image(&self, img: &Tensor) -> Result<()> {
        let want = [1, self.config.height, self.config.width];
        if img.shape() != want {
            return Err(Error::shape("cnn input", format!("expected {want:?}, got {:?}", img.shape())));
        }
        Ok(())
    }

    /// Class-1 probability per image, in inference mode.
    pub fn predict_proba(&self, images: &[Tensor]) -> Result<Vec<f64>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        for img in images {
            self.check_image(img)?;
        }
        let refs: Vec<&Tensor> = images.iter().collect();
        let mut net = self.net.clone();
        Ok(net.predict(&Tensor::stack(&refs)?, 16)?.into_data())
    }

    pub fn train(&mut self, images: &[Tensor], labels: &[u8]) -> Result<()> {
        self.train_monitored(images, labels, |_, _| Ok(()))
    }

    /// Like `train`, calling `after_epoch(epoch, model)` once per epoch in
    /// inference-ready state.
    pub fn train_monitored(
        &mut self,
        images: &[Tensor],
        labels: &[u8],
        mut after_epoch: impl FnMut(usize, &CnnModel) -> Result<()>,
    ) -> Result<()> {
        if images.len() != labels.len() {
            return Err(Error::Size(format!("{} images, {} labels", images.len(), labels.len())));
        }
        if images.is_empty() {
            return Err(Error::Empty("no training images".into()));
        }
        if self.config.epochs == 0 || self.config.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be at least 1".into()));
        }
        for img in images {
            self.check_image(img)?;
        }
        let mut adam = AdamState::new(self.config.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.shuffle_seed);
        let mut order: Vec<usize> = (0..images.len()).collect();
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            let mut batches = 0;
            for idx in order.chunks(self.config.batch_size) {
                let refs: Vec<&Tensor> = idx.iter().map(|&i| &images[i]).collect();
                let x = Tensor::stack(&refs)?;
                let t = Tensor::new(vec![idx.len(), 1], idx.iter().map(|&i| f64::from(labels[i])).collect())?;
                let y = self.net.forward(&x, true)?;
                let (loss, grad) = bce_loss(&y, &t)?;
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch, loss });
                }
                self.net.backward(&grad)?;
                adam.step(self.net.params_mut())?;
                total += loss;
                batches += 1;
            }
            self.net.clear_cache();
            self.loss_history.push(total / batches as f64);
            after_epoch(epoch, self)?;
        }
        Ok(())
    }
}

pub fn train_cnn(config: &CnnConfig, images: &[Tensor], labels: &[u8]) -> Result<CnnModel> {
    let mut model = CnnModel::new(config.clone())?;
    model.train(images, labels)?;
    Ok(model)
}

//! Convolutional autoencoder over stacked band signals.
//!
//! One input is a `[1, 5, window]` tensor: the delta..gamma band signals of a
//! single channel window, one band per row. The encoder convolves along time
//! with stride 2 per block, mixes the five band rows with a `5×1` convolution
//! and projects to a dense bottleneck whose activations are the features.
//! The decoder mirrors it with transposed convolutions and a linear output.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{check_window, segment_count, EegRecording};
use crate::dwt::{band_signals, WaveletFilter};
use crate::error::{Error, Result};
use crate::nn::{mse_loss, AdamState, Network, NetworkBuilder, Tensor};

pub const N_BANDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
}

/// How each window's band rows are brought to a common scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BandScaling {
    /// Centre every band, then divide all five by one shared RMS, so the
    /// relative power of the bands survives.
    #[default]
    SharedScale,
    /// Independent z-score per band.
    PerBand,
}

impl std::str::FromStr for BandScaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(BandScaling::SharedScale),
            "per-band" | "per_band" => Ok(BandScaling::PerBand),
            other => Err(Error::Config(format!("unknown band scaling {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaeConfig {
    pub window: usize,
    pub encoder: Vec<ConvBlock>,
    /// Filters of the `5×1` band-mixing convolution. `None` flattens the last
    /// conv block straight into the bottleneck.
    pub band_mix: Option<usize>,
    pub bottleneck: usize,
    pub alpha: f64,
    /// Batchnorm after every hidden conv layer.
    pub batchnorm: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle_seed: u64,
    pub scaling: BandScaling,
}

impl Default for CaeConfig {
    fn default() -> Self {
        CaeConfig {
            window: 512,
            encoder: vec![
                ConvBlock { filters: 8, kernel: (3, 7), stride: (1, 2) },
                ConvBlock { filters: 16, kernel: (3, 5), stride: (1, 2) },
                ConvBlock { filters: 32, kernel: (3, 3), stride: (1, 2) },
            ],
            band_mix: Some(3),
            bottleneck: 64,
            alpha: 0.2,
            batchnorm: true,
            epochs: 20,
            batch_size: 4,
            learning_rate: 1e-3,
            seed: 0,
            shuffle_seed: 1,
            scaling: BandScaling::SharedScale,
        }
    }
}

impl CaeConfig {
    pub fn input_shape(&self) -> [usize; 3] {
        [1, N_BANDS, self.window]
    }

    pub fn input_len(&self) -> usize {
        N_BANDS * self.window
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cae {
    pub config: CaeConfig,
    pub encoder: Network,
    pub decoder: Network,
    /// Mean reconstruction error of the frozen model over the training set,
    /// measured after each epoch.
    pub loss_history: Vec<f64>,
    /// Mean minibatch loss seen while training each epoch.
    pub train_loss_history: Vec<f64>,
}

fn same_padding(kernel: (usize, usize)) -> (usize, usize) {
    (kernel.0 / 2, kernel.1 / 2)
}

fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn output_padding(input: usize, output: usize, k: usize, s: usize, p: usize) -> Result<usize> {
    let base = (output - 1) * s + k;
    let op = (input + 2 * p).checked_sub(base).filter(|&op| op < s);
    op.ok_or_else(|| {
        Error::Config(format!(
            "cannot mirror a kernel {k} stride {s} layer from {output} back to {input}"
        ))
    })
}

pub fn build_cae(config: &CaeConfig) -> Result<Cae> {
    if config.window < 2 || config.bottleneck == 0 || config.encoder.is_empty() {
        return Err(Error::Config(
            "autoencoder needs a window, a bottleneck and at least one conv block".into(),
        ));
    }
    if config.bottleneck >= config.input_len() {
        return Err(Error::Config(format!(
            "bottleneck {} must be smaller than the input ({} values)",
            config.bottleneck,
            config.input_len()
        )));
    }
    let a = config.alpha;
    let norm = |b: NetworkBuilder| if config.batchnorm { b.batchnorm() } else { b };
    let shape_err = |e: Error| match e {
        Error::Shape { layer, detail } => Error::Config(format!("{layer}: {detail}")),
        other => other,
    };

    let mut enc = Network::builder(&config.input_shape(), sub_seed(config.seed, 1));
    let mut shapes = vec![enc.shape().to_vec()];
    for block in &config.encoder {
        enc = enc.conv2d(block.filters, block.kernel, block.stride, same_padding(block.kernel));
        enc = norm(enc).leaky_relu(a);
        shapes.push(enc.shape().to_vec());
    }
    if let Some(mix) = config.band_mix {
        enc = norm(enc.conv2d(mix, (N_BANDS, 1), (1, 1), (0, 0))).leaky_relu(a);
    }
    let latent_map = enc.shape().to_vec();
    let encoder = enc.flatten().dense(config.bottleneck).build().map_err(shape_err)?;

    let mut dec = Network::builder(&[config.bottleneck], sub_seed(config.seed, 2))
        .dense(latent_map.iter().product())
        .reshape(&latent_map);
    if config.band_mix.is_some() {
        let channels = shapes.last().map_or(0, |s| s[0]);
        dec = norm(dec.conv_transpose2d(channels, (N_BANDS, 1), (1, 1), (0, 0), (0, 0))).leaky_relu(a);
    }
    for (i, block) in config.encoder.iter().enumerate().rev() {
        let (before, after) = (&shapes[i], &shapes[i + 1]);
        if before.len() != 3 || after.len() != 3 {
            return Err(Error::Config("encoder shapes are not 3-D".into()));
        }
        let pad = same_padding(block.kernel);
        let op = (
            output_padding(before[1], after[1], block.kernel.0, block.stride.0, pad.0)?,
            output_padding(before[2], after[2], block.kernel.1, block.stride.1, pad.1)?,
        );
        dec = dec.conv_transpose2d(before[0], block.kernel, block.stride, pad, op);
        if i > 0 {
            dec = norm(dec).leaky_relu(a);
        }
    }
    let decoder = dec.build().map_err(shape_err)?;
    if decoder.output_shape()? != config.input_shape() {
        return Err(Error::Config("decoder does not reproduce the input shape".into()));
    }
    Ok(Cae {
        config: config.clone(),
        encoder,
        decoder,
        loss_history: Vec::new(),
        train_loss_history: Vec::new(),
    })
}

/// One CAE input with the window it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeInput {
    pub subject_id: String,
    pub channel: usize,
    pub window_index: usize,
    pub label: crate::dataset::ClassLabel,
    /// `[1, 5, window]`
    pub tensor: Tensor,
}

fn scale_rows(rows: &mut [Vec<f64>], scaling: BandScaling) {
    for row in rows.iter_mut() {
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        row.iter_mut().for_each(|v| *v -= mean);
    }
    let rms = |r: &[f64]| (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt();
    let guard = |s: f64| if s > 1e-12 { 1.0 / s } else { 0.0 };
    match scaling {
        BandScaling::SharedScale => {
            let n = rows.len() as f64;
            let shared = (rows.iter().map(|r| rms(r).powi(2)).sum::<f64>() / n).sqrt();
            let k = guard(shared);
            rows.iter_mut().flatten().for_each(|v| *v *= k);
        }
        BandScaling::PerBand => {
            for row in rows.iter_mut() {
                let k = guard(rms(row));
                row.iter_mut().for_each(|v| *v *= k);
            }
        }
    }
}

/// Band-decomposes every channel over its full length, then cuts windows of
/// `window` samples every `hop` samples. Output is channel-major.
pub fn prepare_cae_inputs(
    rec: &EegRecording,
    window: usize,
    hop: usize,
    scaling: BandScaling,
) -> Result<Vec<CaeInput>> {
    let len = rec.data.first().map_or(0, Vec::len);
    check_window(window, hop, len)?;
    let filter = WaveletFilter::db4();
    let per_channel = segment_count(len, window, hop);
    let bands: Vec<_> = rec
        .data
        .par_iter()
        .map(|row| band_signals(row, &filter))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(per_channel * rec.data.len());
    for (channel, set) in bands.iter().enumerate() {
        for index in 0..per_channel {
            let start = index * hop;
            let mut rows: Vec<Vec<f64>> =
                set.bands().iter().map(|b| b[start..start + window].to_vec()).collect();
            scale_rows(&mut rows, scaling);
            out.push(CaeInput {
                subject_id: rec.subject_id.clone(),
                channel,
                window_index: index,
                label: rec.label,
                tensor: Tensor::new(vec![1, N_BANDS, window], rows.concat())?,
            });
        }
    }
    Ok(out)
}

fn batch_of(inputs: &[&Tensor]) -> Result<Tensor> {
    Tensor::stack(inputs)
}

const INFERENCE_CHUNK: usize = 32;

impl Cae {
    pub fn trainable_count(&self) -> usize {
        self.encoder.trainable_count() + self.decoder.trainable_count()
    }

    pub fn non_trainable_count(&self) -> usize {
        self.encoder.non_trainable_count() + self.decoder.non_trainable_count()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.config.input_shape() {
            return Err(Error::shape(
                "cae input",
                format!("expected {:?}, got {:?}", self.config.input_shape(), input.shape()),
            ));
        }
        Ok(())
    }

    /// Bottleneck activations of one input, with batchnorm in inference mode.
    pub fn encode(&self, input: &Tensor) -> Result<Vec<f64>> {
        Ok(self.encode_batch(std::slice::from_ref(input))?.remove(0))
    }

    pub fn encode_batch(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f64>>> {
        for x in inputs {
            self.check_input(x)?;
        }
        let chunks: Vec<Vec<Vec<f64>>> = inputs
            .par_chunks(INFERENCE_CHUNK)
            .map(|chunk| {
                let mut enc = self.encoder.clone();
                let refs: Vec<&Tensor> = chunk.iter().collect();
                let z = enc.forward(&batch_of(&refs)?, false)?;
                Ok(z.data().chunks(self.config.bottleneck).map(<[f64]>::to_vec).collect())
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    /// `½‖D(E(z)) − z‖²` for one input.
    pub fn reconstruction_error(&self, input: &Tensor) -> Result<f64> {
        Ok(self.reconstruction_errors(std::slice::from_ref(input))?[0])
    }

    pub fn reconstruction_errors(&self, inputs: &[Tensor]) -> Result<Vec<f64>> {
        for x in inputs {
            self.check_input(x)?;
        }
        let chunks: Vec<Vec<f64>> = inputs
            .par_chunks(INFERENCE_CHUNK)
            .map(|chunk| {
                let (mut enc, mut dec) = (self.encoder.clone(), self.decoder.clone());
                let refs: Vec<&Tensor> = chunk.iter().collect();
                let x = batch_of(&refs)?;
                let y = dec.forward(&enc.forward(&x, false)?, false)?;
                let n = x.sample_len();
                Ok(y.data()
                    .chunks(n)
                    .zip(x.data().chunks(n))
                    .map(|(a, b)| 0.5 * a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Mean reconstruction error over `inputs` on the frozen model.
    pub fn dataset_loss(&self, inputs: &[Tensor]) -> Result<f64> {
        if inputs.is_empty() {
            return Err(Error::Empty("no inputs to evaluate".into()));
        }
        let errors = self.reconstruction_errors(inputs)?;
        Ok(errors.iter().sum::<f64>() / errors.len() as f64)
    }

    /// Minimizes the mean reconstruction error with Adam. Shuffling uses the
    /// config's dedicated seed; after each epoch the frozen-model loss over
    /// `inputs` is appended to `loss_history`.
    pub fn train(&mut self, inputs: &[Tensor], epochs: usize, batch: usize) -> Result<()> {
        if epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if batch == 0 || inputs.len() < 2 * batch {
            return Err(Error::Config(format!(
                "need at least two batches of inputs, got {} for batch size {batch}",
                inputs.len()
            )));
        }
        for x in inputs {
            self.check_input(x)?;
        }
        let mut adam = AdamState::new(self.config.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.shuffle_seed);
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            let mut batches = 0;
            for idx in order.chunks(batch) {
                let refs: Vec<&Tensor> = idx.iter().map(|&i| &inputs[i]).collect();
                let x = batch_of(&refs)?;
                let z = self.encoder.forward(&x, true)?;
                let y = self.decoder.forward(&z, true)?;
                let (loss, grad) = mse_loss(&y, &x)?;
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch, loss });
                }
                let dz = self.decoder.backward(&grad)?;
                self.encoder.backward(&dz)?;
                let mut params = self.encoder.params_mut();
                params.extend(self.decoder.params_mut());
                adam.step(params)?;
                total += loss;
                batches += 1;
            }
            self.encoder.clear_cache();
            self.decoder.clear_cache();
            let frozen = self.dataset_loss(inputs)?;
            if !frozen.is_finite() {
                return Err(Error::Divergence { epoch, loss: frozen });
            }
            self.train_loss_history.push(total / batches as f64);
            self.loss_history.push(frozen);
        }
        Ok(())
    }
}

/// Trains a copy of `cae` and returns it.
pub fn train_cae(cae: &Cae, inputs: &[Tensor], epochs: usize, batch: usize) -> Result<Cae> {
    let mut out = cae.clone();
    out.train(inputs, epochs, batch)?;
    Ok(out)
}

/// `subject_id,channel,window_index,label,f0..` rows for encoded inputs.
pub fn features_csv(inputs: &[CaeInput], features: &[Vec<f64>]) -> Result<String> {
    if inputs.len() != features.len() {
        return Err(Error::Size(format!(
            "{} inputs but {} feature rows",
            inputs.len(),
            features.len()
        )));
    }
    let width = features.first().map_or(0, Vec::len);
    let mut out = String::from("subject_id,channel,window_index,label");
    for i in 0..width {
        let _ = write!(out, ",f{i}");
    }
    out.push('\n');
    for (meta, row) in inputs.iter().zip(features) {
        let _ = write!(
            out,
            "{},{},{},{}",
            meta.subject_id,
            meta.channel,
            meta.window_index,
            meta.label.as_u8()
        );
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_features_csv(path: impl AsRef<Path>, inputs: &[CaeInput], features: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, features_csv(inputs, features)?).map_err(|e| Error::file(path, e))
}

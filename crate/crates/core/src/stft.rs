//! Short-time Fourier transform with a rectangular window.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::image::{render_matrix, GrayImage, Scaling};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftParams {
    pub window: usize,
    pub overlap: f64,
    pub nfft: usize,
    pub fs: f64,
}

impl Default for StftParams {
    /// 256-sample rectangular window, 50 % overlap, 512-point FFT at 128 Hz.
    fn default() -> Self {
        StftParams {
            window: 256,
            overlap: 0.5,
            nfft: 512,
            fs: 128.0,
        }
    }
}

impl StftParams {
    pub fn hop(&self) -> usize {
        ((self.window as f64) * (1.0 - self.overlap)).round().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("STFT window must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Config(format!(
                "STFT overlap {} must be in [0, 1)",
                self.overlap
            )));
        }
        if self.nfft < self.window || !self.nfft.is_power_of_two() {
            return Err(Error::Config(format!(
                "nfft {} must be a power of two no smaller than the window {}",
                self.nfft, self.window
            )));
        }
        if !(self.fs > 0.0) {
            return Err(Error::Config("sampling rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    /// `n_bins` rows (DC first) of `n_frames` columns.
    pub magnitudes: Vec<Vec<f64>>,
    pub frequencies: Vec<f64>,
    /// Frame start times in seconds.
    pub times: Vec<f64>,
    pub window: usize,
    pub hop: usize,
    pub nfft: usize,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn n_frames(&self) -> usize {
        self.magnitudes.first().map_or(0, Vec::len)
    }

    /// One row per bin: `freq_hz,frame0,frame1,...`.
    pub fn to_csv(&self) -> String {
        matrix_csv(&self.frequencies, &self.times, &self.magnitudes)
    }
}

pub(crate) fn matrix_csv(freqs: &[f64], times: &[f64], rows: &[Vec<f64>]) -> String {
    let mut out = String::from("freq_hz");
    for t in times {
        let _ = write!(out, ",{t}");
    }
    out.push('\n');
    for (f, row) in freqs.iter().zip(rows) {
        let _ = write!(out, "{f}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn stft(signal: &[f64], params: &StftParams) -> Result<Spectrogram> {
    params.validate()?;
    if signal.len() < params.window {
        return Err(Error::Size(format!(
            "signal of {} samples is shorter than the {}-sample window",
            signal.len(),
            params.window
        )));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("signal contains non-finite values".into()));
    }
    let hop = params.hop();
    let n_frames = (signal.len() - params.window) / hop + 1;
    let n_bins = params.nfft / 2 + 1;
    let mut magnitudes = vec![vec![0.0; n_frames]; n_bins];
    for frame in 0..n_frames {
        let start = frame * hop;
        let spectrum = fft::rfft_padded(&signal[start..start + params.window], params.nfft)?;
        for (bin, row) in magnitudes.iter_mut().enumerate() {
            row[frame] = spectrum[bin].norm();
        }
    }
    Ok(Spectrogram {
        magnitudes,
        frequencies: (0..n_bins)
            .map(|k| k as f64 * params.fs / params.nfft as f64)
            .collect(),
        times: (0..n_frames).map(|f| (f * hop) as f64 / params.fs).collect(),
        window: params.window,
        hop,
        nfft: params.nfft,
    })
}

/// Image with low frequencies at the bottom.
pub fn spectrogram_image(spec: &Spectrogram, out_w: usize, out_h: usize, scaling: Scaling) -> Result<GrayImage> {
    let rows: Vec<Vec<f64>> = spec.magnitudes.iter().rev().cloned().collect();
    render_matrix(&rows, out_w, out_h, scaling)
}

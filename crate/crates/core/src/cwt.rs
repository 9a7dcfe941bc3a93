//! Continuous wavelet transform with an analytic bump wavelet, evaluated in the
//! frequency domain, and scalogram rendering.
//!
//! For scale `a` the coefficients are
//! `C_a = IFFT( X(ω) · √a · Ψ(aω) )` over positive frequencies only, where the
//! bump window is `Ψ(w) = exp(1 − 1/(1 − ((w − μ)/σ)²))` for `|w − μ| < σ` and
//! zero elsewhere. The `√a` factor is the `1/√a` time-domain normalization
//! carried into the Fourier domain. Scale `a` is centred on
//! `f = μ·fs / (2π·a)` Hz.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::image::{render_matrix, GrayImage, Scaling};
use crate::stft::matrix_csv;

pub const DEFAULT_MU: f64 = 5.0;
pub const DEFAULT_SIGMA: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwtFilterBank {
    pub mu: f64,
    pub sigma: f64,
    pub voices_per_octave: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub fs: f64,
    /// Increasing scales.
    pub scales: Vec<f64>,
    /// Centre frequency of each scale in Hz, decreasing.
    pub frequencies: Vec<f64>,
}

impl CwtFilterBank {
    /// Bump wavelet, 12 voices per octave, 0.5–50 Hz at 128 Hz.
    pub fn eeg_default() -> Self {
        build_filterbank(0.5, 50.0, 12, 128.0, DEFAULT_MU, DEFAULT_SIGMA)
            .expect("default bank parameters are valid")
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    /// Bump window at normalized frequency `w` (already multiplied by scale).
    pub fn bump(&self, w: f64) -> f64 {
        bump(w, self.mu, self.sigma)
    }
}

pub fn bump(w: f64, mu: f64, sigma: f64) -> f64 {
    let u = (w - mu) / sigma;
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

pub fn build_filterbank(
    f_min: f64,
    f_max: f64,
    voices: usize,
    fs: f64,
    mu: f64,
    sigma: f64,
) -> Result<CwtFilterBank> {
    if !(fs > 0.0) {
        return Err(Error::Domain(format!("sampling rate {fs} must be positive")));
    }
    if !(f_min > 0.0) {
        return Err(Error::Domain(format!("f_min {f_min} must be positive")));
    }
    if f_max > fs / 2.0 {
        return Err(Error::Aliasing {
            f_max,
            nyquist: fs / 2.0,
        });
    }
    if !(f_min < f_max) {
        return Err(Error::Domain(format!("f_min {f_min} must be below f_max {f_max}")));
    }
    if voices == 0 {
        return Err(Error::Config("voices per octave must be at least 1".into()));
    }
    if !(sigma > 0.0 && mu > sigma) {
        return Err(Error::Config(format!(
            "bump parameters need 0 < sigma < mu, got mu={mu} sigma={sigma}"
        )));
    }
    let octaves = (f_max / f_min).log2();
    let count = (voices as f64 * octaves + 1e-9).floor() as usize + 1;
    let frequencies: Vec<f64> = (0..count)
        .map(|k| f_max * 2f64.powf(-(k as f64) / voices as f64))
        .collect();
    let scales = frequencies.iter().map(|f| mu * fs / (2.0 * PI * f)).collect();
    Ok(CwtFilterBank {
        mu,
        sigma,
        voices_per_octave: voices,
        f_min,
        f_max,
        fs,
        scales,
        frequencies,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scalogram {
    /// One row per scale (highest frequency first), one column per sample.
    pub magnitudes: Vec<Vec<f64>>,
    pub frequencies: Vec<f64>,
    pub times: Vec<f64>,
}

impl Scalogram {
    pub fn n_scales(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn n_samples(&self) -> usize {
        self.magnitudes.first().map_or(0, Vec::len)
    }

    /// One row per scale: `freq_hz,t0,t1,...`.
    pub fn to_csv(&self) -> String {
        matrix_csv(&self.frequencies, &self.times, &self.magnitudes)
    }
}

/// Complex coefficients, one row per scale, trimmed to the signal length.
pub fn cwt_coefficients(signal: &[f64], bank: &CwtFilterBank) -> Result<Vec<Vec<Complex64>>> {
    if signal.len() < 2 {
        return Err(Error::Size(format!(
            "CWT needs at least 2 samples, got {}",
            signal.len()
        )));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("signal contains non-finite values".into()));
    }
    let n = signal.len();
    let padded = fft::next_pow2(n);
    let spectrum = fft::rfft_padded(signal, padded)?;
    let half = padded / 2;

    bank.scales
        .par_iter()
        .map(|&a| {
            let norm = a.sqrt();
            let mut buf = vec![Complex64::new(0.0, 0.0); padded];
            for k in 1..=half {
                let w = 2.0 * PI * k as f64 / padded as f64;
                let gain = bank.bump(a * w);
                if gain != 0.0 {
                    buf[k] = spectrum[k] * (norm * gain);
                }
            }
            fft::fft_in_place(&mut buf, true)?;
            buf.truncate(n);
            Ok(buf)
        })
        .collect()
}

pub fn cwt(signal: &[f64], bank: &CwtFilterBank) -> Result<Scalogram> {
    let coeffs = cwt_coefficients(signal, bank)?;
    Ok(Scalogram {
        magnitudes: coeffs
            .into_iter()
            .map(|row| row.into_iter().map(|c| c.norm()).collect())
            .collect(),
        frequencies: bank.frequencies.clone(),
        times: (0..signal.len()).map(|i| i as f64 / bank.fs).collect(),
    })
}

/// Image with frequency increasing upward (row 0 of the scalogram on top).
pub fn scalogram_image(scal: &Scalogram, out_w: usize, out_h: usize, scaling: Scaling) -> Result<GrayImage> {
    render_matrix(&scal.magnitudes, out_w, out_h, scaling)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| (2.0 * PI * freq * i as f64 / 128.0).sin())
            .collect()
    }

    #[test]
    fn default_bank_has_80_scales() {
        let bank = CwtFilterBank::eeg_default();
        assert_eq!(bank.len(), 80);
        assert!((bank.frequencies[0] - 50.0).abs() < 1e-12);
        assert!(*bank.frequencies.last().unwrap() >= 0.5);
        for w in bank.scales.windows(2) {
            assert!((w[1] / w[0] - 2f64.powf(1.0 / 12.0)).abs() < 1e-12);
        }
        for w in bank.frequencies.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn octave_bank() {
        let bank = build_filterbank(1.0, 4.0, 1, 128.0, 5.0, 0.6).unwrap();
        assert_eq!(bank.len(), 3);
        for (f, want) in bank.frequencies.iter().zip([4.0, 2.0, 1.0]) {
            assert!((f - want).abs() < 1e-9);
        }
        for (a, f) in bank.scales.iter().zip(&bank.frequencies) {
            assert!((5.0 * 128.0 / (2.0 * PI * a) - f).abs() < 1e-9);
        }
    }

    #[test]
    fn bank_errors() {
        assert!(matches!(
            build_filterbank(0.5, 70.0, 12, 128.0, 5.0, 0.6),
            Err(Error::Aliasing { .. })
        ));
        assert!(matches!(
            build_filterbank(0.0, 50.0, 12, 128.0, 5.0, 0.6),
            Err(Error::Domain(_))
        ));
        assert!(build_filterbank(0.5, 64.0, 12, 128.0, 5.0, 0.6).is_ok());
    }

    #[test]
    fn zero_and_homogeneity() {
        let bank = CwtFilterBank::eeg_default();
        let zero = cwt(&vec![0.0; 300], &bank).unwrap();
        assert!(zero.magnitudes.iter().flatten().all(|&v| v == 0.0));

        let x = tone(7.0, 300);
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let s1 = cwt(&x, &bank).unwrap();
        let s2 = cwt(&x2, &bank).unwrap();
        for (a, b) in s1.magnitudes.iter().flatten().zip(s2.magnitudes.iter().flatten()) {
            assert!((2.0 * a - b).abs() < 1e-9);
        }
        assert_eq!(s1.n_scales(), 80);
        assert_eq!(s1.n_samples(), 300);
    }

    #[test]
    fn ridge_follows_a_10hz_tone() {
        let bank = CwtFilterBank::eeg_default();
        let scal = cwt(&tone(10.0, 1024), &bank).unwrap();
        let step = 2f64.powf(1.0 / 12.0);
        for col in 256..768 {
            let best = (0..scal.n_scales())
                .max_by(|&a, &b| scal.magnitudes[a][col].total_cmp(&scal.magnitudes[b][col]))
                .unwrap();
            let f = scal.frequencies[best];
            assert!(f / 10.0 <= step && 10.0 / f <= step, "col {col}: {f} Hz");
        }
    }

    #[test]
    fn fft_route_matches_direct_sums() {
        // Same operator evaluated with O(N²) DFT sums instead of the FFT.
        let n = 64;
        let x: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.3).collect();
        let bank = build_filterbank(4.0, 40.0, 4, 128.0, 5.0, 0.6).unwrap();
        let coeffs = cwt_coefficients(&x, &bank).unwrap();
        for (row, &a) in coeffs.iter().zip(&bank.scales) {
            let spectrum: Vec<Complex64> = (0..n)
                .map(|k| {
                    (0..n)
                        .map(|t| x[t] * Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / n as f64))
                        .sum()
                })
                .collect();
            for (b, got) in row.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, s) in spectrum.iter().enumerate().take(n / 2 + 1).skip(1) {
                    let w = 2.0 * PI * k as f64 / n as f64;
                    let g = a.sqrt() * bump(a * w, 5.0, 0.6);
                    acc += s * g * Complex64::from_polar(1.0, w * b as f64);
                }
                acc /= n as f64;
                assert!((acc - got).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let bank = CwtFilterBank::eeg_default();
        assert!(matches!(cwt(&[1.0], &bank), Err(Error::Size(_))));
        assert!(matches!(cwt(&[1.0, f64::NAN], &bank), Err(Error::Domain(_))));
    }

    #[test]
    fn image_orientation_and_size() {
        let scal = Scalogram {
            magnitudes: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            frequencies: vec![2.0, 1.0],
            times: vec![0.0, 1.0],
        };
        let img = scalogram_image(&scal, 2, 2, Scaling::Linear).unwrap();
        assert_eq!(img.pixels, vec![0, 255, 255, 0]);
        let img = scalogram_image(&scal, 224, 224, Scaling::Log).unwrap();
        assert_eq!((img.width, img.height), (224, 224));
    }
}

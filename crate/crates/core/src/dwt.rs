//! Multilevel discrete wavelet analysis/synthesis (Mallat filter bank) and the
//! five-band EEG view built from it.
//!
//! Analysis at one level correlates the signal with the scaling (`lowpass`) and
//! wavelet (`highpass`) taps and keeps every second output:
//!
//! ```text
//! a[k] = Σ_j lowpass[j]  · x[2k + j]
//! d[k] = Σ_j highpass[j] · x[2k + j]
//! ```
//!
//! Synthesis is the transpose of that operator. For orthogonal filters the
//! periodic transform is an orthogonal matrix, so synthesis is exact and
//! coefficient energy equals signal energy. The symmetric (half-point)
//! extension mode is redundant (it keeps `⌊(N+L)/2⌋` coefficients per level)
//! but still reconstructs perfectly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling rate the band mapping assumes.
pub const BAND_FS: f64 = 128.0;
/// Decomposition depth used for the band view at 128 Hz.
pub const BAND_LEVELS: usize = 5;
pub const BAND_NAMES: [&str; 5] = ["delta", "theta", "alpha", "beta", "gamma"];

const DB4_LOWPASS: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

const DB2_LOWPASS: [f64; 4] = [
    0.482_962_913_144_690_25,
    0.836_516_303_737_469,
    0.224_143_868_041_857_35,
    -0.129_409_522_550_921_45,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletFilter {
    pub name: String,
    /// Scaling-function analysis taps.
    pub lowpass: Vec<f64>,
    /// Wavelet analysis taps, the quadrature mirror of `lowpass`.
    pub highpass: Vec<f64>,
    pub synthesis_lowpass: Vec<f64>,
    pub synthesis_highpass: Vec<f64>,
}

impl WaveletFilter {
    /// Orthogonal filter from its scaling taps; the wavelet taps are
    /// `g[j] = (−1)^j · h[L−1−j]`.
    pub fn orthogonal(name: impl Into<String>, lowpass: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let len = lowpass.len();
        if len < 2 || len % 2 != 0 {
            return Err(Error::Config(format!(
                "wavelet {name:?}: filter length {len} must be even and at least 2"
            )));
        }
        if lowpass.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("wavelet {name:?}: non-finite tap")));
        }
        let highpass: Vec<f64> = (0..len)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * lowpass[len - 1 - j]
            })
            .collect();
        let filter = WaveletFilter {
            name,
            synthesis_lowpass: lowpass.clone(),
            synthesis_highpass: highpass.clone(),
            lowpass,
            highpass,
        };
        if !filter.is_orthogonal(1e-10) {
            return Err(Error::Config(format!(
                "wavelet {:?}: taps are not an orthonormal scaling filter",
                filter.name
            )));
        }
        Ok(filter)
    }

    pub fn haar() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::orthogonal("haar", vec![s, s]).expect("haar taps are orthonormal")
    }

    pub fn db2() -> Self {
        Self::orthogonal("db2", DB2_LOWPASS.to_vec()).expect("db2 taps are orthonormal")
    }

    pub fn db4() -> Self {
        Self::orthogonal("db4", DB4_LOWPASS.to_vec()).expect("db4 taps are orthonormal")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "haar" | "db1" => Ok(Self::haar()),
            "db2" => Ok(Self::db2()),
            "db4" => Ok(Self::db4()),
            other => Err(Error::Config(format!("unknown wavelet {other:?}"))),
        }
    }

    /// Parses a table with one filter per line: `name tap0 tap1 ...`.
    /// Blank lines and `#` comments are skipped.
    pub fn parse_table(text: &str) -> Result<Vec<Self>> {
        let mut filters = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let name = tokens.next().unwrap_or_default();
            let taps = tokens
                .map(|t| {
                    t.parse::<f64>().map_err(|_| {
                        Error::Config(format!(
                            "filter table line {}: bad tap {t:?}",
                            lineno + 1
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            filters.push(Self::orthogonal(name, taps)?);
        }
        Ok(filters)
    }

    pub fn load_table(path: impl AsRef<Path>) -> Result<Vec<Self>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse_table(&text)
    }

    pub fn len(&self) -> usize {
        self.lowpass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowpass.is_empty()
    }

    /// Unit energy plus vanishing even-shift autocorrelation.
    pub fn is_orthogonal(&self, tol: f64) -> bool {
        let h = &self.lowpass;
        let len = h.len();
        if self.highpass.len() != len {
            return false;
        }
        (0..len / 2).all(|m| {
            let shift = 2 * m;
            let acc: f64 = (0..len - shift).map(|j| h[j] * h[j + shift]).sum();
            let target = if m == 0 { 1.0 } else { 0.0 };
            (acc - target).abs() < tol
        })
    }
}

/// How the signal is continued past its ends during analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Extension {
    /// Circular wrap; critically sampled and energy preserving.
    #[default]
    Periodic,
    /// Half-point mirror (`x[-1] = x[0]`); redundant near the edges.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwtDecomposition {
    pub levels: usize,
    pub extension: Extension,
    pub filter_len: usize,
    /// Approximation coefficients `a_L`.
    pub approx: Vec<f64>,
    /// Detail coefficients `d_1..d_L`; index 0 is the finest level.
    pub details: Vec<Vec<f64>>,
    /// Approximation length per level; `lengths[0]` is the signal length.
    pub lengths: Vec<usize>,
}

impl DwtDecomposition {
    pub fn original_len(&self) -> usize {
        self.lengths[0]
    }

    /// Coefficients in serialization order: `a_L, d_L, …, d_1`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.approx.clone();
        for d in self.details.iter().rev() {
            out.extend_from_slice(d);
        }
        out
    }

    pub fn energy(&self) -> f64 {
        let a: f64 = self.approx.iter().map(|v| v * v).sum();
        let d: f64 = self.details.iter().flatten().map(|v| v * v).sum();
        a + d
    }

    /// Same bookkeeping with every coefficient set to zero.
    pub fn zeroed(&self) -> Self {
        let mut out = self.clone();
        out.approx.iter_mut().for_each(|v| *v = 0.0);
        out.details.iter_mut().flatten().for_each(|v| *v = 0.0);
        out
    }
}

/// Deepest level allowed for a signal of `len` samples.
pub fn max_level(len: usize, filter_len: usize) -> usize {
    let support = filter_len.saturating_sub(1).max(1);
    if len < support {
        return 0;
    }
    (len as f64 / support as f64).log2().floor() as usize
}

pub fn dwt_decompose(
    signal: &[f64],
    filter: &WaveletFilter,
    levels: usize,
) -> Result<DwtDecomposition> {
    dwt_decompose_with(signal, filter, levels, Extension::Periodic)
}

pub fn dwt_decompose_with(
    signal: &[f64],
    filter: &WaveletFilter,
    levels: usize,
    extension: Extension,
) -> Result<DwtDecomposition> {
    let len = signal.len();
    if len < filter.len() {
        return Err(Error::Size(format!(
            "signal of {len} samples is shorter than the {}-tap filter",
            filter.len()
        )));
    }
    let limit = max_level(len, filter.len());
    if levels == 0 || levels > limit {
        return Err(Error::Depth(format!(
            "{levels} levels requested; {len} samples with a {}-tap filter allow 1..={limit}",
            filter.len()
        )));
    }

    let mut lengths = vec![len];
    let mut details = Vec::with_capacity(levels);
    let mut current = signal.to_vec();
    for level in 1..=levels {
        let (a, d) = match extension {
            Extension::Periodic => {
                if current.len() % 2 != 0 {
                    return Err(Error::Size(format!(
                        "periodic extension needs an even length at level {level}, got {}",
                        current.len()
                    )));
                }
                analysis_periodic(&current, filter)
            }
            Extension::Symmetric => analysis_symmetric(&current, filter),
        };
        details.push(d);
        lengths.push(a.len());
        current = a;
    }

    Ok(DwtDecomposition {
        levels,
        extension,
        filter_len: filter.len(),
        approx: current,
        details,
        lengths,
    })
}

pub fn dwt_reconstruct(decomp: &DwtDecomposition, filter: &WaveletFilter) -> Result<Vec<f64>> {
    let bad = |detail: String| Error::shape("dwt_reconstruct", detail);
    if decomp.filter_len != filter.len() {
        return Err(bad(format!(
            "decomposition used a {}-tap filter, got {} taps",
            decomp.filter_len,
            filter.len()
        )));
    }
    if decomp.details.len() != decomp.levels || decomp.lengths.len() != decomp.levels + 1 {
        return Err(bad(format!(
            "{} levels but {} detail bands and {} lengths",
            decomp.levels,
            decomp.details.len(),
            decomp.lengths.len()
        )));
    }

    let mut current = decomp.approx.clone();
    for level in (1..=decomp.levels).rev() {
        let detail = &decomp.details[level - 1];
        let target = decomp.lengths[level - 1];
        if current.len() != detail.len() || current.len() != decomp.lengths[level] {
            return Err(bad(format!(
                "level {level}: approximation has {} coefficients, detail {}, expected {}",
                current.len(),
                detail.len(),
                decomp.lengths[level]
            )));
        }
        current = match decomp.extension {
            Extension::Periodic => {
                if target != 2 * current.len() {
                    return Err(bad(format!(
                        "level {level}: {} coefficients cannot rebuild {target} samples",
                        current.len()
                    )));
                }
                synthesis_periodic(&current, detail, filter)
            }
            Extension::Symmetric => {
                if (target + filter.len()) / 2 != current.len() {
                    return Err(bad(format!(
                        "level {level}: {} coefficients cannot rebuild {target} samples",
                        current.len()
                    )));
                }
                synthesis_symmetric(&current, detail, filter, target)
            }
        };
    }
    Ok(current)
}

fn analysis_periodic(x: &[f64], filter: &WaveletFilter) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        let mut sa = 0.0;
        let mut sd = 0.0;
        for (j, (&h, &g)) in filter.lowpass.iter().zip(&filter.highpass).enumerate() {
            let v = x[(2 * k + j) % n];
            sa += h * v;
            sd += g * v;
        }
        a[k] = sa;
        d[k] = sd;
    }
    (a, d)
}

fn synthesis_periodic(a: &[f64], d: &[f64], filter: &WaveletFilter) -> Vec<f64> {
    let n = 2 * a.len();
    let mut out = vec![0.0; n];
    for k in 0..a.len() {
        for (j, (&h, &g)) in filter
            .synthesis_lowpass
            .iter()
            .zip(&filter.synthesis_highpass)
            .enumerate()
        {
            out[(2 * k + j) % n] += h * a[k] + g * d[k];
        }
    }
    out
}

fn mirror_index(m: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let r = m.rem_euclid(period) as usize;
    if r < n {
        r
    } else {
        2 * n - 1 - r
    }
}

fn analysis_symmetric(x: &[f64], filter: &WaveletFilter) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let taps = filter.len();
    let pad = taps - 1;
    let ext: Vec<f64> = (0..n + 2 * pad)
        .map(|e| x[mirror_index(e as isize - pad as isize, n)])
        .collect();
    let count = (n + taps) / 2;
    let mut a = vec![0.0; count];
    let mut d = vec![0.0; count];
    for k in 0..count {
        let window = &ext[2 * k..2 * k + taps];
        a[k] = window.iter().zip(&filter.lowpass).map(|(v, h)| v * h).sum();
        d[k] = window.iter().zip(&filter.highpass).map(|(v, g)| v * g).sum();
    }
    (a, d)
}

fn synthesis_symmetric(a: &[f64], d: &[f64], filter: &WaveletFilter, target: usize) -> Vec<f64> {
    let taps = filter.len();
    let pad = taps - 1;
    let mut ext = vec![0.0; target + 2 * pad];
    for k in 0..a.len() {
        for j in 0..taps {
            ext[2 * k + j] += filter.synthesis_lowpass[j] * a[k] + filter.synthesis_highpass[j] * d[k];
        }
    }
    ext[pad..pad + target].to_vec()
}

/// The five clinical bands of one signal, each at the input length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSet {
    pub delta: Vec<f64>,
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl BandSet {
    /// Bands in `delta, theta, alpha, beta, gamma` order.
    pub fn bands(&self) -> [&[f64]; 5] {
        [&self.delta, &self.theta, &self.alpha, &self.beta, &self.gamma]
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn energies(&self) -> [f64; 5] {
        self.bands().map(|b| b.iter().map(|v| v * v).sum())
    }

    pub fn sum(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.bands().iter().map(|b| b[i]).sum())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = BAND_NAMES.join(",");
        out.push('\n');
        for i in 0..self.len() {
            let row = self.bands().map(|b| b[i]);
            let _ = writeln!(out, "{},{},{},{},{}", row[0], row[1], row[2], row[3], row[4]);
        }
        out
    }
}

/// Band view of a 128 Hz signal using the default periodic extension.
pub fn band_signals(signal: &[f64], filter: &WaveletFilter) -> Result<BandSet> {
    band_signals_with(signal, filter, Extension::Periodic)
}

/// Five-level decomposition with one single-subband reconstruction per band:
/// gamma ← d1 (32–64 Hz), beta ← d2 (16–32), alpha ← d3 (8–16),
/// theta ← d4 (4–8), delta ← a5 + d5 (0–4).
pub fn band_signals_with(
    signal: &[f64],
    filter: &WaveletFilter,
    extension: Extension,
) -> Result<BandSet> {
    let min_len = (1 << BAND_LEVELS) * (filter.len() - 1).max(1);
    if signal.len() < min_len {
        return Err(Error::Size(format!(
            "band decomposition needs at least {min_len} samples, got {}",
            signal.len()
        )));
    }
    let decomp = dwt_decompose_with(signal, filter, BAND_LEVELS, extension)?;
    let empty = decomp.zeroed();

    let only_detail = |level: usize| -> Result<Vec<f64>> {
        let mut part = empty.clone();
        part.details[level - 1].clone_from(&decomp.details[level - 1]);
        dwt_reconstruct(&part, filter)
    };

    let mut low = empty.clone();
    low.approx.clone_from(&decomp.approx);
    low.details[BAND_LEVELS - 1].clone_from(&decomp.details[BAND_LEVELS - 1]);

    Ok(BandSet {
        delta: dwt_reconstruct(&low, filter)?,
        theta: only_detail(4)?,
        alpha: only_detail(3)?,
        beta: only_detail(2)?,
        gamma: only_detail(1)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn tone(freq: f64, len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / BAND_FS).sin())
            .collect()
    }

    #[test]
    fn builtin_filters_are_orthonormal() {
        for f in [WaveletFilter::haar(), WaveletFilter::db2(), WaveletFilter::db4()] {
            let energy: f64 = f.lowpass.iter().map(|v| v * v).sum();
            assert!((energy - 1.0).abs() < 1e-10, "{}", f.name);
            assert_eq!(f.lowpass.len(), f.highpass.len());
            assert!(f.is_orthogonal(1e-10));
        }
    }

    #[test]
    fn haar_pair_by_hand() {
        let d = dwt_decompose(&[1.0, 1.0], &WaveletFilter::haar(), 1).unwrap();
        assert!((d.approx[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(d.details[0][0].abs() < 1e-15);
    }

    #[test]
    fn zero_signal_gives_zero_coefficients() {
        let d = dwt_decompose(&vec![0.0; 256], &WaveletFilter::db4(), 4).unwrap();
        assert!(d.to_flat().iter().all(|&v| v == 0.0));
        let back = dwt_reconstruct(&d, &WaveletFilter::db4()).unwrap();
        assert!(back.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn depth_and_size_errors() {
        let db4 = WaveletFilter::db4();
        assert!(matches!(dwt_decompose(&[1.0; 4], &db4, 1), Err(Error::Size(_))));
        // log2(64 / 7) = 3.19
        assert!(dwt_decompose(&[1.0; 64], &db4, 3).is_ok());
        assert!(matches!(dwt_decompose(&[1.0; 64], &db4, 4), Err(Error::Depth(_))));
        assert!(matches!(dwt_decompose(&[1.0; 64], &db4, 0), Err(Error::Depth(_))));
    }

    #[test]
    fn filter_mismatch_is_a_shape_error() {
        let d = dwt_decompose(&random_signal(128, 1), &WaveletFilter::db4(), 3).unwrap();
        let err = dwt_reconstruct(&d, &WaveletFilter::haar()).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn db4_energy_and_reconstruction() {
        let db4 = WaveletFilter::db4();
        let x = random_signal(1024, 7);
        let d = dwt_decompose(&x, &db4, 4).unwrap();
        let energy: f64 = x.iter().map(|v| v * v).sum();
        assert!((energy - d.energy()).abs() / energy < 1e-8);
        let back = dwt_reconstruct(&d, &db4).unwrap();
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8);
    }

    #[test]
    fn symmetric_mode_reconstructs() {
        for filter in [WaveletFilter::haar(), WaveletFilter::db2(), WaveletFilter::db4()] {
            for len in [64, 100, 257] {
                let x = random_signal(len, len as u64);
                let d = dwt_decompose_with(&x, &filter, 3, Extension::Symmetric).unwrap();
                assert_eq!(d.approx.len(), d.lengths[3]);
                let back = dwt_reconstruct(&d, &filter).unwrap();
                assert_eq!(back.len(), len);
                let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-10, "{} len {len}: {err}", filter.name);
            }
        }
    }

    #[test]
    fn lowpass_only_has_less_energy() {
        let db4 = WaveletFilter::db4();
        let x = random_signal(512, 3);
        let mut d = dwt_decompose(&x, &db4, 4).unwrap();
        d.details.iter_mut().flatten().for_each(|v| *v = 0.0);
        let low = dwt_reconstruct(&d, &db4).unwrap();
        let e = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
        assert!(e(&low) <= e(&x));
    }

    #[test]
    fn tones_land_in_their_band() {
        let db4 = WaveletFilter::db4();
        for (freq, band) in [(2.0, 0), (6.0, 1), (10.0, 2), (20.0, 3), (40.0, 4)] {
            let bands = band_signals(&tone(freq, 1024), &db4).unwrap();
            let e = bands.energies();
            let best = (0..5).max_by(|&a, &b| e[a].total_cmp(&e[b])).unwrap();
            assert_eq!(best, band, "{freq} Hz energies {e:?}");
        }
    }

    #[test]
    fn bands_sum_to_signal() {
        let x = random_signal(512, 11);
        let bands = band_signals(&x, &WaveletFilter::db4()).unwrap();
        for (a, b) in bands.sum().iter().zip(&x) {
            assert!((a - b).abs() < 1e-6);
        }
        let zero = band_signals(&vec![0.0; 512], &WaveletFilter::db4()).unwrap();
        assert!(zero.bands().iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn band_signals_needs_enough_samples() {
        let err = band_signals(&vec![0.0; 128], &WaveletFilter::db4()).unwrap_err();
        assert!(matches!(err, Error::Size(_)));
    }

    #[test]
    fn parses_filter_table() {
        let text = "# comment\nhaar 0.7071067811865476 0.7071067811865476\n\n";
        let filters = WaveletFilter::parse_table(text).unwrap();
        assert_eq!(filters.len(), 1);
        assert_eq!(filters[0].name, "haar");
        assert!(WaveletFilter::parse_table("bad 1 2 3").is_err());
        assert!(WaveletFilter::parse_table("x 0.5 zz").is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let bands = band_signals(&random_signal(256, 2), &WaveletFilter::db4()).unwrap();
        let csv = bands.to_csv();
        assert!(csv.starts_with("delta,theta,alpha,beta,gamma\n"));
        assert_eq!(csv.lines().count(), 257);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn perfect_reconstruction(seed in any::<u64>(), exp in 7usize..11) {
            let db4 = WaveletFilter::db4();
            let x = random_signal(1 << exp, seed);
            let d = dwt_decompose(&x, &db4, 4).unwrap();
            let back = dwt_reconstruct(&d, &db4).unwrap();
            let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-8);
        }

        #[test]
        fn linear_in_the_signal(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let db4 = WaveletFilter::db4();
            let x = random_signal(256, seed);
            let y = random_signal(256, seed.wrapping_add(1));
            let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let dx = dwt_decompose(&x, &db4, 3).unwrap().to_flat();
            let dy = dwt_decompose(&y, &db4, 3).unwrap().to_flat();
            let dm = dwt_decompose(&mix, &db4, 3).unwrap().to_flat();
            for i in 0..dm.len() {
                prop_assert!((dm[i] - (alpha * dx[i] + beta * dy[i])).abs() < 1e-9);
            }
        }
    }
}

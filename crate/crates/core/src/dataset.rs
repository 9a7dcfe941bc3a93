//! EEG recordings in the 16-channel, 60 s, 128 Hz layout: ingest, per-channel
//! normalization, windowing, and a seeded synthetic generator.
//!
//! A subject file is plain text holding 122 880 numbers separated by any
//! whitespace. The first 7 680 values are channel 0, the next 7 680 channel 1,
//! and so on.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_CHANNELS: usize = 16;
pub const N_SAMPLES: usize = 7680;
pub const FS: f64 = 128.0;
pub const VALUES_PER_SUBJECT: usize = N_CHANNELS * N_SAMPLES;

pub const CHANNEL_NAMES: [&str; N_CHANNELS] = [
    "F7", "F3", "F4", "F8", "T3", "C3", "Cz", "C4", "T4", "T5", "P3", "Pz", "P4", "T6", "O1", "O2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    /// Schizophrenia.
    Sz = 0,
    /// Healthy control.
    Hc = 1,
}

impl ClassLabel {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(ClassLabel::Sz),
            1 => Ok(ClassLabel::Hc),
            other => Err(Error::Domain(format!("class label {other} is not 0 or 1"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Sz => "SZ",
            ClassLabel::Hc => "HC",
        }
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "0" | "SZ" => Ok(ClassLabel::Sz),
            "1" | "HC" => Ok(ClassLabel::Hc),
            other => Err(Error::Domain(format!("unknown class label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegRecording {
    pub subject_id: String,
    pub label: ClassLabel,
    /// `N_CHANNELS` rows of `N_SAMPLES` values.
    pub data: Vec<Vec<f64>>,
    pub fs: f64,
}

impl EegRecording {
    pub fn new(subject_id: impl Into<String>, label: ClassLabel, data: Vec<Vec<f64>>) -> Result<Self> {
        if data.len() != N_CHANNELS || data.iter().any(|row| row.len() != N_SAMPLES) {
            return Err(Error::Size(format!(
                "recording must be {N_CHANNELS}x{N_SAMPLES}, got {}x{}",
                data.len(),
                data.first().map_or(0, Vec::len)
            )));
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("recording contains non-finite values".into()));
        }
        Ok(EegRecording {
            subject_id: subject_id.into(),
            label,
            data,
            fs: FS,
        })
    }

    pub fn channel(&self, idx: usize) -> &[f64] {
        &self.data[idx]
    }

    /// Serializes in the ingest layout, one value per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(VALUES_PER_SUBJECT * 20);
        for v in self.data.iter().flatten() {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::file(path, e))
    }
}

/// Parses the ingest layout. `origin` is only used for error messages.
pub fn parse_subject(
    text: &str,
    origin: &Path,
    subject_id: &str,
    label: ClassLabel,
) -> Result<EegRecording> {
    let mut values = Vec::with_capacity(VALUES_PER_SUBJECT);
    for (lineno, line) in text.lines().enumerate() {
        for token in line.split_whitespace() {
            let v: f64 = token
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: origin.to_path_buf(),
                    line: lineno + 1,
                    token: token.to_string(),
                })?;
            values.push(v);
        }
    }
    if values.len() != VALUES_PER_SUBJECT {
        return Err(Error::MalformedRecording {
            path: origin.to_path_buf(),
            expected: VALUES_PER_SUBJECT,
            found: values.len(),
        });
    }
    let data = values.chunks(N_SAMPLES).map(<[f64]>::to_vec).collect();
    EegRecording::new(subject_id, label, data)
}

pub fn load_subject(path: impl AsRef<Path>, subject_id: &str, label: ClassLabel) -> Result<EegRecording> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_subject(&text, path, subject_id, label)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NormMode {
    #[default]
    ZScore,
    MinMax,
}

impl std::str::FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zscore" | "zscore-per-channel" => Ok(NormMode::ZScore),
            "minmax" | "minmax-per-channel" => Ok(NormMode::MinMax),
            other => Err(Error::Config(format!("unknown normalization {other:?}"))),
        }
    }
}

pub(crate) fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-channel normalization. Z-score uses the population variance.
pub fn normalize(rec: &EegRecording, mode: NormMode) -> Result<EegRecording> {
    let mut data = Vec::with_capacity(rec.data.len());
    for (channel, row) in rec.data.iter().enumerate() {
        let out = match mode {
            NormMode::ZScore => {
                let (mean, std) = mean_std(row);
                if std <= f64::EPSILON * mean.abs().max(1.0) {
                    return Err(Error::DegenerateChannel { channel });
                }
                row.iter().map(|v| (v - mean) / std).collect()
            }
            NormMode::MinMax => {
                let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let range = hi - lo;
                if range <= 0.0 {
                    return Err(Error::DegenerateChannel { channel });
                }
                row.iter().map(|v| ((v - lo) / range).clamp(0.0, 1.0)).collect()
            }
        };
        data.push(out);
    }
    Ok(EegRecording {
        subject_id: rec.subject_id.clone(),
        label: rec.label,
        data,
        fs: rec.fs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub subject_id: String,
    pub channel: usize,
    /// Window position within the channel, in hops.
    pub index: usize,
    pub start: usize,
    pub samples: Vec<f64>,
    pub label: ClassLabel,
}

/// Number of windows per channel.
pub fn segment_count(len: usize, window: usize, hop: usize) -> usize {
    if window == 0 || hop == 0 || window > len {
        0
    } else {
        (len - window) / hop + 1
    }
}

pub(crate) fn check_window(window: usize, hop: usize, len: usize) -> Result<()> {
    if window == 0 || window > len {
        return Err(Error::InvalidWindow(format!(
            "window {window} must be in 1..={len}"
        )));
    }
    if hop == 0 {
        return Err(Error::InvalidWindow("hop must be positive".into()));
    }
    Ok(())
}

/// Windows every channel; output is channel-major.
pub fn segment(rec: &EegRecording, window: usize, hop: usize) -> Result<Vec<Segment>> {
    let len = rec.data.first().map_or(0, Vec::len);
    check_window(window, hop, len)?;
    let per_channel = segment_count(len, window, hop);
    let mut out = Vec::with_capacity(per_channel * rec.data.len());
    for (channel, row) in rec.data.iter().enumerate() {
        for index in 0..per_channel {
            let start = index * hop;
            out.push(Segment {
                subject_id: rec.subject_id.clone(),
                channel,
                index,
                start,
                samples: row[start..start + window].to_vec(),
                label: rec.label,
            });
        }
    }
    Ok(out)
}

/// Rhythm bands the synthetic generator draws oscillations from, in Hz.
const SYNTH_BANDS: [(f64, f64); 5] = [(0.5, 4.0), (4.0, 8.0), (8.0, 13.0), (13.0, 30.0), (30.0, 45.0)];
const SYNTH_GAIN_SZ: [f64; 5] = [1.8, 1.6, 0.45, 0.6, 0.3];
const SYNTH_GAIN_HC: [f64; 5] = [1.0, 0.7, 1.7, 0.6, 0.3];
const SYNTH_TONES_PER_BAND: usize = 3;
const SYNTH_NOISE: f64 = 0.4;
const SYNTH_SCALE_UV: f64 = 12.0;

/// Deterministic synthetic subject.
///
/// Each channel is a sum of slowly amplitude-modulated sinusoids in the five
/// rhythm bands plus white noise. The SZ profile raises delta/theta and
/// suppresses alpha relative to HC; subject- and channel-level gains jitter
/// log-normally so no two subjects are identical.
pub fn synth_subject(label: ClassLabel, seed: u64) -> EegRecording {
    let stream = seed.wrapping_mul(2).wrapping_add(label.as_u8() as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(stream ^ 0x5eed_ee65_0000_0000);
    let jitter: Normal<f64> = Normal::new(0.0, 0.15).expect("valid sd");
    let noise: Normal<f64> = Normal::new(0.0, SYNTH_NOISE).expect("valid sd");
    let class_gain = match label {
        ClassLabel::Sz => SYNTH_GAIN_SZ,
        ClassLabel::Hc => SYNTH_GAIN_HC,
    };
    let subject_gain: [f64; 5] =
        std::array::from_fn(|b| class_gain[b] * jitter.sample(&mut rng).exp());

    let mut data = Vec::with_capacity(N_CHANNELS);
    for _ in 0..N_CHANNELS {
        let mut row = vec![0.0; N_SAMPLES];
        for (band, &(lo, hi)) in SYNTH_BANDS.iter().enumerate() {
            let gain = subject_gain[band] * (0.5 * jitter.sample(&mut rng)).exp();
            for _ in 0..SYNTH_TONES_PER_BAND {
                let freq = rng.random_range(lo..hi);
                let phase = rng.random_range(0.0..2.0 * PI);
                let mod_freq = rng.random_range(0.05..0.3);
                let mod_phase = rng.random_range(0.0..2.0 * PI);
                let amp = gain / (SYNTH_TONES_PER_BAND as f64).sqrt();
                for (i, v) in row.iter_mut().enumerate() {
                    let t = i as f64 / FS;
                    let envelope = 1.0 + 0.3 * (2.0 * PI * mod_freq * t + mod_phase).sin();
                    *v += amp * envelope * (2.0 * PI * freq * t + phase).sin();
                }
            }
        }
        for v in row.iter_mut() {
            *v = SYNTH_SCALE_UV * (*v + noise.sample(&mut rng));
        }
        data.push(row);
    }
    EegRecording {
        subject_id: format!("{}{:04}", label.name().to_ascii_lowercase(), seed),
        label,
        data,
        fs: FS,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject_id: String,
    pub label: ClassLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    path: String,
    subject_id: String,
    label: String,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.subject_id.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate subject id {:?} in manifest",
                    e.subject_id
                )));
            }
        }
        Ok(DatasetManifest { entries })
    }

    /// `(SZ, HC)` subject counts.
    pub fn counts(&self) -> (usize, usize) {
        let sz = self.entries.iter().filter(|e| e.label == ClassLabel::Sz).count();
        (sz, self.entries.len() - sz)
    }

    /// Reads a `path,subject_id,label` CSV; relative paths resolve against the
    /// manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let headers = reader.headers()?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["path", "subject_id", "label"] {
            return Err(Error::Config(format!(
                "{}: manifest header must be path,subject_id,label",
                path.display()
            )));
        }
        let mut entries = Vec::new();
        for row in reader.deserialize() {
            let row: ManifestRow = row?;
            let p = PathBuf::from(row.path.trim());
            entries.push(ManifestEntry {
                path: if p.is_absolute() { p } else { base.join(p) },
                subject_id: row.subject_id.trim().to_string(),
                label: row.label.parse()?,
            });
        }
        Self::new(entries)
    }

    /// Writes the manifest with paths made relative to `path`'s directory where
    /// possible.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        for e in &self.entries {
            let rel = e.path.strip_prefix(&base).unwrap_or(&e.path);
            writer.serialize(ManifestRow {
                path: rel.to_string_lossy().into_owned(),
                subject_id: e.subject_id.clone(),
                label: e.label.as_u8().to_string(),
            })?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn load_all(&self) -> Result<Vec<EegRecording>> {
        self.entries
            .iter()
            .map(|e| load_subject(&e.path, &e.subject_id, e.label))
            .collect()
    }
}

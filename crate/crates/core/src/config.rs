//! Flat `key = value` run configuration. `#` starts a comment; unknown keys
//! are rejected. Every key can also be set from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cae::{BandScaling, CaeConfig};
use crate::classifiers::{ClassifierSpec, CnnConfig};
use crate::cwt::{build_filterbank, CwtFilterBank, DEFAULT_MU, DEFAULT_SIGMA};
use crate::dataset::NormMode;
use crate::error::{Error, Result};
use crate::eval::{Aggregation, CaePipeline, CnnPipeline, CvOptions, SplitMode};
use crate::image::Scaling;
use crate::stft::StftParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub normalization: Option<NormMode>,
    pub wavelet: String,

    pub cwt_f_min: f64,
    pub cwt_f_max: f64,
    pub cwt_voices: usize,
    pub cwt_mu: f64,
    pub cwt_sigma: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub image_scaling: Scaling,

    pub stft_window: usize,
    pub stft_overlap: f64,
    pub stft_nfft: usize,

    pub cae: CaeConfig,
    pub cae_windows_per_channel: Option<usize>,
    pub cae_max_train_windows: Option<usize>,

    pub classifiers: Vec<String>,
    pub knn_k: usize,
    pub svc_c: f64,
    pub svc_epochs: usize,
    pub rf_trees: usize,
    pub rf_max_depth: Option<usize>,
    pub classifier_seed: u64,

    pub cnn: CnnConfig,
    pub cnn_images_per_subject: usize,
    pub cnn_image_window: usize,

    pub pipeline: String,
    pub split: SplitMode,
    pub aggregation: Aggregation,
    pub folds: usize,
    pub cv_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: None,
            out: PathBuf::from("out"),
            normalization: None,
            wavelet: "db4".into(),
            cwt_f_min: 0.5,
            cwt_f_max: 50.0,
            cwt_voices: 12,
            cwt_mu: DEFAULT_MU,
            cwt_sigma: DEFAULT_SIGMA,
            image_width: 224,
            image_height: 224,
            image_scaling: Scaling::Linear,
            stft_window: 256,
            stft_overlap: 0.5,
            stft_nfft: 512,
            cae: CaeConfig::default(),
            cae_windows_per_channel: None,
            cae_max_train_windows: None,
            classifiers: vec!["knn".into(), "svc".into(), "rf".into(), "vc".into()],
            knn_k: 5,
            svc_c: 1.0,
            svc_epochs: 50,
            rf_trees: 100,
            rf_max_depth: None,
            classifier_seed: 0,
            cnn: CnnConfig::default(),
            cnn_images_per_subject: 4,
            cnn_image_window: 1024,
            pipeline: "cae".into(),
            split: SplitMode::Subject,
            aggregation: Aggregation::PerWindow,
            folds: 5,
            cv_seed: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn optional(key: &str, value: &str) -> Result<Option<usize>> {
    match value {
        "" | "none" | "all" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "manifest", "out", "normalization", "wavelet",
    "cwt.f_min", "cwt.f_max", "cwt.voices", "cwt.mu", "cwt.sigma",
    "image.width", "image.height", "image.scaling",
    "stft.window", "stft.overlap", "stft.nfft",
    "cae.window", "cae.bottleneck", "cae.epochs", "cae.batch_size", "cae.learning_rate", "cae.seed",
    "cae.shuffle_seed", "cae.batchnorm", "cae.scaling", "cae.windows_per_channel", "cae.max_train_windows",
    "classifiers", "knn.k", "svc.c", "svc.epochs", "rf.trees", "rf.max_depth", "classifier.seed",
    "cnn.height", "cnn.width", "cnn.epochs", "cnn.batch_size", "cnn.learning_rate", "cnn.seed",
    "cnn.shuffle_seed", "cnn.images_per_subject", "cnn.image_window",
    "pipeline", "split", "aggregation", "folds", "cv.seed",
];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "manifest" => self.manifest = (!v.is_empty()).then(|| PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "normalization" => {
                self.normalization = match v {
                    "none" | "" => None,
                    other => Some(other.parse()?),
                }
            }
            "wavelet" => self.wavelet = v.to_string(),
            "cwt.f_min" => self.cwt_f_min = parse(key, v)?,
            "cwt.f_max" => self.cwt_f_max = parse(key, v)?,
            "cwt.voices" => self.cwt_voices = parse(key, v)?,
            "cwt.mu" => self.cwt_mu = parse(key, v)?,
            "cwt.sigma" => self.cwt_sigma = parse(key, v)?,
            "image.width" => self.image_width = parse(key, v)?,
            "image.height" => self.image_height = parse(key, v)?,
            "image.scaling" => self.image_scaling = v.parse()?,
            "stft.window" => self.stft_window = parse(key, v)?,
            "stft.overlap" => self.stft_overlap = parse(key, v)?,
            "stft.nfft" => self.stft_nfft = parse(key, v)?,
            "cae.window" => self.cae.window = parse(key, v)?,
            "cae.bottleneck" => self.cae.bottleneck = parse(key, v)?,
            "cae.epochs" => self.cae.epochs = parse(key, v)?,
            "cae.batch_size" => self.cae.batch_size = parse(key, v)?,
            "cae.learning_rate" => self.cae.learning_rate = parse(key, v)?,
            "cae.seed" => self.cae.seed = parse(key, v)?,
            "cae.shuffle_seed" => self.cae.shuffle_seed = parse(key, v)?,
            "cae.batchnorm" => self.cae.batchnorm = boolean(key, v)?,
            "cae.scaling" => self.cae.scaling = v.parse::<BandScaling>()?,
            "cae.windows_per_channel" => self.cae_windows_per_channel = optional(key, v)?,
            "cae.max_train_windows" => self.cae_max_train_windows = optional(key, v)?,
            "classifiers" => {
                self.classifiers = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            }
            "knn.k" => self.knn_k = parse(key, v)?,
            "svc.c" => self.svc_c = parse(key, v)?,
            "svc.epochs" => self.svc_epochs = parse(key, v)?,
            "rf.trees" => self.rf_trees = parse(key, v)?,
            "rf.max_depth" => self.rf_max_depth = optional(key, v)?,
            "classifier.seed" => self.classifier_seed = parse(key, v)?,
            "cnn.height" => self.cnn.height = parse(key, v)?,
            "cnn.width" => self.cnn.width = parse(key, v)?,
            "cnn.epochs" => self.cnn.epochs = parse(key, v)?,
            "cnn.batch_size" => self.cnn.batch_size = parse(key, v)?,
            "cnn.learning_rate" => self.cnn.learning_rate = parse(key, v)?,
            "cnn.seed" => self.cnn.seed = parse(key, v)?,
            "cnn.shuffle_seed" => self.cnn.shuffle_seed = parse(key, v)?,
            "cnn.images_per_subject" => self.cnn_images_per_subject = parse(key, v)?,
            "cnn.image_window" => self.cnn_image_window = parse(key, v)?,
            "pipeline" => self.pipeline = v.to_string(),
            "split" => self.split = v.parse()?,
            "aggregation" => self.aggregation = v.parse()?,
            "folds" => self.folds = parse(key, v)?,
            "cv.seed" => self.cv_seed = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1)))?;
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("config error: "))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut cfg = Self::from_text(&text)?;
        // relative manifest paths are relative to the config file
        if let (Some(m), Some(dir)) = (cfg.manifest.as_mut(), path.parent()) {
            if m.is_relative() {
                *m = dir.join(&*m);
            }
        }
        Ok(cfg)
    }

    /// Checks referenced paths and cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        if let Some(m) = &self.manifest {
            if !m.is_file() {
                return Err(Error::Config(format!("manifest {} does not exist", m.display())));
            }
        }
        crate::dwt::WaveletFilter::by_name(&self.wavelet).map_err(|e| Error::Config(e.to_string()))?;
        self.filterbank(128.0)?;
        self.stft_params(128.0).validate()?;
        self.classifier_specs()?;
        if !matches!(self.pipeline.as_str(), "cae" | "cnn") {
            return Err(Error::Config(format!("unknown pipeline {:?}", self.pipeline)));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        crate::cae::build_cae(&self.cae)?;
        crate::classifiers::build_cnn2d(self.cnn.height, self.cnn.width, self.cnn.seed)?;
        Ok(())
    }

    pub fn filterbank(&self, fs: f64) -> Result<CwtFilterBank> {
        build_filterbank(self.cwt_f_min, self.cwt_f_max, self.cwt_voices, fs, self.cwt_mu, self.cwt_sigma)
    }

    pub fn stft_params(&self, fs: f64) -> StftParams {
        StftParams {
            window: self.stft_window,
            overlap: self.stft_overlap,
            nfft: self.stft_nfft,
            fs,
        }
    }

    pub fn classifier_spec(&self, name: &str) -> Result<ClassifierSpec> {
        let seed = self.classifier_seed;
        Ok(match name {
            "knn" => ClassifierSpec::Knn { k: self.knn_k },
            "svc" => ClassifierSpec::LinearSvc {
                c: self.svc_c,
                epochs: self.svc_epochs,
                seed,
            },
            "rf" => ClassifierSpec::RandomForest {
                trees: self.rf_trees,
                max_depth: self.rf_max_depth,
                seed,
            },
            "vc" => ClassifierSpec::SoftVote {
                members: ["knn", "svc", "rf"].iter().map(|n| self.classifier_spec(n)).collect::<Result<_>>()?,
            },
            other => return Err(Error::Config(format!("unknown classifier {other:?}"))),
        })
    }

    pub fn classifier_specs(&self) -> Result<Vec<ClassifierSpec>> {
        if self.classifiers.is_empty() {
            return Err(Error::Config("no classifiers configured".into()));
        }
        self.classifiers.iter().map(|n| self.classifier_spec(n)).collect()
    }

    pub fn cae_pipeline(&self) -> Result<CaePipeline> {
        let mut p = CaePipeline::new(self.cae.clone(), self.classifier_specs()?);
        p.windows_per_channel = self.cae_windows_per_channel;
        p.max_train_windows = self.cae_max_train_windows;
        p.aggregation = self.aggregation;
        Ok(p)
    }

    pub fn cnn_pipeline(&self) -> CnnPipeline {
        CnnPipeline {
            cnn: self.cnn.clone(),
            images_per_subject: self.cnn_images_per_subject,
            image_window: self.cnn_image_window,
            scaling: self.image_scaling,
            select_by_validation: true,
        }
    }

    pub fn cv_options(&self) -> CvOptions {
        CvOptions {
            k: self.folds,
            seed: self.cv_seed,
            split: self.split,
            validation: true,
        }
    }
}

//! k-fold cross-validation of whole pipelines. Everything that learns,
//! feature extractors included, is fitted on the training part of each fold
//! only.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{cohens_kappa, confusion, metrics, roc_auc, ConfusionMatrix, Kappa, Metrics};
use super::split::{holdout_split, kfold_stratified};
use crate::cae::{build_cae, prepare_cae_inputs, CaeConfig};
use crate::classifiers::{decide, ClassifierSpec, CnnConfig, CnnModel, FeatureMatrix, ProbClassifier, StandardScaler};
use crate::cwt::{cwt, CwtFilterBank};
use crate::dataset::{segment_count, EegRecording};
use crate::error::{Error, Result};
use crate::image::{render_matrix, Scaling};
use crate::nn::{bce_loss, Tensor};

/// Share of each fold's training part held out for validation, so that
/// train/val/test come out near 68/12/20 of the data.
pub const VALIDATION_SHARE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// All rows of a subject stay in one split.
    #[default]
    Subject,
    /// Rows are split independently; windows of one subject can land on
    /// both sides.
    Sample,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "subject" | "group" => Ok(SplitMode::Subject),
            "sample" | "window" => Ok(SplitMode::Sample),
            other => Err(Error::Config(format!("unknown split mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// One row per window.
    #[default]
    PerWindow,
    /// Rows averaged per subject before fitting and scoring.
    SubjectMean,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "window" | "per-window" => Ok(Aggregation::PerWindow),
            "subject" | "subject-mean" => Ok(Aggregation::SubjectMean),
            other => Err(Error::Config(format!("unknown aggregation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub classifiers: Vec<ClassifierSpec>,
    pub standardize: bool,
    pub aggregation: Aggregation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaePipeline {
    pub cae: CaeConfig,
    /// Window hop in samples; the window length comes from `cae`.
    pub hop: usize,
    /// Channels used; empty means all.
    pub channels: Vec<usize>,
    /// Keep only the first windows of each channel.
    pub windows_per_channel: Option<usize>,
    /// Seeded subsample of training windows for the autoencoder.
    pub max_train_windows: Option<usize>,
    pub classifiers: Vec<ClassifierSpec>,
    pub standardize: bool,
    pub aggregation: Aggregation,
}

impl CaePipeline {
    pub fn new(cae: CaeConfig, classifiers: Vec<ClassifierSpec>) -> Self {
        CaePipeline {
            hop: cae.window,
            cae,
            channels: Vec::new(),
            windows_per_channel: None,
            max_train_windows: None,
            classifiers,
            standardize: true,
            aggregation: Aggregation::PerWindow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnPipeline {
    pub cnn: CnnConfig,
    pub images_per_subject: usize,
    /// Samples per scalogram image.
    pub image_window: usize,
    pub scaling: Scaling,
    /// Keep the epoch with the lowest validation loss.
    pub select_by_validation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pipeline {
    Features(FeaturePipeline),
    Cae(CaePipeline),
    Cnn(CnnPipeline),
    /// Scores every sample with its true label; checks the harness itself.
    Oracle,
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::Features(_) => "features",
            Pipeline::Cae(_) => "cae",
            Pipeline::Cnn(_) => "cnn",
            Pipeline::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum EvalData<'a> {
    Features(&'a FeatureMatrix),
    Recordings(&'a [EegRecording]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    pub split: SplitMode,
    /// Carve a validation part out of each training fold.
    pub validation: bool,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            k: 5,
            seed: 0,
            split: SplitMode::Subject,
            validation: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Over folds where AUC is defined; `None` if it never is.
    pub auc: Option<f64>,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub fold: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    /// Class 0 (SZ) treated as positive.
    pub swapped: Metrics,
    pub auc: Option<f64>,
    pub kappa: Kappa,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub fold: usize,
    pub label: u8,
    pub p1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    pub folds: Vec<FoldScores>,
    pub mean: MetricSummary,
    pub std: MetricSummary,
    /// Fold confusion matrices summed.
    pub pooled: ConfusionMatrix,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub test_groups: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pipeline: String,
    pub k: usize,
    pub seed: u64,
    pub split: SplitMode,
    pub n_samples: usize,
    pub n_groups: usize,
    pub folds: Vec<FoldAssignment>,
    pub models: Vec<ModelReport>,
    /// Per-fold training loss curve of the learned feature extractor or CNN.
    pub training_curves: Vec<Vec<f64>>,
}

impl EvalReport {
    pub fn model(&self, name: &str) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.name == name)
    }
}

/// One unit of evaluation: a feature row, a window or an image.
struct Samples {
    ids: Vec<String>,
    labels: Vec<u8>,
    groups: Vec<String>,
}

/// What a fold run hands back per model: validation and test `p1`.
struct FoldOutput {
    models: Vec<(String, Vec<f64>, Vec<f64>)>,
    curve: Vec<f64>,
    /// Test/validation sample indices when scoring happens on aggregated
    /// rows rather than the split's own samples.
    scored_test: Option<(Vec<String>, Vec<u8>)>,
    scored_val: Option<Vec<u8>>,
}

pub fn cross_validate(pipeline: &Pipeline, data: EvalData<'_>, k: usize, seed: u64) -> Result<EvalReport> {
    cross_validate_with(
        pipeline,
        data,
        &CvOptions {
            k,
            seed,
            ..CvOptions::default()
        },
    )
}

pub fn cross_validate_with(pipeline: &Pipeline, data: EvalData<'_>, opts: &CvOptions) -> Result<EvalReport> {
    let prepared = prepare(pipeline, data)?;
    let samples = &prepared.samples;
    let n = samples.labels.len();
    if n == 0 {
        return Err(Error::Empty("no samples to evaluate".into()));
    }
    let groups = (opts.split == SplitMode::Subject).then_some(samples.groups.as_slice());
    let folds = kfold_stratified(n, opts.k, opts.seed, groups, Some(&samples.labels))?;

    let runs: Vec<(FoldAssignment, Vec<usize>, Vec<usize>, FoldOutput)> = folds
        .par_iter()
        .enumerate()
        .map(|(f, fold)| {
            let (train, val) = if opts.validation {
                let sub_groups: Option<Vec<String>> =
                    groups.map(|g| fold.train.iter().map(|&i| g[i].clone()).collect());
                let h = holdout_split(
                    fold.train.len(),
                    [1.0 - VALIDATION_SHARE, VALIDATION_SHARE, 0.0],
                    opts.seed.wrapping_add(1 + f as u64),
                    sub_groups.as_deref(),
                )?;
                (
                    h.train.iter().map(|&i| fold.train[i]).collect::<Vec<_>>(),
                    h.val.iter().map(|&i| fold.train[i]).collect::<Vec<_>>(),
                )
            } else {
                (fold.train.clone(), Vec::new())
            };
            let out = run_fold(pipeline, &prepared, &train, &val, &fold.test, opts.seed ^ f as u64)?;
            let test_groups: BTreeSet<&String> = fold.test.iter().map(|&i| &samples.groups[i]).collect();
            let assignment = FoldAssignment {
                n_train: train.len(),
                n_val: val.len(),
                n_test: fold.test.len(),
                test_groups: test_groups.into_iter().cloned().collect(),
            };
            Ok((assignment, val, fold.test.clone(), out))
        })
        .collect::<Result<_>>()?;

    let names: Vec<String> = runs[0].3.models.iter().map(|m| m.0.clone()).collect();
    let mut models: Vec<ModelReport> = Vec::with_capacity(names.len());
    for (m, name) in names.iter().enumerate() {
        let mut fold_scores = Vec::with_capacity(runs.len());
        let mut predictions = Vec::new();
        for (f, (_, val, test, out)) in runs.iter().enumerate() {
            let (_, val_p1, test_p1) = &out.models[m];
            let (ids, labels): (Vec<String>, Vec<u8>) = match &out.scored_test {
                Some((ids, labels)) => (ids.clone(), labels.clone()),
                None => (
                    test.iter().map(|&i| samples.ids[i].clone()).collect(),
                    test.iter().map(|&i| samples.labels[i]).collect(),
                ),
            };
            let val_labels: Vec<u8> = match &out.scored_val {
                Some(l) => l.clone(),
                None => val.iter().map(|&i| samples.labels[i]).collect(),
            };
            fold_scores.push(score_fold(f, &labels, test_p1, &val_labels, val_p1)?);
            predictions.extend(ids.into_iter().zip(&labels).zip(test_p1).map(|((id, &label), &p1)| Prediction {
                sample_id: id,
                fold: f,
                label,
                p1,
            }));
        }
        let (mean, std) = summarize(&fold_scores);
        let pooled = fold_scores
            .iter()
            .fold(ConfusionMatrix::default(), |acc, f| acc.merge(&f.confusion));
        models.push(ModelReport {
            name: name.clone(),
            folds: fold_scores,
            mean,
            std,
            pooled,
            predictions,
        });
    }

    Ok(EvalReport {
        pipeline: pipeline.name().to_string(),
        k: opts.k,
        seed: opts.seed,
        split: opts.split,
        n_samples: n,
        n_groups: samples.groups.iter().collect::<BTreeSet<_>>().len(),
        folds: runs.iter().map(|r| r.0.clone()).collect(),
        training_curves: runs.iter().map(|r| r.3.curve.clone()).collect(),
        models,
    })
}

fn score_fold(fold: usize, labels: &[u8], p1: &[f64], val_labels: &[u8], val_p1: &[f64]) -> Result<FoldScores> {
    let predicted: Vec<u8> = p1.iter().map(|&p| decide([1.0 - p, p])).collect();
    let cm = confusion(labels, &predicted)?;
    let val_accuracy = if val_labels.is_empty() {
        None
    } else {
        let hits = val_labels
            .iter()
            .zip(val_p1)
            .filter(|(l, p)| decide([1.0 - **p, **p]) == **l)
            .count();
        Some(hits as f64 / val_labels.len() as f64)
    };
    Ok(FoldScores {
        fold,
        confusion: cm,
        metrics: metrics(&cm)?,
        swapped: metrics(&cm.swapped())?,
        auc: roc_auc(p1, labels).ok(),
        kappa: cohens_kappa(&cm)?,
        val_accuracy,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize(folds: &[FoldScores]) -> (MetricSummary, MetricSummary) {
    let col = |f: &dyn Fn(&FoldScores) -> f64| mean_std(&folds.iter().map(f).collect::<Vec<_>>());
    let acc = col(&|f| f.metrics.accuracy);
    let prec = col(&|f| f.metrics.precision);
    let rec = col(&|f| f.metrics.recall);
    let f1 = col(&|f| f.metrics.f1);
    let kappa = col(&|f| f.kappa.value);
    let aucs: Vec<f64> = folds.iter().filter_map(|f| f.auc).collect();
    let auc = (!aucs.is_empty()).then(|| mean_std(&aucs));
    (
        MetricSummary {
            accuracy: acc.0,
            precision: prec.0,
            recall: rec.0,
            f1: f1.0,
            auc: auc.map(|a| a.0),
            kappa: kappa.0,
        },
        MetricSummary {
            accuracy: acc.1,
            precision: prec.1,
            recall: rec.1,
            f1: f1.1,
            auc: auc.map(|a| a.1),
            kappa: kappa.1,
        },
    )
}

enum Payload {
    Rows(FeatureMatrix),
    Windows(Vec<Tensor>),
    Images(Vec<Tensor>),
    None,
}

struct Prepared {
    samples: Samples,
    payload: Payload,
}

fn prepare(pipeline: &Pipeline, data: EvalData<'_>) -> Result<Prepared> {
    match (pipeline, data) {
        (Pipeline::Features(_), EvalData::Features(x)) => Ok(Prepared {
            samples: Samples {
                ids: (0..x.len()).map(|i| format!("{}#{i}", x.groups[i])).collect(),
                labels: x.labels.clone(),
                groups: x.groups.clone(),
            },
            payload: Payload::Rows(x.clone()),
        }),
        (Pipeline::Oracle, EvalData::Features(x)) => Ok(Prepared {
            samples: Samples {
                ids: (0..x.len()).map(|i| format!("{}#{i}", x.groups[i])).collect(),
                labels: x.labels.clone(),
                groups: x.groups.clone(),
            },
            payload: Payload::None,
        }),
        (Pipeline::Oracle, EvalData::Recordings(recs)) => Ok(Prepared {
            samples: Samples {
                ids: recs.iter().map(|r| r.subject_id.clone()).collect(),
                labels: recs.iter().map(|r| r.label.as_u8()).collect(),
                groups: recs.iter().map(|r| r.subject_id.clone()).collect(),
            },
            payload: Payload::None,
        }),
        (Pipeline::Cae(p), EvalData::Recordings(recs)) => prepare_windows(p, recs),
        (Pipeline::Cnn(p), EvalData::Recordings(recs)) => prepare_images(p, recs),
        (p, _) => Err(Error::Config(format!("the {} pipeline cannot run on this kind of data", p.name()))),
    }
}

fn prepare_windows(p: &CaePipeline, recs: &[EegRecording]) -> Result<Prepared> {
    let per_subject: Vec<Vec<_>> = recs
        .par_iter()
        .map(|rec| {
            let inputs = prepare_cae_inputs(rec, p.cae.window, p.hop, p.cae.scaling)?;
            Ok(inputs
                .into_iter()
                .filter(|w| p.channels.is_empty() || p.channels.contains(&w.channel))
                .filter(|w| p.windows_per_channel.is_none_or(|m| w.window_index < m))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut samples = Samples {
        ids: Vec::new(),
        labels: Vec::new(),
        groups: Vec::new(),
    };
    let mut windows = Vec::new();
    for w in per_subject.into_iter().flatten() {
        samples.ids.push(format!("{}:ch{}:w{}", w.subject_id, w.channel, w.window_index));
        samples.labels.push(w.label.as_u8());
        samples.groups.push(w.subject_id);
        windows.push(w.tensor);
    }
    Ok(Prepared {
        samples,
        payload: Payload::Windows(windows),
    })
}

/// Scalogram images for one recording: image `i` takes window `i` (wrapping)
/// of a channel spread evenly over the montage.
pub fn subject_images(
    rec: &EegRecording,
    bank: &CwtFilterBank,
    count: usize,
    window: usize,
    height: usize,
    width: usize,
    scaling: Scaling,
) -> Result<Vec<Tensor>> {
    let len = rec.data.first().map_or(0, Vec::len);
    let per_channel = segment_count(len, window, window);
    if per_channel == 0 {
        return Err(Error::InvalidWindow(format!("image window {window} does not fit {len} samples")));
    }
    let channels = rec.data.len();
    (0..count)
        .map(|i| {
            let channel = (i * channels / count.max(1)) % channels;
            let start = (i % per_channel) * window;
            let scal = cwt(&rec.data[channel][start..start + window], bank)?;
            let img = render_matrix(&scal.magnitudes, width, height, scaling)?;
            Tensor::new(vec![1, height, width], img.to_unit())
        })
        .collect()
}

fn prepare_images(p: &CnnPipeline, recs: &[EegRecording]) -> Result<Prepared> {
    if p.images_per_subject == 0 {
        return Err(Error::Config("images per subject must be at least 1".into()));
    }
    let per_subject: Vec<Vec<Tensor>> = recs
        .par_iter()
        .map(|rec| {
            let bank = CwtFilterBank::eeg_default();
            let bank = if rec.fs == bank.fs {
                bank
            } else {
                crate::cwt::build_filterbank(bank.f_min, bank.f_max.min(rec.fs / 2.0), bank.voices_per_octave, rec.fs, bank.mu, bank.sigma)?
            };
            subject_images(rec, &bank, p.images_per_subject, p.image_window, p.cnn.height, p.cnn.width, p.scaling)
        })
        .collect::<Result<_>>()?;
    let mut samples = Samples {
        ids: Vec::new(),
        labels: Vec::new(),
        groups: Vec::new(),
    };
    let mut images = Vec::new();
    for (rec, imgs) in recs.iter().zip(per_subject) {
        for (i, img) in imgs.into_iter().enumerate() {
            samples.ids.push(format!("{}:img{i}", rec.subject_id));
            samples.labels.push(rec.label.as_u8());
            samples.groups.push(rec.subject_id.clone());
            images.push(img);
        }
    }
    Ok(Prepared {
        samples,
        payload: Payload::Images(images),
    })
}

fn fit_and_score(
    specs: &[ClassifierSpec],
    rows: &FeatureMatrix,
    train: &[usize],
    val: &[usize],
    test: &[usize],
    standardize: bool,
    aggregation: Aggregation,
) -> Result<FoldOutput> {
    let pick = |idx: &[usize]| {
        let m = rows.subset(idx);
        match aggregation {
            Aggregation::PerWindow => m,
            Aggregation::SubjectMean => m.group_means(),
        }
    };
    let (mut tr, mut va, mut te) = (pick(train), pick(val), pick(test));
    if standardize {
        let scaler = StandardScaler::fit(&tr)?;
        tr = scaler.transform(&tr);
        va = scaler.transform(&va);
        te = scaler.transform(&te);
    }
    let models = specs
        .iter()
        .map(|spec| {
            let mut clf = ProbClassifier::new(spec.clone());
            clf.fit(&tr)?;
            let p = |m: &FeatureMatrix| -> Result<Vec<f64>> {
                Ok(clf.predict_proba_batch(&m.rows)?.into_iter().map(|p| p[1]).collect())
            };
            Ok((spec.name().to_string(), p(&va)?, p(&te)?))
        })
        .collect::<Result<_>>()?;
    let (scored_test, scored_val) = match aggregation {
        Aggregation::PerWindow => (None, None),
        Aggregation::SubjectMean => (Some((te.groups.clone(), te.labels.clone())), Some(va.labels.clone())),
    };
    Ok(FoldOutput {
        models,
        curve: Vec::new(),
        scored_test,
        scored_val,
    })
}

fn run_fold(
    pipeline: &Pipeline,
    prepared: &Prepared,
    train: &[usize],
    val: &[usize],
    test: &[usize],
    seed: u64,
) -> Result<FoldOutput> {
    let samples = &prepared.samples;
    match (pipeline, &prepared.payload) {
        (Pipeline::Oracle, _) => {
            let truth = |idx: &[usize]| idx.iter().map(|&i| f64::from(samples.labels[i])).collect();
            Ok(FoldOutput {
                models: vec![("oracle".into(), truth(val), truth(test))],
                curve: Vec::new(),
                scored_test: None,
                scored_val: None,
            })
        }
        (Pipeline::Features(p), Payload::Rows(x)) => {
            if p.classifiers.is_empty() {
                return Err(Error::Config("no classifiers configured".into()));
            }
            fit_and_score(&p.classifiers, x, train, val, test, p.standardize, p.aggregation)
        }
        (Pipeline::Cae(p), Payload::Windows(windows)) => {
            if p.classifiers.is_empty() {
                return Err(Error::Config("no classifiers configured".into()));
            }
            let mut train_windows: Vec<usize> = train.to_vec();
            if let Some(max) = p.max_train_windows {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                train_windows.shuffle(&mut rng);
                train_windows.truncate(max);
                train_windows.sort_unstable();
            }
            let inputs: Vec<Tensor> = train_windows.iter().map(|&i| windows[i].clone()).collect();
            let mut cae = build_cae(&p.cae)?;
            cae.train(&inputs, p.cae.epochs, p.cae.batch_size)?;
            let features = cae.encode_batch(windows)?;
            let rows = FeatureMatrix::new(features, samples.labels.clone(), samples.groups.clone())?;
            let mut out = fit_and_score(&p.classifiers, &rows, train, val, test, p.standardize, p.aggregation)?;
            out.curve = cae.loss_history.clone();
            Ok(out)
        }
        (Pipeline::Cnn(p), Payload::Images(images)) => {
            let take = |idx: &[usize]| -> (Vec<Tensor>, Vec<u8>) {
                (
                    idx.iter().map(|&i| images[i].clone()).collect(),
                    idx.iter().map(|&i| samples.labels[i]).collect(),
                )
            };
            let (tr_x, tr_y) = take(train);
            let (va_x, va_y) = take(val);
            let (te_x, _) = take(test);
            let mut model = CnnModel::new(p.cnn.clone())?;
            let mut best: Option<(f64, CnnModel)> = None;
            let select = p.select_by_validation && !va_x.is_empty();
            model.train_monitored(&tr_x, &tr_y, |_, m| {
                if select {
                    let p1 = m.predict_proba(&va_x)?;
                    let pred = Tensor::new(vec![p1.len(), 1], p1)?;
                    let target = Tensor::new(vec![va_y.len(), 1], va_y.iter().map(|&l| f64::from(l)).collect())?;
                    let (loss, _) = bce_loss(&pred, &target)?;
                    if best.as_ref().is_none_or(|(b, _)| loss < *b) {
                        best = Some((loss, m.clone()));
                    }
                }
                Ok(())
            })?;
            let curve = model.loss_history.clone();
            let chosen = best.map_or(model, |(_, m)| m);
            Ok(FoldOutput {
                models: vec![("cnn".into(), chosen.predict_proba(&va_x)?, chosen.predict_proba(&te_x)?)],
                curve,
                scored_test: None,
                scored_val: None,
            })
        }
        (p, _) => Err(Error::Config(format!("the {} pipeline cannot run on this kind of data", p.name()))),
    }
}

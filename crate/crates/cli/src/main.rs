use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eegsz_core::cae::{build_cae, prepare_cae_inputs, write_features_csv, Cae, CaeInput};
use eegsz_core::classifiers::{FeatureMatrix, ProbClassifier};
use eegsz_core::config::RunConfig;
use eegsz_core::cwt::cwt;
use eegsz_core::dataset::{normalize, synth_subject, ClassLabel, DatasetManifest, EegRecording, ManifestEntry, NormMode};
use eegsz_core::dwt::{band_signals, WaveletFilter};
use eegsz_core::eval::{cross_validate_with, write_report, Aggregation, EvalData, EvalReport, FeaturePipeline, Pipeline};
use eegsz_core::image::{line_plot, GrayImage};
use eegsz_core::nn::Checkpoint;
use eegsz_core::stft::{spectrogram_image, stft};
use eegsz_core::{Error, ErrorKind, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "eegsz", version, about = "EEG band decomposition, scalograms, autoencoder features and classifier evaluation")]
struct Cli {
    /// Cap on worker threads (default: one per core).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// key = value run configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Dataset manifest (path,subject_id,label CSV); overrides the config.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic two-class benchmark dataset.
    Synth {
        /// Subjects per class.
        #[arg(long, default_value_t = 40)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Validate a dataset and cache normalized recordings.
    Ingest {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        /// zscore, minmax or none.
        #[arg(long, default_value = "zscore")]
        normalization: String,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Write the five band signals of a subject's channels as CSV.
    Bands {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        subject: String,
        /// Only this channel (default: all).
        #[arg(long)]
        channel: Option<usize>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Bump-wavelet scalogram of one channel as CSV plus PGM/PNG image.
    Scalogram {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        subject: String,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        /// First sample of the analysed span.
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Samples in the span (default: to the end).
        #[arg(long)]
        length: Option<usize>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// STFT magnitude spectrogram of one channel as CSV plus PGM/PNG image.
    Spectrogram {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        subject: String,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train the convolutional autoencoder on every subject in the manifest.
    TrainCae {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Encode every window of the manifest's subjects with a trained CAE.
    Features {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Output CSV.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Fit the configured classifiers on a feature CSV, cross-validate them
    /// and save the fitted models.
    TrainClf {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "FILE")]
        features: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Cross-validate the configured pipeline end to end and write the report.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numeric => 4,
            })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { per_class, seed, out } => cmd_synth(per_class, seed, &out),
        Command::Ingest {
            manifest,
            normalization,
            out,
        } => cmd_ingest(&manifest, &normalization, &out),
        Command::Bands {
            cfg,
            subject,
            channel,
            out,
        } => cmd_bands(&load_config(&cfg)?, &subject, channel, &out),
        Command::Scalogram {
            cfg,
            subject,
            channel,
            start,
            length,
            out,
        } => cmd_scalogram(&load_config(&cfg)?, &subject, channel, start, length, &out),
        Command::Spectrogram {
            cfg,
            subject,
            channel,
            out,
        } => cmd_spectrogram(&load_config(&cfg)?, &subject, channel, &out),
        Command::TrainCae { cfg, out } => cmd_train_cae(&load_config(&cfg)?, &out),
        Command::Features { cfg, checkpoint, out } => cmd_features(&load_config(&cfg)?, &checkpoint, &out),
        Command::TrainClf { cfg, features, out } => cmd_train_clf(&load_config(&cfg)?, &features, &out),
        Command::Evaluate { cfg, out } => cmd_evaluate(&load_config(&cfg)?, &out),
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(m) = &args.manifest {
        cfg.manifest = Some(m.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::file(path, e))
}

fn write_image(img: &GrayImage, dir: &Path, stem: &str) -> Result<()> {
    img.write_pgm(dir.join(format!("{stem}.pgm")))?;
    img.write_png(dir.join(format!("{stem}.png")))
}

fn manifest_of(cfg: &RunConfig) -> Result<DatasetManifest> {
    let path = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Config("no manifest given (use --manifest or manifest = ...)".into()))?;
    DatasetManifest::load(path)
}

fn prepare(rec: EegRecording, cfg: &RunConfig) -> Result<EegRecording> {
    match cfg.normalization {
        Some(mode) => normalize(&rec, mode),
        None => Ok(rec),
    }
}

fn load_recordings(cfg: &RunConfig) -> Result<Vec<EegRecording>> {
    manifest_of(cfg)?
        .load_all()?
        .into_iter()
        .map(|r| prepare(r, cfg))
        .collect()
}

fn load_one(cfg: &RunConfig, subject: &str) -> Result<EegRecording> {
    let manifest = manifest_of(cfg)?;
    let entry = manifest
        .entries
        .iter()
        .find(|e| e.subject_id == subject)
        .ok_or_else(|| Error::Config(format!("subject {subject:?} is not in the manifest")))?;
    prepare(eegsz_core::dataset::load_subject(&entry.path, &entry.subject_id, entry.label)?, cfg)
}

fn channel_of(rec: &EegRecording, channel: usize) -> Result<&[f64]> {
    rec.data
        .get(channel)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::Config(format!("channel {channel} out of range (0..{})", rec.data.len())))
}

fn cmd_synth(per_class: usize, seed: u64, out: &Path) -> Result<()> {
    if per_class == 0 {
        return Err(Error::Config("--per-class must be at least 1".into()));
    }
    let subjects = out.join("subjects");
    create_dir(&subjects)?;
    let mut entries = Vec::new();
    for label in [ClassLabel::Sz, ClassLabel::Hc] {
        for i in 0..per_class {
            let mut rec = synth_subject(label, seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
            rec.subject_id = format!("{}{i:03}", label.name().to_ascii_lowercase());
            let path = subjects.join(format!("{}.txt", rec.subject_id));
            rec.save(&path)?;
            entries.push(ManifestEntry {
                path,
                subject_id: rec.subject_id,
                label,
            });
        }
    }
    DatasetManifest::new(entries)?.save(out.join("manifest.csv"))?;
    println!("wrote {} subjects to {}", 2 * per_class, out.display());
    Ok(())
}

fn cmd_ingest(manifest: &Path, normalization: &str, out: &Path) -> Result<()> {
    let mode: Option<NormMode> = match normalization {
        "none" => None,
        other => Some(other.parse()?),
    };
    let manifest = DatasetManifest::load(manifest)?;
    let subjects = out.join("subjects");
    create_dir(&subjects)?;
    let mut entries = Vec::new();
    for e in &manifest.entries {
        let rec = eegsz_core::dataset::load_subject(&e.path, &e.subject_id, e.label)?;
        let rec = match mode {
            Some(m) => normalize(&rec, m)?,
            None => rec,
        };
        let path = subjects.join(format!("{}.txt", e.subject_id));
        rec.save(&path)?;
        entries.push(ManifestEntry {
            path,
            subject_id: e.subject_id.clone(),
            label: e.label,
        });
    }
    let cached = DatasetManifest::new(entries)?;
    cached.save(out.join("manifest.csv"))?;
    let (sz, hc) = cached.counts();
    println!("ingested {} subjects ({sz} SZ, {hc} HC)", sz + hc);
    Ok(())
}

fn cmd_bands(cfg: &RunConfig, subject: &str, channel: Option<usize>, out: &Path) -> Result<()> {
    let rec = load_one(cfg, subject)?;
    let filter = WaveletFilter::by_name(&cfg.wavelet)?;
    create_dir(out)?;
    let channels: Vec<usize> = match channel {
        Some(c) => vec![c],
        None => (0..rec.data.len()).collect(),
    };
    let mut energies = String::from("channel,delta,theta,alpha,beta,gamma\n");
    for c in channels {
        let set = band_signals(channel_of(&rec, c)?, &filter)?;
        write(&out.join(format!("bands_ch{c:02}.csv")), set.to_csv())?;
        let e = set.energies();
        energies.push_str(&format!("{c},{},{},{},{},{}\n", e[0], e[1], e[2], e[3], e[4]));
    }
    write(&out.join("band_energies.csv"), energies)
}

fn cmd_scalogram(
    cfg: &RunConfig,
    subject: &str,
    channel: usize,
    start: usize,
    length: Option<usize>,
    out: &Path,
) -> Result<()> {
    let rec = load_one(cfg, subject)?;
    let signal = channel_of(&rec, channel)?;
    let end = length.map_or(signal.len(), |l| start.saturating_add(l));
    if start >= end || end > signal.len() {
        return Err(Error::Config(format!(
            "span {start}..{end} does not fit a {}-sample channel",
            signal.len()
        )));
    }
    let bank = cfg.filterbank(rec.fs)?;
    let scal = cwt(&signal[start..end], &bank)?;
    create_dir(out)?;
    write(&out.join("scalogram.csv"), scal.to_csv())?;
    let img = eegsz_core::cwt::scalogram_image(&scal, cfg.image_width, cfg.image_height, cfg.image_scaling)?;
    write_image(&img, out, "scalogram")
}

fn cmd_spectrogram(cfg: &RunConfig, subject: &str, channel: usize, out: &Path) -> Result<()> {
    let rec = load_one(cfg, subject)?;
    let spec = stft(channel_of(&rec, channel)?, &cfg.stft_params(rec.fs))?;
    create_dir(out)?;
    write(&out.join("spectrogram.csv"), spec.to_csv())?;
    let img = spectrogram_image(&spec, cfg.image_width, cfg.image_height, cfg.image_scaling)?;
    write_image(&img, out, "spectrogram")
}

fn cae_windows(cfg: &RunConfig, recs: &[EegRecording]) -> Result<Vec<CaeInput>> {
    let mut all = Vec::new();
    for rec in recs {
        let inputs = prepare_cae_inputs(rec, cfg.cae.window, cfg.cae.window, cfg.cae.scaling)?;
        all.extend(
            inputs
                .into_iter()
                .filter(|w| cfg.cae_windows_per_channel.is_none_or(|m| w.window_index < m)),
        );
    }
    Ok(all)
}

fn cmd_train_cae(cfg: &RunConfig, out: &Path) -> Result<()> {
    let recs = load_recordings(cfg)?;
    let mut windows: Vec<_> = cae_windows(cfg, &recs)?.into_iter().map(|w| w.tensor).collect();
    if let Some(max) = cfg.cae_max_train_windows {
        windows.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.cae.shuffle_seed));
        windows.truncate(max);
    }
    let mut cae = build_cae(&cfg.cae)?;
    cae.train(&windows, cfg.cae.epochs, cfg.cae.batch_size)?;
    create_dir(out)?;
    Checkpoint::new("cae", cfg.cae.seed, cae.clone()).save(out.join("cae.json"))?;
    let mut curve = String::from("epoch,loss,train_loss\n");
    for (i, (a, b)) in cae.loss_history.iter().zip(&cae.train_loss_history).enumerate() {
        curve.push_str(&format!("{},{a},{b}\n", i + 1));
    }
    write(&out.join("loss.csv"), curve)?;
    write_image(&line_plot(&cae.loss_history, 320, 200), out, "loss")?;
    println!(
        "trained on {} windows: {} trainable / {} non-trainable parameters, loss {:.4} -> {:.4}",
        windows.len(),
        cae.trainable_count(),
        cae.non_trainable_count(),
        cae.loss_history.first().copied().unwrap_or(f64::NAN),
        cae.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_features(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    let cae: Cae = Checkpoint::load(checkpoint, "cae")?.body;
    let mut cfg = cfg.clone();
    cfg.cae = cae.config.clone();
    let recs = load_recordings(&cfg)?;
    let inputs = cae_windows(&cfg, &recs)?;
    let tensors: Vec<_> = inputs.iter().map(|w| w.tensor.clone()).collect();
    let features = cae.encode_batch(&tensors)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_features_csv(out, &inputs, &features)?;
    println!("encoded {} windows into {}", inputs.len(), out.display());
    Ok(())
}

fn print_summary(report: &EvalReport) {
    println!(
        "{}-fold {:?}-wise CV of the {} pipeline over {} samples from {} subjects",
        report.k, report.split, report.pipeline, report.n_samples, report.n_groups
    );
    println!("model  accuracy        precision  recall  f1      auc     kappa");
    for m in &report.models {
        println!(
            "{:<6} {:.4} ± {:.4}  {:.4}     {:.4}  {:.4}  {}  {:.4}",
            m.name,
            m.mean.accuracy,
            m.std.accuracy,
            m.mean.precision,
            m.mean.recall,
            m.mean.f1,
            m.mean.auc.map_or("  n/a ".to_string(), |a| format!("{a:.4}")),
            m.mean.kappa
        );
    }
}

fn cmd_train_clf(cfg: &RunConfig, features: &Path, out: &Path) -> Result<()> {
    let x = FeatureMatrix::from_features_csv(features)?;
    let specs = cfg.classifier_specs()?;
    let pipeline = Pipeline::Features(FeaturePipeline {
        classifiers: specs.clone(),
        standardize: true,
        aggregation: cfg.aggregation,
    });
    let report = cross_validate_with(&pipeline, EvalData::Features(&x), &cfg.cv_options())?;
    write_report(&report, out)?;

    let train = match cfg.aggregation {
        Aggregation::PerWindow => x,
        Aggregation::SubjectMean => x.group_means(),
    };
    let scaler = eegsz_core::classifiers::StandardScaler::fit(&train)?;
    let scaled = scaler.transform(&train);
    for spec in specs {
        let mut clf = ProbClassifier::new(spec);
        clf.fit(&scaled)?;
        let name = clf.spec.name();
        Checkpoint::new("classifier", cfg.classifier_seed, (scaler.clone(), clf))
            .save(out.join(format!("classifier_{name}.json")))?;
    }
    print_summary(&report);
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let recs = load_recordings(cfg)?;
    let pipeline = match cfg.pipeline.as_str() {
        "cae" => Pipeline::Cae(cfg.cae_pipeline()?),
        "cnn" => Pipeline::Cnn(cfg.cnn_pipeline()),
        other => return Err(Error::Config(format!("unknown pipeline {other:?}"))),
    };
    let report = cross_validate_with(&pipeline, EvalData::Recordings(&recs), &cfg.cv_options())?;
    write_report(&report, out)?;
    write(&out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    print_summary(&report);
    Ok(())
}

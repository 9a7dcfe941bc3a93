//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! fails if any of criteria 1-9 fails. Criterion 10 needs a real dataset
//! (`EEGSZ_MANIFEST=/path/to/manifest.csv`) and never fails the run.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use eegsz_core::cae::{build_cae, prepare_cae_inputs, BandScaling, CaeConfig};
use eegsz_core::classifiers::{ClassifierSpec, CnnConfig};
use eegsz_core::cwt::{cwt, CwtFilterBank};
use eegsz_core::dataset::{synth_subject, ClassLabel, DatasetManifest, EegRecording, FS, N_SAMPLES};
use eegsz_core::dwt::{band_signals, dwt_decompose, dwt_reconstruct, WaveletFilter};
use eegsz_core::eval::{
    cohens_kappa, cross_validate, metrics, roc_auc, roc_auc_trapezoid, Aggregation, CaePipeline, CnnPipeline,
    ConfusionMatrix, EvalData, EvalReport, Pipeline,
};
use eegsz_core::fft::fft;
use eegsz_core::image::Scaling;
use eegsz_core::nn::{grad_check, Corruption, GradCheckOptions, Network, Tensor};
use eegsz_core::stft::{stft, StftParams};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn tone(freq: f64, len: usize) -> Vec<f64> {
    (0..len).map(|n| (2.0 * PI * freq * n as f64 / FS).sin()).collect()
}

fn benchmark() -> Vec<EegRecording> {
    (0..40u64)
        .flat_map(|s| [synth_subject(ClassLabel::Sz, s), synth_subject(ClassLabel::Hc, s)])
        .collect()
}

fn dwt_reconstruction() -> Outcome {
    let start = Instant::now();
    let filter = WaveletFilter::db4();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut max_err, mut max_energy) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let x: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = dwt_decompose(&x, &filter, 4).unwrap();
        let y = dwt_reconstruct(&d, &filter).unwrap();
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let e: f64 = x.iter().map(|v| v * v).sum();
        max_err = max_err.max(err);
        max_energy = max_energy.max((d.energy() - e).abs() / e);
    }
    let took = start.elapsed();
    outcome(
        max_err < 1e-8 && max_energy < 1e-8 && took < Duration::from_secs(5),
        format!("max |x - x'| {max_err:.2e}, energy drift {max_energy:.2e}, {took:.2?}"),
    )
}

fn band_placement() -> Outcome {
    let filter = WaveletFilter::db4();
    let mut hits = 0;
    let mut found = Vec::new();
    for (expected, f) in [2.0, 6.0, 10.0, 20.0, 40.0].into_iter().enumerate() {
        let e = band_signals(&tone(f, N_SAMPLES), &filter).unwrap().energies();
        let best = (0..5).max_by(|&a, &b| e[a].total_cmp(&e[b])).unwrap();
        hits += usize::from(best == expected);
        found.push(best);
    }
    outcome(hits == 5, format!("{hits}/5 tones in their band, argmax bands {found:?}"))
}

fn fft_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 64;
    let x: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let got = fft(&x).unwrap();
    let mut max_err = 0.0f64;
    for (k, g) in got.iter().enumerate() {
        let naive: Complex64 = x
            .iter()
            .enumerate()
            .map(|(t, v)| v * Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / n as f64))
            .sum();
        max_err = max_err.max((g - naive).norm());
    }
    let time: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    let freq: f64 = got.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
    let parseval = (time - freq).abs() / time;
    outcome(
        max_err < 1e-10 && parseval < 1e-10,
        format!("max bin error {max_err:.2e}, Parseval {parseval:.2e}"),
    )
}

fn stft_shape() -> Outcome {
    let spec = stft(&tone(10.0, N_SAMPLES), &StftParams::default()).unwrap();
    let (frames, bins) = (spec.n_frames(), spec.n_bins());
    outcome(frames == 59 && bins == 257, format!("{frames} frames x {bins} bins"))
}

fn cwt_ridge() -> Outcome {
    let bank = CwtFilterBank::eeg_default();
    let step = 1.0 / 12.0;
    let mut worst = 0.0f64;
    for f in [2.0, 8.0, 20.0, 40.0] {
        let s = cwt(&tone(f, 2048), &bank).unwrap();
        let cols = s.n_samples();
        for c in cols / 4..3 * cols / 4 {
            let row = (0..s.n_scales())
                .max_by(|&a, &b| s.magnitudes[a][c].total_cmp(&s.magnitudes[b][c]))
                .unwrap();
            worst = worst.max((s.frequencies[row] / f).log2().abs());
        }
    }
    outcome(
        bank.len() == 80 && worst <= step + 1e-12,
        format!("{} scales, worst ridge offset {:.3} voice steps", bank.len(), worst / step),
    )
}

fn gradient_fidelity() -> Outcome {
    type Build = fn(u64) -> Network;
    let cases: [(&str, usize, Build); 7] = [
        ("conv2d", 2, |s| Network::builder(&[2, 5, 9], s).conv2d(3, (3, 5), (1, 2), (1, 2)).build().unwrap()),
        ("conv_transpose2d", 2, |s| {
            Network::builder(&[3, 4, 5], s).conv_transpose2d(2, (3, 5), (1, 2), (1, 2), (0, 1)).build().unwrap()
        }),
        ("maxpool", 2, |s| {
            Network::builder(&[2, 6, 6], s).conv2d(2, (3, 3), (1, 1), (1, 1)).maxpool(2).build().unwrap()
        }),
        ("dense+sigmoid", 3, |s| Network::builder(&[6], s).dense(4).sigmoid().build().unwrap()),
        ("batchnorm", 3, |s| Network::builder(&[3, 4, 4], s).batchnorm().build().unwrap()),
        ("batchnorm flat", 4, |s| Network::builder(&[5], s).dense(4).batchnorm().build().unwrap()),
        ("leaky_relu+flatten+reshape", 2, |s| {
            Network::builder(&[2, 3, 4], s)
                .leaky_relu(0.2)
                .flatten()
                .dense(6)
                .reshape(&[1, 2, 3])
                .conv2d(1, (1, 3), (1, 1), (0, 1))
                .build()
                .unwrap()
        }),
    ];
    let mut worst = (0.0f64, String::new());
    let mut all = true;
    for (name, batch, build) in cases {
        for seed in 0..5 {
            let net = build(seed);
            let mut shape = vec![batch];
            shape.extend_from_slice(&net.input_shape);
            let x = random_tensor(&shape, 100 + seed);
            let opts = GradCheckOptions { seed, ..GradCheckOptions::default() };
            let r = grad_check(&net, &x, &opts).unwrap();
            all &= r.passed();
            if r.max_rel_error > worst.0 {
                worst = (r.max_rel_error, format!("{name} seed {seed}"));
            }
        }
    }
    let net = Network::builder(&[4], 0).dense(3).sigmoid().build().unwrap();
    let opts = GradCheckOptions {
        corruption: Some(Corruption::ScaleParamGrad { param: 0, factor: 1.5 }),
        ..GradCheckOptions::default()
    };
    let mutant_caught = !grad_check(&net, &random_tensor(&[2, 4], 9), &opts).unwrap().passed();
    outcome(
        all && mutant_caught,
        format!("worst rel error {:.2e} ({}), corrupted backward caught: {mutant_caught}", worst.0, worst.1),
    )
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn cae_training(recs: &[EegRecording]) -> Outcome {
    let config = CaeConfig::default();
    let mut windows: Vec<Tensor> = recs
        .iter()
        .flat_map(|r| prepare_cae_inputs(r, config.window, config.window, BandScaling::SharedScale).unwrap())
        .map(|w| w.tensor)
        .collect();
    windows.shuffle(&mut ChaCha8Rng::seed_from_u64(7));
    windows.truncate(128);
    let mut cae = build_cae(&config).unwrap();
    let params = cae.trainable_count();
    cae.train(&windows, 20, config.batch_size).unwrap();
    let first = cae.loss_history[0];
    let last = *cae.loss_history.last().unwrap();
    outcome(
        last <= 0.5 * first && (30_000..=50_000).contains(&params),
        format!(
            "loss {first:.1} -> {last:.1} (ratio {:.3}) over {} epochs on 128 windows; {params} trainable parameters",
            last / first,
            cae.loss_history.len()
        ),
    )
}

fn pair_counting_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

fn metric_oracles() -> Outcome {
    let cm = ConfusionMatrix { tp: 40, fp: 10, tn: 45, fn_: 5 };
    let m = metrics(&cm).unwrap();
    let k = cohens_kappa(&cm).unwrap().value;
    let point = (m.accuracy - 0.85).abs() < 1e-12
        && (m.precision - 0.8).abs() < 1e-12
        && (m.recall - 0.8889).abs() < 1e-4
        && (m.f1 - 0.8421).abs() < 1e-4
        && (k - 0.7).abs() < 1e-9;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(4..60);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // Coarse scores in half the cases so ties are exercised
        let scores: Vec<f64> = (0..n)
            .map(|_| if case % 2 == 0 { rng.random_range(0..5) as f64 } else { rng.random::<f64>() })
            .collect();
        let oracle = pair_counting_auc(&scores, &labels);
        let a = roc_auc(&scores, &labels).unwrap();
        let t = roc_auc_trapezoid(&scores, &labels).unwrap();
        worst = worst.max((a - oracle).abs()).max((t - oracle).abs());
    }
    outcome(
        point && worst <= 1e-12,
        format!(
            "acc {:.4} prec {:.4} rec {:.4} f1 {:.4} kappa {k:.9}; AUC max deviation {worst:.1e} over 100 cases",
            m.accuracy, m.precision, m.recall, m.f1
        ),
    )
}

fn cae_pipeline() -> CaePipeline {
    let cae = CaeConfig { epochs: 10, ..CaeConfig::default() };
    let mut p = CaePipeline::new(
        cae,
        vec![ClassifierSpec::knn(), ClassifierSpec::svc(0), ClassifierSpec::forest(0), ClassifierSpec::default_vote(0)],
    );
    p.windows_per_channel = Some(6);
    p.max_train_windows = Some(256);
    p.aggregation = Aggregation::SubjectMean;
    p
}

fn accuracy(report: &EvalReport, model: &str) -> f64 {
    report.model(model).map_or(f64::NAN, |m| m.mean.accuracy)
}

fn end_to_end(recs: &[EegRecording]) -> Outcome {
    let start = Instant::now();
    let cae = cross_validate(&Pipeline::Cae(cae_pipeline()), EvalData::Recordings(recs), 5, 0).unwrap();
    let cnn_pipeline = CnnPipeline {
        cnn: CnnConfig { height: 64, width: 64, epochs: 20, batch_size: 8, ..CnnConfig::default() },
        images_per_subject: 4,
        image_window: 1024,
        scaling: Scaling::Linear,
        select_by_validation: true,
    };
    let cnn = cross_validate(&Pipeline::Cnn(cnn_pipeline), EvalData::Recordings(recs), 5, 0).unwrap();
    let took = start.elapsed();

    let members = ["knn", "svc", "rf"].map(|m| accuracy(&cae, m));
    let vc = accuracy(&cae, "vc");
    let cnn_acc = accuracy(&cnn, "cnn");
    outcome(
        vc >= 0.95 && members.iter().all(|&a| a >= 0.90) && cnn_acc >= 0.90 && took < Duration::from_secs(900),
        format!(
            "CAE knn {:.3} svc {:.3} rf {:.3} vc {vc:.3}; CNN {cnn_acc:.3}; {took:.1?}",
            members[0], members[1], members[2]
        ),
    )
}

fn real_dataset(manifest: &str) -> Outcome {
    let recs = match DatasetManifest::load(manifest).and_then(|m| m.load_all()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("cannot load {manifest}: {e}")),
    };
    match cross_validate(&Pipeline::Cae(cae_pipeline()), EvalData::Recordings(&recs), 5, 0) {
        Ok(report) => {
            let vc = accuracy(&report, "vc");
            outcome(
                vc >= 0.90,
                format!(
                    "CAE+VC {vc:.3} (reference 0.985) with {:?}-wise 5-fold splits over {} subjects",
                    report.split, report.n_groups
                ),
            )
        }
        Err(e) => outcome(false, format!("evaluation failed: {e}")),
    }
}

fn main() {
    let recs = benchmark();
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let required: Vec<(usize, &str, Check)> = vec![
        (1, "DWT perfect reconstruction", Box::new(dwt_reconstruction)),
        (2, "band placement of pure tones", Box::new(band_placement)),
        (3, "FFT against naive DFT", Box::new(fft_oracle)),
        (4, "STFT shape", Box::new(stft_shape)),
        (5, "CWT ridge and bank size", Box::new(cwt_ridge)),
        (6, "gradient fidelity", Box::new(gradient_fidelity)),
        (7, "CAE training and size", Box::new(|| cae_training(&recs))),
        (8, "metric oracles", Box::new(metric_oracles)),
        (9, "end-to-end synthetic benchmark", Box::new(|| end_to_end(&recs))),
    ];
    let mut failed = Vec::new();
    for (id, name, check) in &required {
        let o = check();
        println!("criterion {id} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(*id);
        }
    }
    match std::env::var("EEGSZ_MANIFEST") {
        Ok(path) => {
            let o = real_dataset(&path);
            println!(
                "criterion 10 {}: real dataset (stretch, not enforced): {}",
                if o.pass { "PASS" } else { "FAIL" },
                o.detail
            );
        }
        Err(_) => println!("criterion 10 SKIP: real dataset (stretch): set EEGSZ_MANIFEST to run"),
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

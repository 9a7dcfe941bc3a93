use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn eegsz(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eegsz"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn eegsz")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = eegsz(args, cwd);
    assert!(
        out.status.success(),
        "eegsz {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    for dir in ["a", "b"] {
        ok(&["synth", "--per-class", "2", "--seed", "7", "--out", dir], tmp.path());
    }
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(fs::read(a.join("manifest.csv")).unwrap(), fs::read(b.join("manifest.csv")).unwrap());
    let fa = read_dir_bytes(&a.join("subjects"));
    assert_eq!(fa.len(), 4);
    assert_eq!(fa, read_dir_bytes(&b.join("subjects")));

    ok(&["synth", "--per-class", "2", "--seed", "8", "--out", "c"], tmp.path());
    assert_ne!(fa, read_dir_bytes(&tmp.path().join("c/subjects")));
}

#[test]
fn scalogram_image_has_configured_size() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--per-class", "1", "--out", "d"], tmp.path());
    ok(
        &[
            "scalogram", "--manifest", "d/manifest.csv", "--subject", "hc000", "--channel", "2",
            "--length", "1024", "--set", "image.width=96", "--set", "image.height=64", "--out", "s",
        ],
        tmp.path(),
    );
    let pgm = fs::read(tmp.path().join("s/scalogram.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n96 64\n255\n"));
    assert_eq!(pgm.len(), b"P5\n96 64\n255\n".len() + 96 * 64);
    let csv = fs::read_to_string(tmp.path().join("s/scalogram.csv")).unwrap();
    // 80 scales for 0.5-50 Hz at 12 voices per octave, plus a header row
    assert_eq!(csv.lines().count(), 81);
    assert!(tmp.path().join("s/scalogram.png").exists());
}

#[test]
fn bands_and_spectrogram_write_csv() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--per-class", "1", "--out", "d"], tmp.path());
    ok(&["bands", "--manifest", "d/manifest.csv", "--subject", "sz000", "--channel", "0", "--out", "b"], tmp.path());
    let bands = fs::read_to_string(tmp.path().join("b/bands_ch00.csv")).unwrap();
    assert_eq!(bands.lines().next().unwrap(), "delta,theta,alpha,beta,gamma");
    assert_eq!(bands.lines().count(), 7681);
    ok(&["spectrogram", "--manifest", "d/manifest.csv", "--subject", "sz000", "--out", "sp"], tmp.path());
    assert!(tmp.path().join("sp/spectrogram.pgm").exists());
}

#[test]
fn cae_features_and_classifiers_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    ok(&["synth", "--per-class", "5", "--seed", "1", "--out", "d"], p);
    fs::write(
        p.join("run.cfg"),
        "manifest = d/manifest.csv\n\
         cae.epochs = 2\n\
         cae.windows_per_channel = 1\n\
         cae.max_train_windows = 48\n\
         rf.trees = 10\n\
         aggregation = subject-mean\n",
    )
    .unwrap();

    let out = ok(&["train-cae", "--config", "run.cfg", "--out", "m"], p);
    assert!(out.contains("trainable"), "{out}");
    assert!(p.join("m/cae.json").exists());
    assert_eq!(fs::read_to_string(p.join("m/loss.csv")).unwrap().lines().count(), 3);

    ok(&["features", "--config", "run.cfg", "--checkpoint", "m/cae.json", "--out", "f/features.csv"], p);
    let feats = fs::read_to_string(p.join("f/features.csv")).unwrap();
    // 10 subjects x 16 channels x 1 window
    assert_eq!(feats.lines().count(), 1 + 160);

    ok(&["train-clf", "--config", "run.cfg", "--features", "f/features.csv", "--out", "c"], p);
    for m in ["knn", "svc", "rf", "vc"] {
        assert!(p.join(format!("c/classifier_{m}.json")).exists());
    }

    ok(&["evaluate", "--config", "run.cfg", "--threads", "1", "--out", "r"], p);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("r/report.json")).unwrap()).unwrap();
    assert_eq!(report["k"], 5);
    let models = report["models"].as_array().unwrap();
    assert_eq!(models.len(), 4);
    for m in models {
        assert_eq!(m["folds"].as_array().unwrap().len(), 5);
        for key in ["accuracy", "precision", "recall", "f1", "auc", "kappa"] {
            assert!(m["mean"].get(key).is_some(), "missing {key}");
        }
    }
    let csv = fs::read_to_string(p.join("r/report.csv")).unwrap();
    assert!(csv.starts_with("model,fold,accuracy,precision,recall,f1,auc,kappa,"));
    assert!(p.join("r/roc_vc.png").exists());
    assert!(p.join("r/confusion_knn.pgm").exists());
}

#[test]
fn help_is_available_for_every_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["--help"], tmp.path());
    for sub in [
        "synth", "ingest", "bands", "scalogram", "spectrogram", "train-cae", "features", "train-clf", "evaluate",
    ] {
        let text = ok(&[sub, "--help"], tmp.path());
        assert!(text.contains("Usage"), "{sub}: {text}");
    }
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    assert_eq!(eegsz(&["synth", "--out", "x", "--no-such-flag"], p).status.code(), Some(2));
    assert_eq!(eegsz(&["evaluate", "--out", "x", "--set", "bogus.key=1"], p).status.code(), Some(2));

    fs::write(p.join("broken.txt"), "1.0 2.0\nnot-a-number\n").unwrap();
    fs::write(p.join("manifest.csv"), "path,subject_id,label\nbroken.txt,s1,0\n").unwrap();
    let out = eegsz(&["ingest", "--manifest", "manifest.csv", "--out", "i"], p);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ingest_normalizes_and_rewrites_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    ok(&["synth", "--per-class", "1", "--out", "d"], p);
    let out = ok(&["ingest", "--manifest", "d/manifest.csv", "--normalization", "zscore", "--out", "i"], p);
    assert!(out.contains("1 SZ, 1 HC"), "{out}");
    let text = fs::read_to_string(p.join("i/subjects/sz000.txt")).unwrap();
    let first: Vec<f64> = text.lines().map(|l| l.split_whitespace().next().unwrap().parse().unwrap()).collect();
    let mean = first.iter().sum::<f64>() / first.len() as f64;
    assert!(mean.abs() < 1e-9);
}

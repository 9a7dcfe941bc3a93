use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::cv::EvalReport;
use super::metrics::roc_curve;
use crate::classifiers::predictions_csv;
use crate::error::{Error, Result};
use crate::image::{confusion_plot, line_plot, roc_plot};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// One row per model and fold, then `mean` and `std` rows per model.
pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("model,fold,accuracy,precision,recall,f1,auc,kappa,tp,fp,tn,fn\n");
    for m in &report.models {
        for f in &m.folds {
            let c = &f.confusion;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                m.name,
                f.fold,
                f.metrics.accuracy,
                f.metrics.precision,
                f.metrics.recall,
                f.metrics.f1,
                opt(f.auc),
                f.kappa.value,
                c.tp,
                c.fp,
                c.tn,
                c.fn_
            );
        }
        for (tag, s) in [("mean", &m.mean), ("std", &m.std)] {
            let _ = writeln!(
                out,
                "{},{tag},{},{},{},{},{},{},,,,",
                m.name,
                s.accuracy,
                s.precision,
                s.recall,
                s.f1,
                opt(s.auc),
                s.kappa
            );
        }
    }
    out
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

/// Writes `report.json`, `report.csv` and, per model, its out-of-fold
/// predictions plus confusion-matrix and ROC plots (PGM and PNG). Training
/// curves of each fold are plotted when present.
pub fn write_report(report: &EvalReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    write(&dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    write(&dir.join("report.csv"), report_csv(report))?;
    for m in &report.models {
        let ids: Vec<String> = m.predictions.iter().map(|p| p.sample_id.clone()).collect();
        let labels: Vec<u8> = m.predictions.iter().map(|p| p.label).collect();
        let p1: Vec<f64> = m.predictions.iter().map(|p| p.p1).collect();
        write(&dir.join(format!("predictions_{}.csv", m.name)), predictions_csv(&ids, &labels, &p1)?)?;

        let cm = confusion_plot(m.pooled.grid(), 64);
        cm.write_pgm(dir.join(format!("confusion_{}.pgm", m.name)))?;
        cm.write_png(dir.join(format!("confusion_{}.png", m.name)))?;
        if let Ok(points) = roc_curve(&p1, &labels) {
            let roc = roc_plot(&points, 256);
            roc.write_pgm(dir.join(format!("roc_{}.pgm", m.name)))?;
            roc.write_png(dir.join(format!("roc_{}.png", m.name)))?;
        }
    }
    for (f, curve) in report.training_curves.iter().enumerate().filter(|(_, c)| !c.is_empty()) {
        line_plot(curve, 320, 200).write_png(dir.join(format!("training_loss_fold{f}.png")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::FeatureMatrix;
    use crate::eval::{cross_validate, EvalData, Pipeline};

    #[test]
    fn artifacts_are_written() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let labels = (0..20).map(|i| u8::from(i >= 10)).collect();
        let groups = (0..20).map(|i| format!("s{i}")).collect();
        let x = FeatureMatrix::new(rows, labels, groups).unwrap();
        let r = cross_validate(&Pipeline::Oracle, EvalData::Features(&x), 5, 0).unwrap();
        let csv = report_csv(&r);
        assert_eq!(csv.lines().count(), 1 + 5 + 2);
        assert!(csv.lines().nth(6).unwrap().starts_with("oracle,mean,1,1,1,1,1,1"));

        let dir = std::env::temp_dir().join(format!("eegsz-report-{}", std::process::id()));
        write_report(&r, &dir).unwrap();
        for name in ["report.json", "report.csv", "predictions_oracle.csv", "confusion_oracle.png", "roc_oracle.pgm"] {
            assert!(dir.join(name).exists(), "{name}");
        }
        let back: crate::eval::EvalReport =
            serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
        assert_eq!(back, r);
        fs::remove_dir_all(&dir).unwrap();
    }
}

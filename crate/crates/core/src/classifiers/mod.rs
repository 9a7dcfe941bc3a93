//! Probabilistic binary classifiers over feature rows, and the scalogram CNN.
//!
//! Every classifier reports `[p0, p1]` with `p1` the probability of class 1
//! (HC). Predicted class is `argmax`, with ties going to class 1.

mod cnn;
mod forest;
mod knn;
mod svc;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cnn::{build_cnn2d, train_cnn, CnnConfig, CnnModel};
pub use forest::{gini, rf_fit, DecisionTree, RandomForest, TreeNode};
pub use knn::{knn_fit, Knn};
pub use svc::{svc_fit, svc_objective, LinearSvc, PlattScaling};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    /// Subject id per row, for leakage-safe splitting.
    pub groups: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<u8>, groups: Vec<String>) -> Result<Self> {
        if rows.len() != labels.len() || rows.len() != groups.len() {
            return Err(Error::Size(format!(
                "{} rows, {} labels, {} groups",
                rows.len(),
                labels.len(),
                groups.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Size("feature rows have different lengths".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("feature matrix contains non-finite values".into()));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Domain(format!("label {l} is not 0 or 1")));
        }
        Ok(FeatureMatrix { rows, labels, groups })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i].clone()).collect(),
        }
    }

    /// Class counts `(n0, n1)`.
    pub fn counts(&self) -> (usize, usize) {
        let n1 = self.labels.iter().filter(|&&l| l == 1).count();
        (self.len() - n1, n1)
    }

    /// One row per group holding the mean of its rows, in order of first
    /// appearance.
    pub fn group_means(&self) -> FeatureMatrix {
        let mut order: Vec<&str> = Vec::new();
        let mut acc: BTreeMap<&str, (Vec<f64>, usize, u8)> = BTreeMap::new();
        for ((row, &label), group) in self.rows.iter().zip(&self.labels).zip(&self.groups) {
            let entry = acc.entry(group).or_insert_with(|| {
                order.push(group);
                (vec![0.0; row.len()], 0, label)
            });
            entry.0.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            entry.1 += 1;
        }
        let mut out = FeatureMatrix {
            rows: Vec::new(),
            labels: Vec::new(),
            groups: Vec::new(),
        };
        for g in order {
            let (sum, n, label) = &acc[g];
            out.rows.push(sum.iter().map(|v| v / *n as f64).collect());
            out.labels.push(*label);
            out.groups.push(g.to_string());
        }
        out
    }

    /// Reads the `subject_id,channel,window_index,label,f0..` layout.
    pub fn from_features_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)?;
        let (mut rows, mut labels, mut groups) = (Vec::new(), Vec::new(), Vec::new());
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                let token = record.get(i).unwrap_or("");
                token.trim().parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: line + 2,
                    token: token.to_string(),
                })
            };
            if record.len() < 5 {
                return Err(Error::Size(format!("line {}: no feature columns", line + 2)));
            }
            groups.push(record[0].to_string());
            labels.push(parse(3)? as u8);
            rows.push((4..record.len()).map(parse).collect::<Result<_>>()?);
        }
        FeatureMatrix::new(rows, labels, groups)
    }
}

/// Per-column standardization fitted on training rows. Constant columns
/// are centred but not scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl StandardScaler {
    pub fn fit(x: &FeatureMatrix) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Empty("cannot fit a scaler on zero rows".into()));
        }
        let n = x.len() as f64;
        let d = x.dim();
        let mut mean = vec![0.0; d];
        for row in &x.rows {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for row in &x.rows {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var.iter().map(|v| if *v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
        Ok(StandardScaler { mean, scale })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, x: &FeatureMatrix) -> FeatureMatrix {
        FeatureMatrix {
            rows: x.rows.iter().map(|r| self.transform_row(r)).collect(),
            labels: x.labels.clone(),
            groups: x.groups.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Knn {
        k: usize,
    },
    LinearSvc {
        c: f64,
        epochs: usize,
        seed: u64,
    },
    RandomForest {
        trees: usize,
        max_depth: Option<usize>,
        seed: u64,
    },
    SoftVote {
        members: Vec<ClassifierSpec>,
    },
}

impl ClassifierSpec {
    pub fn knn() -> Self {
        ClassifierSpec::Knn { k: 5 }
    }

    pub fn svc(seed: u64) -> Self {
        ClassifierSpec::LinearSvc { c: 1.0, epochs: 50, seed }
    }

    pub fn forest(seed: u64) -> Self {
        ClassifierSpec::RandomForest {
            trees: 100,
            max_depth: None,
            seed,
        }
    }

    /// KNN, linear SVC and random forest under one soft vote.
    pub fn default_vote(seed: u64) -> Self {
        ClassifierSpec::SoftVote {
            members: vec![Self::knn(), Self::svc(seed), Self::forest(seed)],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierSpec::Knn { .. } => "knn",
            ClassifierSpec::LinearSvc { .. } => "svc",
            ClassifierSpec::RandomForest { .. } => "rf",
            ClassifierSpec::SoftVote { .. } => "vc",
        }
    }

    pub fn from_name(name: &str, seed: u64) -> Result<Self> {
        match name {
            "knn" => Ok(Self::knn()),
            "svc" => Ok(Self::svc(seed)),
            "rf" => Ok(Self::forest(seed)),
            "vc" => Ok(Self::default_vote(seed)),
            other => Err(Error::Config(format!("unknown classifier {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum FittedModel {
    Knn(Knn),
    LinearSvc(LinearSvc),
    RandomForest(RandomForest),
    SoftVote(Vec<ProbClassifier>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbClassifier {
    pub spec: ClassifierSpec,
    pub fitted: Option<FittedModel>,
}

fn check_trainable(x: &FeatureMatrix) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Empty("training set has no rows".into()));
    }
    Ok(())
}

impl ProbClassifier {
    pub fn new(spec: ClassifierSpec) -> Self {
        ProbClassifier { spec, fitted: None }
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    pub fn fit(&mut self, x: &FeatureMatrix) -> Result<()> {
        check_trainable(x)?;
        let model = match &self.spec {
            ClassifierSpec::Knn { k } => FittedModel::Knn(Knn::fit(x, *k)?),
            ClassifierSpec::LinearSvc { c, epochs, seed } => {
                FittedModel::LinearSvc(LinearSvc::fit(x, *c, *epochs, *seed)?)
            }
            ClassifierSpec::RandomForest { trees, max_depth, seed } => {
                FittedModel::RandomForest(RandomForest::fit(x, *trees, *max_depth, *seed)?)
            }
            ClassifierSpec::SoftVote { members } => {
                if members.len() < 2 {
                    return Err(Error::Config("a soft vote needs at least two members".into()));
                }
                let fitted = members
                    .iter()
                    .map(|spec| {
                        let mut m = ProbClassifier::new(spec.clone());
                        m.fit(x).map(|_| m)
                    })
                    .collect::<Result<_>>()?;
                FittedModel::SoftVote(fitted)
            }
        };
        self.fitted = Some(model);
        Ok(())
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<[f64; 2]> {
        let model = self
            .fitted
            .as_ref()
            .ok_or_else(|| Error::State(format!("{} classifier is not fitted", self.spec.name())))?;
        let p1 = match model {
            FittedModel::Knn(m) => m.p1(row)?,
            FittedModel::LinearSvc(m) => m.p1(row)?,
            FittedModel::RandomForest(m) => m.p1(row)?,
            FittedModel::SoftVote(members) => return soft_vote(members, row),
        };
        Ok([1.0 - p1, p1])
    }

    pub fn predict_proba_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
        use rayon::prelude::*;
        rows.par_iter().map(|r| self.predict_proba(r)).collect()
    }

    pub fn predict(&self, row: &[f64]) -> Result<u8> {
        Ok(decide(self.predict_proba(row)?))
    }
}

/// Class with the larger probability; ties go to class 1.
pub fn decide(p: [f64; 2]) -> u8 {
    u8::from(p[1] >= p[0])
}

/// Unweighted mean of the members' probability vectors.
pub fn soft_vote(members: &[ProbClassifier], row: &[f64]) -> Result<[f64; 2]> {
    if members.len() < 2 {
        return Err(Error::Config("a soft vote needs at least two members".into()));
    }
    let mut acc = [0.0; 2];
    for m in members {
        let p = m.predict_proba(row)?;
        acc[0] += p[0];
        acc[1] += p[1];
    }
    let n = members.len() as f64;
    Ok([acc[0] / n, acc[1] / n])
}

pub fn knn_predict_proba(model: &ProbClassifier, row: &[f64]) -> Result<[f64; 2]> {
    model.predict_proba(row)
}

pub fn svc_predict_proba(model: &ProbClassifier, row: &[f64]) -> Result<[f64; 2]> {
    model.predict_proba(row)
}

pub fn rf_predict_proba(model: &ProbClassifier, row: &[f64]) -> Result<[f64; 2]> {
    model.predict_proba(row)
}

/// `sample_id,label,p1,predicted` rows.
pub fn predictions_csv(ids: &[String], labels: &[u8], p1: &[f64]) -> Result<String> {
    if ids.len() != labels.len() || ids.len() != p1.len() {
        return Err(Error::Size("prediction columns differ in length".into()));
    }
    let mut out = String::from("sample_id,label,p1,predicted\n");
    for ((id, l), p) in ids.iter().zip(labels).zip(p1) {
        let _ = writeln!(out, "{id},{l},{p},{}", decide([1.0 - p, *p]));
    }
    Ok(out)
}

fn check_row(dim: usize, row: &[f64]) -> Result<()> {
    if row.len() != dim {
        return Err(Error::Size(format!("expected {dim} features, got {}", row.len())));
    }
    Ok(())
}

fn require_both_classes(x: &FeatureMatrix) -> Result<()> {
    let (n0, n1) = x.counts();
    if n0 == 0 || n1 == 0 {
        return Err(Error::DegenerateLabels(format!(
            "training data has {n0} rows of class 0 and {n1} of class 1"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> FeatureMatrix {
        let rows = vec![
            vec![-2.0, 0.0],
            vec![-1.5, 1.0],
            vec![-3.0, -1.0],
            vec![2.0, 0.5],
            vec![1.5, -0.5],
            vec![3.0, 1.0],
        ];
        let labels = vec![0, 0, 0, 1, 1, 1];
        let groups = (0..6).map(|i| format!("s{}", i / 2)).collect();
        FeatureMatrix::new(rows, labels, groups).unwrap()
    }

    #[test]
    fn matrix_validation() {
        assert!(FeatureMatrix::new(vec![vec![1.0]], vec![0, 1], vec!["a".into()]).is_err());
        assert!(FeatureMatrix::new(vec![vec![f64::NAN]], vec![0], vec!["a".into()]).is_err());
        assert!(FeatureMatrix::new(vec![vec![1.0]], vec![2], vec!["a".into()]).is_err());
        let x = toy();
        assert_eq!((x.len(), x.dim(), x.counts()), (6, 2, (3, 3)));
        let means = x.group_means();
        assert_eq!(means.groups, vec!["s0", "s1", "s2"]);
        assert_eq!(means.rows[0], vec![-1.75, 0.5]);
    }

    #[test]
    fn scaler_standardizes_training_columns() {
        let x = toy();
        let s = StandardScaler::fit(&x).unwrap();
        let t = s.transform(&x);
        for j in 0..2 {
            let col: Vec<f64> = t.rows.iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / 6.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
        let constant = FeatureMatrix::new(vec![vec![3.0]; 2], vec![0, 1], vec!["a".into(); 2]).unwrap();
        let s = StandardScaler::fit(&constant).unwrap();
        assert_eq!(s.transform_row(&[3.0]), vec![0.0]);
    }

    #[test]
    fn vote_arithmetic_and_state() {
        let x = toy();
        let mut vote = ProbClassifier::new(ClassifierSpec::default_vote(1));
        assert!(matches!(vote.predict_proba(&[0.0, 0.0]), Err(Error::State(_))));
        vote.fit(&x).unwrap();
        let p = vote.predict_proba(&[2.5, 0.0]).unwrap();
        assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
        assert_eq!(vote.predict(&[2.5, 0.0]).unwrap(), 1);

        let unfitted = vec![ProbClassifier::new(ClassifierSpec::knn()); 2];
        assert!(matches!(soft_vote(&unfitted, &[0.0, 0.0]), Err(Error::State(_))));
        let one = vec![ProbClassifier::new(ClassifierSpec::knn())];
        assert!(soft_vote(&one, &[0.0]).is_err());
    }

    #[test]
    fn vote_of_identical_members_equals_the_member() {
        let x = toy();
        let mut member = ProbClassifier::new(ClassifierSpec::forest(3));
        member.fit(&x).unwrap();
        let members = vec![member.clone(), member.clone(), member.clone()];
        for q in [[0.1, 0.2], [-2.0, 0.0], [1.0, 1.0]] {
            let a = member.predict_proba(&q).unwrap();
            let b = soft_vote(&members, &q).unwrap();
            assert!((a[1] - b[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn fitted_vote_round_trips_through_json() {
        let x = toy();
        let mut vote = ProbClassifier::new(ClassifierSpec::default_vote(2));
        vote.fit(&x).unwrap();
        let back: ProbClassifier = serde_json::from_str(&serde_json::to_string(&vote).unwrap()).unwrap();
        for row in &x.rows {
            assert_eq!(back.predict_proba(row).unwrap(), vote.predict_proba(row).unwrap());
        }
    }

    #[test]
    fn decision_ties_go_to_class_one() {
        assert_eq!(decide([0.5, 0.5]), 1);
        assert_eq!(decide([0.6, 0.4]), 0);
    }

    #[test]
    fn predictions_layout() {
        let csv = predictions_csv(&["a".into(), "b".into()], &[1, 0], &[0.75, 0.5]).unwrap();
        assert_eq!(csv, "sample_id,label,p1,predicted\na,1,0.75,1\nb,0,0.5,1\n");
    }
}

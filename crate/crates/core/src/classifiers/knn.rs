use serde::{Deserialize, Serialize};

use super::{check_row, ClassifierSpec, FeatureMatrix, FittedModel, ProbClassifier};
use crate::error::{Error, Result};

/// Brute-force Euclidean k-nearest neighbours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Knn {
    pub fn fit(x: &FeatureMatrix, k: usize) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Empty("KNN needs training rows".into()));
        }
        if k == 0 || k > x.len() {
            return Err(Error::Config(format!("k = {k} must be in 1..={}", x.len())));
        }
        Ok(Knn {
            k,
            rows: x.rows.clone(),
            labels: x.labels.clone(),
        })
    }

    /// Indices of the `k` nearest training rows, nearest first; equal
    /// distances are ordered by training index.
    pub fn neighbours(&self, row: &[f64]) -> Result<Vec<usize>> {
        check_row(self.rows[0].len(), row)?;
        let mut d: Vec<(f64, usize)> =
            self.rows.iter().enumerate().map(|(i, r)| (sq_dist(r, row), i)).collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        Ok(d.into_iter().map(|(_, i)| i).collect())
    }

    pub fn p1(&self, row: &[f64]) -> Result<f64> {
        let hits = self.neighbours(row)?.iter().filter(|&&i| self.labels[i] == 1).count();
        Ok(hits as f64 / self.k as f64)
    }
}

pub fn knn_fit(x: &FeatureMatrix, k: usize) -> Result<ProbClassifier> {
    Ok(ProbClassifier {
        spec: ClassifierSpec::Knn { k },
        fitted: Some(FittedModel::Knn(Knn::fit(x, k)?)),
    })
}

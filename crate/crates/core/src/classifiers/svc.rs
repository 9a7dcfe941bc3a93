//! Linear soft-margin SVC.
//!
//! Minimizes `½‖w‖² + C·Σ max(0, 1 − yᵢ(w·xᵢ + b))` with `y ∈ {−1, +1}`.
//! `w` comes from seeded Pegasos-style stochastic subgradient steps with
//! iterate averaging; the bias is then set to the exact minimizer of the
//! objective for that `w`. Probabilities come from a Platt sigmoid fitted
//! to the training margins.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_row, require_both_classes, ClassifierSpec, FeatureMatrix, FittedModel, ProbClassifier};
use crate::error::{Error, Result};
use crate::nn::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattScaling {
    pub a: f64,
    pub b: f64,
}

impl PlattScaling {
    pub fn p1(&self, margin: f64) -> f64 {
        sigmoid(self.a * margin + self.b)
    }

    /// Newton fit of `σ(a·m + b)` to labels, using Platt's smoothed targets
    /// so separable data keeps a finite slope.
    pub fn fit(margins: &[f64], labels: &[u8]) -> PlattScaling {
        let n1 = labels.iter().filter(|&&l| l == 1).count() as f64;
        let n0 = labels.len() as f64 - n1;
        let hi = (n1 + 1.0) / (n1 + 2.0);
        let lo = 1.0 / (n0 + 2.0);
        let targets: Vec<f64> = labels.iter().map(|&l| if l == 1 { hi } else { lo }).collect();
        let nll = |a: f64, b: f64| -> f64 {
            margins
                .iter()
                .zip(&targets)
                .map(|(&m, &t)| {
                    let z = a * m + b;
                    // −[t·log σ(z) + (1−t)·log(1−σ(z))] written stably
                    let log1p_exp = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                    log1p_exp - t * z
                })
                .sum()
        };
        let (mut a, mut b) = (0.0, ((n1 + 1.0) / (n0 + 1.0)).ln());
        let mut f = nll(a, b);
        for _ in 0..100 {
            let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 1e-12, 0.0, 1e-12);
            for (&m, &t) in margins.iter().zip(&targets) {
                let p = sigmoid(a * m + b);
                let d = p - t;
                let w = p * (1.0 - p);
                ga += d * m;
                gb += d;
                haa += w * m * m;
                hab += w * m;
                hbb += w;
            }
            if ga.abs() < 1e-10 && gb.abs() < 1e-10 {
                break;
            }
            let det = haa * hbb - hab * hab;
            let da = -(hbb * ga - hab * gb) / det;
            let db = -(haa * gb - hab * ga) / det;
            let mut step = 1.0;
            let mut improved = false;
            while step > 1e-10 {
                let (na, nb) = (a + step * da, b + step * db);
                let nf = nll(na, nb);
                if nf < f + 1e-4 * step * (ga * da + gb * db) {
                    a = na;
                    b = nb;
                    f = nf;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        PlattScaling { a, b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvc {
    pub c: f64,
    pub w: Vec<f64>,
    pub b: f64,
    pub platt: PlattScaling,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sign(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `½‖w‖² + C·Σ hinge` on a training set.
pub fn svc_objective(x: &FeatureMatrix, c: f64, w: &[f64], b: f64) -> f64 {
    let hinge: f64 = x
        .rows
        .iter()
        .zip(&x.labels)
        .map(|(r, &l)| (1.0 - sign(l) * (dot(w, r) + b)).max(0.0))
        .sum();
    0.5 * dot(w, w) + c * hinge
}

/// Exact minimizer over `b` of the hinge sum for fixed scores `s = w·x`.
///
/// The sum is convex and piecewise linear in `b` with slope
/// `−n₊ + #{breakpoints ≤ b}`, so the optimum lies between the `n₊`-th and
/// `(n₊+1)`-th smallest breakpoints; the midpoint is returned.
fn best_bias(scores: &[f64], labels: &[u8]) -> f64 {
    let mut breaks: Vec<f64> = scores.iter().zip(labels).map(|(&s, &l)| sign(l) - s).collect();
    breaks.sort_by(f64::total_cmp);
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    match n_pos {
        0 => breaks[0],
        n if n == breaks.len() => breaks[n - 1],
        n => 0.5 * (breaks[n - 1] + breaks[n]),
    }
}

impl LinearSvc {
    pub fn fit(x: &FeatureMatrix, c: f64, epochs: usize, seed: u64) -> Result<Self> {
        require_both_classes(x)?;
        if !(c > 0.0) || epochs == 0 {
            return Err(Error::Config(format!("SVC needs C > 0 and epochs > 0, got C={c}, epochs={epochs}")));
        }
        let n = x.len();
        let d = x.dim();
        let lambda = 1.0 / (c * n as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        // w[d] is the bias: stepped like a unit feature but never shrunk,
        // so it stays unregularized.
        let mut w = vec![0.0; d + 1];
        let mut avg = vec![0.0; d + 1];
        let mut averaged = 0.0;
        let mut t = 0.0;
        let burn_in = epochs / 2;
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1.0;
                let eta = 1.0 / (lambda * t);
                let y = sign(x.labels[i]);
                let row = &x.rows[i];
                let margin = y * (dot(&w[..d], row) + w[d]);
                let shrink = 1.0 - eta * lambda;
                w[..d].iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    for (wj, xj) in w.iter_mut().zip(row) {
                        *wj += eta * y * xj;
                    }
                    w[d] += eta * y;
                }
                if epoch >= burn_in {
                    averaged += 1.0;
                    for (a, v) in avg.iter_mut().zip(&w) {
                        *a += (v - *a) / averaged;
                    }
                }
            }
        }
        avg.truncate(d);
        let scores: Vec<f64> = x.rows.iter().map(|r| dot(&avg, r)).collect();
        let b = best_bias(&scores, &x.labels);
        let margins: Vec<f64> = scores.iter().map(|s| s + b).collect();
        let platt = PlattScaling::fit(&margins, &x.labels);
        Ok(LinearSvc { c, w: avg, b, platt })
    }

    pub fn margin(&self, row: &[f64]) -> Result<f64> {
        check_row(self.w.len(), row)?;
        Ok(dot(&self.w, row) + self.b)
    }

    pub fn p1(&self, row: &[f64]) -> Result<f64> {
        Ok(self.platt.p1(self.margin(row)?))
    }
}

pub fn svc_fit(x: &FeatureMatrix, c: f64) -> Result<ProbClassifier> {
    let spec = ClassifierSpec::LinearSvc { c, epochs: 50, seed: 0 };
    let ClassifierSpec::LinearSvc { epochs, seed, .. } = spec else { unreachable!() };
    Ok(ProbClassifier {
        fitted: Some(FittedModel::LinearSvc(LinearSvc::fit(x, c, epochs, seed)?)),
        spec,
    })
}

//! Seeded holdout and k-fold splits, optionally keeping each group (subject)
//! inside a single split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HOLDOUT_FRACTIONS: [f64; 3] = [0.68, 0.12, 0.20];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Holdout {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Indices grouped by label of `groups`, in order of first appearance.
/// Without groups every index is its own unit.
fn units(n: usize, groups: Option<&[String]>) -> Result<Vec<Vec<usize>>> {
    let Some(groups) = groups else {
        return Ok((0..n).map(|i| vec![i]).collect());
    };
    if groups.len() != n {
        return Err(Error::Size(format!("{} group ids for {n} samples", groups.len())));
    }
    let mut index: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        let slot = *index.entry(g).or_insert_with(|| {
            out.push(Vec::new());
            out.len() - 1
        });
        out[slot].push(i);
    }
    Ok(out)
}

fn flatten(units: &[&Vec<usize>]) -> Vec<usize> {
    let mut v: Vec<usize> = units.iter().flat_map(|u| u.iter().copied()).collect();
    v.sort_unstable();
    v
}

/// Seeded train/val/test split. Sample mode takes `round(f·n)` rows for
/// train and val and the rest for test. Group mode deals shuffled groups to
/// whichever split is furthest below its target row count.
pub fn holdout_split(n: usize, fractions: [f64; 3], seed: u64, groups: Option<&[String]>) -> Result<Holdout> {
    if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 || fractions.iter().any(|f| *f < 0.0) {
        return Err(Error::Config(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    if n == 0 {
        return Err(Error::Empty("cannot split zero samples".into()));
    }
    let mut units = units(n, groups)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    units.shuffle(&mut rng);
    let targets = fractions.map(|f| f * n as f64);
    let mut parts: [Vec<&Vec<usize>>; 3] = Default::default();

    if groups.is_none() {
        let n_train = (targets[0].round() as usize).min(n);
        let n_val = (targets[1].round() as usize).min(n - n_train);
        parts[0] = units[..n_train].iter().collect();
        parts[1] = units[n_train..n_train + n_val].iter().collect();
        parts[2] = units[n_train + n_val..].iter().collect();
    } else {
        let smallest = targets.iter().copied().filter(|t| *t > 0.0).fold(f64::INFINITY, f64::min);
        if let Some(big) = units.iter().find(|u| u.len() as f64 > smallest) {
            return Err(Error::InfeasibleSplit(format!(
                "a group of {} rows exceeds the smallest split target of {smallest:.1} rows",
                big.len()
            )));
        }
        let mut filled = [0usize; 3];
        for u in &units {
            let s = (0..3)
                .filter(|&s| targets[s] > 0.0)
                .max_by(|&a, &b| {
                    let da = targets[a] - filled[a] as f64;
                    let db = targets[b] - filled[b] as f64;
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .expect("some fraction is positive");
            filled[s] += u.len();
            parts[s].push(u);
        }
        if let Some(s) = (0..3).find(|&s| targets[s] > 0.0 && parts[s].is_empty()) {
            return Err(Error::InfeasibleSplit(format!("split {s} received no groups")));
        }
    }
    Ok(Holdout {
        train: flatten(&parts[0]),
        val: flatten(&parts[1]),
        test: flatten(&parts[2]),
    })
}

/// Seeded k-fold split. Units (samples, or groups in group mode) are
/// shuffled and dealt round-robin, so fold sizes in units differ by at most
/// one. With `strata`, units are shuffled within each stratum and the strata
/// dealt one after another, which balances classes across folds.
pub fn kfold_stratified(
    n: usize,
    k: usize,
    seed: u64,
    groups: Option<&[String]>,
    strata: Option<&[u8]>,
) -> Result<Vec<Fold>> {
    let units = units(n, groups)?;
    if k < 2 || k > units.len() {
        return Err(Error::InfeasibleSplit(format!("cannot make {k} folds from {} units", units.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<&Vec<usize>> = match strata {
        None => {
            let mut u: Vec<&Vec<usize>> = units.iter().collect();
            u.shuffle(&mut rng);
            u
        }
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::Size(format!("{} strata labels for {n} samples", labels.len())));
            }
            let mut by: std::collections::BTreeMap<u8, Vec<&Vec<usize>>> = Default::default();
            for u in &units {
                by.entry(labels[u[0]]).or_default().push(u);
            }
            by.into_values()
                .flat_map(|mut v| {
                    v.shuffle(&mut rng);
                    v
                })
                .collect()
        }
    };
    let mut tests: Vec<Vec<&Vec<usize>>> = vec![Vec::new(); k];
    for (i, u) in order.into_iter().enumerate() {
        tests[i % k].push(u);
    }
    Ok(tests
        .iter()
        .map(|t| {
            let test = flatten(t);
            let mut in_test = vec![false; n];
            test.iter().for_each(|&i| in_test[i] = true);
            Fold {
                train: (0..n).filter(|&i| !in_test[i]).collect(),
                test,
            }
        })
        .collect())
}

pub fn kfold(n: usize, k: usize, seed: u64, groups: Option<&[String]>) -> Result<Vec<Fold>> {
    kfold_stratified(n, k, seed, groups, None)
}

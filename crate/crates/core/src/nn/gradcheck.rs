//! Central finite-difference check of a network's analytic gradients.
//!
//! The scalar probed is `L = Σ R ⊙ f(x)` for a fixed random projection `R`,
//! so `∂L/∂f = R` exercises every output element. The network runs in
//! training mode, which is the mode backward is used in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::Network;
use super::tensor::Tensor;
use crate::error::Result;

/// Deliberate damage applied to the analytic gradient, for mutation tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corruption {
    ScaleParamGrad { param: usize, factor: f64 },
    ScaleInputGrad(f64),
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Entries sampled per parameter tensor; all entries when smaller.
    pub max_checks_per_param: usize,
    pub check_input: bool,
    pub seed: u64,
    pub corruption: Option<Corruption>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            max_checks_per_param: 40,
            check_input: true,
            seed: 0,
            corruption: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Location of the largest error, e.g. `param 2 [5]` or `input [0]`.
    pub worst: String,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-4)
}

fn probe(net: &Network, x: &Tensor, r: &[f64]) -> Result<f64> {
    let mut net = net.clone();
    let y = net.forward(x, true)?;
    Ok(y.data().iter().zip(r).map(|(a, b)| a * b).sum())
}

fn pick(rng: &mut ChaCha8Rng, len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        (0..max).map(|_| rng.random_range(0..len)).collect()
    }
}

pub fn grad_check(net: &Network, x: &Tensor, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = net.clone();
    let y = work.forward(x, true)?;
    let r: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut dx = work.backward(&Tensor::new(y.shape().to_vec(), r.clone())?)?;
    let mut grads: Vec<Vec<f64>> = work.params().iter().map(|p| p.grad.clone()).collect();
    match opts.corruption {
        Some(Corruption::ScaleParamGrad { param, factor }) => {
            if let Some(g) = grads.get_mut(param) {
                g.iter_mut().for_each(|v| *v *= factor);
            }
        }
        Some(Corruption::ScaleInputGrad(factor)) => dx = dx.scale(factor),
        None => {}
    }

    let h = opts.step;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: String::new(),
        tolerance: opts.tolerance,
    };
    let record = |report: &mut GradCheckReport, a: f64, n: f64, place: String| {
        let e = relative_error(a, n);
        report.checked += 1;
        if e > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = report.max_rel_error.max(e);
            report.worst = place;
        }
    };

    for (pi, grad) in grads.iter().enumerate() {
        for j in pick(&mut rng, grad.len(), opts.max_checks_per_param) {
            let mut plus = net.clone();
            plus.params_mut()[pi].value[j] += h;
            let mut minus = net.clone();
            minus.params_mut()[pi].value[j] -= h;
            let numeric = (probe(&plus, x, &r)? - probe(&minus, x, &r)?) / (2.0 * h);
            record(&mut report, grad[j], numeric, format!("param {pi} [{j}]"));
        }
    }

    if opts.check_input {
        for j in pick(&mut rng, x.len(), opts.max_checks_per_param) {
            let mut xp = x.clone();
            xp.data_mut()[j] += h;
            let mut xm = x.clone();
            xm.data_mut()[j] -= h;
            let numeric = (probe(net, &xp, &r)? - probe(net, &xm, &r)?) / (2.0 * h);
            record(&mut report, dx.data()[j], numeric, format!("input [{j}]"));
        }
    }
    Ok(report)
}

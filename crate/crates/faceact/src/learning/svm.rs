//! L2-regularized hinge-loss SVM trained by dual coordinate descent.
//!
//! The primal problem is
//!
//! ```text
//! min_w 0.5 ||w||^2 + sum_i U_i * max(0, 1 - y_i w.x_i)
//! ```
//!
//! with per-sample costs `U_i`. Coordinates are visited in a seeded random
//! permutation per epoch, so training is deterministic under a fixed seed.
//! The solver stops when the relative duality gap falls below `tol`.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct SvmOptions {
    /// Relative duality-gap tolerance.
    pub tol: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Train a bias term via feature augmentation.
    pub with_bias: bool,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions { tol: 1e-4, max_epochs: 2000, seed: 0, with_bias: true }
    }
}

#[derive(Debug, Clone)]
pub struct SvmSolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Dual objective (the minimized form) after each epoch; non-increasing.
    pub objective_history: Vec<f64>,
}

/// Solves the weighted binary problem. `labels` are +/-1 and `costs` holds
/// `U_i` per sample.
pub fn solve_weighted(
    features: &[Vec<f64>],
    labels: &[f64],
    costs: &[f64],
    options: &SvmOptions,
) -> Result<SvmSolution> {
    let n = features.len();
    if n == 0 || labels.len() != n || costs.len() != n {
        return Err(Error::invalid("features, labels and costs must be equal-length and nonempty"));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::invalid("inconsistent feature dimensions"));
    }
    let has_pos = labels.iter().any(|y| *y > 0.0);
    let has_neg = labels.iter().any(|y| *y < 0.0);
    if !has_pos || !has_neg {
        return Err(Error::Training("both classes must be present".into()));
    }

    let bias_term = if options.with_bias { 1.0 } else { 0.0 };
    let q_diag: Vec<f64> = features
        .iter()
        .map(|f| f.iter().map(|v| v * v).sum::<f64>() + bias_term * bias_term)
        .collect();

    let mut alpha = vec![0.0f64; n];
    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut history = Vec::new();

    for _epoch in 0..options.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            if q_diag[i] <= 0.0 {
                continue;
            }
            let margin: f64 =
                labels[i] * (dot(&w, &features[i]) + b * bias_term) - 1.0;
            // projected gradient under the box constraint [0, U_i]
            let pg = if alpha[i] <= 0.0 {
                margin.min(0.0)
            } else if alpha[i] >= costs[i] {
                margin.max(0.0)
            } else {
                margin
            };
            if pg.abs() < 1e-14 {
                continue;
            }
            let new_alpha = (alpha[i] - margin / q_diag[i]).clamp(0.0, costs[i]);
            let delta = new_alpha - alpha[i];
            if delta != 0.0 {
                alpha[i] = new_alpha;
                let scale = delta * labels[i];
                for (wv, xv) in w.iter_mut().zip(&features[i]) {
                    *wv += scale * xv;
                }
                b += scale * bias_term;
            }
        }

        let w_norm_sq: f64 = dot(&w, &w) + b * b;
        let alpha_sum: f64 = alpha.iter().sum();
        history.push(0.5 * w_norm_sq - alpha_sum);

        // duality gap check
        let mut hinge = 0.0;
        for i in 0..n {
            let m = 1.0 - labels[i] * (dot(&w, &features[i]) + b * bias_term);
            if m > 0.0 {
                hinge += costs[i] * m;
            }
        }
        let primal = 0.5 * w_norm_sq + hinge;
        let dual = alpha_sum - 0.5 * w_norm_sq;
        if primal - dual <= options.tol * primal.abs().max(1.0) {
            break;
        }
    }

    Ok(SvmSolution { weights: w, bias: b * bias_term, objective_history: history })
}

/// Trains on labeled samples with per-sample cost `c / n` (so duplicating
/// every sample leaves the solution unchanged) and a bias term. Returns the
/// weight vector and bias.
pub fn train_linear_svm(samples: &[(Vec<f64>, bool)], c: f64, seed: u64) -> Result<(Vec<f64>, f64)> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::invalid("no training samples"));
    }
    let features: Vec<Vec<f64>> = samples.iter().map(|(f, _)| f.clone()).collect();
    let labels: Vec<f64> = samples.iter().map(|(_, l)| if *l { 1.0 } else { -1.0 }).collect();
    let costs = vec![c / n as f64; n];
    let sol = solve_weighted(&features, &labels, &costs, &SvmOptions { seed, ..Default::default() })?;
    Ok((sol.weights, sol.bias))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

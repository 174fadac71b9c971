//! Class-weighted multinomial logistic regression.
//!
//! Loss: `sum_i w[y_i] * CE_i / sum_i w[y_i] + l2 / 2 * |theta|^2` over
//! standardised features, minimised with L-BFGS.

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use serde::{Deserialize, Serialize};

use crate::simworld::catalog::NUM_CLASSES;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    pub l2: f64,
    pub grad_tolerance: f64,
    pub max_iterations: u64,
    pub memory: usize,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            grad_tolerance: 1e-5,
            max_iterations: 5000,
            memory: 10,
        }
    }
}

/// Standardisation plus a `NUM_CLASSES x dim` weight matrix and biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub dim: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Row-major `NUM_CLASSES x dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub iterations: u64,
    pub final_grad_norm: f64,
}

impl LogRegParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
            weights: vec![0.0; NUM_CLASSES * dim],
            bias: vec![0.0; NUM_CLASSES],
            iterations: 0,
            final_grad_norm: 0.0,
        }
    }

    pub fn logits(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let z: Vec<f64> = x
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        std::array::from_fn(|k| {
            self.bias[k]
                + self.weights[k * self.dim..(k + 1) * self.dim]
                    .iter()
                    .zip(&z)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
        })
    }
}

pub fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: [f64; NUM_CLASSES] = std::array::from_fn(|k| (logits[k] - m).exp());
    let s: f64 = e.iter().sum();
    std::array::from_fn(|k| e[k] / s)
}

/// Weighted mean and standard deviation per feature; constant features get
/// unit scale.
fn standardise(x: &[Vec<f64>], w: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let total: f64 = w.iter().sum();
    let mut mean = vec![0.0; dim];
    for (row, wi) in x.iter().zip(w) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += wi * v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut var = vec![0.0; dim];
    for (row, wi) in x.iter().zip(w) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += wi * (v - m).powi(2);
        }
    }
    let scale = var
        .iter()
        .map(|s| {
            let sd = (s / total).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

struct Problem<'a> {
    z: &'a [Vec<f64>],
    labels: &'a [usize],
    sample_weight: &'a [f64],
    total_weight: f64,
    dim: usize,
    l2: f64,
}

impl Problem<'_> {
    fn eval(&self, theta: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let d = self.dim;
        let (w, b) = theta.split_at(NUM_CLASSES * d);
        let mut loss = 0.0;
        let mut grad = if want_grad { vec![0.0; theta.len()] } else { Vec::new() };
        for ((x, &y), &sw) in self.z.iter().zip(self.labels).zip(self.sample_weight) {
            if sw == 0.0 {
                continue;
            }
            let logits: [f64; NUM_CLASSES] = std::array::from_fn(|k| {
                b[k] + w[k * d..(k + 1) * d].iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
            });
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
            loss += sw * (lse - logits[y]);
            if want_grad {
                let c = sw / self.total_weight;
                for k in 0..NUM_CLASSES {
                    let p = (logits[k] - lse).exp() - if k == y { 1.0 } else { 0.0 };
                    let g = c * p;
                    for (gk, v) in grad[k * d..(k + 1) * d].iter_mut().zip(x) {
                        *gk += g * v;
                    }
                    grad[NUM_CLASSES * d + k] += g;
                }
            }
        }
        loss /= self.total_weight;
        loss += 0.5 * self.l2 * theta.iter().map(|t| t * t).sum::<f64>();
        if want_grad {
            for (g, t) in grad.iter_mut().zip(theta) {
                *g += self.l2 * t;
            }
        }
        (loss, grad)
    }
}

impl CostFunction for Problem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(p, false).0)
    }
}

impl Gradient for Problem<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(self.eval(p, true).1)
    }
}

/// Fit on feature rows `x` with class ids `classes` (1-based) and per-class
/// loss weights (index = class - 1).
pub fn fit(
    x: &[Vec<f64>],
    classes: &[u8],
    class_weights: &[f64; NUM_CLASSES],
    config: &LogRegConfig,
) -> Result<LogRegParams> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidParameter("feature rows differ in length".into()));
    }
    let labels: Vec<usize> = classes.iter().map(|c| *c as usize - 1).collect();
    let sample_weight: Vec<f64> = labels.iter().map(|&y| class_weights[y]).collect();
    let total_weight: f64 = sample_weight.iter().sum();
    if !(total_weight > 0.0) {
        return Err(Error::InvalidParameter("all samples have zero weight".into()));
    }
    let (mean, scale) = standardise(x, &sample_weight, dim);
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let problem = Problem {
        z: &z,
        labels: &labels,
        sample_weight: &sample_weight,
        total_weight,
        dim,
        l2: config.l2,
    };
    let n_params = NUM_CLASSES * (dim + 1);
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), config.memory)
        .with_tolerance_grad(config.grad_tolerance)
        .and_then(|s| s.with_tolerance_cost(0.0))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let result = Executor::new(problem, solver)
        .configure(|s| s.param(vec![0.0; n_params]).max_iters(config.max_iterations))
        .run()
        .map_err(|e| Error::InvalidParameter(format!("optimiser failed: {e}")))?;
    let state = result.state();
    let theta = state
        .get_best_param()
        .cloned()
        .unwrap_or_else(|| vec![0.0; n_params]);
    let grad_norm = {
        let p = Problem {
            z: &z,
            labels: &labels,
            sample_weight: &sample_weight,
            total_weight,
            dim,
            l2: config.l2,
        };
        p.eval(&theta, true).1.iter().map(|g| g * g).sum::<f64>().sqrt()
    };
    let (w, b) = theta.split_at(NUM_CLASSES * dim);
    Ok(LogRegParams {
        dim,
        mean,
        scale,
        weights: w.to_vec(),
        bias: b.to_vec(),
        iterations: state.get_iter(),
        final_grad_norm: grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn blobs(seed: u64, per_class: usize, classes: &[u8]) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for &c in classes {
            for _ in 0..per_class {
                let centre = f64::from(c) * 3.0;
                x.push(vec![centre + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0]);
                y.push(c);
            }
        }
        (x, y)
    }

    fn uniform_weights() -> [f64; NUM_CLASSES] {
        [1.0; NUM_CLASSES]
    }

    #[test]
    fn separable_two_class_fit() {
        let (x, y) = blobs(1, 30, &[3, 7]);
        let p = fit(&x, &y, &uniform_weights(), &LogRegConfig::default()).unwrap();
        assert!(p.final_grad_norm < 1e-5, "{}", p.final_grad_norm);
        for (row, c) in x.iter().zip(&y) {
            let probs = softmax(&p.logits(row));
            let best = (0..NUM_CLASSES).max_by(|a, b| probs[*a].total_cmp(&probs[*b])).unwrap();
            assert_eq!(best + 1, *c as usize);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = blobs(2, 5, &[1, 2, 5]);
        let labels: Vec<usize> = y.iter().map(|c| *c as usize - 1).collect();
        let sw: Vec<f64> = labels.iter().map(|l| 0.5 + *l as f64).collect();
        let prob = Problem {
            z: &x,
            labels: &labels,
            sample_weight: &sw,
            total_weight: sw.iter().sum(),
            dim: 3,
            l2: 0.01,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let theta: Vec<f64> = (0..NUM_CLASSES * 4).map(|_| rng.random_range(-0.5..0.5)).collect();
        let (_, g) = prob.eval(&theta, true);
        for i in (0..theta.len()).step_by(7) {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (prob.eval(&a, false).0 - prob.eval(&b, false).0) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn softmax_properties() {
        let l: [f64; NUM_CLASSES] = std::array::from_fn(|k| k as f64 * 0.3 - 2.0);
        let p = softmax(&l);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: [f64; NUM_CLASSES] = std::array::from_fn(|k| l[k] + 100.0);
        let q = softmax(&shifted);
        for k in 0..NUM_CLASSES {
            assert!((p[k] - q[k]).abs() < 1e-12);
        }
        let u = softmax(&[0.0; NUM_CLASSES]);
        assert!(u.iter().all(|v| (v - 1.0 / NUM_CLASSES as f64).abs() < 1e-15));
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, FeatureEncoder, ModelError};
use crate::data::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    /// Inverse regularization strength; the penalty is `‖w‖² / (2·C·n)`
    /// on the mean loss.
    pub c: f64,
    pub max_iter: usize,
    /// Stop once the gradient norm falls to this.
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { c: 1.0, max_iter: 5000, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn margin(&self, active: &[usize]) -> f64 {
        self.bias + active.iter().map(|&i| self.weights[i]).sum::<f64>()
    }

    pub fn confidence(&self, active: &[usize]) -> f64 {
        sigmoid(self.margin(active))
    }

    /// Full-batch gradient descent with backtracking line search. Returns
    /// the model and the objective value after every accepted step.
    pub fn fit(data: &Dataset, encoder: &FeatureEncoder, cfg: &LogisticConfig) -> Result<(Self, Vec<f64>), ModelError> {
        if cfg.c.is_nan() || cfg.c <= 0.0 || cfg.max_iter == 0 || cfg.tol.is_nan() || cfg.tol < 0.0 {
            return Err(ModelError::InvalidConfig(format!("bad logistic config {cfg:?}")));
        }
        let objective = LogisticObjective::new(data, encoder, cfg.c)?;
        let mut params = vec![0.0; encoder.width() + 1];
        let (mut loss, mut grad) = objective.value_and_gradient(&params);
        let mut history = vec![loss];
        let mut step = 1.0;
        for _ in 0..cfg.max_iter {
            let norm2: f64 = grad.iter().map(|g| g * g).sum();
            if norm2.sqrt() <= cfg.tol {
                break;
            }
            // Armijo backtracking; try a larger step first each iteration.
            step *= 2.0;
            let mut accepted = None;
            while step > 1e-12 {
                let candidate: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
                let (l, g) = objective.value_and_gradient(&candidate);
                if l <= loss - 1e-4 * step * norm2 {
                    accepted = Some((candidate, l, g));
                    break;
                }
                step *= 0.5;
            }
            let Some((p, l, g)) = accepted else { break };
            params = p;
            loss = l;
            grad = g;
            history.push(loss);
        }
        let bias = params.pop().expect("bias slot");
        Ok((Self { weights: params, bias }, history))
    }
}

/// Mean L2-regularized logistic loss over one-hot rows, with identical
/// feature patterns merged. Parameters are `[w_0, …, w_{d−1}, b]`.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    /// `(active columns, positives, negatives)`
    patterns: Vec<(Vec<usize>, f64, f64)>,
    n: f64,
    lambda: f64,
    width: usize,
}

impl LogisticObjective {
    pub fn new(data: &Dataset, encoder: &FeatureEncoder, c: f64) -> Result<Self, ModelError> {
        if data.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let li = data.schema().label_index();
        let mut grouped: BTreeMap<Vec<usize>, (f64, f64)> = BTreeMap::new();
        for row in data.rows() {
            let e = grouped.entry(encoder.active(row)).or_default();
            if row[li] == 1 {
                e.0 += 1.0;
            } else {
                e.1 += 1.0;
            }
        }
        let n = data.len() as f64;
        Ok(Self {
            patterns: grouped.into_iter().map(|(k, (p, q))| (k, p, q)).collect(),
            n,
            lambda: 1.0 / (c * n),
            width: encoder.width(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.width + 1
    }

    pub fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let (w, b) = params.split_at(self.width);
        let b = b[0];
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.width + 1];
        for (active, pos, neg) in &self.patterns {
            let z = b + active.iter().map(|&i| w[i]).sum::<f64>();
            // pos·(softplus(z) − z) + neg·softplus(z)
            loss += (pos + neg) * softplus(z) - pos * z;
            let residual = (pos + neg) * sigmoid(z) - pos;
            for &i in active {
                grad[i] += residual;
            }
            grad[self.width] += residual;
        }
        let penalty: f64 = w.iter().map(|x| x * x).sum::<f64>() * self.lambda / 2.0;
        grad.iter_mut().for_each(|g| *g /= self.n);
        for (g, x) in grad.iter_mut().zip(w) {
            *g += self.lambda * x;
        }
        (loss / self.n + penalty, grad)
    }
}

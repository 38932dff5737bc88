//! Linear SVM on random Fourier features, calibrated with Platt scaling.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{FeatureEncoder, ModelError, PlattCalibrator};
use crate::data::Dataset;

/// Random Fourier feature map approximating `exp(−γ‖x − x′‖²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffMap {
    pub gamma: f64,
    /// `directions[i][j]`: component `j` of the direction for input column `i`.
    directions: Vec<Vec<f64>>,
    phases: Vec<f64>,
}

impl RffMap {
    /// Draws `components` directions from `N(0, 2γ·I)` and phases from
    /// `U[0, 2π)`.
    pub fn sample<R: Rng + ?Sized>(width: usize, components: usize, gamma: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (2.0 * gamma).sqrt()).expect("gamma is finite and non-negative");
        let directions = (0..width).map(|_| (0..components).map(|_| normal.sample(rng)).collect()).collect();
        let phases = (0..components).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        Self { gamma, directions, phases }
    }

    pub fn components(&self) -> usize {
        self.phases.len()
    }

    pub fn width(&self) -> usize {
        self.directions.len()
    }

    fn finish(&self, mut z: Vec<f64>) -> Vec<f64> {
        let scale = (2.0 / self.components() as f64).sqrt();
        z.iter_mut().for_each(|v| *v = scale * v.cos());
        z
    }

    /// Features of a one-hot row given its active columns.
    pub fn transform_active(&self, active: &[usize]) -> Vec<f64> {
        let mut z = self.phases.clone();
        for &i in active {
            for (v, w) in z.iter_mut().zip(&self.directions[i]) {
                *v += w;
            }
        }
        self.finish(z)
    }
}

/// `√(2/D)·cos(ω·x + b)` for a dense input vector.
pub fn rff_features(x: &[f64], map: &RffMap) -> Vec<f64> {
    assert_eq!(x.len(), map.width());
    let mut z = map.phases.clone();
    for (xi, dir) in x.iter().zip(&map.directions) {
        if *xi != 0.0 {
            for (v, w) in z.iter_mut().zip(dir) {
                *v += xi * w;
            }
        }
    }
    map.finish(z)
}

/// The "scale" bandwidth `1 / (width · Var[x])` for one-hot rows with
/// `ones` active columns out of `width`.
pub fn scale_gamma(width: usize, ones: usize) -> f64 {
    let mean = ones as f64 / width as f64;
    let var = mean - mean * mean;
    if var > 0.0 {
        1.0 / (width as f64 * var)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub components: usize,
    pub epochs: usize,
    /// L2 regularization strength of the hinge objective.
    pub alpha: f64,
    /// Kernel bandwidth; `None` uses [`scale_gamma`].
    pub gamma: Option<f64>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { components: 1024, epochs: 5, alpha: 1e-4, gamma: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub map: RffMap,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub calibrator: PlattCalibrator,
}

impl SvmModel {
    pub fn fit<R: Rng + ?Sized>(
        data: &Dataset,
        encoder: &FeatureEncoder,
        cfg: &SvmConfig,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let bad_gamma = cfg.gamma.is_some_and(|g| !g.is_finite() || g < 0.0);
        if cfg.components == 0 || cfg.epochs == 0 || cfg.alpha.is_nan() || cfg.alpha <= 0.0 || bad_gamma {
            return Err(ModelError::InvalidConfig(format!("bad svm config {cfg:?}")));
        }
        if data.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let gamma = cfg.gamma.unwrap_or_else(|| scale_gamma(encoder.width(), encoder.features().len()));
        let map = RffMap::sample(encoder.width(), cfg.components, gamma, rng);

        // Rows share few distinct patterns, so features are computed once each.
        let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut cache: Vec<Vec<f64>> = Vec::new();
        let rows: Vec<(usize, f64)> = data
            .rows()
            .iter()
            .map(|r| {
                let id = *index.entry(encoder.pattern(r)).or_insert_with(|| {
                    cache.push(map.transform_active(&encoder.active(r)));
                    cache.len() - 1
                });
                (id, if r[encoder.label_index()] == 1 { 1.0 } else { -1.0 })
            })
            .collect();

        let (weights, bias) = averaged_hinge_sgd(&rows, &cache, cfg, rng);
        let margins: Vec<f64> = rows.iter().map(|&(id, _)| dot(&weights, &cache[id]) + bias).collect();
        let labels: Vec<bool> = rows.iter().map(|&(_, y)| y > 0.0).collect();
        let calibrator = PlattCalibrator::fit(&margins, &labels);
        Ok(Self { map, weights, bias, calibrator })
    }

    pub fn margin(&self, active: &[usize]) -> f64 {
        dot(&self.weights, &self.map.transform_active(active)) + self.bias
    }

    pub fn confidence(&self, active: &[usize]) -> f64 {
        self.calibrator.confidence(self.margin(active))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hinge-loss SGD with step `1/(α(t₀ + t))`, returning the average of all
/// iterates.
fn averaged_hinge_sgd<R: Rng + ?Sized>(
    rows: &[(usize, f64)],
    features: &[Vec<f64>],
    cfg: &SvmConfig,
    rng: &mut R,
) -> (Vec<f64>, f64) {
    let dim = cfg.components;
    let typical = (1.0 / cfg.alpha.sqrt()).sqrt();
    let t0 = 1.0 / (typical * cfg.alpha);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut w_avg = vec![0.0; dim];
    let mut b_avg = 0.0;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut t = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for &i in &order {
            let (id, y) = rows[i];
            let x = &features[id];
            let eta = 1.0 / (cfg.alpha * (t0 + t));
            let violated = y * (dot(&w, x) + b) < 1.0;
            let decay = 1.0 - eta * cfg.alpha;
            if violated {
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj = *wj * decay + eta * y * xj;
                }
                b += eta * y;
            } else {
                w.iter_mut().for_each(|wj| *wj *= decay);
            }
            t += 1.0;
            let k = 1.0 / t;
            for (a, wj) in w_avg.iter_mut().zip(&w) {
                *a += (wj - *a) * k;
            }
            b_avg += (b - b_avg) * k;
        }
    }
    (w_avg, b_avg)
}

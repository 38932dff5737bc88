use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus};

/// Sigmoid over a margin: `1 / (1 + exp(a·margin + b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattCalibrator {
    pub a: f64,
    pub b: f64,
}

/// Smoothed targets `((N⁺+1)/(N⁺+2), 1/(N⁻+2))` for the positive and
/// negative class.
pub fn platt_targets(labels: &[bool]) -> Vec<f64> {
    let pos = labels.iter().filter(|&&y| y).count() as f64;
    let neg = labels.len() as f64 - pos;
    let hi = (pos + 1.0) / (pos + 2.0);
    let lo = 1.0 / (neg + 2.0);
    labels.iter().map(|&y| if y { hi } else { lo }).collect()
}

/// Cross-entropy of the calibrated sigmoid against `targets`, with its
/// gradient in `(a, b)`.
pub fn platt_objective(a: f64, b: f64, margins: &[f64], targets: &[f64]) -> (f64, [f64; 2]) {
    let mut value = 0.0;
    let mut grad = [0.0; 2];
    for (&f, &t) in margins.iter().zip(targets) {
        let z = a * f + b;
        value += softplus(z) - (1.0 - t) * z;
        // d/dz = sigmoid(z) − (1 − t) = t − p
        let d = t - sigmoid(-z);
        grad[0] += d * f;
        grad[1] += d;
    }
    (value, grad)
}

impl PlattCalibrator {
    /// Newton's method with backtracking, started from the prior log-odds.
    pub fn fit(margins: &[f64], labels: &[bool]) -> Self {
        assert_eq!(margins.len(), labels.len());
        let targets = platt_targets(labels);
        let pos = labels.iter().filter(|&&y| y).count() as f64;
        let neg = labels.len() as f64 - pos;
        let (mut a, mut b) = (0.0, ((neg + 1.0) / (pos + 1.0)).ln());
        let (mut value, mut grad) = platt_objective(a, b, margins, &targets);
        const RIDGE: f64 = 1e-12;
        for _ in 0..100 {
            if grad[0].abs() < 1e-5 && grad[1].abs() < 1e-5 {
                break;
            }
            let (mut h11, mut h22, mut h21) = (RIDGE, RIDGE, 0.0);
            for &f in margins {
                let p = sigmoid(-(a * f + b));
                let w = p * (1.0 - p);
                h11 += f * f * w;
                h22 += w;
                h21 += f * w;
            }
            let det = h11 * h22 - h21 * h21;
            let da = -(h22 * grad[0] - h21 * grad[1]) / det;
            let db = -(-h21 * grad[0] + h11 * grad[1]) / det;
            let slope = grad[0] * da + grad[1] * db;
            let mut step = 1.0;
            let mut moved = false;
            while step >= 1e-10 {
                let (na, nb) = (a + step * da, b + step * db);
                let (nv, ng) = platt_objective(na, nb, margins, &targets);
                if nv < value + 1e-4 * step * slope {
                    (a, b, value, grad) = (na, nb, nv, ng);
                    moved = true;
                    break;
                }
                step /= 2.0;
            }
            if !moved {
                break;
            }
        }
        Self { a, b }
    }

    pub fn confidence(&self, margin: f64) -> f64 {
        sigmoid(-(self.a * margin + self.b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::rng_from_seed;
    use rand::Rng;

    #[test]
    fn two_point_fit() {
        let margins: Vec<f64> = (0..100).map(|i| if i < 50 { -2.0 } else { 2.0 }).collect();
        let labels: Vec<bool> = (0..100).map(|i| i >= 50).collect();
        let cal = PlattCalibrator::fit(&margins, &labels);
        assert!(cal.confidence(-2.0) <= 0.1);
        assert!(cal.confidence(2.0) >= 0.9);
        // The optimum reproduces the smoothed targets.
        assert!((cal.confidence(2.0) - 51.0 / 52.0).abs() < 1e-4);
        assert!((cal.confidence(-2.0) - 1.0 / 52.0).abs() < 1e-4);
    }

    #[test]
    fn symmetric_data_is_centered() {
        // margin +1: 30 positive, 10 negative; margin −1 mirrors it.
        let mut margins = Vec::new();
        let mut labels = Vec::new();
        for (m, pos, neg) in [(1.0, 30, 10), (-1.0, 10, 30)] {
            margins.extend(std::iter::repeat_n(m, pos + neg));
            labels.extend((0..pos + neg).map(|i| i < pos));
        }
        let cal = PlattCalibrator::fit(&margins, &labels);
        assert!((cal.confidence(0.0) - 0.5).abs() < 1e-6);
        assert!(cal.confidence(1.0) > 0.7);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(8);
        let margins: Vec<f64> = (0..300).map(|_| rng.random_range(-3.0..3.0)).collect();
        let labels: Vec<bool> = margins.iter().map(|&m| m + rng.random_range(-1.5..1.5) > 0.0).collect();
        let targets = platt_targets(&labels);
        for _ in 0..10 {
            let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0));
            let (_, g) = platt_objective(a, b, &margins, &targets);
            let h = 1e-6;
            let fa = (platt_objective(a + h, b, &margins, &targets).0
                - platt_objective(a - h, b, &margins, &targets).0)
                / (2.0 * h);
            let fb = (platt_objective(a, b + h, &margins, &targets).0
                - platt_objective(a, b - h, &margins, &targets).0)
                / (2.0 * h);
            for (an, fd) in [(g[0], fa), (g[1], fb)] {
                assert!((an - fd).abs() / an.abs().max(fd.abs()).max(1e-3) <= 1e-5, "{an} vs {fd}");
            }
        }
    }
}
